//! Forward pass and backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Layout, NetworkArchitecture, WeightVector};
use crate::data::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Dropout active, masks drawn from the supplied RNG.
    Train,
    /// Deterministic; dropout disabled.
    Eval,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[r] += sum_c m[r, c] * x[c]` for a row-major `rows x x.len()` matrix.
fn gemv_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out[c] += sum_r m[r, c] * y[r]`.
fn gemv_t_acc(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `g[r, c] += y[r] * x[c]`.
fn outer_acc(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(x) {
            *o += yr * b;
        }
    }
}

/// Inverted-dropout masks for one sample.
struct Masks {
    /// Per LSTM layer below the top: `seq_len x H` scale factors on outputs.
    between: Vec<Vec<f64>>,
    /// On the top layer's final hidden state.
    top: Vec<f64>,
    /// After the hidden FC activation.
    fc: Vec<f64>,
}

impl Masks {
    fn draw<R: Rng + ?Sized>(arch: &NetworkArchitecture, seq_len: usize, rng: &mut R) -> Self {
        let p = arch.dropout_rate;
        let keep = 1.0 / (1.0 - p);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect()
        };
        let between = (0..arch.lstm_layers - 1)
            .map(|_| draw(seq_len * arch.hidden_size))
            .collect();
        let top = draw(arch.hidden_size);
        let fc = draw(arch.fc_hidden);
        Self { between, top, fc }
    }
}

/// Activations of one LSTM layer over a sequence.
struct LayerTrace {
    /// `T x in`, the (dropped-out) inputs this layer consumed.
    inputs: Vec<f64>,
    /// `T x 4H`, post-activation gates (i, f, g, o).
    gates: Vec<f64>,
    /// `(T + 1) x H`, cell states with the zero initial state first.
    cells: Vec<f64>,
    /// `(T + 1) x H`, hidden states with the zero initial state first.
    hidden: Vec<f64>,
}

struct Trace {
    layers: Vec<LayerTrace>,
    /// Final hidden state after dropout.
    top_in: Vec<f64>,
    /// FC1 pre-activation.
    fc1_z: Vec<f64>,
    /// FC1 activation after ReLU and dropout.
    fc1_a: Vec<f64>,
    output: Vec<f64>,
}

fn run_forward(
    w: &[f64],
    layout: &Layout,
    arch: &NetworkArchitecture,
    input: &[f64],
    masks: Option<&Masks>,
) -> Trace {
    let h = arch.hidden_size;
    let steps = input.len();
    let mut layers = Vec::with_capacity(arch.lstm_layers);
    let mut seq: Vec<f64> = input.to_vec();

    for (l, off) in layout.lstm.iter().enumerate() {
        let in_dim = off.input;
        let w_ih = &w[off.w_ih..off.w_hh];
        let w_hh = &w[off.w_hh..off.bias];
        let bias = &w[off.bias..off.bias + 4 * h];
        let mut gates = vec![0.0; steps * 4 * h];
        let mut cells = vec![0.0; (steps + 1) * h];
        let mut hidden = vec![0.0; (steps + 1) * h];
        for t in 0..steps {
            let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            z.copy_from_slice(bias);
            gemv_acc(w_ih, &seq[t * in_dim..(t + 1) * in_dim], z);
            gemv_acc(w_hh, &hidden[t * h..(t + 1) * h], z);
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                z[k] = i;
                z[h + k] = f;
                z[2 * h + k] = g;
                z[3 * h + k] = o;
                let c = f * cells[t * h + k] + i * g;
                cells[(t + 1) * h + k] = c;
                hidden[(t + 1) * h + k] = o * c.tanh();
            }
        }
        let mut next: Vec<f64> = hidden[h..].to_vec();
        if let Some(m) = masks {
            if l + 1 < arch.lstm_layers {
                for (v, s) in next.iter_mut().zip(&m.between[l]) {
                    *v *= s;
                }
            }
        }
        layers.push(LayerTrace { inputs: seq, gates, cells, hidden });
        seq = next;
    }

    let last = layers.last().expect("at least one layer");
    let mut top_in = last.hidden[steps * h..].to_vec();
    if let Some(m) = masks {
        for (v, s) in top_in.iter_mut().zip(&m.top) {
            *v *= s;
        }
    }
    let mut fc1_z = w[layout.fc1_b..layout.fc2_w].to_vec();
    gemv_acc(&w[layout.fc1_w..layout.fc1_b], &top_in, &mut fc1_z);
    let mut fc1_a: Vec<f64> = fc1_z.iter().map(|&z| z.max(0.0)).collect();
    if let Some(m) = masks {
        for (v, s) in fc1_a.iter_mut().zip(&m.fc) {
            *v *= s;
        }
    }
    let mut output = w[layout.fc2_b..layout.total].to_vec();
    gemv_acc(&w[layout.fc2_w..layout.fc2_b], &fc1_a, &mut output);

    Trace { layers, top_in, fc1_z, fc1_a, output }
}

/// Accumulate `d loss / d w` for one sample into `grad`, given `d loss / d output`.
fn run_backward(
    w: &[f64],
    layout: &Layout,
    arch: &NetworkArchitecture,
    trace: &Trace,
    masks: Option<&Masks>,
    d_out: &[f64],
    grad: &mut [f64],
) {
    let h = arch.hidden_size;
    let fcw = arch.fc_hidden;

    outer_acc(&mut grad[layout.fc2_w..layout.fc2_b], d_out, &trace.fc1_a);
    for (g, d) in grad[layout.fc2_b..layout.total].iter_mut().zip(d_out) {
        *g += d;
    }
    let mut d_a = vec![0.0; fcw];
    gemv_t_acc(&w[layout.fc2_w..layout.fc2_b], d_out, &mut d_a);
    let d_z: Vec<f64> = (0..fcw)
        .map(|k| {
            let m = masks.map_or(1.0, |m| m.fc[k]);
            if trace.fc1_z[k] > 0.0 {
                d_a[k] * m
            } else {
                0.0
            }
        })
        .collect();
    outer_acc(&mut grad[layout.fc1_w..layout.fc1_b], &d_z, &trace.top_in);
    for (g, d) in grad[layout.fc1_b..layout.fc2_w].iter_mut().zip(&d_z) {
        *g += d;
    }
    let mut d_top = vec![0.0; h];
    gemv_t_acc(&w[layout.fc1_w..layout.fc1_b], &d_z, &mut d_top);
    if let Some(m) = masks {
        for (d, s) in d_top.iter_mut().zip(&m.top) {
            *d *= s;
        }
    }

    let steps = trace.layers[0].gates.len() / (4 * h);
    // Gradient w.r.t. each layer's output sequence (T x H).
    let mut d_seq = vec![0.0; steps * h];
    d_seq[(steps - 1) * h..].copy_from_slice(&d_top);

    for l in (0..arch.lstm_layers).rev() {
        let off = layout.lstm[l];
        let tr = &trace.layers[l];
        let in_dim = off.input;
        let w_ih = &w[off.w_ih..off.w_hh];
        let w_hh = &w[off.w_hh..off.bias];
        let mut d_inputs = vec![0.0; steps * in_dim];
        let mut dh_rec = vec![0.0; h];
        let mut dc_rec = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];

        for t in (0..steps).rev() {
            let g = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &tr.cells[t * h..(t + 1) * h];
            let c = &tr.cells[(t + 1) * h..(t + 2) * h];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = c[k].tanh();
                let dh = d_seq[t * h + k] + dh_rec[k];
                let dc = dc_rec[k] + dh * o * (1.0 - tc * tc);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_rec[k] = dc * f;
            }
            outer_acc(
                &mut grad[off.w_ih..off.w_hh],
                &dz,
                &tr.inputs[t * in_dim..(t + 1) * in_dim],
            );
            outer_acc(&mut grad[off.w_hh..off.bias], &dz, &tr.hidden[t * h..(t + 1) * h]);
            for (gb, d) in grad[off.bias..off.bias + 4 * h].iter_mut().zip(&dz) {
                *gb += d;
            }
            dh_rec.iter_mut().for_each(|v| *v = 0.0);
            gemv_t_acc(w_hh, &dz, &mut dh_rec);
            if l > 0 {
                gemv_t_acc(w_ih, &dz, &mut d_inputs[t * in_dim..(t + 1) * in_dim]);
            }
        }

        if l > 0 {
            // Inputs of layer l are the masked outputs of layer l - 1.
            if let Some(m) = masks {
                for (d, s) in d_inputs.iter_mut().zip(&m.between[l - 1]) {
                    *d *= s;
                }
            }
            d_seq = d_inputs;
        }
    }
}

/// Predict `output_size` steps from one input sequence.
///
/// In [`Mode::Train`] dropout masks are drawn from `rng`; in [`Mode::Eval`]
/// the result is a pure function of `(weights, input)`.
pub fn forward<R: Rng + ?Sized>(
    weights: &WeightVector,
    arch: &NetworkArchitecture,
    input: &[f64],
    expected_len: usize,
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    weights.check_len(arch)?;
    if input.is_empty() || input.len() != expected_len {
        return Err(Error::validation(format!(
            "input has {} readings, expected {expected_len}",
            input.len()
        )));
    }
    let layout = Layout::new(arch);
    let masks = match mode {
        Mode::Train if arch.dropout_rate > 0.0 => Some(Masks::draw(arch, input.len(), rng)),
        _ => None,
    };
    Ok(run_forward(weights.as_slice(), &layout, arch, input, masks.as_ref()).output)
}

/// Eval-mode prediction without a sequence-length check.
pub fn predict(weights: &WeightVector, arch: &NetworkArchitecture, input: &[f64]) -> Vec<f64> {
    let layout = Layout::new(arch);
    run_forward(weights.as_slice(), &layout, arch, input, None).output
}

fn check_batch<S: Sample>(arch: &NetworkArchitecture, batch: &[S]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::validation("dataset is empty"));
    }
    let seq = batch[0].input().len();
    for s in batch {
        if s.target().len() != arch.output_size {
            return Err(Error::validation(format!(
                "target has {} steps, model predicts {}",
                s.target().len(),
                arch.output_size
            )));
        }
        if s.input().len() != seq || seq == 0 {
            return Err(Error::validation("inputs of differing or zero length"));
        }
    }
    Ok(())
}

/// Mean over windows of the per-window mean squared error over the
/// predicted steps, in eval mode.
pub fn loss<S: Sample>(weights: &WeightVector, arch: &NetworkArchitecture, data: &[S]) -> Result<f64> {
    weights.check_len(arch)?;
    check_batch(arch, data)?;
    let layout = Layout::new(arch);
    let w = weights.as_slice();
    let p = arch.output_size as f64;
    let total: f64 = data
        .iter()
        .map(|s| {
            let out = run_forward(w, &layout, arch, s.input(), None).output;
            out.iter().zip(s.target()).map(|(y, t)| (y - t).powi(2)).sum::<f64>() / p
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Exact gradient of the batch loss (mean over windows of per-window MSE).
///
/// In [`Mode::Train`] one set of dropout masks per window is drawn from
/// `rng` and used by both passes. Returns `(gradient, batch loss)`; the loss
/// is the one the gradient differentiates, i.e. under the same masks.
pub fn gradient<S: Sample, R: Rng + ?Sized>(
    weights: &WeightVector,
    arch: &NetworkArchitecture,
    batch: &[S],
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    weights.check_len(arch)?;
    check_batch(arch, batch)?;
    let layout = Layout::new(arch);
    let w = weights.as_slice();
    let mut grad = vec![0.0; layout.total];
    let n = batch.len() as f64;
    let p = arch.output_size as f64;
    let mut total = 0.0;
    for s in batch {
        let masks = match mode {
            Mode::Train if arch.dropout_rate > 0.0 => {
                Some(Masks::draw(arch, s.input().len(), rng))
            }
            _ => None,
        };
        let trace = run_forward(w, &layout, arch, s.input(), masks.as_ref());
        let resid: Vec<f64> = trace.output.iter().zip(s.target()).map(|(y, t)| y - t).collect();
        total += resid.iter().map(|r| r * r).sum::<f64>() / p;
        let d_out: Vec<f64> = resid.iter().map(|r| 2.0 * r / (p * n)).collect();
        run_backward(w, &layout, arch, &trace, masks.as_ref(), &d_out, &mut grad);
    }
    Ok((grad, total / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use crate::localmodel::{init_weights, unflatten, NetworkParams, flatten};
    use crate::seed::rng_from_seed;

    fn tiny(h: usize, layers: usize, fc: usize, p: usize) -> NetworkArchitecture {
        NetworkArchitecture {
            input_size: 1,
            hidden_size: h,
            lstm_layers: layers,
            fc_hidden: fc,
            output_size: p,
            dropout_rate: 0.0,
        }
    }

    fn windows(seed: u64, n: usize, seq: usize, p: usize) -> Vec<Window> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Window {
                input: (0..seq).map(|_| rng.gen::<f64>()).collect(),
                target: (0..p).map(|_| rng.gen::<f64>()).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_network_predicts_zero() {
        let a = tiny(3, 2, 3, 4);
        let w = WeightVector::zeros(a.param_count());
        let mut rng = rng_from_seed(0);
        let y = forward(&w, &a, &[0.3, 0.9, 0.1], 3, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y, [0.0; 4]);
    }

    #[test]
    fn eval_is_deterministic_and_train_uses_dropout() {
        let a = NetworkArchitecture { dropout_rate: 0.5, ..tiny(6, 2, 6, 2) };
        let w = init_weights(&a, 3);
        let x = [0.1, 0.5, 0.7, 0.2];
        let mut r1 = rng_from_seed(1);
        let mut r2 = rng_from_seed(99);
        let e1 = forward(&w, &a, &x, 4, Mode::Eval, &mut r1).unwrap();
        let e2 = forward(&w, &a, &x, 4, Mode::Eval, &mut r2).unwrap();
        assert_eq!(e1, e2);
        let t1 = forward(&w, &a, &x, 4, Mode::Train, &mut rng_from_seed(1)).unwrap();
        let t2 = forward(&w, &a, &x, 4, Mode::Train, &mut rng_from_seed(1)).unwrap();
        let t3 = forward(&w, &a, &x, 4, Mode::Train, &mut rng_from_seed(2)).unwrap();
        assert_eq!(t1, t2);
        assert_ne!(t1, t3);
    }

    #[test]
    fn forward_rejects_length_mismatch() {
        let a = tiny(2, 1, 2, 1);
        let w = init_weights(&a, 0);
        let mut rng = rng_from_seed(0);
        assert!(forward(&w, &a, &[0.0; 3], 4, Mode::Eval, &mut rng).is_err());
        let short = WeightVector::zeros(a.param_count() - 1);
        assert!(forward(&short, &a, &[0.0; 4], 4, Mode::Eval, &mut rng).is_err());
    }

    /// Hand-unrolled single-layer recurrence over named parameters.
    fn manual_forward(p: &NetworkParams, x: &[f64]) -> Vec<f64> {
        let h = p.arch.hidden_size;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let l = &p.lstm[0];
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        for &xt in x {
            let mut nh = vec![0.0; h];
            let mut nc = vec![0.0; h];
            for k in 0..h {
                let pre = |gate: usize| {
                    let row = gate * h + k;
                    let mut z = l.bias[row] + l.w_ih[row] * xt;
                    for j in 0..h {
                        z += l.w_hh[row * h + j] * hs[j];
                    }
                    z
                };
                let i = sig(pre(0));
                let f = sig(pre(1));
                let g = pre(2).tanh();
                let o = sig(pre(3));
                nc[k] = f * cs[k] + i * g;
                nh[k] = o * nc[k].tanh();
            }
            hs = nh;
            cs = nc;
        }
        let fc = p.arch.fc_hidden;
        let a1: Vec<f64> = (0..fc)
            .map(|r| {
                let z: f64 = p.fc1_b[r] + (0..h).map(|j| p.fc1_w[r * h + j] * hs[j]).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        (0..p.arch.output_size)
            .map(|r| p.fc2_b[r] + (0..fc).map(|j| p.fc2_w[r * fc + j] * a1[j]).sum::<f64>())
            .collect()
    }

    #[test]
    fn matches_hand_unrolled_recurrence() {
        let a = tiny(2, 1, 2, 2);
        let mut p = NetworkParams::zeros(&a);
        let vals = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25, 0.6, -0.15];
        for (i, v) in p.lstm[0].w_ih.iter_mut().enumerate() {
            *v = vals[i % 8];
        }
        for (i, v) in p.lstm[0].w_hh.iter_mut().enumerate() {
            *v = 0.1 * (i as f64) - 0.7;
        }
        for (i, v) in p.lstm[0].bias.iter_mut().enumerate() {
            *v = 0.05 * i as f64;
        }
        p.fc1_w = vec![0.9, -0.3, 0.4, 0.8];
        p.fc1_b = vec![0.1, -0.05];
        p.fc2_w = vec![1.2, -0.7, 0.3, 0.5];
        p.fc2_b = vec![0.01, 0.02];
        let x = [0.2, 0.7, -0.1];
        let expected = manual_forward(&p, &x);
        let got = predict(&flatten(&p), &a, &x);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-15, "{g} vs {e}");
        }
        // Check against precomputed first step: h1 of unit 0 after x = 0.2.
        let unrolled = manual_forward(&p, &x[..1]);
        assert_eq!(predict(&flatten(&p), &a, &x[..1]), unrolled);
    }

    #[test]
    fn loss_examples() {
        let a = tiny(2, 1, 2, 2);
        let w = WeightVector::zeros(a.param_count());
        let one = [Window { input: vec![0.0; 3], target: vec![1.0, 1.0] }];
        assert_eq!(loss(&w, &a, &one).unwrap(), 1.0);
        let perfect = [Window { input: vec![0.5; 3], target: vec![0.0, 0.0] }];
        assert_eq!(loss(&w, &a, &perfect).unwrap(), 0.0);
        let empty: [Window; 0] = [];
        assert!(loss(&w, &a, &empty).is_err());

        // Output bias 0.1 and zero elsewhere: prediction = target + 0.1.
        let a4 = tiny(2, 1, 2, 4);
        let mut p = NetworkParams::zeros(&a4);
        p.fc2_b = vec![0.1; 4];
        let win = [Window { input: vec![0.3; 3], target: vec![0.0; 4] }];
        assert!((loss(&flatten(&p), &a4, &win).unwrap() - 0.01).abs() < 1e-15);
    }

    fn central_difference<S: Sample>(w: &WeightVector, a: &NetworkArchitecture, data: &[S], step: f64) -> Vec<f64> {
        (0..w.len())
            .map(|j| {
                let mut plus = w.clone();
                plus.as_mut_slice()[j] += step;
                let mut minus = w.clone();
                minus.as_mut_slice()[j] -= step;
                (loss(&plus, a, data).unwrap() - loss(&minus, a, data).unwrap()) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = tiny(3, 2, 3, 2);
        let w = init_weights(&a, 17);
        let data = windows(5, 3, 5, 2);
        let (g, l) = gradient(&w, &a, &data, Mode::Eval, &mut rng_from_seed(0)).unwrap();
        assert!((l - loss(&w, &a, &data).unwrap()).abs() < 1e-15);
        let fd = central_difference(&w, &a, &data, 1e-5);
        for (j, (x, y)) in g.iter().zip(&fd).enumerate() {
            let rel = (x - y).abs() / x.abs().max(y.abs()).max(1e-8);
            assert!(rel < 1e-4, "coordinate {j}: analytic {x} vs numeric {y}");
        }
    }

    #[test]
    fn gradient_with_fixed_masks_matches_finite_differences() {
        // With dropout on, the same rng seed reproduces the masks, so the
        // masked loss is a deterministic function we can difference.
        let a = NetworkArchitecture { dropout_rate: 0.3, ..tiny(3, 2, 4, 2) };
        let w = init_weights(&a, 2);
        let data = windows(9, 2, 4, 2);
        let (g, _) = gradient(&w, &a, &data, Mode::Train, &mut rng_from_seed(4)).unwrap();
        let masked = |w: &WeightVector| gradient(w, &a, &data, Mode::Train, &mut rng_from_seed(4)).unwrap().1;
        for j in 0..w.len() {
            let mut plus = w.clone();
            plus.as_mut_slice()[j] += 1e-5;
            let mut minus = w.clone();
            minus.as_mut_slice()[j] -= 1e-5;
            let fd = (masked(&plus) - masked(&minus)) / 2e-5;
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4, "coordinate {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn output_bias_gradient_scales_with_targets() {
        // At a zero-prediction point, d loss / d b_out = -2 t / P.
        let a = tiny(2, 2, 2, 3);
        let w = WeightVector::zeros(a.param_count());
        let data = vec![Window { input: vec![0.4, 0.2], target: vec![0.5, -1.0, 2.0] }];
        let doubled = vec![Window { input: vec![0.4, 0.2], target: vec![1.0, -2.0, 4.0] }];
        let mut rng = rng_from_seed(0);
        let (g1, _) = gradient(&w, &a, &data, Mode::Eval, &mut rng).unwrap();
        let (g2, _) = gradient(&w, &a, &doubled, Mode::Eval, &mut rng).unwrap();
        let layout = Layout::new(&a);
        for k in 0..3 {
            let i = layout.fc2_b + k;
            assert_eq!(g2[i], 2.0 * g1[i]);
            assert!((g1[i] - (-2.0 * data[0].target[k] / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_coordinate_has_zero_gradient() {
        // Output bias equal to the mean target minimizes the loss in that
        // coordinate when the rest of the network outputs zero.
        let a = tiny(2, 1, 2, 1);
        let mut p = NetworkParams::zeros(&a);
        p.fc2_b = vec![0.5];
        let data = vec![
            Window { input: vec![0.1, 0.2], target: vec![0.25] },
            Window { input: vec![0.3, 0.4], target: vec![0.75] },
        ];
        let w = flatten(&p);
        let (g, _) = gradient(&w, &a, &data, Mode::Eval, &mut rng_from_seed(0)).unwrap();
        assert!(g[Layout::new(&a).fc2_b].abs() < 1e-15);
        let _ = unflatten(&w, &a).unwrap();
    }
}
