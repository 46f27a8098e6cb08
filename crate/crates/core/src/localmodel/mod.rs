//! Per-node LSTM forecaster.
//!
//! The network is a stack of LSTM layers over a univariate sequence, whose
//! final hidden state feeds `FC -> ReLU -> dropout -> FC`. All parameters
//! live in one flat [`WeightVector`]; [`NetworkParams`] is the structured
//! view used for inspection and hand-set weights.

mod network;
mod train;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, SeedPart};

pub use network::{forward, gradient, loss, predict, Mode};
pub use train::{clip_global_norm, train_on_node, Adam, TrainConfig};

/// Shape of the forecaster shared by every node of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkArchitecture {
    pub input_size: usize,
    pub hidden_size: usize,
    pub lstm_layers: usize,
    /// Width of the hidden fully connected layer.
    pub fc_hidden: usize,
    /// Number of predicted steps (the lead time).
    pub output_size: usize,
    pub dropout_rate: f64,
}

impl Default for NetworkArchitecture {
    fn default() -> Self {
        Self {
            input_size: 1,
            hidden_size: 8,
            lstm_layers: 2,
            fc_hidden: 8,
            output_size: 4,
            dropout_rate: 0.1,
        }
    }
}

impl NetworkArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_size != 1 {
            return Err(Error::config("model.input_size", "only univariate input (1) is supported"));
        }
        if self.hidden_size == 0 {
            return Err(Error::config("model.hidden_size", "must be at least 1"));
        }
        if self.lstm_layers == 0 {
            return Err(Error::config("model.lstm_layers", "must be at least 1"));
        }
        if self.fc_hidden == 0 {
            return Err(Error::config("model.fc_hidden", "must be at least 1"));
        }
        if self.output_size == 0 {
            return Err(Error::config("model.output_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("model.dropout_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }

    /// Total parameter count M.
    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// Hash of every field, stored with serialized weights.
    pub fn fingerprint(&self) -> u64 {
        derive_seed(
            0x4657_4f41,
            &[
                SeedPart::Num(self.input_size as u64),
                SeedPart::Num(self.hidden_size as u64),
                SeedPart::Num(self.lstm_layers as u64),
                SeedPart::Num(self.fc_hidden as u64),
                SeedPart::Num(self.output_size as u64),
                SeedPart::Num(self.dropout_rate.to_bits()),
            ],
        )
    }
}

/// Offsets of every tensor inside the flat parameter vector.
///
/// Layer-major; within an LSTM layer the input weights (4H x in), recurrent
/// weights (4H x H) and bias (4H), each with rows in gate order
/// input/forget/cell/output. Then FC1 weight and bias, FC2 weight and bias.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub lstm: Vec<LstmOffsets>,
    pub fc1_w: usize,
    pub fc1_b: usize,
    pub fc2_w: usize,
    pub fc2_b: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmOffsets {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub input: usize,
}

impl Layout {
    pub fn new(arch: &NetworkArchitecture) -> Self {
        let h = arch.hidden_size;
        let mut at = 0;
        let lstm = (0..arch.lstm_layers)
            .map(|l| {
                let input = arch.layer_input(l);
                let w_ih = at;
                let w_hh = w_ih + 4 * h * input;
                let bias = w_hh + 4 * h * h;
                at = bias + 4 * h;
                LstmOffsets { w_ih, w_hh, bias, input }
            })
            .collect();
        let fc1_w = at;
        let fc1_b = fc1_w + arch.fc_hidden * h;
        let fc2_w = fc1_b + arch.fc_hidden;
        let fc2_b = fc2_w + arch.output_size * arch.fc_hidden;
        let total = fc2_b + arch.output_size;
        Self { lstm, fc1_w, fc1_b, fc2_w, fc2_b, total }
    }
}

/// Flat parameter vector of one local model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn check_len(&self, arch: &NetworkArchitecture) -> Result<()> {
        let m = arch.param_count();
        if self.len() != m {
            return Err(Error::validation(format!(
                "weight vector has {} entries, architecture needs {m}",
                self.len()
            )));
        }
        Ok(())
    }

    /// Write as fingerprint, length, then little-endian f64 values.
    pub fn write_to<W: Write>(&self, arch: &NetworkArchitecture, mut w: W) -> Result<()> {
        let ser = |e: std::io::Error| Error::Serialization(e.to_string());
        w.write_all(&arch.fingerprint().to_le_bytes()).map_err(ser)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(ser)?;
        for v in &self.0 {
            w.write_all(&v.to_le_bytes()).map_err(ser)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(arch: &NetworkArchitecture, mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word).map_err(|e| Error::Serialization(e.to_string()))?;
            Ok(word)
        };
        let fingerprint = u64::from_le_bytes(next(&mut r)?);
        if fingerprint != arch.fingerprint() {
            return Err(Error::validation("weight file was written for a different architecture"));
        }
        let len = u64::from_le_bytes(next(&mut r)?) as usize;
        if len != arch.param_count() {
            return Err(Error::validation(format!(
                "weight file holds {len} values, architecture needs {}",
                arch.param_count()
            )));
        }
        let values = (0..len)
            .map(|_| next(&mut r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self(values))
    }
}

/// Parameters of one LSTM layer, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Structured network state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: NetworkArchitecture,
    pub lstm: Vec<LstmLayerParams>,
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: &NetworkArchitecture) -> Self {
        unflatten(&WeightVector::zeros(arch.param_count()), arch).expect("length matches")
    }
}

pub fn flatten(params: &NetworkParams) -> WeightVector {
    let mut v = Vec::with_capacity(params.arch.param_count());
    for layer in &params.lstm {
        v.extend_from_slice(&layer.w_ih);
        v.extend_from_slice(&layer.w_hh);
        v.extend_from_slice(&layer.bias);
    }
    v.extend_from_slice(&params.fc1_w);
    v.extend_from_slice(&params.fc1_b);
    v.extend_from_slice(&params.fc2_w);
    v.extend_from_slice(&params.fc2_b);
    WeightVector(v)
}

pub fn unflatten(weights: &WeightVector, arch: &NetworkArchitecture) -> Result<NetworkParams> {
    weights.check_len(arch)?;
    let layout = Layout::new(arch);
    let w = weights.as_slice();
    let lstm = layout
        .lstm
        .iter()
        .map(|o| LstmLayerParams {
            w_ih: w[o.w_ih..o.w_hh].to_vec(),
            w_hh: w[o.w_hh..o.bias].to_vec(),
            bias: w[o.bias..o.bias + 4 * arch.hidden_size].to_vec(),
        })
        .collect();
    Ok(NetworkParams {
        arch: *arch,
        lstm,
        fc1_w: w[layout.fc1_w..layout.fc1_b].to_vec(),
        fc1_b: w[layout.fc1_b..layout.fc2_w].to_vec(),
        fc2_w: w[layout.fc2_w..layout.fc2_b].to_vec(),
        fc2_b: w[layout.fc2_b..layout.total].to_vec(),
    })
}

/// Uniform initialization in `[-1/sqrt(H), 1/sqrt(H)]` for every parameter.
pub fn init_weights(arch: &NetworkArchitecture, seed: u64) -> WeightVector {
    let bound = 1.0 / (arch.hidden_size as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    WeightVector((0..arch.param_count()).map(|_| rng.gen_range(-bound..=bound)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch(h: usize, layers: usize, fc: usize, p: usize) -> NetworkArchitecture {
        NetworkArchitecture {
            input_size: 1,
            hidden_size: h,
            lstm_layers: layers,
            fc_hidden: fc,
            output_size: p,
            dropout_rate: 0.0,
        }
    }

    /// Independent count: per-layer (rows x cols) shapes summed.
    fn param_count_oracle(a: &NetworkArchitecture) -> usize {
        let mut shapes: Vec<(usize, usize)> = Vec::new();
        for l in 0..a.lstm_layers {
            let inp = if l == 0 { a.input_size } else { a.hidden_size };
            shapes.push((4 * a.hidden_size, inp));
            shapes.push((4 * a.hidden_size, a.hidden_size));
            shapes.push((4 * a.hidden_size, 1));
        }
        shapes.push((a.fc_hidden, a.hidden_size));
        shapes.push((a.fc_hidden, 1));
        shapes.push((a.output_size, a.fc_hidden));
        shapes.push((a.output_size, 1));
        shapes.iter().map(|(r, c)| r * c).sum()
    }

    #[test]
    fn param_count_matches_shapes() {
        let tiny = arch(1, 2, 1, 1);
        assert_eq!(tiny.param_count(), param_count_oracle(&tiny));
        // 2 layers: 4*(1+1)+4 = 12 and 4*(1+1)+4 = 12, fc 2, out 2.
        assert_eq!(tiny.param_count(), 28);
        assert_eq!(init_weights(&tiny, 1).len(), 28);
        let full_size = arch(64, 2, 64, 4);
        assert_eq!(full_size.param_count(), 54_340);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = arch(9, 2, 5, 4);
        let w = init_weights(&a, 11);
        assert_eq!(w, init_weights(&a, 11));
        assert_ne!(w, init_weights(&a, 12));
        let bound = 1.0 / 3.0;
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let a = arch(3, 2, 3, 2);
        let short = WeightVector::zeros(a.param_count() - 1);
        assert!(matches!(unflatten(&short, &a), Err(Error::Validation(_))));
        let zero = NetworkParams::zeros(&a);
        assert_eq!(flatten(&zero), WeightVector::zeros(a.param_count()));
    }

    #[test]
    fn layout_places_gate_rows_in_order() {
        let a = arch(2, 1, 1, 1);
        let mut w = WeightVector::zeros(a.param_count());
        // Bias of the forget gate, unit 1 -> index bias_offset + H + 1.
        let layout = Layout::new(&a);
        w.as_mut_slice()[layout.lstm[0].bias + 2 + 1] = 7.0;
        let p = unflatten(&w, &a).unwrap();
        assert_eq!(p.lstm[0].bias, [0.0, 0.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn serialization_round_trip_and_mismatch() {
        let a = arch(3, 2, 4, 2);
        let w = init_weights(&a, 5);
        let mut buf = Vec::new();
        w.write_to(&a, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * a.param_count());
        assert_eq!(&buf[8..16], &(a.param_count() as u64).to_le_bytes());
        assert_eq!(WeightVector::read_from(&a, buf.as_slice()).unwrap(), w);
        let other = arch(3, 2, 4, 3);
        assert!(WeightVector::read_from(&other, buf.as_slice()).is_err());
        let dropout = NetworkArchitecture { dropout_rate: 0.5, ..a };
        assert!(WeightVector::read_from(&dropout, buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_bijection(h in 1usize..6, layers in 1usize..4, fc in 1usize..6,
                                       p in 1usize..5, seed in any::<u64>()) {
            let a = arch(h, layers, fc, p);
            prop_assert_eq!(a.param_count(), param_count_oracle(&a));
            let w = init_weights(&a, seed);
            let params = unflatten(&w, &a).unwrap();
            prop_assert_eq!(flatten(&params), w.clone());
            prop_assert_eq!(unflatten(&flatten(&params), &a).unwrap(), params);
        }
    }
}
