//! Mini-batch Adam training on one node's windows.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{gradient, loss, Mode};
use super::{NetworkArchitecture, WeightVector};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Seeds batch shuffling and dropout masks.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 16,
            epochs: 5,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::config("train.adam_betas", "both betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("train.adam_eps", "must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("train.clip_norm", "must be positive when set"));
            }
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.adam_betas.0,
            beta2: config.adam_betas.1,
            eps: config.adam_eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescale `grad` in place so its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Train from `weights` for `config.epochs` epochs of shuffled mini-batches.
///
/// Returns the updated weights and the eval-mode loss on `train_set`
/// afterwards.
pub fn train_on_node<S: Sample>(
    weights: &WeightVector,
    arch: &NetworkArchitecture,
    train_set: &[S],
    config: &TrainConfig,
) -> Result<(WeightVector, f64)> {
    weights.check_len(arch)?;
    if train_set.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    let mut w = weights.clone();
    let mut rng = rng_from_seed(config.seed);
    let mut adam = Adam::new(w.len(), config);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<&S> = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train_set[i]));
            let (mut g, _) = gradient(&w, arch, &batch, Mode::Train, &mut rng)?;
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut g, max);
            }
            adam.step(w.as_mut_slice(), &g);
        }
    }
    let final_loss = loss(&w, arch, train_set)?;
    Ok((w, final_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use crate::localmodel::init_weights;

    fn arch(h: usize, p: usize) -> NetworkArchitecture {
        NetworkArchitecture {
            input_size: 1,
            hidden_size: h,
            lstm_layers: 2,
            fc_hidden: h,
            output_size: p,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let a = arch(3, 2);
        let w = init_weights(&a, 1);
        let data = vec![Window { input: vec![0.1, 0.2, 0.3], target: vec![0.4, 0.5] }];
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (out, l) = train_on_node(&w, &a, &data, &cfg).unwrap();
        assert_eq!(out, w);
        assert_eq!(l, loss(&w, &a, &data).unwrap());
    }

    #[test]
    fn zero_gradient_adam_step_is_noop() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.3, -1.2, 5.0];
        let before = p.clone();
        let mut adam = Adam::new(3, &cfg);
        adam.step(&mut p, &[0.0; 3]);
        adam.step(&mut p, &[0.0; 3]);
        assert_eq!(p, before);
    }

    #[test]
    fn single_step_matches_hand_computed_adam() {
        let a = arch(2, 2);
        let w = init_weights(&a, 8);
        let data = vec![Window { input: vec![0.2, 0.9, 0.4], target: vec![0.7, 0.1] }];
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            learning_rate: 1e-2,
            clip_norm: None,
            ..Default::default()
        };
        let (g, _) = gradient(&w, &a, &data, Mode::Eval, &mut rng_from_seed(0)).unwrap();
        let (out, _) = train_on_node(&w, &a, &data, &cfg).unwrap();
        // After one step m_hat = g and v_hat = g^2.
        for ((o, w0), g) in out.as_slice().iter().zip(w.as_slice()).zip(&g) {
            let m_hat = (1.0 - 0.9) * g / (1.0 - 0.9);
            let v_hat = (1.0 - 0.999) * g * g / (1.0 - 0.999);
            let expected = w0 - 1e-2 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((o - expected).abs() < 1e-14, "{o} vs {expected}");
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut small = vec![0.1, 0.1];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, [0.1, 0.1]);
    }

    #[test]
    fn overfits_a_sinusoid() {
        let a = arch(8, 2);
        let series: Vec<f64> = (0..60).map(|i| 0.5 + 0.4 * (i as f64 * 0.4).sin()).collect();
        let data: Vec<Window> = (0..series.len() - 10)
            .map(|i| Window { input: series[i..i + 8].to_vec(), target: series[i + 8..i + 10].to_vec() })
            .collect();
        let w = init_weights(&a, 3);
        let cfg = TrainConfig {
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 16,
            seed: 5,
            ..Default::default()
        };
        let (out, l) = train_on_node(&w, &a, &data, &cfg).unwrap();
        assert!(l < 1e-3, "final loss {l}");
        assert_eq!(l, loss(&out, &a, &data).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let a = NetworkArchitecture { dropout_rate: 0.5, ..arch(4, 2) };
        let data: Vec<Window> = (0..20)
            .map(|i| Window { input: vec![i as f64 / 20.0; 5], target: vec![0.5, 0.1] })
            .collect();
        let w = init_weights(&a, 3);
        let cfg = TrainConfig { epochs: 3, seed: 9, ..Default::default() };
        let r1 = train_on_node(&w, &a, &data, &cfg).unwrap();
        let r2 = train_on_node(&w, &a, &data, &cfg).unwrap();
        assert_eq!(r1, r2);
        let r3 = train_on_node(&w, &a, &data, &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(r1.0, r3.0);
    }
}
