//! Error metrics, improvement ratios, convergence rate and population
//! diversity.

use serde::{Deserialize, Serialize};

use crate::data::{NodeDataset, Sample, Split};
use crate::localmodel::{predict, NetworkArchitecture, WeightVector};

/// MSE and MAE of one split; `None` when the split has no windows.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_train: Option<f64>,
    pub mse_val: Option<f64>,
    pub mse_test: Option<f64>,
    pub mae_train: Option<f64>,
    pub mae_val: Option<f64>,
    pub mae_test: Option<f64>,
}

impl EvalReport {
    pub fn mse(&self, split: Split) -> Option<f64> {
        match split {
            Split::Train => self.mse_train,
            Split::Val => self.mse_val,
            Split::Test => self.mse_test,
        }
    }

    pub fn mae(&self, split: Split) -> Option<f64> {
        match split {
            Split::Train => self.mae_train,
            Split::Val => self.mae_val,
            Split::Test => self.mae_test,
        }
    }

    fn set(&mut self, split: Split, errors: Option<(f64, f64)>) {
        let (mse, mae) = (errors.map(|e| e.0), errors.map(|e| e.1));
        match split {
            Split::Train => (self.mse_train, self.mae_train) = (mse, mae),
            Split::Val => (self.mse_val, self.mae_val) = (mse, mae),
            Split::Test => (self.mse_test, self.mae_test) = (mse, mae),
        }
    }

    /// Splits that had no data.
    pub fn missing(&self) -> Vec<Split> {
        Split::ALL.into_iter().filter(|&s| self.mse(s).is_none()).collect()
    }

    /// Field-wise mean over reports, ignoring absent values.
    pub fn mean(reports: &[EvalReport]) -> EvalReport {
        let avg = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        EvalReport {
            mse_train: avg(&|r| r.mse_train),
            mse_val: avg(&|r| r.mse_val),
            mse_test: avg(&|r| r.mse_test),
            mae_train: avg(&|r| r.mae_train),
            mae_val: avg(&|r| r.mae_val),
            mae_test: avg(&|r| r.mae_test),
        }
    }
}

/// (MSE, MAE) of `predictions` against windows: squared and absolute
/// errors are averaged over the predicted steps, then over windows.
pub fn prediction_errors<S: Sample>(predictions: &[Vec<f64>], data: &[S]) -> Option<(f64, f64)> {
    if data.is_empty() {
        return None;
    }
    let (mut se, mut ae) = (0.0, 0.0);
    for (pred, s) in predictions.iter().zip(data) {
        let p = s.target().len() as f64;
        se += pred.iter().zip(s.target()).map(|(y, t)| (y - t).powi(2)).sum::<f64>() / p;
        ae += pred.iter().zip(s.target()).map(|(y, t)| (y - t).abs()).sum::<f64>() / p;
    }
    let n = data.len() as f64;
    Some((se / n, ae / n))
}

pub fn split_errors<S: Sample + Sync>(
    weights: &WeightVector,
    arch: &NetworkArchitecture,
    data: &[S],
) -> Option<(f64, f64)> {
    let preds: Vec<Vec<f64>> = data.iter().map(|s| predict(weights, arch, s.input())).collect();
    prediction_errors(&preds, data)
}

/// Eval-mode MSE and MAE of `weights` on every split of a node.
pub fn evaluate(weights: &WeightVector, arch: &NetworkArchitecture, dataset: &NodeDataset) -> EvalReport {
    let mut report = EvalReport::default();
    for split in Split::ALL {
        report.set(split, split_errors(weights, arch, &dataset.windows(split)));
    }
    report
}

/// Ratio of baseline error to FedWOA error, in percent (100 = parity).
/// Infinite when the FedWOA error is zero.
pub fn improvement(error_avg: f64, error_woa: f64) -> f64 {
    if error_woa == 0.0 {
        f64::INFINITY
    } else {
        error_avg / error_woa * 100.0
    }
}

/// Relative error reduction of FedWOA over the baseline, in percent.
pub fn improvement_reduction(error_avg: f64, error_woa: f64) -> f64 {
    (1.0 - error_woa / error_avg) * 100.0
}

/// Both improvement conventions for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    /// `error_avg / error_woa * 100`; `None` if `error_woa` is zero.
    pub ratio_percent: Option<f64>,
    /// `(1 - error_woa / error_avg) * 100`.
    pub reduction_percent: Option<f64>,
}

impl Improvement {
    pub fn between(error_avg: f64, error_woa: f64) -> Self {
        let ratio = improvement(error_avg, error_woa);
        let reduction = improvement_reduction(error_avg, error_woa);
        Self {
            ratio_percent: ratio.is_finite().then_some(ratio),
            reduction_percent: reduction.is_finite().then_some(reduction),
        }
    }
}

/// Best fitness per iteration plus the target value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessHistory {
    pub values: Vec<f64>,
    pub goal: f64,
}

impl FitnessHistory {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, goal: 0.0 }
    }

    /// Best (lowest) fitness over the history.
    pub fn optimum(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First iteration at which the optimum was reached.
    pub fn optimum_iteration(&self) -> Option<usize> {
        let opt = self.optimum();
        self.values.iter().position(|&v| v == opt)
    }
}

/// `1 - |(L_opt - L_t) / (L_opt - L_goal)|^(1/T)`.
///
/// Equals 1 when `L_t = L_opt` and 0 when `L_t = L_goal`. Values worse than
/// the optimum by more than the goal gap give a negative rate; no clamping.
/// A degenerate history with `L_opt = L_goal` yields 1.
pub fn convergence_rate(history: &FitnessHistory, t: usize, iterations: usize) -> f64 {
    let opt = history.optimum();
    let gap = opt - history.goal;
    if gap == 0.0 {
        return 1.0;
    }
    let ratio = ((opt - history.values[t]) / gap).abs();
    1.0 - ratio.powf(1.0 / iterations as f64)
}

/// Mean over individuals of the summed Euclidean distance to every
/// individual (ordered pairs, zero diagonal included).
pub fn diversity(population: &[WeightVector]) -> f64 {
    if population.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, a) in population.iter().enumerate() {
        for b in &population[i + 1..] {
            let d = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            total += 2.0 * d;
        }
    }
    total / population.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Window;
    use proptest::prelude::*;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec())
    }

    #[test]
    fn errors_of_perfect_and_constant_offset() {
        let data = vec![
            Window { input: vec![0.0], target: vec![0.1, 0.2] },
            Window { input: vec![0.0], target: vec![0.3, 0.4] },
        ];
        let exact: Vec<Vec<f64>> = data.iter().map(|w| w.target.clone()).collect();
        assert_eq!(prediction_errors(&exact, &data), Some((0.0, 0.0)));
        let off: Vec<Vec<f64>> = data.iter().map(|w| w.target.iter().map(|t| t + 0.1).collect()).collect();
        let (mse, mae) = prediction_errors(&off, &data).unwrap();
        assert!((mse - 0.01).abs() < 1e-15 && (mae - 0.1).abs() < 1e-15);
        let empty: Vec<Window> = vec![];
        assert_eq!(prediction_errors(&[], &empty), None);
    }

    #[test]
    fn report_holds_table_values_and_flags_missing() {
        let r = EvalReport { mse_train: Some(0.008284), mae_train: Some(0.069696), ..Default::default() };
        assert_eq!(r.mse(Split::Train), Some(0.008284));
        assert_eq!(r.mae(Split::Train), Some(0.069696));
        assert_eq!(r.missing(), [Split::Val, Split::Test]);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"mse_train\":0.008284"));
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(improvement(0.3, 0.3), 100.0);
        assert_eq!(improvement(0.2, 0.1), 200.0);
        assert!((improvement(0.025414, 0.010612) - 239.48).abs() < 0.01);
        assert!((improvement_reduction(0.025414, 0.010612) - 58.24).abs() < 0.01);
        assert!(improvement(0.1, 0.0).is_infinite());
        assert_eq!(Improvement::between(0.1, 0.0).ratio_percent, None);
    }

    #[test]
    fn convergence_rate_examples() {
        let h = FitnessHistory::new(vec![0.4, 0.1]);
        assert_eq!(convergence_rate(&h, 1, 10), 1.0);
        assert!((convergence_rate(&h, 0, 10) - (1.0 - 3f64.powf(0.1))).abs() < 1e-15);
        assert!((convergence_rate(&h, 0, 10) + 0.1161).abs() < 1e-4);
    }

    #[test]
    fn convergence_rate_is_zero_at_goal_and_one_when_degenerate() {
        let h = FitnessHistory { values: vec![-0.2, 0.3, 0.1], goal: 0.1 };
        // L_opt = -0.2, L_goal = 0.1, L_2 = L_goal.
        assert!(convergence_rate(&h, 2, 10).abs() < 1e-12);
        let degenerate = FitnessHistory { values: vec![0.5, 0.0], goal: 0.0 };
        assert_eq!(convergence_rate(&degenerate, 0, 5), 1.0);
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity(&[wv(&[1.0, 2.0]), wv(&[1.0, 2.0])]), 0.0);
        assert_eq!(diversity(&[wv(&[0.0, 0.0]), wv(&[3.0, 4.0])]), 5.0);
    }

    proptest! {
        #[test]
        fn diversity_translation_and_scaling(
            pop in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..6),
            shift in proptest::collection::vec(-5.0f64..5.0, 4),
            scale in 0.1f64..10.0,
        ) {
            let base: Vec<WeightVector> = pop.iter().map(|v| wv(v)).collect();
            let moved: Vec<WeightVector> =
                pop.iter().map(|v| wv(&v.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>())).collect();
            let scaled: Vec<WeightVector> =
                pop.iter().map(|v| wv(&v.iter().map(|a| a * scale).collect::<Vec<_>>())).collect();
            let d = diversity(&base);
            prop_assert!(d >= 0.0);
            prop_assert!((diversity(&moved) - d).abs() < 1e-9 * d.max(1.0));
            prop_assert!((diversity(&scaled) - scale * d).abs() < 1e-9 * (scale * d).max(1.0));
        }

        #[test]
        fn improvement_parity(x in 1e-9f64..1e6) {
            prop_assert!((improvement(x, x) - 100.0).abs() < 1e-12);
        }
    }
}
