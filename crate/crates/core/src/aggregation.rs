//! Cluster-level global model construction: FedAVG and the whale-optimization
//! search over node weight vectors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::localmodel::WeightVector;
use crate::metrics::diversity;
use crate::seed::{derive_seed, rng_from_seed};

/// What the aggregator may ask of a node. Raw data never crosses this
/// boundary; only weight vectors and scalar losses do.
pub trait LocalNode: Sync {
    fn node_id(&self) -> &str;
    /// Number of training windows held by the node.
    fn sample_count(&self) -> usize;
    /// Mean window MSE of `weights` on one of the node's splits.
    fn local_loss(&self, weights: &WeightVector, split: Split) -> Result<f64>;
    /// Train a copy of `weights` on the node's training split.
    fn local_train(&self, weights: &WeightVector, epochs: usize, seed: u64) -> Result<WeightVector>;
    fn weights(&self) -> &WeightVector;
    fn set_weights(&mut self, weights: WeightVector);
}

/// Model transfers between nodes and the cluster's central role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundLedger {
    /// Central to node.
    pub model_sends: u64,
    /// Node to central.
    pub model_receives: u64,
}

impl RoundLedger {
    pub fn total(&self) -> u64 {
        self.model_sends + self.model_receives
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    #[default]
    SampleCount,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WoaConfig {
    pub iterations: usize,
    /// Spiral shape constant.
    pub b: f64,
    pub a_initial: f64,
    /// Base of every per-(iteration, index) draw stream. Set per cluster by
    /// the orchestrator.
    #[serde(skip)]
    pub seed: u64,
    pub local_epochs_per_update: usize,
    /// Clamp every candidate coordinate to be nonnegative.
    pub nonneg_projection: bool,
    /// Use `|best - current|` in the spiral instead of the signed difference.
    pub spiral_abs_distance: bool,
    pub loss_weighting: LossWeighting,
}

impl Default for WoaConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            b: 1.0,
            a_initial: 2.0,
            seed: 0,
            local_epochs_per_update: 1,
            nonneg_projection: false,
            spiral_abs_distance: false,
            loss_weighting: LossWeighting::SampleCount,
        }
    }
}

impl WoaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("woa.iterations", "must be at least 1"));
        }
        if !(self.a_initial > 0.0) || !self.a_initial.is_finite() {
            return Err(Error::config("woa.a_initial", "must be positive"));
        }
        if !self.b.is_finite() {
            return Err(Error::config("woa.b", "must be finite"));
        }
        Ok(())
    }

    /// Linearly decaying coefficient `a(t) = a_initial * (1 - t/T)`.
    pub fn a_at(&self, t: usize) -> f64 {
        self.a_initial * (1.0 - t as f64 / self.iterations as f64)
    }
}

/// Random quantities consumed by one individual in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WoaStepDraws {
    /// Chooses encircle/explore versus spiral.
    pub p: f64,
    /// Spiral position in [-1, 1].
    pub l: f64,
    /// Scalar uniform behind the branch coefficient.
    pub u: f64,
    pub a: f64,
    pub r: Vec<f64>,
}

impl WoaStepDraws {
    pub fn draw<R: Rng>(rng: &mut R, a: f64, len: usize) -> Self {
        let p = rng.gen::<f64>();
        let l = rng.gen_range(-1.0..=1.0);
        let u = rng.gen::<f64>();
        let r = (0..len).map(|_| rng.gen::<f64>()).collect();
        Self { p, l, u, a, r }
    }

    pub fn a_branch(&self) -> f64 {
        2.0 * self.a * self.u - self.a
    }

    pub fn branch(&self) -> Branch {
        if self.p >= 0.5 {
            Branch::Spiral
        } else if self.a_branch().abs() < 1.0 {
            Branch::Encircle
        } else {
            Branch::Explore
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Encircle,
    Explore,
    Spiral,
}

/// One candidate per node, index-aligned with the node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub individuals: Vec<WeightVector>,
    pub fitness: Vec<f64>,
    pub best_index: usize,
}

impl Population {
    /// Score every individual with [`global_loss`].
    pub fn evaluate<N: LocalNode>(
        individuals: Vec<WeightVector>,
        nodes: &[N],
        weighting: LossWeighting,
        ledger: &mut RoundLedger,
    ) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::validation("population is empty"));
        }
        let pairs: Vec<(usize, usize)> =
            (0..individuals.len()).flat_map(|i| (0..nodes.len()).map(move |j| (i, j))).collect();
        let losses = pairs
            .par_iter()
            .map(|&(i, j)| nodes[j].local_loss(&individuals[i], Split::Train))
            .collect::<Result<Vec<f64>>>()?;
        ledger.model_sends += pairs.len() as u64;
        let fitness: Vec<f64> = losses.chunks(nodes.len()).map(|l| weighted_mean(l, nodes, weighting)).collect();
        let best_index = argmin(&fitness);
        Ok(Self { individuals, fitness, best_index })
    }

    pub fn best(&self) -> (&WeightVector, f64) {
        (&self.individuals[self.best_index], self.fitness[self.best_index])
    }
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn weighted_mean<N: LocalNode>(losses: &[f64], nodes: &[N], weighting: LossWeighting) -> f64 {
    match weighting {
        LossWeighting::Uniform => losses.iter().sum::<f64>() / losses.len() as f64,
        LossWeighting::SampleCount => {
            let total: usize = nodes.iter().map(|n| n.sample_count()).sum();
            losses.iter().zip(nodes).map(|(l, n)| l * n.sample_count() as f64).sum::<f64>() / total as f64
        }
    }
}

fn cluster_loss<N: LocalNode>(candidate: &WeightVector, nodes: &[N], weighting: LossWeighting) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::validation("cluster has no nodes"));
    }
    let losses =
        nodes.par_iter().map(|n| n.local_loss(candidate, Split::Train)).collect::<Result<Vec<f64>>>()?;
    Ok(weighted_mean(&losses, nodes, weighting))
}

/// Weighted mean of every node's training loss for `candidate`. Each node
/// evaluated costs one model send.
pub fn global_loss<N: LocalNode>(
    candidate: &WeightVector,
    nodes: &[N],
    weighting: LossWeighting,
    ledger: &mut RoundLedger,
) -> Result<f64> {
    let loss = cluster_loss(candidate, nodes, weighting)?;
    ledger.model_sends += nodes.len() as u64;
    Ok(loss)
}

/// Coordinate-wise mean of `weights` weighted by `sample_counts`.
pub fn fedavg_aggregate(weights: &[WeightVector], sample_counts: &[usize]) -> Result<WeightVector> {
    let first = weights.first().ok_or_else(|| Error::validation("no weight vectors to aggregate"))?;
    if weights.len() != sample_counts.len() {
        return Err(Error::validation(format!(
            "{} weight vectors but {} sample counts",
            weights.len(),
            sample_counts.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != first.len()) {
        return Err(Error::validation(format!("weight length {} differs from {}", w.len(), first.len())));
    }
    if sample_counts.iter().any(|&c| c == 0) {
        return Err(Error::validation("sample counts must be positive"));
    }
    let total: usize = sample_counts.iter().sum();
    let mut out = vec![0.0; first.len()];
    for (w, &c) in weights.iter().zip(sample_counts) {
        let share = c as f64 / total as f64;
        for (o, x) in out.iter_mut().zip(w.as_slice()) {
            *o += share * x;
        }
    }
    Ok(WeightVector::new(out))
}

/// Move toward `best`: `best - A * |C * best - current|` with `C = 2r` and
/// `A = 2ar - a`, coordinate-wise.
pub fn shrink_encircle(current: &WeightVector, best: &WeightVector, draws: &WoaStepDraws) -> WeightVector {
    let a = draws.a;
    let out = current
        .as_slice()
        .iter()
        .zip(best.as_slice())
        .zip(&draws.r)
        .map(|((&x, &bst), &r)| {
            let c = 2.0 * r;
            let big_a = 2.0 * a * r - a;
            let d = (c * bst - x).abs();
            bst - big_a * d
        })
        .collect();
    WeightVector::new(out)
}

/// Logarithmic spiral around `best`: `(best - current) * e^(bl) * cos(2πl) + best`.
pub fn spiral_update(current: &WeightVector, best: &WeightVector, b: f64, l: f64) -> WeightVector {
    spiral_with(current, best, b, l, false)
}

fn spiral_with(current: &WeightVector, best: &WeightVector, b: f64, l: f64, abs_distance: bool) -> WeightVector {
    let factor = (b * l).exp() * (2.0 * std::f64::consts::PI * l).cos();
    let out = current
        .as_slice()
        .iter()
        .zip(best.as_slice())
        .map(|(&x, &bst)| {
            let d = if abs_distance { (bst - x).abs() } else { bst - x };
            d * factor + bst
        })
        .collect();
    WeightVector::new(out)
}

fn project_nonneg(w: &mut WeightVector) {
    w.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
}

fn draw_seed(config: &WoaConfig, t: usize, i: usize) -> u64 {
    derive_seed(config.seed, &["woa".into(), t.into(), i.into()])
}

/// Result of one optimization iteration.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub population: Population,
    pub branches: Vec<Branch>,
}

/// Move every individual once around `leader` and re-score the population.
pub fn woa_step<N: LocalNode>(
    population: &Population,
    leader: &WeightVector,
    nodes: &[N],
    t: usize,
    config: &WoaConfig,
    ledger: &mut RoundLedger,
) -> Result<StepOutcome> {
    if population.individuals.len() != nodes.len() {
        return Err(Error::validation(format!(
            "population of {} for {} nodes",
            population.individuals.len(),
            nodes.len()
        )));
    }
    let a = config.a_at(t);
    let moved = population
        .individuals
        .par_iter()
        .enumerate()
        .map(|(i, current)| {
            let mut rng = rng_from_seed(draw_seed(config, t, i));
            let draws = WoaStepDraws::draw(&mut rng, a, current.len());
            let branch = draws.branch();
            let mut next = match branch {
                Branch::Encircle => shrink_encircle(current, leader, &draws),
                Branch::Spiral => spiral_with(current, leader, config.b, draws.l, config.spiral_abs_distance),
                Branch::Explore => {
                    let seed = derive_seed(config.seed, &["explore".into(), t.into(), i.into()]);
                    nodes[i].local_train(current, config.local_epochs_per_update, seed)?
                }
            };
            if config.nonneg_projection {
                project_nonneg(&mut next);
            }
            Ok((next, branch))
        })
        .collect::<Result<Vec<_>>>()?;
    let (individuals, branches): (Vec<_>, Vec<_>) = moved.into_iter().unzip();
    let explored = branches.iter().filter(|&&b| b == Branch::Explore).count() as u64;
    ledger.model_sends += explored;
    ledger.model_receives += explored;
    let population = Population::evaluate(individuals, nodes, config.loss_weighting, ledger)?;
    Ok(StepOutcome { population, branches })
}

/// Everything recorded by one optimization run on a cluster.
#[derive(Debug, Clone)]
pub struct WoaOutcome {
    /// All-time best vector.
    pub best: WeightVector,
    pub best_fitness: f64,
    /// Iteration (0 = initial population) at which `best` was found.
    pub best_iteration: usize,
    /// All-time best fitness after initialization and after each iteration.
    pub history: Vec<f64>,
    /// Fitness of every individual, per iteration including the initial one.
    pub population_fitness: Vec<Vec<f64>>,
    pub diversity: Vec<f64>,
    pub branches: Vec<Vec<Branch>>,
    /// Locally trained starting models, one per node.
    pub initial: Vec<WeightVector>,
}

/// Train one model per node from `start`, then run `config.iterations`
/// optimization steps led by the all-time best individual.
pub fn fedwoa<N: LocalNode>(
    nodes: &[N],
    start: &WeightVector,
    initial_epochs: usize,
    config: &WoaConfig,
    ledger: &mut RoundLedger,
) -> Result<WoaOutcome> {
    if nodes.is_empty() {
        return Err(Error::config("clustering", "cannot optimize an empty cluster"));
    }
    let initial = nodes
        .par_iter()
        .enumerate()
        .map(|(i, node)| {
            let seed = derive_seed(config.seed, &["init".into(), i.into()]);
            let mut w = node.local_train(start, initial_epochs, seed)?;
            if config.nonneg_projection {
                project_nonneg(&mut w);
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    ledger.model_receives += nodes.len() as u64;

    let mut population = Population::evaluate(initial.clone(), nodes, config.loss_weighting, ledger)?;
    let (b, f) = population.best();
    let (mut best, mut best_fitness, mut best_iteration) = (b.clone(), f, 0);
    let mut history = vec![best_fitness];
    let mut population_fitness = vec![population.fitness.clone()];
    let mut div = vec![diversity(&population.individuals)];
    let mut branches = Vec::with_capacity(config.iterations);

    for t in 0..config.iterations {
        let step = woa_step(&population, &best, nodes, t, config, ledger)?;
        population = step.population;
        let (b, f) = population.best();
        if f < best_fitness {
            best = b.clone();
            best_fitness = f;
            best_iteration = t + 1;
        }
        history.push(best_fitness);
        population_fitness.push(population.fitness.clone());
        div.push(diversity(&population.individuals));
        branches.push(step.branches);
    }

    Ok(WoaOutcome {
        best,
        best_fitness,
        best_iteration,
        history,
        population_fitness,
        diversity: div,
        branches,
        initial,
    })
}

/// FedAVG schedule for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedAvgConfig {
    pub rounds: usize,
    pub local_epochs: usize,
}

impl Default for FedAvgConfig {
    fn default() -> Self {
        Self { rounds: 50, local_epochs: 1 }
    }
}

impl FedAvgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::config("fedavg.local_epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Rounds of local training from the shared global weights followed by a
/// sample-weighted average. Returns the final global weights and the global
/// training loss after each round.
pub fn run_fedavg<N: LocalNode>(
    nodes: &[N],
    start: &WeightVector,
    config: &FedAvgConfig,
    seed: u64,
    weighting: LossWeighting,
    ledger: &mut RoundLedger,
) -> Result<(WeightVector, Vec<f64>)> {
    if nodes.is_empty() {
        return Err(Error::config("clustering", "cannot aggregate an empty cluster"));
    }
    let counts: Vec<usize> = nodes.iter().map(|n| n.sample_count()).collect();
    let mut global = start.clone();
    let mut history = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let locals = nodes
            .par_iter()
            .enumerate()
            .map(|(i, node)| {
                let s = derive_seed(seed, &["fedavg".into(), round.into(), i.into()]);
                node.local_train(&global, config.local_epochs, s)
            })
            .collect::<Result<Vec<_>>>()?;
        ledger.model_sends += nodes.len() as u64;
        ledger.model_receives += nodes.len() as u64;
        global = fedavg_aggregate(&locals, &counts)?;
        history.push(cluster_loss(&global, nodes, weighting)?);
    }
    Ok((global, history))
}

/// Replace the node's model with `best` when it does at least as well on
/// `split`. Returns whether the node adopted it.
pub fn apply_if_better<N: LocalNode>(node: &mut N, best: &WeightVector, split: Split) -> Result<bool> {
    let candidate = node.local_loss(best, split)?;
    let current = node.local_loss(node.weights(), split)?;
    let adopt = candidate <= current;
    if adopt {
        node.set_weights(best.clone());
    }
    Ok(adopt)
}
