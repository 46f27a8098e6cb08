//! End-to-end experiment: build nodes, cluster them, run FedWOA and FedAVG
//! per cluster, apply model adoption and collect every result.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::aggregation::RoundLedger;
use crate::aggregation::{apply_if_better, fedwoa, run_fedavg, Branch, LocalNode, WoaOutcome};
use crate::clustering::{extract_features, kmeans, pca_project, write_projection_csv, ClusterAssignment, Projection};
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{ingest_csv, normalize, partition_cluster_data, synthesize_pv, EnergySeries, NodeDataset, Sample, Split};
use crate::error::{Error, Result};
use crate::localmodel::{init_weights, loss, predict, train_on_node, NetworkArchitecture, TrainConfig, WeightVector};
use crate::metrics::{convergence_rate, evaluate, EvalReport, FitnessHistory, Improvement};
use crate::seed::derive_seed;

/// One simulated node. Its windows are reachable only through its own
/// methods.
#[derive(Debug, Clone)]
pub struct NodeHandle {
    node_id: String,
    dataset: NodeDataset,
    current_weights: WeightVector,
    rng_seed: u64,
    arch: NetworkArchitecture,
    train: TrainConfig,
}

impl NodeHandle {
    pub fn new(
        dataset: NodeDataset,
        weights: WeightVector,
        rng_seed: u64,
        arch: NetworkArchitecture,
        train: TrainConfig,
    ) -> Result<Self> {
        weights.check_len(&arch)?;
        Ok(Self { node_id: dataset.node_id.clone(), dataset, current_weights: weights, rng_seed, arch, train })
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn window_count(&self, split: Split) -> usize {
        self.dataset.count(split)
    }

    /// Node-local error report for `weights`.
    pub fn evaluate(&self, weights: &WeightVector) -> EvalReport {
        evaluate(weights, &self.arch, &self.dataset)
    }

    /// Actual and predicted values for every window of a split.
    pub fn forecasts(&self, weights: &WeightVector, split: Split) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.dataset
            .windows(split)
            .iter()
            .map(|w| (w.target().to_vec(), predict(weights, &self.arch, w.input())))
            .collect()
    }
}

impl LocalNode for NodeHandle {
    fn node_id(&self) -> &str {
        &self.node_id
    }

    fn sample_count(&self) -> usize {
        self.dataset.count(Split::Train)
    }

    fn local_loss(&self, weights: &WeightVector, split: Split) -> Result<f64> {
        loss(weights, &self.arch, &self.dataset.windows(split))
    }

    fn local_train(&self, weights: &WeightVector, epochs: usize, seed: u64) -> Result<WeightVector> {
        let config = TrainConfig { epochs, seed: derive_seed(self.rng_seed, &[seed.into()]), ..self.train };
        train_on_node(weights, &self.arch, &self.dataset.windows(Split::Train), &config).map(|(w, _)| w)
    }

    fn weights(&self) -> &WeightVector {
        &self.current_weights
    }

    fn set_weights(&mut self, weights: WeightVector) {
        self.current_weights = weights;
    }
}

/// Communication budget of one optimization iteration on a cluster of `n`.
pub fn expected_rounds(n: usize) -> u64 {
    (n as u64).pow(2)
}

/// FedAVG from `start` on the given nodes. Returns the final global weights
/// and the global training loss after each round.
pub fn run_fedavg_baseline(
    nodes: &[NodeHandle],
    start: &WeightVector,
    config: &crate::aggregation::FedAvgConfig,
    seed: u64,
    ledger: &mut RoundLedger,
) -> Result<(WeightVector, Vec<f64>)> {
    run_fedavg(nodes, start, config, seed, crate::aggregation::LossWeighting::SampleCount, ledger)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BranchCounts {
    pub encircle: usize,
    pub explore: usize,
    pub spiral: usize,
}

impl BranchCounts {
    fn tally(branches: &[Vec<Branch>]) -> Self {
        let mut c = Self::default();
        for b in branches.iter().flatten() {
            match b {
                Branch::Encircle => c.encircle += 1,
                Branch::Explore => c.explore += 1,
                Branch::Spiral => c.spiral += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoaReport {
    pub best_fitness: f64,
    /// 0 when the best model is one of the initially trained ones.
    pub best_iteration: usize,
    pub fitness: FitnessHistory,
    pub convergence_rate: Vec<f64>,
    pub diversity: Vec<f64>,
    pub population_fitness: Vec<Vec<f64>>,
    pub branches: BranchCounts,
    /// Whether each node took the cluster best over its own model.
    pub adopted: BTreeMap<String, bool>,
    pub ledger: RoundLedger,
    /// Model sends per fitness evaluation of the population.
    pub sends_per_iteration: f64,
    /// `sends_per_iteration` over the n² budget.
    pub budget_ratio: f64,
    pub eval: BTreeMap<String, EvalReport>,
    pub mean: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedAvgReport {
    pub loss_history: Vec<f64>,
    pub ledger: RoundLedger,
    pub eval: BTreeMap<String, EvalReport>,
    pub mean: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub members: Vec<String>,
    pub expected_rounds: u64,
    pub fedwoa: Option<WoaReport>,
    pub fedavg: Option<FedAvgReport>,
    /// FedAVG versus FedWOA on cluster means, keyed by metric name.
    pub improvement: Option<BTreeMap<String, Improvement>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSeeds {
    pub init_weights: u64,
    pub fedwoa: u64,
    pub fedavg: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub master: u64,
    pub clustering: u64,
    pub nodes: BTreeMap<String, u64>,
    pub clusters: BTreeMap<usize, ClusterSeeds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: String,
    pub cluster: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seeds: SeedReport,
    pub param_count: usize,
    pub assignment: ClusterAssignment,
    pub nodes: Vec<NodeSummary>,
    pub clusters: Vec<ClusterReport>,
}

/// Test-split forecasts of one node under each strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeForecasts {
    pub actual: Vec<Vec<f64>>,
    pub fedwoa: Option<Vec<Vec<f64>>>,
    pub fedavg: Option<Vec<Vec<f64>>>,
}

/// Report plus the artifacts that go next to it.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub fedwoa_best: BTreeMap<usize, WeightVector>,
    pub fedavg_global: BTreeMap<usize, WeightVector>,
    pub forecasts: BTreeMap<String, NodeForecasts>,
    pub projection: Option<Vec<Projection>>,
}

fn load_series(config: &ExperimentConfig) -> Result<Vec<EnergySeries>> {
    let series = match &config.data {
        DataSource::Synthetic(s) => synthesize_pv(s)?,
        DataSource::Csv(src) => ingest_csv(&src.path, &src.schema)?,
    };
    if series.is_empty() {
        return Err(Error::config("data", "no series found"));
    }
    Ok(series)
}

struct ClusterRun {
    report: ClusterReport,
    seeds: ClusterSeeds,
    summaries: Vec<NodeSummary>,
    fedwoa_best: Option<WeightVector>,
    fedavg_global: Option<WeightVector>,
    forecasts: BTreeMap<String, NodeForecasts>,
}

fn mean_of(eval: &BTreeMap<String, EvalReport>) -> EvalReport {
    EvalReport::mean(&eval.values().copied().collect::<Vec<_>>())
}

fn improvement_table(avg: &EvalReport, woa: &EvalReport) -> BTreeMap<String, Improvement> {
    let mut out = BTreeMap::new();
    for split in Split::ALL {
        let pairs = [("mse", avg.mse(split), woa.mse(split)), ("mae", avg.mae(split), woa.mae(split))];
        for (metric, a, w) in pairs {
            if let (Some(a), Some(w)) = (a, w) {
                out.insert(format!("{metric}_{}", split.name()), Improvement::between(a, w));
            }
        }
    }
    out
}

fn run_cluster(
    cluster: usize,
    members: &[String],
    normalized: &BTreeMap<String, EnergySeries>,
    config: &ExperimentConfig,
) -> Result<ClusterRun> {
    let series: BTreeMap<String, EnergySeries> =
        members.iter().map(|id| (id.clone(), normalized[id].clone())).collect();
    let ratios = config.ratios.as_ref().map(|r| {
        members.iter().filter_map(|id| r.get(id).map(|v| (id.clone(), *v))).collect::<BTreeMap<_, _>>()
    });
    let datasets = partition_cluster_data(
        &series,
        ratios.as_ref(),
        config.windowing.seq_len,
        config.windowing.lead,
        &config.split,
    )?;
    for ds in datasets.values() {
        for split in [Split::Train, config.adoption_split] {
            if ds.count(split) == 0 {
                return Err(Error::config(
                    format!("clusters.{cluster}"),
                    format!("node {} has no usable {} windows", ds.node_id, split.name()),
                ));
            }
        }
    }

    let arch = config.model;
    let seeds = ClusterSeeds {
        init_weights: derive_seed(config.seed, &["init_weights".into(), cluster.into()]),
        fedwoa: derive_seed(config.seed, &["woa".into(), cluster.into()]),
        fedavg: derive_seed(config.seed, &["fedavg".into(), cluster.into()]),
    };
    let start = init_weights(&arch, seeds.init_weights);
    let mut nodes = datasets
        .into_values()
        .map(|ds| {
            let rng_seed = derive_seed(config.seed, &[(&ds.node_id).into()]);
            NodeHandle::new(ds, start.clone(), rng_seed, arch, config.train)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = nodes
        .iter()
        .map(|n| NodeSummary {
            node_id: n.node_id.clone(),
            cluster,
            train_windows: n.window_count(Split::Train),
            val_windows: n.window_count(Split::Val),
            test_windows: n.window_count(Split::Test),
        })
        .collect();

    let n = nodes.len();
    let mut forecasts: BTreeMap<String, NodeForecasts> = nodes
        .iter()
        .map(|node| {
            let actual = node.forecasts(&start, Split::Test).into_iter().map(|(a, _)| a).collect();
            (node.node_id.clone(), NodeForecasts { actual, fedwoa: None, fedavg: None })
        })
        .collect();

    let mut woa_report = None;
    let mut fedwoa_best = None;
    if config.strategy.runs_fedwoa() {
        let woa_config = crate::aggregation::WoaConfig { seed: seeds.fedwoa, ..config.woa };
        let mut ledger = RoundLedger::default();
        let outcome: WoaOutcome = fedwoa(&nodes, &start, config.train.epochs, &woa_config, &mut ledger)?;
        let mut adopted = BTreeMap::new();
        for (node, local) in nodes.iter_mut().zip(&outcome.initial) {
            node.set_weights(local.clone());
            let took = apply_if_better(node, &outcome.best, config.adoption_split)?;
            adopted.insert(node.node_id.clone(), took);
        }
        let eval: BTreeMap<String, EvalReport> =
            nodes.par_iter().map(|node| (node.node_id.clone(), node.evaluate(node.weights()))).collect();
        for node in &nodes {
            let preds = node.forecasts(node.weights(), Split::Test).into_iter().map(|(_, p)| p).collect();
            forecasts.get_mut(&node.node_id).expect("forecast entry").fedwoa = Some(preds);
        }
        let history = FitnessHistory::new(outcome.history.clone());
        let t_total = woa_config.iterations;
        let evaluations = (t_total + 1) as f64;
        let sends_per_iteration = ledger.model_sends as f64 / evaluations;
        woa_report = Some(WoaReport {
            best_fitness: outcome.best_fitness,
            best_iteration: outcome.best_iteration,
            convergence_rate: (0..history.values.len())
                .map(|t| convergence_rate(&history, t, t_total.max(1)))
                .collect(),
            fitness: history,
            diversity: outcome.diversity.clone(),
            population_fitness: outcome.population_fitness.clone(),
            branches: BranchCounts::tally(&outcome.branches),
            adopted,
            ledger,
            sends_per_iteration,
            budget_ratio: sends_per_iteration / expected_rounds(n) as f64,
            mean: mean_of(&eval),
            eval,
        });
        fedwoa_best = Some(outcome.best);
    }

    let mut avg_report = None;
    let mut fedavg_global = None;
    if config.strategy.runs_fedavg() {
        let mut ledger = RoundLedger::default();
        let (global, loss_history) = run_fedavg(
            &nodes,
            &start,
            &config.fedavg,
            seeds.fedavg,
            config.woa.loss_weighting,
            &mut ledger,
        )?;
        let eval: BTreeMap<String, EvalReport> =
            nodes.par_iter().map(|node| (node.node_id.clone(), node.evaluate(&global))).collect();
        for node in &nodes {
            let preds = node.forecasts(&global, Split::Test).into_iter().map(|(_, p)| p).collect();
            forecasts.get_mut(&node.node_id).expect("forecast entry").fedavg = Some(preds);
        }
        avg_report = Some(FedAvgReport { loss_history, ledger, mean: mean_of(&eval), eval });
        fedavg_global = Some(global);
    }

    let improvement = match (&avg_report, &woa_report) {
        (Some(a), Some(w)) => Some(improvement_table(&a.mean, &w.mean)),
        _ => None,
    };
    Ok(ClusterRun {
        report: ClusterReport {
            cluster,
            members: members.to_vec(),
            expected_rounds: expected_rounds(n),
            fedwoa: woa_report,
            fedavg: avg_report,
            improvement,
        },
        seeds,
        summaries,
        fedwoa_best,
        fedavg_global,
        forecasts,
    })
}

/// Run the whole pipeline. Deterministic for a fixed config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let raw = load_series(config)?;
    let features = raw.iter().map(extract_features).collect::<Result<Vec<_>>>()?;
    if config.clustering.k > features.len() {
        return Err(Error::config(
            "clustering.k",
            format!("k = {} exceeds the {} available nodes", config.clustering.k, features.len()),
        ));
    }
    let clustering_seed = config.clustering.seed.unwrap_or_else(|| derive_seed(config.seed, &["clustering".into()]));
    let assignment = kmeans(&features, config.clustering.k, clustering_seed, config.clustering.max_iter)?;
    let projection = if features.len() >= 2 { Some(pca_project(&features)?) } else { None };

    let normalized: BTreeMap<String, EnergySeries> =
        raw.iter().map(|s| (s.pod_id.clone(), normalize(s, config.normalization))).collect();
    if let Some(ratios) = &config.ratios {
        if let Some(id) = normalized.keys().find(|id| !ratios.contains_key(*id)) {
            return Err(Error::config(format!("ratios.{id}"), "missing ratio for node"));
        }
    }

    let runs = assignment
        .members
        .par_iter()
        .map(|(&c, members)| run_cluster(c, members, &normalized, config))
        .collect::<Result<Vec<_>>>()?;

    let mut seeds = SeedReport {
        master: config.seed,
        clustering: clustering_seed,
        nodes: normalized.keys().map(|id| (id.clone(), derive_seed(config.seed, &[id.into()]))).collect(),
        clusters: BTreeMap::new(),
    };
    let mut output = ExperimentOutput {
        report: ExperimentReport {
            config: config.clone(),
            seeds: seeds.clone(),
            param_count: config.model.param_count(),
            assignment: assignment.clone(),
            nodes: Vec::new(),
            clusters: Vec::new(),
        },
        fedwoa_best: BTreeMap::new(),
        fedavg_global: BTreeMap::new(),
        forecasts: BTreeMap::new(),
        projection,
    };
    for run in runs {
        let c = run.report.cluster;
        seeds.clusters.insert(c, run.seeds);
        output.report.nodes.extend(run.summaries);
        output.report.clusters.push(run.report);
        if let Some(w) = run.fedwoa_best {
            output.fedwoa_best.insert(c, w);
        }
        if let Some(w) = run.fedavg_global {
            output.fedavg_global.insert(c, w);
        }
        output.forecasts.extend(run.forecasts);
    }
    output.report.nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    output.report.seeds = seeds;
    Ok(output)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_eval_csv(dir: &Path, name: &str, eval: &BTreeMap<String, EvalReport>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record(["node_id", "mse_train", "mse_val", "mse_test", "mae_train", "mae_val", "mae_test"])
        .map_err(csv_err)?;
    for (id, r) in eval {
        w.write_record([
            id.clone(),
            opt(r.mse_train),
            opt(r.mse_val),
            opt(r.mse_test),
            opt(r.mae_train),
            opt(r.mae_val),
            opt(r.mae_test),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(name), e))
}

/// Write `report.json` and the per-cluster CSV and checkpoint files.
pub fn write_results(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &output.report;
    let arch = &report.config.model;

    let mut f = create(dir, "report.json")?;
    serde_json::to_writer_pretty(&mut f, report).map_err(|e| Error::Serialization(e.to_string()))?;
    f.write_all(b"\n").and_then(|_| f.flush()).map_err(|e| Error::io(dir.join("report.json"), e))?;

    for cluster in &report.clusters {
        let c = cluster.cluster;
        if let Some(woa) = &cluster.fedwoa {
            let mut w = csv::Writer::from_writer(create(dir, &format!("fitness_{c}.csv"))?);
            w.write_record(["iteration", "best_fitness", "convergence_rate"]).map_err(csv_err)?;
            for (t, (f, r)) in woa.fitness.values.iter().zip(&woa.convergence_rate).enumerate() {
                w.write_record([t.to_string(), f.to_string(), r.to_string()]).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;

            let mut w = csv::Writer::from_writer(create(dir, &format!("diversity_{c}.csv"))?);
            w.write_record(["iteration", "diversity"]).map_err(csv_err)?;
            for (t, d) in woa.diversity.iter().enumerate() {
                w.write_record([t.to_string(), d.to_string()]).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;

            let mut w = csv::Writer::from_writer(create(dir, &format!("population_fitness_{c}.csv"))?);
            w.write_record(["iteration", "node_id", "fitness"]).map_err(csv_err)?;
            for (t, row) in woa.population_fitness.iter().enumerate() {
                for (id, f) in cluster.members.iter().zip(row) {
                    w.write_record([t.to_string(), id.clone(), f.to_string()]).map_err(csv_err)?;
                }
            }
            w.flush().map_err(|e| Error::io(dir, e))?;

            write_eval_csv(dir, &format!("eval_fedwoa_{c}.csv"), &woa.eval)?;
        }
        if let Some(avg) = &cluster.fedavg {
            let mut w = csv::Writer::from_writer(create(dir, &format!("fedavg_loss_{c}.csv"))?);
            w.write_record(["round", "global_loss"]).map_err(csv_err)?;
            for (r, l) in avg.loss_history.iter().enumerate() {
                w.write_record([(r + 1).to_string(), l.to_string()]).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io(dir, e))?;
            write_eval_csv(dir, &format!("eval_fedavg_{c}.csv"), &avg.eval)?;
        }
    }

    for (c, w) in &output.fedwoa_best {
        let mut f = create(dir, &format!("wbest_{c}.bin"))?;
        w.write_to(arch, &mut f)?;
    }
    for (c, w) in &output.fedavg_global {
        let mut f = create(dir, &format!("fedavg_global_{c}.bin"))?;
        w.write_to(arch, &mut f)?;
    }

    for (id, fc) in &output.forecasts {
        let mut w = csv::Writer::from_writer(create(dir, &format!("predictions_{id}.csv"))?);
        let mut header = vec!["window", "step", "actual"];
        if fc.fedwoa.is_some() {
            header.push("fedwoa");
        }
        if fc.fedavg.is_some() {
            header.push("fedavg");
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, actual) in fc.actual.iter().enumerate() {
            for (s, a) in actual.iter().enumerate() {
                let mut row = vec![i.to_string(), s.to_string(), a.to_string()];
                for preds in [&fc.fedwoa, &fc.fedavg].into_iter().flatten() {
                    row.push(preds[i][s].to_string());
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
    }

    if let Some(p) = &output.projection {
        write_projection_csv(create(dir, "pca_projection.csv")?, p, &report.assignment)?;
    }
    Ok(())
}
