use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedwoa_core::config::{DataSource, ExperimentConfig};
use fedwoa_core::data::{synthesize_pv, write_csv, SyntheticPvConfig};
use fedwoa_core::metrics::{EvalReport, Improvement};
use fedwoa_core::orchestrator::{run_experiment, write_results, ExperimentReport};
use fedwoa_core::Error;

/// Federated LSTM forecasting simulator comparing whale-optimization
/// aggregation with FedAVG.
///
/// Any config field can be overridden with a `--key=value` flag using its
/// dotted path, such as `--woa.iterations=5` or `--strategy=fedavg`.
#[derive(Debug, Parser)]
#[command(name = "fedwoa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its results directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write synthetic PV series in the ingestion CSV format.
    Synth {
        /// Experiment config whose `data.synthetic` section is used; defaults
        /// apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Generator seed (overrides `data.synthetic.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config and print every resolved setting.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Flags clap itself handles in `--flag=value` form.
const OWN_FLAGS: [&str; 3] = ["config", "out", "seed"];

/// Split `--key=value` config overrides from the arguments clap should see.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        let pair = arg
            .strip_prefix("--")
            .and_then(|s| s.split_once('='))
            .filter(|(key, _)| !OWN_FLAGS.contains(key));
        match pair {
            Some((key, value)) => overrides.push((key.to_string(), value.to_string())),
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("FEDWOA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config("FEDWOA_THREADS", format!("`{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))
}

fn with_seed(mut overrides: Vec<(String, String)>, key: &str, seed: Option<u64>) -> Vec<(String, String)> {
    if let Some(s) = seed {
        overrides.push((key.to_string(), s.to_string()));
    }
    overrides
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "-".into())
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<8} {:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "cluster", "strategy", "mse_train", "mse_val", "mse_test", "mae_train", "mae_val", "mae_test"
    );
    let row = |c: usize, name: &str, r: &EvalReport| {
        println!(
            "{:<8} {:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            c,
            name,
            fmt(r.mse_train),
            fmt(r.mse_val),
            fmt(r.mse_test),
            fmt(r.mae_train),
            fmt(r.mae_val),
            fmt(r.mae_test)
        );
    };
    for cluster in &report.clusters {
        if let Some(w) = &cluster.fedwoa {
            row(cluster.cluster, "fedwoa", &w.mean);
        }
        if let Some(a) = &cluster.fedavg {
            row(cluster.cluster, "fedavg", &a.mean);
        }
    }
    let with_improvement: Vec<_> = report.clusters.iter().filter(|c| c.improvement.is_some()).collect();
    if with_improvement.is_empty() {
        return;
    }
    println!();
    println!("{:<8} {:<10} {:>14} {:>14}", "cluster", "metric", "ratio(avg/woa)", "reduction");
    for cluster in with_improvement {
        let table = cluster.improvement.as_ref().expect("filtered");
        for metric in ["mse_val", "mse_test", "mae_val", "mae_test"] {
            if let Some(Improvement { ratio_percent, reduction_percent }) = table.get(metric) {
                println!(
                    "{:<8} {:<10} {:>14} {:>14}",
                    cluster.cluster,
                    metric,
                    fmt_pct(*ratio_percent),
                    fmt_pct(*reduction_percent)
                );
            }
        }
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, overrides: Vec<(String, String)>) -> Result<(), Error> {
    let mut config = ExperimentConfig::load(config, &with_seed(overrides, "seed", seed))?;
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    let output = run_experiment(&config)?;
    write_results(&output, &config.output_dir)?;
    print_summary(&output.report);
    println!();
    println!("results written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_synth(config: Option<PathBuf>, out: &Path, seed: Option<u64>, overrides: Vec<(String, String)>) -> Result<(), Error> {
    let overrides = with_seed(overrides, "data.synthetic.seed", seed);
    let synthetic = match config {
        Some(path) => match ExperimentConfig::load(&path, &overrides)?.data {
            DataSource::Synthetic(s) => s,
            DataSource::Csv(_) => return Err(Error::config("data", "synth needs a `synthetic` data source")),
        },
        None => {
            let doc = r#"{"data": {"synthetic": {}}}"#;
            match ExperimentConfig::from_json_str(doc, &overrides)?.data {
                DataSource::Synthetic(s) => s,
                DataSource::Csv(_) => SyntheticPvConfig::default(),
            }
        }
    };
    let series = synthesize_pv(&synthetic)?;
    let file = File::create(out).map_err(|e| Error::Io { path: out.to_path_buf(), source: e })?;
    write_csv(BufWriter::new(file), &series)?;
    println!("wrote {} series to {}", series.len(), out.display());
    Ok(())
}

fn cmd_validate(config: &Path, seed: Option<u64>, overrides: Vec<(String, String)>) -> Result<(), Error> {
    let config = ExperimentConfig::load(config, &with_seed(overrides, "seed", seed))?;
    println!("config is valid; resolved settings:");
    for (key, value) in config.resolved() {
        println!("  {key} = {value}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, out, seed } => cmd_run(&config, out, seed, overrides),
        Command::Synth { config, out, seed } => cmd_synth(config, &out, seed, overrides),
        Command::Validate { config, seed } => cmd_validate(&config, seed, overrides),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_flags_become_overrides() {
        let args = ["fedwoa", "run", "--config", "c.json", "--woa.iterations=4", "--seed=3", "--strategy=fedavg"]
            .map(String::from)
            .to_vec();
        let (rest, o) = split_overrides(args);
        assert_eq!(rest, ["fedwoa", "run", "--config", "c.json", "--seed=3"]);
        assert_eq!(
            o,
            [
                ("woa.iterations".to_string(), "4".to_string()),
                ("strategy".to_string(), "fedavg".to_string())
            ]
        );
    }
}
