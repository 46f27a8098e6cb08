//! Experiment configuration: JSON file plus dotted `key=value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{FedAvgConfig, WoaConfig};
use crate::data::{CsvSchema, Normalization, Split, SplitFractions, SyntheticPvConfig};
use crate::error::{Error, Result};
use crate::localmodel::{NetworkArchitecture, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticPvConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowingConfig {
    pub seq_len: usize,
    /// Forecast horizon in readings.
    pub lead: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self { seq_len: 24, lead: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    pub k: usize,
    /// Derived from the master seed when absent.
    pub seed: Option<u64>,
    pub max_iter: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k: 3, seed: None, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Fedwoa,
    Fedavg,
    #[default]
    Both,
}

impl Strategy {
    pub fn runs_fedwoa(self) -> bool {
        matches!(self, Strategy::Fedwoa | Strategy::Both)
    }

    pub fn runs_fedavg(self) -> bool {
        matches!(self, Strategy::Fedavg | Strategy::Both)
    }
}

fn default_adoption_split() -> Split {
    Split::Val
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub windowing: WindowingConfig,
    #[serde(default)]
    pub split: SplitFractions,
    /// Per-node share of its cluster's data set; proportional to each node's
    /// own window count when absent.
    #[serde(default)]
    pub ratios: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub model: NetworkArchitecture,
    /// `train.epochs` is the local budget that builds the initial population.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub woa: WoaConfig,
    #[serde(default)]
    pub fedavg: FedAvgConfig,
    /// Split on which a node compares its own model with the cluster best.
    #[serde(default = "default_adoption_split")]
    pub adoption_split: Split,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Config with every default and the given data source.
    pub fn with_data(data: DataSource) -> Self {
        Self {
            data,
            normalization: Normalization::default(),
            windowing: WindowingConfig::default(),
            split: SplitFractions::default(),
            ratios: None,
            clustering: ClusteringConfig::default(),
            model: NetworkArchitecture::default(),
            train: TrainConfig::default(),
            woa: WoaConfig::default(),
            fedavg: FedAvgConfig::default(),
            adoption_split: default_adoption_split(),
            strategy: Strategy::default(),
            seed: default_seed(),
            output_dir: default_output_dir(),
        }
    }

    /// Parse a JSON document, apply `key=value` overrides, and validate.
    pub fn from_json_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", format!("invalid JSON: {e}")))?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        let config: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file. A relative CSV path is resolved against the
    /// file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text, overrides)?;
        if let DataSource::Csv(src) = &mut config.data {
            if src.path.is_relative() {
                if let Some(dir) = path.parent() {
                    src.path = dir.join(&src.path);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
            if self.clustering.k > s.n_nodes {
                return Err(Error::config(
                    "clustering.k",
                    format!("k = {} exceeds the {} available nodes", self.clustering.k, s.n_nodes),
                ));
            }
        }
        if self.windowing.seq_len == 0 {
            return Err(Error::config("windowing.seq_len", "must be at least 1"));
        }
        if self.windowing.lead == 0 {
            return Err(Error::config("windowing.lead", "must be at least 1"));
        }
        if self.windowing.lead != self.model.output_size {
            return Err(Error::config(
                "model.output_size",
                format!("must equal windowing.lead ({})", self.windowing.lead),
            ));
        }
        self.split.validate()?;
        if let Some(ratios) = &self.ratios {
            if let Some((id, r)) = ratios.iter().find(|(_, r)| !(**r > 0.0) || !r.is_finite()) {
                return Err(Error::config(format!("ratios.{id}"), format!("ratio {r} must be positive")));
            }
        }
        if self.clustering.k == 0 {
            return Err(Error::config("clustering.k", "must be at least 1"));
        }
        if self.clustering.max_iter == 0 {
            return Err(Error::config("clustering.max_iter", "must be at least 1"));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.woa.validate()?;
        self.fedavg.validate()?;
        if self.adoption_split == Split::Test {
            return Err(Error::config("adoption_split", "must be train or val"));
        }
        Ok(())
    }

    /// Every setting as `dotted.key = value`, in key order.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        flatten_value("", &value, &mut out);
        out
    }
}

fn flatten_value(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_value(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Set `dotted.key` in a JSON tree, creating objects on the way. The value is
/// parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed override key"));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::config(key, "override path crosses a non-object value"));
        }
        node = node
            .as_object_mut()
            .expect("checked object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(map) => {
            map.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::config(key, "override path crosses a non-object value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"data": {"synthetic": {}}}"#;

    fn field_of(err: Error) -> String {
        match err {
            Error::Config { field, .. } => field,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = ExperimentConfig::from_json_str(MINIMAL, &[]).unwrap();
        assert_eq!(c.woa.b, 1.0);
        assert_eq!(c.woa.iterations, 10);
        assert_eq!(c.train.learning_rate, 0.0003);
        assert_eq!(c.fedavg, FedAvgConfig { rounds: 50, local_epochs: 1 });
        assert_eq!(c.adoption_split, Split::Val);
        let resolved: BTreeMap<_, _> = c.resolved().into_iter().collect();
        assert_eq!(resolved["woa.b"], "1.0");
        assert_eq!(resolved["woa.iterations"], "10");
        assert_eq!(resolved["train.learning_rate"], "0.0003");
        assert_eq!(resolved["strategy"], "\"both\"");
    }

    #[test]
    fn resolved_round_trips_into_the_same_config() {
        let c = ExperimentConfig::from_json_str(MINIMAL, &[]).unwrap();
        let echoed = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&echoed, &[]).unwrap(), c);
    }

    #[test]
    fn missing_data_source_is_rejected() {
        let err = ExperimentConfig::from_json_str("{}", &[]).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("data"));
    }

    #[test]
    fn unknown_field_is_named() {
        let err = ExperimentConfig::from_json_str(r#"{"data": {"synthetic": {}}, "woa": {"bogus": 1}}"#, &[])
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bogus"), "{text}");
        assert!(field_of(err).starts_with("woa"));
    }

    #[test]
    fn k_above_node_count_names_the_field() {
        let err = ExperimentConfig::from_json_str(
            r#"{"data": {"synthetic": {"n_nodes": 4}}, "clustering": {"k": 5}}"#,
            &[],
        )
        .unwrap_err();
        assert_eq!(field_of(err), "clustering.k");
    }

    #[test]
    fn dotted_overrides_apply_before_validation() {
        let o = vec![
            ("woa.iterations".to_string(), "3".to_string()),
            ("strategy".to_string(), "fedavg".to_string()),
            ("data.synthetic.days".to_string(), "2".to_string()),
        ];
        let c = ExperimentConfig::from_json_str(MINIMAL, &o).unwrap();
        assert_eq!(c.woa.iterations, 3);
        assert_eq!(c.strategy, Strategy::Fedavg);
        match c.data {
            DataSource::Synthetic(s) => assert_eq!(s.days, 2),
            _ => unreachable!(),
        }
        let bad = vec![("train.learning_rate".to_string(), "-1".to_string())];
        assert_eq!(field_of(ExperimentConfig::from_json_str(MINIMAL, &bad).unwrap_err()), "train.learning_rate");
    }

    #[test]
    fn type_errors_report_the_path() {
        let err = ExperimentConfig::from_json_str(r#"{"data": {"synthetic": {"days": "x"}}}"#, &[]).unwrap_err();
        assert_eq!(field_of(err), "data.synthetic.days");
    }

    #[test]
    fn lead_must_match_output_size() {
        let o = vec![("windowing.lead".to_string(), "2".to_string())];
        assert_eq!(field_of(ExperimentConfig::from_json_str(MINIMAL, &o).unwrap_err()), "model.output_size");
    }
}
