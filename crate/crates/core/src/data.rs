//! Energy time series: ingestion, synthesis, normalization, windowing and
//! per-node partitioning.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDateTime, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Sampling interval of every series, in minutes.
pub const STEP_MINUTES: i64 = 15;
/// Readings per clock hour.
pub const READINGS_PER_HOUR: usize = 4;
/// Readings per day.
pub const READINGS_PER_DAY: usize = 96;

/// First timestamp of synthetic data: 2015-01-01 00:00 UTC, in minutes.
pub const SYNTHETIC_START_MINUTES: i64 = 23_667_840;

/// One reading: minutes since the Unix epoch and the energy in kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub timestamp: i64,
    pub load: f64,
}

/// Ordered 15-minute readings of a single POD.
///
/// Timestamps are strictly increasing and aligned to the 15-minute grid.
/// Missing readings show up as gaps, which split the series into contiguous
/// segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub pod_id: String,
    points: Vec<Point>,
}

impl EnergySeries {
    pub fn new(pod_id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let pod_id = pod_id.into();
        for (i, p) in points.iter().enumerate() {
            if !(p.load >= 0.0) || !p.load.is_finite() {
                return Err(Error::validation(format!(
                    "series {pod_id}: load {} at index {i} is not a nonnegative number",
                    p.load
                )));
            }
            if p.timestamp.rem_euclid(STEP_MINUTES) != 0 {
                return Err(Error::validation(format!(
                    "series {pod_id}: timestamp {} is off the 15-minute grid",
                    format_timestamp(p.timestamp)
                )));
            }
        }
        if let Some(w) = points.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::validation(format!(
                "series {pod_id}: timestamps not strictly increasing at {}",
                format_timestamp(w[1].timestamp)
            )));
        }
        Ok(Self { pod_id, points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn loads(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.load)
    }

    /// Maximal runs of readings spaced exactly one step apart.
    pub fn segments(&self) -> Vec<&[Point]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.points.len() {
            let split = i == self.points.len()
                || self.points[i].timestamp - self.points[i - 1].timestamp != STEP_MINUTES;
            if split {
                if i > start {
                    out.push(&self.points[start..i]);
                }
                start = i;
            }
        }
        out
    }

    /// Number of gaps in the 15-minute grid.
    pub fn gap_count(&self) -> usize {
        self.segments().len().saturating_sub(1)
    }
}

/// Parse a `yyyyMMddhhmm` timestamp into minutes since the Unix epoch.
pub fn parse_timestamp(s: &str) -> std::result::Result<i64, String> {
    let s = s.trim();
    if s.len() != 12 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("timestamp `{s}` is not in yyyyMMddhhmm form"));
    }
    let dt = NaiveDateTime::parse_from_str(s, "%Y%m%d%H%M")
        .map_err(|e| format!("timestamp `{s}`: {e}"))?;
    Ok(dt.and_utc().timestamp().div_euclid(60))
}

/// Format minutes since the Unix epoch as `yyyyMMddhhmm`.
pub fn format_timestamp(minutes: i64) -> String {
    match Utc.timestamp_opt(minutes * 60, 0).single() {
        Some(dt) => dt.format("%Y%m%d%H%M").to_string(),
        None => minutes.to_string(),
    }
}

/// Column names of the ingestion CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub pod_id: String,
    pub timestamp: String,
    pub active_load: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            pod_id: "pod_id".into(),
            timestamp: "timestamp".into(),
            active_load: "active_load".into(),
        }
    }
}

/// Read series from a CSV file. See [`read_csv`].
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<EnergySeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Read series from CSV text with a header row.
///
/// Returns one series per distinct POD, ordered by POD id, each sorted by
/// timestamp. Row numbers in errors count the header as row 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<EnergySeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (pod_col, ts_col, load_col) = (
        column(&schema.pod_id)?,
        column(&schema.timestamp)?,
        column(&schema.active_load)?,
    );

    let mut by_pod: BTreeMap<String, Vec<(Point, usize)>> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let pod = field(pod_col).to_string();
        if pod.is_empty() {
            return Err(Error::Parse { row, message: "empty pod id".into() });
        }
        let timestamp =
            parse_timestamp(field(ts_col)).map_err(|message| Error::Parse { row, message })?;
        let load: f64 = field(load_col).parse().map_err(|_| Error::Parse {
            row,
            message: format!("load `{}` is not a number", field(load_col)),
        })?;
        if !(load >= 0.0) || !load.is_finite() {
            return Err(Error::validation(format!(
                "row {row}: negative or non-finite load {load} for pod {pod}"
            )));
        }
        if timestamp.rem_euclid(STEP_MINUTES) != 0 {
            return Err(Error::validation(format!(
                "row {row}: timestamp {} is off the 15-minute grid",
                field(ts_col)
            )));
        }
        by_pod.entry(pod).or_default().push((Point { timestamp, load }, row));
    }

    by_pod
        .into_iter()
        .map(|(pod, mut rows)| {
            rows.sort_by_key(|(p, _)| p.timestamp);
            if let Some(w) = rows.windows(2).find(|w| w[0].0.timestamp == w[1].0.timestamp) {
                return Err(Error::validation(format!(
                    "row {}: duplicate reading for pod {pod} at {}",
                    w[1].1.max(w[0].1),
                    format_timestamp(w[1].0.timestamp)
                )));
            }
            EnergySeries::new(pod, rows.into_iter().map(|(p, _)| p).collect())
        })
        .collect()
}

/// Write series in the ingestion CSV format (`pod_id,timestamp,active_load`).
pub fn write_csv<W: Write>(writer: W, series: &[EnergySeries]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    wtr.write_record(["pod_id", "timestamp", "active_load"]).map_err(ser)?;
    for s in series {
        for p in s.points() {
            wtr.write_record([
                s.pod_id.as_str(),
                &format_timestamp(p.timestamp),
                &p.load.to_string(),
            ])
            .map_err(ser)?;
        }
    }
    wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
}

/// Parameters of the synthetic photovoltaic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticPvConfig {
    pub n_nodes: usize,
    pub days: usize,
    /// Range of per-node installed peak power, kW.
    pub peak_kw_range: (f64, f64),
    /// Standard deviation of additive daylight noise, kWh per reading.
    pub noise_std: f64,
    /// Probability that a given day is attenuated by clouds.
    pub cloud_event_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticPvConfig {
    fn default() -> Self {
        Self {
            n_nodes: 6,
            days: 28,
            peak_kw_range: (0.5, 10.0),
            noise_std: 0.05,
            cloud_event_rate: 0.2,
            seed: 42,
        }
    }
}

impl SyntheticPvConfig {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("data.synthetic.{name}");
        if self.n_nodes == 0 {
            return Err(Error::config(f("n_nodes"), "must be at least 1"));
        }
        if self.days == 0 {
            return Err(Error::config(f("days"), "must be at least 1"));
        }
        let (lo, hi) = self.peak_kw_range;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(Error::config(
                f("peak_kw_range"),
                "requires 0 < min <= max < infinity",
            ));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::config(f("noise_std"), "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.cloud_event_rate) {
            return Err(Error::config(f("cloud_event_rate"), "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// POD id of the `index`-th synthetic node.
pub fn synthetic_pod_id(index: usize) -> String {
    format!("P_{index:06}")
}

/// Clear-sky generation shape at a minute-of-day: half sine between 06:00
/// and 18:00, peaking at solar noon.
fn clear_sky_fraction(minute_of_day: i64) -> f64 {
    const SUNRISE: f64 = 6.0 * 60.0;
    const DAYLIGHT: f64 = 12.0 * 60.0;
    let x = (minute_of_day as f64 - SUNRISE) / DAYLIGHT;
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (std::f64::consts::PI * x).sin()
    }
}

/// Generate one PV series per node.
///
/// Each node draws its peak power once, then each day draws whether a cloud
/// event attenuates it. Noise is added only to daylight readings and the
/// result is truncated at zero, so night readings are exactly 0. Each node's
/// stream is seeded from `(seed, pod_id)` and does not depend on the other
/// nodes.
pub fn synthesize_pv(config: &SyntheticPvConfig) -> Result<Vec<EnergySeries>> {
    config.validate()?;
    let (lo, hi) = config.peak_kw_range;
    let hours_per_step = STEP_MINUTES as f64 / 60.0;
    let noise = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::config("data.synthetic.noise_std", e.to_string()))?;

    (0..config.n_nodes)
        .map(|n| {
            let pod_id = synthetic_pod_id(n);
            let mut rng = rng_from_seed(derive_seed(config.seed, &["pv".into(), (&pod_id).into()]));
            let peak_kw = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let mut points = Vec::with_capacity(config.days * READINGS_PER_DAY);
            for day in 0..config.days {
                // Both draws happen every day so the stream layout is fixed.
                let cloudy = rng.gen::<f64>() < config.cloud_event_rate;
                let depth: f64 = rng.gen_range(0.2..0.8);
                let attenuation = if cloudy { 1.0 - depth } else { 1.0 };
                for slot in 0..READINGS_PER_DAY {
                    let minute = slot as i64 * STEP_MINUTES;
                    let timestamp = SYNTHETIC_START_MINUTES + day as i64 * 1440 + minute;
                    let shape = clear_sky_fraction(minute);
                    let mut load = peak_kw * hours_per_step * shape * attenuation;
                    if shape > 0.0 && config.noise_std > 0.0 {
                        load = (load + noise.sample(&mut rng)).max(0.0);
                    }
                    points.push(Point { timestamp, load });
                }
            }
            EnergySeries::new(pod_id, points)
        })
        .collect()
}

/// How readings are rescaled into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max over the four readings of each clock hour.
    #[default]
    PerHour,
    /// Min-max over the whole series of one node.
    PerNode,
}

fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = max - min;
    values
        .iter()
        .map(|&v| if span > 0.0 { ((v - min) / span).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Min-max scale each clock hour independently.
///
/// Only complete hours (readings at :00, :15, :30 and :45) are kept; partial
/// hours are dropped. A constant hour maps to all zeros.
pub fn normalize_hourly(series: &EnergySeries) -> EnergySeries {
    let mut points = Vec::with_capacity(series.len());
    let pts = series.points();
    let mut i = 0;
    while i < pts.len() {
        let hour = pts[i].timestamp.div_euclid(60);
        let mut j = i;
        while j < pts.len() && pts[j].timestamp.div_euclid(60) == hour {
            j += 1;
        }
        // On the grid, four distinct readings in one hour are exactly :00..:45.
        if j - i == READINGS_PER_HOUR {
            let loads: Vec<f64> = pts[i..j].iter().map(|p| p.load).collect();
            for (p, v) in pts[i..j].iter().zip(min_max_scale(&loads)) {
                points.push(Point { timestamp: p.timestamp, load: v });
            }
        }
        i = j;
    }
    EnergySeries { pod_id: series.pod_id.clone(), points }
}

/// Min-max scale the whole series with one (min, max) pair.
pub fn normalize_global(series: &EnergySeries) -> EnergySeries {
    let loads: Vec<f64> = series.loads().collect();
    let points = series
        .points()
        .iter()
        .zip(min_max_scale(&loads))
        .map(|(p, v)| Point { timestamp: p.timestamp, load: v })
        .collect();
    EnergySeries { pod_id: series.pod_id.clone(), points }
}

pub fn normalize(series: &EnergySeries, mode: Normalization) -> EnergySeries {
    match mode {
        Normalization::PerHour => normalize_hourly(series),
        Normalization::PerNode => normalize_global(series),
    }
}

/// Anything usable as a supervised (input, target) pair.
pub trait Sample {
    fn input(&self) -> &[f64];
    fn target(&self) -> &[f64];
}

impl<S: Sample> Sample for &S {
    fn input(&self) -> &[f64] {
        (*self).input()
    }
    fn target(&self) -> &[f64] {
        (*self).target()
    }
}

/// An owned training window.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample for Window {
    fn input(&self) -> &[f64] {
        &self.input
    }
    fn target(&self) -> &[f64] {
        &self.target
    }
}

/// A window borrowed from a [`WindowSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRef<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
}

impl Sample for WindowRef<'_> {
    fn input(&self) -> &[f64] {
        self.input
    }
    fn target(&self) -> &[f64] {
        self.target
    }
}

/// Sliding windows over a value buffer, stored as start offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    values: Vec<f64>,
    starts: Vec<usize>,
    seq_len: usize,
    lead: usize,
}

impl WindowSet {
    /// Windows of stride 1 over every contiguous segment of `series`.
    /// Windows never straddle a gap.
    pub fn from_series(series: &EnergySeries, seq_len: usize, lead: usize) -> Self {
        let span = seq_len + lead;
        let mut values = Vec::with_capacity(series.len());
        let mut starts = Vec::new();
        for seg in series.segments() {
            let base = values.len();
            values.extend(seg.iter().map(|p| p.load));
            if seg.len() >= span && span > 0 {
                starts.extend((0..=seg.len() - span).map(|i| base + i));
            }
        }
        Self { values, starts, seq_len, lead }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn lead(&self) -> usize {
        self.lead
    }

    pub fn get(&self, i: usize) -> WindowRef<'_> {
        let s = self.starts[i];
        WindowRef {
            input: &self.values[s..s + self.seq_len],
            target: &self.values[s + self.seq_len..s + self.seq_len + self.lead],
        }
    }

    pub fn slice(&self, range: Range<usize>) -> Vec<WindowRef<'_>> {
        range.map(|i| self.get(i)).collect()
    }

    /// Keep only the last `n` windows.
    fn keep_last(&mut self, n: usize) {
        let drop = self.starts.len().saturating_sub(n);
        self.starts.drain(..drop);
    }
}

/// Sliding windows of `seq_len` inputs followed by `lead` targets.
///
/// Produces `len - seq_len - lead + 1` windows per contiguous segment, or
/// none when the segment is too short.
pub fn make_windows(series: &EnergySeries, seq_len: usize, lead: usize) -> Vec<Window> {
    let set = WindowSet::from_series(series, seq_len, lead);
    (0..set.len())
        .map(|i| {
            let w = set.get(i);
            Window { input: w.input.to_vec(), target: w.target.to_vec() }
        })
        .collect()
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.train) || !ok(self.val) || !ok(self.test) || self.train <= 0.0 {
            return Err(Error::config("split", "fractions must be >= 0 with train > 0"));
        }
        if ((self.train + self.val + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must sum to 1"));
        }
        Ok(())
    }

    /// Index ranges for `n` chronologically ordered windows.
    pub fn ranges(&self, n: usize) -> SplitRanges {
        let n_train = ((n as f64) * self.train).floor() as usize;
        let n_val = (((n as f64) * self.val).floor() as usize).min(n - n_train);
        SplitRanges {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Windowed, normalized data owned by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataset {
    pub node_id: String,
    pub series: EnergySeries,
    pub windows: WindowSet,
    pub split: SplitRanges,
}

impl NodeDataset {
    pub fn windows(&self, split: Split) -> Vec<WindowRef<'_>> {
        let r = match split {
            Split::Train => self.split.train.clone(),
            Split::Val => self.split.val.clone(),
            Split::Test => self.split.test.clone(),
        };
        self.windows.slice(r)
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.split.train.len(),
            Split::Val => self.split.val.len(),
            Split::Test => self.split.test.len(),
        }
    }
}

/// Share `total` windows among nodes in proportion to their ratios.
///
/// Each node first gets `floor(total * ratio / sum)`; leftover windows are
/// handed out one at a time in node-id order, skipping nodes that already
/// reached their capacity (when `caps` is given).
pub fn allocate_windows(
    total: usize,
    ratios: &BTreeMap<String, f64>,
    caps: Option<&BTreeMap<String, usize>>,
) -> Result<BTreeMap<String, usize>> {
    if let Some((id, r)) = ratios.iter().find(|(_, r)| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::config(format!("ratios.{id}"), format!("ratio {r} must be positive")));
    }
    let sum: f64 = ratios.values().sum();
    if !(sum > 0.0) {
        return Err(Error::config("ratios", "ratio sum must be positive"));
    }
    let cap = |id: &str| caps.and_then(|c| c.get(id).copied()).unwrap_or(usize::MAX);
    let mut out: BTreeMap<String, usize> = ratios
        .iter()
        .map(|(id, r)| {
            let share = ((total as f64) * r / sum).floor() as usize;
            (id.clone(), share.min(cap(id)))
        })
        .collect();
    let mut remaining = total.saturating_sub(out.values().sum());
    while remaining > 0 {
        let before = remaining;
        for (id, n) in out.iter_mut() {
            if remaining == 0 {
                break;
            }
            if *n < cap(id) {
                *n += 1;
                remaining -= 1;
            }
        }
        if remaining == before {
            return Err(Error::config("ratios", "node capacities cannot absorb the data set"));
        }
    }
    Ok(out)
}

/// Build each node's dataset from its own normalized series.
///
/// The cluster data set size is the largest total such that every node can
/// supply its ratio share from its own windows; with ratios proportional to
/// the nodes' window counts (the default when `ratios` is `None`) every node
/// keeps all its windows. A node keeps its most recent allocated windows,
/// which are then split chronologically.
pub fn partition_cluster_data(
    series_by_node: &BTreeMap<String, EnergySeries>,
    ratios: Option<&BTreeMap<String, f64>>,
    seq_len: usize,
    lead: usize,
    fractions: &SplitFractions,
) -> Result<BTreeMap<String, NodeDataset>> {
    let mut sets: BTreeMap<String, WindowSet> = series_by_node
        .iter()
        .map(|(id, s)| (id.clone(), WindowSet::from_series(s, seq_len, lead)))
        .collect();
    let caps: BTreeMap<String, usize> = sets.iter().map(|(id, w)| (id.clone(), w.len())).collect();

    let ratios: BTreeMap<String, f64> = match ratios {
        Some(r) => {
            if let Some(id) = caps.keys().find(|id| !r.contains_key(*id)) {
                return Err(Error::config(format!("ratios.{id}"), "missing ratio for node"));
            }
            caps.keys().map(|id| (id.clone(), r[id])).collect()
        }
        None => caps.iter().map(|(id, &n)| (id.clone(), n.max(1) as f64)).collect(),
    };
    let sum: f64 = ratios.values().sum();
    let total = caps
        .iter()
        .map(|(id, &n)| {
            let exact = n as f64 * sum / ratios[id];
            // Guard against floor() landing one below an exact integer.
            (exact + exact * 1e-12).floor() as usize
        })
        .min()
        .unwrap_or(0);
    let counts = allocate_windows(total, &ratios, Some(&caps))?;

    Ok(series_by_node
        .iter()
        .map(|(id, series)| {
            let mut windows = sets.remove(id).expect("window set for every node");
            windows.keep_last(counts[id]);
            let split = fractions.ranges(windows.len());
            let ds = NodeDataset { node_id: id.clone(), series: series.clone(), windows, split };
            (id.clone(), ds)
        })
        .collect())
}
