//! Node grouping: statistical features, K-means and a 2-D PCA projection.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EnergySeries;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const FEATURE_NAMES: [&str; 7] = [
    "length",
    "min_load",
    "max_load",
    "mean_load",
    "std_load",
    "min_time",
    "max_time",
];

/// Summary statistics of one node's raw series.
///
/// Times are minutes since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub node_id: String,
    pub vector: [f64; 7],
}

impl NodeFeatures {
    pub fn length(&self) -> f64 {
        self.vector[0]
    }
    pub fn min_load(&self) -> f64 {
        self.vector[1]
    }
    pub fn max_load(&self) -> f64 {
        self.vector[2]
    }
    pub fn mean_load(&self) -> f64 {
        self.vector[3]
    }
    pub fn std_load(&self) -> f64 {
        self.vector[4]
    }
    pub fn min_time(&self) -> f64 {
        self.vector[5]
    }
    pub fn max_time(&self) -> f64 {
        self.vector[6]
    }
}

pub fn extract_features(series: &EnergySeries) -> Result<NodeFeatures> {
    let pts = series.points();
    if pts.is_empty() {
        return Err(Error::validation(format!("series {} is empty", series.pod_id)));
    }
    let n = pts.len() as f64;
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for p in pts {
        min = min.min(p.load);
        max = max.max(p.load);
        sum += p.load;
    }
    let mean = sum / n;
    let var = pts.iter().map(|p| (p.load - mean).powi(2)).sum::<f64>() / n;
    // Clamp the mean to guard the ordering invariant against rounding.
    let mean = mean.clamp(min, max);
    Ok(NodeFeatures {
        node_id: series.pod_id.clone(),
        vector: [
            n,
            min,
            max,
            mean,
            var.sqrt(),
            pts[0].timestamp as f64,
            pts[pts.len() - 1].timestamp as f64,
        ],
    })
}

/// Z-score each column; constant columns become zero.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut out = rows.to_vec();
    for d in 0..dim {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        let std = (rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let scale = mean.abs().max(1.0);
        for r in out.iter_mut() {
            // Relative threshold: a column of identical large timestamps can
            // show a rounding-level spread.
            r[d] = if std > 1e-12 * scale { (r[d] - mean) / std } else { 0.0 };
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Raw output of Lloyd's algorithm on points.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after every assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // All remaining points coincide with a centre.
            (0..points.len()).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Lloyd's algorithm with k-means++ seeding on already-scaled points.
///
/// Stops when assignments no longer change or after `max_iter` rounds.
/// An emptied cluster takes over the point farthest from its own centroid.
pub fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KmeansResult> {
    if k == 0 {
        return Err(Error::config("clustering.k", "must be at least 1"));
    }
    if k > points.len() {
        return Err(Error::config(
            "clustering.k",
            format!("k = {k} exceeds the node count {}", points.len()),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();

        // Repair empty clusters.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &next {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let donor = (0..points.len())
                .filter(|&i| counts[next[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[next[a]]);
                    let db = sq_dist(&points[b], &centroids[next[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("k <= n leaves a cluster with spare points");
            next[donor] = empty;
            centroids[empty] = points[donor].clone();
        }

        let changed = next != labels;
        labels = next;
        inertia.push(points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum());
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> =
                points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            let n = members.len() as f64;
            for (d, v) in centroid.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / n;
            }
        }
    }
    Ok(KmeansResult { labels, centroids, inertia, iterations })
}

/// Disjoint grouping of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub members: BTreeMap<usize, Vec<String>>,
    /// Centroids in standardized feature space, indexed by cluster id.
    pub centroids: Vec<Vec<f64>>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, node_id: &str) -> Option<usize> {
        self.members
            .iter()
            .find(|(_, m)| m.iter().any(|n| n == node_id))
            .map(|(&c, _)| c)
    }
}

/// K-means over z-scored features.
///
/// Cluster ids are numbered by the first member in node-id order, so the
/// labeling is canonical.
pub fn kmeans(features: &[NodeFeatures], k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    let mut sorted: Vec<&NodeFeatures> = features.iter().collect();
    sorted.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let rows: Vec<Vec<f64>> = sorted.iter().map(|f| f.vector.to_vec()).collect();
    let result = lloyd(&standardize(&rows), k, seed, max_iter)?;

    let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in &result.labels {
        let next = relabel.len();
        relabel.entry(l).or_insert(next);
    }
    let mut members: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (f, l) in sorted.iter().zip(&result.labels) {
        members.entry(relabel[l]).or_default().push(f.node_id.clone());
    }
    let mut centroids = vec![Vec::new(); k];
    for (old, new) in &relabel {
        centroids[*new] = result.centroids[*old].clone();
    }
    Ok(ClusterAssignment { k, members, centroids })
}

/// Principal components of a point cloud.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Per-dimension divisor applied after centering (1 when not standardizing).
    pub scale: Vec<f64>,
    /// Eigenvalues of the covariance matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors matching `eigenvalues`, each with its
    /// largest-magnitude loading positive.
    pub components: Vec<Vec<f64>>,
}

impl Pca {
    /// Eigen-decompose the sample covariance (n - 1 denominator).
    pub fn fit(rows: &[Vec<f64>], standardize: bool) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::validation("PCA needs at least 2 points"));
        }
        let n = rows.len();
        let dim = rows[0].len();
        let mean: Vec<f64> = (0..dim).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n as f64).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|d| {
                if !standardize {
                    return 1.0;
                }
                let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / (n - 1) as f64;
                let sd = var.sqrt();
                if sd > 1e-12 * mean[d].abs().max(1.0) {
                    sd
                } else {
                    0.0
                }
            })
            .collect();
        let x = DMatrix::from_fn(n, dim, |i, d| {
            if scale[d] == 0.0 {
                0.0
            } else {
                (rows[i][d] - mean[d]) / scale[d]
            }
        });
        let cov = (x.transpose() * &x) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let components = order
            .iter()
            .map(|&i| {
                let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                if lead < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Self { mean, scale, eigenvalues, components })
    }

    /// Centered (and scaled) coordinates of `row`.
    pub fn prepare(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| if *s == 0.0 { 0.0 } else { (x - m) / s })
            .collect()
    }

    /// Coordinates on the first `n` components.
    pub fn transform(&self, row: &[f64], n: usize) -> Vec<f64> {
        let z = self.prepare(row);
        self.components[..n]
            .iter()
            .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub node_id: String,
    pub pc1: f64,
    pub pc2: f64,
}

/// Project standardized features onto the top two principal components.
pub fn pca_project(features: &[NodeFeatures]) -> Result<Vec<Projection>> {
    if features.len() < 2 {
        return Err(Error::validation("PCA projection needs at least 2 nodes"));
    }
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.vector.to_vec()).collect();
    let pca = Pca::fit(&rows, true)?;
    Ok(features
        .iter()
        .zip(&rows)
        .map(|(f, r)| {
            let p = pca.transform(r, 2);
            Projection { node_id: f.node_id.clone(), pc1: p[0], pc2: p[1] }
        })
        .collect())
}

/// CSV `node_id,pc1,pc2,cluster_id`.
pub fn write_projection_csv<W: std::io::Write>(
    writer: W,
    projection: &[Projection],
    clusters: &ClusterAssignment,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    wtr.write_record(["node_id", "pc1", "pc2", "cluster_id"]).map_err(ser)?;
    for p in projection {
        let cluster = clusters.cluster_of(&p.node_id).map(|c| c.to_string()).unwrap_or_default();
        wtr.write_record([p.node_id.clone(), p.pc1.to_string(), p.pc2.to_string(), cluster])
            .map_err(ser)?;
    }
    wtr.flush().map_err(|e| Error::Serialization(e.to_string()))
}
