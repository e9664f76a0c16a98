//! Agglomerative clustering of asset return series.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::rank::{kendall_tau, pearson, spearman_rho};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Euclidean,
    Manhattan,
    PearsonBased,
    KendallTauBased,
    SpearmanRhoBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Linkage {
    Single,
    Complete,
    Average,
    /// Single linkage that only joins a singleton to another cluster and
    /// caps cluster size.
    AdaptedSingle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StoppingRule {
    /// Stop once this many clusters remain.
    Clusters(usize),
    /// Stop before a join whose linkage value exceeds the threshold.
    Distance(f64),
    /// Merge down to a single cluster.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub metric: Metric,
    pub linkage: Linkage,
    /// Maximum cluster size `a`; only enforced by `AdaptedSingle`.
    pub max_size: Option<usize>,
    pub stop: StoppingRule,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            metric: Metric::KendallTauBased,
            linkage: Linkage::AdaptedSingle,
            max_size: None,
            stop: StoppingRule::Clusters(15),
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_size == Some(0) {
            return Err(Error::InvalidInput("maximum cluster size must be at least 1".into()));
        }
        match self.stop {
            StoppingRule::Clusters(0) => Err(Error::InvalidInput("cluster count must be at least 1".into())),
            StoppingRule::Distance(d) if !d.is_finite() => {
                Err(Error::InvalidInput("distance threshold must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn distance(metric: Metric, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let corr_distance = |c: f64| (2.0 * (1.0 - c)).max(0.0).sqrt();
    Ok(match metric {
        Metric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        Metric::Manhattan => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
        Metric::PearsonBased => {
            if [x, y].iter().any(|s| s.iter().all(|v| *v == s[0])) {
                return Err(Error::InvalidInput("Pearson distance of a constant series is undefined".into()));
            }
            corr_distance(pearson(x, y))
        }
        Metric::KendallTauBased => corr_distance(kendall_tau(x, y)?),
        Metric::SpearmanRhoBased => corr_distance(spearman_rho(x, y)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub metric: Option<Metric>,
    values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn from_series(metric: Metric, columns: &[Vec<f64>]) -> Result<Self> {
        let m = columns.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        let vals = pairs
            .par_iter()
            .map(|&(i, j)| distance(metric, &columns[i], &columns[j]))
            .collect::<Result<Vec<f64>>>()?;
        let mut values = vec![vec![0.0; m]; m];
        for (&(i, j), d) in pairs.iter().zip(vals) {
            values[i][j] = d;
            values[j][i] = d;
        }
        Ok(Self { metric: Some(metric), values })
    }

    /// Wraps a user-supplied matrix after checking symmetry and zero diagonal.
    pub fn from_values(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInput("distance matrix is not square".into()));
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidInput(format!("distance matrix diagonal entry {i} is nonzero")));
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d >= 0.0 && d.is_finite()) || d != values[j][i] {
                    return Err(Error::InvalidInput(format!("distance matrix entry ({i},{j}) is invalid")));
                }
            }
        }
        Ok(Self { metric: None, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// One join: the slots of the two merged clusters and their linkage value.
/// Initial clusters occupy slots `0..m`; the cluster created by the q-th
/// join occupies slot `m + q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge(pub usize, pub usize, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub clusters: Vec<Vec<String>>,
    pub trace: Vec<Merge>,
    /// Set when clustering stopped because no admissible join remained
    /// before the stopping rule was met.
    #[serde(default)]
    pub exhausted: bool,
}

impl ClusterPartition {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_assets(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Cluster members as column indices of `assets`.
    pub fn member_indices(&self, assets: &[String]) -> Result<Vec<Vec<usize>>> {
        let pos: HashMap<&str, usize> = assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let mut seen = vec![false; assets.len()];
        let mut out = Vec::with_capacity(self.clusters.len());
        for c in &self.clusters {
            if c.is_empty() {
                return Err(Error::InvalidInput("partition contains an empty cluster".into()));
            }
            let mut idx = Vec::with_capacity(c.len());
            for a in c {
                let &i = pos
                    .get(a.as_str())
                    .ok_or_else(|| Error::InvalidInput(format!("partition asset {a} is not in the panel")))?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidInput(format!("asset {a} appears in more than one cluster")));
                }
                idx.push(i);
            }
            out.push(idx);
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("asset {} is not assigned to a cluster", assets[i])));
        }
        Ok(out)
    }

    /// Cluster label per asset, in the order of `assets`.
    pub fn labels(&self, assets: &[String]) -> Result<Vec<usize>> {
        let mut labels = vec![0; assets.len()];
        for (c, members) in self.member_indices(assets)?.iter().enumerate() {
            for &i in members {
                labels[i] = c;
            }
        }
        Ok(labels)
    }
}

/// Groups assets by externally supplied labels. Clusters are ordered by the
/// first asset carrying each label.
pub fn fixed_partition(assets: &[String], labels: &HashMap<String, String>) -> Result<ClusterPartition> {
    if let Some(extra) = labels.keys().find(|k| !assets.contains(k)) {
        return Err(Error::InvalidInput(format!("label given for unknown asset {extra}")));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<String>> = HashMap::new();
    for a in assets {
        let l = labels.get(a).ok_or_else(|| Error::InvalidInput(format!("asset {a} has no label")))?;
        if !groups.contains_key(l.as_str()) {
            order.push(l);
        }
        groups.entry(l).or_default().push(a.clone());
    }
    let clusters = order.iter().map(|l| groups.remove(l).unwrap()).collect();
    Ok(ClusterPartition { clusters, trace: Vec::new(), exhausted: false })
}

/// Reads an `asset,label` CSV with a header row.
pub fn load_labels(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let io = |e: std::io::Error| Error::Io { path: path.to_path_buf(), source: e };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { row: i + 2, column: String::new(), message: e.to_string() })?;
        if rec.len() < 2 {
            return Err(Error::Parse { row: i + 2, column: String::new(), message: "expected asset,label".into() });
        }
        let asset = rec[0].trim().to_string();
        if out.insert(asset.clone(), rec[1].trim().to_string()).is_some() {
            return Err(Error::Parse { row: i + 2, column: asset, message: "duplicate asset".into() });
        }
    }
    Ok(out)
}

pub fn agglomerate(panel: &ReturnPanel, config: &ClusteringConfig) -> Result<ClusterPartition> {
    let dist = DistanceMatrix::from_series(config.metric, panel.columns())?;
    let (groups, trace, exhausted) = agglomerate_matrix(&dist, config)?;
    let clusters = groups
        .into_iter()
        .map(|g| g.into_iter().map(|i| panel.assets()[i].clone()).collect())
        .collect();
    Ok(ClusterPartition { clusters, trace, exhausted })
}

fn linkage_value(linkage: Linkage, dist: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let pairs = a.iter().flat_map(|&i| b.iter().map(move |&j| dist.get(i, j)));
    match linkage {
        Linkage::Single | Linkage::AdaptedSingle => pairs.fold(f64::INFINITY, f64::min),
        Linkage::Complete => pairs.fold(f64::NEG_INFINITY, f64::max),
        Linkage::Average => pairs.sum::<f64>() / (a.len() * b.len()) as f64,
    }
}

fn admissible(config: &ClusteringConfig, a: &[usize], b: &[usize]) -> bool {
    if config.linkage != Linkage::AdaptedSingle {
        return true;
    }
    if a.len() > 1 && b.len() > 1 {
        return false;
    }
    config.max_size.is_none_or(|cap| a.len() < cap && b.len() < cap)
}

/// Runs the merge loop on a precomputed distance matrix. Returns the final
/// clusters (as element indices, each sorted, clusters ordered by smallest
/// member), the merge trace, and whether admissible joins ran out early.
pub fn agglomerate_matrix(
    dist: &DistanceMatrix,
    config: &ClusteringConfig,
) -> Result<(Vec<Vec<usize>>, Vec<Merge>, bool)> {
    config.validate()?;
    let m = dist.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("clustering needs at least 2 series, got {m}")));
    }
    // active clusters keyed by slot; BTreeMap keeps slot order for tie-breaks
    let mut active: BTreeMap<usize, Vec<usize>> = (0..m).map(|i| (i, vec![i])).collect();
    let mut trace = Vec::new();
    let mut exhausted = false;
    loop {
        if active.len() == 1 {
            break;
        }
        if let StoppingRule::Clusters(b) = config.stop {
            if active.len() <= b {
                break;
            }
        }
        let slots: Vec<usize> = active.keys().copied().collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (p, &x) in slots.iter().enumerate() {
            for &y in &slots[p + 1..] {
                let (a, b) = (&active[&x], &active[&y]);
                if !admissible(config, a, b) {
                    continue;
                }
                let d = linkage_value(config.linkage, dist, a, b);
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((x, y, d));
                }
            }
        }
        let Some((x, y, d)) = best else {
            exhausted = true;
            break;
        };
        if let StoppingRule::Distance(limit) = config.stop {
            if d > limit {
                break;
            }
        }
        let mut merged = active.remove(&x).unwrap();
        merged.extend(active.remove(&y).unwrap());
        merged.sort_unstable();
        active.insert(m + trace.len(), merged);
        trace.push(Merge(x, y, d));
    }
    let mut groups: Vec<Vec<usize>> = active.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    Ok((groups, trace, exhausted))
}

/// Replays a merge trace from singletons and returns the resulting groups.
pub fn replay_trace(m: usize, trace: &[Merge]) -> Result<Vec<Vec<usize>>> {
    let mut active: BTreeMap<usize, Vec<usize>> = (0..m).map(|i| (i, vec![i])).collect();
    for (q, &Merge(x, y, _)) in trace.iter().enumerate() {
        let a = active.remove(&x).ok_or_else(|| Error::InvalidInput(format!("trace step {q} joins unknown slot {x}")))?;
        let b = active.remove(&y).ok_or_else(|| Error::InvalidInput(format!("trace step {q} joins unknown slot {y}")))?;
        let mut merged = a;
        merged.extend(b);
        merged.sort_unstable();
        active.insert(m + q, merged);
    }
    let mut groups: Vec<Vec<usize>> = active.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |k: u64| (k * k.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&k| c2(k)).sum();
    let sa: f64 = ra.values().map(|&k| c2(k)).sum();
    let sb: f64 = rb.values().map(|&k| c2(k)).sum();
    let total = c2(n as u64);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
