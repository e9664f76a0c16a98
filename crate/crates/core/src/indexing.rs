//! Cluster and market index construction with Gaussian noise perturbation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterPartition;
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::rank::{kendall_tau_unchecked, pearson};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexRule {
    SimpleMean,
    MarketCapWeighted,
    KendallTauWeighted,
    VolatilityWeighted,
    FirstPrincipalComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarketSource {
    FromAssets,
    FromClusterIndexes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub rule: IndexRule,
    /// Noise parameter Υ; the noise standard deviation is `max|I| / Υ`.
    /// Zero disables the noise.
    pub upsilon: f64,
    pub market_source: MarketSource,
    /// Severity `d` of the Kendall's tau weighting.
    pub severity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_caps: Option<BTreeMap<String, f64>>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            rule: IndexRule::VolatilityWeighted,
            upsilon: 11.0,
            market_source: MarketSource::FromAssets,
            severity: 1.0,
            market_caps: None,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon >= 0.0 && self.upsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("noise parameter must be >= 0, got {}", self.upsilon)));
        }
        if !self.severity.is_finite() {
            return Err(Error::InvalidInput("severity must be finite".into()));
        }
        if self.rule == IndexRule::MarketCapWeighted && self.market_caps.is_none() {
            return Err(Error::InvalidInput("market-cap weighting requires market caps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub values: Vec<f64>,
    pub rule: IndexRule,
    pub upsilon: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub members: Vec<String>,
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn weighted_mean(members: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Domain(format!("index weights sum to {total}")));
    }
    let t = members[0].len();
    Ok((0..t).map(|k| members.iter().zip(weights).map(|(m, w)| w * m[k]).sum::<f64>() / total).collect())
}

/// Raw (noise-free) index of the member series under `rule`.
/// `caps` holds one market capitalisation per member.
pub fn build_index(rule: IndexRule, members: &[&[f64]], caps: Option<&[f64]>, severity: f64) -> Result<Vec<f64>> {
    let Some(first) = members.first() else {
        return Err(Error::InvalidInput("index needs at least one member".into()));
    };
    let t = first.len();
    if members.iter().any(|m| m.len() != t) {
        return Err(Error::InvalidInput("index members differ in length".into()));
    }
    if members.len() == 1 && rule != IndexRule::FirstPrincipalComponent {
        return Ok(first.to_vec());
    }
    match rule {
        IndexRule::SimpleMean => weighted_mean(members, &vec![1.0; members.len()]),
        IndexRule::MarketCapWeighted => {
            let caps = caps.ok_or_else(|| Error::InvalidInput("market caps are not available".into()))?;
            if caps.len() != members.len() || caps.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::InvalidInput("market caps must be one nonnegative value per member".into()));
            }
            weighted_mean(members, caps)
        }
        IndexRule::KendallTauWeighted => {
            let n = members.len();
            let mut tau_sum = vec![0.0; n];
            for i in 0..n {
                for j in i + 1..n {
                    let tau = kendall_tau_unchecked(members[i], members[j]);
                    tau_sum[i] += tau;
                    tau_sum[j] += tau;
                }
            }
            let min = tau_sum.iter().copied().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = tau_sum.iter().map(|&s| s + severity * (s - min)).collect();
            weighted_mean(members, &weights)
        }
        IndexRule::VolatilityWeighted => {
            let sd: Vec<f64> = members.iter().map(|m| sample_sd(m)).collect();
            if let Some(i) = sd.iter().position(|s| !(*s > 0.0)) {
                return Err(Error::Domain(format!("member {i} is constant; volatility weight undefined")));
            }
            weighted_mean(members, &sd)
        }
        IndexRule::FirstPrincipalComponent => {
            let n = members.len();
            let x = DMatrix::from_fn(t, n, |r, c| members[c][r]);
            let gram = x.transpose() * &x;
            let eig = SymmetricEigen::new(gram);
            let k = eig.eigenvalues.imax();
            let w = eig.eigenvectors.column(k).into_owned();
            let mut idx: Vec<f64> = (x * w).iter().copied().collect();
            let mean = weighted_mean(members, &vec![1.0; n])?;
            if pearson(&idx, &mean) < 0.0 || pearson(&idx, &mean).is_nan() && idx.iter().sum::<f64>() < 0.0 {
                idx.iter_mut().for_each(|v| *v = -*v);
            }
            Ok(idx)
        }
    }
}

/// Adds i.i.d. Gaussian noise with standard deviation `max|I| / Υ`.
pub fn add_noise(raw: &[f64], upsilon: f64, seed: u64) -> (Vec<f64>, f64) {
    if upsilon == 0.0 {
        return (raw.to_vec(), 0.0);
    }
    let sd = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())) / upsilon;
    if sd == 0.0 {
        return (raw.to_vec(), 0.0);
    }
    let normal = Normal::new(0.0, sd).expect("positive finite sd");
    let mut rng = seeds::rng(seed, &[]);
    (raw.iter().map(|v| v + normal.sample(&mut rng)).collect(), sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexHierarchy {
    pub market: IndexSeries,
    pub clusters: Vec<IndexSeries>,
}

const MARKET_STREAM: u64 = 0;

/// Seed of the noise stream for cluster `ordinal` (or the market, `None`)
/// in the window starting at `window_start`.
pub fn index_seed(seed: u64, window_start: usize, ordinal: Option<usize>) -> u64 {
    let stream = ordinal.map_or(MARKET_STREAM, |e| e as u64 + 1);
    seeds::derive(seed, &[window_start as u64, stream])
}

fn member_caps(config: &IndexConfig, ids: &[String]) -> Result<Option<Vec<f64>>> {
    if config.rule != IndexRule::MarketCapWeighted {
        return Ok(None);
    }
    let caps = config.market_caps.as_ref().ok_or_else(|| Error::InvalidInput("market caps are not available".into()))?;
    ids.iter()
        .map(|a| caps.get(a).copied().ok_or_else(|| Error::InvalidInput(format!("no market cap for asset {a}"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn build_hierarchy(
    window: &ReturnPanel,
    partition: &ClusterPartition,
    config: &IndexConfig,
    seed: u64,
    window_start: usize,
) -> Result<IndexHierarchy> {
    config.validate()?;
    let groups = partition.member_indices(window.assets())?;
    let mut raw_clusters = Vec::with_capacity(groups.len());
    let mut clusters = Vec::with_capacity(groups.len());
    for (e, (members, ids)) in groups.iter().zip(&partition.clusters).enumerate() {
        let series: Vec<&[f64]> = members.iter().map(|&i| window.column(i)).collect();
        let caps = member_caps(config, ids)?;
        let raw = build_index(config.rule, &series, caps.as_deref(), config.severity)
            .map_err(|err| Error::Domain(format!("cluster {e}: {err}")))?;
        let s = index_seed(seed, window_start, Some(e));
        let (values, noise_sd) = add_noise(&raw, config.upsilon, s);
        raw_clusters.push(raw);
        clusters.push(IndexSeries { values, rule: config.rule, upsilon: config.upsilon, noise_sd, seed: s, members: ids.clone() });
    }
    let raw_market = match config.market_source {
        MarketSource::FromAssets => {
            let series: Vec<&[f64]> = window.columns().iter().map(Vec::as_slice).collect();
            let caps = member_caps(config, window.assets())?;
            build_index(config.rule, &series, caps.as_deref(), config.severity)?
        }
        MarketSource::FromClusterIndexes => {
            let series: Vec<&[f64]> = raw_clusters.iter().map(Vec::as_slice).collect();
            let caps = member_caps(config, window.assets())?
                .map(|all| groups.iter().map(|g| g.iter().map(|&i| all[i]).sum::<f64>()).collect::<Vec<f64>>());
            build_index(config.rule, &series, caps.as_deref(), config.severity)?
        }
    };
    let s = index_seed(seed, window_start, None);
    let (values, noise_sd) = add_noise(&raw_market, config.upsilon, s);
    let market = IndexSeries {
        values,
        rule: config.rule,
        upsilon: config.upsilon,
        noise_sd,
        seed: s,
        members: window.assets().to_vec(),
    };
    Ok(IndexHierarchy { market, clusters })
}

/// Reads an `asset,market_cap` CSV with a header row.
pub fn load_market_caps(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse { row, column: String::new(), message: e.to_string() })?;
        if rec.len() < 2 {
            return Err(Error::Parse { row, column: String::new(), message: "expected asset,market_cap".into() });
        }
        let cap: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            row,
            column: "market_cap".into(),
            message: format!("not a number: {:?}", &rec[1]),
        })?;
        out.insert(rec[0].trim().to_string(), cap);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_mean_and_single_member() {
        let a = [1.0, 1.0];
        let b = [3.0, 3.0];
        assert_eq!(build_index(IndexRule::SimpleMean, &[&a, &b], None, 1.0).unwrap(), vec![2.0, 2.0]);
        let x = [0.1, -0.2, 0.3];
        for rule in [IndexRule::SimpleMean, IndexRule::KendallTauWeighted, IndexRule::VolatilityWeighted] {
            assert_eq!(build_index(rule, &[&x], None, 1.0).unwrap(), x.to_vec());
        }
        let pc = build_index(IndexRule::FirstPrincipalComponent, &[&x], None, 1.0).unwrap();
        for (p, v) in pc.iter().zip(&x) {
            assert!((p - v).abs() < 1e-12);
        }
    }

    #[test]
    fn volatility_weights_hand_computed() {
        let unit = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| v / sample_sd(x)).collect() };
        let a = unit(&[1.0, -1.0, 1.0, -1.0, 0.0]);
        let b: Vec<f64> = unit(&[2.0, 0.5, -1.0, 0.3, -1.8]).iter().map(|v| 3.0 * v).collect();
        let idx = build_index(IndexRule::VolatilityWeighted, &[&a, &b], None, 1.0).unwrap();
        for k in 0..5 {
            assert!((idx[k] - (a[k] + 3.0 * b[k]) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_disabled_and_deterministic() {
        let raw: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() * 0.02).collect();
        assert_eq!(add_noise(&raw, 0.0, 1).0, raw);
        assert_eq!(add_noise(&raw, 11.0, 5), add_noise(&raw, 11.0, 5));
        assert_ne!(add_noise(&raw, 11.0, 5).0, add_noise(&raw, 11.0, 6).0);
    }

    #[test]
    fn noise_scale_monte_carlo() {
        let mut raw = vec![0.0; 100_000];
        raw[0] = 0.02;
        let (noisy, _) = add_noise(&raw, 11.0, 9);
        let diff: Vec<f64> = noisy.iter().zip(&raw).map(|(a, b)| a - b).collect();
        let sd = sample_sd(&diff);
        assert!((sd / (0.02 / 11.0) - 1.0).abs() < 0.02, "{sd}");
        let (noisy2, _) = add_noise(&raw, 22.0, 9);
        let d2: Vec<f64> = noisy2.iter().zip(&raw).map(|(a, b)| a - b).collect();
        assert!((sample_sd(&d2) / sd - 0.5).abs() < 0.03);
    }

    #[test]
    fn fpc_sign_follows_simple_mean() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.8 + 0.1 * (i as f64).cos()).collect();
        let pc = build_index(IndexRule::FirstPrincipalComponent, &[&a, &b], None, 1.0).unwrap();
        let mean = build_index(IndexRule::SimpleMean, &[&a, &b], None, 1.0).unwrap();
        assert!(pearson(&pc, &mean) > 0.9);
    }

    #[test]
    fn market_caps_required() {
        let a = [1.0, 2.0];
        assert!(build_index(IndexRule::MarketCapWeighted, &[&a, &a], None, 1.0).is_err());
        let idx = build_index(IndexRule::MarketCapWeighted, &[&[1.0, 2.0], &[3.0, 6.0]], Some(&[3.0, 1.0]), 1.0).unwrap();
        assert_eq!(idx, vec![1.5, 3.0]);
    }
}
