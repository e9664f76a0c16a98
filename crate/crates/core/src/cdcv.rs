//! The cluster-derived canonical vine model: market index at the root of
//! tree 1, cluster indexes at the roots of tree 2, and a multivariate
//! copula over the twice-conditioned assets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::{select_bicop_from, BivariateCopulaFit, CopulaFamily, PairCopula};
use crate::clustering::{agglomerate, ClusterPartition, ClusteringConfig};
use crate::error::{Error, Result};
use crate::indexing::{build_hierarchy, IndexConfig, IndexHierarchy, IndexSeries};
use crate::joint::{fit_joint, JointCopula, JointCopulaFit, JointFamily};
use crate::marginals::{fit_marginal, pit_series, MarginalDist, MarginalFit, UniformPanel};
use crate::panel::ReturnPanel;
use crate::rank::spearman_rho;
use crate::seeds;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdcvConfig {
    pub clustering: ClusteringConfig,
    pub index: IndexConfig,
    /// Bivariate families admissible in every pair-copula selection.
    pub families: Vec<CopulaFamily>,
    pub seed: u64,
}

impl Default for CdcvConfig {
    fn default() -> Self {
        Self {
            clustering: ClusteringConfig::default(),
            index: IndexConfig::default(),
            families: CopulaFamily::PARAMETRIC.to_vec(),
            seed: 0,
        }
    }
}

impl CdcvConfig {
    pub fn validate(&self) -> Result<()> {
        self.clustering.validate()?;
        self.index.validate()?;
        if self.families.contains(&CopulaFamily::Independence) {
            return Err(Error::InvalidInput("Independence is always admissible; list only parametric families".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetFit {
    pub id: String,
    pub marginal: MarginalFit,
    /// Asset given market.
    pub pi: BivariateCopulaFit,
    /// Market-conditioned asset given market-conditioned cluster index.
    pub omega: BivariateCopulaFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFit {
    pub index: IndexSeries,
    pub index_marginal: MarginalFit,
    /// Cluster index given market.
    pub lambda: BivariateCopulaFit,
    pub assets: Vec<AssetFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdcvModel {
    pub schema_version: u32,
    pub config: CdcvConfig,
    pub window_start: usize,
    /// Asset ids in panel column order.
    pub assets: Vec<String>,
    pub partition: ClusterPartition,
    pub market: IndexSeries,
    pub market_marginal: MarginalFit,
    pub clusters: Vec<ClusterFit>,
    /// Multivariate copula over the conditioned assets in cluster-major order.
    pub joint: JointCopulaFit,
}

/// Fits the full pipeline on one window: clustering, indexes, marginals,
/// the two conditioning trees and the joint copula.
pub fn fit_cdcv(window: &ReturnPanel, config: &CdcvConfig, window_start: usize) -> Result<CdcvModel> {
    config.validate()?;
    let partition = agglomerate(window, &config.clustering)?;
    fit_cdcv_with_partition(window, partition, config, window_start)
}

/// Fits with a given partition (for example sector labels).
pub fn fit_cdcv_with_partition(
    window: &ReturnPanel,
    partition: ClusterPartition,
    config: &CdcvConfig,
    window_start: usize,
) -> Result<CdcvModel> {
    config.validate()?;
    let hierarchy = build_hierarchy(window, &partition, &config.index, config.seed, window_start)?;
    fit_cdcv_with_hierarchy(window, partition, hierarchy, config, window_start)
}

/// Fits with given partition and index series.
pub fn fit_cdcv_with_hierarchy(
    window: &ReturnPanel,
    partition: ClusterPartition,
    hierarchy: IndexHierarchy,
    config: &CdcvConfig,
    window_start: usize,
) -> Result<CdcvModel> {
    config.validate()?;
    let groups = partition.member_indices(window.assets())?;
    if hierarchy.clusters.len() != groups.len() {
        return Err(Error::InvalidInput(format!(
            "{} cluster indexes for {} clusters",
            hierarchy.clusters.len(),
            groups.len()
        )));
    }
    let t = window.n_obs();
    if hierarchy.market.values.len() != t || hierarchy.clusters.iter().any(|c| c.values.len() != t) {
        return Err(Error::InvalidInput("index series length differs from the window".into()));
    }
    let families = &config.families;

    let market_marginal = fit_marginal(&hierarchy.market.values).map_err(|e| Error::Domain(format!("market index: {e}")))?;
    let u_m = pit_series(&hierarchy.market.values, &market_marginal);

    let fitted: Vec<(ClusterFit, Vec<Vec<f64>>)> = groups
        .par_iter()
        .zip(hierarchy.clusters.into_par_iter())
        .enumerate()
        .map(|(e, (members, index))| -> Result<(ClusterFit, Vec<Vec<f64>>)> {
            let index_marginal =
                fit_marginal(&index.values).map_err(|err| Error::Domain(format!("cluster {e} index: {err}")))?;
            let u_c = pit_series(&index.values, &index_marginal);
            let lambda = select_bicop_from(&u_c, &u_m, families)?;
            let lam = lambda.copula();
            let v_c: Vec<f64> = u_c.iter().zip(&u_m).map(|(&a, &m)| lam.h(a, m)).collect();
            let mut assets = Vec::with_capacity(members.len());
            let mut conditioned = Vec::with_capacity(members.len());
            for &i in members {
                let id = window.assets()[i].clone();
                let marginal = fit_marginal(window.column(i)).map_err(|err| Error::Domain(format!("asset {id}: {err}")))?;
                let u = pit_series(window.column(i), &marginal);
                let pi = select_bicop_from(&u, &u_m, families)?;
                let p = pi.copula();
                let u1: Vec<f64> = u.iter().zip(&u_m).map(|(&a, &m)| p.h(a, m)).collect();
                let omega = select_bicop_from(&u1, &v_c, families)?;
                let o = omega.copula();
                conditioned.push(u1.iter().zip(&v_c).map(|(&a, &c)| o.h(a, c)).collect());
                assets.push(AssetFit { id, marginal, pi, omega });
            }
            Ok((ClusterFit { index, index_marginal, lambda, assets }, conditioned))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut clusters = Vec::with_capacity(fitted.len());
    let mut residuals = Vec::with_capacity(window.n_assets());
    for (c, cond) in fitted {
        clusters.push(c);
        residuals.extend(cond);
    }
    let joint = fit_joint(&UniformPanel::new(residuals)?)?;
    let model = CdcvModel {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        window_start,
        assets: window.assets().to_vec(),
        partition,
        market: hierarchy.market,
        market_marginal,
        clusters,
        joint,
    };
    model.validate()?;
    Ok(model)
}

/// Copula data of a window at the three conditioning stages, each in the
/// cluster-major asset order.
pub struct ConditionedData {
    pub pit: Vec<Vec<f64>>,
    pub market_conditioned: Vec<Vec<f64>>,
    pub fully_conditioned: Vec<Vec<f64>>,
}

impl CdcvModel {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Asset fits in cluster-major order.
    pub fn asset_fits(&self) -> impl Iterator<Item = &AssetFit> {
        self.clusters.iter().flat_map(|c| c.assets.iter())
    }

    /// Panel column of each asset in cluster-major order.
    pub fn cluster_major_columns(&self) -> Vec<usize> {
        self.asset_fits()
            .map(|a| self.assets.iter().position(|x| *x == a.id).expect("validated model"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!("unsupported model schema version {}", self.schema_version)));
        }
        let groups = self.partition.member_indices(&self.assets)?;
        if groups.len() != self.clusters.len() {
            return Err(Error::InvalidInput("cluster fits do not match the partition".into()));
        }
        let t = self.market.values.len();
        for (g, c) in groups.iter().zip(&self.clusters) {
            if c.assets.len() != g.len() || g.iter().zip(&c.assets).any(|(&i, a)| self.assets[i] != a.id) {
                return Err(Error::InvalidInput("asset fits do not match the partition".into()));
            }
            if c.index.values.len() != t {
                return Err(Error::InvalidInput("index series lengths differ".into()));
            }
            c.index_marginal.validate()?;
            c.lambda.validate()?;
            for a in &c.assets {
                a.marginal.validate()?;
                a.pi.validate()?;
                a.omega.validate()?;
            }
        }
        self.market_marginal.validate()?;
        if self.joint.dim() != self.assets.len() {
            return Err(Error::InvalidInput("joint copula dimension differs from the asset count".into()));
        }
        self.joint.validate()
    }

    /// Market PIT and market-conditioned cluster PIT per stored index row.
    fn index_state(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let u_m = pit_series(&self.market.values, &self.market_marginal);
        let v_c = self
            .clusters
            .iter()
            .map(|c| {
                let lam = c.lambda.copula();
                pit_series(&c.index.values, &c.index_marginal).iter().zip(&u_m).map(|(&a, &m)| lam.h(a, m)).collect()
            })
            .collect();
        (u_m, v_c)
    }

    /// Transforms a panel window (same assets, aligned with the stored
    /// indexes) through the fitted marginals and conditioning copulas.
    pub fn condition(&self, window: &ReturnPanel) -> Result<ConditionedData> {
        if window.assets() != self.assets.as_slice() {
            return Err(Error::InvalidInput("window assets differ from the model's".into()));
        }
        if window.n_obs() != self.market.values.len() {
            return Err(Error::InvalidInput("window length differs from the fitted index series".into()));
        }
        let (u_m, v_c) = self.index_state();
        let cols = self.cluster_major_columns();
        let mut out = ConditionedData { pit: vec![], market_conditioned: vec![], fully_conditioned: vec![] };
        let mut k = 0;
        for (e, c) in self.clusters.iter().enumerate() {
            for a in &c.assets {
                let u = pit_series(window.column(cols[k]), &a.marginal);
                let p = a.pi.copula();
                let u1: Vec<f64> = u.iter().zip(&u_m).map(|(&x, &m)| p.h(x, m)).collect();
                let o = a.omega.copula();
                let u2 = u1.iter().zip(&v_c[e]).map(|(&x, &v)| o.h(x, v)).collect();
                out.pit.push(u);
                out.market_conditioned.push(u1);
                out.fully_conditioned.push(u2);
                k += 1;
            }
        }
        Ok(out)
    }

    /// Joint log density of (market, cluster indexes, assets) on the return
    /// scale; `clusters` follows cluster order, `assets` panel order.
    pub fn ln_density(&self, market: f64, clusters: &[f64], assets: &[f64]) -> Result<f64> {
        if clusters.len() != self.n_clusters() || assets.len() != self.n_assets() {
            return Err(Error::InvalidInput("point dimensions differ from the model".into()));
        }
        let md = self.market_marginal.dist();
        let u_m = md.cdf(market);
        let mut total = md.ln_pdf(market);
        let cols = self.cluster_major_columns();
        let mut residual = Vec::with_capacity(self.n_assets());
        let mut k = 0;
        for (c, &xc) in self.clusters.iter().zip(clusters) {
            let cd = c.index_marginal.dist();
            let u_c = cd.cdf(xc);
            let lam = c.lambda.copula();
            total += cd.ln_pdf(xc) + lam.ln_pdf(u_c, u_m);
            let v_c = lam.h(u_c, u_m);
            for a in &c.assets {
                let x = assets[cols[k]];
                let d = a.marginal.dist();
                let u = d.cdf(x);
                let (p, o) = (a.pi.copula(), a.omega.copula());
                let u1 = p.h(u, u_m);
                total += d.ln_pdf(x) + p.ln_pdf(u, u_m) + o.ln_pdf(u1, v_c);
                residual.push(o.h(u1, v_c));
                k += 1;
            }
        }
        Ok(total + self.joint.copula()?.ln_pdf(&residual))
    }

    pub fn parameter_count(&self) -> usize {
        let pairs: usize = self
            .clusters
            .iter()
            .map(|c| {
                c.lambda.family.n_params()
                    + c.assets.iter().map(|a| a.pi.family.n_params() + a.omega.family.n_params()).sum::<usize>()
            })
            .sum();
        pairs + self.joint.n_params()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a serialized model.
    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn simulator(&self) -> Result<Simulator<'_>> {
        Simulator::new(self)
    }

    /// Simulated asset returns as columns in panel order.
    pub fn simulate_returns(&self, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.simulator()?.simulate(n_samples, seed)
    }

    /// Simulated returns as a panel with synthetic consecutive dates.
    pub fn simulate(&self, n_samples: usize, seed: u64) -> Result<ReturnPanel> {
        let cols = self.simulate_returns(n_samples, seed)?;
        ReturnPanel::with_synthetic_dates(self.assets.clone(), cols)
    }
}

const SIM_CHUNK: usize = 512;

/// Precomputed state for drawing from a fitted model. Sample `s` is
/// conditioned on stored index row `s mod T`, so the index states are the
/// realized window path reused cyclically.
pub struct Simulator<'a> {
    model: &'a CdcvModel,
    joint: JointCopula,
    u_m: Vec<f64>,
    v_c: Vec<Vec<f64>>,
    /// (cluster, Π, Ω, marginal, panel column) in cluster-major order
    assets: Vec<(usize, PairCopula, PairCopula, MarginalDist, usize)>,
}

impl<'a> Simulator<'a> {
    fn new(model: &'a CdcvModel) -> Result<Self> {
        let joint = model.joint.copula()?;
        let (u_m, v_c) = model.index_state();
        let cols = model.cluster_major_columns();
        let assets = model
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(e, c)| c.assets.iter().map(move |a| (e, a)))
            .zip(cols)
            .map(|((e, a), col)| (e, a.pi.copula(), a.omega.copula(), a.marginal.dist(), col))
            .collect();
        Ok(Self { model, joint, u_m, v_c, assets })
    }

    /// Draws `n_samples` return vectors. Rows are generated in fixed-size
    /// chunks with their own derived seeds, so the output is independent
    /// of the thread count.
    pub fn simulate(&self, n_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be at least 1".into()));
        }
        let m = self.model.n_assets();
        let t = self.u_m.len();
        let n_chunks = n_samples.div_ceil(SIM_CHUNK);
        let chunks: Vec<Vec<Vec<f64>>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = seeds::rng(seed, &[c as u64]);
                let rows = SIM_CHUNK.min(n_samples - c * SIM_CHUNK);
                (0..rows)
                    .map(|i| {
                        let r = (c * SIM_CHUNK + i) % t;
                        let w = self.joint.sample(&mut rng);
                        let mut out = vec![0.0; m];
                        for (k, (e, pi, omega, marg, col)) in self.assets.iter().enumerate() {
                            let u1 = omega.h_inv(w[k], self.v_c[*e][r]);
                            let u = pi.h_inv(u1, self.u_m[r]);
                            out[*col] = marg.quantile(u);
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        let mut cols = vec![Vec::with_capacity(n_samples); m];
        for row in chunks.iter().flatten() {
            for (j, &v) in row.iter().enumerate() {
                cols[j].push(v);
            }
        }
        Ok(cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    Unconditioned,
    MarketConditioned,
    FullyConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q99: f64,
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&s, p);
        Self { mean, std, q1: q(0.01), q25: q(0.25), q50: q(0.5), q75: q(0.75), q99: q(0.99) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningDiagnostics {
    pub stage: Stage,
    pub rho: Vec<f64>,
    pub summary: Summary,
    pub abs_summary: Summary,
}

fn pairwise_spearman(columns: &[Vec<f64>]) -> Vec<f64> {
    let m = columns.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| spearman_rho(&columns[i], &columns[j]).unwrap_or(0.0))
        .collect()
}

fn diagnostics_for(stage: Stage, columns: &[Vec<f64>]) -> ConditioningDiagnostics {
    let rho = pairwise_spearman(columns);
    let abs: Vec<f64> = rho.iter().map(|r| r.abs()).collect();
    ConditioningDiagnostics { stage, summary: Summary::of(&rho), abs_summary: Summary::of(&abs), rho }
}

/// Pairwise Spearman correlations of the assets at each conditioning stage.
pub fn conditioning_diagnostics(model: &CdcvModel, window: &ReturnPanel) -> Result<Vec<ConditioningDiagnostics>> {
    if model.n_assets() < 2 {
        return Err(Error::InvalidInput("diagnostics need at least 2 assets".into()));
    }
    let data = model.condition(window)?;
    Ok(vec![
        diagnostics_for(Stage::Unconditioned, &data.pit),
        diagnostics_for(Stage::MarketConditioned, &data.market_conditioned),
        diagnostics_for(Stage::FullyConditioned, &data.fully_conditioned),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RootClass {
    Market,
    ClusterIndexes,
    JointSimplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub class: RootClass,
    pub counts: BTreeMap<CopulaFamily, usize>,
    pub percent: BTreeMap<CopulaFamily, f64>,
}

/// Family counts per root class over a set of fitted models. Copulas with
/// the market as root (cluster indexes and assets) form the Market row;
/// the joint copula counts as Gaussian or Student's t.
pub fn selection_summary(models: &[CdcvModel]) -> Result<Vec<SelectionRow>> {
    if models.is_empty() {
        return Err(Error::InvalidInput("selection summary needs at least one model".into()));
    }
    let mut tallies: BTreeMap<RootClass, BTreeMap<CopulaFamily, usize>> = BTreeMap::new();
    let all = [
        CopulaFamily::Gaussian,
        CopulaFamily::StudentT,
        CopulaFamily::Clayton,
        CopulaFamily::Frank,
        CopulaFamily::Independence,
    ];
    for class in [RootClass::Market, RootClass::ClusterIndexes, RootClass::JointSimplified] {
        tallies.insert(class, all.iter().map(|f| (*f, 0)).collect());
    }
    for m in models {
        for c in &m.clusters {
            *tallies.get_mut(&RootClass::Market).unwrap().get_mut(&c.lambda.family).unwrap() += 1;
            for a in &c.assets {
                *tallies.get_mut(&RootClass::Market).unwrap().get_mut(&a.pi.family).unwrap() += 1;
                *tallies.get_mut(&RootClass::ClusterIndexes).unwrap().get_mut(&a.omega.family).unwrap() += 1;
            }
        }
        let jf = match m.joint.family {
            JointFamily::Gaussian => CopulaFamily::Gaussian,
            JointFamily::StudentT => CopulaFamily::StudentT,
        };
        *tallies.get_mut(&RootClass::JointSimplified).unwrap().get_mut(&jf).unwrap() += 1;
    }
    Ok(tallies
        .into_iter()
        .map(|(class, counts)| {
            let total: usize = counts.values().sum();
            let percent = counts.iter().map(|(f, &c)| (*f, 100.0 * c as f64 / total.max(1) as f64)).collect();
            SelectionRow { class, counts, percent }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_quantiles_ordered() {
        let v: Vec<f64> = (0..101).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
        let s = Summary::of(&v);
        assert!(s.q1 <= s.q25 && s.q25 <= s.q50 && s.q50 <= s.q75 && s.q75 <= s.q99);
        assert!((s.q50 - 0.0).abs() < 1e-12);
        assert!((s.mean - 0.0).abs() < 1e-12);
    }

    #[test]
    fn type7_quantile() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.05) - 1.15).abs() < 1e-12);
    }
}
