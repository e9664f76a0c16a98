#![allow(dead_code)]

use cdcv::bicop::{BivariateCopulaFit, CopulaFamily, PairCopula};
use cdcv::cdcv::{AssetFit, CdcvConfig, CdcvModel, ClusterFit, SCHEMA_VERSION};
use cdcv::clustering::ClusterPartition;
use cdcv::indexing::{IndexRule, IndexSeries};
use cdcv::joint::{JointCopulaFit, JointFamily};
use cdcv::marginals::{MarginalFamily, MarginalFit, MarginalParams};
use cdcv::seeds;
use rand::Rng;

/// Pairs (u, v) from a bivariate copula by conditional inversion.
pub fn sample_pair(cop: &PairCopula, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeds::rng(seed, &[]);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let vv: f64 = rng.random();
        let w: f64 = rng.random();
        u.push(cop.h_inv(w, vv));
        v.push(vv);
    }
    (u, v)
}

pub fn uniforms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed, &[]);
    (0..n).map(|_| rng.random()).collect()
}

pub fn normal_fit(location: f64, scale: f64) -> MarginalFit {
    MarginalFit {
        family: MarginalFamily::Normal,
        params: MarginalParams { location, scale, df: None, skew: None },
        loglik: 0.0,
        aic: 4.0,
        n_obs: 1,
    }
}

pub fn pair_fit(family: CopulaFamily, params: &[f64]) -> BivariateCopulaFit {
    if family == CopulaFamily::Independence {
        return BivariateCopulaFit::independence(1);
    }
    BivariateCopulaFit { family, params: params.to_vec(), loglik: 0.0, aic: 2.0 * family.n_params() as f64, n_obs: 1 }
}

pub fn identity(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn gaussian_joint(correlation: Vec<Vec<f64>>) -> JointCopulaFit {
    let m = correlation.len();
    JointCopulaFit { family: JointFamily::Gaussian, correlation, nu: None, loglik: 0.0, aic: (m * (m - 1)) as f64, n_obs: 1 }
}

fn index(values: Vec<f64>, members: Vec<String>) -> IndexSeries {
    IndexSeries { values, rule: IndexRule::SimpleMean, upsilon: 0.0, noise_sd: 0.0, seed: 0, members }
}

/// Model with the given cluster sizes, every copula set by the closures,
/// Normal(mu, sigma) asset marginals and standard-normal index marginals
/// over a stored index path of length `t`.
pub fn hand_model(
    sizes: &[usize],
    mu: f64,
    sigma: f64,
    t: usize,
    lambda: impl Fn(usize) -> BivariateCopulaFit,
    pi: impl Fn(usize) -> BivariateCopulaFit,
    omega: impl Fn(usize) -> BivariateCopulaFit,
    joint: JointCopulaFit,
) -> CdcvModel {
    let path: Vec<f64> = uniforms(t, 99).iter().map(|&u| cdcv::special::norm_ppf(u)).collect();
    let mut assets = Vec::new();
    let mut clusters = Vec::new();
    let mut parts = Vec::new();
    let mut k = 0;
    for (e, &s) in sizes.iter().enumerate() {
        let ids: Vec<String> = (0..s).map(|i| format!("X{}", k + i)).collect();
        let fits = ids
            .iter()
            .enumerate()
            .map(|(i, id)| AssetFit { id: id.clone(), marginal: normal_fit(mu, sigma), pi: pi(k + i), omega: omega(k + i) })
            .collect();
        k += s;
        clusters.push(ClusterFit {
            index: index(path.iter().map(|x| x * 0.5 + e as f64 * 0.01).collect(), ids.clone()),
            index_marginal: normal_fit(0.0, 1.0),
            lambda: lambda(e),
            assets: fits,
        });
        assets.extend(ids.iter().cloned());
        parts.push(ids);
    }
    let model = CdcvModel {
        schema_version: SCHEMA_VERSION,
        config: CdcvConfig::default(),
        window_start: 0,
        assets: assets.clone(),
        partition: ClusterPartition { clusters: parts, trace: vec![], exhausted: false },
        market: index(path, assets),
        market_marginal: normal_fit(0.0, 1.0),
        clusters,
        joint,
    };
    model.validate().unwrap();
    model
}

pub fn independence_model(sizes: &[usize], mu: f64, sigma: f64) -> CdcvModel {
    let m: usize = sizes.iter().sum();
    let ind = |_| BivariateCopulaFit::independence(1);
    hand_model(sizes, mu, sigma, 50, ind, ind, ind, gaussian_joint(identity(m)))
}

/// Kolmogorov-Smirnov distance of a sample to a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS distance at the 1% level for large n.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
