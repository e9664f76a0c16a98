//! Seeded two-level factor model for synthetic return panels.
//!
//! Asset `i` belongs to sector `i mod n_sectors` and returns
//! `scale * (beta_i * F_M + gamma_i * F_s + sigma * e_i)`, with standard
//! normal factors and unit-variance idiosyncratic shocks (Student's t when
//! `idio_df` is set). Loadings are drawn uniformly from their ranges once
//! per seed.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_assets: usize,
    pub n_sectors: usize,
    pub n_obs: usize,
    /// Range of market-factor loadings.
    pub market_beta: (f64, f64),
    /// Range of sector-factor loadings.
    pub sector_loading: (f64, f64),
    pub idio_sd: f64,
    /// Degrees of freedom of the idiosyncratic shocks; Gaussian when unset.
    pub idio_df: Option<f64>,
    /// Overall return scale (roughly a daily volatility).
    pub scale: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_assets: 12,
            n_sectors: 3,
            n_obs: 150,
            market_beta: (0.5, 1.5),
            sector_loading: (1.0, 1.5),
            idio_sd: 1.0,
            idio_df: None,
            scale: 0.01,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sectors == 0 || self.n_sectors > self.n_assets {
            return Err(Error::InvalidInput(format!(
                "need 1 <= n_sectors <= n_assets, got {} sectors for {} assets",
                self.n_sectors, self.n_assets
            )));
        }
        if self.n_assets < 2 || self.n_obs < 2 {
            return Err(Error::InvalidInput("need at least 2 assets and 2 observations".into()));
        }
        for (name, (lo, hi)) in [("market_beta", self.market_beta), ("sector_loading", self.sector_loading)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!("{name} range ({lo}, {hi}) is invalid")));
            }
        }
        if !(self.idio_sd > 0.0 && self.scale > 0.0) {
            return Err(Error::InvalidInput("idio_sd and scale must be positive".into()));
        }
        if let Some(df) = self.idio_df {
            if !(df > 2.0) {
                return Err(Error::InvalidInput(format!("idio_df must exceed 2, got {df}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub panel: ReturnPanel,
    /// Generating sector of each asset in panel order.
    pub sectors: Vec<usize>,
    pub market_beta: Vec<f64>,
    pub sector_loading: Vec<f64>,
}

impl SyntheticData {
    /// Asset id to sector label, as accepted by `fixed_partition`.
    pub fn labels(&self) -> HashMap<String, String> {
        self.panel.assets().iter().zip(&self.sectors).map(|(a, s)| (a.clone(), format!("S{}", s + 1))).collect()
    }
}

fn uniform_in<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn generate(config: &GeneratorConfig) -> Result<SyntheticData> {
    config.validate()?;
    let m = config.n_assets;
    let k = config.n_sectors;
    let t = config.n_obs;
    let mut load_rng = seeds::rng(config.seed, &[0]);
    let beta: Vec<f64> = (0..m).map(|_| uniform_in(&mut load_rng, config.market_beta)).collect();
    let gamma: Vec<f64> = (0..m).map(|_| uniform_in(&mut load_rng, config.sector_loading)).collect();
    let sectors: Vec<usize> = (0..m).map(|i| i % k).collect();

    let mut rng = seeds::rng(config.seed, &[1]);
    let shock = config.idio_df.map(|df| (StudentT::new(df).expect("df > 2"), ((df - 2.0) / df).sqrt()));
    let mut columns = vec![Vec::with_capacity(t); m];
    for _ in 0..t {
        let f_m: f64 = rng.sample(StandardNormal);
        let f_s: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for (i, col) in columns.iter_mut().enumerate() {
            let e: f64 = match &shock {
                Some((dist, norm)) => dist.sample(&mut rng) * norm,
                None => rng.sample(StandardNormal),
            };
            col.push(config.scale * (beta[i] * f_m + gamma[i] * f_s[sectors[i]] + config.idio_sd * e));
        }
    }
    let width = m.to_string().len().max(2);
    let assets = (0..m).map(|i| format!("A{:0width$}", i + 1)).collect();
    let panel = ReturnPanel::with_synthetic_dates(assets, columns)?;
    Ok(SyntheticData { panel, sectors, market_beta: beta, sector_loading: gamma })
}
