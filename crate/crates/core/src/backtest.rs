//! Portfolio Value-at-Risk from simulated CDCV returns, rolling-window
//! backtests and the Kupiec proportion-of-failures test.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdcv::{fit_cdcv, quantile_sorted, CdcvConfig, CdcvModel};
use crate::error::{Error, Result};
use crate::panel::{ReturnPanel, RollingWindow};
use crate::seeds;
use crate::special::chi2_1_sf;

pub const MIN_SIMS: usize = 1000;
pub const DEFAULT_SIMS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KupiecResult {
    pub lr: f64,
    pub p_value: f64,
}

fn xlny(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Likelihood ratio of the observed exception rate `x / t` against the
/// nominal rate `q`, with its chi-square(1) upper-tail p-value.
pub fn kupiec_pof(x: usize, t: usize, q: f64) -> Result<KupiecResult> {
    if t == 0 || x > t {
        return Err(Error::Domain(format!("need 0 <= x <= T and T > 0, got x = {x}, T = {t}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("exception rate must lie in (0, 1), got {q}")));
    }
    let (xf, tf) = (x as f64, t as f64);
    let p = xf / tf;
    let null = xlny(tf - xf, 1.0 - q) + xlny(xf, q);
    let alt = xlny(tf - xf, 1.0 - p) + xlny(xf, p);
    let lr = (2.0 * (alt - null)).max(0.0);
    Ok(KupiecResult { lr, p_value: chi2_1_sf(lr) })
}

pub fn equal_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

fn check_weights(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::InvalidInput(format!("{} weights for {m} assets", weights.len())));
    }
    let s: f64 = weights.iter().sum();
    if weights.iter().any(|w| !w.is_finite()) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("weights must be finite and sum to 1, sum is {s}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("VaR confidence level must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Loss thresholds `VaR_alpha` for several confidence levels from one
/// simulation of the model.
pub fn portfolio_vars(model: &CdcvModel, weights: &[f64], alphas: &[f64], n_sims: usize, seed: u64) -> Result<Vec<f64>> {
    check_weights(weights, model.n_assets())?;
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    if n_sims < MIN_SIMS {
        return Err(Error::InvalidInput(format!("n_sims must be at least {MIN_SIMS}, got {n_sims}")));
    }
    let cols = model.simulate_returns(n_sims, seed)?;
    let mut port = vec![0.0; n_sims];
    for (col, &w) in cols.iter().zip(weights) {
        port.iter_mut().zip(col).for_each(|(p, r)| *p += w * r);
    }
    port.sort_by(f64::total_cmp);
    Ok(alphas.iter().map(|&a| -quantile_sorted(&port, 1.0 - a)).collect())
}

pub fn portfolio_var(model: &CdcvModel, weights: &[f64], alpha: f64, n_sims: usize, seed: u64) -> Result<f64> {
    Ok(portfolio_vars(model, weights, &[alpha], n_sims, seed)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BacktestMode {
    /// One model fitted on the evaluation span; every day in it is a trial.
    WithinSample,
    /// One-step-ahead prediction from the preceding rolling window.
    OutOfSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub model: CdcvConfig,
    pub window: usize,
    pub n_sims: usize,
    /// Portfolio weights in panel order; equal weights when unset.
    pub weights: Option<Vec<f64>>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { model: CdcvConfig::default(), window: crate::panel::DEFAULT_WINDOW, n_sims: DEFAULT_SIMS, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaRBacktestReport {
    pub alpha: f64,
    /// Evaluated day index in the panel for each trial.
    pub days: Vec<usize>,
    pub predicted_var: Vec<f64>,
    pub realized: Vec<f64>,
    pub hits: usize,
    pub trials: usize,
    pub hit_rate: f64,
    pub lr_pof: f64,
    pub p_value: f64,
    pub reject_95: bool,
    pub reject_99: bool,
}

impl VaRBacktestReport {
    pub fn mean_var(&self) -> f64 {
        self.predicted_var.iter().sum::<f64>() / self.predicted_var.len().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.hits <= self.trials
            && self.lr_pof >= 0.0
            && (0.0..=1.0).contains(&self.p_value)
            && self.reject_95 == (self.p_value < 0.05)
            && self.reject_99 == (self.p_value < 0.01)
            && self.days.len() == self.trials
            && self.predicted_var.len() == self.trials
            && self.realized.len() == self.trials;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("inconsistent VaR report at alpha {}", self.alpha)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStep {
    pub day: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOutcome {
    pub mode: BacktestMode,
    pub reports: Vec<VaRBacktestReport>,
    pub skipped: Vec<SkippedStep>,
}

fn portfolio_return(panel: &ReturnPanel, weights: &[f64], day: usize) -> f64 {
    panel.row(day).iter().zip(weights).map(|(r, w)| r * w).sum()
}

fn build_report(alpha: f64, days: Vec<usize>, predicted: Vec<f64>, realized: Vec<f64>) -> Result<VaRBacktestReport> {
    let trials = days.len();
    if trials == 0 {
        return Err(Error::NonConvergence("every backtest step failed".into()));
    }
    // a hit is a loss strictly beyond the threshold
    let hits = predicted.iter().zip(&realized).filter(|(v, r)| -**r > **v).count();
    let k = kupiec_pof(hits, trials, 1.0 - alpha)?;
    Ok(VaRBacktestReport {
        alpha,
        days,
        predicted_var: predicted,
        realized,
        hits,
        trials,
        hit_rate: hits as f64 / trials as f64,
        lr_pof: k.lr,
        p_value: k.p_value,
        reject_95: k.p_value < 0.05,
        reject_99: k.p_value < 0.01,
    })
}

/// Rolling VaR backtest over all days after the first window. Steps whose
/// fit fails are recorded in `skipped` and excluded from the trials.
pub fn rolling_backtest(
    panel: &ReturnPanel,
    config: &BacktestConfig,
    alphas: &[f64],
    mode: BacktestMode,
) -> Result<BacktestOutcome> {
    let t = panel.n_obs();
    if config.window < crate::panel::MIN_WINDOW || config.window >= t {
        return Err(Error::InvalidInput(format!(
            "window length {} must be at least {} and below the panel length {t}",
            config.window,
            crate::panel::MIN_WINDOW
        )));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidInput("at least one VaR level is required".into()));
    }
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    let weights = config.weights.clone().unwrap_or_else(|| equal_weights(panel.n_assets()));
    check_weights(&weights, panel.n_assets())?;
    let days: Vec<usize> = (config.window..t).collect();
    let realized: Vec<f64> = days.iter().map(|&d| portfolio_return(panel, &weights, d)).collect();

    let (kept, vars, skipped) = match mode {
        BacktestMode::OutOfSample => {
            let steps: Vec<std::result::Result<Vec<f64>, String>> = days
                .par_iter()
                .map(|&d| {
                    let start = d - config.window;
                    let window = panel.window(RollingWindow::new(start, config.window)).map_err(|e| e.to_string())?;
                    let model = fit_cdcv(&window, &config.model, start).map_err(|e| e.to_string())?;
                    let seed = seeds::derive(config.model.seed, &[0x76_6172, d as u64]);
                    portfolio_vars(&model, &weights, alphas, config.n_sims, seed).map_err(|e| e.to_string())
                })
                .collect();
            let mut kept = Vec::new();
            let mut vars = Vec::new();
            let mut skipped = Vec::new();
            for (i, s) in steps.into_iter().enumerate() {
                match s {
                    Ok(v) => {
                        kept.push(i);
                        vars.push(v);
                    }
                    Err(error) => skipped.push(SkippedStep { day: days[i], error }),
                }
            }
            (kept, vars, skipped)
        }
        BacktestMode::WithinSample => {
            let span = panel.window(RollingWindow::new(config.window, t - config.window))?;
            let model = fit_cdcv(&span, &config.model, config.window)?;
            let seed = seeds::derive(config.model.seed, &[0x76_6172, u64::MAX]);
            let v = portfolio_vars(&model, &weights, alphas, config.n_sims, seed)?;
            ((0..days.len()).collect(), vec![v; days.len()], Vec::new())
        }
    };

    let reports = alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            build_report(
                alpha,
                kept.iter().map(|&i| days[i]).collect(),
                vars.iter().map(|v| v[a]).collect(),
                kept.iter().map(|&i| realized[i]).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BacktestOutcome { mode, reports, skipped })
}

fn decision(reject: bool) -> &'static str {
    if reject {
        "Reject"
    } else {
        "Accept"
    }
}

/// Aligned text table with one row per VaR level. VaR is the mean
/// predicted loss threshold in percent of portfolio value.
pub fn report_table(reports: &[VaRBacktestReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>9} {:>6} {:>8} {:>9} {:>9} {:>8} {:>8}",
        "alpha", "VaR(%)", "Hits", "Hit(%)", "LR_POF", "p-Value", "95%", "99%"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:>6} {:>9.3} {:>6} {:>8.2} {:>9.3} {:>9.3} {:>8} {:>8}",
            format!("{}", (r.alpha * 100.0 * 1e6).round() / 1e6),
            100.0 * r.mean_var(),
            r.hits,
            100.0 * r.hit_rate,
            r.lr_pof,
            r.p_value,
            decision(r.reject_95),
            decision(r.reject_99)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kupiec_published_values() {
        let cases = [
            (50, 850, 0.05, 1.322, Some(0.250)),
            (52, 850, 0.05, 2.093, Some(0.147)),
            (15, 850, 0.01, 4.090, Some(0.043)),
            (16, 850, 0.01, 5.308, Some(0.021)),
            (70, 850, 0.05, 15.806, None),
            (51, 750, 0.05, 4.621, Some(0.032)),
        ];
        for (x, t, q, lr, p) in cases {
            let k = kupiec_pof(x, t, q).unwrap();
            assert!((k.lr - lr).abs() < 0.005, "{x}/{t}: {}", k.lr);
            if let Some(p) = p {
                assert!((k.p_value - p).abs() < 0.002, "{x}/{t}: {}", k.p_value);
            }
        }
    }

    #[test]
    fn kupiec_zero_at_nominal_rate_and_limits() {
        let k = kupiec_pof(10, 200, 0.05).unwrap();
        assert!(k.lr.abs() < 1e-12 && (k.p_value - 1.0).abs() < 1e-12);
        let zero = kupiec_pof(0, 100, 0.05).unwrap();
        assert!((zero.lr + 200.0 * 0.95f64.ln()).abs() < 1e-10);
        let all = kupiec_pof(100, 100, 0.05).unwrap();
        assert!((all.lr + 200.0 * 0.05f64.ln()).abs() < 1e-10);
        assert!(kupiec_pof(5, 4, 0.05).is_err());
        assert!(kupiec_pof(1, 4, 1.0).is_err());
    }

    #[test]
    fn kupiec_monotone_away_from_nominal() {
        let t = 400;
        let lrs: Vec<f64> = (0..=t).map(|x| kupiec_pof(x, t, 0.05).unwrap().lr).collect();
        for x in 0..20 {
            assert!(lrs[x] > lrs[x + 1]);
        }
        for x in 20..t {
            assert!(lrs[x + 1] > lrs[x]);
        }
    }

    #[test]
    fn flags_follow_p_value() {
        let r = build_report(0.95, vec![0, 1, 2], vec![0.01; 3], vec![-0.02, 0.0, 0.01]).unwrap();
        assert_eq!(r.hits, 1);
        r.validate().unwrap();
        assert!(report_table(&[r]).lines().count() == 2);
    }
}
