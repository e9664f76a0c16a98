//! Homoscedastic marginal families (Normal, Student's t, two-piece skew
//! Student's t), fitted by maximum likelihood and selected by AIC.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{bfgs, BfgsOptions};
use crate::panel::{ReturnPanel, MIN_WINDOW};
use crate::special::{clamp_unit, norm_cdf, norm_ppf, StudentT};

pub const DF_MIN: f64 = 2.01;
pub const DF_MAX: f64 = 200.0;
const SKEW_MIN: f64 = 0.05;
const SKEW_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MarginalFamily {
    Normal,
    StudentT,
    SkewStudentT,
}

impl MarginalFamily {
    pub const ALL: [MarginalFamily; 3] = [Self::Normal, Self::StudentT, Self::SkewStudentT];

    pub fn n_params(self) -> usize {
        match self {
            Self::Normal => 2,
            Self::StudentT => 3,
            Self::SkewStudentT => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub location: f64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// Two-piece skew: 1 is symmetric, > 1 skews right.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub family: MarginalFamily,
    pub params: MarginalParams,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

/// A marginal distribution with its normalizing constants precomputed.
#[derive(Debug, Clone, Copy)]
pub enum MarginalDist {
    Normal { loc: f64, scale: f64 },
    StudentT { loc: f64, scale: f64, t: StudentT },
    SkewStudentT { loc: f64, scale: f64, t: StudentT, gamma: f64 },
}

impl MarginalDist {
    pub fn new(family: MarginalFamily, p: &MarginalParams) -> Result<Self> {
        if !(p.scale > 0.0) || !p.location.is_finite() {
            return Err(Error::Domain(format!("invalid location/scale {}/{}", p.location, p.scale)));
        }
        let df = || match p.df {
            Some(v) if v > 2.0 && v.is_finite() => Ok(v),
            other => Err(Error::Domain(format!("degrees of freedom must exceed 2, got {other:?}"))),
        };
        Ok(match family {
            MarginalFamily::Normal => Self::Normal { loc: p.location, scale: p.scale },
            MarginalFamily::StudentT => Self::StudentT { loc: p.location, scale: p.scale, t: StudentT::new(df()?) },
            MarginalFamily::SkewStudentT => {
                let gamma = match p.skew {
                    Some(g) if g > 0.0 && g.is_finite() => g,
                    other => return Err(Error::Domain(format!("skew must be positive, got {other:?}"))),
                };
                Self::SkewStudentT { loc: p.location, scale: p.scale, t: StudentT::new(df()?), gamma }
            }
        })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => {
                let z = (x - loc) / scale;
                -0.5 * z * z - 0.5 * (2.0 * PI).ln() - scale.ln()
            }
            Self::StudentT { loc, scale, t } => t.ln_pdf((x - loc) / scale) - scale.ln(),
            Self::SkewStudentT { loc, scale, t, gamma } => {
                let z = (x - loc) / scale;
                let arg = if z >= 0.0 { z / gamma } else { z * gamma };
                LN_2 - (gamma + 1.0 / gamma).ln() + t.ln_pdf(arg) - scale.ln()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => norm_cdf((x - loc) / scale),
            Self::StudentT { loc, scale, t } => t.cdf((x - loc) / scale),
            Self::SkewStudentT { loc, scale, t, gamma } => {
                let z = (x - loc) / scale;
                let g2 = gamma * gamma;
                if z < 0.0 {
                    2.0 / (1.0 + g2) * t.cdf(z * gamma)
                } else {
                    1.0 / (1.0 + g2) + 2.0 * g2 / (1.0 + g2) * (t.cdf(z / gamma) - 0.5)
                }
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Self::Normal { loc, scale } => loc + scale * norm_ppf(u),
            Self::StudentT { loc, scale, t } => loc + scale * t.ppf(u),
            Self::SkewStudentT { loc, scale, t, gamma } => {
                let g2 = gamma * gamma;
                let split = 1.0 / (1.0 + g2);
                let z = if u < split {
                    t.ppf(u * (1.0 + g2) / 2.0) / gamma
                } else {
                    gamma * t.ppf(0.5 + (u - split) * (1.0 + g2) / (2.0 * g2))
                };
                loc + scale * z
            }
        }
    }
}

impl MarginalFit {
    pub fn dist(&self) -> MarginalDist {
        MarginalDist::new(self.family, &self.params).expect("fitted parameters are in domain")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist().cdf(x)
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0,1), got {u}")));
        }
        Ok(self.dist().quantile(u))
    }

    pub fn validate(&self) -> Result<()> {
        MarginalDist::new(self.family, &self.params)?;
        let k = self.family.n_params() as f64;
        if (self.aic - (2.0 * k - 2.0 * self.loglik)).abs() > 1e-6 * (1.0 + self.aic.abs()) {
            return Err(Error::InvalidInput("aic inconsistent with loglik".into()));
        }
        Ok(())
    }
}

fn make_fit(family: MarginalFamily, params: MarginalParams, loglik: f64, n_obs: usize) -> MarginalFit {
    let k = family.n_params() as f64;
    MarginalFit { family, params, loglik, aic: 2.0 * k - 2.0 * loglik, n_obs }
}

/// Per-family outcome attached to a failed selection.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyDiagnostic {
    pub family: MarginalFamily,
    pub message: String,
}

fn check_series(series: &[f64]) -> Result<(f64, f64)> {
    if series.len() < MIN_WINDOW {
        return Err(Error::InvalidInput(format!(
            "marginal fitting needs at least {MIN_WINDOW} observations, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if series.iter().all(|v| *v == series[0]) || !(var > 0.0) {
        return Err(Error::InvalidInput("series is constant".into()));
    }
    Ok((mean, var.sqrt()))
}

/// Fits a single family by maximum likelihood.
pub fn fit_family(series: &[f64], family: MarginalFamily) -> Result<MarginalFit> {
    let (mean, sd) = check_series(series)?;
    let n = series.len();
    match family {
        MarginalFamily::Normal => {
            let params = MarginalParams { location: mean, scale: sd, df: None, skew: None };
            let ll = loglik(family, &params, series);
            Ok(make_fit(family, params, ll, n))
        }
        MarginalFamily::StudentT => {
            let z: Vec<f64> = series.iter().map(|v| (v - mean) / sd).collect();
            let (p, ll) = fit_t_standardized(&z)?;
            Ok(make_fit(family, unstandardize(p, mean, sd), ll - n as f64 * sd.ln(), n))
        }
        MarginalFamily::SkewStudentT => {
            let z: Vec<f64> = series.iter().map(|v| (v - mean) / sd).collect();
            let (start, _) = fit_t_standardized(&z)?;
            let (p, ll) = fit_skew_t_standardized(&z, &start)?;
            Ok(make_fit(family, unstandardize(p, mean, sd), ll - n as f64 * sd.ln(), n))
        }
    }
}

/// Fits all three families and returns the one with minimal AIC; ties go to
/// the family with fewer parameters.
pub fn fit_marginal(series: &[f64]) -> Result<MarginalFit> {
    check_series(series)?;
    let mut best: Option<MarginalFit> = None;
    let mut failures = Vec::new();
    for family in MarginalFamily::ALL {
        match fit_family(series, family) {
            Ok(fit) if fit.aic.is_finite() => {
                if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                    best = Some(fit);
                }
            }
            Ok(fit) => failures.push(FamilyDiagnostic { family, message: format!("non-finite AIC {}", fit.aic) }),
            Err(e) => failures.push(FamilyDiagnostic { family, message: e.to_string() }),
        }
    }
    best.ok_or_else(|| {
        let detail = failures.iter().map(|f| format!("{:?}: {}", f.family, f.message)).collect::<Vec<_>>().join("; ");
        Error::NonConvergence(format!("no marginal family could be fitted ({detail})"))
    })
}

pub fn loglik(family: MarginalFamily, params: &MarginalParams, series: &[f64]) -> f64 {
    match MarginalDist::new(family, params) {
        Ok(d) => series.iter().map(|&x| d.ln_pdf(x)).sum(),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn unstandardize(p: MarginalParams, mean: f64, sd: f64) -> MarginalParams {
    MarginalParams { location: mean + sd * p.location, scale: sd * p.scale, ..p }
}

fn t_nll(z: &[f64], loc: f64, scale: f64, df: f64) -> f64 {
    let t = StudentT::new(df);
    let ls = scale.ln();
    let mut s = 0.0;
    for &v in z {
        s -= t.ln_pdf((v - loc) / scale) - ls;
    }
    s
}

fn fit_t_standardized(z: &[f64]) -> Result<(MarginalParams, f64)> {
    let df0: f64 = 5.0;
    let x0 = [median(z), (((df0 - 2.0) / df0).sqrt()).ln(), (df0 - 2.0).ln()];
    let lower = [-5.0, -6.0, (DF_MIN - 2.0).ln()];
    let upper = [5.0, 3.0, (DF_MAX - 2.0).ln()];
    let obj = |p: &[f64]| t_nll(z, p[0], p[1].exp(), 2.0 + p[2].exp());
    let m = bfgs(obj, &x0, &lower, &upper, BfgsOptions::default());
    if !m.converged || !m.value.is_finite() {
        return Err(Error::NonConvergence(format!("Student's t MLE stopped after {} iterations", m.iterations)));
    }
    let params = MarginalParams {
        location: m.x[0],
        scale: m.x[1].exp(),
        df: Some((2.0 + m.x[2].exp()).clamp(DF_MIN, DF_MAX)),
        skew: None,
    };
    Ok((params, -m.value))
}

fn skew_t_nll(z: &[f64], loc: f64, scale: f64, df: f64, gamma: f64) -> f64 {
    let t = StudentT::new(df);
    let c = LN_2 - (gamma + 1.0 / gamma).ln() - scale.ln();
    let mut s = 0.0;
    for &v in z {
        let w = (v - loc) / scale;
        let arg = if w >= 0.0 { w / gamma } else { w * gamma };
        s -= c + t.ln_pdf(arg);
    }
    s
}

fn fit_skew_t_standardized(z: &[f64], start: &MarginalParams) -> Result<(MarginalParams, f64)> {
    let df = start.df.unwrap_or(5.0);
    let x0 = [start.location, start.scale.ln(), (df - 2.0).max(DF_MIN - 2.0).ln(), 0.0];
    let lower = [-5.0, -6.0, (DF_MIN - 2.0).ln(), SKEW_MIN.ln()];
    let upper = [5.0, 3.0, (DF_MAX - 2.0).ln(), SKEW_MAX.ln()];
    let obj = |p: &[f64]| skew_t_nll(z, p[0], p[1].exp(), 2.0 + p[2].exp(), p[3].exp());
    let m = bfgs(obj, &x0, &lower, &upper, BfgsOptions::default());
    if !m.converged || !m.value.is_finite() {
        return Err(Error::NonConvergence(format!("skew Student's t MLE stopped after {} iterations", m.iterations)));
    }
    let params = MarginalParams {
        location: m.x[0],
        scale: m.x[1].exp(),
        df: Some((2.0 + m.x[2].exp()).clamp(DF_MIN, DF_MAX)),
        skew: Some(m.x[3].exp()),
    };
    Ok((params, -m.value))
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Column-major panel of values on the unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformPanel {
    columns: Vec<Vec<f64>>,
}

impl UniformPanel {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if columns.is_empty() || t == 0 {
            return Err(Error::InvalidInput("empty uniform panel".into()));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.len() != t {
                return Err(Error::InvalidInput(format!("column {j} has {} rows, expected {t}", c.len())));
            }
            if let Some(v) = c.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                return Err(Error::Domain(format!("column {j} contains {v}, outside (0,1)")));
            }
        }
        Ok(Self { columns })
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn n_obs(&self) -> usize {
        self.columns[0].len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }
}

/// Probability integral transform of a single series through its fit.
pub fn pit_series(series: &[f64], fit: &MarginalFit) -> Vec<f64> {
    let d = fit.dist();
    series.iter().map(|&x| clamp_unit(d.cdf(x))).collect()
}

pub fn pit(panel: &ReturnPanel, fits: &[MarginalFit]) -> Result<UniformPanel> {
    if fits.len() != panel.n_assets() {
        return Err(Error::InvalidInput(format!(
            "{} marginal fits for {} assets",
            fits.len(),
            panel.n_assets()
        )));
    }
    UniformPanel::new(panel.columns().iter().zip(fits).map(|(c, f)| pit_series(c, f)).collect())
}
