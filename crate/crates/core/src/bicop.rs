//! Bivariate copula families: Gaussian, Student's t, Clayton and Frank.
//!
//! `h(u, v)` is the conditional distribution `∂C(u, v)/∂v`, i.e. the
//! distribution of the first argument given the second.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::grid_brent;
use crate::panel::MIN_WINDOW;
use crate::rank::kendall_tau_unchecked;
use crate::special::{clamp_unit, ln_gamma_fn, norm_cdf, norm_ppf, StudentT};

pub const RHO_MAX: f64 = 0.9999;
pub const T_NU_MIN: f64 = 2.01;
pub const T_NU_MAX: f64 = 30.0;
pub const CLAYTON_MIN: f64 = 1e-4;
pub const CLAYTON_MAX: f64 = 100.0;
pub const FRANK_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CopulaFamily {
    Gaussian,
    StudentT,
    Clayton,
    Frank,
    Independence,
}

impl CopulaFamily {
    /// Parametric families in selection tie-break order.
    pub const PARAMETRIC: [CopulaFamily; 4] = [Self::Gaussian, Self::StudentT, Self::Clayton, Self::Frank];

    pub fn n_params(self) -> usize {
        match self {
            Self::Independence => 0,
            Self::StudentT => 2,
            _ => 1,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Self::Gaussian => "G",
            Self::StudentT => "ST",
            Self::Clayton => "C",
            Self::Frank => "F",
            Self::Independence => "I",
        }
    }
}

/// A bivariate copula with its parameters validated and constants cached.
#[derive(Debug, Clone, Copy)]
pub enum PairCopula {
    Independence,
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64, t: StudentT, t1: StudentT, ln_k: f64 },
    Clayton { theta: f64 },
    Frank { theta: f64 },
}

fn t_copula_constant(nu: f64) -> f64 {
    ln_gamma_fn(0.5 * (nu + 2.0)) + ln_gamma_fn(0.5 * nu) - 2.0 * ln_gamma_fn(0.5 * (nu + 1.0))
}

impl PairCopula {
    pub fn new(family: CopulaFamily, params: &[f64]) -> Result<Self> {
        if params.len() != family.n_params() {
            return Err(Error::Domain(format!(
                "{family:?} takes {} parameters, got {}",
                family.n_params(),
                params.len()
            )));
        }
        let bad = |what: &str| Err(Error::Domain(format!("{family:?} {what} out of domain: {params:?}")));
        match family {
            CopulaFamily::Independence => Ok(Self::Independence),
            CopulaFamily::Gaussian => {
                let rho = params[0];
                if !(rho.abs() < 1.0) {
                    return bad("rho");
                }
                Ok(Self::Gaussian { rho })
            }
            CopulaFamily::StudentT => {
                let (rho, nu) = (params[0], params[1]);
                if !(rho.abs() < 1.0) {
                    return bad("rho");
                }
                if !(nu > 2.0 && nu.is_finite()) {
                    return bad("degrees of freedom");
                }
                Ok(Self::StudentT { rho, nu, t: StudentT::new(nu), t1: StudentT::new(nu + 1.0), ln_k: t_copula_constant(nu) })
            }
            CopulaFamily::Clayton => {
                let theta = params[0];
                if !(theta > 0.0 && theta.is_finite()) {
                    return bad("theta");
                }
                Ok(Self::Clayton { theta })
            }
            CopulaFamily::Frank => {
                let theta = params[0];
                if theta == 0.0 || !theta.is_finite() {
                    return bad("theta");
                }
                Ok(Self::Frank { theta })
            }
        }
    }

    pub fn family(&self) -> CopulaFamily {
        match self {
            Self::Independence => CopulaFamily::Independence,
            Self::Gaussian { .. } => CopulaFamily::Gaussian,
            Self::StudentT { .. } => CopulaFamily::StudentT,
            Self::Clayton { .. } => CopulaFamily::Clayton,
            Self::Frank { .. } => CopulaFamily::Frank,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Independence => vec![],
            Self::Gaussian { rho } => vec![rho],
            Self::StudentT { rho, nu, .. } => vec![rho, nu],
            Self::Clayton { theta } | Self::Frank { theta } => vec![theta],
        }
    }

    pub fn ln_pdf(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        match *self {
            Self::Independence => 0.0,
            Self::Gaussian { rho } => gaussian_ln_pdf(rho, norm_ppf(u), norm_ppf(v)),
            Self::StudentT { rho, nu, t, ln_k, .. } => {
                let (x, y) = (t.ppf(u), t.ppf(v));
                t_ln_pdf_core(rho, nu, ln_k, x, y) + t_marginal_term(nu, x, y)
            }
            Self::Clayton { theta } => clayton_ln_pdf(theta, u.ln(), v.ln()),
            Self::Frank { theta } => frank_ln_pdf(theta, u, v),
        }
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.ln_pdf(u, v).exp()
    }

    /// Conditional distribution of `u` given `v`.
    pub fn h(&self, u: f64, v: f64) -> f64 {
        let (u, v) = (clamp_unit(u), clamp_unit(v));
        let w = match *self {
            Self::Independence => u,
            Self::Gaussian { rho } => {
                let (x, y) = (norm_ppf(u), norm_ppf(v));
                norm_cdf((x - rho * y) / (1.0 - rho * rho).sqrt())
            }
            Self::StudentT { rho, nu, t, t1, .. } => {
                let (x, y) = (t.ppf(u), t.ppf(v));
                let s = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                t1.cdf((x - rho * y) / s)
            }
            Self::Clayton { theta } => {
                let l = clayton_log_sum(theta, u.ln(), v.ln());
                (-(theta + 1.0) * v.ln() - (1.0 + 1.0 / theta) * l).exp()
            }
            Self::Frank { theta } => frank_h(theta, u, v),
        };
        clamp_unit(w)
    }

    /// Inverse of `h` in its first argument.
    pub fn h_inv(&self, w: f64, v: f64) -> f64 {
        let (w, v) = (clamp_unit(w), clamp_unit(v));
        let u = match *self {
            Self::Independence => w,
            Self::Gaussian { rho } => norm_cdf(norm_ppf(w) * (1.0 - rho * rho).sqrt() + rho * norm_ppf(v)),
            Self::StudentT { rho, nu, t, t1, .. } => {
                let y = t.ppf(v);
                let s = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                t.cdf(t1.ppf(w) * s + rho * y)
            }
            Self::Clayton { theta } => {
                let delta = -theta / (1.0 + theta) * w.ln();
                let a = delta - theta * v.ln();
                let ln_s = a + (-(-delta).exp_m1() + (-a).exp()).ln();
                (-ln_s / theta).exp()
            }
            Self::Frank { theta } => frank_h_inv(theta, w, v),
        };
        clamp_unit(u)
    }

    pub fn loglik(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).map(|(&a, &b)| self.ln_pdf(a, b)).sum()
    }

    /// Kendall's tau implied by the parameters.
    pub fn kendall_tau(&self) -> f64 {
        match *self {
            Self::Independence => 0.0,
            Self::Gaussian { rho } | Self::StudentT { rho, .. } => 2.0 / PI * rho.asin(),
            Self::Clayton { theta } => theta / (theta + 2.0),
            Self::Frank { theta } => frank_tau(theta),
        }
    }
}

/// tau = 1 - 4 (1 - D1(theta)) / theta with the Debye function D1 by
/// composite Simpson quadrature.
fn frank_tau(theta: f64) -> f64 {
    let a = theta.abs();
    if a < 1e-6 {
        return theta / 9.0;
    }
    let n = 400;
    let h = a / n as f64;
    let f = |t: f64| if t == 0.0 { 1.0 } else { t / t.exp_m1() };
    let mut s = f(0.0) + f(a);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    let d1 = s * h / 3.0 / a;
    (1.0 - 4.0 * (1.0 - d1) / a).copysign(theta)
}

#[inline]
fn gaussian_ln_pdf(rho: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    -0.5 * r2.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)
}

#[inline]
fn t_ln_pdf_core(rho: f64, nu: f64, ln_k: f64, x: f64, y: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    ln_k - 0.5 * r2.ln() - 0.5 * (nu + 2.0) * ((x * x + y * y - 2.0 * rho * x * y) / (nu * r2)).ln_1p()
}

#[inline]
fn t_marginal_term(nu: f64, x: f64, y: f64) -> f64 {
    0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
}

/// `ln(u^-θ + v^-θ - 1)` from `ln u`, `ln v` without overflow.
#[inline]
fn clayton_log_sum(theta: f64, ln_u: f64, ln_v: f64) -> f64 {
    let a = -theta * ln_u;
    let b = -theta * ln_v;
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((lo - hi).exp() - (-hi).exp_m1()).ln()
}

#[inline]
fn clayton_ln_pdf(theta: f64, ln_u: f64, ln_v: f64) -> f64 {
    let l = clayton_log_sum(theta, ln_u, ln_v);
    theta.ln_1p() - (theta + 1.0) * (ln_u + ln_v) - (2.0 + 1.0 / theta) * l
}

// Frank with θ < 0 is the 90° rotation of Frank with |θ|: c_θ(u, v) =
// c_|θ|(u, 1 − v), and likewise for h and its inverse. The helpers below
// take θ > 0 and are written as sums of positive terms.

/// `e^{θ(u+v)}·(−denominator)` of the Frank density, for θ > 0.
#[inline]
fn frank_denominator(theta: f64, u: f64, v: f64) -> f64 {
    (-theta * u).exp() * -(-theta * v).exp_m1() + (-theta * v).exp() * -(-theta * (1.0 - v)).exp_m1()
}

#[inline]
fn frank_ln_pdf(theta: f64, u: f64, v: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let (theta, v) = if theta < 0.0 { (-theta, 1.0 - v) } else { (theta, v) };
    theta.ln() + (-(-theta).exp_m1()).ln() - theta * (u + v) - 2.0 * frank_denominator(theta, u, v).ln()
}

#[inline]
fn frank_h(theta: f64, u: f64, v: f64) -> f64 {
    let (theta, v) = if theta < 0.0 { (-theta, 1.0 - v) } else { (theta, v) };
    (-theta * v).exp() * -(-theta * u).exp_m1() / frank_denominator(theta, u, v)
}

#[inline]
fn frank_h_inv(theta: f64, w: f64, v: f64) -> f64 {
    let (theta, v) = if theta < 0.0 { (-theta, 1.0 - v) } else { (theta, v) };
    let ln_x = (w * (-theta * (1.0 - v)).exp_m1()).ln_1p() - (w * (theta * v).exp_m1()).ln_1p();
    -ln_x / theta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateCopulaFit {
    pub family: CopulaFamily,
    pub params: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

impl BivariateCopulaFit {
    pub fn independence(n_obs: usize) -> Self {
        Self { family: CopulaFamily::Independence, params: vec![], loglik: 0.0, aic: 0.0, n_obs }
    }

    fn new(family: CopulaFamily, params: Vec<f64>, loglik: f64, n_obs: usize) -> Self {
        let aic = 2.0 * family.n_params() as f64 - 2.0 * loglik;
        Self { family, params, loglik, aic, n_obs }
    }

    pub fn copula(&self) -> PairCopula {
        PairCopula::new(self.family, &self.params).expect("fitted copula parameters are in domain")
    }

    pub fn validate(&self) -> Result<()> {
        PairCopula::new(self.family, &self.params)?;
        let expect = 2.0 * self.family.n_params() as f64 - 2.0 * self.loglik;
        if (self.aic - expect).abs() > 1e-6 * (1.0 + expect.abs()) {
            return Err(Error::InvalidInput(format!("{:?} fit has inconsistent aic", self.family)));
        }
        if self.family == CopulaFamily::Independence && self.loglik != 0.0 {
            return Err(Error::InvalidInput("independence fit must have zero loglik".into()));
        }
        Ok(())
    }
}

fn check_data(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!("copula inputs differ in length: {} vs {}", u.len(), v.len())));
    }
    if u.len() < MIN_WINDOW {
        return Err(Error::InvalidInput(format!(
            "copula fitting needs at least {MIN_WINDOW} observations, got {}",
            u.len()
        )));
    }
    for s in [u, v] {
        if let Some(x) = s.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::Domain(format!("copula input {x} outside (0,1)")));
        }
    }
    Ok(())
}

/// Maximum-likelihood fit of one family.
pub fn fit_bicop(u: &[f64], v: &[f64], family: CopulaFamily) -> Result<BivariateCopulaFit> {
    check_data(u, v)?;
    let tau = || kendall_tau_unchecked(u, v);
    fit_checked(u, v, family, tau)
}

fn fit_checked(u: &[f64], v: &[f64], family: CopulaFamily, tau: impl Fn() -> f64) -> Result<BivariateCopulaFit> {
    let n = u.len();
    let u: Vec<f64> = u.iter().map(|&x| clamp_unit(x)).collect();
    let v: Vec<f64> = v.iter().map(|&x| clamp_unit(x)).collect();
    let (params, ll) = match family {
        CopulaFamily::Independence => return Ok(BivariateCopulaFit::independence(n)),
        CopulaFamily::Gaussian => fit_gaussian(&u, &v),
        CopulaFamily::StudentT => fit_student_t(&u, &v, tau()),
        CopulaFamily::Clayton => {
            let t = tau();
            if t <= 0.0 {
                return Err(Error::Domain(format!("Clayton requires positive dependence, empirical tau is {t:.4}")));
            }
            fit_clayton(&u, &v)
        }
        CopulaFamily::Frank => fit_frank(&u, &v),
    };
    if !ll.is_finite() || params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonConvergence(format!("{family:?} likelihood maximization failed")));
    }
    Ok(BivariateCopulaFit::new(family, params, ll, n))
}

/// Fits every parametric family and keeps the minimal AIC, falling back to
/// Independence when no family improves on it.
pub fn select_bicop(u: &[f64], v: &[f64]) -> Result<BivariateCopulaFit> {
    select_bicop_from(u, v, &CopulaFamily::PARAMETRIC)
}

pub fn select_bicop_from(u: &[f64], v: &[f64], families: &[CopulaFamily]) -> Result<BivariateCopulaFit> {
    check_data(u, v)?;
    let tau = kendall_tau_unchecked(u, v);
    let mut best: Option<BivariateCopulaFit> = None;
    let mut errors = Vec::new();
    for &family in CopulaFamily::PARAMETRIC.iter().filter(|f| families.contains(f)) {
        if family == CopulaFamily::Clayton && tau <= 0.0 {
            continue;
        }
        match fit_checked(u, v, family, || tau) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                    best = Some(fit);
                }
            }
            Err(e) => errors.push(format!("{family:?}: {e}")),
        }
    }
    match best {
        Some(fit) if fit.aic <= 0.0 => Ok(fit),
        Some(_) => Ok(BivariateCopulaFit::independence(u.len())),
        None if errors.is_empty() => Ok(BivariateCopulaFit::independence(u.len())),
        None => Err(Error::NonConvergence(format!("no copula family could be fitted ({})", errors.join("; ")))),
    }
}

fn fit_gaussian(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let (mut sq, mut sxy) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (x, y) = (norm_ppf(a), norm_ppf(b));
        sq += x * x + y * y;
        sxy += x * y;
    }
    let n = u.len() as f64;
    let nll = |rho: f64| {
        let r2 = 1.0 - rho * rho;
        0.5 * n * r2.ln() + (rho * rho * sq - 2.0 * rho * sxy) / (2.0 * r2)
    };
    let (rho, f) = grid_brent(nll, -RHO_MAX, RHO_MAX, 40, 1e-10);
    (vec![rho], -f)
}

struct TScores {
    x: Vec<f64>,
    y: Vec<f64>,
    marginal: f64,
}

fn t_scores(u: &[f64], v: &[f64], nu: f64) -> TScores {
    let t = StudentT::new(nu);
    let x: Vec<f64> = u.iter().map(|&a| t.ppf(a)).collect();
    let y: Vec<f64> = v.iter().map(|&b| t.ppf(b)).collect();
    let marginal = x.iter().zip(&y).map(|(&a, &b)| t_marginal_term(nu, a, b)).sum();
    TScores { x, y, marginal }
}

/// Maximizes over rho for fixed nu. The search starts in a bracket around
/// `center` and widens to the full range if the optimum sits on its edge.
fn t_profile(s: &TScores, nu: f64, center: f64) -> (f64, f64) {
    let ln_k = t_copula_constant(nu);
    let nll = |rho: f64| {
        let core: f64 = s.x.iter().zip(&s.y).map(|(&x, &y)| t_ln_pdf_core(rho, nu, ln_k, x, y)).sum();
        -(core + s.marginal)
    };
    let lo = (center - 0.25).max(-RHO_MAX);
    let hi = (center + 0.25).min(RHO_MAX);
    let local = grid_brent(nll, lo, hi, 6, 1e-9);
    let edge = (local.0 - lo < 1e-6 && lo > -RHO_MAX) || (hi - local.0 < 1e-6 && hi < RHO_MAX);
    if edge {
        grid_brent(nll, -RHO_MAX, RHO_MAX, 20, 1e-9)
    } else {
        local
    }
}

fn fit_student_t(u: &[f64], v: &[f64], tau: f64) -> (Vec<f64>, f64) {
    // profile likelihood: optimize ln(nu - 2) outside, rho inside with the
    // quantile transform cached per nu; for elliptical copulas
    // tau = 2 asin(rho) / pi, which centres the rho search
    let center = (0.5 * PI * tau).sin();
    let lo = (T_NU_MIN - 2.0).ln();
    let hi = (T_NU_MAX - 2.0).ln();
    let profile = |s: f64| {
        let nu = 2.0 + s.exp();
        t_profile(&t_scores(u, v, nu), nu, center).1
    };
    let (s, _) = grid_brent(profile, lo, hi, 6, 1e-3);
    let nu = (2.0 + s.exp()).clamp(T_NU_MIN, T_NU_MAX);
    let (rho, f) = t_profile(&t_scores(u, v, nu), nu, center);
    (vec![rho, nu], -f)
}

fn fit_clayton(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let lu: Vec<f64> = u.iter().map(|a| a.ln()).collect();
    let lv: Vec<f64> = v.iter().map(|b| b.ln()).collect();
    let nll = |s: f64| {
        let theta = s.exp();
        -lu.iter().zip(&lv).map(|(&a, &b)| clayton_ln_pdf(theta, a, b)).sum::<f64>()
    };
    let (s, f) = grid_brent(nll, CLAYTON_MIN.ln(), CLAYTON_MAX.ln(), 30, 1e-10);
    (vec![s.exp()], -f)
}

fn fit_frank(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let nll = |theta: f64| -u.iter().zip(v).map(|(&a, &b)| frank_ln_pdf(theta, a, b)).sum::<f64>();
    let (mut theta, f) = grid_brent(nll, -FRANK_MAX, FRANK_MAX, 80, 1e-10);
    if theta == 0.0 {
        theta = 1e-10;
    }
    (vec![theta], -f)
}
