//! Scalar distribution functions shared by the marginal and copula code.
//!
//! The Student's t quantile is on the hot path of every t-copula evaluation,
//! so it uses Hill's approximation followed by Newton polishing against the
//! exact CDF instead of a generic root finder.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::beta::beta_reg;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

/// Lower clamp applied to every uniform before it enters a quantile transform.
pub const U_EPS: f64 = 1e-10;

#[inline]
pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(U_EPS, 1.0 - U_EPS)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn norm_ppf(p: f64) -> f64 {
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // one Halley step against the lower or upper tail, whichever is smaller
    let e = if p < 0.5 { norm_cdf(x) - p } else { (1.0 - p) - norm_cdf(-x) };
    let d = e / norm_pdf(x);
    x - d / (1.0 + 0.5 * x * d)
}

/// Standard (location 0, scale 1) Student's t with real degrees of freedom.
#[derive(Debug, Clone, Copy)]
pub struct StudentT {
    nu: f64,
    ln_norm: f64,
}

impl StudentT {
    pub fn new(nu: f64) -> Self {
        debug_assert!(nu > 0.0);
        let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        Self { nu, ln_norm }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    #[inline]
    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm - 0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
    }

    #[inline]
    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x.is_infinite() {
            return if x > 0.0 { 1.0 } else { 0.0 };
        }
        let nu = self.nu;
        let x2 = x * x;
        if x2 < nu {
            // central region: P(|T| < |x|) = I_{x²/(ν+x²)}(1/2, ν/2)
            let central = beta_reg(0.5, 0.5 * nu, x2 / (nu + x2));
            0.5 + 0.5 * central.copysign(x)
        } else {
            let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x2));
            if x > 0.0 {
                1.0 - tail
            } else {
                tail
            }
        }
    }

    pub fn ppf(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        if p == 0.5 {
            return 0.0;
        }
        let lower = p < 0.5;
        let tail_p = if lower { p } else { 1.0 - p };
        // Hill's initial guess gives the upper-tail quantile for tail_p.
        let mut x = -hill_t_quantile(2.0 * tail_p, self.nu);
        if !x.is_finite() {
            x = norm_ppf(tail_p);
        }
        // Newton on the lower-tail problem F(x) = tail_p with x < 0.
        for _ in 0..8 {
            let f = self.cdf(x) - tail_p;
            let d = self.pdf(x);
            if d <= 0.0 || !d.is_finite() {
                break;
            }
            let step = f / d;
            let mut next = x - step;
            if next >= 0.0 {
                next = 0.5 * x;
            }
            // quadratic convergence: once the step is below 1e-8 the
            // remaining error is at rounding level
            let done = (next - x).abs() <= 1e-8 * x.abs().max(1.0);
            x = next;
            if done {
                break;
            }
        }
        if lower {
            x
        } else {
            -x
        }
    }
}

/// Hill (1970) approximation of the upper quantile of |T| for two-sided
/// probability `p2`, as used in R's `qt`.
fn hill_t_quantile(p2: f64, n: f64) -> f64 {
    if n > 1e20 {
        return -norm_ppf(0.5 * p2);
    }
    if (n - 2.0).abs() < 1e-12 {
        return (2.0 / (p2 * (2.0 - p2)) - 2.0).sqrt();
    }
    let a = 1.0 / (n - 0.5);
    let b = 48.0 / (a * a);
    let mut c = ((20700.0 * a / b - 98.0) * a - 16.0) * a + 96.36;
    let d = ((94.5 / (b + c) - 3.0) / b + 1.0) * (a * PI / 2.0).sqrt() * n;
    let mut y = (d * p2).powf(2.0 / n);
    let p_ok = y > 0.05 + a;
    if p_ok {
        let x = norm_ppf(0.5 * p2);
        y = x * x;
        if n < 5.0 {
            c += 0.3 * (n - 4.5) * (x + 0.6);
        }
        c += (((0.05 * d * x - 5.0) * x - 7.0) * x - 2.0) * x + b;
        y = (((((0.4 * y + 6.3) * y + 36.0) * y + 94.5) / c - y - 3.0) / b + 1.0) * x;
        y = (a * y * y).exp_m1();
    } else {
        y = ((1.0 / (((n + 6.0) / (n * y) - 0.089 * d - 0.822) * (n + 2.0) * 3.0)
            + 0.5 / (n + 4.0))
            * y
            - 1.0)
            * (n + 1.0)
            / (n + 2.0)
            + 1.0 / y;
    }
    (n * y).sqrt()
}

pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

/// Upper-tail probability of a chi-squared variable with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((0.5 * x).sqrt())
}
