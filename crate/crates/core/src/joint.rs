//! Multivariate Gaussian and Student's t copulas over the residual
//! dependence of the conditioned assets.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::UniformPanel;
use crate::optim::grid_brent;
use crate::rank::kendall_matrix;
use crate::special::{clamp_unit, ln_gamma_fn, norm_cdf, norm_ppf, StudentT};

pub const JOINT_NU_MIN: f64 = 2.1;
pub const JOINT_NU_MAX: f64 = 50.0;
const EIGEN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointFamily {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCopulaFit {
    pub family: JointFamily,
    pub correlation: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

impl JointCopulaFit {
    pub fn dim(&self) -> usize {
        self.correlation.len()
    }

    pub fn n_params(&self) -> usize {
        let m = self.dim();
        m * (m - 1) / 2 + usize::from(self.family == JointFamily::StudentT)
    }

    pub fn copula(&self) -> Result<JointCopula> {
        JointCopula::new(self.family, &self.correlation, self.nu)
    }

    pub fn validate(&self) -> Result<()> {
        self.copula()?;
        let expect = 2.0 * self.n_params() as f64 - 2.0 * self.loglik;
        if (self.aic - expect).abs() > 1e-6 * (1.0 + expect.abs()) {
            return Err(Error::InvalidInput("joint copula aic inconsistent with loglik".into()));
        }
        Ok(())
    }
}

/// Evaluator with the Cholesky factor of the correlation matrix cached.
#[derive(Debug, Clone)]
pub struct JointCopula {
    family: JointFamily,
    chol: Cholesky<f64, Dyn>,
    ln_det: f64,
    t: Option<StudentT>,
}

impl JointCopula {
    pub fn new(family: JointFamily, correlation: &[Vec<f64>], nu: Option<f64>) -> Result<Self> {
        let m = correlation.len();
        if m < 2 {
            return Err(Error::InvalidInput("joint copula needs at least 2 dimensions".into()));
        }
        let r = to_matrix(correlation)?;
        for i in 0..m {
            if (r[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("correlation diagonal entry {i} is {}", r[(i, i)])));
            }
            for j in 0..i {
                if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Domain("correlation matrix is not symmetric".into()));
                }
            }
        }
        let chol = Cholesky::new(r).ok_or_else(|| Error::Domain("correlation matrix is not positive definite".into()))?;
        let ln_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let t = match (family, nu) {
            (JointFamily::Gaussian, _) => None,
            (JointFamily::StudentT, Some(v)) if v > 2.0 && v.is_finite() => Some(StudentT::new(v)),
            (JointFamily::StudentT, other) => {
                return Err(Error::Domain(format!("Student's t copula needs nu > 2, got {other:?}")));
            }
        };
        Ok(Self { family, chol, ln_det, t })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Squared Mahalanobis norm of `x` under the correlation matrix.
    fn quad(&self, x: &[f64]) -> f64 {
        let mut y = DVector::from_column_slice(x);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    pub fn ln_pdf(&self, u: &[f64]) -> f64 {
        match self.t {
            None => {
                let x: Vec<f64> = u.iter().map(|&v| norm_ppf(clamp_unit(v))).collect();
                let sq: f64 = x.iter().map(|v| v * v).sum();
                -0.5 * self.ln_det - 0.5 * (self.quad(&x) - sq)
            }
            Some(t) => {
                let x: Vec<f64> = u.iter().map(|&v| t.ppf(clamp_unit(v))).collect();
                t_ln_pdf(t.nu(), self.ln_det, self.quad(&x), &x)
            }
        }
    }

    /// One draw of the copula given a source of randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.dim();
        let eps = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let z = self.chol.l_dirty().lower_triangle() * eps;
        match self.t {
            None => z.iter().map(|&v| clamp_unit(norm_cdf(v))).collect(),
            Some(t) => {
                let w: f64 = ChiSquared::new(t.nu()).expect("nu > 0").sample(rng);
                let s = (t.nu() / w).sqrt();
                z.iter().map(|&v| clamp_unit(t.cdf(v * s))).collect()
            }
        }
    }

    pub fn family(&self) -> JointFamily {
        self.family
    }
}

fn t_ln_pdf(nu: f64, ln_det: f64, quad: f64, x: &[f64]) -> f64 {
    let m = x.len() as f64;
    let c = ln_gamma_fn(0.5 * (nu + m)) + (m - 1.0) * ln_gamma_fn(0.5 * nu) - m * ln_gamma_fn(0.5 * (nu + 1.0));
    let marg: f64 = x.iter().map(|v| (v * v / nu).ln_1p()).sum();
    c - 0.5 * ln_det - 0.5 * (nu + m) * (quad / nu).ln_1p() + 0.5 * (nu + 1.0) * marg
}

/// Sequential sum so that results do not depend on rayon's split points.
fn ordered_sum(v: Vec<f64>) -> f64 {
    v.iter().sum()
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInput("correlation matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

/// Nearest positive-definite correlation matrix by eigenvalue clipping and
/// diagonal rescaling.
pub fn project_correlation(r: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = r.len();
    let mat = to_matrix(r)?;
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigen-decomposition of the correlation matrix failed".into()));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let q = &eig.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    let d: Vec<f64> = (0..m).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let v = if i == j { 1.0 } else { (rebuilt[(i, j)] / (d[i] * d[j])).clamp(-1.0, 1.0) };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Fits both families with the correlation matrix from Kendall's tau
/// inversion, the t degrees of freedom by profile likelihood, and keeps
/// the smaller AIC (ties go to the Gaussian).
pub fn fit_joint(data: &UniformPanel) -> Result<JointCopulaFit> {
    let m = data.n_vars();
    if m < 2 {
        return Err(Error::InvalidInput("joint copula needs at least 2 columns".into()));
    }
    let n = data.n_obs();
    let tau = kendall_matrix(data.columns());
    let raw: Vec<Vec<f64>> = tau.iter().map(|row| row.iter().map(|t| (0.5 * PI * t).sin()).collect()).collect();
    let correlation = project_correlation(&raw)?;

    let gauss = JointCopula::new(JointFamily::Gaussian, &correlation, None)?;
    let rows: Vec<Vec<f64>> = (0..n).map(|t| data.row(t)).collect();
    let ll_g = ordered_sum(rows.par_iter().map(|r| gauss.ln_pdf(r)).collect());
    let k_g = (m * (m - 1) / 2) as f64;
    let aic_g = 2.0 * k_g - 2.0 * ll_g;

    let t_ll = |nu: f64| -> f64 {
        let t = StudentT::new(nu);
        ordered_sum(
            rows.par_iter()
                .map(|r| {
                    let x: Vec<f64> = r.iter().map(|&v| t.ppf(clamp_unit(v))).collect();
                    t_ln_pdf(nu, gauss.ln_det, gauss.quad(&x), &x)
                })
                .collect(),
        )
    };
    let (s, neg) = grid_brent(|s| -t_ll(2.0 + s.exp()), (JOINT_NU_MIN - 2.0).ln(), (JOINT_NU_MAX - 2.0).ln(), 10, 1e-4);
    let nu = (2.0 + s.exp()).clamp(JOINT_NU_MIN, JOINT_NU_MAX);
    let ll_t = -neg;
    let aic_t = 2.0 * (k_g + 1.0) - 2.0 * ll_t;

    if !ll_g.is_finite() {
        return Err(Error::Numerical("Gaussian joint copula log-likelihood is not finite".into()));
    }
    Ok(if ll_t.is_finite() && aic_t < aic_g {
        JointCopulaFit { family: JointFamily::StudentT, correlation, nu: Some(nu), loglik: ll_t, aic: aic_t, n_obs: n }
    } else {
        JointCopulaFit { family: JointFamily::Gaussian, correlation, nu: None, loglik: ll_g, aic: aic_g, n_obs: n }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bicop::PairCopula;
    use crate::bicop::CopulaFamily;

    #[test]
    fn two_dim_density_matches_bivariate() {
        let r = vec![vec![1.0, 0.4], vec![0.4, 1.0]];
        let g = JointCopula::new(JointFamily::Gaussian, &r, None).unwrap();
        let t = JointCopula::new(JointFamily::StudentT, &r, Some(5.0)).unwrap();
        let bg = PairCopula::new(CopulaFamily::Gaussian, &[0.4]).unwrap();
        let bt = PairCopula::new(CopulaFamily::StudentT, &[0.4, 5.0]).unwrap();
        for &(u, v) in &[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)] {
            assert!((g.ln_pdf(&[u, v]) - bg.ln_pdf(u, v)).abs() < 1e-10);
            assert!((t.ln_pdf(&[u, v]) - bt.ln_pdf(u, v)).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_repairs_indefinite_matrix() {
        let r = vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]];
        let p = project_correlation(&r).unwrap();
        assert!(JointCopula::new(JointFamily::Gaussian, &p, None).is_ok());
        for (i, row) in p.iter().enumerate() {
            assert_eq!(row[i], 1.0);
        }
        let ok = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
        let q = project_correlation(&ok).unwrap();
        assert!((q[0][1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let r = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
        assert!(JointCopula::new(JointFamily::StudentT, &r, None).is_err());
        assert!(JointCopula::new(JointFamily::Gaussian, &[vec![1.0, 1.2], vec![1.2, 1.0]], None).is_err());
    }
}
