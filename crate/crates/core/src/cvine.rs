//! Canonical (C-) vine copulas: every tree is a star around one root.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bicop::{select_bicop_from, BivariateCopulaFit, CopulaFamily, PairCopula};
use crate::error::{Error, Result};
use crate::marginals::UniformPanel;
use crate::seeds;
use crate::special::clamp_unit;

/// Pair copula of tree `tree` between that tree's root and the variable
/// `offset` positions after it in the ordering (both 0-based positions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VinePair {
    pub tree: usize,
    pub offset: usize,
    #[serde(flatten)]
    pub fit: BivariateCopulaFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVineModel {
    /// Variable ids; position j is the root of tree j.
    pub ordering: Vec<usize>,
    pub pairs: Vec<VinePair>,
}

fn pair_index(n: usize, tree: usize, offset: usize) -> usize {
    tree * (2 * n - tree - 1) / 2 + offset - 1
}

impl CVineModel {
    pub fn new(ordering: Vec<usize>, pairs: Vec<VinePair>) -> Result<Self> {
        let model = Self { ordering, pairs };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.ordering.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let mut seen = vec![false; n];
        for &v in &self.ordering {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidInput("vine ordering is not a permutation".into()));
            }
        }
        if self.pairs.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::InvalidInput(format!(
                "vine of dimension {n} needs {} pairs, got {}",
                n * n.saturating_sub(1) / 2,
                self.pairs.len()
            )));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if p.offset == 0 || p.tree + p.offset >= n || pair_index(n, p.tree, p.offset) != i {
                return Err(Error::InvalidInput(format!("vine pair {i} has position ({}, {})", p.tree, p.offset)));
            }
            p.fit.validate()?;
        }
        Ok(())
    }

    pub fn pair(&self, tree: usize, offset: usize) -> &VinePair {
        &self.pairs[pair_index(self.dim(), tree, offset)]
    }

    fn copulas(&self) -> Vec<PairCopula> {
        self.pairs.iter().map(|p| p.fit.copula()).collect()
    }

    /// Sum of the stored pair log-likelihoods.
    pub fn loglik(&self) -> f64 {
        self.pairs.iter().map(|p| p.fit.loglik).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.pairs.iter().map(|p| p.fit.family.n_params()).sum()
    }

    pub fn ln_density(&self, u: &[f64]) -> Result<f64> {
        let n = self.dim();
        if u.len() != n {
            return Err(Error::InvalidInput(format!("point has {} coordinates, vine has {n}", u.len())));
        }
        let cops = self.copulas();
        let mut z: Vec<f64> = self.ordering.iter().map(|&i| clamp_unit(u[i])).collect();
        let mut total = 0.0;
        for j in 0..n.saturating_sub(1) {
            let root = z[j];
            for k in j + 1..n {
                let c = &cops[pair_index(n, j, k - j)];
                total += c.ln_pdf(z[k], root);
                z[k] = c.h(z[k], root);
            }
        }
        Ok(total)
    }

    pub fn density(&self, u: &[f64]) -> Result<f64> {
        self.ln_density(u).map(f64::exp)
    }

    /// Log-likelihood of a panel: the sum over rows of the log density.
    pub fn panel_loglik(&self, data: &UniformPanel) -> Result<f64> {
        let n = self.dim();
        if data.n_vars() != n {
            return Err(Error::InvalidInput(format!("panel has {} columns, vine has {n}", data.n_vars())));
        }
        let cops = self.copulas();
        let mut x: Vec<Vec<f64>> = self.ordering.iter().map(|&i| data.column(i).to_vec()).collect();
        let mut total = 0.0;
        for j in 0..n.saturating_sub(1) {
            let (head, tail) = x.split_at_mut(j + 1);
            let root = &head[j];
            let parts: Vec<f64> = tail
                .par_iter_mut()
                .enumerate()
                .map(|(o, col)| {
                    let c = &cops[pair_index(n, j, o + 1)];
                    let ll = c.loglik(col, root);
                    col.iter_mut().zip(root).for_each(|(a, &r)| *a = c.h(*a, r));
                    ll
                })
                .collect();
            total += parts.iter().sum::<f64>();
        }
        Ok(total)
    }

    /// Draws `n_samples` rows; uniforms come from one seeded stream, so the
    /// output does not depend on the thread count.
    pub fn simulate(&self, n_samples: usize, seed: u64) -> Result<UniformPanel> {
        let n = self.dim();
        if n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be at least 1".into()));
        }
        let mut rng = seeds::rng(seed, &[]);
        let w: Vec<f64> = (0..n_samples * n).map(|_| rng.random::<f64>()).collect();
        let cops = self.copulas();
        let rows: Vec<Vec<f64>> = w.par_chunks(n).map(|row| self.simulate_row(&cops, row)).collect();
        let mut columns = vec![vec![0.0; n_samples]; n];
        for (t, row) in rows.iter().enumerate() {
            for (pos, &var) in self.ordering.iter().enumerate() {
                columns[var][t] = row[pos];
            }
        }
        UniformPanel::new(columns)
    }

    /// Nested inverse-h / h recursion for one row; `w` holds independent
    /// uniforms and the result is indexed by ordering position.
    fn simulate_row(&self, cops: &[PairCopula], w: &[f64]) -> Vec<f64> {
        let n = w.len();
        // v[i][j]: variable i conditioned on the first j roots
        let mut v = vec![vec![0.0; n]; n];
        let mut x = vec![0.0; n];
        x[0] = clamp_unit(w[0]);
        v[0][0] = x[0];
        for i in 1..n {
            let mut val = clamp_unit(w[i]);
            for k in (0..i).rev() {
                val = cops[pair_index(n, k, i - k)].h_inv(val, v[k][k]);
            }
            x[i] = val;
            v[i][0] = val;
            for j in 0..i {
                v[i][j + 1] = cops[pair_index(n, j, i - j)].h(v[i][j], v[j][j]);
            }
        }
        x
    }
}

/// Fits a C-vine with the given ordering, selecting each pair copula by AIC.
pub fn fit_cvine(data: &UniformPanel, ordering: &[usize]) -> Result<CVineModel> {
    fit_cvine_from(data, ordering, &CopulaFamily::PARAMETRIC)
}

pub fn fit_cvine_from(data: &UniformPanel, ordering: &[usize], families: &[CopulaFamily]) -> Result<CVineModel> {
    let n = data.n_vars();
    if ordering.len() != n {
        return Err(Error::InvalidInput(format!("ordering has {} entries for {n} variables", ordering.len())));
    }
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for &i in ordering {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidInput("vine ordering is not a permutation".into()));
        }
        x.push(data.column(i).to_vec());
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n.saturating_sub(1) {
        let (head, tail) = x.split_at_mut(j + 1);
        let root = &head[j];
        let fits = tail
            .par_iter_mut()
            .map(|col| {
                let fit = select_bicop_from(col, root, families)?;
                let c = fit.copula();
                col.iter_mut().zip(root).for_each(|(a, &r)| *a = c.h(*a, r));
                Ok(fit)
            })
            .collect::<Result<Vec<_>>>()?;
        pairs.extend(fits.into_iter().enumerate().map(|(o, fit)| VinePair { tree: j, offset: o + 1, fit }));
    }
    CVineModel::new(ordering.to_vec(), pairs)
}
