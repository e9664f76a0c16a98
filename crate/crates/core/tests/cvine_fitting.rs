mod common;

use cdcv::bicop::{select_bicop, BivariateCopulaFit, CopulaFamily, PairCopula};
use cdcv::cvine::{fit_cvine, CVineModel, VinePair};
use cdcv::marginals::UniformPanel;
use cdcv::seeds;
use common::{ks_critical_1pct, ks_distance, uniforms};
use rand::Rng;

fn gaussian(rho: f64) -> BivariateCopulaFit {
    common::pair_fit(CopulaFamily::Gaussian, &[rho])
}

/// Columns drawn from a Gaussian copula with the given correlation matrix.
fn gaussian_panel(r: &[[f64; 3]; 3], n: usize, seed: u64) -> UniformPanel {
    let l00 = r[0][0].sqrt();
    let l10 = r[1][0] / l00;
    let l11 = (r[1][1] - l10 * l10).sqrt();
    let l20 = r[2][0] / l00;
    let l21 = (r[2][1] - l20 * l10) / l11;
    let l22 = (r[2][2] - l20 * l20 - l21 * l21).sqrt();
    let mut rng = seeds::rng(seed, &[]);
    let mut cols: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let z: [f64; 3] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
        let x = [l00 * z[0], l10 * z[0] + l11 * z[1], l20 * z[0] + l21 * z[1] + l22 * z[2]];
        for j in 0..3 {
            cols[j].push(cdcv::special::norm_cdf(x[j]));
        }
    }
    UniformPanel::new(cols).unwrap()
}

#[test]
fn two_variables_is_one_pair_fit() {
    let c = PairCopula::new(CopulaFamily::Frank, &[4.0]).unwrap();
    let (u, v) = common::sample_pair(&c, 1000, 1);
    let data = UniformPanel::new(vec![v.clone(), u.clone()]).unwrap();
    let vine = fit_cvine(&data, &[0, 1]).unwrap();
    let direct = select_bicop(&u, &v).unwrap();
    assert_eq!(vine.pairs.len(), 1);
    assert_eq!(vine.pairs[0].fit, direct);
    assert_eq!(vine.loglik(), direct.loglik);
}

#[test]
fn partial_correlation_recovered() {
    let r = [[1.0, 0.6, 0.5], [0.6, 1.0, 0.4], [0.5, 0.4, 1.0]];
    let data = gaussian_panel(&r, 5000, 2);
    let vine = cdcv::cvine::fit_cvine_from(&data, &[0, 1, 2], &[CopulaFamily::Gaussian]).unwrap();
    let partial = (0.4 - 0.6 * 0.5) / ((1.0f64 - 0.36) * (1.0 - 0.25)).sqrt();
    assert!((vine.pair(0, 1).fit.params[0] - 0.6).abs() < 0.05);
    assert!((vine.pair(0, 2).fit.params[0] - 0.5).abs() < 0.05);
    assert!((vine.pair(1, 1).fit.params[0] - partial).abs() < 0.07);
}

#[test]
fn independent_data_gives_near_zero_structure() {
    let t = 2000;
    let cols: Vec<Vec<f64>> = (0..4).map(|j| uniforms(t, 10 + j)).collect();
    let data = UniformPanel::new(cols).unwrap();
    let vine = fit_cvine(&data, &[0, 1, 2, 3]).unwrap();
    for p in &vine.pairs {
        let f = &p.fit;
        let weak = match f.family {
            CopulaFamily::Independence => true,
            _ => f.copula().kendall_tau().abs() < 0.05,
        };
        assert!(weak, "{f:?}");
    }
    assert!(vine.loglik().abs() < 2.0 * (t as f64).sqrt());
}

#[test]
fn training_loglik_identity() {
    let r = [[1.0, 0.5, 0.3], [0.5, 1.0, 0.2], [0.3, 0.2, 1.0]];
    let g = gaussian_panel(&r, 500, 3);
    let mut cols = g.into_columns();
    cols.push(uniforms(500, 4));
    let data = UniformPanel::new(cols).unwrap();
    let vine = fit_cvine(&data, &[2, 0, 3, 1]).unwrap();
    let total = vine.panel_loglik(&data).unwrap();
    assert!((total - vine.loglik()).abs() < 1e-8 * (1.0 + total.abs()), "{total} vs {}", vine.loglik());
    let by_row: f64 = (0..500).map(|t| vine.ln_density(&data.row(t)).unwrap()).sum();
    assert!((by_row - total).abs() < 1e-8 * (1.0 + total.abs()));
}

#[test]
fn true_model_dominates_perturbed() {
    let truth = CVineModel::new(
        vec![0, 1, 2],
        vec![
            VinePair { tree: 0, offset: 1, fit: gaussian(0.6) },
            VinePair { tree: 0, offset: 2, fit: common::pair_fit(CopulaFamily::Clayton, &[1.5]) },
            VinePair { tree: 1, offset: 1, fit: common::pair_fit(CopulaFamily::Frank, &[3.0]) },
        ],
    )
    .unwrap();
    for s in 0..10 {
        let data = truth.simulate(5000, 40 + s).unwrap();
        let mut bad = truth.clone();
        bad.pairs[0].fit.params[0] = 0.5;
        bad.pairs[2].fit.params[0] = 2.0;
        assert!(truth.panel_loglik(&data).unwrap() > bad.panel_loglik(&data).unwrap());
    }
}

#[test]
fn simulate_refit_round_trip_and_uniform_margins() {
    let truth = CVineModel::new(
        vec![1, 0, 2],
        vec![
            VinePair { tree: 0, offset: 1, fit: common::pair_fit(CopulaFamily::StudentT, &[0.5, 4.0]) },
            VinePair { tree: 0, offset: 2, fit: gaussian(-0.4) },
            VinePair { tree: 1, offset: 1, fit: gaussian(0.3) },
        ],
    )
    .unwrap();
    let data = truth.simulate(10_000, 7).unwrap();
    for j in 0..3 {
        assert!(ks_distance(data.column(j), |x| x.clamp(0.0, 1.0)) < ks_critical_1pct(10_000));
    }
    let refit = cdcv::cvine::fit_cvine_from(&data, &[1, 0, 2], &[CopulaFamily::StudentT, CopulaFamily::Gaussian]).unwrap();
    assert_eq!(refit.pair(0, 1).fit.family, CopulaFamily::StudentT);
    assert!((refit.pair(0, 1).fit.params[0] - 0.5).abs() < 0.05);
    assert!((refit.pair(0, 2).fit.params[0] + 0.4).abs() < 0.05);
    assert!((refit.pair(1, 1).fit.params[0] - 0.3).abs() < 0.05);
}

#[test]
fn monte_carlo_density_normalization() {
    let vine = CVineModel::new(
        vec![0, 1, 2],
        vec![
            VinePair { tree: 0, offset: 1, fit: gaussian(0.5) },
            VinePair { tree: 0, offset: 2, fit: common::pair_fit(CopulaFamily::Frank, &[3.0]) },
            VinePair { tree: 1, offset: 1, fit: common::pair_fit(CopulaFamily::Clayton, &[1.0]) },
        ],
    )
    .unwrap();
    let mut rng = seeds::rng(11, &[]);
    let n = 1_000_000;
    let mean = (0..n).map(|_| vine.density(&[rng.random(), rng.random(), rng.random()]).unwrap()).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
}
