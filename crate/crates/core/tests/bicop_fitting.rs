mod common;

use cdcv::bicop::{fit_bicop, select_bicop, select_bicop_from, CopulaFamily, PairCopula};
use cdcv::special::norm_cdf;
use common::{sample_pair, uniforms};

#[test]
fn gaussian_simulate_refit() {
    let c = PairCopula::new(CopulaFamily::Gaussian, &[0.6]).unwrap();
    let (u, v) = sample_pair(&c, 10_000, 1);
    let fit = fit_bicop(&u, &v, CopulaFamily::Gaussian).unwrap();
    assert!((fit.params[0] - 0.6).abs() < 0.03, "{:?}", fit.params);
}

#[test]
fn clayton_simulate_refit() {
    let c = PairCopula::new(CopulaFamily::Clayton, &[2.0]).unwrap();
    let (u, v) = sample_pair(&c, 10_000, 2);
    let fit = fit_bicop(&u, &v, CopulaFamily::Clayton).unwrap();
    assert!((fit.params[0] - 2.0).abs() < 0.2, "{:?}", fit.params);
}

#[test]
fn student_t_and_frank_simulate_refit() {
    let c = PairCopula::new(CopulaFamily::StudentT, &[-0.4, 5.0]).unwrap();
    let (u, v) = sample_pair(&c, 10_000, 3);
    let fit = fit_bicop(&u, &v, CopulaFamily::StudentT).unwrap();
    assert!((fit.params[0] + 0.4).abs() < 0.03 && (fit.params[1] - 5.0).abs() < 1.5, "{:?}", fit.params);
    let c = PairCopula::new(CopulaFamily::Frank, &[-6.0]).unwrap();
    let (u, v) = sample_pair(&c, 10_000, 4);
    let fit = fit_bicop(&u, &v, CopulaFamily::Frank).unwrap();
    assert!((fit.params[0] + 6.0).abs() < 0.4, "{:?}", fit.params);
}

#[test]
fn independent_uniforms() {
    let u = uniforms(10_000, 5);
    let v = uniforms(10_000, 6);
    let g = fit_bicop(&u, &v, CopulaFamily::Gaussian).unwrap();
    assert!(g.params[0].abs() < 0.03);
    let s = select_bicop(&u, &v).unwrap();
    assert!(s.family == CopulaFamily::Independence || s.family == CopulaFamily::Gaussian && s.params[0].abs() < 0.05);
}

#[test]
fn strong_clayton_selected() {
    let c = PairCopula::new(CopulaFamily::Clayton, &[4.0]).unwrap();
    let hits = (0..50)
        .filter(|&s| {
            let (u, v) = sample_pair(&c, 10_000, 100 + s);
            select_bicop(&u, &v).unwrap().family == CopulaFamily::Clayton
        })
        .count();
    assert!(hits >= 45, "{hits}/50");
}

#[test]
fn student_t_selected() {
    let c = PairCopula::new(CopulaFamily::StudentT, &[0.5, 3.0]).unwrap();
    let hits = (0..20)
        .filter(|&s| {
            let (u, v) = sample_pair(&c, 10_000, 200 + s);
            select_bicop(&u, &v).unwrap().family == CopulaFamily::StudentT
        })
        .count();
    assert!(hits >= 16, "{hits}/20");
}

#[test]
fn whitelist_is_respected() {
    let c = PairCopula::new(CopulaFamily::Clayton, &[3.0]).unwrap();
    let (u, v) = sample_pair(&c, 2000, 7);
    let fit = select_bicop_from(&u, &v, &[CopulaFamily::Gaussian, CopulaFamily::Frank]).unwrap();
    assert!(matches!(fit.family, CopulaFamily::Gaussian | CopulaFamily::Frank));
    assert!((fit.aic - (2.0 * fit.family.n_params() as f64 - 2.0 * fit.loglik)).abs() < 1e-9);
}

#[test]
fn gaussian_h_matches_cdf_difference() {
    // dC/dv of the Gaussian copula is the conditional normal CDF
    let rho: f64 = 0.7;
    let c = PairCopula::new(CopulaFamily::Gaussian, &[rho]).unwrap();
    let (u, v) = (0.9, 0.1);
    let (x, y) = (cdcv::special::norm_ppf(u), cdcv::special::norm_ppf(v));
    let expect = norm_cdf((x - rho * y) / (1.0 - rho * rho).sqrt());
    assert!((c.h(u, v) - expect).abs() < 1e-10);
}
