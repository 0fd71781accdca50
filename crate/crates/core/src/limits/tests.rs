use std::f64::consts::LN_2;

use super::*;
use crate::cocycle::{diag, rotation, MatrixCocycle};
use crate::gibbs::{GibbsModel, LocallyConstantPotential};
use crate::linalg::Matrix;
use crate::sft::SymbolicSystem;
use crate::transfer::{build_grid, SpectralOptions, TransferSkeleton};

fn opts() -> SpectralOptions {
    SpectralOptions::default()
}

fn skeleton(model: &GibbsModel, cocycle: &MatrixCocycle, n: usize) -> TransferSkeleton {
    TransferSkeleton::new(model, cocycle, &build_grid(cocycle.dim(), n).unwrap()).unwrap()
}

fn conformal() -> (GibbsModel, MatrixCocycle) {
    let sys = SymbolicSystem::full_shift(2);
    let model = GibbsModel::bernoulli(&sys, &[0.5, 0.5]).unwrap();
    let c = [2.0, 0.5];
    let cocycle = MatrixCocycle::one_sided(&sys, 1, |w| rotation(0.3 + 0.7 * w[0] as f64) * c[w[0]]).unwrap();
    (model, cocycle)
}

fn showcase() -> (GibbsModel, MatrixCocycle) {
    let sys = SymbolicSystem::full_shift(2);
    let model = GibbsModel::bernoulli(&sys, &[0.5, 0.5]).unwrap();
    let cocycle = MatrixCocycle::one_sided(&sys, 1, |w| match w[0] {
        0 => diag(&[1.25, 0.8]),
        _ => rotation(0.9) * diag(&[1.1, 0.95]),
    })
    .unwrap();
    (model, cocycle)
}

/// Cramer rate of a fair `+-a` walk.
fn coin_rate(eps: f64, a: f64) -> f64 {
    let x = eps / a;
    x * x.atanh() + 0.5 * (1.0 - x * x).ln()
}

#[test]
fn identity_cocycle_has_trivial_limits() {
    let sys = SymbolicSystem::golden_mean();
    let model = GibbsModel::new(&sys, &LocallyConstantPotential::constant(&sys, 0.0).unwrap()).unwrap();
    let cocycle = MatrixCocycle::identity(&sys, 2).unwrap();
    let sk = skeleton(&model, &cocycle, 32);
    assert!(lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap().abs() < 1e-10);
    assert!(lyapunov_furstenberg(&sk, &opts()).unwrap().abs() < 1e-14);
    assert!(variance_spectral(&sk, DEFAULT_STEP, &opts()).unwrap() < 1e-8);
    let mc = lyapunov_mc(sk.sampler(), 100, 200, &[0.3, 1.0], 1).unwrap();
    assert!(mc.estimate.abs() < 1e-14);
    let clt = clt_test(sk.sampler(), 100, 200, &[1.0, 0.0], 0.0, 0.0, 1).unwrap();
    assert!(clt.degenerate);
    assert!(clt.max_abs_statistic < 1e-12);
}

#[test]
fn conformal_exponent_variance_and_log_mgf() {
    let (model, cocycle) = conformal();
    let sk = skeleton(&model, &cocycle, 64);
    assert!(lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap().abs() < 1e-9);
    assert!(lyapunov_furstenberg(&sk, &opts()).unwrap().abs() < 1e-12);
    let s2 = variance_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    assert!((s2 - LN_2 * LN_2).abs() < 1e-6, "{s2}");
    let rate = ldp_rate(&sk, 0.0, 0.5, 11, &opts()).unwrap();
    assert!(rate.convex);
    assert_eq!(rate.halvings, 0);
    for (t, l) in rate.t_nodes.iter().zip(&rate.log_mgf) {
        assert!((l - (t * LN_2).cosh().ln()).abs() < 1e-10, "t={t}");
    }
    let (t, r) = legendre_at(&sk, 0.0, 0.1, rate.eta, &opts()).unwrap();
    assert!((r - coin_rate(0.1, LN_2)).abs() < 1e-9, "{r}");
    assert!((t - (0.1 / LN_2).atanh() / LN_2).abs() < 1e-5);
    let (_, r_neg) = legendre_at(&sk, 0.0, -0.1, rate.eta, &opts()).unwrap();
    assert!((r_neg - r).abs() < 1e-9);
    // Sampled Legendre transform agrees with the refined one to parabola accuracy.
    let sampled = legendre_from_samples(&rate.t_nodes, &rate.log_mgf, 0.1);
    assert!((sampled - r).abs() < 1e-4 * r.max(1e-3) + 1e-6, "{sampled} vs {r}");
    assert!(rate.rate[0].abs() < 1e-15);
}

#[test]
fn dominated_diagonal_exponent() {
    let sys = SymbolicSystem::full_shift(2);
    let model = GibbsModel::bernoulli(&sys, &[0.4, 0.6]).unwrap();
    let cocycle = MatrixCocycle::constant(&sys, diag(&[3.0, 1.0])).unwrap();
    let sk = skeleton(&model, &cocycle, 128);
    // Both coordinate lines are invariant, so log rho has a kink at 0: the
    // attracting line governs z > 0 and the repelling one z < 0.
    for z in [0.1, 0.5] {
        assert!((log_rho(&sk, z, &opts()).unwrap() - z * 3f64.ln()).abs() < 1e-10);
        assert!(log_rho(&sk, -z, &opts()).unwrap().abs() < 1e-10);
    }
    let mc = lyapunov_mc(sk.sampler(), 400, 200, &[1.0, 1.0], 3).unwrap();
    assert!((mc.estimate - 3f64.ln()).abs() < 0.01);
}

#[test]
fn scalar_exponent_is_an_integral() {
    let sys = SymbolicSystem::golden_mean();
    let pot = LocallyConstantPotential::from_fn(&sys, 2, |w| 0.4 * w[0] as f64 + 0.1 * w[1] as f64).unwrap();
    let model = GibbsModel::new(&sys, &pot).unwrap();
    let a = |w: &[usize]| 0.7 + 0.9 * w[0] as f64 + 0.3 * w[1] as f64;
    let cocycle = MatrixCocycle::one_sided(&sys, 2, |w| Matrix::from_element(1, 1, a(w))).unwrap();
    let exact: f64 = cocycle
        .words()
        .words()
        .iter()
        .map(|w| model.cylinder_mass(w) * a(w).ln())
        .sum();
    let sk = skeleton(&model, &cocycle, 1);
    assert!((lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap() - exact).abs() < 1e-9);
    assert!((lyapunov_furstenberg(&sk, &opts()).unwrap() - exact).abs() < 1e-12);
    let mc = lyapunov_mc(sk.sampler(), 200, 1000, &[1.0], 5).unwrap();
    assert!((mc.estimate - exact).abs() < 4.0 * mc.std_error + 1e-3);
}

#[test]
fn scaling_shifts_the_exponent() {
    let (model, cocycle) = showcase();
    let c: f64 = 0.37;
    let scaled = cocycle.map_generators(|m| m * c.exp()).unwrap();
    let sk = skeleton(&model, &cocycle, 64);
    let sk2 = skeleton(&model, &scaled, 64);
    let (l, l2) = (
        lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap(),
        lyapunov_spectral(&sk2, DEFAULT_STEP, &opts()).unwrap(),
    );
    assert!((l2 - l - c).abs() < 1e-8);
    let (v, v2) = (
        variance_spectral(&sk, DEFAULT_STEP, &opts()).unwrap(),
        variance_spectral(&sk2, DEFAULT_STEP, &opts()).unwrap(),
    );
    assert!((v - v2).abs() < 1e-6);
}

#[test]
fn start_direction_does_not_matter() {
    let (model, cocycle) = showcase();
    let sk = skeleton(&model, &cocycle, 32);
    let a = lyapunov_mc(sk.sampler(), 500, 300, &[1.0, 0.0], 9).unwrap();
    let b = lyapunov_mc(sk.sampler(), 500, 300, &[0.2, -1.0], 9).unwrap();
    assert!((a.estimate - b.estimate).abs() < 0.01);
    let spectral = lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    assert!((a.estimate - spectral).abs() < 4.0 * a.std_error + 0.01);
}

#[test]
fn variance_routes_agree_on_the_showcase() {
    let (model, cocycle) = showcase();
    let sk = skeleton(&model, &cocycle, 128);
    let l = lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    let s2 = variance_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    let mc = variance_mc(sk.sampler(), 1000, 2000, &[1.0, 0.0], l, 11).unwrap();
    assert!((mc.estimate - s2).abs() < 4.0 * mc.std_error + 0.05 * s2, "{} vs {s2}", mc.estimate);
}

#[test]
fn conformal_clt_is_close_to_normal() {
    let (model, cocycle) = conformal();
    let sk = skeleton(&model, &cocycle, 16);
    let r = clt_test(sk.sampler(), 400, 2000, &[1.0, 0.0], 0.0, LN_2 * LN_2, 2).unwrap();
    assert!(!r.degenerate);
    assert!(r.ks_statistic < 0.06, "{}", r.ks_statistic);
}

#[test]
fn ks_distance_examples() {
    let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.5e-3 + 1e-12);
    assert!((ks_distance(&xs, |x| (x - 0.1).clamp(0.0, 1.0)) - 0.1).abs() < 2e-3);
}

#[test]
fn tilted_and_naive_tails_agree() {
    let (model, cocycle) = conformal();
    let sk = skeleton(&model, &cocycle, 16);
    let eps = 0.1;
    let (t_up, _) = legendre_at(&sk, 0.0, eps, 0.5, &opts()).unwrap();
    let (t_down, _) = legendre_at(&sk, 0.0, -eps, 0.5, &opts()).unwrap();
    let run = |mode| ldp_empirical(&sk, &[100], eps, 0.0, 4000, &[1.0, 0.0], mode, [t_up, t_down], 4, &opts()).unwrap();
    let naive = &run(TailSampling::Naive)[0];
    let tilted = &run(TailSampling::Tilted)[0];
    let (a, b) = (naive.vector, tilted.vector);
    assert!(a.usable && b.usable);
    assert!((a.probability - b.probability).abs() < 4.0 * a.std_error.hypot(b.std_error));
    // The exact binomial tail: |2k - 100| log 2 > 10.
    let exact: f64 = (0..=100u32)
        .filter(|k| ((2.0 * *k as f64 - 100.0) * LN_2).abs() > 10.0)
        .map(|k| binomial(100, k) * 0.5f64.powi(100))
        .sum();
    assert!((b.probability - exact).abs() < 4.0 * b.std_error, "{} vs {exact}", b.probability);
    assert!(b.std_error < a.std_error);
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn tilting_is_unbiased_in_two_dimensions() {
    let (model, cocycle) = showcase();
    let sk = skeleton(&model, &cocycle, 64);
    let l = lyapunov_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    let s2 = variance_spectral(&sk, DEFAULT_STEP, &opts()).unwrap();
    let eps = 2.0 * (s2 / 80.0).sqrt();
    let (t_up, _) = legendre_at(&sk, l, eps, 0.5, &opts()).unwrap();
    let (t_down, _) = legendre_at(&sk, l, -eps, 0.5, &opts()).unwrap();
    let run = |mode| ldp_empirical(&sk, &[80], eps, l, 6000, &[1.0, 0.0], mode, [t_up, t_down], 8, &opts()).unwrap();
    let naive = run(TailSampling::Naive)[0].clone();
    let tilted = run(TailSampling::Tilted)[0].clone();
    for (a, b) in [(naive.vector, tilted.vector), (naive.norm, tilted.norm)] {
        assert!(a.usable && b.usable, "{a:?} vs {b:?}");
        assert!(
            (a.probability - b.probability).abs() < 4.0 * a.std_error.hypot(b.std_error),
            "{a:?} vs {b:?}"
        );
    }
}

#[test]
fn naive_sampling_beyond_the_support_sees_nothing() {
    let (model, cocycle) = conformal();
    let sk = skeleton(&model, &cocycle, 16);
    let r = ldp_empirical(&sk, &[50], 1.0, 0.0, 500, &[1.0, 0.0], TailSampling::Naive, [0.0, 0.0], 1, &opts()).unwrap();
    assert_eq!(r[0].vector.exceedances, 0);
    assert!(!r[0].vector.usable);
    assert!(r[0].vector.rate.is_none());
}

#[test]
fn chebyshev_coefficients_of_smooth_curves_decay() {
    let t: Vec<f64> = (0..15).map(|i| -1.0 + i as f64 / 7.0).collect();
    let y: Vec<f64> = t.iter().map(|x| x.exp()).collect();
    let c = chebyshev_fit(&t, &y, 10).unwrap();
    assert!((c[0] - 1.266_065_877_752_008_4).abs() < 1e-10);
    assert!(decay_ratio(&c) < 0.3);
}

#[test]
fn exponent_curve_along_bernoulli_family() {
    let (_, cocycle) = showcase();
    let sys = SymbolicSystem::full_shift(2);
    let family: Vec<(f64, GibbsModel)> = (0..7)
        .map(|i| {
            let p = 0.2 + 0.1 * i as f64;
            (p, GibbsModel::bernoulli(&sys, &[p, 1.0 - p]).unwrap())
        })
        .collect();
    let curve = exponent_curve(&family, &cocycle, &build_grid(2, 64).unwrap(), DEFAULT_STEP, &opts()).unwrap();
    assert_eq!(curve.lambda1.len(), 7);
    assert!(curve.lambda1.iter().all(|l| l.is_finite() && *l > 0.0));
    assert!(curve.decay_ratio < 0.8, "{}", curve.decay_ratio);
}

#[test]
fn trend_check() {
    assert!(rates_trend_toward(&[0.02, 0.015, 0.012, 0.011], 0.0104, 0.05));
    assert!(!rates_trend_toward(&[0.012, 0.02], 0.0104, 0.05));
}

#[test]
fn sampling_is_reproducible() {
    let (model, cocycle) = showcase();
    let sk = skeleton(&model, &cocycle, 16);
    let a = sample_log_norms(sk.sampler(), 60, 50, &[1.0, 2.0], 77).unwrap();
    let b = sample_log_norms(sk.sampler(), 60, 50, &[1.0, 2.0], 77).unwrap();
    assert_eq!(a, b);
}
