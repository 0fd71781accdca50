//! Cross-module checks on small systems.

use cocycle_core::cocycle::{diag, rotation, two_sided_to_one_sided, AnchorRule, MatrixCocycle};
use cocycle_core::gibbs::{GibbsModel, LocallyConstantPotential};
use cocycle_core::limits::{log_rho, lyapunov_furstenberg, lyapunov_mc, lyapunov_spectral, variance_spectral};
use cocycle_core::linalg::Matrix;
use cocycle_core::sft::{SymbolicSystem, Word};
use cocycle_core::transfer::{build_grid, spectral_radius, SpectralOptions, TransferSkeleton};

fn window_matrix(w: &[usize]) -> Matrix {
    let base = match w[1] {
        0 => diag(&[1.2, 0.85]),
        _ => rotation(0.6) * diag(&[1.05, 0.95]),
    };
    // Weak dependence on the previous symbol keeps the cocycle fiber bunched.
    rotation(0.05 * (w[0] as f64 + 1.0)) * base
}

#[test]
fn reduction_of_a_two_sided_cocycle_keeps_the_exponent() {
    let sys = SymbolicSystem::full_shift(2);
    let model = GibbsModel::bernoulli(&sys, &[0.4, 0.6]).unwrap();
    let two_sided = MatrixCocycle::two_sided(&sys, 1, 1, window_matrix).unwrap();
    let reduction = two_sided_to_one_sided(&sys, &two_sided, AnchorRule::LexFirst, 1e-12).unwrap();
    assert!(reduction.cocycle.is_one_sided());
    assert!(reduction.tail_bound < 1e-9);
    // Reading x_0 x_1 instead of x_{-1} x_0 shifts every product by one step.
    let shifted = MatrixCocycle::one_sided(&sys, 2, window_matrix).unwrap();

    let grid = build_grid(2, 128).unwrap();
    let opts = SpectralOptions::default();
    let a = TransferSkeleton::new(&model, &reduction.cocycle, &grid).unwrap();
    let b = TransferSkeleton::new(&model, &shifted, &grid).unwrap();
    let la = lyapunov_spectral(&a, 1e-3, &opts).unwrap();
    let lb = lyapunov_spectral(&b, 1e-3, &opts).unwrap();
    assert!((la - lb).abs() < 1e-4, "{la} vs {lb}");

    let u = [1.0, 0.0];
    let ma = lyapunov_mc(a.sampler(), 2000, 400, &u, 11).unwrap();
    let mb = lyapunov_mc(b.sampler(), 2000, 400, &u, 12).unwrap();
    assert!((ma.estimate - mb.estimate).abs() < 1e-3, "{ma:?} vs {mb:?}");
    assert!((ma.estimate - la).abs() < 3.0 * ma.std_error + 1e-4);
}

#[test]
fn markov_measure_on_the_golden_mean_shift() {
    let sys = SymbolicSystem::golden_mean();
    let pot = LocallyConstantPotential::markov(&sys, &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
    let model = GibbsModel::new(&sys, &pot).unwrap();
    let a = MatrixCocycle::one_sided(&sys, 1, |w| match w[0] {
        0 => diag(&[1.3, 0.9]),
        _ => rotation(1.1) * diag(&[1.1, 0.8]),
    })
    .unwrap();
    let grid = build_grid(2, 96).unwrap();
    let sk = TransferSkeleton::new(&model, &a, &grid).unwrap();
    let opts = SpectralOptions::default();
    let r = spectral_radius(&sk.operator(0.0), &opts).unwrap();
    assert!((r.rho - 1.0).abs() < 1e-10);
    let l_spec = lyapunov_spectral(&sk, 1e-3, &opts).unwrap();
    let l_furst = lyapunov_furstenberg(&sk, &opts).unwrap();
    assert!((l_spec - l_furst).abs() < 1e-6, "{l_spec} vs {l_furst}");
    let mc = lyapunov_mc(sk.sampler(), 2000, 500, &[0.0, 1.0], 3).unwrap();
    assert!((mc.estimate - l_spec).abs() < 3.0 * mc.std_error + 1e-3, "{mc:?} vs {l_spec}");
    assert!(variance_spectral(&sk, 1e-3, &opts).unwrap() > 0.0);
}

#[test]
fn determinant_bounds_the_growth() {
    // Sum of exponents is the integral of log |det|; the top one is at least half of it.
    let sys = SymbolicSystem::full_shift(3);
    let model = GibbsModel::bernoulli(&sys, &[0.2, 0.3, 0.5]).unwrap();
    let gens = [diag(&[1.5, 1.0]), rotation(0.4) * diag(&[1.2, 0.7]), rotation(2.0) * diag(&[1.0, 1.0])];
    let pairs: Vec<(Word, Matrix)> = gens.iter().enumerate().map(|(i, m)| (Word::new(vec![i]), m.clone())).collect();
    let a = MatrixCocycle::from_pairs(&sys, 1, &pairs).unwrap();
    let grid = build_grid(2, 128).unwrap();
    let sk = TransferSkeleton::new(&model, &a, &grid).unwrap();
    let opts = SpectralOptions::default();
    let l = lyapunov_spectral(&sk, 1e-3, &opts).unwrap();
    let half_log_det: f64 = 0.5 * [0.2, 0.3, 0.5].iter().zip(&gens).map(|(p, m)| p * m.determinant().abs().ln()).sum::<f64>();
    assert!(l >= half_log_det - 1e-6, "{l} vs {half_log_det}");
    assert!(log_rho(&sk, 0.5, &opts).unwrap() > 0.5 * l - 1e-9);
}
