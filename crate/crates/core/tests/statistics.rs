//! Sampling statistics of simulated ensembles.

use num_complex::Complex64;
use thdsim::analysis::{
    bhattacharyya, histogram_marginal, phase_averaged_marginal, pointwise_variance, quadrature_moments,
    recover_quadratures,
};
use thdsim::{
    make_mode, overlap, simulate_ensemble, EnsembleSpec, ErrorModel, ModeShape, Parity, QuadratureGrid,
    QuantumState, ThetaSchedule, TimeGrid,
};

const TRACES: usize = 20_000;

fn grid() -> TimeGrid {
    TimeGrid::centered(1.0, 128).unwrap()
}

#[test]
fn coherent_mean_and_variance() {
    let alpha = Complex64::new(1.5, 0.5);
    let s = QuantumState::coherent(alpha, 40).unwrap();
    let bg = QuantumState::vacuum(40).unwrap();
    let mode = make_mode(ModeShape::Gaussian { center: 0.0, width: 8.0 }, grid()).unwrap();
    for (k, &theta) in [0.0, 1.0].iter().enumerate() {
        let mut spec = EnsembleSpec::new(&s, &mode, &bg);
        spec.traces = TRACES;
        spec.seed = 40 + k as u64;
        spec.schedule = ThetaSchedule::Fixed { theta };
        let e = simulate_ensemble(&spec).unwrap();
        let (mean, var) = quadrature_moments(&recover_quadratures(&e, &mode).unwrap());
        let expected = 2f64.sqrt() * (alpha * Complex64::from_polar(1.0, theta)).re;
        // 5 standard errors
        let se = (0.5 / TRACES as f64).sqrt();
        assert!((mean - expected).abs() < 5.0 * se, "θ={theta}: {mean} vs {expected}");
        assert!((var - 0.5).abs() < 5.0 * 0.5 * (2.0 / TRACES as f64).sqrt(), "θ={theta}: var {var}");
    }
}

#[test]
fn orthogonal_mode_sees_only_background() {
    let s = QuantumState::fock(2, 20).unwrap();
    let bg = QuantumState::thermal(0.5, 40).unwrap();
    let signal = make_mode(ModeShape::Gaussian { center: -30.0, width: 5.0 }, grid()).unwrap();
    let other = make_mode(ModeShape::Gaussian { center: 35.0, width: 5.0 }, grid()).unwrap();
    assert!(overlap(&signal, &other).unwrap().abs() < 1e-10);
    let mut spec = EnsembleSpec::new(&s, &signal, &bg);
    spec.traces = TRACES;
    spec.seed = 9;
    let e = simulate_ensemble(&spec).unwrap();
    let (mean, var) = quadrature_moments(&recover_quadratures(&e, &other).unwrap());
    assert!(mean.abs() < 5.0 * (1.0 / TRACES as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 5.0 * (2.0 / TRACES as f64).sqrt(), "var {var}");
}

#[test]
fn seeds_reproduce_and_differ() {
    let s = QuantumState::fock(1, 10).unwrap();
    let bg = QuantumState::vacuum(10).unwrap();
    let mode = make_mode(ModeShape::Gaussian { center: 0.0, width: 8.0 }, grid()).unwrap();
    let run = |seed| {
        let mut spec = EnsembleSpec::new(&s, &mode, &bg);
        spec.traces = 50;
        spec.seed = seed;
        simulate_ensemble(&spec).unwrap().traces().to_vec()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn monte_carlo_phase_jitter_matches_phase_average() {
    let s = QuantumState::cat(Complex64::new(2.0, 0.0), Parity::Even, 40).unwrap();
    let bg = QuantumState::vacuum(40).unwrap();
    let mode = make_mode(ModeShape::Gaussian { center: 0.0, width: 8.0 }, grid()).unwrap();
    let sigma = 0.2;
    let theta = std::f64::consts::FRAC_PI_2;
    let mut spec = EnsembleSpec::new(&s, &mode, &bg);
    spec.traces = 100_000;
    spec.seed = 21;
    spec.schedule = ThetaSchedule::Fixed { theta };
    spec.error_model = ErrorModel { phase_jitter_sigma: sigma, ..Default::default() };
    let e = simulate_ensemble(&spec).unwrap();
    let h = histogram_marginal(&recover_quadratures(&e, &mode).unwrap(), None, 80, (-6.0, 6.0)).unwrap();
    let averaged = phase_averaged_marginal(&s, theta, sigma, QuadratureGrid::default()).unwrap();
    let b = bhattacharyya(&h, &averaged).unwrap();
    assert!(b >= 0.995, "B = {b}");
}

#[test]
fn vacuum_variance_is_flat_for_any_seed_mode() {
    let bg = QuantumState::vacuum(10).unwrap();
    let shapes = [
        ModeShape::Gaussian { center: 10.0, width: 6.0 },
        ModeShape::DoubleExponential { center: -5.0, rate: 0.2 },
    ];
    for (k, shape) in shapes.into_iter().enumerate() {
        let mode = make_mode(shape, grid()).unwrap();
        let mut spec = EnsembleSpec::new(&bg, &mode, &bg);
        spec.traces = TRACES;
        spec.seed = 60 + k as u64;
        let e = simulate_ensemble(&spec).unwrap();
        let var = pointwise_variance(&e).unwrap();
        // 5 standard errors of a sample variance
        let tol = 5.0 * (2.0 / TRACES as f64).sqrt();
        assert!(var.iter().all(|v| (v / 0.5 - 1.0).abs() < tol), "shape {k}");
        let doubled = pointwise_variance(&e.scaled(2.0)).unwrap();
        for (a, b) in var.iter().zip(&doubled) {
            assert!((b - 4.0 * a).abs() < 1e-12 * b);
        }
    }
}
