//! Closed-form oracles for Hermite functions, marginals and Wigner functions.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use thdsim::hermite::hermite_functions;
use thdsim::phase_space::{marginal_density_at, wigner_point};
use thdsim::{marginal, Parity, QuadratureGrid, QuantumState};

const DIM: usize = 40;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Physicists' Hermite polynomial from its explicit sum.
fn hermite_poly(n: usize, x: f64) -> f64 {
    (0..=n / 2)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n) * (2.0 * x).powi((n - 2 * m) as i32) / (factorial(m) * factorial(n - 2 * m))
        })
        .sum()
}

fn gaussian(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

#[test]
fn hermite_functions_match_explicit_polynomials() {
    for &q in &[-3.7, -1.2, 0.0, 0.4, 2.5] {
        let psi = hermite_functions(q, 13);
        for (n, v) in psi.iter().enumerate() {
            let expected =
                hermite_poly(n, q) * (-q * q / 2.0).exp() / (2f64.powi(n as i32) * factorial(n) * PI.sqrt()).sqrt();
            assert!((v - expected).abs() < 1e-12 * expected.abs().max(1.0), "n={n} q={q}: {v} vs {expected}");
        }
    }
}

#[test]
fn hermite_functions_are_orthonormal() {
    let dq = 0.01;
    let n = 30;
    let mut gram = vec![0.0; n * n];
    for k in 0..=2400 {
        let psi = hermite_functions(-12.0 + k as f64 * dq, n);
        for a in 0..n {
            for b in 0..n {
                gram[a * n + b] += psi[a] * psi[b] * dq;
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((gram[a * n + b] - target).abs() < 1e-10, "({a}, {b}) = {}", gram[a * n + b]);
        }
    }
}

#[test]
fn coherent_marginal_is_displaced_vacuum() {
    let alpha = Complex64::new(0.8, -0.6);
    let s = QuantumState::coherent(alpha, DIM).unwrap();
    for &theta in &[0.0, 0.7, FRAC_PI_2, 2.9] {
        let mean = 2f64.sqrt() * (alpha * Complex64::from_polar(1.0, theta)).re;
        for &q in &[-2.0, -0.3, 0.5, 1.9] {
            let v = marginal_density_at(&s, theta, q);
            assert!((v - gaussian(q, mean, 0.5)).abs() < 1e-12, "θ={theta} q={q}");
        }
    }
}

#[test]
fn thermal_marginal_is_phase_independent_gaussian() {
    let nbar = 0.8;
    let s = QuantumState::thermal(nbar, 60).unwrap();
    for &theta in &[0.0, 1.1, 2.2] {
        for &q in &[-3.0, -1.0, 0.0, 2.0] {
            let v = marginal_density_at(&s, theta, q);
            assert!((v - gaussian(q, 0.0, nbar + 0.5)).abs() < 1e-9, "θ={theta} q={q}");
        }
    }
}

#[test]
fn squeezed_vacuum_saturates_uncertainty() {
    let r = 0.6;
    let s = QuantumState::squeezed(Complex64::new(r, 0.0), DIM).unwrap();
    let g = QuadratureGrid::default();
    let v0 = marginal(&s, 0.0, g).unwrap().variance();
    let v1 = marginal(&s, FRAC_PI_2, g).unwrap().variance();
    assert!((v0 * v1 - 0.25).abs() < 1e-6, "{v0} · {v1}");
    assert!((v0.min(v1) - 0.5 * (-2.0 * r).exp()).abs() < 1e-6);
}

#[test]
fn even_cat_marginal_at_zero_phase() {
    let a: f64 = 2.0;
    let s = QuantumState::cat(Complex64::new(a, 0.0), Parity::Even, DIM).unwrap();
    let norm = 1.0 / (2.0 * (1.0 + (-2.0 * a * a).exp()));
    let psi = |x: f64, c: f64| PI.powf(-0.25) * (-(x - c).powi(2) / 2.0).exp();
    let c = 2f64.sqrt() * a;
    for &q in &[-3.0, -2.8, -1.0, 0.0, 0.3, 2.6] {
        let expected = norm * (psi(q, c) + psi(q, -c)).powi(2);
        assert!((marginal_density_at(&s, 0.0, q) - expected).abs() < 1e-10, "q={q}");
    }
}

#[test]
fn wigner_closed_forms() {
    let vac = QuantumState::vacuum(DIM).unwrap();
    let one = QuantumState::fock(1, DIM).unwrap();
    let coh = QuantumState::coherent(Complex64::new(1.2, 0.0), DIM).unwrap();
    for &(x, p) in &[(0.0, 0.0), (0.5, -0.3), (-1.1, 1.4), (2.0, 0.2)] {
        let r2: f64 = x * x + p * p;
        assert!((wigner_point(&vac, x, p) - (-r2).exp() / PI).abs() < 1e-12);
        assert!((wigner_point(&one, x, p) - (2.0 * r2 - 1.0) * (-r2).exp() / PI).abs() < 1e-12);
        let d = (x - 2f64.sqrt() * 1.2).powi(2) + p * p;
        assert!((wigner_point(&coh, x, p) - (-d).exp() / PI).abs() < 1e-12);
    }
    // parity at the origin
    let three = QuantumState::fock(3, DIM).unwrap();
    assert!((wigner_point(&three, 0.0, 0.0) + 1.0 / PI).abs() < 1e-12);
}
