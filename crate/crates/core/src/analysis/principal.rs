//! Principal temporal mode from the trace autocorrelation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::modes::{make_mode, ModeShape, TemporalMode};
use crate::sim::TraceEnsemble;

/// Margin above the sampling-noise edge a leading eigenvalue must clear.
const SIGNAL_MARGIN: f64 = 1.1;

#[derive(Debug, Clone)]
pub struct PrincipalMode {
    pub mode: TemporalMode,
    /// Eigenvalues of the background-subtracted autocorrelation, descending.
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue expected from background noise alone.
    pub noise_edge: f64,
    pub warnings: Vec<String>,
}

impl PrincipalMode {
    pub fn ratio(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0) / self.eigenvalues[0]
    }
}

/// Principal mode assuming a vacuum background (⟨x²⟩ = 1/2).
pub fn estimate_principal_mode(ensemble: &TraceEnsemble) -> Result<PrincipalMode> {
    estimate_principal_mode_with_background(ensemble, 0.5)
}

/// Leading eigenvector of C = ⟨i iᵀ⟩ − g²⟨x²_bg⟩ I.
///
/// With M traces of N bins, white background noise alone spreads the
/// eigenvalues of C up to about g²⟨x²_bg⟩((1 + √(N/M))² − 1). A leading
/// eigenvalue below 1.1 times that edge is reported as no signal.
pub fn estimate_principal_mode_with_background(
    ensemble: &TraceEnsemble,
    background_variance: f64,
) -> Result<PrincipalMode> {
    let (m, n) = (ensemble.len(), ensemble.bins());
    if m < 2 {
        return Err(Error::InsufficientTraces { needed: 2, got: m });
    }
    if !(background_variance >= 0.0) {
        return Err(Error::InvalidParameter(format!("background variance = {background_variance}")));
    }
    let mut warnings = Vec::new();
    if m < 10 * n {
        warnings.push(format!("{m} traces for {n} bins; the estimate is noise dominated below {}", 10 * n));
    }
    let d = DMatrix::from_row_slice(m, n, ensemble.traces());
    let noise = ensemble.gain().powi(2) * background_variance;
    let mut c = d.tr_mul(&d) / m as f64;
    for k in 0..n {
        c[(k, k)] -= noise;
    }
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let gamma = n as f64 / m as f64;
    let noise_edge = noise * ((1.0 + gamma.sqrt()).powi(2) - 1.0);
    let threshold = SIGNAL_MARGIN * noise_edge;
    if !(eigenvalues[0] > threshold) || eigenvalues[0] <= 0.0 {
        return Err(Error::NoSignal { eigenvalue: eigenvalues[0], threshold });
    }

    let mut v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let peak = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if peak < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let mode = make_mode(ModeShape::Custom { samples: v }, ensemble.grid())?;
    Ok(PrincipalMode { mode, eigenvalues, noise_edge, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{overlap, TimeGrid};
    use crate::phase_space::QuadratureGrid;
    use crate::sim::{simulate_ensemble, EnsembleSpec, ThetaSchedule};
    use crate::state::QuantumState;
    use num_complex::Complex64;

    fn spec_mode(n: usize) -> TemporalMode {
        let g = TimeGrid::centered(1.0, n).unwrap();
        make_mode(ModeShape::Gaussian { center: 0.0, width: 4.0 }, g).unwrap()
    }

    #[test]
    fn coherent_signal_recovers_mode() {
        let mode = spec_mode(64);
        let state = QuantumState::coherent(Complex64::new(2.0, 0.0), 30).unwrap();
        let vac = QuantumState::vacuum(30).unwrap();
        let mut spec = EnsembleSpec::new(&state, &mode, &vac);
        spec.traces = 4000;
        spec.seed = 11;
        spec.schedule = ThetaSchedule::UniformScan { phases: 8 };
        spec.grid = QuadratureGrid::new(-10.0, 10.0, 2001).unwrap();
        let e = simulate_ensemble(&spec).unwrap();
        let p = estimate_principal_mode(&e).unwrap();
        assert!(overlap(&p.mode, &mode).unwrap().abs() > 0.99);
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(p.ratio() < 0.05);
        let peak = p.mode.amplitude().iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        assert!(peak > 0.0);
    }

    #[test]
    fn vacuum_reports_no_signal() {
        let mode = spec_mode(32);
        let vac = QuantumState::vacuum(20).unwrap();
        let mut spec = EnsembleSpec::new(&vac, &mode, &vac);
        spec.traces = 3000;
        spec.seed = 5;
        let e = simulate_ensemble(&spec).unwrap();
        assert!(matches!(estimate_principal_mode(&e), Err(Error::NoSignal { .. })));
    }

    #[test]
    fn few_traces_warn() {
        let mode = spec_mode(32);
        let state = QuantumState::coherent(Complex64::new(3.0, 0.0), 40).unwrap();
        let vac = QuantumState::vacuum(20).unwrap();
        let mut spec = EnsembleSpec::new(&state, &mode, &vac);
        spec.traces = 200;
        let e = simulate_ensemble(&spec).unwrap();
        let p = estimate_principal_mode(&e).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }
}
