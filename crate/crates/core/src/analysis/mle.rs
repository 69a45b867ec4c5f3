//! Iterative maximum-likelihood density-matrix reconstruction.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::QuadratureRecord;
use crate::error::{Error, Result};
use crate::hermite::hermite_functions_into;
use crate::sim::theta_key;
use crate::state::{QuantumState, StateMetadata};

const MIN_PROBABILITY: f64 = 1e-300;
const MIN_PHASES: usize = 8;
/// Smallest dilution tried before the iteration is declared stationary.
const MIN_DILUTION: f64 = 1.0 / 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleSettings {
    pub dim: usize,
    pub max_iter: usize,
    /// Stop when no density-matrix entry moves by more than this.
    pub tol: f64,
    pub bins_per_phase: usize,
}

impl Default for MleSettings {
    fn default() -> Self {
        MleSettings { dim: 20, max_iter: 2000, tol: 1e-8, bins_per_phase: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct MleOutcome {
    pub state: QuantumState,
    /// Σ_k n_k ln p_k before the first and after every accepted step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Records at one LO phase, binned, with ψ_n evaluated at each bin centre.
struct Phase {
    theta: f64,
    counts: Vec<f64>,
    /// psi[k * dim + n] = ψ_n(centre_k)
    psi: Vec<f64>,
}

/// Projector data for all phases.
struct Data {
    dim: usize,
    phases: Vec<Phase>,
    total: f64,
}

impl Data {
    fn new(records: &[QuadratureRecord], dim: usize, bins: usize) -> Self {
        let mut groups: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
        for r in records {
            groups.entry(theta_key(r.theta)).or_insert_with(|| (r.theta, Vec::new())).1.push(r.q);
        }
        let phases = groups
            .into_values()
            .map(|(theta, qs)| {
                let lo = qs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let nb = if hi > lo { bins } else { 1 };
                let width = if hi > lo { (hi - lo) / nb as f64 } else { 1.0 };
                let mut hist = vec![0.0; nb];
                for q in &qs {
                    hist[(((q - lo) / width) as usize).min(nb - 1)] += 1.0;
                }
                let mut counts = Vec::new();
                let mut psi = Vec::new();
                let mut row = vec![0.0; dim];
                for (i, &c) in hist.iter().enumerate() {
                    if c > 0.0 {
                        let centre = if hi > lo { lo + (i as f64 + 0.5) * width } else { lo };
                        hermite_functions_into(centre, &mut row);
                        counts.push(c);
                        psi.extend_from_slice(&row);
                    }
                }
                Phase { theta, counts, psi }
            })
            .collect();
        Data { dim, phases, total: records.len() as f64 }
    }

    /// Re(ρ_mn e^{i(m−n)θ}); with real ψ this gives p = ψᵀ A ψ.
    fn rotated(&self, rho: &DMatrix<Complex64>, theta: f64) -> Vec<f64> {
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for m in 0..d {
            for n in 0..d {
                a[m * d + n] = (rho[(m, n)] * Complex64::from_polar(1.0, (m as f64 - n as f64) * theta)).re;
            }
        }
        a
    }

    /// Per phase: (log-likelihood, S_θ = Σ_k (n_k / p_k) ψ_k ψ_kᵀ).
    fn evaluate(&self, rho: &DMatrix<Complex64>, with_r: bool) -> Result<(f64, DMatrix<Complex64>)> {
        let d = self.dim;
        let parts: Vec<Result<(f64, Vec<f64>)>> = self
            .phases
            .par_iter()
            .map(|ph| {
                let a = self.rotated(rho, ph.theta);
                let mut s = if with_r { vec![0.0; d * d] } else { Vec::new() };
                let mut ll = 0.0;
                for (k, &c) in ph.counts.iter().enumerate() {
                    let psi = &ph.psi[k * d..(k + 1) * d];
                    let mut p = 0.0;
                    for m in 0..d {
                        let row = &a[m * d..(m + 1) * d];
                        p += psi[m] * row.iter().zip(psi).map(|(x, y)| x * y).sum::<f64>();
                    }
                    if !(p >= MIN_PROBABILITY) {
                        return Err(Error::DegenerateLikelihood { index: k, probability: p });
                    }
                    ll += c * p.ln();
                    if with_r {
                        let w = c / p;
                        for m in 0..d {
                            let wm = w * psi[m];
                            for n in 0..d {
                                s[m * d + n] += wm * psi[n];
                            }
                        }
                    }
                }
                Ok((ll, s))
            })
            .collect();
        let mut ll = 0.0;
        let mut r = DMatrix::<Complex64>::zeros(d, d);
        for (ph, part) in self.phases.iter().zip(parts) {
            let (l, s) = part?;
            ll += l;
            if with_r {
                // U S U† with U = diag(e^{−inθ})
                for m in 0..d {
                    for n in 0..d {
                        r[(m, n)] += Complex64::from_polar(s[m * d + n], -(m as f64 - n as f64) * ph.theta);
                    }
                }
            }
        }
        if with_r {
            r /= Complex64::new(self.total, 0.0);
        }
        Ok((ll, r))
    }
}

fn normalized(mut rho: DMatrix<Complex64>) -> DMatrix<Complex64> {
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = rho.trace().re;
    rho / Complex64::new(tr, 0.0)
}

/// Reconstructs ρ on `settings.dim` Fock levels from (θ, q) records.
///
/// Each step is ρ ← N[R ρ R]. When that fails to raise the likelihood the
/// diluted step N[(I + εR) ρ (I + εR)] is tried with ε halved down to 1/1024;
/// if none helps the iteration stops. The recorded log-likelihood therefore
/// never decreases.
pub fn mle_reconstruct(records: &[QuadratureRecord], settings: MleSettings) -> Result<MleOutcome> {
    let dim = settings.dim;
    if dim == 0 {
        return Err(Error::InvalidDimension(dim));
    }
    if records.is_empty() {
        return Err(Error::EmptySelection("no quadrature records".into()));
    }
    if settings.bins_per_phase == 0 || !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter("bins_per_phase and tol must be positive".into()));
    }
    let mut warnings = Vec::new();
    let mut folded: Vec<i64> = records
        .iter()
        .map(|r| theta_key(r.theta.rem_euclid(std::f64::consts::PI)))
        .collect();
    folded.sort_unstable();
    folded.dedup();
    if folded.len() < MIN_PHASES {
        warnings.push(format!(
            "records span {} distinct phases in [0, π); at least {MIN_PHASES} are needed for a complete reconstruction",
            folded.len()
        ));
    }

    let data = Data::new(records, dim, settings.bins_per_phase);
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    let mut rho = eye.map(|v| v / dim as f64);
    let (mut ll, mut r) = data.evaluate(&rho, true)?;
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        iterations += 1;
        let mut step = None;
        let candidate = normalized(&r * &rho * &r);
        let (cl, _) = data.evaluate(&candidate, false)?;
        if cl >= ll {
            step = Some((candidate, cl));
        } else {
            let mut eps = 0.5;
            while eps >= MIN_DILUTION {
                let a = &eye + &r * Complex64::new(eps, 0.0);
                let candidate = normalized(&a * &rho * &a);
                let (cl, _) = data.evaluate(&candidate, false)?;
                if cl >= ll {
                    step = Some((candidate, cl));
                    break;
                }
                eps *= 0.5;
            }
        }
        let Some((next, next_ll)) = step else {
            converged = true;
            break;
        };
        let change = (&next - &rho).iter().map(|v| v.norm()).fold(0.0, f64::max);
        rho = next;
        ll = next_ll;
        history.push(ll);
        if change < settings.tol {
            converged = true;
            break;
        }
        r = data.evaluate(&rho, true)?.1;
    }
    if !converged {
        warnings.push(format!("no convergence after {} iterations", settings.max_iter));
    }

    let state = QuantumState::from_density(
        rho,
        StateMetadata { label: "reconstructed".into(), truncation_deficit: 0.0, warnings: warnings.clone() },
    )?;
    Ok(MleOutcome { state, log_likelihood: history, iterations, converged, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{build_cdf, marginal, sample_quadrature, QuadratureGrid};
    use crate::state::fidelity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(state: &QuantumState, phases: usize, per_phase: usize, seed: u64) -> Vec<QuadratureRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for k in 0..phases {
            let theta = std::f64::consts::PI * k as f64 / phases as f64;
            let m = build_cdf(marginal(state, theta, QuadratureGrid::default()).unwrap()).unwrap();
            for q in sample_quadrature(&m, &mut rng, per_phase).unwrap() {
                out.push(QuadratureRecord { theta, q });
            }
        }
        out
    }

    #[test]
    fn reconstructs_single_photon() {
        let truth = QuantumState::fock(1, 8).unwrap();
        let records = draw(&truth, 10, 2000, 3);
        let out = mle_reconstruct(&records, MleSettings { dim: 8, ..Default::default() }).unwrap();
        assert!(out.state.validate().is_ok());
        assert!(out.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
        assert!(fidelity(&out.state, &truth).unwrap() > 0.97);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn warns_on_few_phases() {
        let truth = QuantumState::vacuum(6).unwrap();
        let records = draw(&truth, 3, 300, 1);
        let out = mle_reconstruct(&records, MleSettings { dim: 6, max_iter: 50, ..Default::default() }).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("distinct phases")));
    }

    #[test]
    fn far_outlier_is_degenerate() {
        let records = vec![
            QuadratureRecord { theta: 0.0, q: 0.0 },
            QuadratureRecord { theta: 0.0, q: 60.0 },
        ];
        let err = mle_reconstruct(&records, MleSettings { dim: 4, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::DegenerateLikelihood { .. }));
    }

    #[test]
    fn rejects_bad_settings() {
        let r = vec![QuadratureRecord { theta: 0.0, q: 0.0 }];
        assert!(mle_reconstruct(&r, MleSettings { dim: 0, ..Default::default() }).is_err());
        assert!(mle_reconstruct(&[], MleSettings::default()).is_err());
    }
}
