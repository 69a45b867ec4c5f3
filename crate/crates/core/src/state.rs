//! Truncated Fock-basis density matrices and the canonical single-mode states.
//!
//! Every state is stored as a density matrix, pure or not. Constructors that
//! expand an infinite series (coherent, squeezed, cat) truncate at `dim`
//! levels and rescale to unit trace; the discarded probability is kept in
//! [`StateMetadata::truncation_deficit`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation used when a configuration does not name one.
pub const DEFAULT_DIM: usize = 40;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const DEFICIT_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateMetadata {
    /// Human readable description, e.g. `fock(1)`.
    pub label: String,
    /// Probability mass discarded by the Fock truncation before renormalization.
    pub truncation_deficit: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Parity of a cat state: `Even` is |α⟩ + |−α⟩, `Odd` is |α⟩ − |−α⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    rho: DMatrix<Complex64>,
    meta: StateMetadata,
}

impl QuantumState {
    /// Wraps a density matrix after checking Hermiticity, unit trace and
    /// positivity.
    pub fn from_density(rho: DMatrix<Complex64>, meta: StateMetadata) -> Result<Self> {
        if rho.nrows() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch(rho.nrows(), rho.ncols()));
        }
        let state = QuantumState { rho, meta };
        state.validate()?;
        Ok(state)
    }

    /// Builds |ψ⟩⟨ψ| from unnormalized amplitudes, rescaling to unit norm.
    pub fn from_amplitudes(amplitudes: &[Complex64], meta: StateMetadata) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let norm_sqr: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !(norm_sqr > 1e-24) || !norm_sqr.is_finite() {
            return Err(Error::DegenerateState(format!(
                "{}: amplitude vector has zero norm",
                meta.label
            )));
        }
        let psi = DVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|c| c / norm_sqr.sqrt()),
        );
        let rho = &psi * psi.adjoint();
        Ok(QuantumState { rho, meta })
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::fock(0, dim).map(|mut s| {
            s.meta.label = "vacuum".into();
            s
        })
    }

    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if n >= dim {
            return Err(Error::Truncation { n, dim });
        }
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(QuantumState {
            rho,
            meta: StateMetadata {
                label: format!("fock({n})"),
                ..Default::default()
            },
        })
    }

    /// Coherent state D(α)|0⟩ with c_n = e^{−|α|²/2} αⁿ/√n!.
    pub fn coherent(alpha: Complex64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let c = coherent_amplitudes(alpha, dim);
        let mut meta = StateMetadata {
            label: format!("coherent({})", fmt_complex(alpha)),
            ..Default::default()
        };
        if alpha.norm_sqr() > dim as f64 / 4.0 {
            meta.warnings.push(format!(
                "|alpha|^2 = {} exceeds dim/4 = {}",
                alpha.norm_sqr(),
                dim as f64 / 4.0
            ));
        }
        finish_truncated(c, 1.0, meta)
    }

    /// Squeezed vacuum for ξ = r e^{iφ}. With φ = 0 the θ = 0 quadrature is
    /// the squeezed one (variance e^{−2r}/2).
    pub fn squeezed(xi: Complex64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let r = xi.norm();
        let phi = xi.arg();
        let mut meta = StateMetadata {
            label: format!("squeezed({})", fmt_complex(xi)),
            ..Default::default()
        };
        if r > 1.0 || dim < 20 {
            meta.warnings.push(format!(
                "squeezing |xi| = {r} with dim = {dim} is outside |xi| <= 1, dim >= 20"
            ));
        }
        let mut c = vec![Complex64::new(0.0, 0.0); dim];
        let ratio = -Complex64::from_polar(r.tanh(), phi);
        let mut term = Complex64::new(1.0 / r.cosh().sqrt(), 0.0);
        let mut m = 0usize;
        while 2 * m < dim {
            c[2 * m] = term;
            // c_{2m+2}/c_{2m} = ratio · √((2m+1)(2m+2)) / (2(m+1))
            let k = (2 * m + 1) as f64;
            term *= ratio * ((k * (k + 1.0)).sqrt() / (2.0 * (m + 1) as f64));
            m += 1;
        }
        finish_truncated(c, 1.0, meta)
    }

    /// Normalized (|α⟩ ± |−α⟩) superposition.
    pub fn cat(alpha: Complex64, parity: Parity, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let s = parity.sign();
        let plus = coherent_amplitudes(alpha, dim);
        let minus = coherent_amplitudes(-alpha, dim);
        let c: Vec<Complex64> = plus.iter().zip(&minus).map(|(a, b)| a + b * s).collect();
        let full_norm = 2.0 * (1.0 + s * (-2.0 * alpha.norm_sqr()).exp());
        let label = format!(
            "cat({}, {})",
            fmt_complex(alpha),
            if s > 0.0 { "even" } else { "odd" }
        );
        if full_norm < 1e-24 || c.iter().map(|x| x.norm_sqr()).sum::<f64>() < 1e-24 {
            return Err(Error::DegenerateState(format!("{label} has zero norm")));
        }
        let mut meta = StateMetadata {
            label,
            ..Default::default()
        };
        if alpha.norm_sqr() > dim as f64 / 4.0 {
            meta.warnings.push(format!(
                "|alpha|^2 = {} exceeds dim/4 = {}",
                alpha.norm_sqr(),
                dim as f64 / 4.0
            ));
        }
        finish_truncated(c, full_norm, meta)
    }

    /// Thermal state with mean photon number `nbar`, truncated and renormalized.
    pub fn thermal(nbar: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::InvalidParameter(format!("thermal nbar = {nbar}")));
        }
        let mut rho = DMatrix::zeros(dim, dim);
        if nbar == 0.0 {
            rho[(0, 0)] = Complex64::new(1.0, 0.0);
            return Ok(QuantumState {
                rho,
                meta: StateMetadata {
                    label: "thermal(0)".into(),
                    ..Default::default()
                },
            });
        }
        let x = nbar / (1.0 + nbar);
        let mut p = 1.0 / (1.0 + nbar);
        let mut total = 0.0;
        for n in 0..dim {
            rho[(n, n)] = Complex64::new(p, 0.0);
            total += p;
            p *= x;
        }
        rho /= Complex64::new(total, 0.0);
        let mut meta = StateMetadata {
            label: format!("thermal({nbar})"),
            truncation_deficit: 1.0 - total,
            warnings: Vec::new(),
        };
        if meta.truncation_deficit > DEFICIT_WARN {
            meta.warnings
                .push(format!("truncation deficit {:e}", meta.truncation_deficit));
        }
        Ok(QuantumState { rho, meta })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn metadata(&self) -> &StateMetadata {
        &self.meta
    }

    pub fn label(&self) -> &str {
        &self.meta.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.meta.label = label.into();
        self
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.rho[(n, n)].re).sum()
    }

    pub fn population(&self, n: usize) -> f64 {
        self.rho[(n, n)].re
    }

    /// Eigenvalues of ρ in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.rho.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for m in 0..d {
            for n in 0..d {
                let a = self.rho[(m, n)];
                let b = self.rho[(n, m)].conj();
                if !a.re.is_finite() || !a.im.is_finite() {
                    return Err(Error::InvalidState(format!("non-finite entry at ({m}, {n})")));
                }
                if (a - b).norm() > HERMITIAN_TOL {
                    return Err(Error::InvalidState(format!(
                        "not Hermitian at ({m}, {n}): residual {:e}",
                        (a - b).norm()
                    )));
                }
            }
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_ev = self.eigenvalues()[0];
        if min_ev < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite: smallest eigenvalue {min_ev:e}"
            )));
        }
        Ok(())
    }
}

/// Uhlmann fidelity (Tr √(√a b √a))², evaluated as the squared sum of the
/// singular values of √a √b. Rounding noise in the square roots then enters
/// only at second order, which keeps pure-state fidelities accurate.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let product = hermitian_sqrt(a.rho()) * hermitian_sqrt(b.rho());
    let nuclear: f64 = product.singular_values().iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

fn hermitian_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)),
    );
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&roots) * v.adjoint()
}

fn coherent_amplitudes(alpha: Complex64, dim: usize) -> Vec<Complex64> {
    let mut c = Vec::with_capacity(dim);
    let mut term = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        c.push(term);
        term *= alpha / ((n + 1) as f64).sqrt();
    }
    c
}

/// `full_norm_sqr` is the squared norm of the untruncated series.
fn finish_truncated(
    c: Vec<Complex64>,
    full_norm_sqr: f64,
    mut meta: StateMetadata,
) -> Result<QuantumState> {
    let kept: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    meta.truncation_deficit = (1.0 - kept / full_norm_sqr).max(0.0);
    if meta.truncation_deficit > DEFICIT_WARN {
        meta.warnings
            .push(format!("truncation deficit {:e}", meta.truncation_deficit));
    }
    QuantumState::from_amplitudes(&c, meta)
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{:+}i", z.re, z.im)
    }
}
