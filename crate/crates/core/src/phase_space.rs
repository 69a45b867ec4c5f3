//! Wigner functions, rotated quadrature marginals and inverse transform
//! sampling.
//!
//! Quadrature convention: q_θ = (b e^{iθ} + b† e^{−iθ})/√2 = X cos θ − P sin θ,
//! so the vacuum marginal is e^{−q²}/√π with variance 1/2 at every θ.
//! Marginals are computed in the Fock basis,
//!
//!   Pr_θ(q) = Σ_{m,n} ρ_mn e^{i(m−n)θ} ψ_m(q) ψ_n(q),
//!
//! and independently by integrating the Wigner function along the line
//! X cos θ − P sin θ = q ([`marginal_by_wigner_integration`]). The two agree
//! to quadrature accuracy and each serves as the other's check.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::hermite_functions_into;
use crate::state::QuantumState;

const CLAMP_LIMIT: f64 = 1e-6;

/// Uniform quadrature grid, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            min: -8.0,
            max: 8.0,
            points: 1601,
        }
    }
}

impl QuadratureGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        let g = QuadratureGrid { min, max, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadrature grid [{}, {}] with {} points",
                self.min, self.max, self.points
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Tabulated Pr(q_θ) with its cumulative distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistribution {
    grid: QuadratureGrid,
    q: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    theta: f64,
    label: String,
    clamped_mass: f64,
}

impl MarginalDistribution {
    /// Clamps negative values to zero and normalizes so Σ pdf·Δq = 1. The
    /// clamped mass must stay below 1e-6.
    pub fn from_pdf(
        grid: QuadratureGrid,
        mut pdf: Vec<f64>,
        theta: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        grid.validate()?;
        if pdf.len() != grid.points {
            return Err(Error::DimensionMismatch(pdf.len(), grid.points));
        }
        let dq = grid.step();
        let mut clamped = 0.0;
        for v in pdf.iter_mut() {
            if !v.is_finite() {
                return Err(Error::DegenerateDistribution("non-finite density".into()));
            }
            if *v < 0.0 {
                clamped -= *v * dq;
                *v = 0.0;
            }
        }
        if clamped > CLAMP_LIMIT {
            return Err(Error::Accuracy(clamped));
        }
        let total: f64 = pdf.iter().sum::<f64>() * dq;
        if !(total > 0.0) {
            return Err(Error::DegenerateDistribution("density integrates to zero".into()));
        }
        for v in pdf.iter_mut() {
            *v /= total;
        }
        Ok(MarginalDistribution {
            q: grid.values(),
            grid,
            pdf,
            cdf: Vec::new(),
            theta,
            label: label.into(),
            clamped_mass: clamped,
        })
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn pdf(&self) -> &[f64] {
        &self.pdf
    }

    /// Empty until [`build_cdf`] has run.
    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn has_cdf(&self) -> bool {
        !self.cdf.is_empty()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn mean(&self) -> f64 {
        self.q.iter().zip(&self.pdf).map(|(q, p)| q * p).sum::<f64>() * self.step()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.q
            .iter()
            .zip(&self.pdf)
            .map(|(q, p)| (q - mu) * (q - mu) * p)
            .sum::<f64>()
            * self.step()
    }

    /// Linear interpolation of the density, zero outside the grid.
    pub fn pdf_at(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.pdf, x, 0.0, 0.0)
    }

    /// Linear interpolation of the CDF; 0 below and 1 above the grid.
    pub fn cdf_at(&self, x: f64) -> f64 {
        assert!(self.has_cdf(), "cdf not built");
        interpolate(&self.grid, &self.cdf, x, 0.0, 1.0)
    }

    /// Piecewise-linear inverse of the tabulated CDF. A flat stretch of the
    /// CDF resolves to its left edge.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        assert!(self.has_cdf(), "cdf not built");
        let i = self.cdf.partition_point(|&c| c < u);
        if i == 0 {
            return self.q[0];
        }
        if i >= self.cdf.len() {
            return self.q[self.q.len() - 1];
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = (u - c0) / (c1 - c0);
        self.q[i - 1] + t * (self.q[i] - self.q[i - 1])
    }
}

fn interpolate(grid: &QuadratureGrid, values: &[f64], x: f64, below: f64, above: f64) -> f64 {
    if x < grid.min {
        return below;
    }
    if x > grid.max {
        return above;
    }
    let pos = (x - grid.min) / grid.step();
    let i = (pos.floor() as usize).min(values.len() - 2);
    let t = pos - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Fourier components of the marginal in θ: Pr_θ(q) = Σ_d e^{idθ} A_d(q) with
/// A_d(q) = Σ_n ρ_{n+d,n} ψ_{n+d}(q) ψ_n(q) and A_{−d} = conj(A_d).
///
/// Precomputing these makes re-evaluating the marginal at a new angle cost
/// O(dim · points), which is what per-trace phase jitter needs.
#[derive(Debug, Clone)]
pub struct PhaseHarmonics {
    grid: QuadratureGrid,
    label: String,
    /// harmonics[d][i] = A_d(q_i)
    harmonics: Vec<Vec<Complex64>>,
}

impl PhaseHarmonics {
    pub fn new(state: &QuantumState, grid: QuadratureGrid) -> Result<Self> {
        grid.validate()?;
        let dim = state.dim();
        let rho = state.rho();
        let columns: Vec<Vec<Complex64>> = grid
            .values()
            .par_iter()
            .map(|&q| {
                let mut psi = vec![0.0; dim];
                hermite_functions_into(q, &mut psi);
                (0..dim)
                    .map(|d| {
                        (0..dim - d)
                            .map(|n| rho[(n + d, n)] * (psi[n + d] * psi[n]))
                            .sum::<Complex64>()
                    })
                    .collect()
            })
            .collect();
        let harmonics = (0..dim)
            .map(|d| columns.iter().map(|c| c[d]).collect())
            .collect();
        Ok(PhaseHarmonics {
            grid,
            label: state.label().to_string(),
            harmonics,
        })
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    pub fn order(&self) -> usize {
        self.harmonics.len()
    }

    /// A_d on the grid.
    pub fn harmonic(&self, d: usize) -> &[Complex64] {
        &self.harmonics[d]
    }

    /// Unnormalized Pr_θ on the grid.
    pub fn density(&self, theta: f64) -> Vec<f64> {
        self.density_weighted(theta, |_| 1.0)
    }

    /// Σ_d w(d) e^{idθ} A_d, with w applied symmetrically to ±d.
    pub fn density_weighted(&self, theta: f64, weight: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.harmonics[0].iter().map(|a| a.re * weight(0)).collect();
        for (d, h) in self.harmonics.iter().enumerate().skip(1) {
            let w = weight(d);
            if w == 0.0 {
                continue;
            }
            let phase = Complex64::from_polar(2.0 * w, d as f64 * theta);
            for (o, a) in out.iter_mut().zip(h) {
                *o += (phase * a).re;
            }
        }
        out
    }

    pub fn marginal(&self, theta: f64) -> Result<MarginalDistribution> {
        MarginalDistribution::from_pdf(self.grid, self.density(theta), theta, self.label.clone())
    }
}

/// Marginal Pr(q_θ) on `grid` from the Fock-basis expression. The CDF is not
/// populated; see [`build_cdf`].
pub fn marginal(state: &QuantumState, theta: f64, grid: QuadratureGrid) -> Result<MarginalDistribution> {
    grid.validate()?;
    let dim = state.dim();
    let rho = state.rho();
    let phases: Vec<Complex64> = (0..dim)
        .map(|d| Complex64::from_polar(1.0, d as f64 * theta))
        .collect();
    let pdf: Vec<f64> = grid
        .values()
        .par_iter()
        .map(|&q| {
            let mut psi = vec![0.0; dim];
            hermite_functions_into(q, &mut psi);
            let mut acc = 0.0;
            for m in 0..dim {
                acc += rho[(m, m)].re * psi[m] * psi[m];
                for n in 0..m {
                    acc += 2.0 * (rho[(m, n)] * phases[m - n]).re * psi[m] * psi[n];
                }
            }
            acc
        })
        .collect();
    MarginalDistribution::from_pdf(grid, pdf, theta, state.label())
}

/// Marginal as a density at arbitrary points (not normalized on any grid).
pub fn marginal_density_at(state: &QuantumState, theta: f64, q: f64) -> f64 {
    let dim = state.dim();
    let rho = state.rho();
    let mut psi = vec![0.0; dim];
    hermite_functions_into(q, &mut psi);
    let mut acc = 0.0;
    for m in 0..dim {
        acc += rho[(m, m)].re * psi[m] * psi[m];
        for n in 0..m {
            acc += 2.0 * (rho[(m, n)] * Complex64::from_polar(1.0, (m - n) as f64 * theta)).re * psi[m] * psi[n];
        }
    }
    acc
}

/// Cumulative trapezoid of the pdf, rescaled so the last entry is exactly 1.
pub fn build_cdf(mut marginal: MarginalDistribution) -> Result<MarginalDistribution> {
    let dq = marginal.step();
    let mut cdf = Vec::with_capacity(marginal.pdf.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in marginal.pdf.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dq;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::DegenerateDistribution("all-zero pdf".into()));
    }
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    *cdf.last_mut().unwrap() = 1.0;
    marginal.cdf = cdf;
    Ok(marginal)
}

/// Inverse transform sampling: `count` independent draws, one uniform each.
pub fn sample_quadrature<R: Rng + ?Sized>(
    marginal: &MarginalDistribution,
    rng: &mut R,
    count: usize,
) -> Result<Vec<f64>> {
    if !marginal.has_cdf() {
        return Err(Error::DegenerateDistribution("cdf not built".into()));
    }
    Ok((0..count).map(|_| marginal.inverse_cdf(rng.random::<f64>())).collect())
}

/// Kolmogorov–Smirnov distance between a sample and a tabulated CDF.
pub fn ks_statistic(samples: &[f64], marginal: &MarginalDistribution) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = marginal.cdf_at(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Fock-basis Wigner kernel with the off-diagonals of ρ laid out per offset
/// d = m − n.
#[derive(Debug, Clone)]
pub struct WignerKernel {
    diagonals: Vec<Vec<Complex64>>,
}

impl WignerKernel {
    pub fn new(state: &QuantumState) -> Self {
        let dim = state.dim();
        let rho = state.rho();
        let diagonals = (0..dim)
            .map(|d| (0..dim - d).map(|n| rho[(n + d, n)]).collect())
            .collect();
        WignerKernel { diagonals }
    }

    /// W(x, p) = Σ_{m,n} ρ_mn W_mn(x, p), where for m = n + d ≥ n
    ///
    ///   W_mn = ((−1)ⁿ/π) √(n!/m!) (√2 (x − ip))^d e^{−r²} L_n^{(d)}(2r²)
    ///
    /// and W_nm = conj(W_mn).
    pub fn evaluate(&self, x: f64, p: f64) -> f64 {
        let r2 = x * x + p * p;
        let envelope = (-r2).exp() / PI;
        if envelope == 0.0 {
            return 0.0;
        }
        let z = 2.0 * r2;
        let w = Complex64::new(x, -p) * std::f64::consts::SQRT_2;
        let mut w_pow = Complex64::new(1.0, 0.0);
        // 1/√(d!)
        let mut inv_sqrt_dfact = 1.0;
        let mut total = 0.0;
        for (d, diag) in self.diagonals.iter().enumerate() {
            if d > 0 {
                w_pow *= w;
                inv_sqrt_dfact /= (d as f64).sqrt();
            }
            let df = d as f64;
            let mut l_prev = 0.0;
            let mut l_cur = 1.0;
            let mut scale = inv_sqrt_dfact;
            let mut sign = 1.0;
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, rho) in diag.iter().enumerate() {
                if n > 0 {
                    let nf = (n - 1) as f64;
                    let l_next = ((2.0 * nf + 1.0 + df - z) * l_cur - (nf + df) * l_prev) / (nf + 1.0);
                    l_prev = l_cur;
                    l_cur = l_next;
                    scale *= (n as f64 / (n as f64 + df)).sqrt();
                    sign = -sign;
                }
                acc += rho * (sign * scale * l_cur);
            }
            let term = (acc * w_pow).re;
            total += if d == 0 { term } else { 2.0 * term };
        }
        total * envelope
    }
}

pub fn wigner_point(state: &QuantumState, x: f64, p: f64) -> f64 {
    WignerKernel::new(state).evaluate(x, p)
}

/// Symmetric square phase-space grid [−x_max, x_max]².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerGridSpec {
    pub x_max: f64,
    pub n_points: usize,
}

impl Default for WignerGridSpec {
    fn default() -> Self {
        WignerGridSpec {
            x_max: 6.0,
            n_points: 121,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    /// values[i * n_points + j] = W(x_i, p_j)
    pub values: Vec<f64>,
    /// 1 − Σ W Δx Δp.
    pub mass_deficit: f64,
    pub warnings: Vec<String>,
}

impl PhaseSpaceGrid {
    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn axis(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x_min + i as f64 * self.step()).collect()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_points + j]
    }

    pub fn normalization(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step() * self.step()
    }

    /// ∫ W(x, p) dp on the x axis, i.e. the θ = 0 marginal.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = self.step();
        (0..self.n_points)
            .map(|i| self.values[i * self.n_points..(i + 1) * self.n_points].iter().sum::<f64>() * dp)
            .collect()
    }
}

pub fn wigner(state: &QuantumState, spec: WignerGridSpec) -> Result<PhaseSpaceGrid> {
    if spec.n_points < 2 || !(spec.x_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wigner grid x_max = {}, n_points = {}",
            spec.x_max, spec.n_points
        )));
    }
    let kernel = WignerKernel::new(state);
    let n = spec.n_points;
    let step = 2.0 * spec.x_max / (n - 1) as f64;
    let axis: Vec<f64> = (0..n).map(|i| -spec.x_max + i as f64 * step).collect();
    let values: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| kernel.evaluate(axis[k / n], axis[k % n]))
        .collect();
    let mut grid = PhaseSpaceGrid {
        x_min: -spec.x_max,
        x_max: spec.x_max,
        n_points: n,
        values,
        mass_deficit: 0.0,
        warnings: Vec::new(),
    };
    grid.mass_deficit = 1.0 - grid.normalization();
    if grid.mass_deficit.abs() > 1e-3 {
        grid.warnings.push(format!(
            "grid clips the state support: mass deficit {:e}",
            grid.mass_deficit
        ));
    }
    let recommended = 2.0 * (state.mean_photon_number() + 1.0).sqrt();
    if spec.x_max < recommended {
        grid.warnings.push(format!(
            "x_max = {} is below the recommended {recommended:.3}",
            spec.x_max
        ));
    }
    Ok(grid)
}

/// Integration settings for [`marginal_by_wigner_integration`].
#[derive(Debug, Clone, Copy)]
pub struct LineIntegral {
    pub half_width: f64,
    pub points: usize,
}

impl Default for LineIntegral {
    fn default() -> Self {
        LineIntegral {
            half_width: 10.0,
            points: 401,
        }
    }
}

/// Unnormalized Pr(q_θ) by rotating phase space and integrating the Wigner
/// function along the orthogonal direction with the trapezoid rule.
pub fn wigner_line_integrals(
    state: &QuantumState,
    theta: f64,
    q: &[f64],
    line: LineIntegral,
) -> Vec<f64> {
    let kernel = WignerKernel::new(state);
    let (s, c) = theta.sin_cos();
    let ds = 2.0 * line.half_width / (line.points - 1) as f64;
    q.par_iter()
        .map(|&qv| {
            let mut acc = 0.0;
            for k in 0..line.points {
                let t = -line.half_width + k as f64 * ds;
                let w = kernel.evaluate(qv * c + t * s, -qv * s + t * c);
                acc += if k == 0 || k + 1 == line.points { 0.5 * w } else { w };
            }
            acc * ds
        })
        .collect()
}

/// The rotate-and-integrate marginal, normalized on `grid`.
pub fn marginal_by_wigner_integration(
    state: &QuantumState,
    theta: f64,
    grid: QuadratureGrid,
    line: LineIntegral,
) -> Result<MarginalDistribution> {
    grid.validate()?;
    let pdf = wigner_line_integrals(state, theta, &grid.values(), line);
    MarginalDistribution::from_pdf(grid, pdf, theta, state.label())
}
