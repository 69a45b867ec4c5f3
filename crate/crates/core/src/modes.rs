//! Discretized temporal modes and their completion to an orthonormal
//! detector basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of time bins in a trace.
pub const DEFAULT_BINS: usize = 256;

const EDGE_WARN: f64 = 1e-6;
const STEP_WARN: f64 = 0.2;

/// Uniform time axis t_k = start + k·dt, k = 0..bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub dt: f64,
    pub bins: usize,
}

impl TimeGrid {
    pub fn new(start: f64, dt: f64, bins: usize) -> Result<Self> {
        let g = TimeGrid { start, dt, bins };
        g.validate()?;
        Ok(g)
    }

    /// Grid of `bins` samples centred on t = 0.
    pub fn centered(dt: f64, bins: usize) -> Result<Self> {
        Self::new(-(bins as f64) / 2.0 * dt, dt, bins)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || !(self.dt > 0.0) || !self.start.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time grid start = {}, dt = {}, bins = {}",
                self.start, self.dt, self.bins
            )));
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.bins).map(|k| self.time(k)).collect()
    }

    pub fn span(&self) -> f64 {
        self.bins as f64 * self.dt
    }

    pub fn matches(&self, other: &TimeGrid) -> bool {
        let tol = 1e-9 * self.dt;
        self.bins == other.bins
            && (self.dt - other.dt).abs() <= tol
            && (self.start - other.start).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeShape {
    /// exp(−(t − center)²/(2 width²))
    Gaussian { center: f64, width: f64 },
    /// exp(−rate |t − center|)
    DoubleExponential { center: f64, rate: f64 },
    /// Raw samples on the grid; no analytic form.
    Custom { samples: Vec<f64> },
}

impl ModeShape {
    pub fn is_analytic(&self) -> bool {
        !matches!(self, ModeShape::Custom { .. })
    }

    fn shifted(&self, tau: f64) -> ModeShape {
        match *self {
            ModeShape::Gaussian { center, width } => ModeShape::Gaussian {
                center: center + tau,
                width,
            },
            ModeShape::DoubleExponential { center, rate } => ModeShape::DoubleExponential {
                center: center + tau,
                rate,
            },
            ModeShape::Custom { .. } => self.clone(),
        }
    }

    fn sample(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            ModeShape::Gaussian { center, width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian width {width}")));
                }
                Ok(grid
                    .times()
                    .iter()
                    .map(|t| (-(t - center).powi(2) / (2.0 * width * width)).exp())
                    .collect())
            }
            ModeShape::DoubleExponential { center, rate } => {
                if !(*rate > 0.0) {
                    return Err(Error::InvalidParameter(format!("double exponential rate {rate}")));
                }
                Ok(grid.times().iter().map(|t| (-rate * (t - center).abs()).exp()).collect())
            }
            ModeShape::Custom { samples } => {
                if samples.len() != grid.bins {
                    return Err(Error::DimensionMismatch(samples.len(), grid.bins));
                }
                Ok(samples.clone())
            }
        }
    }
}

/// A unit-norm temporal amplitude sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalMode {
    grid: TimeGrid,
    amplitude: Vec<f64>,
    shape: ModeShape,
    warnings: Vec<String>,
}

impl TemporalMode {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn shape(&self) -> &ModeShape {
        &self.shape
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitude.iter().map(|a| a * a).sum()
    }
}

pub fn make_mode(shape: ModeShape, grid: TimeGrid) -> Result<TemporalMode> {
    grid.validate()?;
    let raw = shape.sample(&grid)?;
    let mut mode = normalized(raw, grid, shape)?;
    mode.warnings.extend(shape_warnings(&mode.amplitude));
    Ok(mode)
}

fn normalized(mut raw: Vec<f64>, grid: TimeGrid, shape: ModeShape) -> Result<TemporalMode> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateMode("non-finite samples".into()));
    }
    let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateMode("mode has no amplitude on the grid".into()));
    }
    for v in raw.iter_mut() {
        *v /= norm;
    }
    Ok(TemporalMode {
        grid,
        amplitude: raw,
        shape,
        warnings: Vec::new(),
    })
}

fn shape_warnings(amplitude: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    let peak = amplitude.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let edge = amplitude[0].abs().max(amplitude[amplitude.len() - 1].abs());
    if edge >= EDGE_WARN * peak {
        out.push(format!("mode support reaches the grid edge (edge/peak = {:e})", edge / peak));
    }
    let max_step = amplitude
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0f64, f64::max);
    if max_step > STEP_WARN * peak {
        out.push(format!(
            "mode varies by {:.0}% of peak between adjacent bins; it is under-resolved",
            100.0 * max_step / peak
        ));
    }
    out
}

/// Discrete inner product Σ_k f_k g_k.
pub fn overlap(f: &TemporalMode, g: &TemporalMode) -> Result<f64> {
    if !f.grid.matches(&g.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(f.amplitude.iter().zip(&g.amplitude).map(|(a, b)| a * b).sum())
}

/// f(t) → f(t − τ), re-normalized on the grid. Analytic shapes are
/// re-evaluated; custom samples are linearly interpolated.
pub fn shift_mode(f: &TemporalMode, tau: f64) -> Result<TemporalMode> {
    if tau == 0.0 {
        return Ok(f.clone());
    }
    if !tau.is_finite() || tau.abs() >= f.grid.span() {
        return Err(Error::EmptyMode { tau });
    }
    let (raw, shape) = if f.shape.is_analytic() {
        let shape = f.shape.shifted(tau);
        (shape.sample(&f.grid)?, shape)
    } else {
        let raw: Vec<f64> = f
            .grid
            .times()
            .iter()
            .map(|&t| interpolate_samples(&f.grid, &f.amplitude, t - tau))
            .collect();
        let shape = ModeShape::Custom { samples: raw.clone() };
        (raw, shape)
    };
    // compare against the unshifted raw samples to measure what left the grid
    let reference: f64 = if f.shape.is_analytic() {
        f.shape.sample(&f.grid)?.iter().map(|a| a * a).sum()
    } else {
        1.0
    };
    let kept: f64 = raw.iter().map(|a| a * a).sum();
    if !(kept > 0.0) {
        return Err(Error::EmptyMode { tau });
    }
    let mut mode = normalized(raw, f.grid, shape)?;
    let lost = 1.0 - kept / reference;
    if lost > 1e-6 {
        mode.warnings
            .push(format!("shift by {tau:e} moved {lost:.3e} of the mode off the grid"));
    }
    Ok(mode)
}

fn interpolate_samples(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    let pos = (t - grid.start) / grid.dt;
    if pos < 0.0 || pos > (grid.bins - 1) as f64 {
        return 0.0;
    }
    let i = (pos.floor() as usize).min(grid.bins.saturating_sub(2));
    if grid.bins == 1 {
        return values[0];
    }
    let w = pos - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Orthonormal completions of a seed mode. Column 0 is the seed itself.
pub trait Completion {
    fn bins(&self) -> usize;

    /// out = gain · Σ_j x_j f_j
    fn synthesize(&self, coefficients: &[f64], gain: f64, out: &mut [f64]);

    fn column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.bins()];
        e[j] = 1.0;
        let mut out = vec![0.0; self.bins()];
        self.synthesize(&e, 1.0, &mut out);
        out
    }
}

/// Explicit N×N orthogonal matrix whose column j is mode f_j.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    grid: TimeGrid,
    modes: DMatrix<f64>,
}

impl ModeBasis {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// max |FᵀF − I|
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.modes.ncols();
        let gram = self.modes.transpose() * &self.modes;
        (gram - DMatrix::<f64>::identity(n, n)).amax()
    }
}

impl Completion for ModeBasis {
    fn bins(&self) -> usize {
        self.modes.nrows()
    }

    fn synthesize(&self, coefficients: &[f64], gain: f64, out: &mut [f64]) {
        let n = self.modes.nrows();
        out.iter_mut().for_each(|o| *o = 0.0);
        // column-major storage: accumulate column by column
        for (j, &x) in coefficients.iter().enumerate() {
            let col = &self.modes.as_slice()[j * n..(j + 1) * n];
            for (o, f) in out.iter_mut().zip(col) {
                *o += x * f;
            }
        }
        if gain != 1.0 {
            out.iter_mut().for_each(|o| *o *= gain);
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.modes.column(j).iter().copied().collect()
    }
}

/// Completes `seed` to an orthonormal basis by QR factorization of
/// [seed | e_k for k ≠ k*], where k* is the bin with the largest |seed_k|.
/// The matrix has determinant ±seed_{k*} ≥ 1/√N, so the factorization is
/// well conditioned, and a time-bin seed yields the identity up to signs.
pub fn complete_basis(seed: &TemporalMode) -> ModeBasis {
    let n = seed.len();
    let pivot = seed
        .amplitude
        .iter()
        .enumerate()
        .fold(0, |best, (k, a)| if a.abs() > seed.amplitude[best].abs() { k } else { best });
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (k, a) in seed.amplitude.iter().enumerate() {
        m[(k, 0)] = *a;
    }
    for (j, k) in (0..n).filter(|&k| k != pivot).enumerate() {
        m[(k, j + 1)] = 1.0;
    }
    let mut q = m.qr().q();
    let dot: f64 = q.column(0).iter().zip(&seed.amplitude).map(|(a, b)| a * b).sum();
    if dot < 0.0 {
        q.column_mut(0).neg_mut();
    }
    ModeBasis {
        grid: seed.grid,
        modes: q,
    }
}

/// Householder completion H = I − 2vvᵀ/|v|² with H e₀ = ±seed. Applying it
/// costs O(N), which matters when every trace carries its own shifted mode.
#[derive(Debug, Clone)]
pub struct ReflectorBasis {
    v: Vec<f64>,
    inv_norm_sqr: f64,
    /// H e₀ = sign · seed
    sign: f64,
}

impl ReflectorBasis {
    pub fn new(seed: &TemporalMode) -> Self {
        Self::from_amplitude(&seed.amplitude)
    }

    pub fn from_amplitude(f: &[f64]) -> Self {
        // choose v = e₀ ∓ f so that |v|² = 2(1 ∓ f₀) stays away from zero
        let sign = if f[0] > 0.0 { -1.0 } else { 1.0 };
        let mut v: Vec<f64> = f.iter().map(|a| -sign * a).collect();
        v[0] += 1.0;
        let norm_sqr: f64 = v.iter().map(|a| a * a).sum();
        ReflectorBasis {
            v,
            inv_norm_sqr: 1.0 / norm_sqr,
            sign,
        }
    }
}

impl Completion for ReflectorBasis {
    fn bins(&self) -> usize {
        self.v.len()
    }

    fn synthesize(&self, coefficients: &[f64], gain: f64, out: &mut [f64]) {
        out.copy_from_slice(coefficients);
        out[0] *= self.sign;
        let proj: f64 = self.v.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
        let c = 2.0 * proj * self.inv_norm_sqr;
        for (o, v) in out.iter_mut().zip(&self.v) {
            *o = gain * (*o - c * v);
        }
    }
}
