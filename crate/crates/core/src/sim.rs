//! Photocurrent synthesis for a state in a temporal mode against a
//! background state, with timing-jitter, phase-jitter and mode-offset errors.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{complete_basis, shift_mode, Completion, ModeBasis, ReflectorBasis, TemporalMode, TimeGrid};
use crate::phase_space::{build_cdf, marginal, MarginalDistribution, PhaseHarmonics, QuadratureGrid};
use crate::rng::trace_stream;
use crate::state::QuantumState;

/// Experimental imperfections applied per trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModel {
    /// Standard deviation of the per-trace signal-mode delay τ (seconds).
    pub timing_jitter_sigma: f64,
    /// Standard deviation of the per-trace LO phase error δθ (radians).
    pub phase_jitter_sigma: f64,
    /// Fixed delay t₀ of the analysis mode relative to the signal mode (seconds).
    pub measurement_mode_offset: f64,
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.timing_jitter_sigma >= 0.0) || !self.timing_jitter_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "timing_jitter_sigma = {}",
                self.timing_jitter_sigma
            )));
        }
        if !(self.phase_jitter_sigma >= 0.0) || !self.phase_jitter_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "phase_jitter_sigma = {}",
                self.phase_jitter_sigma
            )));
        }
        if !self.measurement_mode_offset.is_finite() {
            return Err(Error::InvalidParameter("measurement_mode_offset is not finite".into()));
        }
        Ok(())
    }
}

/// Local-oscillator phase for each trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSchedule {
    Fixed { theta: f64 },
    /// `phases` equally spaced angles kπ/phases, cycled over the traces.
    UniformScan { phases: usize },
    /// Explicit angles, cycled over the traces.
    List { values: Vec<f64> },
}

impl Default for ThetaSchedule {
    fn default() -> Self {
        ThetaSchedule::Fixed { theta: 0.0 }
    }
}

impl ThetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            ThetaSchedule::Fixed { theta } if !theta.is_finite() => {
                Err(Error::InvalidParameter("theta is not finite".into()))
            }
            ThetaSchedule::UniformScan { phases: 0 } => {
                Err(Error::InvalidParameter("uniform_scan needs at least one phase".into()))
            }
            ThetaSchedule::List { values } if values.is_empty() || values.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidParameter("theta list must be non-empty and finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn theta(&self, trace: usize) -> f64 {
        match self {
            ThetaSchedule::Fixed { theta } => *theta,
            ThetaSchedule::UniformScan { phases } => PI * (trace % phases) as f64 / *phases as f64,
            ThetaSchedule::List { values } => values[trace % values.len()],
        }
    }

    /// Distinct angles in first-use order.
    pub fn distinct(&self) -> Vec<f64> {
        match self {
            ThetaSchedule::Fixed { theta } => vec![*theta],
            ThetaSchedule::UniformScan { phases } => (0..*phases).map(|k| self.theta(k)).collect(),
            ThetaSchedule::List { values } => {
                let mut out: Vec<f64> = Vec::new();
                for v in values {
                    if !out.iter().any(|o| theta_key(*o) == theta_key(*v)) {
                        out.push(*v);
                    }
                }
                out
            }
        }
    }
}

/// Marginal cache key: θ rounded to 1e-9 rad.
pub fn theta_key(theta: f64) -> i64 {
    (theta * 1e9).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub state: String,
    pub background: String,
    pub mode: crate::modes::ModeShape,
    pub schedule: ThetaSchedule,
    pub error_model: ErrorModel,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// M photocurrent traces on a shared time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnsemble {
    grid: TimeGrid,
    /// Row-major M×N.
    traces: Vec<f64>,
    theta: Vec<f64>,
    gain: f64,
    seed: u64,
    /// The x₀ drawn for each trace, when known.
    signal_quadratures: Option<Vec<f64>>,
    timing_offsets: Option<Vec<f64>>,
    phase_offsets: Option<Vec<f64>>,
    provenance: Option<Provenance>,
}

impl TraceEnsemble {
    /// Ensemble from externally recorded traces (row-major M×N).
    pub fn from_traces(grid: TimeGrid, traces: Vec<f64>, theta: Vec<f64>, gain: f64, seed: u64) -> Result<Self> {
        grid.validate()?;
        if traces.len() != theta.len() * grid.bins {
            return Err(Error::DimensionMismatch(traces.len(), theta.len() * grid.bins));
        }
        if !(gain > 0.0) {
            return Err(Error::InvalidParameter(format!("gain = {gain}")));
        }
        Ok(TraceEnsemble {
            grid,
            traces,
            theta,
            gain,
            seed,
            signal_quadratures: None,
            timing_offsets: None,
            phase_offsets: None,
            provenance: None,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn bins(&self) -> usize {
        self.grid.bins
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn trace(&self, m: usize) -> &[f64] {
        &self.traces[m * self.bins()..(m + 1) * self.bins()]
    }

    pub fn traces(&self) -> &[f64] {
        &self.traces
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.traces.chunks_exact(self.bins())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn signal_quadratures(&self) -> Option<&[f64]> {
        self.signal_quadratures.as_deref()
    }

    pub fn timing_offsets(&self) -> Option<&[f64]> {
        self.timing_offsets.as_deref()
    }

    pub fn phase_offsets(&self) -> Option<&[f64]> {
        self.phase_offsets.as_deref()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    /// Every photocurrent sample multiplied by `c`; the gain is unchanged.
    pub fn scaled(&self, c: f64) -> TraceEnsemble {
        let mut out = self.clone();
        out.traces.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// Marginal with its CDF, ready for inverse transform sampling.
fn sampling_marginal(state: &QuantumState, theta: f64, grid: QuadratureGrid) -> Result<MarginalDistribution> {
    build_cdf(marginal(state, theta, grid)?)
}

/// One synthesized trace: x₀ from the state's θ-marginal,
/// x_{j≥1} from the background marginal, i(t_k) = g Σ_j x_j f_j(t_k) with
/// {f_j} = complete_basis(mode).
pub fn simulate_trace<R: Rng + ?Sized>(
    state: &QuantumState,
    mode: &TemporalMode,
    theta: f64,
    background: &QuantumState,
    gain: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(gain > 0.0) {
        return Err(Error::InvalidParameter(format!("gain = {gain}")));
    }
    let grid = QuadratureGrid::default();
    let signal = sampling_marginal(state, theta, grid)?;
    let bg = sampling_marginal(background, theta, grid)?;
    let basis = complete_basis(mode);
    let mut coefficients = vec![0.0; mode.len()];
    draw_coefficients(&signal, &bg, rng, &mut coefficients);
    let mut out = vec![0.0; mode.len()];
    basis.synthesize(&coefficients, gain, &mut out);
    Ok(out)
}

fn draw_coefficients<R: Rng + ?Sized>(
    signal: &MarginalDistribution,
    background: &MarginalDistribution,
    rng: &mut R,
    out: &mut [f64],
) {
    out[0] = signal.inverse_cdf(rng.random::<f64>());
    for x in out.iter_mut().skip(1) {
        *x = background.inverse_cdf(rng.random::<f64>());
    }
}

/// Everything [`simulate_ensemble`] needs.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    pub state: &'a QuantumState,
    pub mode: &'a TemporalMode,
    pub background: &'a QuantumState,
    pub schedule: ThetaSchedule,
    pub gain: f64,
    pub error_model: ErrorModel,
    pub traces: usize,
    pub seed: u64,
    pub grid: QuadratureGrid,
}

impl<'a> EnsembleSpec<'a> {
    pub fn new(state: &'a QuantumState, mode: &'a TemporalMode, background: &'a QuantumState) -> Self {
        EnsembleSpec {
            state,
            mode,
            background,
            schedule: ThetaSchedule::default(),
            gain: 1.0,
            error_model: ErrorModel::default(),
            traces: 1,
            seed: 0,
            grid: QuadratureGrid::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.traces == 0 {
            return Err(Error::InvalidParameter("trace count must be at least 1".into()));
        }
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParameter(format!("gain = {}", self.gain)));
        }
        self.schedule.validate()?;
        self.error_model.validate()?;
        self.grid.validate()
    }
}

/// Synthesizes `spec.traces` traces. Trace m draws from its own stream
/// (see [`crate::rng`]); with a zero error model it equals
/// `simulate_trace(.., &mut trace_stream(seed, m))`.
///
/// Timing jitter shifts the signal mode per trace and completes it with a
/// Householder reflector; phase jitter samples the marginal at θ_m + δθ_m
/// while the recorded angle stays θ_m.
pub fn simulate_ensemble(spec: &EnsembleSpec<'_>) -> Result<TraceEnsemble> {
    spec.validate()?;
    let n = spec.mode.len();
    let m_total = spec.traces;
    let em = spec.error_model;

    let mut signal_cache = BTreeMap::new();
    let mut background_cache = BTreeMap::new();
    for theta in spec.schedule.distinct() {
        signal_cache.insert(theta_key(theta), sampling_marginal(spec.state, theta, spec.grid)?);
        background_cache.insert(theta_key(theta), sampling_marginal(spec.background, theta, spec.grid)?);
    }
    let harmonics = if em.phase_jitter_sigma > 0.0 {
        Some(PhaseHarmonics::new(spec.state, spec.grid)?)
    } else {
        None
    };
    let basis: ModeBasis = complete_basis(spec.mode);

    let mut traces = vec![0.0; m_total * n];
    let mut x0 = vec![0.0; m_total];
    let mut taus = vec![0.0; m_total];
    let mut dthetas = vec![0.0; m_total];
    let mut clipped = vec![false; m_total];
    let theta: Vec<f64> = (0..m_total).map(|m| spec.schedule.theta(m)).collect();

    traces
        .par_chunks_mut(n)
        .zip(x0.par_iter_mut())
        .zip(taus.par_iter_mut())
        .zip(dthetas.par_iter_mut())
        .zip(clipped.par_iter_mut())
        .enumerate()
        .try_for_each(|(m, ((((row, x0), tau), dtheta), clipped))| -> Result<()> {
            let mut rng = trace_stream(spec.seed, m as u64);
            if em.timing_jitter_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *tau = em.timing_jitter_sigma * z;
            }
            if em.phase_jitter_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *dtheta = em.phase_jitter_sigma * z;
            }
            let key = theta_key(theta[m]);
            let background = &background_cache[&key];
            let mut coefficients = vec![0.0; n];
            match &harmonics {
                Some(h) if *dtheta != 0.0 => {
                    let jittered = build_cdf(h.marginal(theta[m] + *dtheta)?)?;
                    draw_coefficients(&jittered, background, &mut rng, &mut coefficients);
                }
                _ => draw_coefficients(&signal_cache[&key], background, &mut rng, &mut coefficients),
            }
            *x0 = coefficients[0];
            if *tau != 0.0 {
                let shifted = shift_mode(spec.mode, *tau)?;
                *clipped = !shifted.warnings().is_empty();
                ReflectorBasis::new(&shifted).synthesize(&coefficients, spec.gain, row);
            } else {
                basis.synthesize(&coefficients, spec.gain, row);
            }
            Ok(())
        })?;

    let mut warnings: Vec<String> = spec.state.metadata().warnings.clone();
    warnings.extend(spec.mode.warnings().iter().cloned());
    let n_clipped = clipped.iter().filter(|c| **c).count();
    if n_clipped > 0 {
        warnings.push(format!(
            "{n_clipped} of {m_total} jittered modes were partly shifted off the time grid"
        ));
    }
    Ok(TraceEnsemble {
        grid: spec.mode.grid(),
        traces,
        theta,
        gain: spec.gain,
        seed: spec.seed,
        signal_quadratures: Some(x0),
        timing_offsets: Some(taus),
        phase_offsets: Some(dthetas),
        provenance: Some(Provenance {
            state: spec.state.label().to_string(),
            background: spec.background.label().to_string(),
            mode: spec.mode.shape().clone(),
            schedule: spec.schedule.clone(),
            error_model: em,
            warnings,
        }),
    })
}

/// Marginal of η q^{(f)} + √(1−η²) q^{(vac)} for independent terms: the
/// state marginal scaled by η convolved with a vacuum marginal of variance
/// (1−η²)/2.
pub fn mode_mismatch_marginal(
    state: &QuantumState,
    eta: f64,
    theta: f64,
    grid: QuadratureGrid,
) -> Result<MarginalDistribution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("mode overlap eta = {eta} outside [0, 1]")));
    }
    let label = format!("{} (eta = {eta})", state.label());
    if eta == 1.0 {
        let m = marginal(state, theta, grid)?;
        return MarginalDistribution::from_pdf(grid, m.pdf().to_vec(), theta, label);
    }
    if eta == 0.0 {
        let vac = QuantumState::vacuum(state.dim())?;
        let m = marginal(&vac, theta, grid)?;
        return MarginalDistribution::from_pdf(grid, m.pdf().to_vec(), theta, label);
    }
    let source = marginal(state, theta, grid)?;
    let q = source.q();
    let dq = grid.step();
    let sigma = ((1.0 - eta * eta) / 2.0).sqrt();
    let mut out = vec![0.0; grid.points];
    // each source cell's mass p_j Δq lands around η x_j with the vacuum kernel
    for (&x, &p) in q.iter().zip(source.pdf()) {
        if p == 0.0 {
            continue;
        }
        let mass = p * dq;
        let centre = eta * x;
        if sigma >= dq {
            let lo = ((centre - 9.0 * sigma - grid.min) / dq).floor().max(0.0) as usize;
            let hi = (((centre + 9.0 * sigma - grid.min) / dq).ceil() as usize).min(grid.points - 1);
            let weights: Vec<f64> = (lo..=hi)
                .map(|i| (-(q[i] - centre).powi(2) / (2.0 * sigma * sigma)).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                for (i, w) in (lo..=hi).zip(weights) {
                    out[i] += mass * w / total / dq;
                }
            }
        } else {
            let pos = (centre - grid.min) / dq;
            let i = (pos.floor().max(0.0) as usize).min(grid.points - 2);
            let t = (pos - i as f64).clamp(0.0, 1.0);
            out[i] += mass * (1.0 - t) / dq;
            out[i + 1] += mass * t / dq;
        }
    }
    MarginalDistribution::from_pdf(grid, out, theta, label)
}
