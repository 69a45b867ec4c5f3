//! Quadrature recovery from traces and the statistics built on it.

mod mle;
mod principal;

pub use mle::{mle_reconstruct, MleOutcome, MleSettings};
pub use principal::{estimate_principal_mode, estimate_principal_mode_with_background, PrincipalMode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::TemporalMode;
use crate::phase_space::{marginal, MarginalDistribution, PhaseHarmonics, QuadratureGrid};
use crate::sim::TraceEnsemble;
use crate::state::QuantumState;

/// Default histogram binning.
pub const DEFAULT_HISTOGRAM_BINS: usize = 80;
pub const DEFAULT_HISTOGRAM_RANGE: (f64, f64) = (-6.0, 6.0);

/// One recovered quadrature with its nominal LO phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    pub theta: f64,
    pub q: f64,
}

/// q_m = (1/g) Σ_k f̃(t_k) i_m(t_k) for every trace m.
pub fn recover_quadratures(ensemble: &TraceEnsemble, analysis_mode: &TemporalMode) -> Result<Vec<QuadratureRecord>> {
    if !ensemble.grid().matches(&analysis_mode.grid()) {
        return Err(Error::GridMismatch);
    }
    let f = analysis_mode.amplitude();
    let inv_gain = 1.0 / ensemble.gain();
    let theta = ensemble.theta();
    Ok(ensemble
        .traces()
        .par_chunks_exact(ensemble.bins())
        .enumerate()
        .map(|(m, row)| QuadratureRecord {
            theta: theta[m],
            q: row.iter().zip(f).map(|(i, a)| i * a).sum::<f64>() * inv_gain,
        })
        .collect())
}

/// Normalized histogram of recovered quadratures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginal {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalized_pdf: Vec<f64>,
    /// Samples below the first edge.
    pub underflow: u64,
    /// Samples above the last edge.
    pub overflow: u64,
}

impl EmpiricalMarginal {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histogram over [lo, hi] of the records whose θ lies in `theta_filter`
/// (inclusive). Out-of-range samples are tallied but excluded from the pdf.
pub fn histogram_marginal(
    records: &[QuadratureRecord],
    theta_filter: Option<(f64, f64)>,
    bins: usize,
    range: (f64, f64),
) -> Result<EmpiricalMarginal> {
    let (lo, hi) = range;
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter(format!("histogram of {bins} bins over [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let (mut underflow, mut overflow) = (0u64, 0u64);
    let mut selected = 0usize;
    for r in records {
        if let Some((a, b)) = theta_filter {
            if r.theta < a || r.theta > b {
                continue;
            }
        }
        selected += 1;
        if r.q < lo {
            underflow += 1;
        } else if r.q > hi {
            overflow += 1;
        } else {
            let i = (((r.q - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
    }
    if selected == 0 {
        return Err(Error::EmptySelection("no records pass the theta filter".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySelection(format!("no records fall inside [{lo}, {hi}]")));
    }
    let norm = total as f64 * width;
    Ok(EmpiricalMarginal {
        bin_edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        normalized_pdf: counts.iter().map(|&c| c as f64 / norm).collect(),
        counts,
        underflow,
        overflow,
    })
}

/// Either kind of density accepted by [`bhattacharyya`].
#[derive(Debug, Clone, Copy)]
pub enum Density<'a> {
    Tabulated(&'a MarginalDistribution),
    Histogram(&'a EmpiricalMarginal),
}

impl<'a> From<&'a MarginalDistribution> for Density<'a> {
    fn from(m: &'a MarginalDistribution) -> Self {
        Density::Tabulated(m)
    }
}

impl<'a> From<&'a EmpiricalMarginal> for Density<'a> {
    fn from(m: &'a EmpiricalMarginal) -> Self {
        Density::Histogram(m)
    }
}

/// Bhattacharyya coefficient B = Σ √(p_i q_i) Δ on a common grid.
///
/// Two tabulated marginals on different grids are both resampled onto the
/// finer grid. A histogram compared with a tabulated marginal samples the
/// latter at the bin centres. Disjoint supports give 0.
pub fn bhattacharyya<'a, 'b>(p: impl Into<Density<'a>>, q: impl Into<Density<'b>>) -> Result<f64> {
    let b = match (p.into(), q.into()) {
        (Density::Tabulated(a), Density::Tabulated(b)) => bhattacharyya_tabulated(a, b),
        (Density::Histogram(h), Density::Tabulated(m)) | (Density::Tabulated(m), Density::Histogram(h)) => {
            let reference: Vec<f64> = h.centers().iter().map(|&c| m.pdf_at(c)).collect();
            overlap_sum(&h.normalized_pdf, &reference, h.width())
        }
        (Density::Histogram(a), Density::Histogram(b)) => {
            let same = a.bins() == b.bins()
                && a.bin_edges
                    .iter()
                    .zip(&b.bin_edges)
                    .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            if !same {
                return Err(Error::InvalidParameter("histograms use different bins".into()));
            }
            overlap_sum(&a.normalized_pdf, &b.normalized_pdf, a.width())
        }
    };
    Ok(b)
}

fn bhattacharyya_tabulated(a: &MarginalDistribution, b: &MarginalDistribution) -> f64 {
    let (ga, gb) = (a.grid(), b.grid());
    if ga == gb {
        return overlap_sum(a.pdf(), b.pdf(), ga.step());
    }
    // the target choice must not depend on argument order
    let target = if (ga.step(), ga.min, -ga.max) <= (gb.step(), gb.min, -gb.max) { ga } else { gb };
    let x = target.values();
    let pa: Vec<f64> = x.iter().map(|&v| a.pdf_at(v)).collect();
    let pb: Vec<f64> = x.iter().map(|&v| b.pdf_at(v)).collect();
    overlap_sum(&pa, &pb, target.step())
}

/// Normalizes both inputs on the shared spacing, then Σ √(p q) Δ.
fn overlap_sum(p: &[f64], q: &[f64], delta: f64) -> f64 {
    let np: f64 = p.iter().sum::<f64>() * delta;
    let nq: f64 = q.iter().sum::<f64>() * delta;
    if !(np > 0.0) || !(nq > 0.0) {
        return 0.0;
    }
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    (s * delta / (np * nq).sqrt()).min(1.0)
}

/// Unbiased per-bin variance across traces.
pub fn pointwise_variance(ensemble: &TraceEnsemble) -> Result<Vec<f64>> {
    let m = ensemble.len();
    if m < 2 {
        return Err(Error::InsufficientTraces { needed: 2, got: m });
    }
    let n = ensemble.bins();
    let data = ensemble.traces();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let mean = (0..m).map(|r| data[r * n + k]).sum::<f64>() / m as f64;
            (0..m).map(|r| (data[r * n + k] - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        })
        .collect())
}

/// Marginal averaged over Gaussian LO phase noise:
/// Pr(q) = ∫ dδ p(δ) Pr_ρ(q_{θ+δ}), integrated numerically on ±6σ.
pub fn phase_averaged_marginal(
    state: &QuantumState,
    theta: f64,
    sigma: f64,
    grid: QuadratureGrid,
) -> Result<MarginalDistribution> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("phase jitter sigma = {sigma}")));
    }
    if sigma == 0.0 {
        return marginal(state, theta, grid);
    }
    const NODES: usize = 241;
    let harmonics = PhaseHarmonics::new(state, grid)?;
    let h = 12.0 * sigma / (NODES - 1) as f64;
    let offsets: Vec<f64> = (0..NODES).map(|k| -6.0 * sigma + k as f64 * h).collect();
    let weights: Vec<f64> = offsets.iter().map(|d| (-d * d / (2.0 * sigma * sigma)).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    let mut pdf = vec![0.0; grid.points];
    for (d, w) in offsets.iter().zip(&weights) {
        for (o, v) in pdf.iter_mut().zip(harmonics.density(theta + d)) {
            *o += w / wsum * v;
        }
    }
    MarginalDistribution::from_pdf(grid, pdf, theta, format!("{} (phase jitter {sigma})", state.label()))
}

/// Sample mean and unbiased variance of recovered quadratures.
pub fn quadrature_moments(records: &[QuadratureRecord]) -> (f64, f64) {
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.q).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.q - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{make_mode, ModeShape, TimeGrid};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn rec(q: &[f64]) -> Vec<QuadratureRecord> {
        q.iter().map(|&q| QuadratureRecord { theta: 0.0, q }).collect()
    }

    #[test]
    fn single_record_fills_one_bin() {
        let h = histogram_marginal(&rec(&[0.3]), None, 10, (-1.0, 1.0)).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[6], 1);
        assert_abs_diff_eq!(h.normalized_pdf.iter().sum::<f64>() * h.width(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn histogram_tallies_out_of_range() {
        let h = histogram_marginal(&rec(&[-3.0, 0.0, 0.5, 2.0, 1.0]), None, 4, (-1.0, 1.0)).unwrap();
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 1);
        assert_eq!(h.in_range(), 3);
        assert_eq!(h.counts[3], 2);
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(histogram_marginal(&[], None, 4, (-1.0, 1.0)), Err(Error::EmptySelection(_))));
        let r = vec![QuadratureRecord { theta: 1.0, q: 0.0 }];
        assert!(matches!(
            histogram_marginal(&r, Some((0.0, 0.5)), 4, (-1.0, 1.0)),
            Err(Error::EmptySelection(_))
        ));
        assert!(histogram_marginal(&r, None, 0, (-1.0, 1.0)).is_err());
        assert!(histogram_marginal(&r, Some((0.5, 1.5)), 4, (-1.0, 1.0)).is_ok());
    }

    #[test]
    fn bhattacharyya_oracles() {
        let grid = QuadratureGrid::default();
        let vac = marginal(&QuantumState::vacuum(40).unwrap(), 0.0, grid).unwrap();
        let one = marginal(&QuantumState::fock(1, 40).unwrap(), 0.0, grid).unwrap();
        assert_abs_diff_eq!(bhattacharyya(&vac, &vac).unwrap(), 1.0, epsilon = 1e-12);
        // ∫ √(e^{−q²}/√π · 2q² e^{−q²}/√π) dq = √(2/π)
        let b = bhattacharyya(&vac, &one).unwrap();
        assert_abs_diff_eq!(b, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-3);
        assert_eq!(b, bhattacharyya(&one, &vac).unwrap());
        for alpha in [0.5, 1.0, 2.0] {
            let coh = marginal(&QuantumState::coherent(Complex64::new(alpha, 0.0), 40).unwrap(), 0.0, grid).unwrap();
            // two variance-1/2 Gaussians displaced by √2 α
            let oracle = (-alpha * alpha / 2.0f64).exp();
            assert_abs_diff_eq!(bhattacharyya(&vac, &coh).unwrap(), oracle, epsilon = 1e-3);
        }
    }

    #[test]
    fn bhattacharyya_resamples_different_grids() {
        let s = QuantumState::fock(1, 40).unwrap();
        let fine = marginal(&s, 0.0, QuadratureGrid::default()).unwrap();
        let coarse = marginal(&s, 0.0, QuadratureGrid::new(-7.0, 7.0, 281).unwrap()).unwrap();
        let b = bhattacharyya(&fine, &coarse).unwrap();
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-4);
        assert_eq!(b, bhattacharyya(&coarse, &fine).unwrap());
    }

    #[test]
    fn disjoint_supports_give_zero() {
        let g = QuadratureGrid::new(-2.0, 2.0, 5).unwrap();
        let a = MarginalDistribution::from_pdf(g, vec![1.0, 1.0, 0.0, 0.0, 0.0], 0.0, "a").unwrap();
        let b = MarginalDistribution::from_pdf(g, vec![0.0, 0.0, 0.0, 1.0, 1.0], 0.0, "b").unwrap();
        assert_eq!(bhattacharyya(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn histogram_vs_histogram() {
        let a = histogram_marginal(&rec(&[0.1, 0.2, -0.3]), None, 4, (-1.0, 1.0)).unwrap();
        let b = histogram_marginal(&rec(&[0.1, -0.6]), None, 4, (-1.0, 1.0)).unwrap();
        let c = histogram_marginal(&rec(&[0.1]), None, 5, (-1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(bhattacharyya(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(bhattacharyya(&a, &b).unwrap(), bhattacharyya(&b, &a).unwrap());
        assert!(bhattacharyya(&a, &c).is_err());
    }

    #[test]
    fn phase_average_matches_harmonic_damping() {
        // averaging e^{idθ} over N(0, σ²) multiplies harmonic d by e^{−d²σ²/2}
        let s = QuantumState::cat(Complex64::new(2.0, 0.0), crate::state::Parity::Even, 40).unwrap();
        let grid = QuadratureGrid::default();
        let sigma = 0.3;
        let numeric = phase_averaged_marginal(&s, 1.2, sigma, grid).unwrap();
        let h = PhaseHarmonics::new(&s, grid).unwrap();
        let damped = h.density_weighted(1.2, |d| (-((d * d) as f64) * sigma * sigma / 2.0).exp());
        let oracle = MarginalDistribution::from_pdf(grid, damped, 1.2, "oracle").unwrap();
        for (a, b) in numeric.pdf().iter().zip(oracle.pdf()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
        let fock = QuantumState::fock(1, 40).unwrap();
        let avg = phase_averaged_marginal(&fock, 0.0, 0.5, grid).unwrap();
        let plain = marginal(&fock, 0.0, grid).unwrap();
        assert_abs_diff_eq!(bhattacharyya(&avg, &plain).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn variance_requires_two_traces() {
        let g = TimeGrid::centered(1.0, 4).unwrap();
        let e = TraceEnsemble::from_traces(g, vec![1.0; 4], vec![0.0], 1.0, 0).unwrap();
        assert!(matches!(pointwise_variance(&e), Err(Error::InsufficientTraces { .. })));
        let e = TraceEnsemble::from_traces(g, vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0], vec![0.0, 0.0], 1.0, 0)
            .unwrap();
        assert_eq!(pointwise_variance(&e).unwrap(), vec![2.0, 0.0, 2.0, 8.0]);
    }

    #[test]
    fn recovery_is_linear_and_grid_checked() {
        let g = TimeGrid::centered(1.0, 4).unwrap();
        let e = TraceEnsemble::from_traces(g, vec![1.0, -2.0, 0.5, 3.0], vec![0.3], 2.0, 0).unwrap();
        let f = make_mode(ModeShape::Custom { samples: vec![1.0, 1.0, 1.0, 1.0] }, g).unwrap();
        let q = recover_quadratures(&e, &f).unwrap();
        assert_abs_diff_eq!(q[0].q, 2.5 * 0.5 / 2.0, epsilon = 1e-15);
        assert_eq!(q[0].theta, 0.3);
        let q2 = recover_quadratures(&e.scaled(2.0), &f).unwrap();
        assert_eq!(q2[0].q, 2.0 * q[0].q);
        let other = make_mode(ModeShape::Custom { samples: vec![1.0; 5] }, TimeGrid::centered(1.0, 5).unwrap()).unwrap();
        assert!(matches!(recover_quadratures(&e, &other), Err(Error::GridMismatch)));
    }
}
