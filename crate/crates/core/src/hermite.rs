//! Normalized harmonic-oscillator eigenfunctions ψ_n(q) = ⟨q|n⟩.

/// π^{-1/4}
const PI_QUARTER_INV: f64 = 0.751_125_544_464_942_5;

/// Fills `out[n] = ψ_n(q)` for `n < out.len()` with the upward recurrence
/// ψ_{n+1} = √(2/(n+1)) q ψ_n − √(n/(n+1)) ψ_{n−1}.
pub fn hermite_functions_into(q: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI_QUARTER_INV * (-0.5 * q * q).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * q * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * q * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

pub fn hermite_functions(q: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    hermite_functions_into(q, &mut out);
    out
}
