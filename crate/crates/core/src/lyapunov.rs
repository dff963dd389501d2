//! Lyapunov exponents of the Schrödinger cocycle.
//!
//! Solutions of `(H − E)ψ = 0` obey `ψ(n+1) = λ(E − V(n))ψ(n) − ψ(n−1)`, so
//! the column `(ψ(n+1), ψ(n))` is propagated by the unimodular matrix
//! `[[λ(E−v), −1], [1, 0]]`. The column is renormalized to unit length after
//! every step and the log of the norms is accumulated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::operator::OperatorSpec;
use crate::rng::{derive_seed, Subsystem};

/// Direction of the propagated column plus accumulated growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferState {
    column: [f64; 2],
    log_norm: f64,
    steps: u64,
}

impl Default for TransferState {
    fn default() -> Self {
        Self { column: [1.0, 0.0], log_norm: 0.0, steps: 0 }
    }
}

impl TransferState {
    /// Starts from the unit column `(1, 0)`.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn column(&self) -> [f64; 2] {
        self.column
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One cocycle step at potential value `v`.
pub fn transfer_step(s: TransferState, v: f64, e: f64, lambda: f64) -> TransferState {
    let u = lambda * (e - v);
    let [x, y] = s.column;
    let nx = u * x - y;
    let ny = x;
    let r = nx.hypot(ny);
    TransferState { column: [nx / r, ny / r], log_norm: s.log_norm + r.ln(), steps: s.steps + 1 }
}

/// `ln ‖[[u, −1], [1, 0]]‖₂`.
pub fn step_log_norm(u: f64) -> f64 {
    // σ² + σ⁻² = u² + 2 for a unimodular matrix
    let s = u * u + 2.0;
    0.5 * (0.5 * (s + ((s - 2.0) * (s + 2.0)).sqrt())).ln()
}

/// Ensemble estimate of γ(E).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub gamma: f64,
    pub stderr: f64,
    pub steps: u64,
    pub ensemble: u64,
}

const FLUSH: usize = 16;
const EXP_MASK: u64 = 0x7ff << 52;

/// Splits a positive normal float into `(mantissa in [1,2), exponent)`.
#[inline]
fn split_exp(x: f64) -> (f64, i64) {
    let bits = x.to_bits();
    let e = ((bits & EXP_MASK) >> 52) as i64 - 1023;
    (f64::from_bits((bits & !EXP_MASK) | (1023 << 52)), e)
}

/// Runs the cocycle for every energy along one potential sequence and
/// returns the accumulated log norms.
///
/// Norm products are kept as mantissa/exponent pairs and the exponent is
/// extracted exactly every `FLUSH` steps, so each lane's result does not
/// depend on which other energies share the pass.
fn cocycle_log_norms<I: Iterator<Item = f64>>(potential: I, energies: &[f64], lambda: f64, n: u64) -> Vec<f64> {
    let k = energies.len();
    let mut x = vec![1.0; k];
    let mut y = vec![0.0; k];
    let mut prod = vec![1.0; k];
    let mut exps = vec![0i64; k];
    let mut buf = [0.0; FLUSH];
    let mut potential = potential;
    let mut done = 0u64;
    while done < n {
        let chunk = (n - done).min(FLUSH as u64) as usize;
        for slot in buf.iter_mut().take(chunk) {
            *slot = potential.next().expect("potential streams are endless");
        }
        for &v in &buf[..chunk] {
            for j in 0..k {
                let u = lambda * (energies[j] - v);
                let nx = u * x[j] - y[j];
                let ny = x[j];
                let r = (nx * nx + ny * ny).sqrt();
                let inv = 1.0 / r;
                x[j] = nx * inv;
                y[j] = ny * inv;
                prod[j] *= r;
            }
        }
        for j in 0..k {
            let (m, e) = split_exp(prod[j]);
            prod[j] = m;
            exps[j] += e;
        }
        done += chunk as u64;
    }
    (0..k).map(|j| exps[j] as f64 * std::f64::consts::LN_2 + prod[j].ln()).collect()
}

/// Largest per-step growth factor for the spec and energies; bounds the
/// mantissa range between flushes.
fn check_growth(spec: &OperatorSpec, energies: &[f64]) -> Result<()> {
    let (lo, hi) = spec.potential_range();
    let worst = energies.iter().map(|e| (e - lo).abs().max((e - hi).abs())).fold(0.0, f64::max);
    let bound = spec.lambda * worst + 1.0;
    if !bound.is_finite() || bound.log2() * FLUSH as f64 > 1000.0 {
        return domain(format!("per-step growth {bound:e} is too large for the cocycle accumulator"));
    }
    Ok(())
}

fn member_seed(seed: u64, member: u64) -> u64 {
    derive_seed(seed, Subsystem::Lyapunov, member)
}

/// Mean and standard error with a shifted sum, so identical members give
/// the member value bit-for-bit.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let b = xs.len();
    if b == 0 {
        return (f64::NAN, f64::NAN);
    }
    let x0 = xs[0];
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / b as f64;
    if b == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// γ(E; ω) along the single trajectory drawn from `seed`.
pub fn lyapunov_single(spec: &OperatorSpec, e: f64, n: u64, seed: u64) -> Result<LyapunovEstimate> {
    Ok(lyapunov_scan(spec, &[e], n, 1, seed)?[0])
}

/// γ(E) averaged over `b` trajectories.
pub fn lyapunov_avg(spec: &OperatorSpec, e: f64, n: u64, b: u64, seed: u64) -> Result<LyapunovEstimate> {
    Ok(lyapunov_scan(spec, &[e], n, b, seed)?[0])
}

/// γ at every energy of `energies`, all sharing the same `b` trajectories.
///
/// Member `i` uses the same potential sequence for every energy, and the
/// result at a given energy does not depend on the rest of the grid.
pub fn lyapunov_scan(
    spec: &OperatorSpec,
    energies: &[f64],
    n: u64,
    b: u64,
    seed: u64,
) -> Result<Vec<LyapunovEstimate>> {
    spec.validate()?;
    if n == 0 || b == 0 {
        return domain("need at least one step and one ensemble member");
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return domain("energies must be finite");
    }
    check_growth(spec, energies)?;
    let members = if spec.is_deterministic() { 1 } else { b };
    let per_member: Vec<Vec<f64>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let stream = spec.stream(0, member_seed(seed, i));
            cocycle_log_norms(stream, energies, spec.lambda, n)
        })
        .collect();
    Ok((0..energies.len())
        .map(|j| {
            let mut gammas: Vec<f64> = per_member.iter().map(|m| m[j] / n as f64).collect();
            // deterministic drivers: every member would repeat member 0
            if members < b {
                gammas.resize(b as usize, gammas[0]);
            }
            let (gamma, stderr) = mean_stderr(&gammas);
            LyapunovEstimate { gamma, stderr, steps: n, ensemble: b }
        })
        .collect())
}

/// `(1/N) Σ ln ‖T_n‖` along the trajectory used by [`lyapunov_single`]; an
/// upper bound for its γ by submultiplicativity.
pub fn norm_average(spec: &OperatorSpec, e: f64, n: u64, seed: u64) -> Result<f64> {
    spec.validate()?;
    if n == 0 {
        return domain("need at least one step");
    }
    let total: f64 =
        spec.stream(0, member_seed(seed, 0)).take(n as usize).map(|v| step_log_norm(spec.lambda * (e - v))).sum();
    Ok(total / n as f64)
}

/// Exact γ of a periodic potential from its monodromy matrix.
pub fn periodic_oracle(values: &[f64], e: f64, lambda: f64) -> Result<f64> {
    if values.is_empty() {
        return domain("period must be at least 1");
    }
    if !(lambda > 0.0) || values.iter().any(|v| !v.is_finite()) || !e.is_finite() {
        return domain("periodic oracle needs λ > 0 and finite inputs");
    }
    // M = T_{p−1} ⋯ T_0, kept as exp(scale) · m
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    let mut scale = 0.0;
    for &v in values {
        let u = lambda * (e - v);
        let next = [[u * m[0][0] - m[1][0], u * m[0][1] - m[1][1]], [m[0][0], m[0][1]]];
        let norm = next.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        m = next.map(|row| row.map(|x| x / norm));
        scale += norm.ln();
    }
    let trace = m[0][0] + m[1][1];
    // det m = exp(−2 scale); the monodromy is elliptic when |tr| ≤ 2
    let det = (-2.0 * scale).exp();
    if trace.abs() <= 2.0 * (-scale).exp() {
        return Ok(0.0);
    }
    let rho = 0.5 * (trace.abs() + (trace * trace - 4.0 * det).max(0.0).sqrt());
    Ok((scale + rho.ln()) / values.len() as f64)
}

/// Rigorous bound `ln λ + ln(max_v |E − v| + 1/λ)` from `‖T‖ ≤ λ|E−v| + 1`.
pub fn gamma_upper_bound(spec: &OperatorSpec, e: f64) -> f64 {
    let (lo, hi) = spec.potential_range();
    let lambda = spec.lambda;
    lambda.ln() + ((e - lo).abs().max((e - hi).abs()) + 1.0 / lambda).ln()
}

/// The energy-independent form `ln λ + ln(max f − min f + 4/λ)`, valid for
/// energies within `[min f − 2/λ, max f + 2/λ]`.
pub fn spectral_upper_bound(spec: &OperatorSpec) -> f64 {
    let (lo, hi) = spec.potential_range();
    spec.lambda.ln() + (hi - lo + 4.0 / spec.lambda).ln()
}
