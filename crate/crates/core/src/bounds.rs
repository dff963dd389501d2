//! Exceptional-energy bounds and the determinant moment estimates behind them.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lyapunov::mean_stderr;
use crate::operator::{ComplexEnergy, Distribution};
use crate::quad::integrate_adaptive;
use crate::rng::{member_rng, Subsystem};

/// Parameters of the bound on `meas Z_t`, the set of energies in
/// `[E₀ − δ, E₀ + δ]` with `γ(E) ≤ t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop31Inputs {
    pub ln_lambda: f64,
    pub t: f64,
    pub xi: f64,
    pub delta: f64,
    /// `g(δ; E₀) = max(δ, sup ρ[E − δ, E + δ])`.
    pub g: f64,
}

impl Prop31Inputs {
    pub fn validate(&self) -> Result<()> {
        let Self { ln_lambda, t, xi, delta, g } = *self;
        if ![ln_lambda, t, xi, delta, g].iter().all(|x| x.is_finite()) {
            return domain("bound inputs must be finite");
        }
        if !(delta > 0.0 && delta < xi && xi <= 1.0) {
            return domain(format!("need 0 < δ < ξ ≤ 1, got δ = {delta}, ξ = {xi}"));
        }
        if g < delta {
            return domain(format!("need g ≥ δ, got g = {g}, δ = {delta}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: Prop31Inputs,
    /// `ln raw_bound`; finite even when the bound underflows.
    pub log_raw_bound: f64,
    pub raw_bound: f64,
    /// `min(raw_bound, 2δ)`.
    pub clamped_bound: f64,
    pub vacuous: bool,
}

/// `meas Z_t ≤ 2e·exp{−(ln λ − t − 6ξ ln(e²g/(ξδ)))/(2g)}`, clamped by `2δ`.
pub fn prop31_bound(p: Prop31Inputs) -> Result<BoundReport> {
    p.validate()?;
    let numerator = p.ln_lambda - p.t - 6.0 * p.xi * (2.0 + (p.g / (p.xi * p.delta)).ln());
    let log_raw_bound = (2.0 * std::f64::consts::E).ln() - numerator / (2.0 * p.g);
    let raw_bound = log_raw_bound.exp();
    let vacuous = log_raw_bound >= (2.0 * p.delta).ln();
    Ok(BoundReport {
        inputs: p,
        log_raw_bound,
        raw_bound,
        clamped_bound: if vacuous { 2.0 * p.delta } else { raw_bound },
        vacuous,
    })
}

/// Lebesgue measure of `{E ∈ [e0 − δ, e0 + δ] : γ(E) ≤ t}` from a uniform
/// grid of `(E, γ)` rows: spacing times the number of hits.
pub fn measure_zt(rows: &[(f64, f64)], t: f64, e0: f64, delta: f64) -> Result<f64> {
    if rows.len() < 2 {
        return domain("need at least two grid points");
    }
    let h = rows[1].0 - rows[0].0;
    if !(h > 0.0) {
        return domain("grid must be increasing");
    }
    if rows.windows(2).any(|w| ((w[1].0 - w[0].0) - h).abs() > 1e-9 * h.max(w[1].0.abs())) {
        return domain("grid is not uniform");
    }
    let (lo, hi) = (e0 - delta, e0 + delta);
    let hits = rows.iter().filter(|(e, g)| *e >= lo - 1e-12 * h && *e <= hi + 1e-12 * h && *g <= t).count();
    Ok(h * hits as f64)
}

/// `(3A ln(1 + 1/(Aδ)) + 2/ξ)^m`.
pub fn prop2_rhs(a: f64, delta: f64, xi: f64, m: u32) -> Result<f64> {
    if !(a > 0.0 && delta > 0.0 && xi > 0.0) || m == 0 {
        return domain("need A, δ, ξ > 0 and m ≥ 1");
    }
    Ok((lemma_rhs(a, delta) + 2.0 / xi).powi(m as i32))
}

fn lemma_rhs(a: f64, delta: f64) -> f64 {
    3.0 * a * (1.0 / (a * delta)).ln_1p()
}

/// Default ξ: distance from `e` to the ends of the support.
pub fn default_xi(dist: &Distribution, e: f64) -> Result<f64> {
    let (lo, hi) = dist.support();
    let xi = (e - lo).min(hi - e);
    if !(xi > 0.0) {
        return domain(format!("energy {e} is not inside the support [{lo}, {hi}]"));
    }
    Ok(xi)
}

/// Monte-Carlo mean of `|Δ_m − aΔ_{m−1}|⁻¹` over i.i.d. potentials:
/// `(estimate, stderr)`.
#[allow(clippy::too_many_arguments)]
pub fn prop2_mc(
    dist: &Distribution,
    m: usize,
    z: ComplexEnergy,
    lambda: f64,
    a: Complex64,
    xi: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    dist.validate()?;
    if m == 0 || samples == 0 {
        return domain("need m ≥ 1 and at least one sample");
    }
    if !(lambda > 0.0) {
        return domain("coupling must be positive");
    }
    if a.im < 0.0 || a.norm() > xi / 2.0 {
        return domain("need Im a ≥ 0 and |a| ≤ ξ/2");
    }
    let zc = z.z();
    let t2 = lambda.powi(-2);
    let xs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, Subsystem::Prop2, i);
            let (mut prev, mut curr) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
            for k in 0..m {
                let v = dist.sample(&mut rng);
                let next = if k == 0 { v - zc } else { (v - zc) * curr - t2 * prev };
                if k > 0 {
                    prev = curr;
                }
                curr = next;
            }
            // after the loop curr = Δ_m, prev = Δ_{m−1}
            1.0 / (curr - a * prev).norm()
        })
        .collect();
    Ok(mean_stderr(&xs))
}

fn quad_lhs(dist: &Distribution, shift: f64, delta: f64) -> Result<f64> {
    let (lo, hi) = dist.support();
    let mut splits = dist.breakpoints();
    splits.push(shift);
    let f = |v: f64| dist.density(v) / ((v - shift) * (v - shift) + delta * delta).sqrt();
    let r = integrate_adaptive(f, lo, hi, &splits, 1e-11, 50_000)?;
    if !r.converged {
        return Err(Error::Numerical(format!("moment integral did not converge (err {:e})", r.err_est)));
    }
    Ok(r.value)
}

/// `∫ dτ(v)/√((v − E)² + δ²)` by quadrature and `3A ln(1 + 1/(Aδ))`.
pub fn lemma_bdddens_check(a: f64, delta: f64, e: f64, dist: &Distribution) -> Result<(f64, f64)> {
    dist.validate()?;
    if !(a > 0.0 && delta > 0.0) {
        return domain("need A > 0 and δ > 0");
    }
    if dist.max_density() > a * (1.0 + 1e-12) {
        return domain("density exceeds A");
    }
    Ok((quad_lhs(dist, e, delta)?, lemma_rhs(a, delta)))
}

/// Split-measure variant: the density is only bounded by `A` on
/// `[E − ξ, E + ξ]`; the shift `a` satisfies `|a| ≤ ξ/2`. Returns
/// `(∫ dσ(v)/√((v − E − a)² + δ²), 3A ln(1 + 1/(Aδ)) + 2/ξ)`.
pub fn lemma_split_check(
    a_bound: f64,
    delta: f64,
    e: f64,
    xi: f64,
    shift: f64,
    dist: &Distribution,
) -> Result<(f64, f64)> {
    dist.validate()?;
    if !(a_bound > 0.0 && delta > 0.0 && xi > 0.0) {
        return domain("need A, δ, ξ > 0");
    }
    if shift.abs() > xi / 2.0 {
        return domain("need |a| ≤ ξ/2");
    }
    if dist.max_density_on(e - xi, e + xi) > a_bound * (1.0 + 1e-12) {
        return domain("density exceeds A on [E − ξ, E + ξ]");
    }
    Ok((quad_lhs(dist, e + shift, delta)?, lemma_rhs(a_bound, delta) + 2.0 / xi))
}
