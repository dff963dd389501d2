//! Fast self-check of the crate's invariants, run by `ergolab verify`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{lemma_bdddens_check, prop31_bound, Prop31Inputs};
use crate::dos::{dos_histogram, linspace, stieltjes, SpectralHistogram};
use crate::dynamics::{
    pendulum_residual, reduce_angle, skew_shift_step, skew_shift_step_inverse, std_map_orbit, std_map_step,
    std_map_step_inverse, wrap, SkewShiftState, StdMapState,
};
use crate::error::Result;
use crate::lyapunov::{gamma_upper_bound, lyapunov_single};
use crate::operator::{det_recursion, sample_potential, sturm_count, ComplexEnergy, Distribution, OperatorSpec};
use crate::quad::quadr_bound_check;
use crate::resonance::{classify_lambda, default_offsets, delta3, hbar_roots, Delta3Inputs};
use crate::rng::{member_rng, Subsystem};
use crate::thouless::{arcsine_log_potential, log_potential};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng) -> Result<(bool, String)>;

const CHECKS: &[(&str, Check)] = &[
    ("dynamics.inverse", dyn_inverse),
    ("dynamics.area", dyn_area),
    ("dynamics.orbit_residual", dyn_orbit),
    ("dynamics.skewshift_inverse", dyn_skew),
    ("operator.det_bound", op_det_bound),
    ("operator.sturm_total", op_sturm),
    ("lyapunov.constant_oracle", lyap_constant),
    ("lyapunov.upper_bound", lyap_upper),
    ("dos.mass", dos_mass),
    ("dos.stieltjes_atom", dos_atom),
    ("thouless.constant", thouless_constant),
    ("bounds.prop31_clamp", bounds_prop31),
    ("bounds.bounded_density", bounds_lemma),
    ("quad.scaled_integral", quad_scaled),
    ("resonance.delta3", res_delta3),
    ("resonance.hbar_residual", res_hbar),
    ("resonance.classify", res_classify),
];

/// Runs every check with streams derived from `seed`; errors count as failures.
pub fn run_invariants(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut rng = member_rng(seed, Subsystem::Verify, i as u64);
            match f(&mut rng) {
                Ok((passed, detail)) => CheckOutcome { name, passed, detail },
                Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
            }
        })
        .collect()
}

fn angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-PI..PI)
}

fn dyn_inverse(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lambda = rng.random_range(0.0..50.0);
        let s = StdMapState::new(angle(rng), angle(rng))?;
        let back = std_map_step_inverse(std_map_step(s, lambda)?, lambda)?;
        worst = worst.max(back.x_prev.distance(s.x_prev)).max(back.x_curr.distance(s.x_curr));
    }
    Ok((worst < 1e-12, format!("max error {worst:.3e}")))
}

fn dyn_area(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let lambda = rng.random_range(0.0..50.0);
        let (a, b) = (angle(rng), angle(rng));
        let t = |x1: f64, x2: f64| -> Result<(f64, f64)> {
            let s = std_map_step(StdMapState::new(x1, x2)?, lambda)?;
            Ok((s.x_prev.value(), s.x_curr.value()))
        };
        let (p1, m1) = (t(a + h, b)?, t(a - h, b)?);
        let (p2, m2) = (t(a, b + h)?, t(a, b - h)?);
        let d = |p: f64, m: f64| wrap(p - m) / (2.0 * h);
        let det = d(p1.0, m1.0) * d(p2.1, m2.1) - d(p2.0, m2.0) * d(p1.1, m1.1);
        worst = worst.max((det - 1.0).abs());
    }
    Ok((worst < 1e-6, format!("max |det − 1| {worst:.3e}")))
}

fn dyn_orbit(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let init = StdMapState::new(angle(rng), angle(rng))?;
    let xs: Vec<_> = std_map_orbit(init, 30.0, 10_000)?.collect();
    let worst = xs.windows(3).map(|w| pendulum_residual(w[0], w[1], w[2], 30.0).abs()).fold(0.0, f64::max);
    Ok((worst < 1e-9, format!("max residual {worst:.3e}")))
}

fn dyn_skew(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let coords: Vec<f64> = (0..3).map(|_| angle(rng)).collect();
        let s = SkewShiftState::new(&coords)?;
        let alpha = rng.random_range(0.0..1.0);
        let back = skew_shift_step_inverse(&skew_shift_step(&s, alpha)?, alpha)?;
        for (x, y) in back.coords().iter().zip(s.coords()) {
            worst = worst.max(x.distance(*y));
        }
    }
    Ok((worst < 1e-12, format!("max error {worst:.3e}")))
}

fn op_det_bound(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut violations = 0;
    for k in 0..200u64 {
        let lambda = rng.random_range(0.5..50.0);
        let spec = OperatorSpec::iid(Distribution::uniform(-1.0, 1.0)?, lambda)?;
        let w = sample_potential(&spec, 0, 7, k)?;
        let z = ComplexEnergy::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..0.3))?;
        let m_bound = w.values().iter().map(|v| (v - z.z()).norm()).fold(0.0, f64::max) + 1.0 / lambda;
        for (m, d) in det_recursion(&w, z, 8)?.iter().enumerate() {
            if d.ln_abs() > m as f64 * m_bound.ln() + 1e-12 {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations")))
}

fn op_sturm(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = OperatorSpec::iid(Distribution::uniform(0.0, 1.0)?, 10.0)?;
    let w = sample_potential(&spec, 0, 499, rng.random())?;
    let counts: Vec<usize> = linspace(-0.5, 1.5, 41).iter().map(|&e| sturm_count(&w, e)).collect();
    let monotone = counts.windows(2).all(|c| c[0] <= c[1]);
    let ok = monotone && counts[0] == 0 && counts[40] == 500;
    Ok((ok, format!("counts {} .. {}", counts[0], counts[40])))
}

fn lyap_constant(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = OperatorSpec::constant(0.0, 10.0)?;
    let est = lyapunov_single(&spec, 0.5, 100_000, 0)?;
    let u: f64 = 5.0;
    let want = ((u + (u * u - 4.0).sqrt()) / 2.0).ln();
    let err = (est.gamma - want).abs();
    Ok((err < 5e-3, format!("γ = {:.6}, exact {want:.6}", est.gamma)))
}

fn lyap_upper(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = OperatorSpec::stdmap(20.0)?;
    let e = rng.random_range(-0.5..0.5);
    let est = lyapunov_single(&spec, e, 100_000, rng.random())?;
    let ub = gamma_upper_bound(&spec, e);
    Ok((est.gamma <= ub, format!("γ = {:.4} ≤ {ub:.4}", est.gamma)))
}

fn dos_mass(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let spec = OperatorSpec::iid(Distribution::uniform(0.0, 1.0)?, 10.0)?;
    let h = dos_histogram(&spec, 300, 4, &linspace(-0.5, 1.5, 101), rng.random())?;
    let total: f64 = h.mass().iter().sum();
    Ok(((total - 1.0).abs() < 1e-12, format!("mass {total:.15}")))
}

fn dos_atom(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let h = SpectralHistogram::atom(0.3)?;
    let z = ComplexEnergy::new(0.1, 0.05)?;
    let got = stieltjes(&h, z)?;
    let want = Complex64::new(1.0, 0.0) / (0.3 - z.z());
    let err = (got - want).norm();
    Ok((err < 1e-12, format!("error {err:.3e}")))
}

fn thouless_constant(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    // constant potential: ρ is arcsine on [v − 2/λ, v + 2/λ]
    let (v, lambda) = (0.2, 10.0);
    let t = 1.0 / lambda;
    let h = SpectralHistogram::arcsine(v, t, 4000)?;
    let mut worst = 0.0f64;
    for e in linspace(-0.45, 0.85, 14) {
        let got = log_potential(&h, e);
        worst = worst.max((got - arcsine_log_potential(v, t, e)).abs());
    }
    Ok((worst < 1e-2, format!("max deviation {worst:.3e}")))
}

fn bounds_prop31(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut bad = 0;
    for _ in 0..500 {
        let delta = rng.random_range(1e-6..1e-2);
        let p = Prop31Inputs {
            ln_lambda: rng.random_range(1.0..20.0),
            t: rng.random_range(0.0..10.0),
            xi: rng.random_range(2.0 * delta..1.0),
            delta,
            g: rng.random_range(delta..1.0),
        };
        let r = prop31_bound(p)?;
        if r.clamped_bound > 2.0 * delta * (1.0 + 1e-12) || r.vacuous != (r.log_raw_bound >= (2.0 * delta).ln()) {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} inconsistent reports")))
}

fn bounds_lemma(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut bad = 0;
    for a in [0.5, 1.0, 4.0] {
        let dist = Distribution::uniform(0.0, 1.0 / a)?;
        for delta in [1e-3, 1e-2, 1e-1] {
            let (lhs, rhs) = lemma_bdddens_check(a, delta, 0.4 / a, &dist)?;
            if lhs > rhs {
                bad += 1;
            }
        }
    }
    Ok((bad == 0, format!("{bad} violations on the 3×3 grid")))
}

fn quad_scaled(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let vals: Vec<f64> = (0..=6)
        .map(|k| quadr_bound_check(Complex64::new(10f64.powf(-0.5 * k as f64), 0.0), 0.75))
        .collect::<Result<_>>()?;
    let max = vals.iter().cloned().fold(0.0, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((max / min < 10.0, format!("max/min {:.3}", max / min)))
}

fn res_delta3(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    use crate::operator::PotentialWindow;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lambda = rng.random_range(1.0..100.0);
        let z = ComplexEnergy::new(rng.random_range(-1.5..1.5), rng.random_range(0.0..0.2))?;
        let inp = Delta3Inputs::new(reduce_angle(angle(rng))?, reduce_angle(angle(rng))?, z, lambda)?;
        let vals = vec![-inp.x_minus1().cos(), -inp.x0.value().cos(), -inp.x1.value().cos()];
        let w = PotentialWindow::new(-1, vals, lambda)?;
        let rec = det_recursion(&w, z, 3)?[3].to_complex();
        let (cm, c0, c1) = inp.coefficients();
        let scale = (cm * c0 * c1).norm() + 2.0 * (cm.norm() + c1.norm()) / (lambda * lambda);
        worst = worst.max((delta3(&inp) - rec).norm() / scale);
    }
    Ok((worst < 1e-12, format!("max scaled error {worst:.3e}")))
}

fn res_hbar(rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let lambda = rng.random_range(5.0..200.0);
        let b = reduce_angle(angle(rng))?;
        for r in hbar_roots(lambda, b)? {
            let x = r.value();
            worst = worst.max(wrap(lambda * x.cos() + 2.0 * x - b.value()).abs());
        }
    }
    Ok((worst < 1e-10, format!("max residual {worst:.3e}")))
}

fn res_classify(_: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let off = default_offsets();
    let a = classify_lambda(20.0 * PI, 0.1, &off)?.resonant;
    let b = classify_lambda(21.0 * PI, 0.1, &off)?.resonant;
    let c = classify_lambda(20.0 * PI + 1.0, 0.1, &off)?.resonant;
    Ok((a && b && !c, format!("20π {a}, 21π {b}, 20π+1 {c}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_invariants_hold() {
        let out = run_invariants(2024);
        assert_eq!(out.len(), CHECKS.len());
        for c in &out {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn outcomes_are_reproducible() {
        assert_eq!(run_invariants(5), run_invariants(5));
    }
}
