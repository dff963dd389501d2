//! Three-site determinant and resonance integrals for the standard-map
//! potential `V(n) = −cos x_n`.
//!
//! Conventions: `θ(x₀) = 2x₀ + λ sin x₀` reduced to `[−π, π)` and
//! `h(x) = λ cos x + 2x` on `[−π/2, π/2]`.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{reduce_angle, wrap, Angle};
use crate::error::{domain, Result};
use crate::operator::ComplexEnergy;
use crate::quad::{integrate_adaptive, QuadOptions, QuadResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta3Inputs {
    pub x0: Angle,
    pub x1: Angle,
    pub z: ComplexEnergy,
    pub lambda: f64,
}

impl Delta3Inputs {
    pub fn new(x0: Angle, x1: Angle, z: ComplexEnergy, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return domain(format!("lambda must be positive, got {lambda}"));
        }
        Ok(Self { x0, x1, z, lambda })
    }

    /// Angle of the site before `x0` on the standard-map orbit.
    pub fn x_minus1(&self) -> f64 {
        let x0 = self.x0.value();
        2.0 * x0 + self.lambda * x0.sin() - self.x1.value()
    }

    /// `(c₋₁, c₀, c₁)`.
    pub fn coefficients(&self) -> (Complex64, Complex64, Complex64) {
        let z = self.z.z();
        (self.x_minus1().cos() + z, self.x0.value().cos() + z, self.x1.value().cos() + z)
    }
}

/// `Δ₃ = −[c₋₁(c₀c₁ − λ⁻²) − λ⁻²c₁]`.
pub fn delta3(inp: &Delta3Inputs) -> Complex64 {
    let (cm, c0, c1) = inp.coefficients();
    let t2 = inp.lambda.powi(-2);
    -(cm * (c0 * c1 - t2) - t2 * c1)
}

/// The `λ → ∞` factorization `−c₋₁c₀c₁`.
pub fn delta3_leading(inp: &Delta3Inputs) -> Complex64 {
    let (cm, c0, c1) = inp.coefficients();
    -(cm * c0 * c1)
}

pub fn theta(x0: Angle, lambda: f64) -> Angle {
    let x = x0.value();
    Angle::new(2.0 * x + lambda * x.sin()).unwrap_or(Angle::ZERO)
}

fn check_alpha(alpha: f64, lo: f64) -> Result<()> {
    if !(alpha > lo && alpha < 1.0) {
        return domain(format!("moment exponent {alpha} outside ({lo}, 1)"));
    }
    Ok(())
}

fn check_opts(opts: &QuadOptions) -> Result<()> {
    if !(opts.tol > 0.0) || opts.max_subdiv == 0 {
        return domain("quadrature options need tol > 0 and a positive budget");
    }
    Ok(())
}

// ---------------------------------------------------------------- quartic

fn horner(c: &[Complex64; 5], z: Complex64) -> (Complex64, Complex64) {
    let mut p = c[4];
    let mut dp = Complex64::new(0.0, 0.0);
    for k in (0..4).rev() {
        dp = dp * z + p;
        p = p * z + c[k];
    }
    (p, dp)
}

/// Roots of `Σ c[k] ζ^k` by Aberth–Ehrlich iteration; `c[4] ≠ 0`.
fn quartic_roots(c: &[Complex64; 5]) -> [Complex64; 4] {
    let r = (c[0] / c[4]).norm().powf(0.25).max(1e-3);
    let mut z: [Complex64; 4] = std::array::from_fn(|k| Complex64::from_polar(r, 0.4 + TAU * k as f64 / 4.0));
    for _ in 0..500 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            let (p, dp) = horner(c, z[i]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let s: Complex64 = (0..4).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let w = ratio / (1.0 - ratio * s);
            if w.is_finite() {
                z[i] -= w;
                worst = worst.max(w.norm() / z[i].norm().max(1e-300));
            }
        }
        if worst < 1e-15 {
            break;
        }
    }
    z
}

// ---------------------------------------------------------------- J

/// `g(x) = (cos x + w)(cos(x − θ) + w) − ε((cos x + w) + (cos(x − θ) + w))`.
fn g_value(x: f64, w: Complex64, theta: f64, eps: Complex64) -> Complex64 {
    let a = x.cos() + w;
    let b = (x - theta).cos() + w;
    a * b - eps * (a + b)
}

fn g_slope(x: f64, w: f64, theta: f64, eps: f64) -> f64 {
    let (a, b) = (x.cos() + w, (x - theta).cos() + w);
    let (da, db) = (-x.sin(), -(x - theta).sin());
    da * b + a * db - eps * (da + db)
}

/// Zeros of `g` as `e^{ix}` roots of a quartic; returns split abscissae in
/// `[−π, π)` and whether a double real zero was found.
fn g_zeros(w: Complex64, theta: f64, eps: Complex64) -> (Vec<f64>, bool) {
    let e_m = Complex64::from_polar(1.0, -theta);
    let e_p = e_m.conj();
    let one = Complex64::new(1.0, 0.0);
    let c = [
        0.25 * e_p,
        0.5 * (w - eps) * (one + e_p),
        0.5 * theta.cos() + w * w - 2.0 * eps * w,
        0.5 * (w - eps) * (one + e_m),
        0.25 * e_m,
    ];
    let roots = quartic_roots(&c);
    let real = w.im == 0.0 && eps.im == 0.0;
    let on_circle: Vec<f64> = roots.iter().filter(|r| (r.norm() - 1.0).abs() < 1e-6).map(|r| wrap(r.arg())).collect();
    let mut double = false;
    for i in 0..on_circle.len() {
        for j in i + 1..on_circle.len() {
            if wrap(on_circle[i] - on_circle[j]).abs() < 1e-6 {
                double = true;
            }
        }
    }
    let mut splits = Vec::with_capacity(4);
    for r in &roots {
        let x = wrap(r.arg());
        if real && (r.norm() - 1.0).abs() < 1e-6 {
            let g = |t: f64| g_value(t, w, theta, eps).re;
            let dg = |t: f64| g_slope(t, w.re, theta, eps.re);
            let x = polish_sign_change(g, x).or_else(|| polish_sign_change(dg, x)).unwrap_or(x);
            splits.push(x);
        } else if (r.norm().ln()).abs() < 0.5 {
            splits.push(x);
        }
    }
    (splits, double)
}

/// Refines a simple real zero near `x` by bisection on a small bracket.
fn polish_sign_change(g: impl Fn(f64) -> f64, x: f64) -> Option<f64> {
    let mut h = 1e-9;
    while h < 1e-4 {
        let (mut lo, mut hi) = (x - h, x + h);
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            return Some(wrap(lo));
        }
        if glo * ghi < 0.0 {
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if g(mid) * glo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(wrap(0.5 * (lo + hi)));
        }
        h *= 10.0;
    }
    None
}

fn j_core(w: Complex64, theta: f64, alpha: f64, eps: Complex64, opts: &QuadOptions) -> Result<QuadResult> {
    let (splits, double) = g_zeros(w, theta, eps);
    let f = |x: f64| g_value(x, w, theta, eps).norm().powf(-alpha);
    let mut res = integrate_adaptive(f, -PI, PI, &splits, opts.tol, opts.max_subdiv)?;
    if double && alpha >= 0.5 {
        res.divergent = true;
        res.converged = false;
    }
    Ok(res)
}

/// `J(E, θ, α, ε) = ∫_{−π}^{π} |g(x)|^{−α} dx`.
pub fn j_integral(e: f64, theta: Angle, alpha: f64, eps: f64, opts: &QuadOptions) -> Result<QuadResult> {
    check_alpha(alpha, 0.0)?;
    check_opts(opts)?;
    if !(e.is_finite() && eps.is_finite()) {
        return domain("J needs finite E and ε");
    }
    j_core(Complex64::new(e, 0.0), theta.value(), alpha, Complex64::new(eps, 0.0), opts)
}

// ---------------------------------------------------------------- roots of θ and h

/// All `x ∈ [a, b]` with `f(x) = base + period·k`, `f` monotone on `[a, b]`.
fn branch_roots(f: &impl Fn(f64) -> f64, a: f64, b: f64, base: f64, period: f64, out: &mut Vec<f64>) {
    let (fa, fb) = (f(a), f(b));
    let (lo, hi) = (fa.min(fb), fa.max(fb));
    let k0 = ((lo - base) / period).ceil() as i64;
    let k1 = ((hi - base) / period).floor() as i64;
    let inc = fb >= fa;
    for k in k0..=k1 {
        let level = base + period * k as f64;
        let (mut l, mut r) = (a, b);
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if (f(m) < level) == inc {
                l = m;
            } else {
                r = m;
            }
        }
        out.push(0.5 * (l + r));
    }
}

fn sort_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

fn theta_raw(x: f64, lambda: f64) -> f64 {
    2.0 * x + lambda * x.sin()
}

/// Points of `[−π, π]` where `θ(x) ≡ level (mod 2π)` for any of `levels`.
fn theta_level_points(lambda: f64, levels: &[f64]) -> Vec<f64> {
    let f = |x: f64| theta_raw(x, lambda);
    let mut cuts = vec![-PI];
    if lambda > 2.0 {
        let xc = (-2.0 / lambda).acos();
        cuts.extend([-xc, xc]);
    }
    cuts.push(PI);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        for &l in levels {
            branch_roots(&f, w[0], w[1], l, TAU, &mut out);
        }
    }
    sort_dedup(out)
}

/// Roots of `h(x) = λ cos x + 2x ≡ b (mod 2π)` on `[−π/2, π/2]`.
pub fn hbar_roots(lambda: f64, b: Angle) -> Result<Vec<Angle>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let h = |x: f64| lambda * x.cos() + 2.0 * x;
    let mut cuts = vec![-FRAC_PI_2];
    if lambda > 2.0 {
        cuts.push((2.0 / lambda).asin());
    }
    cuts.push(FRAC_PI_2);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        branch_roots(&h, w[0], w[1], b.value(), TAU, &mut out);
    }
    sort_dedup(out).into_iter().map(reduce_angle).collect()
}

/// For a root `x` of `h ≡ b`, the level `L = 2πℓ + b` it hits and the
/// remainder `ε` in `x = 2/λ ± √(4/λ² + 2(λ − L)/λ + ε)`.
pub fn zero_asymptotic_remainder(lambda: f64, b: Angle, x: f64) -> (f64, f64) {
    let h = lambda * x.cos() + 2.0 * x;
    let level = b.value() + TAU * ((h - b.value()) / TAU).round();
    // (x − 2/λ)² − 4/λ² − 2(λ − L)/λ, written to avoid cancellation
    let eps = x * x - 2.0 * (1.0 - x.cos()) + 2.0 * (level - h) / lambda;
    (level, eps)
}

// ---------------------------------------------------------------- K

/// `K(λ, b, E, α) = ∫_{−π}^{π} |cos x₀ + E|^{−α} dist(θ(x₀), b)^{−(2α−1)} dx₀`.
pub fn k_integral(lambda: f64, b: Angle, e: f64, alpha: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    if !(e.abs() < 1.0) {
        return domain(format!("K needs |E| < 1, got {e}"));
    }
    check_alpha(alpha, 0.5)?;
    check_opts(opts)?;
    let xs = (-e).acos();
    let mut splits = theta_level_points(lambda, &[b.value(), b.value() + PI]);
    splits.extend([-xs, xs]);
    let beta = 2.0 * alpha - 1.0;
    let f = |x: f64| {
        let d = wrap(theta_raw(x, lambda) - b.value()).abs();
        (x.cos() + e).abs().powf(-alpha) * d.powf(-beta)
    };
    integrate_adaptive(f, -PI, PI, &sort_dedup(splits), opts.tol, opts.max_subdiv)
}

// ---------------------------------------------------------------- I

/// Measure of `{x₀ : |cos x₀ + z| < aλ⁻²}`.
pub fn excluded_measure(lambda: f64, z: ComplexEnergy, a_cut: f64) -> f64 {
    let (lo, hi) = excluded_band(lambda, z, a_cut);
    match (lo, hi) {
        (None, _) => 0.0,
        (Some((p, q)), _) => 2.0 * (q - p),
    }
    .max(hi)
}

/// `|x₀| ∈ (p, q)` is excluded; the second value is 2π when everything is.
fn excluded_band(lambda: f64, z: ComplexEnergy, a_cut: f64) -> (Option<(f64, f64)>, f64) {
    let r = a_cut / (lambda * lambda);
    let eta2 = r * r - z.delta * z.delta;
    if eta2 <= 0.0 {
        return (None, 0.0);
    }
    let eta = eta2.sqrt();
    let e = z.e;
    // cos x₀ ∈ (−E − η, −E + η)
    let hi_cos = (-e + eta).min(1.0);
    let lo_cos = (-e - eta).max(-1.0);
    if hi_cos <= lo_cos {
        return (None, 0.0);
    }
    if hi_cos >= 1.0 && lo_cos <= -1.0 {
        return (None, TAU);
    }
    (Some((hi_cos.acos(), lo_cos.acos())), 0.0)
}

/// `I = ∫_{A_a} |Δ₃|^{−α} dx₀ dx₁` written as an outer integral over `x₀` of
/// `|c₀|^{−α} J(z, θ(x₀), α, 1/(λ²c₀))`, using `Δ₃ = −c₀ g(x₁)`.
pub fn i_integral(lambda: f64, z: ComplexEnergy, a_cut: f64, alpha: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    if !(a_cut > 0.0 && a_cut.is_finite()) {
        return domain(format!("a_cut must be positive, got {a_cut}"));
    }
    check_alpha(alpha, 0.0)?;
    check_opts(opts)?;
    let (band, all) = excluded_band(lambda, z, a_cut);
    if all > 0.0 {
        return Ok(QuadResult { value: 0.0, err_est: 0.0, converged: true, divergent: false, subdivisions: 0 });
    }
    let zc = z.z();
    let inner_opts = QuadOptions { tol: opts.tol * 0.1, max_subdiv: opts.max_subdiv };
    let inner_ok = Cell::new(true);
    let inner_div = Cell::new(false);
    let f = |x0: f64| {
        let c0 = x0.cos() + zc;
        let eps = (lambda * lambda * c0).inv();
        match j_core(zc, theta_raw(x0, lambda), alpha, eps, &inner_opts) {
            Ok(r) => {
                if !r.converged {
                    inner_ok.set(false);
                }
                if r.divergent {
                    inner_div.set(true);
                }
                c0.norm().powf(-alpha) * r.value
            }
            Err(_) => {
                inner_ok.set(false);
                f64::NAN
            }
        }
    };
    // the inner integral peaks where g acquires a double zero at ε = 0
    let mut levels = vec![0.0];
    if z.e.abs() < 1.0 {
        let xs = (-z.e).acos();
        levels.extend([2.0 * xs, -2.0 * xs]);
    }
    let peaks = theta_level_points(lambda, &levels);
    let pieces: Vec<(f64, f64)> = match band {
        None => vec![(-PI, PI)],
        Some((p, q)) => vec![(-PI, -q), (-p, p), (q, PI)],
    };
    let mut total = QuadResult { value: 0.0, err_est: 0.0, converged: true, divergent: false, subdivisions: 0 };
    for (a, b) in pieces {
        if b - a <= 0.0 {
            continue;
        }
        let mut splits: Vec<f64> = peaks.iter().copied().filter(|&x| x > a && x < b).collect();
        if band.is_none() && z.e.abs() < 1.0 {
            let xs = (-z.e).acos();
            splits.extend([-xs, xs]);
        }
        let r = integrate_adaptive(f, a, b, &splits, opts.tol, opts.max_subdiv)?;
        total.value += r.value;
        total.err_est += r.err_est;
        total.converged &= r.converged;
        total.divergent |= r.divergent;
        total.subdivisions += r.subdivisions;
    }
    total.converged &= inner_ok.get() && !inner_div.get() && total.value.is_finite();
    total.divergent |= inner_div.get();
    Ok(total)
}

// ---------------------------------------------------------------- classification

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaClass {
    pub lambda: f64,
    pub lambda_bar: Angle,
    pub delta_exp: f64,
    /// Smallest `|reduce(λ − o)|` over the offsets.
    pub distance: f64,
    pub resonant: bool,
}

pub const DEFAULT_DELTA_EXP: f64 = 0.1;

pub fn default_offsets() -> Vec<Angle> {
    vec![Angle::ZERO, Angle::new(PI).expect("finite")]
}

pub fn classify_lambda(lambda: f64, delta_exp: f64, offsets: &[Angle]) -> Result<LambdaClass> {
    if !(lambda >= TAU && lambda.is_finite()) {
        return domain(format!("classification needs lambda >= 2π, got {lambda}"));
    }
    if !(delta_exp > 0.0 && delta_exp.is_finite()) {
        return domain(format!("delta_exp must be positive, got {delta_exp}"));
    }
    if offsets.is_empty() {
        return domain("at least one offset is required");
    }
    let lambda_bar = reduce_angle(lambda)?;
    let distance = offsets.iter().map(|o| wrap(lambda - o.value()).abs()).fold(f64::INFINITY, f64::min);
    Ok(LambdaClass { lambda, lambda_bar, delta_exp, distance, resonant: distance < lambda.powf(-delta_exp) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{det_recursion, PotentialWindow};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ang(x: f64) -> Angle {
        Angle::new(x).unwrap()
    }

    fn recursion_delta3(inp: &Delta3Inputs) -> Complex64 {
        let vals = vec![-inp.x_minus1().cos(), -inp.x0.value().cos(), -inp.x1.value().cos()];
        let w = PotentialWindow::new(-1, vals, inp.lambda).unwrap();
        det_recursion(&w, inp.z, 3).unwrap()[3].to_complex()
    }

    #[test]
    fn delta3_example() {
        let inp = Delta3Inputs::new(ang(FRAC_PI_2), ang(0.0), ComplexEnergy::real(0.0), 10.0).unwrap();
        let d = delta3(&inp);
        assert!((d.re - 0.018391).abs() < 1e-6, "{d}");
        assert!(d.im.abs() < 1e-15);
        assert!((inp.x_minus1() - (PI + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn leading_term_is_triple_product() {
        let inp = Delta3Inputs::new(ang(0.3), ang(-1.1), ComplexEnergy::new(0.2, 0.1).unwrap(), 1e8).unwrap();
        let (d, l) = (delta3(&inp), delta3_leading(&inp));
        assert!((d - l).norm() < 1e-15);
    }

    #[test]
    fn delta3_matches_recursion_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10_000 {
            let x0 = rng.random_range(-PI..PI);
            let x1 = rng.random_range(-PI..PI);
            let e = rng.random_range(-2.0..2.0);
            let d = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
            let lambda = rng.random_range(1.0..200.0);
            let inp = Delta3Inputs::new(ang(x0), ang(x1), ComplexEnergy::new(e, d).unwrap(), lambda).unwrap();
            let a = delta3(&inp);
            let b = recursion_delta3(&inp);
            // both sides sum terms of size ≤ |c₋₁c₀c₁| + 2λ⁻²·max|c|
            let (cm, c0, c1) = inp.coefficients();
            let scale = (cm * c0 * c1).norm() + 2.0 * (cm.norm() + c1.norm()) / (lambda * lambda);
            assert!((a - b).norm() <= 1e-12 * scale.max(a.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn delta3_grows_with_imaginary_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let (x0, x1) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let e = rng.random_range(-1.5..1.5);
            let lambda = rng.random_range(2.0..50.0);
            let mut prev = 0.0;
            for k in 0..20 {
                let inp = Delta3Inputs::new(ang(x0), ang(x1), ComplexEnergy::new(e, 0.05 * k as f64).unwrap(), lambda)
                    .unwrap();
                let m = delta3(&inp).norm();
                assert!(m >= prev * (1.0 - 1e-12));
                prev = m;
            }
        }
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(ang(0.0), 10.0).value(), 0.0);
        let t = theta(ang(FRAC_PI_2), 10.0).value();
        assert!((t - (10.0 - 3.0 * PI)).abs() < 1e-12 && (t - 0.5752).abs() < 1e-4);
        assert!((theta(ang(-FRAC_PI_2), 10.0).value() + t).abs() < 1e-12);
    }

    #[test]
    fn quartic_solver_recovers_roots() {
        let want =
            [Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.3), Complex64::new(0.0, -2.0), Complex64::new(0.7, 0.7)];
        let mut c = [Complex64::new(0.0, 0.0); 5];
        c[0] = Complex64::new(1.0, 0.0);
        // expand ∏(ζ − r)
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for r in want {
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (k, &p) in poly.iter().enumerate() {
                next[k + 1] += p;
                next[k] -= p * r;
            }
            poly = next;
        }
        c.copy_from_slice(&poly);
        let got = quartic_roots(&c);
        for r in want {
            assert!(got.iter().any(|g| (g - r).norm() < 1e-12));
        }
    }

    #[test]
    fn j_separated_zeros_is_finite() {
        let r = j_integral(0.0, ang(FRAC_PI_2), 0.6, 0.0, &QuadOptions::default()).unwrap();
        assert!(r.converged && !r.divergent, "{r:?}");
        assert!(r.value.is_finite() && r.value > TAU);
        let (zeros, double) = g_zeros(Complex64::new(0.0, 0.0), FRAC_PI_2, Complex64::new(0.0, 0.0));
        assert!(!double);
        let zs = sort_dedup(zeros);
        for want in [-FRAC_PI_2, 0.0, FRAC_PI_2] {
            assert!(zs.iter().any(|z| (z - want).abs() < 1e-12), "{zs:?}");
        }
        assert!(zs.iter().any(|z| (z.abs() - PI).abs() < 1e-12));
    }

    #[test]
    fn j_double_zero_flags_divergence() {
        let r = j_integral(0.0, ang(0.0), 0.6, 0.0, &QuadOptions::default()).unwrap();
        assert!(r.divergent && !r.converged);
        // below ½ the double zero is integrable
        let r = j_integral(0.0, ang(0.0), 0.4, 0.0, &QuadOptions::default()).unwrap();
        assert!(r.converged && !r.divergent);
        // ∫|cos x|^{−0.8} = 2√π Γ(0.1)/Γ(0.6)
        let exact = 2.0 * PI.sqrt() * 9.513_507_698_668_732 / 1.489_192_248_812_817;
        assert!((r.value - exact).abs() < 1e-7 * exact, "{} vs {exact}", r.value);
    }

    #[test]
    fn j_is_even_in_theta() {
        for (e, th, eps) in [(0.0, 1.0, 0.0), (0.3, 2.2, 0.01), (-0.4, 0.7, -0.02)] {
            let a = j_integral(e, ang(th), 0.6, eps, &QuadOptions::default()).unwrap();
            let b = j_integral(e, ang(-th), 0.6, eps, &QuadOptions::default()).unwrap();
            assert!(a.converged && b.converged);
            assert!((a.value - b.value).abs() < 1e-7 * a.value);
        }
    }

    #[test]
    fn j_bounded_by_distance_power() {
        // J · dist^{2α−1}(θ, {0, ±2x*}) stays bounded as θ → 0
        let alpha = 0.7;
        let mut ratios = Vec::new();
        for k in 1..8 {
            let th = 0.5f64.powi(k);
            let r = j_integral(0.0, ang(th), alpha, 0.0, &QuadOptions::default()).unwrap();
            assert!(r.converged);
            let d = th.min((th - PI).abs());
            ratios.push(r.value * d.powf(2.0 * alpha - 1.0));
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "{ratios:?}");
    }

    #[test]
    fn j_converged_results_stable_under_tolerance_halving() {
        let o1 = QuadOptions { tol: 1e-8, max_subdiv: 20_000 };
        let o2 = QuadOptions { tol: 5e-9, ..o1 };
        let a = j_integral(0.2, ang(1.3), 0.8, 0.003, &o1).unwrap();
        let b = j_integral(0.2, ang(1.3), 0.8, 0.003, &o2).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.value - b.value).abs() <= 2.0 * a.err_est.max(a.effective_tol(o1.tol)));
    }

    #[test]
    fn k_literal_resonance() {
        let o = QuadOptions::default();
        let b0 = ang(0.0);
        // λ = 21π puts θ(±π/2) on b = 0 at the zero of cos x₀
        let r = k_integral(21.0 * PI, b0, 0.0, 0.9, &o).unwrap();
        assert!(r.divergent || !r.converged, "{r:?}");
        let r = k_integral(20.0 * PI, b0, 0.0, 0.9, &o).unwrap();
        assert!(r.converged && !r.divergent, "{r:?}");
        let r = k_integral(20.0 * PI, b0, 0.0, 0.6, &o).unwrap();
        assert!(r.converged && r.value.is_finite());
    }

    #[test]
    fn k_finite_below_two_thirds_on_grid() {
        let o = QuadOptions { tol: 1e-6, max_subdiv: 20_000 };
        for k in 0..9 {
            let lambda = 20.0 * PI + k as f64 * PI / 4.0;
            for b in [0.0, PI] {
                let r = k_integral(lambda, ang(b), 0.0, 0.6, &o).unwrap();
                assert!(r.converged && !r.divergent, "λ={lambda} b={b} {r:?}");
            }
        }
    }

    #[test]
    fn k_rejects_bad_arguments() {
        let o = QuadOptions::default();
        assert!(k_integral(30.0, Angle::ZERO, 1.0, 0.7, &o).is_err());
        assert!(k_integral(30.0, Angle::ZERO, 0.0, 0.5, &o).is_err());
        assert!(k_integral(-1.0, Angle::ZERO, 0.0, 0.7, &o).is_err());
    }

    #[test]
    fn hbar_roots_lambda_ten() {
        let roots = hbar_roots(10.0, Angle::ZERO).unwrap();
        assert_eq!(roots.len(), 3, "{roots:?}");
        for r in &roots {
            let x = r.value();
            assert!(wrap(10.0 * x.cos() + 2.0 * x).abs() < 1e-10);
        }
    }

    #[test]
    fn hbar_root_counts_and_asymptotics() {
        for k in 0..40 {
            let lambda = 3.0 + 7.3 * k as f64;
            for b in [0.0, 1.0, -2.5, PI] {
                let b = ang(b);
                let roots = hbar_roots(lambda, b).unwrap();
                // intermediate value theorem on each monotone branch
                let xm = (2.0 / lambda).asin();
                let hmax = lambda * xm.cos() + 2.0 * xm;
                let count = |lo: f64, hi: f64| {
                    let n = ((hi - lo) / TAU).floor() as usize;
                    n..=n + 1
                };
                let (inc, dec) = (count(-PI, hmax), count(PI, hmax));
                let len = roots.len();
                assert!(len >= inc.start() + dec.start() && len <= inc.end() + dec.end(), "λ={lambda} len={len}");
                for r in &roots {
                    let x = r.value();
                    assert!(wrap(lambda * x.cos() + 2.0 * x - b.value()).abs() < 1e-10);
                    if lambda >= 50.0 && x.abs() < 0.5 {
                        let (_, eps) = zero_asymptotic_remainder(lambda, b, x);
                        if x.abs() > 1e-3 {
                            assert!(eps.abs() <= 10.0 * x.powi(4), "λ={lambda} x={x} ε={eps}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn classify_examples() {
        let off = default_offsets();
        assert!(classify_lambda(20.0 * PI, 0.1, &off).unwrap().resonant);
        assert!(classify_lambda(21.0 * PI, 0.1, &off).unwrap().resonant);
        let c = classify_lambda(20.0 * PI + 1.0, 0.1, &off).unwrap();
        assert!(!c.resonant && (c.distance - 1.0).abs() < 1e-9);
        assert!(classify_lambda(1.0, 0.1, &off).is_err());
        assert!(!classify_lambda(30.0, 0.1, &off).unwrap().resonant);
        assert!(classify_lambda(50.0, 0.1, &off).unwrap().resonant);
    }

    #[test]
    fn i_integral_finite_and_monotone_in_cut() {
        let o = QuadOptions { tol: 1e-5, max_subdiv: 4000 };
        let z = ComplexEnergy::real(0.0);
        let lambda = 21.0 * PI;
        let i10 = i_integral(lambda, z, 10.0, 0.5, &o).unwrap();
        assert!(i10.converged && i10.value.is_finite(), "{i10:?}");
        let i20 = i_integral(lambda, z, 20.0, 0.5, &o).unwrap();
        assert!(i20.converged);
        assert!(i20.value <= i10.value + i10.err_est + i20.err_est);
    }

    #[test]
    fn excluded_measure_is_linear_in_cut() {
        let z = ComplexEnergy::real(0.2);
        for lambda in [20.0, 50.0, 100.0] {
            for a in [1.0, 5.0, 10.0] {
                let m = excluded_measure(lambda, z, a);
                let r = a / (lambda * lambda);
                assert!(m > 0.0 && m <= 5.0 * r, "λ={lambda} a={a} m={m}");
            }
        }
        assert_eq!(excluded_measure(10.0, ComplexEnergy::new(0.0, 1.0).unwrap(), 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn theta_is_odd(x in -3.0f64..3.0, lambda in 1.0f64..300.0) {
            let a = theta(ang(x), lambda).value();
            let b = theta(ang(-x), lambda).value();
            prop_assert!(wrap(a + b).abs() < 1e-9);
        }

        #[test]
        fn classification_matches_definition(lambda in 6.3f64..1000.0, d in 0.01f64..1.0) {
            let c = classify_lambda(lambda, d, &default_offsets()).unwrap();
            let dist = wrap(lambda).abs().min(wrap(lambda - PI).abs());
            prop_assert_eq!(c.resonant, dist < lambda.powf(-d));
        }
    }
}
