//! Density of states by eigenvalue counting, its Stieltjes transform, and
//! fractional-moment bounds on spectral windows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lyapunov::mean_stderr;
use crate::operator::{green_entry, sample_potential, sturm_count, sturm_counts, ComplexEnergy, OperatorSpec};
use crate::rng::{derive_seed, Subsystem};

/// Binned probability measure. Zero-width bins are atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralHistogram {
    edges: Vec<f64>,
    mass: Vec<f64>,
    /// Some eigenvalues fell outside the edges and were dropped before
    /// normalizing.
    pub coverage_warning: bool,
}

impl SpectralHistogram {
    /// Normalizes non-negative `weights` over the bins delimited by `edges`.
    pub fn from_weights(edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.len() != weights.len() + 1 {
            return domain("need one more edge than bins and at least one bin");
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] < w[0]) {
            return domain("edges must be finite and non-decreasing");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return domain("bin weights must be finite and non-negative");
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return domain("histogram has no mass");
        }
        let mass = weights.iter().map(|w| w / total).collect();
        Ok(Self { edges, mass, coverage_warning: false })
    }

    /// Unit point mass at `x`.
    pub fn atom(x: f64) -> Result<Self> {
        Self::from_weights(vec![x, x], vec![1.0])
    }

    /// Uniform measure on `[a, b]` split into `bins` bins.
    pub fn uniform(a: f64, b: f64, bins: usize) -> Result<Self> {
        if !(a < b) || bins == 0 {
            return domain("uniform histogram needs a < b and at least one bin");
        }
        Self::from_weights(linspace(a, b, bins + 1), vec![1.0; bins])
    }

    /// Arcsine law of the free operator with hopping `t`: density
    /// `1/(π√(4t² − (E−c)²))` on `[c − 2t, c + 2t]`, exact mass per bin.
    pub fn arcsine(center: f64, t: f64, bins: usize) -> Result<Self> {
        if !(t > 0.0) || bins == 0 {
            return domain("arcsine histogram needs t > 0 and at least one bin");
        }
        let edges = linspace(center - 2.0 * t, center + 2.0 * t, bins + 1);
        let cdf = |e: f64| ((e - center) / (2.0 * t)).clamp(-1.0, 1.0).asin();
        let weights = edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
        Self::from_weights(edges, weights)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.edges.windows(2).zip(&self.mass).map(|(w, &m)| (w[0], w[1], m))
    }

    /// Mass of `(−∞, e]`, linear within bins.
    pub fn ids(&self, e: f64) -> f64 {
        self.bins()
            .map(|(a, b, m)| {
                if e >= b {
                    m
                } else if e <= a {
                    0.0
                } else {
                    m * (e - a) / (b - a)
                }
            })
            .sum()
    }

    /// Mass of `[lo, hi]`, linear within bins; atoms count when inside.
    pub fn window_mass(&self, lo: f64, hi: f64) -> f64 {
        self.bins()
            .map(|(a, b, m)| {
                if a == b {
                    if a >= lo && a <= hi {
                        m
                    } else {
                        0.0
                    }
                } else {
                    let ov = hi.min(b) - lo.max(a);
                    if ov > 0.0 {
                        m * ov / (b - a)
                    } else {
                        0.0
                    }
                }
            })
            .sum()
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

/// Ensemble-averaged eigenvalue-count histogram over windows of length `n`.
///
/// Counts are summed as integers, so the result is independent of the order
/// in which members finish.
pub fn dos_histogram(spec: &OperatorSpec, n: usize, b: u64, edges: &[f64], seed: u64) -> Result<SpectralHistogram> {
    spec.validate()?;
    if n < 2 || b == 0 {
        return domain("need windows of length ≥ 2 and at least one member");
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
        return domain("edges must be finite and strictly increasing");
    }
    let members = if spec.is_deterministic() { 1 } else { b };
    let per_member: Vec<Vec<usize>> = (0..members)
        .into_par_iter()
        .map(|i| {
            let w = sample_potential(spec, 0, n as i64 - 1, derive_seed(seed, Subsystem::Dos, i))?;
            Ok(sturm_counts(&w, edges))
        })
        .collect::<Result<_>>()?;
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    let mut outside = false;
    for c in &per_member {
        for k in 0..bins {
            counts[k] += (c[k + 1] - c[k]) as u64;
        }
        outside |= c[0] > 0 || c[bins] < n;
    }
    let weights = counts.iter().map(|&c| c as f64).collect();
    let mut h = SpectralHistogram::from_weights(edges.to_vec(), weights)?;
    let (lo, hi) = spec.potential_range();
    let t = 1.0 / spec.lambda;
    h.coverage_warning = outside || edges[0] > lo - 2.0 * t || edges[bins] < hi + 2.0 * t;
    Ok(h)
}

/// `ln(1 + u)` for small complex `u`.
fn ln_1p(u: Complex64) -> Complex64 {
    if u.norm() < 1e-4 {
        let u2 = u * u;
        u - u2 / 2.0 + u2 * u / 3.0 - u2 * u2 / 4.0
    } else {
        (1.0 + u).ln()
    }
}

/// `∫ dρ(E′)/(E′ − z)` with the exact antiderivative on each bin.
pub fn stieltjes(h: &SpectralHistogram, z: ComplexEnergy) -> Result<Complex64> {
    if !(z.delta > 0.0) {
        return domain("Stieltjes transform needs δ > 0");
    }
    let zc = z.z();
    Ok(h.bins()
        .map(|(a, b, m)| {
            if m == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let da = a - zc;
            if a == b {
                return m / da;
            }
            let db = b - zc;
            let width = b - a;
            // both points lie in the lower half-plane, so the log difference
            // has no branch crossing
            let diff =
                if width < 1e-2 * da.norm() { ln_1p(Complex64::new(width, 0.0) / da) } else { db.ln() - da.ln() };
            m / width * diff
        })
        .sum())
}

/// Ensemble averages of the central Green function entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenAverage {
    pub mean_g: Complex64,
    pub mean_abs_alpha: f64,
    pub stderr_abs_alpha: f64,
    /// Mean of `(Im G)^α`, kept for diagnostics.
    pub mean_im_alpha: f64,
    pub samples: u64,
    /// Samples with `|G| > 1.01/δ`.
    pub clamp_violations: u64,
}

/// Averages `G(0,0)` over `b` windows `[−window_half, window_half]`.
pub fn green_avg(
    spec: &OperatorSpec,
    z: ComplexEnergy,
    window_half: usize,
    b: u64,
    seed: u64,
    moment_alpha: f64,
) -> Result<GreenAverage> {
    spec.validate()?;
    if !(z.delta > 0.0) {
        return domain("Green averages need δ > 0");
    }
    if !(moment_alpha > 0.0 && moment_alpha <= 1.0) {
        return domain("moment exponent must lie in (0, 1]");
    }
    if b == 0 {
        return domain("need at least one member");
    }
    let l = window_half as i64;
    let members = if spec.is_deterministic() { 1 } else { b };
    let gs: Vec<Complex64> = (0..members)
        .into_par_iter()
        .map(|i| {
            let w = sample_potential(spec, -l, l, derive_seed(seed, Subsystem::Green, i))?;
            green_entry(&w, z, window_half, window_half)
        })
        .collect::<Result<_>>()?;
    let mut gs = gs;
    if (gs.len() as u64) < b {
        gs.resize(b as usize, gs[0]);
    }
    let clamp = 1.01 / z.delta;
    let clamp_violations = gs.iter().filter(|g| g.norm() > clamp).count() as u64;
    let (re, _) = mean_stderr(&gs.iter().map(|g| g.re).collect::<Vec<_>>());
    let (im, _) = mean_stderr(&gs.iter().map(|g| g.im).collect::<Vec<_>>());
    let (abs_a, se) = mean_stderr(&gs.iter().map(|g| g.norm().powf(moment_alpha)).collect::<Vec<_>>());
    let (im_a, _) = mean_stderr(&gs.iter().map(|g| g.im.max(0.0).powf(moment_alpha)).collect::<Vec<_>>());
    Ok(GreenAverage {
        mean_g: Complex64::new(re, im),
        mean_abs_alpha: abs_a,
        stderr_abs_alpha: se,
        mean_im_alpha: im_a,
        samples: b,
        clamp_violations,
    })
}

/// Fractional-moment bound `(2δ)^α E|G(0,0)|^α` on the mass of `[e0 − δ, e0 + δ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    pub e0: f64,
    pub delta: f64,
    pub moment_alpha: f64,
    pub bound: f64,
    pub stderr: f64,
    pub samples: u64,
    pub clamp_violations: u64,
}

pub fn frac_moment_bound(
    spec: &OperatorSpec,
    e0: f64,
    delta: f64,
    moment_alpha: f64,
    window_half: usize,
    b: u64,
    seed: u64,
) -> Result<WindowBound> {
    let z = ComplexEnergy::new(e0, delta)?;
    let g = green_avg(spec, z, window_half, b, seed, moment_alpha)?;
    let scale = (2.0 * delta).powf(moment_alpha);
    Ok(WindowBound {
        e0,
        delta,
        moment_alpha,
        bound: scale * g.mean_abs_alpha,
        stderr: scale * g.stderr_abs_alpha,
        samples: b,
        clamp_violations: g.clamp_violations,
    })
}

/// Per-site eigenvalue mass of `[lo, hi)` averaged over `b` windows of
/// length `n`: `(mean, stderr)`.
pub fn window_mass_mc(spec: &OperatorSpec, lo: f64, hi: f64, n: usize, b: u64, seed: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    if !(lo < hi) || n == 0 || b == 0 {
        return domain("window mass needs lo < hi, n ≥ 1 and b ≥ 1");
    }
    let xs: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let w = sample_potential(spec, 0, n as i64 - 1, derive_seed(seed, Subsystem::Dos, i))?;
            Ok((sturm_count(&w, hi) - sturm_count(&w, lo)) as f64 / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&xs))
}

/// `g(δ; e0) = max(δ, sup_{|E − e0| ≤ δ} ρ[E − δ, E + δ])` at histogram
/// resolution: window centres run over `e0 ± δ` and every bin edge inside.
pub fn empirical_g(h: &SpectralHistogram, e0: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return domain("δ must be positive");
    }
    let (lo, hi) = (e0 - delta, e0 + delta);
    let sup = h
        .edges()
        .iter()
        .flat_map(|&x| [x - delta, x + delta])
        .filter(|c| *c >= lo && *c <= hi)
        .chain([lo, e0, hi])
        .map(|c| h.window_mass(c - delta, c + delta))
        .fold(0.0, f64::max);
    Ok(sup.max(delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Distribution;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_spectrum_is_confined() {
        let lambda = 10.0;
        let spec = OperatorSpec::constant(0.3, lambda).unwrap();
        let edges = linspace(-1.0, 2.0, 301);
        let h = dos_histogram(&spec, 500, 3, &edges, 1).unwrap();
        assert!(!h.coverage_warning);
        let inside = h.window_mass(0.3 - 0.2 - 1e-9, 0.3 + 0.2 + 1e-9);
        assert!((inside - 1.0).abs() < 1e-12);
        assert!((h.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_ids_is_arcsine() {
        let spec = OperatorSpec::constant(0.0, 1.0).unwrap();
        let edges = linspace(-2.5, 2.5, 1001);
        let h = dos_histogram(&spec, 5000, 1, &edges, 0).unwrap();
        assert!((h.ids(0.0) - 0.5).abs() < 1e-2);
        let sup = linspace(-1.99, 1.99, 400)
            .into_iter()
            .map(|e| (h.ids(e) - (1.0 - (e / 2.0).acos() / PI)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-2, "sup error {sup}");
    }

    #[test]
    fn coverage_flag() {
        let spec = OperatorSpec::constant(0.0, 1.0).unwrap();
        let h = dos_histogram(&spec, 100, 1, &linspace(-1.0, 1.0, 11), 0).unwrap();
        assert!(h.coverage_warning);
        assert!((h.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stieltjes_examples() {
        let z = ComplexEnergy::new(0.0, 1.0).unwrap();
        let s = stieltjes(&SpectralHistogram::atom(0.0).unwrap(), z).unwrap();
        assert!((s - Complex64::new(0.0, 1.0)).norm() < 1e-15);

        let h = SpectralHistogram::uniform(-1.0, 1.0, 50).unwrap();
        let r = 2e3;
        let s = stieltjes(&h, ComplexEnergy::new(0.0, r).unwrap()).unwrap();
        assert!((s - Complex64::new(0.0, 1.0 / r)).norm() < 1e-2 / r);

        // ½∫_{−1}^{1} dE/(E − 2) = −½ ln 3
        let s = stieltjes(&h, ComplexEnergy::new(2.0, 1e-6).unwrap()).unwrap();
        assert!((s.re + 0.5 * 3f64.ln()).abs() < 1e-6, "{s}");
        assert!(stieltjes(&h, ComplexEnergy::real(0.0)).is_err());
    }

    #[test]
    fn stieltjes_of_narrow_bins_far_away() {
        let h = SpectralHistogram::uniform(0.0, 1e-9, 1).unwrap();
        let z = ComplexEnergy::new(5.0, 1e-3).unwrap();
        let s = stieltjes(&h, z).unwrap();
        let want = 1.0 / (Complex64::new(0.5e-9, 0.0) - z.z());
        assert!((s - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn free_resolvent() {
        let (lambda, delta, v) = (1e6, 0.1, 0.25);
        let spec = OperatorSpec::constant(v, lambda).unwrap();
        let z = ComplexEnergy::new(v, delta).unwrap();
        let t = 1.0 / lambda;
        let want = 1.0 / (delta * delta + 4.0 * t * t).sqrt();
        let g = green_avg(&spec, z, 40, 5, 1, 1.0).unwrap();
        assert!((g.mean_g - Complex64::new(0.0, want)).norm() < 1e-3);
        assert!((g.mean_abs_alpha - want).abs() < 1e-3);
        assert_eq!(g.clamp_violations, 0);

        // moderate λ: exact free resolvent i/√(δ² + 4t²)
        let lambda = 2.0;
        let t = 1.0 / lambda;
        let spec = OperatorSpec::constant(0.0, lambda).unwrap();
        let g = green_avg(&spec, ComplexEnergy::new(0.0, delta).unwrap(), 400, 1, 1, 1.0).unwrap();
        let want = Complex64::new(0.0, 1.0 / (delta * delta + 4.0 * t * t).sqrt());
        assert!((g.mean_g - want).norm() < 1e-8 * want.norm(), "{} vs {want}", g.mean_g);
    }

    #[test]
    fn green_avg_determinism() {
        let spec = OperatorSpec::iid(Distribution::uniform(0.0, 1.0).unwrap(), 10.0).unwrap();
        let z = ComplexEnergy::new(0.4, 0.05).unwrap();
        let a = green_avg(&spec, z, 30, 1, 9, 0.5).unwrap();
        let b = green_avg(&spec, z, 30, 1, 9, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moment_bound_examples() {
        let spec = OperatorSpec::constant(0.0, 1e6).unwrap();
        for &alpha in &[0.25, 0.5, 1.0] {
            let w = frac_moment_bound(&spec, 0.0, 0.01, alpha, 20, 1, 0).unwrap();
            assert!((w.bound - 2f64.powf(alpha)).abs() < 1e-3 * 2f64.powf(alpha));
            assert!(w.bound >= 1.0);
        }
        let spec = OperatorSpec::constant(0.0, 10.0).unwrap();
        let w = frac_moment_bound(&spec, 0.0, 50.0, 1.0, 20, 1, 0).unwrap();
        assert!((w.bound - 2.0).abs() < 1e-2 && w.bound >= 1.0);
    }

    #[test]
    fn moment_bound_dominates_window_mass() {
        let spec = OperatorSpec::iid(Distribution::uniform(0.0, 1.0).unwrap(), 10.0).unwrap();
        let delta = 1e-3;
        let w = frac_moment_bound(&spec, 0.5, delta, 0.5, 30, 400, 3).unwrap();
        let (mass, se) = window_mass_mc(&spec, 0.5 - delta, 0.5 + delta, 2000, 50, 3).unwrap();
        assert!(w.bound + 2.0 * w.stderr >= mass - 2.0 * se, "{w:?} vs {mass}");
        assert_eq!(w.clamp_violations, 0);
    }

    #[test]
    fn empirical_g_examples() {
        let h = SpectralHistogram::uniform(0.0, 1.0, 100).unwrap();
        let g = empirical_g(&h, 0.5, 0.01).unwrap();
        assert!((g - 0.02).abs() < 1e-12);
        // far from the support only the floor δ remains
        assert_eq!(empirical_g(&h, 5.0, 0.01).unwrap(), 0.01);
        let g = empirical_g(&SpectralHistogram::atom(0.0).unwrap(), 0.0, 0.1).unwrap();
        assert_eq!(g, 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn histogram_invariants(seed in 0u64..500, lambda in 2.0f64..30.0) {
            let spec = OperatorSpec::iid(Distribution::uniform(-0.5, 1.0).unwrap(), lambda).unwrap();
            let edges = linspace(-2.0, 2.5, 91);
            let h = dos_histogram(&spec, 200, 3, &edges, seed).unwrap();
            prop_assert!((h.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(h.mass().iter().all(|&m| m >= 0.0));
            prop_assert!(!h.coverage_warning);
        }

        #[test]
        fn herglotz(e in -3.0f64..3.0, delta in 1e-6f64..10.0, bins in 1usize..40) {
            let h = SpectralHistogram::arcsine(0.1, 0.7, bins).unwrap();
            let s = stieltjes(&h, ComplexEnergy::new(e, delta).unwrap()).unwrap();
            prop_assert!(s.im > 0.0);
        }
    }
}
