//! Finite restrictions of `H = λ⁻¹Δ_offdiag + V`.
//!
//! Potential windows are sampled from an [`OperatorSpec`]; on a window we
//! compute the determinants `Δ_m = det(H_m − z)`, Green-function entries of
//! `(H_m − z)⁻¹` and Sturm eigenvalue counts. Restrictions are plain
//! (Dirichlet) truncations, and the hopping is strictly off-diagonal: the
//! Laplacian's diagonal `2λ⁻¹` is never folded into the energy.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap, SkewShiftState};
use crate::error::{config, domain, Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Subsystem};

/// Single-site distribution of an i.i.d. potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-constant density: weight `weights[k]` spread uniformly over
    /// `[edges[k], edges[k+1]]`. Weights are normalized on validation.
    Piecewise { edges: Vec<f64>, weights: Vec<f64> },
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = Distribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return config(format!("uniform support [{lo}, {hi}] is invalid"));
                }
            }
            Distribution::Piecewise { edges, weights } => {
                if edges.len() < 2 || weights.len() + 1 != edges.len() {
                    return config("piecewise density needs n+1 edges for n weights");
                }
                if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return config("piecewise edges must be finite and strictly increasing");
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return config("piecewise weights must be finite and non-negative");
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return config("piecewise weights sum to zero");
                }
            }
        }
        Ok(())
    }

    /// Smallest interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Uniform { lo, hi } => (*lo, *hi),
            Distribution::Piecewise { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    /// Points where the density jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Distribution::Uniform { lo, hi } => vec![*lo, *hi],
            Distribution::Piecewise { edges, .. } => edges.clone(),
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&v) {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Distribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                match edges.windows(2).position(|w| w[0] <= v && v <= w[1]) {
                    Some(k) => weights[k] / total / (edges[k + 1] - edges[k]),
                    None => 0.0,
                }
            }
        }
    }

    /// Supremum of the density.
    pub fn max_density(&self) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => 1.0 / (hi - lo),
            Distribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                weights.iter().zip(edges.windows(2)).map(|(w, e)| w / total / (e[1] - e[0])).fold(0.0, f64::max)
            }
        }
    }

    /// Supremum of the density restricted to `[lo, hi]`.
    pub fn max_density_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Distribution::Uniform { lo: a, hi: b } => {
                if hi < *a || lo > *b {
                    0.0
                } else {
                    1.0 / (b - a)
                }
            }
            Distribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                weights
                    .iter()
                    .zip(edges.windows(2))
                    .filter(|(_, e)| e[1] >= lo && e[0] <= hi)
                    .map(|(w, e)| w / total / (e[1] - e[0]))
                    .fold(0.0, f64::max)
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * u,
            Distribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                let mut target = u * total;
                for (k, w) in weights.iter().enumerate() {
                    if target < *w || k + 1 == weights.len() {
                        let frac = if *w > 0.0 { (target / w).clamp(0.0, 1.0) } else { 0.0 };
                        return edges[k] + frac * (edges[k + 1] - edges[k]);
                    }
                    target -= w;
                }
                unreachable!("weights are non-empty")
            }
        }
    }
}

/// How the initial point of a dynamical driver is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "point", rename_all = "snake_case")]
pub enum InitLaw {
    /// Uniform on the torus (the invariant Lebesgue measure).
    Uniform,
    /// A fixed point: `[x_{−1}, x₀]` for the standard map, `[ω₁, …, ω_d]` for the skew shift.
    Fixed(Vec<f64>),
}

/// Sampling function `h` of the skew shift potential `f(ω) = h(ω_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HProfile {
    /// `h(ω) = amplitude · cos ω`.
    Cosine { amplitude: f64 },
}

impl HProfile {
    #[inline]
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            HProfile::Cosine { amplitude } => amplitude * w.cos(),
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            HProfile::Cosine { amplitude } => (-amplitude.abs(), amplitude.abs()),
        }
    }
}

/// Source of the potential `V(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Driver {
    /// Standard map with `V(n) = −cos x_n`.
    #[serde(rename = "stdmap")]
    StdMap {
        init: InitLaw,
    },
    /// d-dimensional skew shift with `V(n) = h(ω_d(Tⁿω))`.
    #[serde(rename = "skewshift")]
    SkewShift {
        dim: usize,
        rotation_alpha: f64,
        profile: HProfile,
        init: InitLaw,
    },
    /// Independent identically distributed values.
    Iid {
        dist: Distribution,
    },
    Constant {
        value: f64,
    },
    /// `V(n) = values[n mod p]`.
    Periodic {
        values: Vec<f64>,
    },
}

/// A model: driver plus coupling λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub driver: Driver,
    pub lambda: f64,
}

impl OperatorSpec {
    pub fn new(driver: Driver, lambda: f64) -> Result<Self> {
        let s = Self { driver, lambda };
        s.validate()?;
        Ok(s)
    }

    pub fn stdmap(lambda: f64) -> Result<Self> {
        Self::new(Driver::StdMap { init: InitLaw::Uniform }, lambda)
    }

    pub fn constant(value: f64, lambda: f64) -> Result<Self> {
        Self::new(Driver::Constant { value }, lambda)
    }

    pub fn periodic(values: Vec<f64>, lambda: f64) -> Result<Self> {
        Self::new(Driver::Periodic { values }, lambda)
    }

    pub fn iid(dist: Distribution, lambda: f64) -> Result<Self> {
        Self::new(Driver::Iid { dist }, lambda)
    }

    pub fn skewshift(dim: usize, rotation_alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(
            Driver::SkewShift {
                dim,
                rotation_alpha,
                profile: HProfile::Cosine { amplitude: 1.0 },
                init: InitLaw::Uniform,
            },
            lambda,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return config(format!("coupling λ = {} must be positive", self.lambda));
        }
        match &self.driver {
            Driver::StdMap { init } => {
                if let InitLaw::Fixed(p) = init {
                    if p.len() != 2 || p.iter().any(|x| !x.is_finite()) {
                        return config("standard map initial point must be two finite angles");
                    }
                }
            }
            Driver::SkewShift { dim, rotation_alpha, profile, init } => {
                if *dim == 0 {
                    return config("skew shift dimension must be at least 1");
                }
                if !rotation_alpha.is_finite() {
                    return config("skew shift rotation must be finite");
                }
                let HProfile::Cosine { amplitude } = profile;
                if !amplitude.is_finite() {
                    return config("profile amplitude must be finite");
                }
                if let InitLaw::Fixed(p) = init {
                    if p.len() != *dim || p.iter().any(|x| !x.is_finite()) {
                        return config("skew shift initial point must have d finite angles");
                    }
                }
            }
            Driver::Iid { dist } => dist.validate()?,
            Driver::Constant { value } => {
                if !value.is_finite() {
                    return config("constant potential must be finite");
                }
            }
            Driver::Periodic { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return config("periodic potential needs at least one finite value");
                }
            }
        }
        Ok(())
    }

    /// `(min f, max f)`: bounds on every value the potential can take.
    pub fn potential_range(&self) -> (f64, f64) {
        match &self.driver {
            Driver::StdMap { .. } => (-1.0, 1.0),
            Driver::SkewShift { profile, .. } => profile.range(),
            Driver::Iid { dist } => dist.support(),
            Driver::Constant { value } => (*value, *value),
            Driver::Periodic { values } => {
                values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
            }
        }
    }

    /// Whether the potential is the same for every ω.
    pub fn is_deterministic(&self) -> bool {
        match &self.driver {
            Driver::Constant { .. } | Driver::Periodic { .. } => true,
            Driver::StdMap { init } | Driver::SkewShift { init, .. } => {
                matches!(init, InitLaw::Fixed(_))
            }
            Driver::Iid { .. } => false,
        }
    }

    pub fn model_name(&self) -> &'static str {
        match self.driver {
            Driver::StdMap { .. } => "stdmap",
            Driver::SkewShift { .. } => "skewshift",
            Driver::Iid { .. } => "iid",
            Driver::Constant { .. } => "constant",
            Driver::Periodic { .. } => "periodic",
        }
    }

    /// Endless stream `V(n0), V(n0+1), …` for the ω drawn from `seed`.
    pub fn stream(&self, n0: i64, seed: u64) -> PotentialStream {
        let mut rng = rng_from_seed(derive_seed(seed, Subsystem::Potential, 0));
        let inner = match &self.driver {
            Driver::StdMap { init } => {
                let (a, b) = match init {
                    InitLaw::Uniform => (rng.random_range(-PI..PI), rng.random_range(-PI..PI)),
                    InitLaw::Fixed(p) => (wrap(p[0]), wrap(p[1])),
                };
                let lambda = self.lambda;
                // State at time 0 is (x_{−1}, x₀); move it to (x_{n0−1}, x_{n0}).
                let (mut prev, mut curr) = (a, b);
                if n0 >= 0 {
                    for _ in 0..n0 {
                        let next = wrap(2.0 * curr + lambda * curr.sin() - prev);
                        prev = curr;
                        curr = next;
                    }
                } else {
                    for _ in 0..(-n0) {
                        let before = wrap(2.0 * prev + lambda * prev.sin() - curr);
                        curr = prev;
                        prev = before;
                    }
                }
                StreamInner::StdMap { prev, curr, lambda }
            }
            Driver::SkewShift { dim, rotation_alpha, profile, init } => {
                let coords: Vec<f64> = match init {
                    InitLaw::Uniform => (0..*dim).map(|_| rng.random_range(-PI..PI)).collect(),
                    InitLaw::Fixed(p) => p.clone(),
                };
                let mut state = SkewShiftState::new(&coords).expect("validated");
                if n0 >= 0 {
                    (0..n0).for_each(|_| state.advance(*rotation_alpha));
                } else {
                    (0..-n0).for_each(|_| state.retreat(*rotation_alpha));
                }
                StreamInner::SkewShift { state, rotation_alpha: *rotation_alpha, profile: profile.clone() }
            }
            Driver::Iid { dist } => StreamInner::Iid { dist: dist.clone(), rng },
            Driver::Constant { value } => StreamInner::Constant(*value),
            Driver::Periodic { values } => {
                StreamInner::Periodic { values: values.clone(), pos: n0.rem_euclid(values.len() as i64) as usize }
            }
        };
        PotentialStream { inner }
    }
}

/// Streaming potential; see [`OperatorSpec::stream`].
#[derive(Debug, Clone)]
pub struct PotentialStream {
    inner: StreamInner,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum StreamInner {
    StdMap { prev: f64, curr: f64, lambda: f64 },
    SkewShift { state: SkewShiftState, rotation_alpha: f64, profile: HProfile },
    Iid { dist: Distribution, rng: rand_chacha::ChaCha8Rng },
    Constant(f64),
    Periodic { values: Vec<f64>, pos: usize },
}

impl Iterator for PotentialStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(match &mut self.inner {
            StreamInner::StdMap { prev, curr, lambda } => {
                let (s, c) = curr.sin_cos();
                let v = -c;
                let next = wrap(2.0 * *curr + *lambda * s - *prev);
                *prev = *curr;
                *curr = next;
                v
            }
            StreamInner::SkewShift { state, rotation_alpha, profile } => {
                let v = profile.eval(state.last().value());
                state.advance(*rotation_alpha);
                v
            }
            StreamInner::Iid { dist, rng } => dist.sample(rng),
            StreamInner::Constant(v) => *v,
            StreamInner::Periodic { values, pos } => {
                let v = values[*pos];
                *pos = (*pos + 1) % values.len();
                v
            }
        })
    }
}

/// Sampled potential `V(n0), …, V(n1)` together with its coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialWindow {
    offset: i64,
    values: Vec<f64>,
    lambda: f64,
}

impl PotentialWindow {
    pub fn new(offset: i64, values: Vec<f64>, lambda: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return domain("potential values must be finite");
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return domain("coupling must be positive");
        }
        Ok(Self { offset, values, lambda })
    }

    /// Index `n₀` of the first sample.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hopping amplitude `λ⁻¹`.
    pub fn hopping(&self) -> f64 {
        1.0 / self.lambda
    }

    /// Sub-window of positions `range` (relative to the window start).
    pub fn slice(&self, range: std::ops::Range<usize>) -> PotentialWindow {
        PotentialWindow {
            offset: self.offset + range.start as i64,
            values: self.values[range].to_vec(),
            lambda: self.lambda,
        }
    }
}

/// Deterministic window `V(n0..=n1)` for the ω drawn from `seed`.
pub fn sample_potential(spec: &OperatorSpec, n0: i64, n1: i64, seed: u64) -> Result<PotentialWindow> {
    spec.validate()?;
    if n0 > n1 {
        return domain(format!("window [{n0}, {n1}] is empty"));
    }
    let len = (n1 - n0 + 1) as usize;
    let values: Vec<f64> = spec.stream(n0, seed).take(len).collect();
    PotentialWindow::new(n0, values, spec.lambda)
}

/// Spectral parameter `z = E + iδ`, `δ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub e: f64,
    pub delta: f64,
}

impl ComplexEnergy {
    pub fn new(e: f64, delta: f64) -> Result<Self> {
        if !(e.is_finite() && delta.is_finite()) || delta < 0.0 {
            return domain(format!("invalid spectral parameter {e} + {delta}i"));
        }
        Ok(Self { e, delta })
    }

    pub fn real(e: f64) -> Self {
        Self { e, delta: 0.0 }
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.e, self.delta)
    }
}

/// A complex number stored as `mantissa · 2^exp2`, immune to over/underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub exp2: i64,
}

const RESCALE_HI: f64 = 1.340_780_792_994_259_7e154; // 2^512
const RESCALE_LO: f64 = 7.458_340_731_200_207e-155; // 2^-512

fn pow2(k: i64) -> f64 {
    // exact for |k| ≤ 1022; larger shifts are applied in pieces by callers
    f64::from_bits(((k + 1023) as u64) << 52)
}

fn scale_complex(z: Complex64, k: i64) -> Complex64 {
    let mut z = z;
    let mut k = k;
    while k != 0 {
        let step = k.clamp(-1000, 1000);
        z *= pow2(step);
        k -= step;
    }
    z
}

impl ScaledComplex {
    pub const ONE: ScaledComplex = ScaledComplex { mantissa: Complex64 { re: 1.0, im: 0.0 }, exp2: 0 };

    pub fn new(mantissa: Complex64, exp2: i64) -> Self {
        Self { mantissa, exp2 }.normalized()
    }

    /// Moves the exponent so the larger mantissa component lies in `[1, 2)`.
    pub fn normalized(self) -> Self {
        let m = self.mantissa.re.abs().max(self.mantissa.im.abs());
        if m == 0.0 || !m.is_finite() {
            return Self { mantissa: self.mantissa, exp2: if m == 0.0 { 0 } else { self.exp2 } };
        }
        let e = m.log2().floor() as i64;
        let mut out = Self { mantissa: scale_complex(self.mantissa, -e), exp2: self.exp2 + e };
        // guard the floor(log2) rounding at exact powers of two
        let m2 = out.mantissa.re.abs().max(out.mantissa.im.abs());
        if m2 >= 2.0 {
            out.mantissa *= 0.5;
            out.exp2 += 1;
        } else if m2 < 1.0 {
            out.mantissa *= 2.0;
            out.exp2 -= 1;
        }
        out
    }

    pub fn is_zero(self) -> bool {
        self.mantissa.re == 0.0 && self.mantissa.im == 0.0
    }

    /// `ln|·|`; −∞ for zero.
    pub fn ln_abs(self) -> f64 {
        self.mantissa.norm().ln() + self.exp2 as f64 * std::f64::consts::LN_2
    }

    /// Plain complex value (may overflow to ∞ or underflow to 0).
    pub fn to_complex(self) -> Complex64 {
        scale_complex(self.mantissa, self.exp2)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: ScaledComplex) -> ScaledComplex {
        ScaledComplex::new(self.mantissa * other.mantissa, self.exp2 + other.exp2)
    }

    /// `self / other`; `other` must be non-zero.
    #[allow(clippy::should_implement_trait)]
    pub fn div(self, other: ScaledComplex) -> ScaledComplex {
        ScaledComplex::new(self.mantissa / other.mantissa, self.exp2 - other.exp2)
    }
}

/// `Δ₀, …, Δ_m` with `Δ_k = det(H_k − z)` for the restriction to the first `k`
/// sites of the window, via `Δ_k = (V(k−1) − z)Δ_{k−1} − λ⁻²Δ_{k−2}`.
pub fn det_recursion(w: &PotentialWindow, z: ComplexEnergy, m: usize) -> Result<Vec<ScaledComplex>> {
    if m > w.len() {
        return domain(format!("window of length {} cannot hold m = {m}", w.len()));
    }
    let t2 = w.hopping() * w.hopping();
    let z = z.z();
    let mut out = Vec::with_capacity(m + 1);
    out.push(ScaledComplex::ONE);
    // Δ_{k−1}, Δ_{k−2} share the exponent `e`.
    let (mut p1, mut p2, mut e) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), 0i64);
    for &v in &w.values()[..m] {
        let cur = (v - z) * p1 - t2 * p2;
        p2 = p1;
        p1 = cur;
        let mag = p1.re.abs().max(p1.im.abs()).max(p2.re.abs()).max(p2.im.abs());
        if mag > RESCALE_HI || (mag < RESCALE_LO && mag > 0.0) {
            let k = mag.log2().floor() as i64;
            p1 = scale_complex(p1, -k);
            p2 = scale_complex(p2, -k);
            e += k;
        }
        out.push(ScaledComplex::new(p1, e));
    }
    Ok(out)
}

/// Determinant of the whole window, `det(H − z)`.
pub fn window_determinant(w: &PotentialWindow, z: ComplexEnergy) -> ScaledComplex {
    *det_recursion(w, z, w.len()).expect("m = len is always in range").last().expect("non-empty")
}

/// Entry `(i, j)` of `(H − z)⁻¹` for the window restriction, positions
/// relative to the window start.
///
/// Solved with forward/backward continued fractions; if a partial pivot
/// vanishes (possible at real `z` even for invertible matrices) the entry is
/// taken from Cramer's rule on scaled determinants instead.
pub fn green_entry(w: &PotentialWindow, z: ComplexEnergy, i: usize, j: usize) -> Result<Complex64> {
    let m = w.len();
    if m == 0 {
        return domain("Green function needs a window of length ≥ 1");
    }
    if i >= m || j >= m {
        return domain(format!("entry ({i}, {j}) outside a window of length {m}"));
    }
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match green_continued_fraction(w, z.z(), i, j) {
        Some(g) => Ok(g),
        None => green_cramer(w, z, i, j),
    }
}

fn green_continued_fraction(w: &PotentialWindow, z: Complex64, i: usize, j: usize) -> Option<Complex64> {
    let v = w.values();
    let m = v.len();
    let t = w.hopping();
    let t2 = t * t;
    let ok = |c: Complex64| c.re.is_finite() && c.im.is_finite() && (c.re != 0.0 || c.im != 0.0);

    // left Green functions g^L_k of the restriction to [0, k], k < j
    let mut left = Vec::with_capacity(j);
    let mut g = Complex64::new(0.0, 0.0);
    for &vk in &v[..j] {
        let d = vk - z - t2 * g;
        if !ok(d) {
            return None;
        }
        g = d.inv();
        left.push(g);
    }
    let mut gr = Complex64::new(0.0, 0.0);
    for &vk in v[j + 1..m].iter().rev() {
        let d = vk - z - t2 * gr;
        if !ok(d) {
            return None;
        }
        gr = d.inv();
    }
    let d = v[j] - z - t2 * g - t2 * gr;
    if !ok(d) {
        return None;
    }
    let mut out = d.inv();
    for gl in &left[i..j] {
        out *= -t * gl;
    }
    (out.re.is_finite() && out.im.is_finite()).then_some(out)
}

fn green_cramer(w: &PotentialWindow, z: ComplexEnergy, i: usize, j: usize) -> Result<Complex64> {
    let m = w.len();
    let full = window_determinant(w, z);
    if full.is_zero() {
        return Err(Error::Numerical(format!("restriction is singular at z = {} + {}i", z.e, z.delta)));
    }
    let left = *det_recursion(&w.slice(0..i), z, i)?.last().expect("non-empty");
    let right = window_determinant(&w.slice(j + 1..m), z);
    let t = w.hopping();
    let hop = ScaledComplex::new(Complex64::new((-t).powi((j - i) as i32), 0.0), 0);
    let hop = if hop.is_zero() {
        // (−t)^{j−i} underflowed; rebuild it in scaled form
        let mut acc = ScaledComplex::ONE;
        let step = ScaledComplex::new(Complex64::new(-t, 0.0), 0);
        for _ in i..j {
            acc = acc.mul(step);
        }
        acc
    } else {
        hop
    };
    Ok(hop.mul(left).mul(right).div(full).to_complex())
}

/// Number of eigenvalues of the window restriction strictly below `e`.
///
/// Counts negative pivots of the LDLᵀ factorization of `H − e`. If a pivot
/// is exactly zero, `e` is lowered by `1e−14·(1+|e|)` and the count redone.
pub fn sturm_count(w: &PotentialWindow, e: f64) -> usize {
    let t2 = w.hopping() * w.hopping();
    let mut e = e;
    loop {
        match sturm_pass(w.values(), t2, e) {
            Some(c) => return c,
            None => e -= 1e-14 * (1.0 + e.abs()),
        }
    }
}

fn sturm_pass(v: &[f64], t2: f64, e: f64) -> Option<usize> {
    let mut count = 0usize;
    let mut d = 1.0f64;
    let mut zero = false;
    for (k, &vk) in v.iter().enumerate() {
        d = if k == 0 { vk - e } else { (vk - e) - t2 / d };
        count += (d < 0.0) as usize;
        zero |= d == 0.0;
    }
    (!zero).then_some(count)
}

const STURM_LANES: usize = 8;

/// [`sturm_count`] at every energy in `energies`, interleaving several
/// energies per pass over the window.
pub fn sturm_counts(w: &PotentialWindow, energies: &[f64]) -> Vec<usize> {
    let t2 = w.hopping() * w.hopping();
    let v = w.values();
    let mut out = Vec::with_capacity(energies.len());
    for chunk in energies.chunks(STURM_LANES) {
        let mut e = [0.0f64; STURM_LANES];
        e[..chunk.len()].copy_from_slice(chunk);
        let mut d = [1.0f64; STURM_LANES];
        let mut count = [0usize; STURM_LANES];
        let mut zero = [false; STURM_LANES];
        if let Some((&v0, rest)) = v.split_first() {
            for l in 0..STURM_LANES {
                d[l] = v0 - e[l];
                count[l] += (d[l] < 0.0) as usize;
                zero[l] |= d[l] == 0.0;
            }
            for &vk in rest {
                for l in 0..STURM_LANES {
                    d[l] = (vk - e[l]) - t2 / d[l];
                    count[l] += (d[l] < 0.0) as usize;
                    zero[l] |= d[l] == 0.0;
                }
            }
        }
        for (l, &el) in chunk.iter().enumerate() {
            out.push(if zero[l] { sturm_count(w, el) } else { count[l] });
        }
    }
    out
}

/// `(min V − 2/λ, max V + 2/λ)`, an interval containing the spectrum of the
/// restriction (Gershgorin).
pub fn spectral_hull(w: &PotentialWindow) -> (f64, f64) {
    let (lo, hi) = w.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    (lo - 2.0 * w.hopping(), hi + 2.0 * w.hopping())
}
