//! Measure-preserving drivers: the standard map on 𝕋² and the skew shift on 𝕋ᵈ.
//!
//! Angles are reduced to `[−π, π)` after every step. At large λ the computed
//! orbits are pseudo-orbits; everything downstream consumes ensemble or
//! Birkhoff averages, so that is sufficient.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A point of ℝ/2πℤ represented in `[−π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Reduces `x` modulo 2π. Non-finite input is a domain error.
    pub fn new(x: f64) -> Result<Self> {
        reduce_angle(x)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Length of the shorter arc between `self` and `other`.
    pub fn distance(self, other: Angle) -> f64 {
        wrap(self.0 - other.0).abs()
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Unchecked reduction to `[−π, π)`; `x` must be finite.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative x.
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Canonical representative of `x` in `[−π, π)`; π maps to −π.
pub fn reduce_angle(x: f64) -> Result<Angle> {
    if !x.is_finite() {
        return domain(format!("cannot reduce non-finite angle {x}"));
    }
    let r = wrap(x);
    debug_assert!((-PI..PI).contains(&r));
    Ok(Angle(r))
}

/// A state `(x_{n−1}, x_n)` of the standard map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdMapState {
    pub x_prev: Angle,
    pub x_curr: Angle,
}

impl StdMapState {
    pub fn new(x_prev: f64, x_curr: f64) -> Result<Self> {
        Ok(Self { x_prev: reduce_angle(x_prev)?, x_curr: reduce_angle(x_curr)? })
    }
}

/// One step of `T(x₁, x₂) = (x₂, 2x₂ + λ sin x₂ − x₁)`.
pub fn std_map_step(s: StdMapState, lambda: f64) -> Result<StdMapState> {
    if !lambda.is_finite() {
        return domain("coupling must be finite");
    }
    let (x1, x2) = (s.x_prev.0, s.x_curr.0);
    Ok(StdMapState { x_prev: s.x_curr, x_curr: reduce_angle(2.0 * x2 + lambda * x2.sin() - x1)? })
}

/// Inverse of [`std_map_step`]: `(x₁, x₂) ↦ (2x₁ + λ sin x₁ − x₂, x₁)`.
pub fn std_map_step_inverse(s: StdMapState, lambda: f64) -> Result<StdMapState> {
    if !lambda.is_finite() {
        return domain("coupling must be finite");
    }
    let (x1, x2) = (s.x_prev.0, s.x_curr.0);
    Ok(StdMapState { x_prev: reduce_angle(2.0 * x1 + lambda * x1.sin() - x2)?, x_curr: s.x_prev })
}

/// Streaming orbit `x_{−1}, x₀, x₁, …` of the standard map.
#[derive(Debug, Clone)]
pub struct StdMapOrbit {
    state: StdMapState,
    lambda: f64,
    emitted_prev: bool,
}

impl Iterator for StdMapOrbit {
    type Item = Angle;

    #[inline]
    fn next(&mut self) -> Option<Angle> {
        if !self.emitted_prev {
            self.emitted_prev = true;
            return Some(self.state.x_prev);
        }
        let out = self.state.x_curr;
        let (x1, x2) = (self.state.x_prev.0, self.state.x_curr.0);
        self.state = StdMapState { x_prev: out, x_curr: Angle(wrap(2.0 * x2 + self.lambda * x2.sin() - x1)) };
        Some(out)
    }
}

/// Orbit from `init = (x_{−1}, x₀)`: yields `x_{−1}, x₀, …, x_{n_steps}`.
pub fn std_map_orbit(init: StdMapState, lambda: f64, n_steps: usize) -> Result<std::iter::Take<StdMapOrbit>> {
    if !lambda.is_finite() {
        return domain("coupling must be finite");
    }
    Ok(StdMapOrbit { state: init, lambda, emitted_prev: false }.take(n_steps + 2))
}

/// Pendulum residual `x_{n+1} + x_{n−1} − 2x_n − λ sin x_n`, reduced mod 2π.
pub fn pendulum_residual(prev: Angle, curr: Angle, next: Angle, lambda: f64) -> f64 {
    wrap(next.0 + prev.0 - 2.0 * curr.0 - lambda * curr.0.sin())
}

/// A point `(ω₁, …, ω_d)` of 𝕋ᵈ driven by the skew shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewShiftState {
    coords: Vec<Angle>,
}

impl SkewShiftState {
    pub fn new(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() {
            return domain("skew shift needs dimension d ≥ 1");
        }
        let coords = coords.iter().map(|&x| reduce_angle(x)).collect::<Result<_>>()?;
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Angle] {
        &self.coords
    }

    /// The last coordinate `ω_d`, which drives `f(ω) = h(ω_d)`.
    pub fn last(&self) -> Angle {
        *self.coords.last().expect("d ≥ 1")
    }

    /// In-place forward step.
    pub(crate) fn advance(&mut self, rotation_alpha: f64) {
        for k in (1..self.coords.len()).rev() {
            self.coords[k] = Angle(wrap(self.coords[k].0 + self.coords[k - 1].0));
        }
        self.coords[0] = Angle(wrap(self.coords[0].0 + rotation_alpha));
    }

    /// In-place inverse step.
    pub(crate) fn retreat(&mut self, rotation_alpha: f64) {
        self.coords[0] = Angle(wrap(self.coords[0].0 - rotation_alpha));
        for k in 1..self.coords.len() {
            self.coords[k] = Angle(wrap(self.coords[k].0 - self.coords[k - 1].0));
        }
    }
}

/// `T(ω₁, …, ω_d) = (ω₁ + α, ω₂ + ω₁, …, ω_d + ω_{d−1})`.
pub fn skew_shift_step(s: &SkewShiftState, rotation_alpha: f64) -> Result<SkewShiftState> {
    if !rotation_alpha.is_finite() {
        return domain("rotation must be finite");
    }
    let mut out = s.clone();
    out.advance(rotation_alpha);
    Ok(out)
}

/// Inverse of [`skew_shift_step`].
pub fn skew_shift_step_inverse(s: &SkewShiftState, rotation_alpha: f64) -> Result<SkewShiftState> {
    if !rotation_alpha.is_finite() {
        return domain("rotation must be finite");
    }
    let mut out = s.clone();
    out.retreat(rotation_alpha);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close_mod(a: f64, b: f64, tol: f64) -> bool {
        wrap(a - b).abs() < tol
    }

    #[test]
    fn reduce_angle_examples() {
        assert!(reduce_angle(TAU).unwrap().value().abs() < 1e-15);
        let r = reduce_angle(3.0 * PI).unwrap().value();
        assert!((-PI..PI).contains(&r));
        assert!(close_mod(r, -PI, 1e-14));
        assert_eq!(reduce_angle(0.3).unwrap().value(), 0.3);
        assert_eq!(reduce_angle(PI).unwrap().value(), -PI);
        assert!(reduce_angle(f64::NAN).is_err());
        assert!(reduce_angle(f64::INFINITY).is_err());
        let tiny = reduce_angle(-1e-300).unwrap().value();
        assert!((-PI..PI).contains(&tiny));
    }

    #[test]
    fn std_map_fixed_point_and_period_two() {
        let s = StdMapState::new(0.0, 0.0).unwrap();
        assert_eq!(std_map_step(s, 7.5).unwrap(), s);

        let s = StdMapState::new(0.0, -PI).unwrap();
        let t = std_map_step(s, 10.0).unwrap();
        assert_eq!(t.x_prev.value(), -PI);
        assert!(close_mod(t.x_curr.value(), 0.0, 1e-14));
        let u = std_map_step(t, 10.0).unwrap();
        assert!(close_mod(u.x_prev.value(), 0.0, 1e-14));
        assert!(close_mod(u.x_curr.value(), -PI, 1e-12));
    }

    #[test]
    fn std_map_linear_twist() {
        let s = StdMapState::new(0.1, 0.2).unwrap();
        let t = std_map_step(s, 0.0).unwrap();
        assert_eq!(t.x_prev.value(), 0.2);
        assert!((t.x_curr.value() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn orbit_examples() {
        let o: Vec<f64> = std_map_orbit(StdMapState::new(0.0, -PI).unwrap(), 10.0, 3).unwrap().map(f64::from).collect();
        assert_eq!(o.len(), 5);
        for (got, want) in o.iter().zip([0.0, -PI, 0.0, -PI, 0.0]) {
            assert!(close_mod(*got, want, 1e-12), "{o:?}");
        }
        let o: Vec<f64> = std_map_orbit(StdMapState::new(0.0, 0.0).unwrap(), 3.0, 2).unwrap().map(f64::from).collect();
        assert_eq!(o, vec![0.0; 4]);
    }

    #[test]
    fn long_orbit_satisfies_pendulum_recursion() {
        let lambda = 30.0;
        let o: Vec<Angle> = std_map_orbit(StdMapState::new(0.5, 1.0).unwrap(), lambda, 10_000).unwrap().collect();
        assert_eq!(o.len(), 10_002);
        let worst = o.windows(3).map(|w| pendulum_residual(w[0], w[1], w[2], lambda).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst residual {worst}");
    }

    #[test]
    fn skew_shift_examples() {
        let s = SkewShiftState::new(&[0.0, 0.0]).unwrap();
        let s1 = skew_shift_step(&s, 0.5).unwrap();
        assert_eq!(s1.coords()[0].value(), 0.5);
        assert_eq!(s1.coords()[1].value(), 0.0);
        let s3 = skew_shift_step(&skew_shift_step(&s1, 0.5).unwrap(), 0.5).unwrap();
        assert!((s3.coords()[0].value() - 1.5).abs() < 1e-15);
        assert!((s3.coords()[1].value() - 1.5).abs() < 1e-15);

        let c = SkewShiftState::new(&[0.1]).unwrap();
        let c1 = skew_shift_step(&c, 0.2).unwrap();
        assert!((c1.coords()[0].value() - 0.3).abs() < 1e-15);

        assert!(SkewShiftState::new(&[]).is_err());
    }

    proptest! {
        #[test]
        fn std_map_inverse_roundtrip(x1 in -PI..PI, x2 in -PI..PI, lambda in 0.0f64..100.0) {
            let s = StdMapState::new(x1, x2).unwrap();
            let back = std_map_step_inverse(std_map_step(s, lambda).unwrap(), lambda).unwrap();
            prop_assert!(close_mod(back.x_prev.value(), x1, 1e-12));
            prop_assert!(close_mod(back.x_curr.value(), x2, 1e-12));
        }

        #[test]
        fn skew_shift_inverse_roundtrip(
            coords in proptest::collection::vec(-PI..PI, 1..6),
            alpha in -10.0f64..10.0,
        ) {
            let s = SkewShiftState::new(&coords).unwrap();
            let back = skew_shift_step_inverse(&skew_shift_step(&s, alpha).unwrap(), alpha).unwrap();
            for (a, b) in back.coords().iter().zip(s.coords()) {
                prop_assert!(a.distance(*b) < 1e-13);
            }
        }

        #[test]
        fn reduced_angles_lie_in_fundamental_domain(x in -1e6f64..1e6) {
            let r = reduce_angle(x).unwrap().value();
            prop_assert!((-PI..PI).contains(&r));
            prop_assert!(((x - r) / TAU - ((x - r) / TAU).round()).abs() < 1e-9);
        }
    }
}
