//! Adaptive quadrature for integrands with integrable algebraic or
//! logarithmic singularities at known points.
//!
//! The interval is first cut at the caller's split points. Each piece is
//! halved and every half is graded geometrically (ratio ½) toward its outer
//! endpoint. Near an endpoint singularity `|x − p|^{−β}` the graded panel
//! integrals form a geometric sequence with ratio `2^{β−1}`, so the unresolved
//! tail below the last panel is extrapolated from the observed ratio; a ratio
//! that reaches 1 means the singularity is not integrable. After grading, a
//! global adaptive loop bisects the panel with the largest Gauss–Kronrod
//! error estimate until the total estimate meets the tolerance.
//!
//! Tolerances are mixed: a result is converged when
//! `err_est ≤ tol · max(1, |value|)`.

use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub err_est: f64,
    pub converged: bool,
    /// A graded endpoint showed non-integrable growth; `value` is then the
    /// partial sum and a lower bound for a positive integrand.
    pub divergent: bool,
    pub subdivisions: usize,
}

impl QuadResult {
    /// Tolerance the result was checked against.
    pub fn effective_tol(&self, tol: f64) -> f64 {
        tol * self.value.abs().max(1.0)
    }
}

/// Tolerance and panel budget for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub tol: f64,
    pub max_subdiv: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_subdiv: 20_000 }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // ties broken by position so the heap order is deterministic
        self.err.total_cmp(&other.err).then_with(|| other.a.total_cmp(&self.a))
    }
}

/// 15-point Gauss–Kronrod rule with the QUADPACK error heuristic.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut bad = false;
    let mut eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            y
        } else {
            bad = true;
            0.0
        }
    };
    let fc = eval(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if bad {
        err = f64::INFINITY;
    }
    Panel { a, b, value, err }
}

/// Result of grading one half-piece toward its endpoint `p`.
struct Graded {
    panels: Vec<Panel>,
    tail: f64,
    tail_err: f64,
    divergent: bool,
}

const MAX_LEVELS: usize = 60;

/// Graded panels on the half-piece with endpoint `p` and length `len`
/// (`dir` = +1 if the piece extends to the right of `p`).
fn grade<F: Fn(f64) -> f64>(f: &F, p: f64, len: f64, dir: f64, tol: f64) -> Graded {
    // Below this width the offset x − p is no longer resolved against |p|.
    let w_min = (len * 1e-13).max(2e-9 * p.abs()).max(f64::MIN_POSITIVE);
    let mut panels = Vec::new();
    let mut sum = 0.0;
    let mut outer = len;
    let mut prev_est: Option<f64> = None;
    // (panels kept, tail, uncertainty) at the most trustworthy level so far
    let mut best = (0usize, 0.0, f64::INFINITY);
    for level in 0..MAX_LEVELS {
        let inner = 0.5 * outer;
        let (a, b) = if dir > 0.0 { (p + inner, p + outer) } else { (p - outer, p - inner) };
        let panel = gk15(f, a, b);
        panels.push(panel);
        sum += panel.value;
        outer = inner;

        let n = panels.len();
        if n < 3 {
            continue;
        }
        let (i0, i1, i2) = (panels[n - 3].value, panels[n - 2].value, panels[n - 1].value);
        let r1 = i2 / i1;
        let r0 = i1 / i0;
        let at_floor = inner <= w_min;
        // Panels still growing at the resolution floor: not integrable.
        if at_floor && r1 >= 0.999 && r0 >= 0.999 {
            return Graded { panels, tail: 0.0, tail_err: f64::INFINITY, divergent: true };
        }
        let est = match geometric_tail(i2, r1, r0) {
            Some(t) => Some(sum + t),
            None if i2 == 0.0 && i1 == 0.0 => Some(sum),
            None => None,
        };
        let unc = match (est, prev_est) {
            (Some(e1), Some(e0)) => (e1 - e0).abs(),
            _ => i2.abs() + i1.abs(),
        };
        prev_est = est;
        if unc < best.2 {
            best = (n, est.map_or(0.0, |e| e - sum), unc);
        }
        if (level >= 5 && unc <= 0.01 * tol * sum.abs().max(1.0)) || at_floor {
            break;
        }
    }
    panels.truncate(best.0);
    Graded { panels, tail: best.1, tail_err: best.2, divergent: false }
}

/// Sum of the panels beyond the last one, assuming the panel ratio tends to
/// its limit linearly in the panel width.
fn geometric_tail(last: f64, r: f64, r_prev: f64) -> Option<f64> {
    let r_inf = 2.0 * r - r_prev;
    if !(r > 0.0 && r < 1.0 && r_inf > 0.0 && r_inf < 1.0) {
        return None;
    }
    let d = r - r_inf;
    let s1 = r_inf / (1.0 - r_inf);
    let s2 = 0.5 * r_inf / (1.0 - 0.5 * r_inf);
    Some(last * (s1 + d / r_inf * (s1 - s2)))
}

/// Integrates `f` over `[a, b]`, splitting at `split_points` and grading
/// toward every split point and both endpoints.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    split_points: &[f64],
    tol: f64,
    max_subdiv: usize,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return domain(format!("integration interval [{a}, {b}] is invalid"));
    }
    if !(tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let mut pts: Vec<f64> = split_points.iter().copied().filter(|x| x.is_finite() && *x > a && *x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 4.0 * f64::EPSILON * x.abs().max(y.abs()));

    let mut heap = BinaryHeap::new();
    let mut tail_sum = 0.0;
    let mut tail_err = 0.0;
    let mut divergent = false;
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let mid = 0.5 * (p + q);
        let half = mid - p;
        if half <= 0.0 {
            continue;
        }
        for (end, dir, len) in [(p, 1.0, half), (q, -1.0, q - mid)] {
            let g = grade(&f, end, len, dir, tol);
            tail_sum += g.tail;
            tail_err += g.tail_err;
            divergent |= g.divergent;
            heap.extend(g.panels);
        }
    }

    let total = |heap: &BinaryHeap<Panel>| -> (f64, f64) {
        // sum in position order so the value does not depend on heap layout
        let mut v: Vec<&Panel> = heap.iter().collect();
        v.sort_by(|x, y| x.a.total_cmp(&y.a));
        v.iter().fold((0.0, 0.0), |(s, e), p| (s + p.value, e + p.err))
    };

    let mut subdivisions = heap.len();
    let (mut value, mut err) = total(&heap);
    value += tail_sum;
    err += tail_err;
    while !divergent && err > tol * value.abs().max(1.0) && subdivisions < max_subdiv {
        if tail_err > tol * value.abs().max(1.0) {
            break;
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
        subdivisions += 1;
        let (v, e) = total(&heap);
        value = v + tail_sum;
        err = e + tail_err;
    }
    let converged = !divergent && err <= tol * value.abs().max(1.0);
    Ok(QuadResult { value, err_est: if divergent { f64::INFINITY } else { err }, converged, divergent, subdivisions })
}

/// `|d|^{2α−1} ∫_{−1}^{1} |x(x − d)|^{−α} dx`, the scaled integral whose
/// boundedness in `d` controls the near-double-root contributions.
pub fn quadr_bound_check(d: Complex64, moment_alpha: f64) -> Result<f64> {
    let r = d.norm();
    if !(r > 0.0 && r <= 1.0) {
        return domain(format!("need 0 < |d| ≤ 1, got |d| = {r}"));
    }
    if !(moment_alpha > 0.5 && moment_alpha < 1.0) {
        return domain("moment exponent must lie in (1/2, 1)");
    }
    let f = |x: f64| {
        let q = x.abs() * (Complex64::new(x, 0.0) - d).norm();
        q.powf(-moment_alpha)
    };
    let splits = [0.0, d.re];
    let res = integrate_adaptive(f, -1.0, 1.0, &splits, 1e-9, 20_000)?;
    if !res.converged {
        return Err(Error::Numerical(format!(
            "scaled quadratic integral did not converge at d = {d} (err {:e})",
            res.err_est
        )));
    }
    Ok(r.powf(2.0 * moment_alpha - 1.0) * res.value)
}
