//! Thouless formula `γ(E) = ln λ + ∫ ln|E − E′| dρ(E′)` on binned densities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dos::{dos_histogram, linspace, SpectralHistogram};
use crate::error::{domain, Result};
use crate::lyapunov::lyapunov_scan;
use crate::operator::OperatorSpec;

/// Mean of `ln|x|` over `x ∈ [u0, u1]`.
fn mean_log_abs(u0: f64, u1: f64) -> f64 {
    let mid = 0.5 * (u0 + u1);
    let r = 0.5 * (u1 - u0) / mid.abs();
    if r < 0.05 {
        // ln|m| + mean of ln(1 + s) over s ∈ [−r, r]
        let r2 = r * r;
        mid.abs().ln() - r2 * (1.0 / 6.0 + r2 * (1.0 / 20.0 + r2 * (1.0 / 42.0 + r2 / 72.0)))
    } else {
        let f = |u: f64| if u == 0.0 { 0.0 } else { u * u.abs().ln() - u };
        (f(u1) - f(u0)) / (u1 - u0)
    }
}

/// `∫ ln|E − E′| dρ(E′)`, exact on each bin; `−∞` when `E` sits on an atom.
pub fn log_potential(h: &SpectralHistogram, e: f64) -> f64 {
    h.bins()
        .filter(|&(_, _, m)| m > 0.0)
        .map(|(a, b, m)| if a == b { m * (a - e).abs().ln() } else { m * mean_log_abs(a - e, b - e) })
        .sum()
}

/// `ln λ + log_potential(h, E)`.
pub fn thouless_gamma(h: &SpectralHistogram, e: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain("coupling must be positive");
    }
    Ok(lambda.ln() + log_potential(h, e))
}

/// Transfer-matrix and Thouless estimates at one energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThoulessRow {
    pub e: f64,
    pub gamma_transfer: f64,
    pub stderr: f64,
    pub gamma_thouless: f64,
    pub residual: f64,
}

/// Budgets for [`thouless_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThoulessBudget {
    pub steps: u64,
    pub ensemble: u64,
    pub dos_size: usize,
    pub dos_ensemble: u64,
    pub bins: usize,
}

/// Bin edges spanning `[min f − 2/λ, max f + 2/λ]`, which contains every
/// eigenvalue of every truncation.
pub fn hull_edges(spec: &OperatorSpec, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return domain("need at least one bin");
    }
    let (lo, hi) = spec.potential_range();
    let t = 1.0 / spec.lambda;
    Ok(linspace(lo - 2.0 * t, hi + 2.0 * t, bins + 1))
}

/// γ from the cocycle and from the log-potential of one shared histogram.
pub fn thouless_scan(spec: &OperatorSpec, grid: &[f64], budget: ThoulessBudget, seed: u64) -> Result<Vec<ThoulessRow>> {
    if grid.is_empty() {
        return domain("energy grid is empty");
    }
    let edges = hull_edges(spec, budget.bins)?;
    let h = dos_histogram(spec, budget.dos_size, budget.dos_ensemble, &edges, seed)?;
    let gammas = lyapunov_scan(spec, grid, budget.steps, budget.ensemble, seed)?;
    grid.par_iter()
        .zip(gammas.par_iter())
        .map(|(&e, g)| {
            let th = thouless_gamma(&h, e, spec.lambda)?;
            Ok(ThoulessRow { e, gamma_transfer: g.gamma, stderr: g.stderr, gamma_thouless: th, residual: g.gamma - th })
        })
        .collect()
}

/// Closed-form log-potential of the arcsine law on `[c − 2t, c + 2t]`:
/// `ln((|E−c| + √((E−c)² − 4t²))/2)` outside the band and `ln t` inside.
pub fn arcsine_log_potential(center: f64, t: f64, e: f64) -> f64 {
    let x = (e - center).abs();
    if x <= 2.0 * t {
        t.ln()
    } else {
        ((x + (x * x - 4.0 * t * t).sqrt()) / 2.0).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::periodic_oracle;
    use crate::operator::Distribution;

    #[test]
    fn closed_form_examples() {
        let atom = SpectralHistogram::atom(0.0).unwrap();
        assert!((log_potential(&atom, 2.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_potential(&atom, 0.0), f64::NEG_INFINITY);
        assert_eq!(thouless_gamma(&atom, 0.0, 3.0).unwrap(), f64::NEG_INFINITY);
        let e1 = std::f64::consts::E;
        assert!((thouless_gamma(&atom, e1, 1.0).unwrap() - 1.0).abs() < 1e-15);

        let unif = SpectralHistogram::uniform(-1.0, 1.0, 1).unwrap();
        assert!((log_potential(&unif, 0.0) + 1.0).abs() < 1e-14);
        let unif = SpectralHistogram::uniform(-1.0, 1.0, 64).unwrap();
        assert!((log_potential(&unif, 0.0) + 1.0).abs() < 1e-13);
        assert!((log_potential(&unif, 0.013) - exact_uniform(0.013)).abs() < 1e-13);

        for &t in &[0.1, 1.0, 3.0] {
            let h = SpectralHistogram::arcsine(0.0, t, 10_000).unwrap();
            let want = ((3.0 + 5f64.sqrt()) * t / 2.0).ln();
            assert!((log_potential(&h, 3.0 * t) - want).abs() < 1e-4);
            assert!((arcsine_log_potential(0.0, t, 3.0 * t) - want).abs() < 1e-15);
        }
    }

    fn exact_uniform(e: f64) -> f64 {
        let f = |u: f64| u * u.abs().ln() - u;
        (f(1.0 - e) - f(-1.0 - e)) / 2.0
    }

    #[test]
    fn narrow_bins_far_away() {
        let h = SpectralHistogram::uniform(1.0, 1.0 + 1e-10, 1).unwrap();
        assert!((log_potential(&h, -1.0) - (2.0 + 0.5e-10f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_model_matches_oracle() {
        let (v, lambda) = (0.2, 10.0);
        let t = 1.0 / lambda;
        let h = SpectralHistogram::arcsine(v, t, 10_000).unwrap();
        for &e in &[0.6, -0.5, 1.5] {
            let th = thouless_gamma(&h, e, lambda).unwrap();
            assert!((th - periodic_oracle(&[v], e, lambda).unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn lambda_scaling() {
        let h = SpectralHistogram::arcsine(0.0, 0.5, 300).unwrap();
        for &lambda in &[2.0, 10.0, 1e3] {
            let d = thouless_gamma(&h, 0.3, lambda).unwrap() - thouless_gamma(&h, 0.3, 1.0).unwrap();
            assert!((d - f64::ln(lambda)).abs() < 1e-14);
        }
    }

    #[test]
    fn concave_outside_support_and_continuous() {
        let h = SpectralHistogram::arcsine(0.0, 0.5, 200).unwrap();
        let es = linspace(1.01, 4.0, 200);
        let vals: Vec<f64> = es.iter().map(|&e| log_potential(&h, e)).collect();
        for w in vals.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12);
            assert!(w[2] > w[1]);
        }
        // continuity across bin edges
        let edge = h.edges()[57];
        let jump = (log_potential(&h, edge + 1e-12) - log_potential(&h, edge - 1e-12)).abs();
        assert!(jump < 1e-8);
    }

    #[test]
    fn constant_scan_residuals() {
        let spec = OperatorSpec::constant(0.0, 4.0).unwrap();
        let budget = ThoulessBudget { steps: 200_000, ensemble: 1, dos_size: 4000, dos_ensemble: 1, bins: 2000 };
        let grid = [-1.0, -0.7, 0.0, 0.2, 0.9];
        let rows = thouless_scan(&spec, &grid, budget, 0).unwrap();
        for r in rows {
            assert!(r.residual.abs() < 1e-2, "{r:?}");
        }
    }

    #[test]
    fn iid_scan_is_finite_far_outside() {
        let spec = OperatorSpec::iid(Distribution::uniform(0.0, 1.0).unwrap(), 10.0).unwrap();
        let budget = ThoulessBudget { steps: 20_000, ensemble: 4, dos_size: 500, dos_ensemble: 4, bins: 200 };
        let rows = thouless_scan(&spec, &[0.5, 25.0], budget, 1).unwrap();
        assert!(rows.iter().all(|r| r.residual.is_finite()));
        assert!(rows[1].residual.abs() < 1e-2, "{:?}", rows[1]);
    }
}
