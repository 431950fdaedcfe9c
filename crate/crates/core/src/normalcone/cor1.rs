//! Scaling scans: `N^δ_{[Φ≤Φ(x̄)]}(x̄)` through `∂_δ(μΦ)(x̄)` for `μ ≥ 0` and the
//! diverging-scale limit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convexfn::conjugate_eval;
use crate::convexfn::oned::golden;
use crate::convexfn::ConvexFn;
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::subdiff::eps_subdiff;

pub const MU_LO: f64 = 1.0 / 1048576.0;
pub const MU_HI: f64 = 1048576.0;
const GRID: usize = 512;

/// `GRID` log-uniform scales on `[2^-20, 2^20]`.
pub fn mu_grid() -> Vec<f64> {
    let (a, b) = (MU_LO.ln(), MU_HI.ln());
    (0..GRID).map(|k| (a + (b - a) * k as f64 / (GRID - 1) as f64).exp()).collect()
}

/// Minimises `h` over the scale grid, refining the best cell by golden section in `ln μ`.
/// Returns `(μ*, h(μ*))`.
pub(crate) fn scan_scale(h: impl Fn(f64) -> f64) -> (f64, f64) {
    let grid = mu_grid();
    let vals: Vec<f64> = grid.iter().map(|m| h(*m)).collect();
    let (k, best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    if !best.is_finite() {
        return (grid[k], best);
    }
    let a = grid[k.saturating_sub(1)].ln();
    let b = grid[(k + 1).min(GRID - 1)].ln();
    let (l, v) = golden(|l| h(l.exp()), a, b, 200);
    if v < best {
        (l.exp(), v)
    } else {
        (grid[k], best)
    }
}

/// `h(μ) = μΦ(x̄) + μΦ*(g/μ) − ⟨g, x̄⟩`; `g ∈ ∂_δ(μΦ)(x̄)` iff `h(μ) ≤ δ`.
fn scaled_gap<'a>(f: &'a ConvexFn, fx: f64, xbar: &'a DVector<f64>, g: &'a DVector<f64>) -> impl Fn(f64) -> f64 + 'a {
    let gx = g.dot(xbar);
    move |mu: f64| match conjugate_eval(f, &(g / mu)) {
        Ok(ExtReal::Finite(c)) => mu * fx + mu * c - gx,
        Ok(ExtReal::PosInf) => f64::INFINITY,
        _ => f64::NAN,
    }
}

/// `h(0⁺) = σ_{dom Φ}(g) − ⟨g, x̄⟩`, the δ-normal test for the domain.
fn domain_gap(f: &ConvexFn, xbar: &DVector<f64>, g: &DVector<f64>) -> Result<f64> {
    Ok(f.domain().support(g)?.add_finite(-g.dot(xbar)).to_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Cor1Result {
    Inside { mu: f64, value: f64 },
    Outside { mu: f64, best_value: f64 },
}

impl Cor1Result {
    pub fn is_inside(&self) -> bool {
        matches!(self, Cor1Result::Inside { .. })
    }
}

/// `g ∈ cl ⋃_{μ>0} ∂_δ(μΦ)(x̄)` by minimising the convex function `h` over the scale
/// grid; the closure adds the limit `μ ↓ 0`.
pub fn cor1_membership(f: &ConvexFn, xbar: &DVector<f64>, delta: f64, g: &DVector<f64>, tol: f64) -> Result<Cor1Result> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("δ must be positive".into()));
    }
    let fx = f.value_at(xbar)?;
    conjugate_eval(f, g)?;
    let h = scaled_gap(f, fx, xbar, g);
    let (mut mu, mut value) = scan_scale(&h);
    if value.is_nan() {
        return Err(Error::Oracle("conjugate evaluation failed during the scale scan".into()));
    }
    let h0 = domain_gap(f, xbar, g)?;
    if h0 < value {
        mu = 0.0;
        value = h0;
    }
    Ok(if value <= delta + tol { Cor1Result::Inside { mu, value } } else { Cor1Result::Outside { mu, best_value: value } })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStep {
    pub mu: f64,
    pub eps: f64,
    /// `dist(g, μ ∂_ε Φ(x̄))`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum Corolario {
    /// `g ∈ ∂_δ(μΦ)(x̄)`; `μ = 0` means `g ∈ N^δ_{dom Φ}(x̄)`.
    Bounded { mu: f64, value: f64 },
    /// `g = lim μ_j g_j` with `g_j ∈ ∂_{ε_j}Φ(x̄)`, `μ_j → ∞`, `μ_j ε_j → δ`.
    Horizon { trace: Vec<HorizonStep> },
    Outside { best_value: f64 },
}

/// Splits `N^δ_{[Φ≤Φ(x̄)]}(x̄)` membership into the bounded-scale branch (including the
/// domain part at `μ = 0`) and the diverging-scale branch.
pub fn corolario_decompose(f: &ConvexFn, xbar: &DVector<f64>, delta: f64, g: &DVector<f64>, tol: f64) -> Result<Corolario> {
    if !(delta >= 0.0) {
        return Err(Error::Precondition("δ must be nonnegative".into()));
    }
    let fx = f.value_at(xbar)?;
    let h0 = domain_gap(f, xbar, g)?;
    if h0 <= delta + tol {
        return Ok(Corolario::Bounded { mu: 0.0, value: h0 });
    }
    conjugate_eval(f, g)?;
    let h = scaled_gap(f, fx, xbar, g);
    let (mu, value) = scan_scale(&h);
    if value.is_nan() {
        return Err(Error::Oracle("conjugate evaluation failed during the scale scan".into()));
    }
    let attained = value <= delta + 1e-12 * (1.0 + delta + g.norm());
    let pinned = mu >= MU_HI / 2.0;
    if value <= delta + tol && (attained || !pinned) {
        return Ok(Corolario::Bounded { mu, value });
    }

    let mut trace = Vec::new();
    for j in 0..=20 {
        let m = 2f64.powi(j);
        let eps = (delta + m.powf(-0.75)) / m;
        let s = eps_subdiff(f, xbar, eps)?;
        let residual = m * s.distance(&(g / m))?;
        trace.push(HorizonStep { mu: m, eps, residual });
    }
    let tail = &trace[trace.len() / 2..];
    let settles = tail.windows(2).all(|w| w[1].residual <= w[0].residual + 1e-9 * (1.0 + w[0].residual));
    let last = trace.last().map(|s| s.residual).unwrap_or(f64::INFINITY);
    if settles && last <= tol {
        return Ok(Corolario::Horizon { trace });
    }
    Ok(Corolario::Outside { best_value: value.min(h0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::dv;
    use crate::geometry::HPolyhedron;

    #[test]
    fn cor1_examples() {
        let f = ConvexFn::abs();
        let x = dv(&[1.0]);
        match cor1_membership(&f, &x, 0.5, &dv(&[-0.25]), 1e-9).unwrap() {
            Cor1Result::Inside { mu, .. } => assert!((mu - 0.25).abs() < 1e-6),
            o => panic!("{o:?}"),
        }
        match cor1_membership(&f, &x, 0.5, &dv(&[-0.3]), 1e-9).unwrap() {
            Cor1Result::Outside { best_value, .. } => assert!((best_value - 0.6).abs() < 1e-6),
            o => panic!("{o:?}"),
        }
        match cor1_membership(&f, &x, 0.5, &dv(&[100.0]), 1e-9).unwrap() {
            Cor1Result::Inside { mu, .. } => assert!((100.0 - 1e-4..=100.5).contains(&mu), "{mu}"),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn corolario_examples() {
        let f = ConvexFn::abs();
        match corolario_decompose(&f, &dv(&[1.0]), 0.0, &dv(&[2.0]), 1e-9).unwrap() {
            Corolario::Bounded { mu, .. } => assert!((mu - 2.0).abs() < 1e-6),
            o => panic!("{o:?}"),
        }
        let ind = ConvexFn::indicator(HPolyhedron::cube(1, 0.0, 1.0)).unwrap();
        assert_eq!(
            corolario_decompose(&ind, &dv(&[1.0]), 0.0, &dv(&[7.0]), 1e-9).unwrap(),
            Corolario::Bounded { mu: 0.0, value: 0.0 }
        );
        assert!(matches!(
            corolario_decompose(&f, &dv(&[0.0]), 0.0, &dv(&[1.0]), 1e-9).unwrap(),
            Corolario::Bounded { .. }
        ));
        // ½x² at its minimiser: N_{{0}}(0) = ℝ, reached only as μ → ∞.
        let q = ConvexFn::half_sq_norm(1);
        match corolario_decompose(&q, &dv(&[0.0]), 0.0, &dv(&[1.0]), 1e-6).unwrap() {
            Corolario::Horizon { trace } => assert!(trace.last().unwrap().residual <= 1e-6),
            o => panic!("{o:?}"),
        }
        assert!(matches!(
            corolario_decompose(&f, &dv(&[1.0]), 0.0, &dv(&[-1.0]), 1e-6).unwrap(),
            Corolario::Outside { .. }
        ));
    }
}
