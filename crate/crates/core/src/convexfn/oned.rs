//! One-dimensional minimisation used by the directional-derivative and scaling scans.

use nalgebra::DVector;

use super::{recession_value, ConvexFn};
use crate::error::Result;
use crate::extreal::ExtReal;

pub const T_MIN: f64 = 1e-12;
pub const T_MAX: f64 = 1e12;
const GRID: usize = 400;
const GOLDEN_ITERS: usize = 200;

/// Minimum of the quasi-convex ratio `r(t) = (Φ(x+tv) − Φ(x) + ε)/t` over `t > 0`.
#[derive(Debug, Clone)]
pub struct RatioMin {
    pub value: ExtReal,
    /// Minimising `t` found by the search.
    pub t_star: f64,
    /// Endpoints of the (numerical) minimiser interval.
    pub t_lo: f64,
    pub t_hi: f64,
    /// The infimum is approached as `t → +∞`.
    pub at_infinity: bool,
}

/// Golden-section minimisation of `h` over `[a, b]`; `h` must be unimodal there.
pub fn golden(h: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut hc = h(c);
    let mut hd = h(d);
    for _ in 0..iters {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - phi * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + phi * (b - a);
            hd = h(d);
        }
    }
    if hc <= hd {
        (c, hc)
    } else {
        (d, hd)
    }
}

/// Minimum of a unimodal `h` over `[lo, hi]` by a uniform grid plus golden refinement.
/// Infinite values are allowed; NaN propagates as NaN.
pub fn minimize_convex_log(h: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize) -> f64 {
    let pts: Vec<f64> = (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|p| h(*p)).collect();
    if vals.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    let (k, best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    if !best.is_finite() {
        return best;
    }
    let a = pts[k.saturating_sub(1)];
    let b = pts[(k + 1).min(grid - 1)];
    let (_, hv) = golden(&h, a, b, GOLDEN_ITERS);
    best.min(hv)
}

/// Minimises the difference-quotient ratio along `v` at `x`. `Φ(x)` must be finite.
pub fn ratio_minimize(f: &ConvexFn, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> Result<RatioMin> {
    let fx = f.value_at(x)?;
    let phi = |t: f64| -> f64 { f.eval(&(x + v * t)).map(|e| e.to_f64()).unwrap_or(f64::INFINITY) - fx };
    let ratio = |t: f64| (phi(t) + eps) / t;

    if !phi(T_MIN).is_finite() {
        return Ok(RatioMin { value: ExtReal::PosInf, t_star: T_MIN, t_lo: T_MIN, t_hi: T_MIN, at_infinity: false });
    }
    // Largest t keeping x + tv in the (closed) domain.
    let mut t_end = T_MAX;
    if !phi(T_MAX).is_finite() {
        let (mut lo, mut hi) = (T_MIN.ln(), T_MAX.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid.exp()).is_finite() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t_end = lo.exp();
    }
    let (la, lb) = (T_MIN.ln(), t_end.ln());
    let grid: Vec<f64> = (0..GRID).map(|k| la + (lb - la) * k as f64 / (GRID - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|l| ratio(l.exp())).collect();
    let (k, grid_best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
    let a = grid[k.saturating_sub(1)];
    let b = grid[(k + 1).min(GRID - 1)];
    let (l_star, v_star) = golden(|l| ratio(l.exp()), a, b, GOLDEN_ITERS);
    let (mut value, mut t_star) = if v_star <= grid_best { (v_star, l_star.exp()) } else { (grid_best, grid[k].exp()) };

    let mut at_infinity = false;
    if t_end == T_MAX && k + 1 >= GRID - 1 {
        if let ExtReal::Finite(rec) = recession_value(f, v)? {
            if rec <= value + 1e-12 * (1.0 + value.abs()) {
                at_infinity = true;
                value = value.min(rec);
                t_star = f64::INFINITY;
            }
        }
    }

    // Minimiser interval: where the ratio stays within a relative 1e-9 of the minimum.
    let flat = |t: f64| ratio(t) <= value + 1e-9 * (1.0 + value.abs());
    let (t_lo, t_hi) = if t_star.is_finite() {
        let mut lo_l = la;
        let mut hi_l = t_star.ln();
        if !flat(T_MIN) {
            for _ in 0..100 {
                let mid = 0.5 * (lo_l + hi_l);
                if flat(mid.exp()) {
                    hi_l = mid;
                } else {
                    lo_l = mid;
                }
            }
            lo_l = hi_l;
        }
        let mut up_l = t_star.ln();
        let mut top = lb;
        if flat(t_end) {
            up_l = top;
        } else {
            for _ in 0..100 {
                let mid = 0.5 * (up_l + top);
                if flat(mid.exp()) {
                    up_l = mid;
                } else {
                    top = mid;
                }
            }
        }
        (lo_l.exp(), up_l.exp())
    } else {
        (t_end, f64::INFINITY)
    };
    Ok(RatioMin { value: ExtReal::from_f64(value)?, t_star, t_lo, t_hi, at_infinity })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_on_parabola() {
        let (x, v) = golden(|x| (x - 0.3) * (x - 0.3) + 1.0, -2.0, 2.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_of_half_square() {
        // (t²/2 + 2)/t is minimised at t = 2 with value 2.
        let f = ConvexFn::half_sq_norm(1);
        let r = ratio_minimize(&f, &DVector::zeros(1), &DVector::from_element(1, 1.0), 2.0).unwrap();
        assert!((r.value.to_f64() - 2.0).abs() < 1e-10);
        assert!((r.t_star - 2.0).abs() < 1e-4);
    }
}
