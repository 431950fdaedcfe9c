//! The ratio-minimiser operator `S(ε) = {−1/t : t minimises (Φ(x̄+tv) − Φ(x̄) + ε)/t}`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convexfn::oned::{ratio_minimize, T_MAX, T_MIN};
use crate::convexfn::{eps_dir_derivative, ConvexFn};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;

const GRID: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioOperatorSample {
    pub eps: f64,
    /// Endpoints `[t_lo, t_hi]` of the minimiser interval (`+inf` for the `t → ∞` branch).
    pub t_values: Vec<ExtReal>,
    /// `[−1/t_lo, −1/t_hi]`; `-inf` when minimisers accumulate at `t = 0`, `0` for `t → ∞`.
    pub s_values: Vec<ExtReal>,
    /// `R(ε) = Φ'_ε(x̄; v)`.
    pub value: ExtReal,
    /// `|R(ε) − eps_dir_derivative|`.
    pub cross_check: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RatioOperatorSample {
    pub fn is_empty(&self) -> bool {
        self.s_values.is_empty()
    }
}

fn s_of(t: ExtReal) -> ExtReal {
    match t {
        ExtReal::PosInf => ExtReal::ZERO,
        ExtReal::Finite(t) if t <= 2.0 * T_MIN => ExtReal::NegInf,
        ExtReal::Finite(t) => ExtReal::Finite(-1.0 / t),
        ExtReal::NegInf => ExtReal::NegInf,
    }
}

/// Samples `S(ε)` at `(x̄, v)`. The minimiser set of the quasi-convex ratio is an
/// interval; its endpoints are located on a log grid and refined by bisection.
#[allow(non_snake_case)]
pub fn ratio_operator_S(f: &ConvexFn, xbar: &DVector<f64>, v: &DVector<f64>, eps: f64) -> Result<RatioOperatorSample> {
    if !(eps >= 0.0) {
        return Err(Error::Precondition("ε must be nonnegative".into()));
    }
    let fx = f.value_at(xbar)?;
    let rm = ratio_minimize(f, xbar, v, eps)?;
    let direct = eps_dir_derivative(f, xbar, v, eps)?;
    // The exact directional derivative wins; the grid ratio suffers cancellation as t ↓ 0
    // and leaks through the domain tolerance along escaping directions.
    let value = direct;
    let cross_check = match (rm.value, direct) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs(),
        (a, b) if a == b => 0.0,
        _ => f64::INFINITY,
    };
    let mut sample = RatioOperatorSample {
        eps,
        t_values: Vec::new(),
        s_values: Vec::new(),
        value,
        cross_check,
        diagnostic: None,
    };
    let val = match value {
        ExtReal::Finite(x) => x,
        _ => {
            sample.diagnostic = Some("directional ε-derivative is infinite".into());
            return Ok(sample);
        }
    };
    let ratio = |t: f64| -> f64 {
        let y = xbar + v * t;
        match f.eval(&y) {
            Ok(ExtReal::Finite(fy)) => (fy - fx + eps) / t,
            _ => f64::INFINITY,
        }
    };
    // Rounding in Φ(x̄ + tv) − Φ(x̄) is amplified by 1/t; anything looser widens the
    // reported interval around sharp minimisers.
    let flat = |t: f64| ratio(t) <= val + 1e-13 * (1.0 + val.abs()) + 1e-15 * (1.0 + fx.abs()) / t;
    let (la, lb) = (T_MIN.ln(), T_MAX.ln());
    let grid: Vec<f64> = (0..GRID).map(|k| la + (lb - la) * k as f64 / (GRID - 1) as f64).collect();
    let hits: Vec<usize> = (0..GRID).filter(|&k| flat(grid[k].exp())).collect();

    let (t_lo, t_hi) = match (hits.first(), hits.last()) {
        (Some(&first), Some(&last)) => {
            let lo = if first == 0 { T_MIN } else { bisect(&flat, grid[first - 1], grid[first], false).exp() };
            let hi = if last == GRID - 1 {
                f64::INFINITY
            } else {
                bisect(&flat, grid[last], grid[last + 1], true).exp()
            };
            (lo, hi)
        }
        _ if rm.at_infinity => (f64::INFINITY, f64::INFINITY),
        _ if rm.t_star.is_finite() && flat(rm.t_star) => (rm.t_star, rm.t_star),
        _ => (f64::NAN, f64::NAN),
    };
    if t_lo.is_nan() {
        sample.diagnostic = Some("no minimiser located".into());
        return Ok(sample);
    }
    if eps == 0.0 && t_lo <= 2.0 * T_MIN && t_hi < 1e-6 {
        sample.diagnostic = Some("minimising t diverges to 0; S(0) is empty".into());
        return Ok(sample);
    }
    let tl = ExtReal::from_f64(t_lo).unwrap_or(ExtReal::PosInf);
    let th = if t_hi.is_infinite() { ExtReal::PosInf } else { ExtReal::Finite(t_hi) };
    sample.t_values = vec![tl, th];
    sample.s_values = vec![s_of(tl), s_of(th)];
    Ok(sample)
}

/// Boundary of the flat set inside `[a, b]` (log scale). `keep_low` keeps the flat side
/// at `a`.
fn bisect(flat: &impl Fn(f64) -> bool, mut a: f64, mut b: f64, keep_low: bool) -> f64 {
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if flat(m.exp()) == keep_low {
            a = m;
        } else {
            b = m;
        }
    }
    if keep_low {
        a
    } else {
        b
    }
}
