use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::directions::probe_directions;
use super::sets::ConvexSet;
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Equal,
    LeftInRight,
    RightInLeft,
    Incomparable,
}

impl Verdict {
    pub fn mirrored(self) -> Verdict {
        match self {
            Verdict::LeftInRight => Verdict::RightInLeft,
            Verdict::RightInLeft => Verdict::LeftInRight,
            v => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportProbeResult {
    pub directions: Vec<Vec<f64>>,
    /// `σ₁(u) − σ₂(u)` per direction on the truncated sets.
    pub gap_per_direction: Vec<ExtReal>,
    pub max_gap: ExtReal,
    pub verdict: Verdict,
}

impl SupportProbeResult {
    pub fn max_gap_f64(&self) -> f64 {
        self.max_gap.to_f64()
    }
}

/// Signed difference of two extended reals, with `±∞ − ±∞ := 0` for equal infinities.
pub fn ext_gap(a: ExtReal, b: ExtReal) -> ExtReal {
    match (a, b) {
        (ExtReal::Finite(x), ExtReal::Finite(y)) => ExtReal::Finite(x - y),
        (x, y) if x == y => ExtReal::ZERO,
        (ExtReal::PosInf, _) | (_, ExtReal::NegInf) => ExtReal::PosInf,
        _ => ExtReal::NegInf,
    }
}

/// Compares `S1 ∩ [−R,R]ⁿ` with `S2 ∩ [−R,R]ⁿ` through their support functions on the
/// deterministic direction set of [`probe_directions`].
pub fn compare_sets(
    s1: &ConvexSet,
    s2: &ConvexSet,
    radius: f64,
    n_dirs: usize,
    tol: f64,
) -> Result<SupportProbeResult> {
    if !(radius > 0.0) {
        return Err(Error::Precondition("truncation radius must be positive".into()));
    }
    if n_dirs < 8 {
        return Err(Error::Precondition("at least 8 probe directions are required".into()));
    }
    check_dim(s1.dim(), s2.dim())?;
    let dirs = probe_directions(s1.dim(), n_dirs);
    compare_on(s1, s2, radius, &dirs, tol)
}

/// [`compare_sets`] on caller-chosen directions.
pub fn compare_on(
    s1: &ConvexSet,
    s2: &ConvexSet,
    radius: f64,
    dirs: &[DVector<f64>],
    tol: f64,
) -> Result<SupportProbeResult> {
    let gaps: Vec<ExtReal> = dirs
        .par_iter()
        .map(|u| -> Result<ExtReal> {
            let a = s1.truncated_support(u, radius)?;
            let b = s2.truncated_support(u, radius)?;
            Ok(ext_gap(a, b))
        })
        .collect::<Result<_>>()?;
    Ok(summarize(dirs, gaps, tol))
}

/// Builds a probe result from precomputed signed gaps.
pub fn summarize(dirs: &[DVector<f64>], gaps: Vec<ExtReal>, tol: f64) -> SupportProbeResult {
    let mut hi = ExtReal::NegInf;
    let mut lo = ExtReal::PosInf;
    let mut max_abs = ExtReal::ZERO;
    for g in &gaps {
        hi = hi.max(*g);
        lo = lo.min(*g);
        let a = match g {
            ExtReal::Finite(x) => ExtReal::Finite(x.abs()),
            _ => ExtReal::PosInf,
        };
        max_abs = max_abs.max(a);
    }
    let t = ExtReal::Finite(tol);
    let mt = ExtReal::Finite(-tol);
    let verdict = if gaps.is_empty() || (hi <= t && lo >= mt) {
        Verdict::Equal
    } else if hi <= t {
        Verdict::LeftInRight
    } else if lo >= mt {
        Verdict::RightInLeft
    } else {
        Verdict::Incomparable
    };
    SupportProbeResult {
        directions: dirs.iter().map(|d| d.iter().copied().collect()).collect(),
        gap_per_direction: gaps,
        max_gap: max_abs,
        verdict,
    }
}
