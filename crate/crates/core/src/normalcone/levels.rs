//! Set identities around sublevel sets: exterior base points, empty levels, the
//! level-perturbation lemma and the recession-cone identity.

use nalgebra::DVector;

use super::{conic_hull, delta_normal_set, level_is_empty, recession_polar};
use crate::convexfn::{sublevel_poly, Canonical, ConvexFn};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::directions::probe_directions;
use crate::geometry::{dual_cone, ConvexCone, ConvexSet, LpSet};
use crate::report::{support_comparison, VerificationReport};
use crate::subdiff::eps_subdiff;

/// Probe budget shared by the set-identity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelProbe {
    pub n_dirs: usize,
    pub radius: f64,
    pub tol: f64,
}

impl Default for LevelProbe {
    fn default() -> Self {
        LevelProbe { n_dirs: 32, radius: 10.0, tol: 1e-3 }
    }
}

fn compare(theorem: &str, lhs: &ConvexSet, rhs: &ConvexSet, p: &LevelProbe) -> Result<VerificationReport> {
    if p.n_dirs < 8 || !(p.radius > 0.0) {
        return Err(Error::Precondition("need ≥ 8 directions and a positive radius".into()));
    }
    let dirs = probe_directions(lhs.dim(), p.n_dirs);
    let mut rep = support_comparison(
        theorem,
        &dirs,
        |v| lhs.truncated_support(v, p.radius),
        |v| rhs.truncated_support(v, p.radius),
        p.tol,
    )?;
    rep.note(format!("supports truncated to the box of radius {}", p.radius));
    Ok(rep)
}

/// `[Φ ≤ λ] = ∅`: `N_{x̄+[Φ≤Φ(x̄)]_∞}(x̄) = cl ℝ₊∂_εΦ(x̄)` for `ε ≥ Φ(x̄) − λ`.
pub fn empty_level_normal(f: &ConvexFn, xbar: &DVector<f64>, lambda: f64, eps: f64, p: &LevelProbe) -> Result<VerificationReport> {
    let fx = f.value_at(xbar)?;
    if !level_is_empty(f, lambda)? {
        return Err(Error::Precondition(format!("[Φ ≤ {lambda}] is not empty")));
    }
    if eps < fx - lambda {
        return Err(Error::Precondition(format!("ε = {eps} is below Φ(x̄) − λ = {}", fx - lambda)));
    }
    let lhs = recession_polar(f, xbar)?;
    let rhs = conic_hull(&eps_subdiff(f, xbar, eps)?)?;
    compare("biz", &lhs, &rhs, p)
}

fn lp_part(s: ConvexSet) -> Result<LpSet> {
    match s {
        ConvexSet::Lp(l) => Ok(l),
        _ => Err(Error::Unsupported("expected a polyhedral set".into())),
    }
}

/// `[Φ ≤ λ] ≠ ∅`, `Φ(x̄) > λ`: `N_{[Φ≤λ] ∪ (x̄+[Φ≤Φ(x̄)]_∞)}(x̄) = cl ℝ₊∂_{Φ(x̄)−λ}Φ(x̄)`
/// (polyhedral Φ; the left side is the intersection of the two normal cones).
pub fn galb_verify(f: &ConvexFn, xbar: &DVector<f64>, lambda: f64, p: &LevelProbe) -> Result<VerificationReport> {
    let fx = f.value_at(xbar)?;
    let c = sublevel_poly(f, ExtReal::Finite(lambda))
        .ok_or_else(|| Error::Unsupported("exterior normal cone needs a polyhedral Φ".into()))?;
    if c.is_empty()? {
        return Err(Error::Precondition(format!("[Φ ≤ {lambda}] is empty")));
    }
    if !(fx > lambda) {
        return Err(Error::Precondition("x̄ must lie outside [Φ ≤ λ]".into()));
    }
    let lhs = delta_normal_set(&c, xbar, 0.0)?.intersect(&lp_part(recession_polar(f, xbar)?)?)?;
    let rhs = conic_hull(&eps_subdiff(f, xbar, fx - lambda)?)?;
    compare("galb", &ConvexSet::Lp(lhs), &rhs, p)
}

/// `N^δ_{[Φ≤λ]}(x̄) = ⋂_{α>δ} cl ⋃_{γ>0} N^α_{[Φ≤λ+γ]}(x̄)` for polyhedral Φ with
/// `Φ(x̄) ≤ λ`, on a grid of `(α, γ)`: the union is increasing as `γ ↓ 0` and the
/// intersection decreasing as `α ↓ δ`.
pub fn increasing_lemma_verify(
    f: &ConvexFn,
    xbar: &DVector<f64>,
    lambda: f64,
    delta: f64,
    p: &LevelProbe,
) -> Result<VerificationReport> {
    let fx = f.value_at(xbar)?;
    if !(fx <= lambda) {
        return Err(Error::Precondition("need Φ(x̄) ≤ λ".into()));
    }
    let Canonical::Poly(poly) = f.canonical() else {
        return Err(Error::Unsupported("level-perturbation check needs a polyhedral Φ".into()));
    };
    let lhs = delta_normal_set(&poly.sublevel(ExtReal::Finite(lambda)), xbar, delta)?;
    let alphas: Vec<f64> = (2..=6).map(|j| delta + 10f64.powi(-j)).collect();
    let gammas: Vec<f64> = (1..=8).map(|j| 10f64.powi(-j)).collect();
    let mut rhs = Vec::new();
    for a in &alphas {
        let mut row = Vec::new();
        for gm in &gammas {
            row.push(delta_normal_set(&poly.sublevel(ExtReal::Finite(lambda + gm)), xbar, *a)?);
        }
        rhs.push(row);
    }
    let dirs = probe_directions(f.dim(), p.n_dirs.max(8));
    let mut rep = support_comparison(
        "increasing",
        &dirs,
        |v| lhs.truncated_support(v, p.radius),
        |v| {
            let mut inter = ExtReal::PosInf;
            for row in &rhs {
                let mut union = ExtReal::NegInf;
                for s in row {
                    union = union.max(s.truncated_support(v, p.radius)?);
                }
                inter = inter.min(union);
            }
            Ok(inter)
        },
        p.tol,
    )?;
    rep.note(format!("α − δ ∈ [1e-6, 1e-2], γ ∈ [1e-8, 1e-1]; radius {}", p.radius));
    Ok(rep)
}

/// `[Φ ≤ Φ(x̄)]_∞ = (dom Φ*)⁻`: the recession cone of the sublevel polyhedron against the
/// polar of the cone generated by `dom Φ* = conv{a_i} + cone{domain normals}`.
pub fn recession_identity_verify(f: &ConvexFn, xbar: &DVector<f64>, n_dirs: usize, tol: f64) -> Result<VerificationReport> {
    let fx = f.value_at(xbar)?;
    let Canonical::Poly(poly) = f.canonical() else {
        return Err(Error::Unsupported("recession identity check needs a polyhedral Φ".into()));
    };
    let lhs = ConvexSet::from(poly.sublevel(ExtReal::Finite(fx)).recession());
    let mut gens = poly.slopes.clone();
    for r in 0..poly.dom.num_rows() {
        gens.push(poly.dom.row(r));
    }
    let rhs = dual_cone(&ConvexCone::generated(f.dim(), gens)?).to_set();
    let p = LevelProbe { n_dirs, radius: 1.0, tol };
    compare("in", &lhs, &rhs, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::dv;
    use nalgebra::DMatrix;

    #[test]
    fn empty_level_examples() {
        let p = LevelProbe { n_dirs: 16, radius: 5.0, tol: 1e-6 };
        let q = ConvexFn::quadratic(DMatrix::identity(1, 1), dv(&[0.0]), 1.0).unwrap();
        let r = empty_level_normal(&q, &dv(&[0.0]), 0.5, 0.5, &p).unwrap();
        assert!(r.passed(), "{}", r.summary());
        let a = ConvexFn::sum(vec![ConvexFn::abs(), ConvexFn::affine(dv(&[0.0]), 1.0).unwrap()]).unwrap();
        let r = empty_level_normal(&a, &dv(&[0.0]), 0.0, 1.0, &p).unwrap();
        assert!(r.passed(), "{}", r.summary());
        let h = ConvexFn::max_affine(vec![dv(&[0.0]), dv(&[1.0])], vec![1.0, 1.0]).unwrap();
        let r = empty_level_normal(&h, &dv(&[2.0]), 0.0, 3.0, &p).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert!(empty_level_normal(&a, &dv(&[0.0]), 2.0, 1.0, &p).is_err());
        assert!(empty_level_normal(&a, &dv(&[0.0]), 0.0, 0.5, &p).is_err());
    }

    #[test]
    fn galb_on_abs() {
        let p = LevelProbe { n_dirs: 16, radius: 5.0, tol: 1e-6 };
        let r = galb_verify(&ConvexFn::abs(), &dv(&[2.0]), 1.0, &p).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn increasing_lemma_on_abs() {
        let p = LevelProbe { n_dirs: 16, radius: 5.0, tol: 1e-3 };
        let r = increasing_lemma_verify(&ConvexFn::abs(), &dv(&[0.5]), 1.0, 0.25, &p).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn recession_identity() {
        let f = ConvexFn::max_affine(vec![dv(&[1.0, 0.0]), dv(&[0.0, 1.0])], vec![0.0, 0.0]).unwrap();
        let r = recession_identity_verify(&f, &dv(&[0.0, 0.0]), 16, 1e-9).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }
}
