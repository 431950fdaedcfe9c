//! δ-normal sets to sublevel sets: membership oracles, scaling scans, certificates and
//! the set identities built on them.

mod cor1;
mod levels;
mod ratio;
mod tmain;

pub use cor1::{cor1_membership, corolario_decompose, mu_grid, Cor1Result, Corolario, HorizonStep, MU_HI, MU_LO};
pub(crate) use cor1::scan_scale;
pub use levels::{
    empty_level_normal, galb_verify, increasing_lemma_verify, recession_identity_verify, LevelProbe,
};
pub use ratio::{ratio_operator_S, RatioOperatorSample};
pub use tmain::{check_tmain_certificate, tmain_certificate_search, NormalSetQuery, TmainCertificate, TmainSearch};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convexfn::{infimum, recession_cone_of_sublevel, sublevel_set, Canonical, ConvexFn};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::lp::{RowKind, VarKind};
use crate::geometry::{dual_cone, ConvexSet, HPolyhedron, LpSet, Membership};
use crate::subdiff::{Descriptor, EpsSubdiffSet};

/// Result of a δ-normal membership query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMembership {
    pub membership: Membership,
    /// `sup_{y ∈ C} ⟨g, y − x̄⟩`.
    pub sup_value: ExtReal,
}

/// `g ∈ N^δ_C(x̄)` iff `sup_{y∈C} ⟨g, y − x̄⟩ ≤ δ + tol`.
pub fn delta_normal_membership(
    c: &ConvexSet,
    xbar: &DVector<f64>,
    delta: f64,
    g: &DVector<f64>,
    tol: f64,
) -> Result<NormalMembership> {
    delta_normal_membership_union(std::slice::from_ref(c), xbar, delta, g, tol)
}

/// Membership in the δ-normal set of a union, which is the intersection of the
/// individual δ-normal sets.
pub fn delta_normal_membership_union(
    sets: &[ConvexSet],
    xbar: &DVector<f64>,
    delta: f64,
    g: &DVector<f64>,
    tol: f64,
) -> Result<NormalMembership> {
    if !(delta >= 0.0) {
        return Err(Error::Precondition("δ must be nonnegative".into()));
    }
    let mut sup = ExtReal::NegInf;
    for c in sets {
        check_dim(c.dim(), xbar.len())?;
        sup = sup.max(c.support(g)?.add_finite(-g.dot(xbar)));
    }
    let membership = match sup {
        ExtReal::Finite(s) => Membership::classify(s - delta, tol),
        ExtReal::NegInf => Membership::Inside,
        ExtReal::PosInf => Membership::Outside,
    };
    Ok(NormalMembership { membership, sup_value: sup })
}

/// `N^δ_C(x̄) = {Mᵀw : w ≥ 0, ⟨w, m − Mx̄⟩ ≤ δ}` for a nonempty `C = {y : My ≤ m}`.
pub fn delta_normal_set(c: &HPolyhedron, xbar: &DVector<f64>, delta: f64) -> Result<LpSet> {
    check_dim(c.dim(), xbar.len())?;
    let m = c.num_rows();
    let map = c.a().transpose();
    let mut s = LpSet::new(map, vec![VarKind::NonNeg; m])?;
    let slack = c.slack(xbar);
    s.add_row(slack.iter().copied().collect(), RowKind::Le, delta)?;
    Ok(s)
}

/// The pieces of `([Φ ≤ λ] ∩ dom Φ) ∪ (x̄ + [Φ ≤ Φ(x̄)]_∞)`. The recession part is only
/// materialised when `Φ(x̄) > λ`; otherwise it lies inside the sublevel set.
pub fn target_sets(f: &ConvexFn, xbar: &DVector<f64>, lambda: ExtReal) -> Result<Vec<ConvexSet>> {
    let fx = f.value_at(xbar)?;
    let mut out = vec![sublevel_set(f, lambda)?];
    if ExtReal::Finite(fx) > lambda {
        let k = recession_cone_of_sublevel(f, xbar)?;
        let set = match k.to_set() {
            ConvexSet::Lp(s) => ConvexSet::Lp(s.translate(xbar)?),
            other => other,
        };
        out.push(set);
    }
    Ok(out)
}

/// Closed conic hull `cl ℝ₊ ∂_εΦ(x̄)`. Polyhedral descriptors are exact; an ellipsoid
/// containing the origin in its interior gives the whole space, otherwise its cone is
/// generated by a dense boundary sample.
pub fn conic_hull(s: &EpsSubdiffSet) -> Result<ConvexSet> {
    let n = s.dim();
    match &s.descriptor {
        Descriptor::Empty => Ok(ConvexSet::Empty(n)),
        Descriptor::Polytope { vrep, .. } => {
            let mut gens = vrep.points.clone();
            gens.extend(vrep.rays.iter().cloned());
            Ok(ConvexSet::Lp(LpSet::cone(n, &gens)))
        }
        Descriptor::Ellipsoid(e) => {
            let zero = DVector::zeros(n);
            let full_rank = e.shape.clone().symmetric_eigen().eigenvalues.iter().all(|l| *l > 1e-12);
            if full_rank && e.rad2 > 0.0 {
                let inv = e.shape.clone().try_inverse().ok_or_else(|| Error::Solver {
                    message: "ellipsoid shape not invertible".into(),
                    residual: f64::INFINITY,
                })?;
                let d = &zero - &e.center;
                let level = d.dot(&(&inv * &d));
                if level < e.rad2 * (1.0 - 1e-9) {
                    return Ok(ConvexSet::from(HPolyhedron::universe(n)));
                }
            }
            let sample = e.sample_vrep(4096);
            Ok(ConvexSet::Lp(LpSet::cone(n, &sample.points)))
        }
        Descriptor::Oracle => Err(Error::Unsupported("conic hull of an oracle ε-subdifferential".into())),
    }
}

/// The polar `K⁻` of the recession cone of `[Φ ≤ Φ(x̄)]`, i.e. `N_{x̄+K}(x̄)`.
pub fn recession_polar(f: &ConvexFn, xbar: &DVector<f64>) -> Result<ConvexSet> {
    Ok(dual_cone(&recession_cone_of_sublevel(f, xbar)?).to_set())
}

/// Slater's condition at `λ`: some `x₀` with `Φ(x₀) < λ` (margin `1e-9`).
pub fn slater_check(f: &ConvexFn, lambda: f64) -> Result<bool> {
    match f.canonical() {
        Canonical::Poly(p) => Ok(p.slater_margin(lambda)? > 1e-9),
        Canonical::Quad(_) => Ok(infimum(f)? < ExtReal::Finite(lambda - 1e-9)),
        Canonical::Mixed => Err(Error::Unsupported("Slater check on a mixed structure".into())),
    }
}

/// `[Φ ≤ λ] = ∅`.
pub fn level_is_empty(f: &ConvexFn, lambda: f64) -> Result<bool> {
    match f.canonical() {
        Canonical::Poly(p) => p.sublevel(ExtReal::Finite(lambda)).is_empty(),
        Canonical::Quad(_) => Ok(infimum(f)? > ExtReal::Finite(lambda)),
        Canonical::Mixed => Err(Error::Unsupported("sublevel emptiness of a mixed structure".into())),
    }
}
