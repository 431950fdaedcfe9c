//! Polyhedra, cones, linear programming and support-function set comparison.

pub mod compare;
pub mod cone;
pub mod directions;
pub mod lp;
pub mod polyhedron;
pub mod qp;
pub mod sets;

pub use compare::{compare_on, compare_sets, SupportProbeResult, Verdict};
pub use cone::{dual_cone, ConvexCone};
pub use lp::{solve_lp, LinearProgram, LpOutcome};
pub use polyhedron::HPolyhedron;
pub use sets::{ConvexSet, Ellipsoid, LpSet, Membership, SetOracle, VRep};

use nalgebra::DVector;

/// `sup{⟨v,x⟩ : x ∈ P}` as an extended real.
pub fn support_of_polyhedron(p: &HPolyhedron, v: &DVector<f64>) -> crate::Result<crate::ExtReal> {
    p.support(v)
}
