use nalgebra::{DMatrix, DVector};

use super::sets::{ConvexSet, LpSet};
use crate::error::{check_dim, Result};
use crate::geometry::polyhedron::HPolyhedron;

/// A polyhedral convex cone, by generators or by homogeneous inequalities `Ax ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexCone {
    Generators { dim: usize, gens: Vec<DVector<f64>> },
    Inequalities(DMatrix<f64>),
}

impl ConvexCone {
    pub fn generated(dim: usize, gens: Vec<DVector<f64>>) -> Result<Self> {
        for g in &gens {
            check_dim(dim, g.len())?;
        }
        Ok(ConvexCone::Generators { dim, gens })
    }

    pub fn from_inequalities(a: DMatrix<f64>) -> Self {
        ConvexCone::Inequalities(a)
    }

    pub fn whole_space(dim: usize) -> Self {
        ConvexCone::Inequalities(DMatrix::zeros(0, dim))
    }

    pub fn zero(dim: usize) -> Self {
        ConvexCone::Generators { dim, gens: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexCone::Generators { dim, .. } => *dim,
            ConvexCone::Inequalities(a) => a.ncols(),
        }
    }

    pub fn to_set(&self) -> ConvexSet {
        match self {
            ConvexCone::Generators { dim, gens } => ConvexSet::Lp(LpSet::cone(*dim, gens)),
            ConvexCone::Inequalities(a) => {
                ConvexSet::from(HPolyhedron::new(a.clone(), DVector::zeros(a.nrows())).expect("valid cone"))
            }
        }
    }

    /// `{v : Aᵀ... }` membership with tolerance, via the set representation.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.to_set().membership(v, tol)?.is_inside())
    }
}

/// `K⁻ = {y : ⟨y, x⟩ ≤ 0 ∀x ∈ K}`. Generators turn into inequalities and vice versa, so
/// the bipolar `(K⁻)⁻ = K` holds representation-exactly.
pub fn dual_cone(k: &ConvexCone) -> ConvexCone {
    match k {
        ConvexCone::Generators { dim, gens } => {
            let a = DMatrix::from_fn(gens.len(), *dim, |i, j| gens[i][j]);
            ConvexCone::Inequalities(a)
        }
        ConvexCone::Inequalities(a) => ConvexCone::Generators {
            dim: a.ncols(),
            gens: (0..a.nrows()).map(|i| a.row(i).transpose()).collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compare::{compare_sets, Verdict};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn dual_of_half_line() {
        let k = ConvexCone::generated(1, vec![v(&[1.0])]).unwrap();
        let d = dual_cone(&k);
        assert!(d.contains(&v(&[-3.0]), 1e-12).unwrap());
        assert!(!d.contains(&v(&[0.5]), 1e-12).unwrap());
    }

    #[test]
    fn dual_of_whole_space_is_origin() {
        let d = dual_cone(&ConvexCone::whole_space(2));
        let r = compare_sets(&d.to_set(), &ConvexCone::zero(2).to_set(), 10.0, 16, 1e-12).unwrap();
        assert_eq!(r.verdict, Verdict::Equal);
    }
}
