//! ε-subdifferentials `∂_εΦ(x) = {g : Φ(x) + Φ*(g) ≤ ⟨g,x⟩ + ε}` as set objects.

use std::sync::Arc;

use nalgebra::DVector;

use crate::convexfn::{conjugate_eval, eps_dir_derivative, Canonical, ConvexFn};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::directions::probe_directions;
use crate::geometry::{ConvexSet, Ellipsoid, LpSet, Membership, SetOracle, VRep};

#[derive(Debug, Clone)]
pub enum Descriptor {
    /// `x ∉ dom Φ`.
    Empty,
    /// Polyhedral Φ: lifted LP description plus the vertex/ray list.
    Polytope { lp: LpSet, vrep: VRep },
    Ellipsoid(Ellipsoid),
    /// Mixed structures, known through `Φ'_ε(x; ·)`.
    Oracle,
}

#[derive(Debug, Clone)]
pub struct EpsSubdiffSet {
    pub f: ConvexFn,
    pub x: DVector<f64>,
    pub eps: f64,
    pub descriptor: Descriptor,
}

/// Default membership band: `1e-7 · (1 + |ε|)`.
pub fn default_band(eps: f64) -> f64 {
    1e-7 * (1.0 + eps.abs())
}

/// `Φ(x) + Φ*(g) − ⟨g, x⟩ ≥ 0`.
pub fn fenchel_gap(f: &ConvexFn, x: &DVector<f64>, g: &DVector<f64>) -> Result<ExtReal> {
    let fx = f.eval(x)?;
    let fs = conjugate_eval(f, g)?;
    Ok(fx.try_add(fs)?.add_finite(-g.dot(x)))
}

pub fn eps_subdiff(f: &ConvexFn, x: &DVector<f64>, eps: f64) -> Result<EpsSubdiffSet> {
    check_dim(f.dim(), x.len())?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Precondition("ε must be finite and nonnegative".into()));
    }
    let descriptor = if !f.eval(x)?.is_finite() {
        Descriptor::Empty
    } else {
        match f.canonical() {
            Canonical::Poly(p) => Descriptor::Polytope { lp: p.eps_subdiff_lp(x, eps), vrep: p.eps_subdiff_vrep(x, eps) },
            Canonical::Quad(q) => Descriptor::Ellipsoid(q.eps_subdiff(x, eps)),
            Canonical::Mixed => Descriptor::Oracle,
        }
    };
    Ok(EpsSubdiffSet { f: f.clone(), x: x.clone(), eps, descriptor })
}

impl EpsSubdiffSet {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.descriptor, Descriptor::Empty)
    }

    /// Fenchel-gap excess `Φ(x) + Φ*(g) − ⟨g,x⟩ − ε`, or the Euclidean distance for
    /// oracle descriptors (whose conjugate is not available).
    pub fn excess(&self, g: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), g.len())?;
        match &self.descriptor {
            Descriptor::Empty => Ok(f64::INFINITY),
            Descriptor::Oracle => self.distance(g),
            _ => Ok(fenchel_gap(&self.f, &self.x, g)?.to_f64() - self.eps),
        }
    }

    pub fn membership(&self, g: &DVector<f64>, tol: f64) -> Result<Membership> {
        Ok(Membership::classify(self.excess(g)?, tol))
    }

    /// `σ_{∂_εΦ(x)}(v)`: V-rep maxima in dimension ≤ 3, the lifted LP above, the closed
    /// form for ellipsoids and `Φ'_ε(x; v)` for oracles (the structural directional
    /// derivative when `ε = 0`).
    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim(), v.len())?;
        match &self.descriptor {
            Descriptor::Empty => Ok(ExtReal::NegInf),
            Descriptor::Polytope { lp, vrep } => {
                if self.dim() <= 3 {
                    vrep.support(v)
                } else {
                    lp.support(v)
                }
            }
            Descriptor::Ellipsoid(e) => e.support(v),
            Descriptor::Oracle => eps_dir_derivative(&self.f, &self.x, v, self.eps),
        }
    }

    /// Euclidean distance from `g` (`+∞` for the empty set).
    pub fn distance(&self, g: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), g.len())?;
        match &self.descriptor {
            Descriptor::Empty => Ok(f64::INFINITY),
            Descriptor::Polytope { vrep, .. } => vrep.distance(g),
            Descriptor::Ellipsoid(e) => e.distance(g),
            Descriptor::Oracle => oracle_distance(|u| self.support(u), g),
        }
    }

    /// Euclidean projection of `g` onto the set.
    pub fn nearest(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), g.len())?;
        match &self.descriptor {
            Descriptor::Empty => Err(Error::Domain("empty ε-subdifferential".into())),
            Descriptor::Polytope { vrep, .. } => Ok(crate::geometry::qp::project(&vrep.points, &vrep.rays, g).point),
            Descriptor::Ellipsoid(e) => e.nearest(g),
            Descriptor::Oracle => Err(Error::Unsupported("projection onto an oracle ε-subdifferential".into())),
        }
    }

    pub fn as_set(&self) -> ConvexSet {
        match &self.descriptor {
            Descriptor::Empty => ConvexSet::Empty(self.dim()),
            Descriptor::Polytope { lp, .. } => ConvexSet::Lp(lp.clone()),
            Descriptor::Ellipsoid(e) => ConvexSet::Ellipsoid(e.clone()),
            Descriptor::Oracle => {
                let me = self.clone();
                let me2 = self.clone();
                ConvexSet::Oracle(SetOracle {
                    dim: self.dim(),
                    support: Arc::new(move |v| me.support(v)),
                    member: Some(Arc::new(move |g, tol| me2.membership(g, tol))),
                    truncation_radius: f64::INFINITY,
                })
            }
        }
    }
}

/// `dist(g, S) = max_{‖u‖ ≤ 1} ⟨u, g⟩ − σ_S(u)`, maximised over a dense direction sample
/// followed by shrinking-step local search.
pub fn oracle_distance(support: impl Fn(&DVector<f64>) -> Result<ExtReal>, g: &DVector<f64>) -> Result<f64> {
    let n = g.len();
    let score = |u: &DVector<f64>| -> Result<f64> {
        let s = support(u)?;
        Ok(u.dot(g) - s.to_f64())
    };
    let mut best_u = DVector::zeros(n);
    let mut best = 0.0f64;
    for u in probe_directions(n, 256) {
        let s = score(&u)?;
        if s > best {
            best = s;
            best_u = u;
        }
    }
    if best <= 0.0 {
        return Ok(0.0);
    }
    let mut step = 0.1;
    let basis = probe_directions(n, 2 * n + 8);
    while step > 1e-9 {
        let mut improved = false;
        for d in &basis {
            let cand = &best_u + d * step;
            let cand = &cand / cand.norm();
            let s = score(&cand)?;
            if s > best {
                best = s;
                best_u = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best.max(0.0))
}
