//! Convex sets queried through support functions and membership tests.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, LpOutcome, RowKind, VarKind};
use super::polyhedron::HPolyhedron;
use super::qp;
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;

/// Outcome of a tolerance-aware membership test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Outside,
    /// Within the boundary band; excluded from pass/fail statistics.
    Band,
}

impl Membership {
    /// Classifies a violation measure `excess` (≤ 0 means satisfied exactly).
    /// Inside when `excess ≤ tol`, band up to `10·tol`, outside beyond.
    pub fn classify(excess: f64, tol: f64) -> Membership {
        if excess <= tol {
            Membership::Inside
        } else if excess <= 10.0 * tol {
            Membership::Band
        } else {
            Membership::Outside
        }
    }

    pub fn is_inside(self) -> bool {
        self == Membership::Inside
    }
}

/// Finitely generated set `conv(points) + cone(rays)`. No points means the empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct VRep {
    pub dim: usize,
    pub points: Vec<DVector<f64>>,
    pub rays: Vec<DVector<f64>>,
}

impl VRep {
    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim, v.len())?;
        if self.points.is_empty() {
            return Ok(ExtReal::NegInf);
        }
        let scale = 1.0 + v.norm();
        for r in &self.rays {
            if r.dot(v) > 1e-12 * scale * (1.0 + r.norm()) {
                return Ok(ExtReal::PosInf);
            }
        }
        let best = self.points.iter().map(|p| p.dot(v)).fold(f64::NEG_INFINITY, f64::max);
        Ok(ExtReal::Finite(best))
    }

    pub fn distance(&self, g: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, g.len())?;
        if self.points.is_empty() {
            return Ok(f64::INFINITY);
        }
        Ok(qp::project(&self.points, &self.rays, g).distance)
    }

    pub fn to_lp_set(&self) -> LpSet {
        LpSet::from_vrep(self)
    }
}

/// Linear image of a polyhedron: `{M w : w satisfies rows, w_j ≥ 0 for nonnegative j}`.
/// Every polyhedral object in the crate (H-rep, V-rep, ε-subdifferentials of polyhedral
/// functions, δ-normal sets, cones) is expressible in this form, so support values,
/// box truncations and membership are single LPs.
#[derive(Debug, Clone)]
pub struct LpSet {
    dim: usize,
    kinds: Vec<VarKind>,
    map: DMatrix<f64>,
    rows: Vec<(Vec<f64>, RowKind, f64)>,
}

impl LpSet {
    pub fn new(map: DMatrix<f64>, kinds: Vec<VarKind>) -> Result<Self> {
        check_dim(map.ncols(), kinds.len())?;
        Ok(LpSet { dim: map.nrows(), kinds, map, rows: Vec::new() })
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) -> Result<()> {
        check_dim(self.kinds.len(), coeffs.len())?;
        self.rows.push((coeffs, kind, rhs));
        Ok(())
    }

    pub fn from_hpoly(p: &HPolyhedron) -> LpSet {
        let n = p.dim();
        let mut s = LpSet { dim: n, kinds: vec![VarKind::Free; n], map: DMatrix::identity(n, n), rows: Vec::new() };
        for i in 0..p.num_rows() {
            s.rows.push((p.a().row(i).iter().copied().collect(), RowKind::Le, p.b()[i]));
        }
        s
    }

    pub fn from_vrep(v: &VRep) -> LpSet {
        let np = v.points.len();
        let nr = v.rays.len();
        let map = DMatrix::from_fn(v.dim, np + nr, |i, j| {
            if j < np {
                v.points[j][i]
            } else {
                v.rays[j - np][i]
            }
        });
        let mut s = LpSet { dim: v.dim, kinds: vec![VarKind::NonNeg; np + nr], map, rows: Vec::new() };
        let mut sum = vec![0.0; np + nr];
        for w in sum.iter_mut().take(np) {
            *w = 1.0;
        }
        s.rows.push((sum, RowKind::Eq, 1.0));
        s
    }

    /// The closed convex cone generated by the given vectors (`{0}` when empty).
    pub fn cone(dim: usize, gens: &[DVector<f64>]) -> LpSet {
        let v = VRep { dim, points: vec![DVector::zeros(dim)], rays: gens.to_vec() };
        LpSet::from_vrep(&v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_lifted(&self) -> usize {
        self.kinds.len()
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    fn base_lp(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.kinds.len());
        for (j, k) in self.kinds.iter().enumerate() {
            if *k == VarKind::NonNeg {
                lp.nonneg(j);
            }
        }
        for (row, kind, rhs) in &self.rows {
            lp.add_row(row.clone(), *kind, *rhs);
        }
        lp
    }

    fn lifted_objective(&self, v: &DVector<f64>) -> Vec<f64> {
        (self.map.transpose() * v).iter().copied().collect()
    }

    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim, v.len())?;
        let mut lp = self.base_lp();
        lp.maximize(&self.lifted_objective(v));
        Ok(outcome_to_ext(&lp.solve()?))
    }

    /// Maximiser of `⟨v, ·⟩` over the set, in ambient coordinates.
    pub fn argmax(&self, v: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        check_dim(self.dim, v.len())?;
        let mut lp = self.base_lp();
        lp.maximize(&self.lifted_objective(v));
        Ok(lp.solve()?.point().map(|w| &self.map * w))
    }

    /// Support of the intersection with the box `[−R, R]ⁿ`.
    pub fn truncated_support(&self, v: &DVector<f64>, radius: f64) -> Result<ExtReal> {
        check_dim(self.dim, v.len())?;
        let mut lp = self.base_lp();
        for i in 0..self.dim {
            let row: Vec<f64> = self.map.row(i).iter().copied().collect();
            lp.le(row.clone(), radius);
            lp.ge(row, -radius);
        }
        lp.maximize(&self.lifted_objective(v));
        Ok(outcome_to_ext(&lp.solve()?))
    }

    /// Maximiser of `⟨v, ·⟩` over `S ∩ [−R, R]ⁿ` (a vertex for generic `v`).
    pub fn truncated_argmax(&self, v: &DVector<f64>, radius: f64) -> Result<Option<DVector<f64>>> {
        check_dim(self.dim, v.len())?;
        let mut lp = self.base_lp();
        for i in 0..self.dim {
            let row: Vec<f64> = self.map.row(i).iter().copied().collect();
            lp.le(row.clone(), radius);
            lp.ge(row, -radius);
        }
        lp.maximize(&self.lifted_objective(v));
        Ok(lp.solve()?.point().map(|w| &self.map * w))
    }

    /// Vertices of `S ∩ [−R, R]ⁿ` exposed by the given directions, deduplicated.
    pub fn truncated_vertices(&self, dirs: &[DVector<f64>], radius: f64) -> Result<Vec<DVector<f64>>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for d in dirs {
            if let Some(p) = self.truncated_argmax(d, radius)? {
                if out.iter().all(|q| (q - &p).amax() > 1e-7 * (1.0 + radius)) {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }

    /// `min ‖M w − g‖_∞` over the set (`+∞` when empty).
    pub fn distance_inf(&self, g: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, g.len())?;
        let p = self.kinds.len();
        let mut lp = LinearProgram::new(p + 1);
        for (j, k) in self.kinds.iter().enumerate() {
            if *k == VarKind::NonNeg {
                lp.nonneg(j);
            }
        }
        lp.nonneg(p);
        for (row, kind, rhs) in &self.rows {
            let mut r = row.clone();
            r.push(0.0);
            lp.add_row(r, *kind, *rhs);
        }
        for i in 0..self.dim {
            let mut r: Vec<f64> = self.map.row(i).iter().copied().collect();
            r.push(-1.0);
            lp.le(r.clone(), g[i]);
            let mut r2: Vec<f64> = r.iter().map(|v| -v).collect();
            r2[p] = -1.0;
            lp.le(r2, -g[i]);
        }
        let mut c = vec![0.0; p + 1];
        c[p] = 1.0;
        lp.minimize(&c);
        Ok(match lp.solve()? {
            LpOutcome::Optimal { value, .. } => value.max(0.0),
            _ => f64::INFINITY,
        })
    }

    /// `shift + S`, carried by one extra variable pinned to 1.
    pub fn translate(&self, shift: &DVector<f64>) -> Result<LpSet> {
        check_dim(self.dim, shift.len())?;
        let p = self.kinds.len();
        let map = DMatrix::from_fn(self.dim, p + 1, |i, j| if j < p { self.map[(i, j)] } else { shift[i] });
        let mut kinds = self.kinds.clone();
        kinds.push(VarKind::Free);
        let mut rows: Vec<_> = self
            .rows
            .iter()
            .map(|(r, k, b)| {
                let mut c = r.clone();
                c.push(0.0);
                (c, *k, *b)
            })
            .collect();
        let mut pin = vec![0.0; p + 1];
        pin[p] = 1.0;
        rows.push((pin, RowKind::Eq, 1.0));
        Ok(LpSet { dim: self.dim, kinds, map, rows })
    }

    /// `S₁ ∩ S₂` as one lifted set over the concatenated variables.
    pub fn intersect(&self, other: &LpSet) -> Result<LpSet> {
        check_dim(self.dim, other.dim)?;
        let (p, q) = (self.kinds.len(), other.kinds.len());
        let map = DMatrix::from_fn(self.dim, p + q, |i, j| if j < p { self.map[(i, j)] } else { 0.0 });
        let mut kinds = self.kinds.clone();
        kinds.extend(other.kinds.iter().copied());
        let mut rows = Vec::with_capacity(self.rows.len() + other.rows.len() + self.dim);
        for (r, k, b) in &self.rows {
            let mut c = r.clone();
            c.resize(p + q, 0.0);
            rows.push((c, *k, *b));
        }
        for (r, k, b) in &other.rows {
            let mut c = vec![0.0; p];
            c.extend(r.iter().copied());
            rows.push((c, *k, *b));
        }
        for i in 0..self.dim {
            let mut c: Vec<f64> = self.map.row(i).iter().copied().collect();
            c.extend(other.map.row(i).iter().map(|v| -v));
            rows.push((c, RowKind::Eq, 0.0));
        }
        Ok(LpSet { dim: self.dim, kinds, map, rows })
    }

    /// `argmin ‖M w − g‖₁` over the set with its distance; `None` when empty.
    pub fn nearest_l1(&self, g: &DVector<f64>) -> Result<Option<(f64, DVector<f64>)>> {
        check_dim(self.dim, g.len())?;
        let p = self.kinds.len();
        let n = self.dim;
        let mut lp = LinearProgram::new(p + n);
        for (j, k) in self.kinds.iter().enumerate() {
            if *k == VarKind::NonNeg {
                lp.nonneg(j);
            }
        }
        lp.nonneg_range(p..p + n);
        for (row, kind, rhs) in &self.rows {
            let mut r = row.clone();
            r.resize(p + n, 0.0);
            lp.add_row(r, *kind, *rhs);
        }
        for i in 0..n {
            let mut r: Vec<f64> = self.map.row(i).iter().copied().collect();
            r.resize(p + n, 0.0);
            r[p + i] = -1.0;
            lp.le(r.clone(), g[i]);
            let mut r2: Vec<f64> = r.iter().map(|v| -v).collect();
            r2[p + i] = -1.0;
            lp.le(r2, -g[i]);
        }
        let mut c = vec![0.0; p + n];
        for v in c.iter_mut().skip(p) {
            *v = 1.0;
        }
        lp.minimize(&c);
        Ok(match lp.solve()? {
            LpOutcome::Optimal { value, point } => {
                let w = point.rows(0, p).into_owned();
                Some((value.max(0.0), &self.map * w))
            }
            _ => None,
        })
    }

    pub fn is_empty(&self) -> Result<bool> {
        let mut lp = self.base_lp();
        lp.maximize(&vec![0.0; self.kinds.len()]);
        Ok(matches!(lp.solve()?, LpOutcome::Infeasible))
    }
}

pub(crate) fn outcome_to_ext(o: &LpOutcome) -> ExtReal {
    match o {
        LpOutcome::Optimal { value, .. } => ExtReal::Finite(*value),
        LpOutcome::Unbounded => ExtReal::PosInf,
        LpOutcome::Infeasible => ExtReal::NegInf,
    }
}

/// `{center + Q z : zᵀ Q z ≤ rad2}` for a positive semidefinite `Q`. Its support function
/// is `⟨center, v⟩ + √(rad2 · vᵀQv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub rad2: f64,
}

impl Ellipsoid {
    pub fn ball(center: DVector<f64>, radius: f64) -> Ellipsoid {
        let n = center.len();
        Ellipsoid { center, shape: DMatrix::identity(n, n), rad2: radius * radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim(), v.len())?;
        let q = v.dot(&(&self.shape * v)).max(0.0);
        Ok(ExtReal::Finite(self.center.dot(v) + (self.rad2 * q).sqrt()))
    }

    /// Half-width of the set along coordinate `i`.
    fn half_width(&self, i: usize) -> f64 {
        (self.rad2 * self.shape[(i, i)].max(0.0)).sqrt()
    }

    pub fn inside_box(&self, radius: f64) -> bool {
        (0..self.dim()).all(|i| self.center[i].abs() + self.half_width(i) <= radius)
    }

    /// `(semi-axis lengths², directions)` of the nondegenerate part plus the eigenvectors
    /// of the kernel.
    fn axes(&self) -> (Vec<(f64, DVector<f64>)>, Vec<DVector<f64>>) {
        let eig = self.shape.clone().symmetric_eigen();
        let thr = 1e-12 * eig.eigenvalues.amax().max(1.0);
        let mut range = Vec::new();
        let mut kernel = Vec::new();
        for k in 0..self.dim() {
            let col = eig.eigenvectors.column(k).into_owned();
            let l = eig.eigenvalues[k];
            if l > thr && self.rad2 > 0.0 {
                range.push((self.rad2 * l, col));
            } else {
                kernel.push(col);
            }
        }
        (range, kernel)
    }

    /// Euclidean distance via the secular equation of the projection problem.
    pub fn distance(&self, g: &DVector<f64>) -> Result<f64> {
        Ok((g - self.nearest(g)?).norm())
    }

    /// Euclidean projection of `g` onto the ellipsoid.
    pub fn nearest(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), g.len())?;
        let d = g - &self.center;
        let (range, _) = self.axes();
        let comps: Vec<(f64, f64)> = range.iter().map(|(a2, u)| (*a2, u.dot(&d))).collect();
        let level: f64 = comps.iter().map(|(a2, c)| c * c / a2).sum();
        let mut out = self.center.clone();
        if level <= 1.0 {
            for ((_, u), (_, c)) in range.iter().zip(&comps) {
                out += u * *c;
            }
            return Ok(out);
        }
        // Find τ > 0 with Σ a²c²/(a²+τ)² = 1.
        let phi = |tau: f64| -> f64 {
            comps.iter().map(|(a2, c)| a2 * c * c / ((a2 + tau) * (a2 + tau))).sum::<f64>() - 1.0
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        while phi(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        for ((_, u), (a2, c)) in range.iter().zip(&comps) {
            out += u * (c * a2 / (a2 + tau));
        }
        Ok(out)
    }

    /// Boundary sample of the ellipsoid as a V-representation.
    pub fn sample_vrep(&self, count: usize) -> VRep {
        let n = self.dim();
        let dirs = super::directions::probe_directions(n, count);
        let mut points = Vec::with_capacity(dirs.len());
        for u in &dirs {
            let q = u.dot(&(&self.shape * u));
            if q <= 0.0 {
                points.push(self.center.clone());
            } else {
                let s = (self.rad2 / q).sqrt();
                points.push(&self.center + &self.shape * u * s);
            }
        }
        if points.is_empty() {
            points.push(self.center.clone());
        }
        VRep { dim: n, points, rays: Vec::new() }
    }
}

type SupportFn = dyn Fn(&DVector<f64>) -> Result<ExtReal> + Send + Sync;
type MemberFn = dyn Fn(&DVector<f64>, f64) -> Result<Membership> + Send + Sync;

/// Set known only through callbacks. The support callback must already describe the
/// set truncated at `truncation_radius` whenever the set is unbounded.
#[derive(Clone)]
pub struct SetOracle {
    pub dim: usize,
    pub support: Arc<SupportFn>,
    pub member: Option<Arc<MemberFn>>,
    pub truncation_radius: f64,
}

impl fmt::Debug for SetOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetOracle")
            .field("dim", &self.dim)
            .field("truncation_radius", &self.truncation_radius)
            .finish_non_exhaustive()
    }
}

/// The set kinds accepted by the comparison machinery.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    Empty(usize),
    Lp(LpSet),
    VRep(VRep),
    Ellipsoid(Ellipsoid),
    Oracle(SetOracle),
}

impl From<HPolyhedron> for ConvexSet {
    fn from(p: HPolyhedron) -> Self {
        ConvexSet::Lp(LpSet::from_hpoly(&p))
    }
}

impl From<VRep> for ConvexSet {
    fn from(v: VRep) -> Self {
        ConvexSet::VRep(v)
    }
}

impl From<LpSet> for ConvexSet {
    fn from(s: LpSet) -> Self {
        ConvexSet::Lp(s)
    }
}

impl ConvexSet {
    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Empty(n) => *n,
            ConvexSet::Lp(s) => s.dim(),
            ConvexSet::VRep(v) => v.dim,
            ConvexSet::Ellipsoid(e) => e.dim(),
            ConvexSet::Oracle(o) => o.dim,
        }
    }

    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim(), v.len())?;
        let s = match self {
            ConvexSet::Empty(_) => ExtReal::NegInf,
            ConvexSet::Lp(s) => s.support(v)?,
            ConvexSet::VRep(r) => r.support(v)?,
            ConvexSet::Ellipsoid(e) => e.support(v)?,
            ConvexSet::Oracle(o) => (o.support)(v)?,
        };
        Ok(s)
    }

    /// Support of `S ∩ [−R, R]ⁿ`. Exact for LP-representable sets and for ellipsoids
    /// contained in the box; an ellipsoid that leaves the box is replaced by a dense
    /// inscribed boundary sample. Oracles are expected to be pre-truncated.
    pub fn truncated_support(&self, v: &DVector<f64>, radius: f64) -> Result<ExtReal> {
        check_dim(self.dim(), v.len())?;
        match self {
            ConvexSet::Empty(_) => Ok(ExtReal::NegInf),
            ConvexSet::Lp(s) => s.truncated_support(v, radius),
            ConvexSet::VRep(r) => {
                let inside = r.rays.is_empty()
                    && r.points.iter().all(|p| p.amax() <= radius);
                if inside {
                    r.support(v)
                } else {
                    r.to_lp_set().truncated_support(v, radius)
                }
            }
            ConvexSet::Ellipsoid(e) => {
                if e.inside_box(radius) {
                    e.support(v)
                } else {
                    e.sample_vrep(4096).to_lp_set().truncated_support(v, radius)
                }
            }
            ConvexSet::Oracle(o) => {
                let s = (o.support)(v)?;
                if let ExtReal::Finite(x) = s {
                    if x.is_nan() {
                        return Err(Error::Oracle("support oracle returned NaN".into()));
                    }
                }
                Ok(s)
            }
        }
    }

    /// Membership at tolerance `tol`, measured by the ∞-norm distance for polyhedral sets
    /// and the Euclidean distance for ellipsoids.
    pub fn membership(&self, g: &DVector<f64>, tol: f64) -> Result<Membership> {
        check_dim(self.dim(), g.len())?;
        match self {
            ConvexSet::Empty(_) => Ok(Membership::Outside),
            ConvexSet::Lp(s) => Ok(Membership::classify(s.distance_inf(g)?, tol)),
            ConvexSet::VRep(r) => Ok(Membership::classify(r.distance(g)?, tol)),
            ConvexSet::Ellipsoid(e) => Ok(Membership::classify(e.distance(g)?, tol)),
            ConvexSet::Oracle(o) => match &o.member {
                Some(m) => m(g, tol),
                None => Err(Error::Unsupported("oracle without membership callback".into())),
            },
        }
    }
}
