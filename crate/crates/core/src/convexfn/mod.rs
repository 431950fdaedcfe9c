//! Closed proper convex functions `ℝⁿ → ℝ ∪ {+∞}` with exactly evaluable structure.

mod json;
pub mod oned;
mod poly;
mod quad;

use nalgebra::{DMatrix, DVector};

pub use json::FnSpec;
pub use poly::PolyForm;
pub use quad::QuadForm;

use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::{ConvexCone, ConvexSet, HPolyhedron, SetOracle};

/// Tolerance for the positive-semidefiniteness check on quadratic terms.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "FnSpec", into = "FnSpec")]
pub enum ConvexFn {
    /// `x ↦ max_i ⟨a_i, x⟩ + b_i`.
    MaxAffine { slopes: Vec<DVector<f64>>, offsets: Vec<f64> },
    /// `x ↦ ½ xᵀQx + ⟨c, x⟩ + r` with `Q ⪰ 0`.
    Quadratic { q: DMatrix<f64>, c: DVector<f64>, r: f64 },
    /// Indicator of a nonempty polyhedron.
    IndicatorPoly(HPolyhedron),
    /// `μ f`; `μ = 0` denotes the indicator of `dom f`.
    Scale { mu: f64, inner: Box<ConvexFn> },
    Sum(Vec<ConvexFn>),
    FiniteMax(Vec<ConvexFn>),
}

/// Strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Input("simplex weights must be positive".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("simplex weights sum to {s}, not 1")));
        }
        Ok(SimplexWeights(w))
    }

    /// Weights on the closed simplex (zeros allowed), renormalised.
    pub fn closure(w: Vec<f64>) -> Result<Vec<f64>> {
        if w.is_empty() || w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Input("weights must be nonnegative".into()));
        }
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return Err(Error::Input("weights sum to zero".into()));
        }
        Ok(w.into_iter().map(|v| v / s).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Structural normal form used by the exact algorithms.
#[derive(Debug, Clone)]
pub enum Canonical {
    Poly(PolyForm),
    Quad(QuadForm),
    /// Mixes quadratic and polyhedral parts; handled by generic numeric routes.
    Mixed,
}

/// `f^∞(v) = max_i ⟨d_i, v⟩` on the cone `{v : Cv ≤ 0}`, `+∞` off it.
#[derive(Debug, Clone)]
pub struct RecessionForm {
    pub slopes: Vec<DVector<f64>>,
    pub cone: DMatrix<f64>,
}

impl ConvexFn {
    pub fn max_affine(slopes: Vec<DVector<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if slopes.is_empty() {
            return Err(Error::Input("max-affine function needs at least one piece".into()));
        }
        check_dim(slopes.len(), offsets.len())?;
        let n = slopes[0].len();
        if n == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        for s in &slopes {
            check_dim(n, s.len())?;
        }
        if slopes.iter().flat_map(|s| s.iter()).chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite max-affine data".into()));
        }
        Ok(ConvexFn::MaxAffine { slopes, offsets })
    }

    pub fn affine(a: DVector<f64>, b: f64) -> Result<Self> {
        Self::max_affine(vec![a], vec![b])
    }

    /// `|x|` on ℝ.
    pub fn abs() -> Self {
        Self::max_affine(vec![dv(&[1.0]), dv(&[-1.0])], vec![0.0, 0.0]).expect("valid")
    }

    pub fn quadratic(q: DMatrix<f64>, c: DVector<f64>, r: f64) -> Result<Self> {
        let n = c.len();
        if n == 0 || q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension { expected: n, got: q.nrows() });
        }
        if q.iter().chain(c.iter()).any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(Error::Input("non-finite quadratic data".into()));
        }
        let qs = (&q + q.transpose()) * 0.5;
        let asym = (&q - &qs).amax();
        if asym > 1e-12 * (1.0 + q.amax()) {
            return Err(Error::Input("quadratic term is not symmetric".into()));
        }
        let min_eig = qs.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::Input(format!("quadratic term not PSD (min eigenvalue {min_eig:e})")));
        }
        Ok(ConvexFn::Quadratic { q: qs, c, r })
    }

    /// `½‖x‖²` on ℝⁿ.
    pub fn half_sq_norm(n: usize) -> Self {
        Self::quadratic(DMatrix::identity(n, n), DVector::zeros(n), 0.0).expect("valid")
    }

    pub fn indicator(p: HPolyhedron) -> Result<Self> {
        if p.is_empty()? {
            return Err(Error::Input("indicator of an empty polyhedron is not proper".into()));
        }
        Ok(ConvexFn::IndicatorPoly(p))
    }

    pub fn scale(mu: f64, inner: ConvexFn) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Input("scale factor must be finite and nonnegative".into()));
        }
        Ok(ConvexFn::Scale { mu, inner: Box::new(inner) })
    }

    pub fn sum(terms: Vec<ConvexFn>) -> Result<Self> {
        Self::check_family(&terms)?;
        let f = ConvexFn::Sum(terms);
        if f.domain().is_empty()? {
            return Err(Error::Input("sum has an empty domain".into()));
        }
        Ok(f)
    }

    pub fn finite_max(branches: Vec<ConvexFn>) -> Result<Self> {
        Self::check_family(&branches)?;
        let f = ConvexFn::FiniteMax(branches);
        if f.domain().is_empty()? {
            return Err(Error::Input("maximum has an empty domain".into()));
        }
        Ok(f)
    }

    fn check_family(fs: &[ConvexFn]) -> Result<()> {
        let first = fs.first().ok_or_else(|| Error::Input("empty function family".into()))?;
        for f in fs {
            check_dim(first.dim(), f.dim())?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexFn::MaxAffine { slopes, .. } => slopes[0].len(),
            ConvexFn::Quadratic { c, .. } => c.len(),
            ConvexFn::IndicatorPoly(p) => p.dim(),
            ConvexFn::Scale { inner, .. } => inner.dim(),
            ConvexFn::Sum(t) | ConvexFn::FiniteMax(t) => t[0].dim(),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &DVector<f64>) -> ExtReal {
        match self {
            ConvexFn::MaxAffine { slopes, offsets } => ExtReal::Finite(
                slopes
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| a.dot(x) + b)
                    .fold(f64::NEG_INFINITY, f64::max),
            ),
            ConvexFn::Quadratic { q, c, r } => ExtReal::Finite(0.5 * x.dot(&(q * x)) + c.dot(x) + r),
            ConvexFn::IndicatorPoly(p) => {
                if p.contains(x, DOMAIN_TOL) {
                    ExtReal::ZERO
                } else {
                    ExtReal::PosInf
                }
            }
            ConvexFn::Scale { mu, inner } => {
                inner.eval_unchecked(x).scale_convex(*mu).expect("proper functions never reach -inf")
            }
            ConvexFn::Sum(ts) => ts.iter().fold(ExtReal::ZERO, |acc, t| {
                acc.try_add(t.eval_unchecked(x)).expect("proper functions never reach -inf")
            }),
            ConvexFn::FiniteMax(bs) => {
                bs.iter().fold(ExtReal::NegInf, |acc, b| acc.max(b.eval_unchecked(x)))
            }
        }
    }

    /// Finite value at `x`, or a domain error.
    pub fn value_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.eval(x)?
            .finite()
            .ok_or_else(|| Error::Domain(format!("point {:?} is outside dom f", x.as_slice())))
    }

    /// `dom f` as a polyhedron (every variant has a polyhedral domain).
    pub fn domain(&self) -> HPolyhedron {
        match self {
            ConvexFn::MaxAffine { .. } | ConvexFn::Quadratic { .. } => HPolyhedron::universe(self.dim()),
            ConvexFn::IndicatorPoly(p) => p.clone(),
            ConvexFn::Scale { inner, .. } => inner.domain(),
            ConvexFn::Sum(ts) | ConvexFn::FiniteMax(ts) => {
                let mut d = HPolyhedron::universe(self.dim());
                for t in ts {
                    d = d.intersect(&t.domain()).expect("dimensions checked");
                }
                d
            }
        }
    }

    pub fn canonical(&self) -> Canonical {
        match self {
            ConvexFn::MaxAffine { slopes, offsets } => Canonical::Poly(PolyForm::new(
                slopes.clone(),
                offsets.clone(),
                HPolyhedron::universe(self.dim()),
            )),
            ConvexFn::Quadratic { q, c, r } => Canonical::Quad(QuadForm::new(q.clone(), c.clone(), *r)),
            ConvexFn::IndicatorPoly(p) => Canonical::Poly(PolyForm::indicator(p.clone())),
            ConvexFn::Scale { mu, inner } => {
                if *mu == 0.0 {
                    return Canonical::Poly(PolyForm::indicator(inner.domain()));
                }
                match inner.canonical() {
                    Canonical::Poly(p) => Canonical::Poly(p.scaled(*mu)),
                    Canonical::Quad(q) => Canonical::Quad(q.scaled(*mu)),
                    Canonical::Mixed => Canonical::Mixed,
                }
            }
            ConvexFn::Sum(ts) => {
                let parts: Vec<Canonical> = ts.iter().map(|t| t.canonical()).collect();
                if parts.iter().all(|p| matches!(p, Canonical::Poly(_))) {
                    let mut it = parts.into_iter().map(|p| match p {
                        Canonical::Poly(p) => p,
                        _ => unreachable!(),
                    });
                    let first = it.next().unwrap();
                    Canonical::Poly(it.fold(first, |acc, p| acc.plus(&p)))
                } else if parts.iter().all(|p| matches!(p, Canonical::Quad(_))) {
                    let mut it = parts.into_iter().map(|p| match p {
                        Canonical::Quad(q) => q,
                        _ => unreachable!(),
                    });
                    let first = it.next().unwrap();
                    Canonical::Quad(it.fold(first, |acc, q| acc.plus(&q)))
                } else {
                    Canonical::Mixed
                }
            }
            ConvexFn::FiniteMax(bs) => {
                let mut acc: Option<PolyForm> = None;
                for b in bs {
                    match b.canonical() {
                        Canonical::Poly(p) => {
                            acc = Some(match acc {
                                None => p,
                                Some(a) => a.max_with(&p),
                            })
                        }
                        Canonical::Quad(q) if bs.len() == 1 => return Canonical::Quad(q),
                        _ => return Canonical::Mixed,
                    }
                }
                Canonical::Poly(acc.expect("nonempty family"))
            }
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        matches!(self.canonical(), Canonical::Poly(_))
    }

    /// `f^∞` as a polyhedral function on a polyhedral cone.
    pub fn recession_form(&self) -> RecessionForm {
        let n = self.dim();
        match self {
            ConvexFn::MaxAffine { slopes, .. } => RecessionForm { slopes: slopes.clone(), cone: DMatrix::zeros(0, n) },
            ConvexFn::Quadratic { q, c, .. } => {
                let cone = DMatrix::from_fn(2 * n, n, |i, j| if i < n { q[(i, j)] } else { -q[(i - n, j)] });
                RecessionForm { slopes: vec![c.clone()], cone }
            }
            ConvexFn::IndicatorPoly(p) => RecessionForm { slopes: vec![DVector::zeros(n)], cone: p.a().clone() },
            ConvexFn::Scale { mu, inner } => {
                if *mu == 0.0 {
                    RecessionForm { slopes: vec![DVector::zeros(n)], cone: inner.domain().a().clone() }
                } else {
                    let r = inner.recession_form();
                    RecessionForm { slopes: r.slopes.iter().map(|s| s * *mu).collect(), cone: r.cone }
                }
            }
            ConvexFn::Sum(ts) => {
                let mut acc = RecessionForm { slopes: vec![DVector::zeros(n)], cone: DMatrix::zeros(0, n) };
                for t in ts {
                    let r = t.recession_form();
                    let mut slopes = Vec::new();
                    for a in &acc.slopes {
                        for b in &r.slopes {
                            push_unique(&mut slopes, a + b);
                        }
                    }
                    acc = RecessionForm { slopes, cone: stack(&acc.cone, &r.cone) };
                }
                acc
            }
            ConvexFn::FiniteMax(bs) => {
                let mut slopes = Vec::new();
                let mut cone = DMatrix::zeros(0, n);
                for b in bs {
                    let r = b.recession_form();
                    for s in r.slopes {
                        push_unique(&mut slopes, s);
                    }
                    cone = stack(&cone, &r.cone);
                }
                RecessionForm { slopes, cone }
            }
        }
    }

    /// Structural directional derivative `f'(x; v)` (the `ε = 0` case).
    pub fn dir_derivative(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<ExtReal> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        let fx = self.value_at(x)?;
        Ok(match self {
            ConvexFn::MaxAffine { slopes, offsets } => {
                let tol = ACTIVE_TOL * (1.0 + fx.abs());
                ExtReal::Finite(
                    slopes
                        .iter()
                        .zip(offsets)
                        .filter(|(a, b)| fx - (a.dot(x) + *b) <= tol)
                        .map(|(a, _)| a.dot(v))
                        .fold(f64::NEG_INFINITY, f64::max),
                )
            }
            ConvexFn::Quadratic { q, c, .. } => ExtReal::Finite((q * x + c).dot(v)),
            ConvexFn::IndicatorPoly(p) => tangent_indicator(p, x, v),
            ConvexFn::Scale { mu, inner } => {
                if *mu == 0.0 {
                    tangent_indicator(&inner.domain(), x, v)
                } else {
                    inner.dir_derivative(x, v)?.try_mul_pos(*mu)?
                }
            }
            ConvexFn::Sum(ts) => {
                let mut acc = ExtReal::ZERO;
                for t in ts {
                    acc = acc.try_add(t.dir_derivative(x, v)?)?;
                }
                acc
            }
            ConvexFn::FiniteMax(bs) => {
                let tol = ACTIVE_TOL * (1.0 + fx.abs());
                let mut acc = ExtReal::NegInf;
                for b in bs {
                    let fb = b.value_at(x)?;
                    if fx - fb <= tol {
                        acc = acc.max(b.dir_derivative(x, v)?);
                    }
                }
                acc
            }
        })
    }
}

/// Feasibility tolerance for polyhedral domains.
pub const DOMAIN_TOL: f64 = 1e-9;
/// Relative tolerance deciding whether an affine piece or branch is active.
pub const ACTIVE_TOL: f64 = 1e-10;

fn tangent_indicator(p: &HPolyhedron, x: &DVector<f64>, v: &DVector<f64>) -> ExtReal {
    let slack = p.slack(x);
    let av = p.a() * v;
    let scale = 1.0 + x.amax();
    for i in 0..p.num_rows() {
        if slack[i] <= DOMAIN_TOL * scale && av[i] > 1e-12 * (1.0 + v.amax()) {
            return ExtReal::PosInf;
        }
    }
    ExtReal::ZERO
}

pub(crate) fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub(crate) fn push_unique(list: &mut Vec<DVector<f64>>, v: DVector<f64>) {
    if !list.iter().any(|w| (w - &v).amax() <= 1e-14 * (1.0 + v.amax())) {
        list.push(v);
    }
}

pub(crate) fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols().max(b.ncols());
    DMatrix::from_fn(a.nrows() + b.nrows(), n, |i, j| if i < a.nrows() { a[(i, j)] } else { b[(i - a.nrows(), j)] })
}

impl RecessionForm {
    pub fn value(&self, v: &DVector<f64>) -> ExtReal {
        let cv = &self.cone * v;
        let tol = 1e-9 * (1.0 + v.amax()) * (1.0 + self.cone.amax());
        if cv.iter().any(|c| *c > tol) {
            return ExtReal::PosInf;
        }
        ExtReal::Finite(self.slopes.iter().map(|s| s.dot(v)).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Lineality space `{v : f^∞(v) = −f^∞(−v) finite}` as the kernel of the stacked
    /// matrix `[C; d_i − d_1]`. Returns an orthonormal basis.
    pub fn lineality_basis(&self) -> Vec<DVector<f64>> {
        let n = self.slopes[0].len();
        let mut rows: Vec<DVector<f64>> = (0..self.cone.nrows()).map(|i| self.cone.row(i).transpose()).collect();
        for s in &self.slopes[1..] {
            rows.push(s - &self.slopes[0]);
        }
        kernel_basis(&rows, n)
    }
}

/// Orthonormal basis of `{v : ⟨r, v⟩ = 0 ∀ r ∈ rows}`.
pub fn kernel_basis(rows: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    if rows.is_empty() {
        return (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    }
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let gram = m.transpose() * &m;
    let eig = gram.symmetric_eigen();
    let thr = 1e-9 * eig.eigenvalues.amax().max(1.0);
    (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= thr)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect()
}

/// `f*(g) = sup_x ⟨g, x⟩ − f(x)`.
pub fn conjugate_eval(f: &ConvexFn, g: &DVector<f64>) -> Result<ExtReal> {
    check_dim(f.dim(), g.len())?;
    match f.canonical() {
        Canonical::Poly(p) => p.conjugate(g),
        Canonical::Quad(q) => Ok(q.conjugate(g)),
        Canonical::Mixed => Err(Error::Unsupported(
            "conjugate of a structure mixing quadratic and polyhedral parts".into(),
        )),
    }
}

/// `Φ'_ε(x; v) = inf_{t>0} (Φ(x+tv) − Φ(x) + ε)/t`.
pub fn eps_dir_derivative(f: &ConvexFn, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> Result<ExtReal> {
    check_dim(f.dim(), x.len())?;
    check_dim(f.dim(), v.len())?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Precondition("ε must be finite and nonnegative".into()));
    }
    f.value_at(x)?;
    match f.canonical() {
        Canonical::Poly(p) => p.eps_dir_derivative(x, v, eps),
        Canonical::Quad(q) => Ok(ExtReal::Finite(q.eps_dir_derivative(x, v, eps))),
        Canonical::Mixed => {
            if eps == 0.0 {
                f.dir_derivative(x, v)
            } else {
                Ok(oned::ratio_minimize(f, x, v, eps)?.value)
            }
        }
    }
}

/// `inf Φ` (`−∞` when unbounded below).
pub fn infimum(f: &ConvexFn) -> Result<ExtReal> {
    match f.canonical() {
        Canonical::Poly(p) => p.infimum(),
        Canonical::Quad(q) => Ok(q.infimum()),
        Canonical::Mixed => Err(Error::Unsupported("infimum of a mixed structure".into())),
    }
}

/// `Φ^∞(v) = σ_{dom Φ*}(v)`.
pub fn recession_value(f: &ConvexFn, v: &DVector<f64>) -> Result<ExtReal> {
    check_dim(f.dim(), v.len())?;
    Ok(f.recession_form().value(v))
}

/// `[Φ^∞ ≤ 0]`, the recession cone of every nonempty sublevel set.
pub fn recession_cone_of_sublevel(f: &ConvexFn, xbar: &DVector<f64>) -> Result<ConvexCone> {
    f.value_at(xbar)?;
    let r = f.recession_form();
    let n = f.dim();
    let rows = DMatrix::from_fn(r.cone.nrows() + r.slopes.len(), n, |i, j| {
        if i < r.cone.nrows() {
            r.cone[(i, j)]
        } else {
            r.slopes[i - r.cone.nrows()][j]
        }
    });
    Ok(ConvexCone::from_inequalities(rows))
}

/// Exact polyhedral sublevel set `[Φ ≤ λ]` when Φ is polyhedral.
pub fn sublevel_poly(f: &ConvexFn, lambda: ExtReal) -> Option<HPolyhedron> {
    match f.canonical() {
        Canonical::Poly(p) => Some(p.sublevel(lambda)),
        _ => None,
    }
}

/// `[Φ ≤ λ] = {x : Φ(x) ≤ λ}`.
pub fn sublevel_set(f: &ConvexFn, lambda: ExtReal) -> Result<ConvexSet> {
    let n = f.dim();
    match f.canonical() {
        Canonical::Poly(p) => Ok(ConvexSet::from(p.sublevel(lambda))),
        Canonical::Quad(q) => match lambda {
            ExtReal::NegInf => Ok(ConvexSet::Empty(n)),
            ExtReal::PosInf => Ok(ConvexSet::from(HPolyhedron::universe(n))),
            ExtReal::Finite(l) => {
                if let Some(e) = q.sublevel_ellipsoid(l) {
                    return Ok(e.map_or(ConvexSet::Empty(n), ConvexSet::Ellipsoid));
                }
                let fc = f.clone();
                let member_f = f.clone();
                Ok(ConvexSet::Oracle(SetOracle {
                    dim: n,
                    support: std::sync::Arc::new(move |v| perspective_support(&fc, l, v)),
                    member: Some(std::sync::Arc::new(move |x, tol| {
                        let val = member_f.eval(x)?;
                        Ok(crate::geometry::Membership::classify(val.to_f64() - l, tol))
                    })),
                    truncation_radius: f64::INFINITY,
                }))
            }
        },
        Canonical::Mixed => Err(Error::Unsupported("sublevel set of a mixed structure".into())),
    }
}

/// `σ_{[Φ≤λ]}(v) = inf_{μ>0} μ(λ + Φ*(v/μ))`, valid under Slater's condition.
fn perspective_support(f: &ConvexFn, lambda: f64, v: &DVector<f64>) -> Result<ExtReal> {
    let h = |lmu: f64| -> f64 {
        let mu = lmu.exp();
        match conjugate_eval(f, &(v / mu)) {
            Ok(ExtReal::Finite(c)) => mu * (lambda + c),
            Ok(ExtReal::PosInf) => f64::INFINITY,
            Ok(ExtReal::NegInf) => f64::NEG_INFINITY,
            Err(_) => f64::NAN,
        }
    };
    let best = oned::minimize_convex_log(h, -40.0, 40.0, 600);
    if best.is_nan() {
        return Err(Error::Oracle("conjugate unavailable".into()));
    }
    ExtReal::from_f64(best)
}
