//! Spectral functions `F = f∘λ` on symmetric matrices with the trace inner product.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convexfn::{
    conjugate_eval, recession_cone_of_sublevel, recession_value, sublevel_set, Canonical, ConvexFn,
};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::{ConvexSet, HPolyhedron, Membership};
use crate::geometry::lp::{LinearProgram, LpOutcome};
use crate::normalcone::{delta_normal_membership_union, target_sets, NormalMembership};
use crate::subdiff::fenchel_gap;

const SYM_TOL: f64 = 1e-12;
const PERMUTATION_CHECKS: usize = 20;

/// A symmetric matrix; near-symmetric input is symmetrised on ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Input("symmetric matrix must be square and nonempty".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite matrix entry".into()));
        }
        let asym = (&m - m.transpose()).amax();
        if asym > SYM_TOL * (1.0 + m.amax()) {
            return Err(Error::Input(format!("matrix is not symmetric (asymmetry {asym:e})")));
        }
        Ok(SymMatrix((&m + m.transpose()) * 0.5))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("matrix rows must form a square array".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diag(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `A_U x = Uᵀ diag(x) U`.
    pub fn a_u(u: &DMatrix<f64>, x: &DVector<f64>) -> Self {
        let m = u.transpose() * DMatrix::from_diagonal(x) * u;
        SymMatrix((&m + m.transpose()) * 0.5)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    /// `tr(XY)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn commutes_with(&self, other: &SymMatrix) -> bool {
        let c = &self.0 * &other.0 - &other.0 * &self.0;
        c.norm() <= 1e-8 * (1.0 + self.frobenius() * other.frobenius())
    }
}

/// `X = Uᵀ diag(λ) U` with `λ` non-increasing; rows of `U` are eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    pub eigenvalues: DVector<f64>,
    pub u: DMatrix<f64>,
}

impl EigenDecomp {
    /// Index ranges of tied eigenvalue blocks.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        tie_blocks(&self.eigenvalues)
    }
}

fn tie_tol(l: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + l.amax())
}

fn tie_blocks(l: &DVector<f64>) -> Vec<std::ops::Range<usize>> {
    let tol = tie_tol(l);
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=l.len() {
        if i == l.len() || l[i - 1] - l[i] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Sorted eigendecomposition. Within each tied block the basis is canonicalised: the
/// block projector `P` is applied to `e₁, e₂, …` and Gram–Schmidt keeps the nonzero
/// results, which fixes the lexicographically largest basis with positive leading entries.
pub fn eig_sorted(x: &SymMatrix) -> Result<EigenDecomp> {
    let n = x.dim();
    let eig = x.0.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver { message: "eigensolver did not converge".into(), residual: f64::INFINITY });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vecs: Vec<DVector<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(n);
    for block in tie_blocks(&lambda) {
        let k = block.len();
        let mut p = DMatrix::zeros(n, n);
        for v in &vecs[block.clone()] {
            p += v * v.transpose();
        }
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
        for j in 0..n {
            if basis.len() == k {
                break;
            }
            let mut w = p.column(j).into_owned();
            for b in &basis {
                w -= b * b.dot(&w);
            }
            for b in &basis {
                w -= b * b.dot(&w);
            }
            let nw = w.norm();
            if nw > 1e-6 {
                basis.push(w / nw);
            }
        }
        if basis.len() != k {
            return Err(Error::Solver { message: "eigenvector block lost rank".into(), residual: k as f64 });
        }
        rows.extend(basis);
    }
    let u = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let orth = (u.transpose() * &u - DMatrix::identity(n, n)).amax();
    let recon = (u.transpose() * DMatrix::from_diagonal(&lambda) * &u - &x.0).amax();
    if orth > 1e-10 || recon > 1e-10 * (1.0 + x.0.amax()) {
        return Err(Error::Solver {
            message: "eigendecomposition failed its checks".into(),
            residual: orth.max(recon),
        });
    }
    Ok(EigenDecomp { eigenvalues: lambda, u })
}

pub fn eigenvalues(x: &SymMatrix) -> Result<DVector<f64>> {
    Ok(eig_sorted(x)?.eigenvalues)
}

/// A convex `f` on ℝⁿ whose permutation invariance was spot-checked.
#[derive(Debug, Clone)]
pub struct SymmetricFn {
    f: ConvexFn,
    verified: bool,
}

impl SymmetricFn {
    /// Checks `f(Px) = f(x)` for 20 seeded permutations on sampled points. A heuristic
    /// guard, not a proof.
    pub fn new(f: ConvexFn) -> Result<Self> {
        let n = f.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ n as u64);
        let mut points = vec![DVector::zeros(n)];
        for _ in 0..4 {
            points.push(DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0)));
            points.push(DVector::from_fn(n, |_, _| rng.gen_range(-0.2..0.2)));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..PERMUTATION_CHECKS {
            perm.shuffle(&mut rng);
            for x in &points {
                let px = DVector::from_fn(n, |i, _| x[perm[i]]);
                let (a, b) = (f.eval(x)?, f.eval(&px)?);
                let same = match (a, b) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                    (a, b) => a == b,
                };
                if !same {
                    return Err(Error::Input(format!("function is not permutation invariant ({a} vs {b})")));
                }
            }
        }
        Ok(SymmetricFn { f, verified: true })
    }

    /// Wraps `f` without the invariance check; spectral operations then refuse it.
    pub fn unverified(f: ConvexFn) -> Self {
        SymmetricFn { f, verified: false }
    }

    /// `max{x₁, …, xₙ}`, so that `f∘λ = λ_max`.
    pub fn max_coordinate(n: usize) -> Self {
        let slopes = (0..n).map(|i| DVector::from_fn(n, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        SymmetricFn {
            f: ConvexFn::max_affine(slopes, vec![0.0; n]).expect("unit slopes are valid"),
            verified: true,
        }
    }

    pub fn half_sq_norm(n: usize) -> Self {
        SymmetricFn { f: ConvexFn::half_sq_norm(n), verified: true }
    }

    pub fn inner(&self) -> &ConvexFn {
        &self.f
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    fn checked(&self, x: &SymMatrix) -> Result<&ConvexFn> {
        if !self.verified {
            return Err(Error::Input("permutation invariance of f has not been verified".into()));
        }
        check_dim(self.f.dim(), x.dim())?;
        Ok(&self.f)
    }
}

/// `f(λ(X))`.
pub fn spectral_eval(f: &SymmetricFn, x: &SymMatrix) -> Result<ExtReal> {
    let inner = f.checked(x)?;
    inner.eval(&eigenvalues(x)?)
}

/// `(f∘λ)*(G) = f*(λ(G))`.
pub fn spectral_conjugate(f: &SymmetricFn, g: &SymMatrix) -> Result<ExtReal> {
    let inner = f.checked(g)?;
    conjugate_eval(inner, &eigenvalues(g)?)
}

/// `⟨λ(G), λ(X)⟩ − tr(GX) ≥ 0`.
pub fn von_neumann_gap(g: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    check_dim(g.dim(), x.dim())?;
    Ok(eigenvalues(g)?.dot(&eigenvalues(x)?) - g.inner(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMembership {
    pub membership: Membership,
    /// `f(λ(X)) + f*(λ(G)) − tr(GX) − ε`.
    pub excess: ExtReal,
    pub commuting: bool,
    /// Shared-eigenbasis test: `G = A_U γ` with `γ ∈ ∂_ε f(λ(X))`.
    pub constructive: Option<Membership>,
}

/// `G ∈ ∂_ε(f∘λ)(X)`. The conjugate test is authoritative; the constructive test is
/// reported alongside and must agree with it at `ε = 0`.
pub fn spectral_eps_subdiff_membership(
    f: &SymmetricFn,
    x: &SymMatrix,
    eps: f64,
    g: &SymMatrix,
    tol: f64,
) -> Result<SpectralMembership> {
    if !(eps >= 0.0) {
        return Err(Error::Precondition("ε must be nonnegative".into()));
    }
    let inner = f.checked(x)?;
    check_dim(x.dim(), g.dim())?;
    let dx = eig_sorted(x)?;
    let lg = eigenvalues(g)?;
    let fx = inner.eval(&dx.eigenvalues)?;
    let excess = fx.try_add(conjugate_eval(inner, &lg)?)?.add_finite(-g.inner(x) - eps);
    let membership = match excess {
        ExtReal::Finite(e) => Membership::classify(e, tol),
        ExtReal::NegInf => Membership::Inside,
        ExtReal::PosInf => Membership::Outside,
    };
    let commuting = x.commutes_with(g);
    let constructive = if commuting {
        let gamma = shared_coordinates(&dx, g)?;
        Some(match fenchel_gap(inner, &dx.eigenvalues, &gamma)? {
            ExtReal::Finite(v) => Membership::classify(v - eps, tol),
            _ => Membership::Outside,
        })
    } else if eps == 0.0 {
        // Exact subgradients of a spectral function commute with X.
        Some(Membership::Outside)
    } else {
        None
    };
    Ok(SpectralMembership { membership, excess, commuting, constructive })
}

/// Coordinates `γ` of a commuting `G` in the eigenbasis of `X`, diagonalising inside tied
/// blocks of `λ(X)`.
fn shared_coordinates(dx: &EigenDecomp, g: &SymMatrix) -> Result<DVector<f64>> {
    let m = &dx.u * g.matrix() * dx.u.transpose();
    let mut gamma = DVector::zeros(m.nrows());
    for b in dx.blocks() {
        let sub = m.view((b.start, b.start), (b.len(), b.len())).into_owned();
        let sub = (&sub + sub.transpose()) * 0.5;
        let mut ev: Vec<f64> = sub.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (i, v) in b.zip(ev) {
            gamma[i] = v;
        }
    }
    Ok(gamma)
}

/// `(f∘λ)^∞(X) = f^∞(λ(X))`.
pub fn spectral_recession(f: &SymmetricFn, x: &SymMatrix) -> Result<ExtReal> {
    let inner = f.checked(x)?;
    recession_value(inner, &eigenvalues(x)?)
}

/// Direct quotient `sup_{t>0} (F(X₀ + tX) − F(X₀))/t`, read off at `t = 10⁹` (the quotient
/// is non-decreasing in `t`). Superlinear growth between `t = 10⁶` and `t = 10⁹` is
/// reported as `+∞`.
pub fn recession_quotient(f: &SymmetricFn, x0: &SymMatrix, x: &SymMatrix) -> Result<ExtReal> {
    check_dim(x0.dim(), x.dim())?;
    let f0 = spectral_eval(f, x0)?;
    let ExtReal::Finite(f0) = f0 else {
        return Err(Error::Domain("base point outside dom F".into()));
    };
    let q = |t: f64| -> Result<ExtReal> {
        let y = SymMatrix(x0.matrix() + x.matrix() * t);
        Ok(spectral_eval(f, &y)?.add_finite(-f0).try_mul_pos(1.0 / t)?)
    };
    let (a, b) = (q(1e6)?, q(1e9)?);
    Ok(match (a, b) {
        (_, ExtReal::PosInf) | (ExtReal::PosInf, _) => ExtReal::PosInf,
        (ExtReal::Finite(a), ExtReal::Finite(b)) if b > 10.0 * (1.0 + a.abs()) => ExtReal::PosInf,
        _ => b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmaxMembership {
    pub membership: Membership,
    /// `sup ⟨g, y − x̄⟩` over the vector-side union, or the matrix-side value when `G` does
    /// not commute with `X̄`.
    pub sup_value: ExtReal,
    pub commuting: bool,
}

/// `G ∈ N^δ_{[λ_max ≤ α] ∪ (X̄ + S⁻ⁿ)}(X̄)`. Commuting `G` is reduced through `A_U` to the
/// δ-normal test of `{x : x_i ≤ α} ∪ (λ(X̄) + ℝⁿ₋)` at `λ(X̄)`; otherwise the support of
/// each spectral set is computed from `λ(G)` directly.
pub fn lmax_normal_membership(xbar: &SymMatrix, alpha: f64, delta: f64, g: &SymMatrix, tol: f64) -> Result<LmaxMembership> {
    check_dim(xbar.dim(), g.dim())?;
    if !(delta >= 0.0) {
        return Err(Error::Precondition("δ must be nonnegative".into()));
    }
    let dx = eig_sorted(xbar)?;
    if xbar.commutes_with(g) {
        let gamma = shared_coordinates(&dx, g)?;
        let sets = lmax_vector_sets(&dx.eigenvalues, alpha)?;
        let m = delta_normal_membership_union(&sets, &dx.eigenvalues, delta, &gamma, tol)?;
        return Ok(LmaxMembership { membership: m.membership, sup_value: m.sup_value, commuting: true });
    }
    let sup = lmax_matrix_sup(xbar, alpha, g)?;
    let membership = match sup {
        ExtReal::Finite(s) => Membership::classify(s - delta, tol),
        ExtReal::NegInf => Membership::Inside,
        ExtReal::PosInf => Membership::Outside,
    };
    Ok(LmaxMembership { membership, sup_value: sup, commuting: false })
}

/// Matrix-side `max(σ_{[λ_max≤α]}(G), σ_{X̄+S⁻}(G)) − tr(GX̄)` with
/// `σ_{[λ_max≤α]}(G) = α·tr G` for `G ⪰ 0` and `σ_{S⁻}(G) = 0` for `G ⪰ 0`.
pub fn lmax_matrix_sup(xbar: &SymMatrix, alpha: f64, g: &SymMatrix) -> Result<ExtReal> {
    let lg = eigenvalues(g)?;
    if lg[lg.len() - 1] < -1e-12 * (1.0 + lg.amax()) {
        return Ok(ExtReal::PosInf);
    }
    let gx = g.inner(xbar);
    Ok(ExtReal::Finite((alpha * lg.sum() - gx).max(0.0)))
}

fn lmax_vector_sets(l: &DVector<f64>, alpha: f64) -> Result<Vec<ConvexSet>> {
    let n = l.len();
    let eye = DMatrix::identity(n, n);
    Ok(vec![
        HPolyhedron::new(eye.clone(), DVector::from_element(n, alpha))?.into(),
        HPolyhedron::new(eye, l.clone())?.into(),
    ])
}

/// Matrix-side `sup tr(G(Y − X̄))` over `[F ≤ α] ∪ (X̄ + [F^∞ ≤ 0])` (the second set only
/// when `F(X̄) > α`). Both sets are spectral, so by Von Neumann their supports at `G` are
/// the vector supports at `λ(G)`.
pub fn spectral_normal_sup(f: &SymmetricFn, xbar: &SymMatrix, alpha: f64, g: &SymMatrix) -> Result<ExtReal> {
    let inner = f.checked(xbar)?;
    check_dim(xbar.dim(), g.dim())?;
    let lx = eigenvalues(xbar)?;
    let lg = eigenvalues(g)?;
    let fx = inner.value_at(&lx)?;
    let gx = g.inner(xbar);
    let mut sup = sublevel_set(inner, ExtReal::Finite(alpha))?.support(&lg)?.add_finite(-gx);
    if fx > alpha {
        let cone = recession_cone_of_sublevel(inner, &lx)?.to_set();
        sup = sup.max(cone.support(&lg)?);
    }
    Ok(sup)
}

/// Matrix-side δ-normal membership for the spectral level configuration.
pub fn spectral_normal_membership(
    f: &SymmetricFn,
    xbar: &SymMatrix,
    alpha: f64,
    delta: f64,
    g: &SymMatrix,
    tol: f64,
) -> Result<NormalMembership> {
    if !(delta >= 0.0) {
        return Err(Error::Precondition("δ must be nonnegative".into()));
    }
    let sup = spectral_normal_sup(f, xbar, alpha, g)?;
    let membership = match sup {
        ExtReal::Finite(s) => Membership::classify(s - delta, tol),
        ExtReal::NegInf => Membership::Inside,
        ExtReal::PosInf => Membership::Outside,
    };
    Ok(NormalMembership { membership, sup_value: sup })
}

/// Reduced form for `G` commuting with `X̄`: `G = A_U γ` belongs to the matrix δ-normal
/// set iff `γ` belongs to the vector δ-normal set at `λ(X̄)`.
pub fn diag_reduced_membership(
    f: &SymmetricFn,
    xbar: &SymMatrix,
    alpha: f64,
    delta: f64,
    g: &SymMatrix,
    tol: f64,
) -> Result<NormalMembership> {
    let inner = f.checked(xbar)?;
    if !xbar.commutes_with(g) {
        return Err(Error::Precondition("G must commute with X̄ for the reduced test".into()));
    }
    let dx = eig_sorted(xbar)?;
    let gamma = shared_coordinates(&dx, g)?;
    let sets = target_sets(inner, &dx.eigenvalues, ExtReal::Finite(alpha))?;
    delta_normal_membership_union(&sets, &dx.eigenvalues, delta, &gamma, tol)
}

/// A maximiser of `⟨γ, x⟩ − f(x)` (`None` when the supremum is not attained or infinite).
pub fn conjugate_argmax(f: &ConvexFn, gamma: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    check_dim(f.dim(), gamma.len())?;
    let n = f.dim();
    match f.canonical() {
        Canonical::Poly(p) => {
            let mut lp = LinearProgram::new(n + 1);
            let mut c: Vec<f64> = gamma.iter().copied().collect();
            c.push(-1.0);
            lp.maximize(&c);
            for (a, b) in p.slopes.iter().zip(&p.offsets) {
                let mut row: Vec<f64> = a.iter().copied().collect();
                row.push(-1.0);
                lp.le(row, -b);
            }
            for j in 0..p.dom.num_rows() {
                let mut row: Vec<f64> = p.dom.row(j).iter().copied().collect();
                row.push(0.0);
                lp.le(row, p.dom.b()[j]);
            }
            Ok(match lp.solve()? {
                LpOutcome::Optimal { point, .. } => Some(point.rows(0, n).into_owned()),
                _ => None,
            })
        }
        Canonical::Quad(q) => {
            let rhs = gamma - &q.c;
            let x = q.q.clone().pseudo_inverse(1e-12).map_err(|e| Error::Solver { message: e.to_string(), residual: f64::INFINITY })? * &rhs;
            let res = (&q.q * &x - rhs).amax();
            Ok(if res <= 1e-9 * (1.0 + gamma.amax()) { Some(x) } else { None })
        }
        Canonical::Mixed => Err(Error::Unsupported("conjugate maximiser of a mixed structure".into())),
    }
}
