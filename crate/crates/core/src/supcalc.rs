//! ε-subdifferential calculus for suprema of finitely many convex functions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::convexfn::oned::golden;
use crate::convexfn::{conjugate_eval, eps_dir_derivative, Canonical, ConvexFn, PolyForm};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::directions::probe_directions;
use crate::geometry::lp::{LinearProgram, LpOutcome};
use crate::report::{two_sided, ProbeOutcome, ProbeStatus, VerificationReport};
use crate::subdiff::{eps_subdiff, fenchel_gap};

/// Grid resolution of the simplex search (1/8 per coordinate).
pub const SIMPLEX_RESOLUTION: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFamily {
    pub members: Vec<ConvexFn>,
    pub sup: ConvexFn,
}

impl FiniteFamily {
    pub fn new(members: Vec<ConvexFn>) -> Result<Self> {
        let sup = ConvexFn::finite_max(members.clone())?;
        Ok(FiniteFamily { members, sup })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sup.dim()
    }

    fn poly_members(&self) -> Option<Vec<PolyForm>> {
        self.members
            .iter()
            .map(|m| match m.canonical() {
                Canonical::Poly(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    /// `Φ(x) − Φ_i(x)` for every member.
    fn member_gaps(&self, x: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
        let phi = self.sup.value_at(x)?;
        let g = self
            .members
            .iter()
            .map(|m| m.value_at(x).map(|v| (phi - v).max(0.0)))
            .collect::<Result<_>>()?;
        Ok((phi, g))
    }
}

/// Witness for the right-hand side of the supremum rule: `g = Σλ_i g_i` with
/// `g_i ∈ ∂_{β_i}Φ_{t_i}(x)` and `Σλ_i(β_i − Φ_{t_i}(x) + Φ(x)) = δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupRuleCertificate {
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
    pub tolerances: Vec<f64>,
    pub subgradients: Vec<Vec<f64>>,
    pub slack: f64,
}

/// Lifted LP over `(ρ_ij, y_i) ≥ 0` with `Σρ = 1` and budget
/// `Σ ρ_ij (Φ(x) − ⟨a_ij,x⟩ − b_ij) + Σ y_iᵀ slack_i ≤ δ`. The map
/// `(ρ, y) ↦ Σρ_ij a_ij + Σ A_iᵀ y_i` has image equal to the closed inner union of the
/// supremum rule at level `δ` (the substitution `ρ_ij = λ_i·(piece weights)`, `y_i = λ_i·(normal weights)`).
struct LiftedRule {
    cols: Vec<DVector<f64>>,
    budget: Vec<f64>,
    owner: Vec<(usize, bool)>,
    n_pieces: usize,
}

impl LiftedRule {
    fn build(polys: &[PolyForm], x: &DVector<f64>, phi: f64) -> LiftedRule {
        let mut cols = Vec::new();
        let mut budget = Vec::new();
        let mut owner = Vec::new();
        for (i, p) in polys.iter().enumerate() {
            for (a, b) in p.slopes.iter().zip(&p.offsets) {
                cols.push(a.clone());
                budget.push((phi - a.dot(x) - b).max(0.0));
                owner.push((i, true));
            }
        }
        let n_pieces = cols.len();
        for (i, p) in polys.iter().enumerate() {
            let s = p.dom.slack(x);
            for j in 0..p.dom.num_rows() {
                cols.push(p.dom.row(j));
                budget.push(s[j].max(0.0));
                owner.push((i, false));
            }
        }
        LiftedRule { cols, budget, owner, n_pieces }
    }

    fn lp(&self, delta: f64) -> LinearProgram {
        let p = self.cols.len();
        let mut lp = LinearProgram::new(p);
        lp.nonneg_range(0..p);
        let sum: Vec<f64> = (0..p).map(|j| if j < self.n_pieces { 1.0 } else { 0.0 }).collect();
        lp.eq(sum, 1.0);
        lp.le(self.budget.clone(), delta);
        lp
    }
}

/// Support in direction `v` of the inner union of the supremum rule at level `δ`:
/// `sup Σλ_i Φ'_{t_i,β_i}(x; v)` over `λ ∈ Δ_k`, `β ≥ 0` with `Σλ_i(β_i − Φ_i(x) + Φ(x)) = δ`.
/// Exact single LP for polyhedral families; otherwise a concave maximisation in
/// `(λ, η = λβ)` by simplex grid plus pairwise refinement.
pub fn maxrule_rhs_support(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    eps: f64,
    delta: f64,
    v: &DVector<f64>,
) -> Result<ExtReal> {
    check_dim(fam.dim(), x.len())?;
    check_dim(fam.dim(), v.len())?;
    if !(eps >= 0.0) || !(delta > eps) {
        return Err(Error::Precondition(format!("need δ > ε ≥ 0 (ε = {eps}, δ = {delta})")));
    }
    let (phi, gaps) = fam.member_gaps(x)?;
    if let Some(polys) = fam.poly_members() {
        let rule = LiftedRule::build(&polys, x, phi);
        let mut lp = rule.lp(delta);
        let obj: Vec<f64> = rule.cols.iter().map(|c| c.dot(v)).collect();
        lp.maximize(&obj);
        return Ok(crate::geometry::sets::outcome_to_ext(&lp.solve()?));
    }
    numeric_rhs_support(fam, x, &gaps, delta, v)
}

fn numeric_rhs_support(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    gaps: &[f64],
    delta: f64,
    v: &DVector<f64>,
) -> Result<ExtReal> {
    let k = fam.len();
    let psi = |i: usize, beta: f64| -> f64 {
        eps_dir_derivative(&fam.members[i], x, v, beta.max(0.0)).map(|e| e.to_f64()).unwrap_or(f64::NAN)
    };
    let inner = |lam: &[f64], sweeps: usize| -> f64 {
        let budget = delta - lam.iter().zip(gaps).map(|(l, g)| l * g).sum::<f64>();
        if budget < -1e-14 {
            return f64::NEG_INFINITY;
        }
        let budget = budget.max(0.0);
        let active: Vec<usize> = (0..k).filter(|&i| lam[i] > 0.0).collect();
        let mut eta = vec![0.0; k];
        let lsum: f64 = active.iter().map(|&i| lam[i]).sum();
        for &i in &active {
            eta[i] = budget * lam[i] / lsum;
        }
        let term = |i: usize, e: f64| lam[i] * psi(i, e / lam[i]);
        let total = |eta: &[f64]| active.iter().map(|&i| term(i, eta[i])).sum::<f64>();
        let mut best = total(&eta);
        if best == f64::INFINITY || best.is_nan() {
            return best;
        }
        for _ in 0..sweeps {
            let before = best;
            for a in 0..active.len() {
                for b in (a + 1)..active.len() {
                    let (i, j) = (active[a], active[b]);
                    let pool = eta[i] + eta[j];
                    if pool <= 0.0 {
                        continue;
                    }
                    let (s, _) = golden(|s| -(term(i, s) + term(j, pool - s)), 0.0, pool, 80);
                    let cand = term(i, s) + term(j, pool - s);
                    let cur = term(i, eta[i]) + term(j, eta[j]);
                    if cand > cur {
                        eta[i] = s;
                        eta[j] = pool - s;
                    }
                }
            }
            best = total(&eta);
            if best - before <= 1e-13 * (1.0 + best.abs()) {
                break;
            }
        }
        best
    };

    let res = if k <= 6 { SIMPLEX_RESOLUTION } else { 4 };
    let mut best_lam = vec![0.0; k];
    let mut best = f64::NEG_INFINITY;
    for comp in compositions(res, k) {
        let lam: Vec<f64> = comp.iter().map(|c| *c as f64 / res as f64).collect();
        let val = inner(&lam, 2);
        if val.is_nan() {
            return Err(Error::Oracle("directional ε-derivative unavailable".into()));
        }
        if val == f64::INFINITY {
            return Ok(ExtReal::PosInf);
        }
        if val > best {
            best = val;
            best_lam = lam;
        }
    }
    if best == f64::NEG_INFINITY {
        return Ok(ExtReal::NegInf);
    }
    best = inner(&best_lam, 30);
    for _ in 0..20 {
        let before = best;
        for i in 0..k {
            for j in (i + 1)..k {
                let pool = best_lam[i] + best_lam[j];
                if pool <= 0.0 {
                    continue;
                }
                let eval_at = |s: f64| {
                    let mut l = best_lam.clone();
                    l[i] = s;
                    l[j] = pool - s;
                    inner(&l, 30)
                };
                let (s, _) = golden(|s| -eval_at(s), 0.0, pool, 60);
                let cand = eval_at(s);
                if cand > best {
                    best = cand;
                    best_lam[i] = s;
                    best_lam[j] = pool - s;
                }
            }
        }
        if best - before <= 1e-12 * (1.0 + best.abs()) {
            break;
        }
    }
    ExtReal::from_f64(best)
}

/// All `k`-part compositions of `total` (nonnegative parts).
pub fn compositions(total: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; k];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for c in 0..=left {
            cur[pos] = c;
            rec(pos + 1, left - c, cur, out);
        }
    }
    if k > 0 {
        rec(0, total, &mut cur, &mut out);
    }
    out
}

/// Default δ-grid `ε + 10^{-j}`, `j = 1..8`.
pub fn default_delta_grid(eps: f64) -> Vec<f64> {
    (1..=8).map(|j| eps + 10f64.powi(-j)).collect()
}

/// Checks the supremum rule on probe directions: the support of `∂_εΦ(x)` must match
/// the minimum over the δ-grid of the right-hand-side support within `tol`.
pub fn maxrule_verify(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    eps: f64,
    probes: &[DVector<f64>],
    delta_grid: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    if delta_grid.is_empty() || delta_grid.iter().any(|d| !(*d > eps)) {
        return Err(Error::Precondition("δ-grid must be nonempty with every δ > ε".into()));
    }
    let lhs_set = eps_subdiff(&fam.sup, x, eps)?;
    if lhs_set.is_empty() {
        return Err(Error::Domain("x is outside dom Φ".into()));
    }
    let mut rep = VerificationReport::new("maxmain");
    rep.note(format!("δ-grid {:?}; grid minimum used as the intersection bound", delta_grid));
    for v in probes {
        let lhs = lhs_set.support(v)?;
        let mut rhs = ExtReal::PosInf;
        for d in delta_grid {
            rhs = rhs.min(maxrule_rhs_support(fam, x, eps, *d, v)?);
        }
        let p = two_sided(format!("v={:?}", v.as_slice()), Some(v.iter().copied().collect()), lhs, rhs, tol);
        rep.track("support_gap", abs_gap(&p));
        rep.push(p);
    }
    rep.finalize();
    Ok(rep)
}

fn abs_gap(p: &ProbeOutcome) -> ExtReal {
    match p.gap {
        ExtReal::Finite(g) => ExtReal::Finite(g.abs()),
        _ => ExtReal::PosInf,
    }
}

/// Builds a [`SupRuleCertificate`] for `g` at level `δ` (polyhedral families, exact LP).
pub fn maxrule_certificate(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    delta: f64,
    g: &DVector<f64>,
) -> Result<Option<SupRuleCertificate>> {
    let polys = fam
        .poly_members()
        .ok_or_else(|| Error::Unsupported("certificates need polyhedral members".into()))?;
    let (phi, gaps) = fam.member_gaps(x)?;
    let rule = LiftedRule::build(&polys, x, phi);
    let mut lp = rule.lp(delta);
    for d in 0..fam.dim() {
        lp.eq(rule.cols.iter().map(|c| c[d]).collect(), g[d]);
    }
    lp.minimize(&rule.budget);
    let w = match lp.solve()? {
        LpOutcome::Optimal { point, .. } => point,
        _ => return Ok(None),
    };
    let k = fam.len();
    let n = fam.dim();
    let mut lam = vec![0.0; k];
    let mut sub = vec![DVector::zeros(n); k];
    let mut spent = vec![0.0; k];
    let mut orphan = DVector::zeros(n);
    let mut orphan_cost = 0.0;
    for (j, &(i, piece)) in rule.owner.iter().enumerate() {
        if piece {
            lam[i] += w[j];
        }
    }
    for (j, &(i, _)) in rule.owner.iter().enumerate() {
        if lam[i] > 0.0 {
            sub[i] += &rule.cols[j] * w[j];
            spent[i] += rule.budget[j] * w[j];
        } else if w[j] > 0.0 {
            orphan += &rule.cols[j] * w[j];
            orphan_cost += rule.budget[j] * w[j];
        }
    }
    if orphan.amax() > 0.0 || orphan_cost > 0.0 {
        return Err(Error::Unsupported("witness needs a zero-weight member (closure point)".into()));
    }
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut tolerances = Vec::new();
    let mut subgradients = Vec::new();
    let used: f64 = (0..k).map(|i| spent[i] + 0.0 * gaps[i]).sum();
    let mut leftover = (delta - used).max(0.0);
    for i in 0..k {
        if lam[i] <= 0.0 {
            continue;
        }
        indices.push(i);
        weights.push(lam[i]);
        // β_i = (spent_i / λ_i) − gap_i, plus any unused budget on the first member.
        let mut beta = spent[i] / lam[i] - gaps[i];
        if leftover > 0.0 {
            beta += leftover / lam[i];
            leftover = 0.0;
        }
        tolerances.push(beta.max(0.0));
        subgradients.push((&sub[i] / lam[i]).iter().copied().collect());
    }
    let mut cert = SupRuleCertificate { weights, indices, tolerances, subgradients, slack: 0.0 };
    cert.slack = check_sup_certificate(fam, x, delta, g, &cert)?;
    Ok(Some(cert))
}

/// Recomputes a supremum-rule certificate; returns the largest violation among the
/// Fenchel gaps, the level identity and the combination residual.
pub fn check_sup_certificate(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    delta: f64,
    g: &DVector<f64>,
    c: &SupRuleCertificate,
) -> Result<f64> {
    let (_, gaps) = fam.member_gaps(x)?;
    let mut worst = 0.0f64;
    let mut level = 0.0;
    let mut combo = DVector::zeros(fam.dim());
    for ((&i, &l), (&b, gi)) in c.indices.iter().zip(&c.weights).zip(c.tolerances.iter().zip(&c.subgradients)) {
        let gi = DVector::from_column_slice(gi);
        let fg = fenchel_gap(&fam.members[i], x, &gi)?.to_f64();
        worst = worst.max(fg - b);
        level += l * (b + gaps[i]);
        combo += &gi * l;
    }
    worst = worst.max((level - delta).abs());
    worst = worst.max((combo - g).amax());
    let wsum: f64 = c.weights.iter().sum();
    Ok(worst.max((wsum - 1.0).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum FinitecaseResult {
    Inside { lambda: Vec<f64>, eta: f64, excess: f64 },
    Outside { best_excess: f64 },
}

impl FinitecaseResult {
    pub fn is_inside(&self) -> bool {
        matches!(self, FinitecaseResult::Inside { .. })
    }
}

/// Tests `g ∈ ⋃{∂_η(Σλ_iΦ_i)(x) : λ ∈ Δ̄_k, η ≥ 0, Σλ_iΦ_i(x) ≥ Φ(x) + η − ε}`.
/// For fixed λ the largest admissible η is `ε − Σλ_i(Φ(x) − Φ_i(x))`, and membership
/// reduces to `Φ(x) + (Σλ_iΦ_i)*(g) − ⟨g,x⟩ ≤ ε`; the left side is convex in λ and is
/// minimised by one joint LP (polyhedral members) or a simplex search (quadratic members).
pub fn finitecase_rhs_membership(
    fam: &FiniteFamily,
    x: &DVector<f64>,
    eps: f64,
    g: &DVector<f64>,
    tol: f64,
) -> Result<FinitecaseResult> {
    check_dim(fam.dim(), g.len())?;
    let (phi, gaps) = fam.member_gaps(x)?;
    let gx = g.dot(x);
    let (lambda, conj) = if let Some(polys) = fam.poly_members() {
        match joint_conjugate_lp(&polys, g)? {
            Some(r) => r,
            None => return Ok(FinitecaseResult::Outside { best_excess: f64::INFINITY }),
        }
    } else if fam.members.iter().all(|m| matches!(m.canonical(), Canonical::Quad(_))) {
        quad_simplex_search(fam, g)?
    } else {
        return Err(Error::Unsupported("finite-family rule on mixed members".into()));
    };
    let excess = phi + conj - gx - eps;
    if excess <= tol {
        let eta = (eps - lambda.iter().zip(&gaps).map(|(l, gi)| l * gi).sum::<f64>()).max(0.0);
        Ok(FinitecaseResult::Inside { lambda, eta, excess })
    } else {
        Ok(FinitecaseResult::Outside { best_excess: excess })
    }
}

/// `min_λ (Σλ_iΦ_i)*(g)` as one LP over scaled piece and normal weights.
fn joint_conjugate_lp(polys: &[PolyForm], g: &DVector<f64>) -> Result<Option<(Vec<f64>, f64)>> {
    let n = g.len();
    let mut cols = Vec::new();
    let mut cost = Vec::new();
    let mut owner = Vec::new();
    let mut is_piece = Vec::new();
    for (i, p) in polys.iter().enumerate() {
        for (a, b) in p.slopes.iter().zip(&p.offsets) {
            cols.push(a.clone());
            cost.push(-b);
            owner.push(i);
            is_piece.push(true);
        }
        for j in 0..p.dom.num_rows() {
            cols.push(p.dom.row(j));
            cost.push(p.dom.b()[j]);
            owner.push(i);
            is_piece.push(false);
        }
    }
    let m = cols.len();
    let mut lp = LinearProgram::new(m);
    lp.nonneg_range(0..m).minimize(&cost);
    for d in 0..n {
        lp.eq(cols.iter().map(|c| c[d]).collect(), g[d]);
    }
    lp.eq(is_piece.iter().map(|p| if *p { 1.0 } else { 0.0 }).collect(), 1.0);
    Ok(match lp.solve()? {
        LpOutcome::Optimal { value, point } => {
            let mut lam = vec![0.0; polys.len()];
            for j in 0..m {
                if is_piece[j] {
                    lam[owner[j]] += point[j];
                }
            }
            Some((lam, value))
        }
        _ => None,
    })
}

fn quad_simplex_search(fam: &FiniteFamily, g: &DVector<f64>) -> Result<(Vec<f64>, f64)> {
    let k = fam.len();
    let h = |lam: &[f64]| -> f64 {
        let terms: Vec<ConvexFn> = fam
            .members
            .iter()
            .zip(lam)
            .map(|(m, l)| ConvexFn::scale(*l, m.clone()).expect("nonnegative"))
            .collect();
        let f = ConvexFn::Sum(terms);
        conjugate_eval(&f, g).map(|e| e.to_f64()).unwrap_or(f64::INFINITY)
    };
    let mut best_lam = vec![1.0 / k as f64; k];
    let mut best = h(&best_lam);
    for comp in compositions(SIMPLEX_RESOLUTION, k) {
        let lam: Vec<f64> = comp.iter().map(|c| *c as f64 / SIMPLEX_RESOLUTION as f64).collect();
        let v = h(&lam);
        if v < best {
            best = v;
            best_lam = lam;
        }
    }
    for _ in 0..30 {
        let before = best;
        for i in 0..k {
            for j in (i + 1)..k {
                let pool = best_lam[i] + best_lam[j];
                let at = |s: f64| {
                    let mut l = best_lam.clone();
                    l[i] = s;
                    l[j] = pool - s;
                    h(&l)
                };
                let (s, v) = golden(at, 0.0, pool, 80);
                if v < best {
                    best = v;
                    best_lam[i] = s;
                    best_lam[j] = pool - s;
                }
            }
        }
        if before - best <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
    }
    Ok((best_lam, best))
}

/// Checks `∂_εΦ(x) = ⋂_{δ>ε} limsup_n ∂_δΦ_n(x)` along a non-decreasing sequence.
/// The deficit `max_v (σ_{∂_εΦ}(v) − σ_{∂_δΦ_N}(v))⁺` must be non-increasing in `N`
/// after `burn_in` and the two-sided gap at `N_max` must be at most `tol`.
pub struct IncreasingSeqConfig {
    pub n_max: usize,
    pub burn_in: usize,
    pub delta: f64,
    pub n_dirs: usize,
}

pub fn increasing_seq_verify(
    seq: &dyn Fn(usize) -> ConvexFn,
    limit: Option<&ConvexFn>,
    cfg: &IncreasingSeqConfig,
    x: &DVector<f64>,
    eps: f64,
    tol: f64,
) -> Result<VerificationReport> {
    if !(cfg.delta > eps) {
        return Err(Error::Precondition("δ must exceed ε".into()));
    }
    let last = seq(cfg.n_max);
    let phi = limit.cloned().unwrap_or_else(|| last.clone());
    let n = phi.dim();
    // Monotonicity spot-check on a grid around x.
    let grid = probe_directions(n, 16);
    for k in 1..cfg.n_max {
        let (a, b) = (seq(k), seq(k + 1));
        for d in &grid {
            for s in [0.0, 0.25, 1.0, 4.0] {
                let p = x + d * s;
                let (va, vb) = (a.eval(&p)?, b.eval(&p)?);
                if va > vb.add_finite(1e-12 * (1.0 + vb.to_f64().abs())) {
                    return Err(Error::Input(format!("sequence is not non-decreasing at n = {k}")));
                }
            }
        }
    }
    let dirs = probe_directions(n, cfg.n_dirs);
    let lhs_set = eps_subdiff(&phi, x, eps)?;
    let lhs: Vec<ExtReal> = dirs.iter().map(|v| lhs_set.support(v)).collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("increasing0");
    let mut prev_gap = f64::INFINITY;
    let mut trend_violation = 0.0f64;
    for k in 1..=cfg.n_max {
        let s = eps_subdiff(&seq(k), x, cfg.delta)?;
        let mut deficit = 0.0f64;
        let mut two = 0.0f64;
        for (v, l) in dirs.iter().zip(&lhs) {
            let r = s.support(v)?;
            let gap = crate::geometry::compare::ext_gap(*l, r).to_f64();
            deficit = deficit.max(gap.max(0.0));
            two = two.max(gap.abs());
        }
        let rise = if k > cfg.burn_in && prev_gap.is_finite() { two - prev_gap } else { 0.0 };
        trend_violation = trend_violation.max(rise);
        prev_gap = two;
        let status = if rise > 1e-9 { ProbeStatus::Fail } else { ProbeStatus::Pass };
        rep.push(ProbeOutcome {
            label: format!("N={k}"),
            direction: None,
            lhs: ExtReal::Finite(deficit),
            rhs: ExtReal::Finite(two),
            gap: ExtReal::Finite(two),
            status,
        });
        if k == cfg.n_max {
            rep.track("terminal_gap", ExtReal::Finite(two));
        }
    }
    rep.track("trend_violation", ExtReal::Finite(trend_violation.max(0.0)));
    rep.finalize();
    let terminal = rep.worst["terminal_gap"].to_f64();
    if trend_violation > 1e-9 {
        rep.fail(format!("gap increased by {trend_violation:e} after burn-in"));
    }
    if terminal > tol {
        rep.fail(format!("terminal gap {terminal:e} exceeds {tol:e}"));
    }
    Ok(rep)
}

/// Radical-inverse point `k` of the Halton sequence in `[0, 1)ⁿ` (van der Corput for `n = 1`).
pub fn halton(k: usize, n: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    PRIMES[..n]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (k, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// `Φ_N = max` of the tangents of a smooth quadratic at `center` followed by the first
/// `N − 1` Halton points of `center + [−R, R]ⁿ`: a non-decreasing sequence of polyhedral
/// minorants converging to it on the box. The tangent at `center` keeps `Φ_N(center)` exact,
/// so `∂_δΦ_N(center)` shrinks monotonically in `N`.
pub fn supporting_line_sequence(f: &ConvexFn, n_terms: usize, center: &DVector<f64>, radius: f64) -> Result<ConvexFn> {
    let Canonical::Quad(q) = f.canonical() else {
        return Err(Error::Unsupported("supporting-line sequences need a quadratic".into()));
    };
    if n_terms == 0 || !(radius > 0.0) {
        return Err(Error::Precondition("need at least one tangent and a positive radius".into()));
    }
    let n = q.dim();
    check_dim(n, center.len())?;
    if n > 8 {
        return Err(Error::Unsupported("Halton points beyond dimension 8".into()));
    }
    let mut slopes = Vec::with_capacity(n_terms);
    let mut offsets = Vec::with_capacity(n_terms);
    for k in 0..n_terms {
        // Halton point 1 is the box centre in one dimension; start the offsets at point 2.
        let t = if k == 0 {
            center.clone()
        } else {
            center + DVector::from_iterator(n, halton(k + 1, n).into_iter().map(|u| radius * (2.0 * u - 1.0)))
        };
        let a = q.grad(&t);
        offsets.push(q.eval(&t) - a.dot(&t));
        slopes.push(a);
    }
    ConvexFn::max_affine(slopes, offsets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjDecomposition {
    pub lambda: Vec<f64>,
    pub eps_i: Vec<f64>,
    pub x_i: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Decomposes `x ∈ ∂_εf*(g*)` as `Σλ_i x_i` with `g* ∈ ∂_{ε_i}f(x_i)` and
/// `Σλ_iε_i ≤ ε + δ`. For `f ∈ Γ₀(ℝⁿ)` the point itself is a witness with `ε₁` equal to
/// the Fenchel gap, because `f** = f`.
pub fn conj_subdiff_decompose(
    f: &ConvexFn,
    gstar: &DVector<f64>,
    x: &DVector<f64>,
    eps: f64,
    delta: f64,
    tol: f64,
) -> Result<ConjDecomposition> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("δ must be positive".into()));
    }
    let gap = fenchel_gap(f, x, gstar)?.to_f64();
    if !(gap <= eps + tol) {
        return Err(Error::Input(format!("x ∉ ∂_εf*(g*): Fenchel gap {gap} > ε = {eps}")));
    }
    let e1 = gap.max(0.0);
    let d = ConjDecomposition { lambda: vec![1.0], eps_i: vec![e1], x_i: vec![x.iter().copied().collect()], residual: 0.0 };
    check_conj_decomposition(f, gstar, x, eps, delta, &d, tol)?;
    Ok(d)
}

/// Recomputes the side conditions of a decomposition.
pub fn check_conj_decomposition(
    f: &ConvexFn,
    gstar: &DVector<f64>,
    x: &DVector<f64>,
    eps: f64,
    delta: f64,
    d: &ConjDecomposition,
    tol: f64,
) -> Result<()> {
    let lsum: f64 = d.lambda.iter().sum();
    if d.lambda.iter().any(|l| *l <= 0.0) || (lsum - 1.0).abs() > 1e-12 {
        return Err(Error::Oracle("weights are not in the simplex".into()));
    }
    let budget: f64 = d.lambda.iter().zip(&d.eps_i).map(|(l, e)| l * e).sum();
    if budget > eps + delta {
        return Err(Error::Oracle("Σλ_iε_i exceeds ε + δ".into()));
    }
    let mut combo = DVector::zeros(x.len());
    for ((l, e), xi) in d.lambda.iter().zip(&d.eps_i).zip(&d.x_i) {
        let xi = DVector::from_column_slice(xi);
        let g = fenchel_gap(f, &xi, gstar)?.to_f64();
        if g > e + tol {
            return Err(Error::Oracle(format!("g* ∉ ∂_{e}f(x_i): gap {g}")));
        }
        combo += xi * *l;
    }
    if (combo - x).norm() > tol {
        return Err(Error::Oracle("combination does not reproduce x".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexfn::dv;

    fn pm_x() -> FiniteFamily {
        FiniteFamily::new(vec![
            ConvexFn::affine(dv(&[1.0]), 0.0).unwrap(),
            ConvexFn::affine(dv(&[-1.0]), 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn rhs_support_of_plus_minus_x() {
        let f = pm_x();
        for v in [1.0, -1.0] {
            let s = maxrule_rhs_support(&f, &dv(&[0.0]), 0.0, 0.01, &dv(&[v])).unwrap();
            assert!((s.to_f64() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn singleton_collapse() {
        let f = FiniteFamily::new(vec![ConvexFn::abs()]).unwrap();
        let x = dv(&[1.0]);
        let v = dv(&[-1.0]);
        let s = maxrule_rhs_support(&f, &x, 0.1, 0.5, &v).unwrap();
        let d = eps_dir_derivative(&f.members[0], &x, &v, 0.5).unwrap();
        assert!((s.to_f64() - d.to_f64()).abs() < 1e-12);
        let q = FiniteFamily::new(vec![ConvexFn::half_sq_norm(1)]).unwrap();
        let s = maxrule_rhs_support(&q, &dv(&[0.0]), 0.1, 0.5, &dv(&[1.0])).unwrap();
        assert!((s.to_f64() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maxrule_examples() {
        let dirs = vec![dv(&[1.0]), dv(&[-1.0])];
        let r = maxrule_verify(&pm_x(), &dv(&[0.0]), 0.0, &dirs, &[0.1, 0.01, 0.001], 1e-4).unwrap();
        assert!(r.passed(), "{}", r.summary());
        let mixed = FiniteFamily::new(vec![ConvexFn::abs(), ConvexFn::half_sq_norm(1)]).unwrap();
        let r = maxrule_verify(&mixed, &dv(&[1.0]), 0.2, &dirs, &default_delta_grid(0.2), 1e-3).unwrap();
        assert!(r.passed(), "{}", r.summary());
        let single = FiniteFamily::new(vec![ConvexFn::half_sq_norm(1)]).unwrap();
        let r = maxrule_verify(&single, &dv(&[0.0]), 0.5, &dirs, &default_delta_grid(0.5), 1e-3).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn finitecase_examples() {
        let f = pm_x();
        match finitecase_rhs_membership(&f, &dv(&[0.0]), 0.0, &dv(&[0.3]), 1e-9).unwrap() {
            FinitecaseResult::Inside { lambda, eta, .. } => {
                assert!((lambda[0] - 0.65).abs() < 1e-9 && (lambda[1] - 0.35).abs() < 1e-9);
                assert!(eta.abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
        assert!(!finitecase_rhs_membership(&f, &dv(&[0.0]), 0.0, &dv(&[1.2]), 1e-9).unwrap().is_inside());
        let a = FiniteFamily::new(vec![ConvexFn::abs()]).unwrap();
        match finitecase_rhs_membership(&a, &dv(&[1.0]), 0.5, &dv(&[0.5]), 1e-9).unwrap() {
            FinitecaseResult::Inside { lambda, eta, .. } => {
                assert_eq!(lambda, vec![1.0]);
                assert!((eta - 0.5).abs() < 1e-12);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn conj_decompose_examples() {
        let d = conj_subdiff_decompose(&ConvexFn::abs(), &dv(&[1.0]), &dv(&[5.0]), 0.0, 0.1, 1e-9).unwrap();
        assert_eq!(d.eps_i, vec![0.0]);
        let d = conj_subdiff_decompose(&ConvexFn::abs(), &dv(&[0.0]), &dv(&[0.5]), 1.0, 0.1, 1e-9).unwrap();
        assert!((d.eps_i[0] - 0.5).abs() < 1e-12);
        let d = conj_subdiff_decompose(&ConvexFn::half_sq_norm(1), &dv(&[1.0]), &dv(&[1.0]), 0.0, 0.1, 1e-9).unwrap();
        assert!(d.eps_i[0].abs() < 1e-12);
        assert!(conj_subdiff_decompose(&ConvexFn::abs(), &dv(&[0.0]), &dv(&[2.0]), 1.0, 0.1, 1e-9).is_err());
    }

    #[test]
    fn halfsquare_tangents() {
        assert_eq!(halton(1, 1), vec![0.5]);
        assert_eq!(halton(6, 1), vec![0.375]);
        let q = ConvexFn::half_sq_norm(1);
        let seq = |k: usize| supporting_line_sequence(&q, k, &dv(&[0.5]), 2.0).unwrap();
        let cfg = IncreasingSeqConfig { n_max: 64, burn_in: 8, delta: 0.101, n_dirs: 8 };
        let r = increasing_seq_verify(&seq, Some(&q), &cfg, &dv(&[0.5]), 0.1, 1e-2).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn increasing_constant_shift() {
        let seq = |k: usize| {
            ConvexFn::max_affine(vec![dv(&[1.0]), dv(&[-1.0])], vec![-1.0 / k as f64, -1.0 / k as f64]).unwrap()
        };
        let cfg = IncreasingSeqConfig { n_max: 16, burn_in: 0, delta: 0.31, n_dirs: 8 };
        let r = increasing_seq_verify(&seq, None, &cfg, &dv(&[0.0]), 0.3, 1e-9).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(8, 3).len(), 45);
        assert!(compositions(8, 3).iter().all(|c| c.iter().sum::<usize>() == 8));
    }
}
