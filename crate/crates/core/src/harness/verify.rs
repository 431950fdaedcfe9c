//! Theorem dispatch: each id maps an [`Instance`] to a [`VerificationReport`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Instance, ProbeConfig, TheoremId};
use crate::convexfn::{infimum, sublevel_poly, sublevel_set, Canonical, ConvexFn};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::compare::ext_gap;
use crate::geometry::directions::probe_directions;
use crate::geometry::{HPolyhedron, LpSet, Membership};
use crate::normalcone::{
    cor1_membership, corolario_decompose, delta_normal_membership, delta_normal_set, empty_level_normal, galb_verify,
    ratio_operator_S, recession_identity_verify, slater_check, target_sets, check_tmain_certificate,
    delta_normal_membership_union, tmain_certificate_search, Cor1Result, Corolario, LevelProbe, NormalSetQuery,
    TmainSearch,
};
use crate::report::{support_comparison, two_sided, Outcome, ProbeOutcome, ProbeStatus, VerificationReport};
use crate::sequential::{
    default_schedule, sequential_certificate, teoepi_conditions_check, CheckMode, NormChoice, SequentialOutcome,
};
use crate::spectral::{
    conjugate_argmax, diag_reduced_membership, eig_sorted, eigenvalues, lmax_normal_membership, recession_quotient,
    spectral_conjugate, spectral_eval, spectral_normal_membership, spectral_recession, von_neumann_gap, SymMatrix,
    SymmetricFn,
};
use crate::subdiff::{eps_subdiff, fenchel_gap, Descriptor};
use crate::supcalc::{
    conj_subdiff_decompose, default_delta_grid, finitecase_rhs_membership, increasing_seq_verify, maxrule_rhs_support,
    maxrule_verify, supporting_line_sequence, FiniteFamily, FinitecaseResult, IncreasingSeqConfig,
};

/// Offsets added to the right-hand side only. A nonzero tamper turns an identity into
/// a deliberately false one, which the check must reject.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tamper {
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub eps: f64,
}

impl Tamper {
    pub fn is_active(&self) -> bool {
        self.delta != 0.0 || self.eps != 0.0
    }
}

const MAX_CERTIFICATES: usize = 16;

struct Ctx<'a> {
    inst: &'a Instance,
    p: &'a ProbeConfig,
    fns: Vec<ConvexFn>,
    rng: ChaCha8Rng,
}

impl<'a> Ctx<'a> {
    fn new(inst: &'a Instance) -> Result<Self> {
        let fns = inst.convex_functions()?;
        if fns.is_empty() {
            return Err(Error::Input("instance needs at least one function".into()));
        }
        let n = fns[0].dim();
        for f in &fns {
            check_dim(n, f.dim())?;
        }
        Ok(Ctx { inst, p: &inst.probe, fns, rng: ChaCha8Rng::seed_from_u64(inst.seed) })
    }

    fn dim(&self) -> usize {
        self.fns[0].dim()
    }

    fn phi(&self) -> Result<ConvexFn> {
        if self.fns.len() == 1 {
            Ok(self.fns[0].clone())
        } else {
            ConvexFn::finite_max(self.fns.clone())
        }
    }

    fn point(&self) -> Result<DVector<f64>> {
        let x = self.inst.point_vec()?;
        check_dim(self.dim(), x.len())?;
        Ok(x)
    }

    fn eps(&self) -> Result<f64> {
        let e = self.inst.params.eps.ok_or_else(|| Error::Input("instance needs params.eps".into()))?;
        if !(e >= 0.0) {
            return Err(Error::Precondition(format!("ε = {e} must be nonnegative")));
        }
        Ok(e)
    }

    fn delta(&self) -> Result<f64> {
        let d = self.inst.params.delta.ok_or_else(|| Error::Input("instance needs params.delta".into()))?;
        if !(d >= 0.0) {
            return Err(Error::Precondition(format!("δ = {d} must be nonnegative")));
        }
        Ok(d)
    }

    fn targets(&self, n: usize) -> Result<Vec<DVector<f64>>> {
        self.inst
            .targets
            .iter()
            .map(|t| {
                check_dim(n, t.len())?;
                Ok(DVector::from_column_slice(t))
            })
            .collect()
    }

    fn matrix_targets(&self, n: usize) -> Result<Vec<SymMatrix>> {
        self.inst
            .matrix_targets
            .iter()
            .map(|rows| {
                let m = SymMatrix::from_rows(rows)?;
                check_dim(n, m.dim())?;
                Ok(m)
            })
            .collect()
    }

    fn matrix_point(&self) -> Result<SymMatrix> {
        let rows = self.inst.matrix_point.as_ref().ok_or_else(|| Error::Input("instance needs a matrix_point".into()))?;
        SymMatrix::from_rows(rows)
    }

    fn symmetric(&self) -> Result<SymmetricFn> {
        SymmetricFn::new(self.phi()?)
    }

    fn uniform(&mut self, n: usize, s: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.rng.gen_range(-s..=s))
    }

    fn sym(&mut self, n: usize, s: f64) -> Result<SymMatrix> {
        let m = DMatrix::from_fn(n, n, |_, _| self.rng.gen_range(-s..=s));
        SymMatrix::new((&m + m.transpose()) * 0.5)
    }

    fn level_probe(&self) -> LevelProbe {
        LevelProbe { n_dirs: self.p.n_dirs.max(8), radius: self.p.radius, tol: self.p.tol }
    }
}

fn ext_of(v: f64) -> ExtReal {
    ExtReal::from_f64(v).unwrap_or(if v > 0.0 { ExtReal::PosInf } else { ExtReal::NegInf })
}

fn classify_ext(excess: ExtReal, tol: f64) -> Membership {
    match excess {
        ExtReal::Finite(e) => Membership::classify(e, tol),
        ExtReal::NegInf => Membership::Inside,
        ExtReal::PosInf => Membership::Outside,
    }
}

/// Probe comparing two membership verdicts; a band on either side is excluded.
fn agreement(label: String, dir: &DVector<f64>, lhs: (Membership, ExtReal), rhs: (Membership, ExtReal)) -> ProbeOutcome {
    let status = if lhs.0 == Membership::Band || rhs.0 == Membership::Band {
        ProbeStatus::Band
    } else if lhs.0 == rhs.0 {
        ProbeStatus::Pass
    } else {
        ProbeStatus::Fail
    };
    ProbeOutcome { label, direction: Some(dir.iter().copied().collect()), lhs: lhs.1, rhs: rhs.1, gap: ext_gap(lhs.1, rhs.1), status }
}

fn flag(label: impl Into<String>, lhs: ExtReal, rhs: ExtReal, ok: bool) -> ProbeOutcome {
    ProbeOutcome {
        label: label.into(),
        direction: None,
        lhs,
        rhs,
        gap: ext_gap(lhs, rhs),
        status: if ok { ProbeStatus::Pass } else { ProbeStatus::Fail },
    }
}

fn abs_gap(p: &ProbeOutcome) -> ExtReal {
    match p.gap {
        ExtReal::Finite(g) => ExtReal::Finite(g.abs()),
        _ => ExtReal::PosInf,
    }
}

fn attach(rep: &mut VerificationReport, cert: impl Serialize) {
    if rep.certificates.len() < MAX_CERTIFICATES {
        rep.certificates.push(serde_json::to_value(cert).expect("certificates serialise"));
    }
}

fn merge(into: &mut VerificationReport, prefix: &str, from: VerificationReport) {
    for mut p in from.probes {
        p.label = format!("{prefix}{}", p.label);
        into.push(p);
    }
    for (k, v) in from.worst {
        into.track(&k, v);
    }
    for n in from.notes {
        if !into.notes.contains(&n) {
            into.note(n);
        }
    }
    into.certificates.extend(from.certificates);
    if from.verdict == Outcome::Fail {
        into.verdict = Outcome::Fail;
    }
}

/// Finalises while keeping any verdict already forced by [`merge`] or [`VerificationReport::fail`].
fn close(mut rep: VerificationReport) -> VerificationReport {
    let forced = rep.verdict == Outcome::Fail;
    rep.finalize();
    if forced {
        rep.verdict = Outcome::Fail;
    }
    rep
}

/// Runs `theorem` on `inst`. The instance digest is left for the caller to stamp.
pub fn verify(theorem: TheoremId, inst: &Instance, tamper: &Tamper) -> Result<VerificationReport> {
    let tamperable = matches!(
        theorem,
        TheoremId::Maxmain | TheoremId::Finitecase | TheoremId::Tmain | TheoremId::Cor0 | TheoremId::Cor1
    );
    if tamper.is_active() && !tamperable {
        return Err(Error::Input(format!("tampering is not defined for {theorem}")));
    }
    if !(tamper.delta.is_finite() && tamper.eps.is_finite()) {
        return Err(Error::Input("tamper offsets must be finite".into()));
    }
    let mut ctx = Ctx::new(inst)?;
    let mut rep = match theorem {
        TheoremId::Thm1 => thm1(&mut ctx)?,
        TheoremId::Maxmain => maxmain(&mut ctx, tamper)?,
        TheoremId::Finitecase => finitecase(&mut ctx, tamper)?,
        TheoremId::Increasing0 => increasing0(&mut ctx)?,
        TheoremId::Tmain | TheoremId::Cor0 => tmain(&mut ctx, theorem, tamper)?,
        TheoremId::Cor1 => cor1(&mut ctx, tamper)?,
        TheoremId::Galb => galb(&mut ctx)?,
        TheoremId::Biz => biz(&mut ctx)?,
        TheoremId::Corolarioimportante => corolario(&mut ctx)?,
        TheoremId::Teoepi | TheoremId::Ct | TheoremId::Rii => sequential(&mut ctx, theorem)?,
        TheoremId::Spe => spe(&mut ctx)?,
        TheoremId::Lems => lems(&mut ctx)?,
        TheoremId::Diag => diag(&mut ctx)?,
        TheoremId::Lmax => lmax(&mut ctx)?,
        TheoremId::Reps => reps(&mut ctx)?,
    };
    rep.theorem = theorem.as_str().to_string();
    if tamper.is_active() {
        rep.note(format!("tampered right-hand side: δ += {}, ε += {}", tamper.delta, tamper.eps));
    }
    Ok(rep)
}

fn thm1(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let (eps, delta) = (ctx.eps()?, ctx.delta()?);
    if !(delta > 0.0) {
        return Err(Error::Precondition("δ must be positive".into()));
    }
    let n = ctx.dim();
    let tol = ctx.p.fenchel_tol;
    let mut targets = ctx.targets(n)?;
    if targets.is_empty() {
        let sub = eps_subdiff(&f, &x, eps)?;
        for _ in 0..ctx.p.samples.div_ceil(2) {
            let r = ctx.uniform(n, 3.0);
            if !sub.is_empty() {
                targets.push(sub.nearest(&r)?);
            }
            targets.push(r);
        }
    }
    let results: Vec<(ProbeOutcome, Option<_>)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<_> {
            let gap = fenchel_gap(&f, &x, g)?;
            let lhs = classify_ext(gap.add_finite(-eps), tol);
            let (rhs, cert) = match conj_subdiff_decompose(&f, g, &x, eps, delta, tol) {
                Ok(d) => (Membership::Inside, Some(d)),
                Err(Error::Input(_)) => (Membership::Outside, None),
                Err(e) => return Err(e),
            };
            let budget = cert.as_ref().map(|d| ExtReal::Finite(d.eps_i[0])).unwrap_or(ExtReal::PosInf);
            Ok((agreement(format!("g*#{i}"), g, (lhs, gap), (rhs, budget)), cert))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("thm1");
    for (p, c) in results {
        if let Some(c) = c {
            attach(&mut rep, c);
        }
        rep.push(p);
    }
    rep.note("witnesses: the point itself with ε₁ equal to its Fenchel gap");
    Ok(close(rep))
}

fn maxmain(ctx: &mut Ctx, tamper: &Tamper) -> Result<VerificationReport> {
    let fam = FiniteFamily::new(ctx.fns.clone())?;
    let x = ctx.point()?;
    let eps = ctx.eps()?;
    let dirs = probe_directions(ctx.dim(), ctx.p.n_dirs);
    if tamper.eps == 0.0 {
        return maxrule_verify(&fam, &x, eps, &dirs, &default_delta_grid(eps), ctx.p.tol);
    }
    let e2 = eps + tamper.eps;
    if !(e2 >= 0.0) {
        return Err(Error::Precondition("tampered ε must stay nonnegative".into()));
    }
    let lhs = eps_subdiff(&fam.sup, &x, eps)?;
    let grid = default_delta_grid(e2);
    support_comparison(
        "maxmain",
        &dirs,
        |v| lhs.support(v),
        |v| {
            let mut r = ExtReal::PosInf;
            for d in &grid {
                r = r.min(maxrule_rhs_support(&fam, &x, e2, *d, v)?);
            }
            Ok(r)
        },
        ctx.p.tol,
    )
}

fn finitecase(ctx: &mut Ctx, tamper: &Tamper) -> Result<VerificationReport> {
    let fam = FiniteFamily::new(ctx.fns.clone())?;
    let x = ctx.point()?;
    let eps = ctx.eps()?;
    let e2 = eps + tamper.eps;
    let n = ctx.dim();
    let tol = ctx.p.tol;
    let lhs = eps_subdiff(&fam.sup, &x, eps)?;
    if lhs.is_empty() {
        return Err(Error::Domain("x is outside dom Φ".into()));
    }
    let mut targets: Vec<(DVector<f64>, Membership)> = Vec::new();
    let explicit = ctx.targets(n)?;
    if explicit.is_empty() {
        let inner: Vec<DVector<f64>> = match &lhs.descriptor {
            Descriptor::Polytope { vrep, .. } => vrep.points.clone(),
            _ => (0..ctx.p.samples.min(32)).map(|_| ctx.uniform(n, 3.0)).map(|r| lhs.nearest(&r)).collect::<Result<_>>()?,
        };
        let scale = 3.0 * (1.0 + inner.iter().map(|v| v.amax()).fold(0.0, f64::max));
        for v in inner {
            targets.push((v, Membership::Inside));
        }
        let mut outside = 0;
        let mut attempts = 0;
        while outside < ctx.p.samples && attempts < 20 * ctx.p.samples.max(1) {
            attempts += 1;
            let r = ctx.uniform(n, scale);
            let p = lhs.nearest(&r)?;
            let d = &r - &p;
            if d.norm() < 1e-9 {
                continue;
            }
            let t = ctx.rng.gen_range(0.05..=1.0);
            let g = &p + d.normalize() * t;
            if lhs.membership(&g, tol)? == Membership::Outside {
                targets.push((g, Membership::Outside));
                outside += 1;
            }
        }
    } else {
        for g in explicit {
            let m = lhs.membership(&g, tol)?;
            targets.push((g, m));
        }
    }
    let probes: Vec<(ProbeOutcome, FinitecaseResult)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, (g, expect))| -> Result<_> {
            let r = finitecase_rhs_membership(&fam, &x, e2, g, tol)?;
            let (m, v) = match &r {
                FinitecaseResult::Inside { excess, .. } => (Membership::Inside, *excess),
                FinitecaseResult::Outside { best_excess } => (Membership::Outside, *best_excess),
            };
            let lhs_v = if *expect == Membership::Inside { ExtReal::ZERO } else { ExtReal::PosInf };
            Ok((agreement(format!("g#{i}"), g, (*expect, lhs_v), (m, ext_of(v))), r))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("finitecase");
    for (p, r) in probes {
        if matches!(r, FinitecaseResult::Inside { .. }) {
            attach(&mut rep, &r);
        }
        rep.push(p);
    }
    rep.note(format!("{} targets: LHS vertices expected inside, exterior probes expected outside", rep.probes.len()));
    Ok(close(rep))
}

fn increasing0(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let eps = ctx.eps()?;
    let radius = 2.0 * (1.0 + x.amax());
    supporting_line_sequence(&f, 1, &x, radius)?;
    let seq = |k: usize| supporting_line_sequence(&f, k, &x, radius).expect("validated above");
    let cfg = IncreasingSeqConfig { n_max: 64, burn_in: 8, delta: eps + 1e-3, n_dirs: ctx.p.n_dirs };
    let mut rep = increasing_seq_verify(&seq, Some(&f), &cfg, &x, eps, 1e-2)?;
    rep.note(format!("tangents at x̄ and Halton points of x̄ + [−{radius}, {radius}]ⁿ; δ = ε + 1e-3"));
    Ok(rep)
}

/// `{y : Ry ≤ Rx̄}` for the recession cone `{Ry ≤ 0}` of `[Φ ≤ Φ(x̄)]`.
fn translated_recession(f: &ConvexFn, x: &DVector<f64>, fx: f64) -> Result<Option<HPolyhedron>> {
    let Some(level) = sublevel_poly(f, ExtReal::Finite(fx)) else {
        return Ok(None);
    };
    let r = level.recession();
    let b = r.a() * x;
    Ok(Some(HPolyhedron::new(r.a().clone(), b)?))
}

/// Exact polyhedral δ-normal set of the target configuration, when Φ is polyhedral.
fn normal_polytope(f: &ConvexFn, x: &DVector<f64>, lambda: ExtReal, delta: f64) -> Result<Option<LpSet>> {
    let fx = f.value_at(x)?;
    let Some(level) = sublevel_poly(f, lambda) else {
        return Ok(None);
    };
    let mut parts = Vec::new();
    if !level.is_empty()? {
        parts.push(delta_normal_set(&level, x, delta)?);
    }
    if ExtReal::Finite(fx) > lambda {
        if let Some(rec) = translated_recession(f, x, fx)? {
            parts.push(delta_normal_set(&rec, x, delta)?);
        }
    }
    let mut it = parts.into_iter();
    let Some(mut acc) = it.next() else {
        return Ok(None);
    };
    for p in it {
        acc = acc.intersect(&p)?;
    }
    Ok(Some(acc))
}

fn tmain(ctx: &mut Ctx, theorem: TheoremId, tamper: &Tamper) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let delta = ctx.delta()?;
    let fx = f.value_at(&x)?;
    let lambda = match theorem {
        TheoremId::Cor0 => ExtReal::Finite(fx),
        _ => ctx.inst.params.lambda.unwrap_or(ExtReal::PosInf),
    };
    let n = ctx.dim();
    let (tol, cert_tol) = (ctx.p.tol, ctx.p.cert_tol);
    let sets = target_sets(&f, &x, lambda)?;
    let mut targets = ctx.targets(n)?;
    if targets.is_empty() {
        match normal_polytope(&f, &x, lambda, delta)? {
            Some(poly) => {
                let verts = poly.truncated_vertices(&probe_directions(n, ctx.p.n_dirs), ctx.p.radius)?;
                let outer: Vec<DVector<f64>> = verts.iter().filter(|v| v.norm() > 1e-9).map(|v| v * 1.5).collect();
                targets.extend(verts);
                targets.extend(outer);
            }
            None => {
                for _ in 0..ctx.p.samples.min(32) {
                    let g = ctx.uniform(n, 3.0);
                    targets.push(g);
                }
            }
        }
    }
    let q = NormalSetQuery { members: ctx.fns.clone(), xbar: x.clone(), delta: delta + tamper.delta, lambda, tol: cert_tol };
    if !(q.delta >= 0.0) {
        return Err(Error::Precondition("tampered δ must stay nonnegative".into()));
    }
    let rows: Vec<(ProbeOutcome, Option<String>, Option<serde_json::Value>)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<_> {
            let direct = delta_normal_membership_union(&sets, &x, delta, g, tol)?;
            let label = format!("g#{i}");
            let dir = Some(g.iter().copied().collect::<Vec<_>>());
            let search = match tmain_certificate_search(&q, g) {
                Ok(s) => Some(s),
                Err(Error::Input(_)) => None,
                Err(e) => return Err(e),
            };
            let (found, worst, cert, why) = match &search {
                None => {
                    let why = (direct.membership == Membership::Inside).then(|| format!("{label}: search rejected a member"));
                    (false, f64::INFINITY, None, why)
                }
                Some(TmainSearch::Found(c)) => {
                    let (comb, param, gap) = check_tmain_certificate(&q, g, c)?;
                    let worst = comb.max(param);
                    let ok = worst <= cert_tol && gap <= cert_tol;
                    let why = (!ok).then(|| format!("{label}: certificate fails recheck (residual {worst:e}, gap excess {gap:e})"));
                    (ok, worst, Some(serde_json::to_value(c).expect("certificates serialise")), why)
                }
                Some(TmainSearch::Exhausted { best }) => {
                    let w = best.as_ref().map(|c| c.worst_residual()).unwrap_or(f64::INFINITY);
                    (false, w, best.as_ref().map(|c| serde_json::to_value(c).expect("certificates serialise")), None)
                }
            };
            let status = match (direct.membership, found) {
                (Membership::Band, _) => ProbeStatus::Band,
                (Membership::Inside, true) | (Membership::Outside, false) => ProbeStatus::Pass,
                (Membership::Inside, false) if why.is_none() => ProbeStatus::Band,
                _ => ProbeStatus::Fail,
            };
            let note = match (direct.membership, found, &why) {
                (Membership::Inside, false, None) => Some(format!("{label}: search exhausted, best residual {worst:e}")),
                (Membership::Outside, true, _) => Some(format!("{label}: certificate found for an exterior vector")),
                (_, _, w) => w.clone(),
            };
            let p = ProbeOutcome {
                label,
                direction: dir,
                lhs: direct.sup_value,
                rhs: ext_of(worst),
                gap: ext_of(worst),
                status,
            };
            Ok((p, note, if found { cert } else { cert.filter(|_| direct.membership == Membership::Inside) }))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new(theorem.as_str());
    let mut exhausted = false;
    for (p, note, cert) in rows {
        if p.status == ProbeStatus::Pass && p.lhs.to_f64() <= delta + tol {
            rep.track("certificate_residual", p.rhs);
        }
        exhausted |= p.status == ProbeStatus::Band;
        if let Some(c) = cert {
            attach(&mut rep, c);
        }
        if let Some(nt) = note {
            rep.note(nt);
        }
        rep.push(p);
    }
    rep.note(format!("λ = {lambda}; probes: truncated δ-normal vertices (radius {}) and 1.5× scalings", ctx.p.radius));
    rep.finalize();
    if exhausted && rep.verdict != Outcome::Fail {
        rep.verdict = Outcome::Inconclusive;
    }
    Ok(rep)
}

/// Evaluates `eval` on batches of candidates until `want` non-band probes are collected
/// or `cap` candidates have been tried.
fn batched<F>(ctx: &mut Ctx, n: usize, scale: f64, want: usize, cap: usize, eval: F) -> Result<Vec<ProbeOutcome>>
where
    F: Fn(usize, &DVector<f64>) -> Result<ProbeOutcome> + Sync,
{
    let mut out = Vec::new();
    let mut kept = 0;
    let mut tried = 0;
    while kept < want && tried < cap {
        let batch: Vec<DVector<f64>> = (0..want.max(8).min(cap - tried)).map(|_| ctx.uniform(n, scale)).collect();
        let res: Vec<ProbeOutcome> =
            batch.par_iter().enumerate().map(|(i, g)| eval(tried + i, g)).collect::<Result<_>>()?;
        tried += batch.len();
        for p in res {
            if kept >= want {
                break;
            }
            if p.status != ProbeStatus::Band {
                kept += 1;
            }
            out.push(p);
        }
    }
    Ok(out)
}

fn cor1(ctx: &mut Ctx, tamper: &Tamper) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let delta = ctx.delta()?;
    if !(delta > 0.0) {
        return Err(Error::Precondition("δ must be positive".into()));
    }
    let d2 = delta + tamper.delta;
    if !(d2 > 0.0) {
        return Err(Error::Precondition("tampered δ must stay positive".into()));
    }
    let n = ctx.dim();
    let tol = ctx.p.tol;
    let fx = f.value_at(&x)?;
    let level = sublevel_set(&f, ExtReal::Finite(fx))?;
    let explicit = ctx.targets(n)?;
    let eval = |i: usize, g: &DVector<f64>| -> Result<ProbeOutcome> {
        let direct = delta_normal_membership(&level, &x, delta, g, tol)?;
        let (m, v) = match cor1_membership(&f, &x, d2, g, tol)? {
            Cor1Result::Inside { value, .. } => (Membership::classify(value - d2, tol), value),
            Cor1Result::Outside { best_value, .. } => (Membership::classify(best_value - d2, tol), best_value),
        };
        Ok(agreement(format!("g#{i}"), g, (direct.membership, direct.sup_value), (m, ext_of(v))))
    };
    let probes = if explicit.is_empty() {
        let want = ctx.p.samples;
        batched(ctx, n, 3.0, want, 10 * want.max(1), eval)?
    } else {
        explicit.par_iter().enumerate().map(|(i, g)| eval(i, g)).collect::<Result<_>>()?
    };
    let mut rep = VerificationReport::new("cor1");
    for p in probes {
        rep.track("value_gap", abs_gap(&p));
        rep.push(p);
    }
    rep.note(format!("direct δ-normal test of [Φ ≤ {fx}] against the scale scan; band probes excluded"));
    Ok(close(rep))
}

fn galb(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let fx = f.value_at(&x)?;
    let lambda = match ctx.inst.params.lambda {
        Some(ExtReal::Finite(l)) => l,
        Some(l) => return Err(Error::Precondition(format!("λ = {l} must be finite"))),
        None => match infimum(&f)? {
            ExtReal::Finite(m) => 0.5 * (m + fx),
            _ => fx - 1.0,
        },
    };
    let mut rep = galb_verify(&f, &x, lambda, &ctx.level_probe())?;
    rep.note(format!("λ = {lambda}, Φ(x̄) = {fx}"));
    Ok(rep)
}

fn biz(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let fx = f.value_at(&x)?;
    let lambda = match ctx.inst.params.lambda {
        Some(ExtReal::Finite(l)) => l,
        Some(l) => return Err(Error::Precondition(format!("λ = {l} must be finite"))),
        None => match infimum(&f)? {
            ExtReal::Finite(m) => m - 1.0,
            _ => return Err(Error::Precondition("Φ is unbounded below, so no level set is empty".into())),
        },
    };
    // ε is only taken from the instance alongside an explicit λ.
    let eps = match (ctx.inst.params.lambda, ctx.inst.params.eps) {
        (Some(_), Some(e)) => e,
        _ => fx - lambda,
    };
    let mut rep = empty_level_normal(&f, &x, lambda, eps, &ctx.level_probe())?;
    rep.note(format!("λ = {lambda}, ε = {eps}"));
    Ok(rep)
}

fn corolario(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let delta = ctx.delta()?;
    let n = ctx.dim();
    let tol = ctx.p.tol;
    let fx = f.value_at(&x)?;
    let slater = slater_check(&f, fx)?;
    let level = sublevel_set(&f, ExtReal::Finite(fx))?;
    let mut targets = ctx.targets(n)?;
    if targets.is_empty() {
        if let Some(poly) = normal_polytope(&f, &x, ExtReal::Finite(fx), delta)? {
            targets.extend(poly.truncated_vertices(&probe_directions(n, ctx.p.n_dirs), ctx.p.radius)?);
        }
        for _ in 0..ctx.p.samples.min(32) {
            let g = ctx.uniform(n, 3.0);
            targets.push(g);
        }
    }
    let rows: Vec<(ProbeOutcome, Option<String>, Corolario)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<_> {
            let label = format!("g#{i}");
            let direct = delta_normal_membership(&level, &x, delta, g, tol)?;
            let dec = corolario_decompose(&f, &x, delta, g, tol)?;
            let (branch_ok, why, rhs) = match &dec {
                Corolario::Bounded { mu, value } => {
                    let check = if *mu > 0.0 {
                        // ∂_δ(μΦ)(x̄) = μ ∂_{δ/μ}Φ(x̄); scaling g keeps the LP well conditioned
                        fenchel_gap(&f, &x, &(g / *mu))?.scale_convex(*mu)?
                    } else {
                        ExtReal::Finite(*value)
                    };
                    let ok = check <= ExtReal::Finite(delta + tol);
                    (ok, (!ok).then(|| format!("{label}: bounded witness μ = {mu} has gap {check}")), check)
                }
                Corolario::Horizon { trace } => {
                    let last = trace.last().map(|s| s.residual).unwrap_or(f64::INFINITY);
                    let why = slater.then(|| format!("{label}: horizon branch under Slater's condition"));
                    (!slater, why, ext_of(last))
                }
                Corolario::Outside { best_value } => (false, None, ext_of(*best_value)),
            };
            let inside = !matches!(dec, Corolario::Outside { .. });
            let status = match direct.membership {
                Membership::Band => ProbeStatus::Band,
                Membership::Inside if inside && branch_ok => ProbeStatus::Pass,
                Membership::Outside if !inside => ProbeStatus::Pass,
                _ => ProbeStatus::Fail,
            };
            let why = why.or_else(|| {
                (status == ProbeStatus::Fail).then(|| format!("{label}: direct test {:?} disagrees with {:?}", direct.membership, branch(&dec)))
            });
            let p = ProbeOutcome {
                label,
                direction: Some(g.iter().copied().collect()),
                lhs: direct.sup_value,
                rhs,
                gap: ext_gap(direct.sup_value, rhs),
                status,
            };
            Ok((p, why, dec))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("corolarioimportante");
    let mut horizons = 0;
    for (p, why, dec) in rows {
        if let Some(w) = why {
            rep.note(w);
        }
        if matches!(dec, Corolario::Horizon { .. }) {
            horizons += 1;
            attach(&mut rep, &dec);
        }
        rep.push(p);
    }
    rep.note(format!("Slater at Φ(x̄) = {fx}: {slater}; horizon branches: {horizons}"));
    Ok(close(rep))
}

fn branch(c: &Corolario) -> &'static str {
    match c {
        Corolario::Bounded { .. } => "bounded",
        Corolario::Horizon { .. } => "horizon",
        Corolario::Outside { .. } => "outside",
    }
}

fn sequential(ctx: &mut Ctx, theorem: TheoremId) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let n = ctx.dim();
    let (tol, cert_tol) = (ctx.p.tol, ctx.p.cert_tol);
    let fx = f.value_at(&x)?;
    let level = sublevel_set(&f, ExtReal::Finite(fx))?;
    let mode = if theorem == TheoremId::Ct { CheckMode::Corsin } else { CheckMode::Teoepi };
    let mut targets = ctx.targets(n)?;
    let mut exterior = Vec::new();
    if targets.is_empty() {
        match f.canonical() {
            Canonical::Poly(_) => {
                let c = sublevel_poly(&f, ExtReal::Finite(fx)).expect("polyhedral");
                let cone = delta_normal_set(&c, &x, 0.0)?;
                targets = cone.truncated_vertices(&probe_directions(n, ctx.p.n_dirs), ctx.p.radius)?;
            }
            Canonical::Quad(q) => {
                let gr = q.grad(&x);
                if gr.norm() > 1e-12 {
                    targets = [0.5, 1.0, 2.0].iter().map(|t| &gr * *t).collect();
                }
            }
            Canonical::Mixed => return Err(Error::Unsupported("sequential certificates on a mixed structure".into())),
        }
        let mut attempts = 0;
        while exterior.len() < (ctx.p.samples / 10).max(5) && attempts < 50 * ctx.p.samples.max(1) {
            attempts += 1;
            let g = ctx.uniform(n, 3.0);
            if delta_normal_membership(&level, &x, 0.0, &g, tol)?.membership == Membership::Outside {
                exterior.push(g);
            }
        }
    }
    let runs: Vec<Result<SequentialOutcome>> = targets
        .par_iter()
        .map(|g| sequential_certificate(&f, &x, g, &default_schedule(), cert_tol, NormChoice::Max))
        .collect();
    let mut rep = VerificationReport::new(theorem.as_str());
    for (i, (g, run)) in targets.iter().zip(runs).enumerate() {
        let label = format!("g#{i}");
        match run? {
            SequentialOutcome::Certified(cert) => {
                let sub = teoepi_conditions_check(&cert, &f, &x, cert_tol, mode)?;
                merge(&mut rep, &format!("{label} "), sub);
                let m = delta_normal_membership(&level, &x, 0.0, g, tol)?;
                rep.push(ProbeOutcome {
                    label: format!("{label} round-trip δ = 0"),
                    direction: Some(g.iter().copied().collect()),
                    lhs: m.sup_value,
                    rhs: ExtReal::ZERO,
                    gap: m.sup_value,
                    status: if m.membership == Membership::Outside { ProbeStatus::Fail } else { ProbeStatus::Pass },
                });
                rep.track("final_residual", ExtReal::Finite(cert.final_residual()));
                attach(&mut rep, &cert);
            }
            SequentialOutcome::Plateau(cert) => {
                let r = cert.final_residual();
                rep.push(flag(format!("{label} certified"), ext_of(r), ExtReal::Finite(cert_tol), false));
                rep.note(format!("{label}: residuals plateaued at {r:e}"));
            }
        }
    }
    let rejected: Vec<Result<bool>> = exterior
        .par_iter()
        .map(|g| match sequential_certificate(&f, &x, g, &default_schedule(), cert_tol, NormChoice::Max) {
            Err(Error::Input(_)) => Ok(true),
            Err(e) => Err(e),
            Ok(_) => Ok(false),
        })
        .collect();
    for (i, (g, r)) in exterior.iter().zip(rejected).enumerate() {
        let ok = r?;
        rep.push(ProbeOutcome {
            label: format!("exterior#{i} rejected"),
            direction: Some(g.iter().copied().collect()),
            lhs: ExtReal::ZERO,
            rhs: ExtReal::ZERO,
            gap: ExtReal::ZERO,
            status: if ok { ProbeStatus::Pass } else { ProbeStatus::Fail },
        });
    }
    rep.note(format!("{} normal-cone vertices (radius {}), {} exterior vectors", targets.len(), ctx.p.radius, exterior.len()));
    Ok(close(rep))
}

fn spe(ctx: &mut Ctx) -> Result<VerificationReport> {
    let sf = ctx.symmetric()?;
    let n = ctx.dim();
    let tol = ctx.p.fenchel_tol;
    let mut gs = ctx.matrix_targets(n)?;
    if gs.is_empty() {
        for _ in 0..ctx.p.samples.min(50) {
            gs.push(ctx.sym(n, 2.0)?);
        }
    }
    let pairs: Vec<(SymMatrix, SymMatrix)> =
        (0..ctx.p.samples).map(|_| Ok((ctx.sym(n, 3.0)?, ctx.sym(n, 3.0)?))).collect::<Result<_>>()?;
    let probes: Vec<ProbeOutcome> = gs
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<ProbeOutcome> {
            let rhs = spectral_conjugate(&sf, g)?;
            let d = eig_sorted(g)?;
            let label = format!("G#{i}");
            Ok(match conjugate_argmax(sf.inner(), &d.eigenvalues)? {
                Some(xs) => {
                    let xm = SymMatrix::a_u(&d.u, &xs);
                    let lhs = spectral_eval(&sf, &xm)?.neg().add_finite(g.inner(&xm));
                    two_sided(label, None, lhs, rhs, tol)
                }
                None => flag(label, ExtReal::PosInf, rhs, rhs == ExtReal::PosInf),
            })
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("spe");
    for p in probes {
        rep.track("conjugate_gap", abs_gap(&p));
        rep.push(p);
    }
    let worst = pairs
        .par_iter()
        .map(|(g, x)| Ok(von_neumann_gap(g, x)? / (1.0 + g.frobenius() * x.frobenius())))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !pairs.is_empty() {
        rep.push(flag(format!("von neumann ({} pairs)", pairs.len()), ext_of(worst), ExtReal::Finite(-1e-9), worst >= -1e-9));
    }
    rep.note("lhs: tr(GX*) − F(X*) with X* built in the eigenbasis of G; rhs: f*(λ(G))");
    Ok(close(rep))
}

fn lems(ctx: &mut Ctx) -> Result<VerificationReport> {
    let sf = ctx.symmetric()?;
    let n = ctx.dim();
    let x0 = match &ctx.inst.matrix_point {
        Some(_) => ctx.matrix_point()?,
        None => SymMatrix::diag(&vec![0.0; n]),
    };
    check_dim(n, x0.dim())?;
    let mut xs = ctx.matrix_targets(n)?;
    if xs.is_empty() {
        for _ in 0..ctx.p.samples {
            xs.push(ctx.sym(n, 2.0)?);
        }
    }
    let probes: Vec<ProbeOutcome> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x)| Ok(two_sided(format!("X#{i}"), None, spectral_recession(&sf, x)?, recession_quotient(&sf, &x0, x)?, 1e-6)))
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("lems");
    for p in probes {
        rep.track("recession_gap", abs_gap(&p));
        rep.push(p);
    }
    if sf.inner().is_polyhedral() {
        let sub = recession_identity_verify(sf.inner(), &eigenvalues(&x0)?, ctx.p.n_dirs, 1e-9)?;
        merge(&mut rep, "identity ", sub);
    }
    rep.note("direct quotient read at t = 1e9 from X₀");
    Ok(close(rep))
}

fn commuting_probe(ctx: &mut Ctx, u: &DMatrix<f64>, n: usize) -> SymMatrix {
    let r = 10f64.powf(ctx.rng.gen_range(-2.0..=0.5));
    let gamma = ctx.uniform(n, 1.0) * r;
    SymMatrix::a_u(u, &gamma)
}

fn diag(ctx: &mut Ctx) -> Result<VerificationReport> {
    let sf = ctx.symmetric()?;
    let n = ctx.dim();
    let xbar = ctx.matrix_point()?;
    check_dim(n, xbar.dim())?;
    let delta = ctx.delta()?;
    let tol = ctx.p.tol;
    let alpha = match ctx.inst.params.alpha {
        Some(a) => a,
        None => spectral_eval(&sf, &xbar)?.finite().ok_or_else(|| Error::Domain("X̄ is outside dom F".into()))?,
    };
    let dx = eig_sorted(&xbar)?;
    let mut gs = ctx.matrix_targets(n)?;
    if gs.is_empty() {
        for _ in 0..ctx.p.samples {
            gs.push(commuting_probe(ctx, &dx.u, n));
        }
    }
    let probes: Vec<ProbeOutcome> = gs
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<ProbeOutcome> {
            let m = spectral_normal_membership(&sf, &xbar, alpha, delta, g, tol)?;
            let r = diag_reduced_membership(&sf, &xbar, alpha, delta, g, tol)?;
            let dir = DVector::from_iterator(n * n, g.matrix().iter().copied());
            Ok(agreement(format!("G#{i}"), &dir, (m.membership, m.sup_value), (r.membership, r.sup_value)))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("diag");
    for p in probes {
        rep.push(p);
    }
    rep.note(format!("α = {alpha}, δ = {delta}; commuting probes G = A_U γ"));
    Ok(close(rep))
}

fn lmax(ctx: &mut Ctx) -> Result<VerificationReport> {
    let xbar = ctx.matrix_point()?;
    let n = xbar.dim();
    let delta = ctx.delta()?;
    let tol = ctx.p.tol;
    let dx = eig_sorted(&xbar)?;
    let alpha = ctx.inst.params.alpha.unwrap_or(dx.eigenvalues[0]);
    let sf = SymmetricFn::max_coordinate(n);
    let mut gs = ctx.matrix_targets(n)?;
    if gs.is_empty() {
        for k in 0..ctx.p.samples {
            if k % 2 == 0 {
                gs.push(commuting_probe(ctx, &dx.u, n));
            } else {
                gs.push(ctx.sym(n, 1.0)?);
            }
        }
    }
    let probes: Vec<ProbeOutcome> = gs
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<ProbeOutcome> {
            let a = lmax_normal_membership(&xbar, alpha, delta, g, tol)?;
            let b = spectral_normal_membership(&sf, &xbar, alpha, delta, g, tol)?;
            let kind = if a.commuting { "commuting" } else { "general" };
            let dir = DVector::from_iterator(n * n, g.matrix().iter().copied());
            Ok(agreement(format!("G#{i} {kind}"), &dir, (a.membership, a.sup_value), (b.membership, b.sup_value)))
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("lmax");
    for p in probes {
        rep.push(p);
    }
    rep.note(format!("α = {alpha}, δ = {delta}; λ_max form against the generic spectral level test"));
    Ok(close(rep))
}

fn reps(ctx: &mut Ctx) -> Result<VerificationReport> {
    let f = ctx.phi()?;
    let x = ctx.point()?;
    let n = ctx.dim();
    let dirs: Vec<DVector<f64>> = match &ctx.inst.direction {
        Some(v) => {
            check_dim(n, v.len())?;
            vec![DVector::from_column_slice(v)]
        }
        None => probe_directions(n, ctx.p.n_dirs).into_iter().take(8).collect(),
    };
    let mut grid = vec![0.0];
    grid.extend((0..24).map(|k| 10f64.powf(-3.0 + 4.0 * k as f64 / 23.0)));
    let bases = [0.0, 0.01, 0.1, 1.0];
    let hs: Vec<f64> = (2..=6).map(|j| 10f64.powi(-j)).collect();
    let per_dir: Vec<Vec<ProbeOutcome>> = dirs
        .par_iter()
        .enumerate()
        .map(|(d, v)| -> Result<Vec<ProbeOutcome>> {
            let samples = grid.iter().map(|e| ratio_operator_S(&f, &x, v, *e)).collect::<Result<Vec<_>>>()?;
            let mut worst_prod = f64::INFINITY;
            let mut pairs = 0usize;
            for i in 0..samples.len() {
                for j in i + 1..samples.len() {
                    for s0 in &samples[i].s_values {
                        for s1 in &samples[j].s_values {
                            let ds = s0.to_f64() - s1.to_f64();
                            let prod = if ds.is_nan() { 0.0 } else { (grid[i] - grid[j]) * ds };
                            worst_prod = worst_prod.min(if prod.is_nan() { 0.0 } else { prod });
                            pairs += 1;
                        }
                    }
                }
            }
            let mut out = Vec::new();
            let label = format!("v#{d}");
            out.push(flag(
                format!("{label} S monotone ({pairs} pairs)"),
                ext_of(worst_prod.min(f64::MAX)),
                ExtReal::Finite(-1e-9),
                pairs == 0 || worst_prod >= -1e-9,
            ));
            let rs: Vec<f64> = samples.iter().map(|s| s.value.to_f64()).collect();
            let drop = rs.windows(2).map(|w| if w[0].is_finite() && w[1].is_finite() { w[0] - w[1] } else { 0.0 }).fold(0.0, f64::max);
            out.push(flag(format!("{label} R non-decreasing"), ExtReal::Finite(drop), ExtReal::Finite(1e-10), drop <= 1e-10));
            for &e0 in &bases {
                let r0 = ratio_operator_S(&f, &x, v, e0)?.value;
                let ExtReal::Finite(r0) = r0 else {
                    continue;
                };
                let mut diffs = Vec::new();
                for h in &hs {
                    diffs.push((ratio_operator_S(&f, &x, v, e0 + h)?.value.to_f64() - r0).abs());
                }
                // Vanishing modulus: non-increasing in h and down by a decade over four decades of h.
                let (first, last) = (diffs[0], *diffs.last().expect("nonempty"));
                let shrinking = diffs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
                let bound = 0.1 * first + 1e-9;
                out.push(flag(
                    format!("{label} R continuous at ε = {e0}"),
                    ext_of(last),
                    ExtReal::Finite(bound),
                    shrinking && last <= bound,
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rep = VerificationReport::new("reps");
    for p in per_dir.into_iter().flatten() {
        rep.push(p);
    }
    rep.note("ε-grid: 0 and 24 log points on [1e-3, 10]; continuity at h = 1e-2 … 1e-6");
    Ok(close(rep))
}
