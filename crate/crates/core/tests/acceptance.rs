//! Acceptance criteria, one test each. Every test writes a single `criterion N: PASS|FAIL`
//! line straight to stderr (so it survives output capture) before asserting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subnormal::convexfn::{conjugate_eval, eps_dir_derivative, sublevel_poly};
use subnormal::geometry::directions::probe_directions;
use subnormal::geometry::Membership;
use subnormal::harness::{generate, run_suite, run_verify, Expect, Family, GenRequest, Instance, SuiteConfig, Tamper, TheoremId};
use subnormal::normalcone::{
    corolario_decompose, delta_normal_membership, delta_normal_set, empty_level_normal, galb_verify, ratio_operator_S,
    recession_identity_verify, Corolario, LevelProbe,
};
use subnormal::report::{Outcome, ProbeStatus, VerificationReport};
use subnormal::sequential::{
    br_step, default_schedule, level_set_at, sequential_certificate, teoepi_conditions_check, CheckMode, NormChoice,
    SequentialOutcome,
};
use subnormal::spectral::{
    diag_reduced_membership, lmax_normal_membership, recession_quotient, spectral_conjugate, spectral_eps_subdiff_membership,
    spectral_eval, spectral_recession, SymMatrix, SymmetricFn,
};
use subnormal::subdiff::{eps_subdiff, fenchel_gap, Descriptor};
use subnormal::supcalc::{finitecase_rhs_membership, increasing_seq_verify, supporting_line_sequence, FiniteFamily, IncreasingSeqConfig};
use subnormal::{ConvexFn, Error, ExtReal};

type Check = std::result::Result<String, String>;

fn report(id: usize, name: &str, res: Check) {
    let line = match &res {
        Ok(d) => format!("criterion {id:>2}: PASS  {name}  ({d})"),
        Err(d) => format!("criterion {id:>2}: FAIL  {name}  ({d})"),
    };
    let _ = writeln!(std::io::stderr(), "{line}");
    if let Err(d) = res {
        panic!("criterion {id} failed: {d}");
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

fn gen(family: Family, dim: usize, size: usize, seed: u64) -> Instance {
    generate(&GenRequest { family, dim, size, seed }).expect("generator accepts the request")
}

fn single(inst: &Instance) -> (ConvexFn, DVector<f64>) {
    let fs = inst.convex_functions().unwrap();
    (fs.into_iter().next().unwrap(), inst.point_vec().unwrap())
}

fn func(inst: &Instance) -> ConvexFn {
    inst.convex_functions().unwrap().into_iter().next().unwrap()
}

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn val(f: &ConvexFn, x: &DVector<f64>) -> f64 {
    f.eval(x).unwrap().to_f64()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-r..=r))
}

/// `Φ'_ε(x; v)` by golden section on the perspective `s ↦ s(Φ(x + v/s) − Φ(x) + ε)`, which
/// is convex in `s = 1/t`.
fn eps_deriv_oracle(f: &ConvexFn, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> f64 {
    let fx = val(f, x);
    let h = |s: f64| {
        let s = s.max(1e-13);
        s * (val(f, &(x + v / s)) - fx + eps)
    };
    let (mut a, mut b) = (0.0f64, 1e5f64);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..400 {
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - r * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + r * (b - a);
            hd = h(d);
        }
    }
    hc.min(hd).min(h(a)).min(h(b))
}

fn slopes_offsets(inst: &Instance, k: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    match &inst.functions[k] {
        subnormal::convexfn::FnSpec::MaxAffine { slopes, offsets } => (slopes.iter().map(|s| dv(s)).collect(), offsets.clone()),
        other => panic!("expected a max-affine member, got {other:?}"),
    }
}

fn max_gap(rep: &VerificationReport) -> f64 {
    rep.probes.iter().map(|p| p.gap.to_f64().abs()).fold(0.0, f64::max)
}

fn sym_random(rng: &mut ChaCha8Rng, n: usize, r: f64) -> SymMatrix {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-r..=r));
    SymMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

fn sorted_eigs(m: &DMatrix<f64>) -> DVector<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    DVector::from_vec(e)
}

#[test]
fn c01_fenchel_young_and_biconjugation() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut ineq, mut eq, mut bic) = (0usize, 0usize, 0usize);
        for seed in 0..200u64 {
            let dim = 1 + (seed % 4) as usize;
            let quad = seed >= 100;
            let inst = if quad {
                gen(Family::Quadratic, dim, 1 + (seed % 4) as usize, seed)
            } else {
                gen(Family::Maxaffine, dim, 2 + (seed % 7) as usize, seed)
            };
            let (f, _) = single(&inst);
            let conj = |g: &DVector<f64>| conjugate_eval(&f, g).map_err(e2s);
            for _ in 0..20 {
                let x = uniform(&mut rng, dim, 3.0);
                let fx = val(&f, &x);
                // Inequality at arbitrary slopes.
                let g = uniform(&mut rng, dim, 4.0);
                if let ExtReal::Finite(c) = conj(&g)? {
                    ensure(fx + c - g.dot(&x) >= -1e-9, || format!("seed {seed}: Fenchel-Young violated by {}", fx + c - g.dot(&x)))?;
                }
                ineq += 1;
                // Equality at a subgradient pair.
                let sub = if quad {
                    let subnormal::convexfn::FnSpec::Quadratic { q, c, .. } = &inst.functions[0] else { unreachable!() };
                    let qm = DMatrix::from_fn(dim, dim, |i, j| q[i][j]);
                    &qm * &x + dv(c)
                } else {
                    let (sl, of) = slopes_offsets(&inst, 0);
                    let k = (0..sl.len()).max_by(|&i, &j| (sl[i].dot(&x) + of[i]).total_cmp(&(sl[j].dot(&x) + of[j]))).unwrap();
                    sl[k].clone()
                };
                let c = conj(&sub)?.to_f64();
                ensure((fx + c - sub.dot(&x)).abs() <= 1e-9, || format!("seed {seed}: equality gap {}", fx + c - sub.dot(&x)))?;
                eq += 1;
                // Biconjugate at x.
                let fxx = if quad {
                    let base = sub.dot(&x) - c;
                    for i in 0..dim {
                        for s in [1e-3, -1e-3] {
                            let mut g2 = sub.clone();
                            g2[i] += s;
                            if let ExtReal::Finite(c2) = conj(&g2)? {
                                ensure(g2.dot(&x) - c2 <= base + 1e-12, || format!("seed {seed}: sup not attained at ∇Φ(x)"))?;
                            }
                        }
                    }
                    base
                } else {
                    let (sl, _) = slopes_offsets(&inst, 0);
                    let mut best = f64::NEG_INFINITY;
                    for a in &sl {
                        best = best.max(a.dot(&x) - conj(a)?.to_f64());
                    }
                    best
                };
                ensure((fxx - fx).abs() <= 1e-8, || format!("seed {seed}: Φ** − Φ = {}", fxx - fx))?;
                bic += 1;
            }
        }
        Ok(format!("200 instances; {ineq} inequality, {eq} equality, {bic} biconjugate checks"))
    };
    report(1, "Fenchel-Young and biconjugation", run());
}

#[test]
fn c02_eps_support_identity() {
    let run = || -> Check {
        let mut worst = 0.0f64;
        let mut worst_oracle = 0.0f64;
        for seed in 0..100u64 {
            let dim = 1 + (seed % 4) as usize;
            let inst = if seed % 2 == 0 {
                gen(Family::Maxaffine, dim, 2 + (seed % 7) as usize, 2000 + seed)
            } else {
                gen(Family::Quadratic, dim, 1 + (seed % 4) as usize, 2000 + seed)
            };
            let (f, x) = single(&inst);
            let dirs = probe_directions(dim, 32);
            for eps in [0.1, 1.0] {
                let s = eps_subdiff(&f, &x, eps).map_err(e2s)?;
                for v in &dirs {
                    let sup = s.support(v).map_err(e2s)?.to_f64();
                    let der = eps_dir_derivative(&f, &x, v, eps).map_err(e2s)?.to_f64();
                    let orc = eps_deriv_oracle(&f, &x, v, eps);
                    worst = worst.max((sup - der).abs());
                    worst_oracle = worst_oracle.max((sup - orc).abs());
                    ensure((sup - der).abs() <= 1e-7, || format!("seed {seed} ε {eps}: support {sup} vs derivative {der}"))?;
                    ensure((sup - orc).abs() <= 1e-7, || format!("seed {seed} ε {eps}: support {sup} vs perspective oracle {orc}"))?;
                }
            }
        }
        Ok(format!("100 instances × 32 dirs × 2 ε; max gap {worst:.1e}, vs oracle {worst_oracle:.1e}"))
    };
    report(2, "epsilon-support identity", run());
}

#[test]
fn c03_maxmain_equality() {
    let run = || -> Check {
        let mut worst = 0.0f64;
        for seed in 0..50u64 {
            let dim = 1 + (seed % 3) as usize;
            let size = 2 + (seed % 5) as usize;
            let eps = if seed % 2 == 0 { 0.0 } else { 0.2 };
            let mut inst = gen(Family::Finitemax, dim, size, 3000 + seed);
            inst.params.eps = Some(eps);
            inst.probe.tol = 1e-3;
            let rep = run_verify(TheoremId::Maxmain, &inst, &Tamper::default()).map_err(e2s)?;
            let gap = max_gap(&rep);
            worst = worst.max(gap);
            ensure(rep.verdict != Outcome::Fail && gap <= 1e-3, || format!("seed {seed}: verdict {:?}, gap {gap}", rep.verdict))?;
            // The left side against an oracle for the supremum itself.
            let members = inst.convex_functions().unwrap();
            let phi = ConvexFn::finite_max(members).unwrap();
            let x = inst.point_vec().unwrap();
            let fx = val(&phi, &x);
            let pieces: Vec<(DVector<f64>, f64)> = (0..inst.functions.len())
                .flat_map(|k| {
                    let (s, o) = slopes_offsets(&inst, k);
                    s.into_iter().zip(o)
                })
                .collect();
            for p in rep.probes.iter().take(8) {
                let v = dv(p.direction.as_ref().unwrap());
                let want = if eps == 0.0 {
                    pieces
                        .iter()
                        .filter(|(a, b)| (a.dot(&x) + b - fx).abs() <= 1e-12)
                        .map(|(a, _)| a.dot(&v))
                        .fold(f64::NEG_INFINITY, f64::max)
                } else {
                    eps_deriv_oracle(&phi, &x, &v, eps)
                };
                ensure((p.lhs.to_f64() - want).abs() <= 1e-6, || format!("seed {seed}: lhs {} vs oracle {want}", p.lhs))?;
            }
        }
        Ok(format!("50 instances, ε ∈ {{0, 0.2}}; max two-sided gap {worst:.1e}"))
    };
    report(3, "maxmain equality", run());
}

#[test]
fn c04_finitecase_vertices_and_exterior() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut verts, mut ext, mut banded) = (0usize, 0usize, 0usize);
        for seed in 0..20u64 {
            let n = 2 + (seed % 2) as usize;
            let inst = gen(Family::Finitemax, 2, n, 4000 + seed);
            let members = inst.convex_functions().unwrap();
            let fam = FiniteFamily::new(members.clone()).map_err(e2s)?;
            let phi = ConvexFn::finite_max(members).unwrap();
            let x = inst.point_vec().unwrap();
            let eps = if seed % 2 == 0 { 0.2 } else { 1.0 };
            let lhs = eps_subdiff(&phi, &x, eps).map_err(e2s)?;
            let Descriptor::Polytope { vrep, .. } = &lhs.descriptor else {
                return Err(format!("seed {seed}: expected a polytope"));
            };
            for g in &vrep.points {
                let gap = fenchel_gap(&phi, &x, g).map_err(e2s)?.to_f64();
                ensure(gap <= eps + 1e-9, || format!("seed {seed}: vertex {g:?} has gap {gap} > ε"))?;
                let r = finitecase_rhs_membership(&fam, &x, eps, g, 1e-6).map_err(e2s)?;
                ensure(r.is_inside(), || format!("seed {seed}: vertex {:?} rejected: {r:?}", g.as_slice()))?;
                verts += 1;
            }
            for _ in 0..50 {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let v = dv(&[a.cos(), a.sin()]);
                let top = vrep.points.iter().max_by(|p, q| p.dot(&v).total_cmp(&q.dot(&v))).unwrap();
                let g = top + &v * rng.gen_range(0.05..=1.0);
                match finitecase_rhs_membership(&fam, &x, eps, &g, 1e-6).map_err(e2s)? {
                    subnormal::supcalc::FinitecaseResult::Outside { best_excess } if best_excess <= 1e-5 => banded += 1,
                    subnormal::supcalc::FinitecaseResult::Outside { .. } => ext += 1,
                    r => return Err(format!("seed {seed}: exterior {:?} accepted: {r:?}", g.as_slice())),
                }
            }
        }
        Ok(format!("20 instances; {verts} vertices accepted, {ext} exterior probes rejected, {banded} in band"))
    };
    report(4, "finitecase vertex and exterior probes", run());
}

#[test]
fn c05_increasing_sequence() {
    let run = || -> Check {
        let f = ConvexFn::half_sq_norm(1);
        let mut out = Vec::new();
        for (x0, eps) in [(0.5, 0.2), (-1.0, 1.0)] {
            let x = dv(&[x0]);
            let delta = eps + 1e-3;
            let seq = |n: usize| supporting_line_sequence(&f, n, &x, 4.0).unwrap();
            let cfg = IncreasingSeqConfig { n_max: 64, burn_in: 8, delta, n_dirs: 2 };
            let rep = increasing_seq_verify(&seq, Some(&f), &cfg, &x, eps, 1e-2).map_err(e2s)?;
            ensure(rep.verdict == Outcome::Pass, || format!("x {x0}: verdict {:?} {:?}", rep.verdict, rep.notes))?;
            // ∂_ε(½x²)(x) = [x − √(2ε), x + √(2ε)].
            let r = (2.0 * eps).sqrt();
            let sup = |v: f64| if v > 0.0 { x0 + r } else { -(x0 - r) };
            let gaps = |n: usize| -> std::result::Result<(f64, f64), String> {
                let s = eps_subdiff(&seq(n), &x, delta).map_err(e2s)?;
                let mut d = 0.0f64;
                let mut two = 0.0f64;
                for v in [1.0, -1.0] {
                    let sn = s.support(&dv(&[v])).map_err(e2s)?.to_f64();
                    d = d.max(sup(v) - sn);
                    two = two.max((sup(v) - sn).abs());
                }
                Ok((d.max(0.0), two))
            };
            let mut prev = f64::INFINITY;
            for n in 8..=64 {
                let (_, two) = gaps(n)?;
                ensure(two <= prev + 1e-9, || format!("x {x0}: gap rises at N = {n}: {prev} → {two}"))?;
                prev = two;
            }
            let (_, two) = gaps(64)?;
            ensure(two <= 1e-2, || format!("x {x0}: terminal gap {two}"))?;
            out.push(format!("{two:.1e}"));
        }
        Ok(format!("½x², N = 64, δ = ε + 1e-3; terminal gaps {}", out.join(", ")))
    };
    report(5, "increasing0 supporting-line sequence", run());
}

#[test]
fn c06_cor1_against_direct_lp() {
    let run = || -> Check {
        let mut min_nonband = usize::MAX;
        for seed in 0..30u64 {
            let mut inst = gen(Family::Maxaffine, 2, 3 + (seed % 5) as usize, 6000 + seed);
            inst.params.delta = Some(if seed % 2 == 0 { 0.25 } else { 1.0 });
            let rep = run_verify(TheoremId::Cor1, &inst, &Tamper::default()).map_err(e2s)?;
            let pass = rep.count(ProbeStatus::Pass);
            let fail = rep.count(ProbeStatus::Fail);
            min_nonband = min_nonband.min(pass + fail);
            ensure(fail == 0 && pass >= 100, || format!("seed {seed}: {pass} agree, {fail} disagree"))?;
        }
        Ok(format!("30 instances, δ ∈ {{0.25, 1}}; 100% agreement, ≥ {min_nonband} non-band probes each"))
    };
    report(6, "cor1 vs direct delta-normal LP", run());
}

#[test]
fn c07_tmain_certificates() {
    let run = || -> Check {
        let mut certified = 0usize;
        for seed in 0..30u64 {
            let (theorem, family) = match seed % 3 {
                0 => (TheoremId::Tmain, Family::Maxaffine),
                1 => (TheoremId::Cor0, Family::Maxaffine),
                _ => (TheoremId::Cor0, Family::Indicator),
            };
            let mut inst = gen(family, 2, if family == Family::Indicator { 4 } else { 5 }, 7000 + seed);
            if theorem == TheoremId::Tmain {
                let (f, x) = single(&inst);
                inst.params.lambda = Some(ExtReal::Finite(val(&f, &x) + 0.5));
            }
            let rep = run_verify(theorem, &inst, &Tamper::default()).map_err(e2s)?;
            ensure(rep.verdict == Outcome::Pass, || format!("seed {seed} {theorem}: {:?} {:?}", rep.verdict, rep.notes))?;
            ensure(rep.count(ProbeStatus::Band) == 0, || format!("seed {seed}: search exhausted on some vertex"))?;
            for c in &rep.certificates {
                let comb = c["residual_comb"].as_f64().unwrap_or(f64::INFINITY);
                let param = c["residual_param"].as_f64().unwrap_or(f64::INFINITY);
                ensure(comb <= 1e-4 && param <= 1e-4, || format!("seed {seed}: certificate residuals {comb}, {param}"))?;
                certified += 1;
            }
        }
        Ok(format!("30 instances; {certified} certificates, all residuals ≤ 1e-4"))
    };
    report(7, "tmain / cor0 certificates", run());
}

#[test]
fn c08_galb_and_biz() {
    let run = || -> Check {
        let mut worst = 0.0f64;
        for seed in 0..30u64 {
            let theorem = if seed % 2 == 0 { TheoremId::Galb } else { TheoremId::Biz };
            let inst = gen(Family::Maxaffine, 2, 5, 8000 + seed);
            let rep = run_verify(theorem, &inst, &Tamper::default()).map_err(e2s)?;
            let gap = max_gap(&rep);
            worst = worst.max(gap);
            ensure(rep.verdict == Outcome::Pass && gap <= 1e-3, || format!("seed {seed} {theorem}: {:?}, gap {gap}", rep.verdict))?;
        }
        // Precondition paths.
        let f = ConvexFn::max_affine(vec![dv(&[1.0]), dv(&[-1.0])], vec![0.0, 0.0]).unwrap();
        let x = dv(&[2.0]);
        let p = LevelProbe::default();
        let pre = |r: subnormal::Result<VerificationReport>| matches!(r, Err(Error::Precondition(_)));
        ensure(pre(empty_level_normal(&f, &x, 1.0, 5.0, &p)), || "nonempty level accepted by biz".into())?;
        ensure(pre(empty_level_normal(&f, &x, -1.0, 2.0, &p)), || "ε below Φ(x̄) − λ accepted".into())?;
        ensure(empty_level_normal(&f, &x, -1.0, 3.0, &p).map_err(e2s)?.passed(), || "biz identity failed on |x|".into())?;
        ensure(galb_verify(&f, &x, -1.0, &p).is_err(), || "galb accepted an empty level".into())?;
        ensure(galb_verify(&f, &x, 1.0, &p).map_err(e2s)?.passed(), || "galb identity failed on |x|".into())?;
        Ok(format!("30 instances; max gap {worst:.1e}; precondition paths rejected"))
    };
    report(8, "galb and biz", run());
}

#[test]
fn c09_corolarioimportante() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut slater_probes = 0usize;
        for seed in 0..10u64 {
            let inst = gen(Family::Maxaffine, 2, 5, 9000 + seed);
            let rep = run_verify(TheoremId::Corolarioimportante, &inst, &Tamper::default()).map_err(e2s)?;
            ensure(rep.verdict == Outcome::Pass, || format!("seed {seed}: {:?} {:?}", rep.verdict, rep.notes))?;
            let (f, x) = single(&inst);
            for _ in 0..20 {
                let g = uniform(&mut rng, 2, 3.0);
                let d = corolario_decompose(&f, &x, 0.25, &g, 1e-6).map_err(e2s)?;
                ensure(!matches!(d, Corolario::Horizon { .. }), || format!("seed {seed}: horizon branch under Slater"))?;
                slater_probes += 1;
            }
        }
        // Slater fails at a minimiser: the level set is {0} and every g is normal.
        let sq = ConvexFn::half_sq_norm(2);
        let linf = ConvexFn::max_affine(
            vec![dv(&[1.0, 0.0]), dv(&[-1.0, 0.0]), dv(&[0.0, 1.0]), dv(&[0.0, -1.0])],
            vec![0.0; 4],
        )
        .unwrap();
        let x = dv(&[0.0, 0.0]);
        let (mut bounded, mut horizon) = (0usize, 0usize);
        for (name, f) in [("½‖x‖²", &sq), ("‖x‖∞", &linf)] {
            for delta in [0.0, 0.5] {
                for _ in 0..20 {
                    let g = uniform(&mut rng, 2, 3.0);
                    match corolario_decompose(f, &x, delta, &g, 1e-6).map_err(e2s)? {
                        Corolario::Bounded { mu, .. } if mu > 0.0 => {
                            let gap = fenchel_gap(f, &x, &(&g / mu)).map_err(e2s)?.to_f64() * mu;
                            ensure(gap <= delta + 1e-6, || format!("{name} δ {delta}: witness μ {mu} has gap {gap}"))?;
                            bounded += 1;
                        }
                        Corolario::Bounded { .. } => return Err(format!("{name}: domain witness at a point of ℝ²")),
                        Corolario::Horizon { trace } => {
                            let last = trace.last().unwrap();
                            // ∂_ε(½‖·‖²)(0) is the ball of radius √(2ε); ∂_ε‖·‖∞(0) is the unit ℓ1 ball.
                            let dist = if name == "½‖x‖²" {
                                (g.norm() / last.mu - (2.0 * last.eps).sqrt()).max(0.0)
                            } else {
                                let l1: f64 = g.iter().map(|c| c.abs()).sum::<f64>() / last.mu;
                                (l1 - 1.0).max(0.0)
                            };
                            ensure(last.mu * dist <= 1e-6, || format!("{name} δ {delta}: horizon residual {}", last.mu * dist))?;
                            ensure((last.mu * last.eps - delta).abs() <= 1e-3, || format!("{name}: μ·ε = {}", last.mu * last.eps))?;
                            horizon += 1;
                        }
                        Corolario::Outside { best_value } => {
                            return Err(format!("{name} δ {delta}: normal vector {:?} rejected ({best_value})", g.as_slice()))
                        }
                    }
                }
            }
        }
        Ok(format!("{slater_probes} Slater probes without horizon; Slater-false: {bounded} bounded, {horizon} horizon"))
    };
    report(9, "corolarioimportante branches", run());
}

#[test]
fn c10_br_step_contract() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut worst_gap = 0.0f64;
        for seed in 0..100u64 {
            let dim = 1 + (seed % 4) as usize;
            let eps = [0.01, 0.1, 0.5, 1.0][(seed % 4) as usize];
            let norm = if seed % 2 == 0 { NormChoice::Euclidean } else { NormChoice::Max };
            let (f, x0, g0) = if seed < 50 {
                let inst = gen(Family::Maxaffine, dim, 2 + (seed % 7) as usize, 10_000 + seed);
                let (f, _) = single(&inst);
                let (sl, of) = slopes_offsets(&inst, 0);
                let x0 = uniform(&mut rng, dim, 2.0);
                let act = (0..sl.len()).max_by(|&i, &j| (sl[i].dot(&x0) + of[i]).total_cmp(&(sl[j].dot(&x0) + of[j]))).unwrap();
                let w: Vec<f64> = (0..sl.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
                let ws: f64 = w.iter().sum();
                let mix = sl.iter().zip(&w).fold(DVector::zeros(dim), |acc, (a, wi)| acc + a * (wi / ws));
                let gm = fenchel_gap(&f, &x0, &mix).map_err(e2s)?.to_f64();
                // The gap is convex along the segment and vanishes at the active slope.
                let th = if gm > 0.0 { (eps / gm).min(1.0) } else { 1.0 };
                let g0 = &sl[act] * (1.0 - th) + mix * th;
                (f, x0, g0)
            } else {
                let inst = gen(Family::Quadratic, dim, 1 + (seed % 4) as usize, 10_000 + seed);
                let (f, _) = single(&inst);
                let subnormal::convexfn::FnSpec::Quadratic { q, c, .. } = &inst.functions[0] else { unreachable!() };
                let qm = DMatrix::from_fn(dim, dim, |i, j| q[i][j]);
                let x0 = uniform(&mut rng, dim, 2.0);
                let u = uniform(&mut rng, dim, 1.0);
                let quad = 0.5 * u.dot(&(&qm * &u));
                let s = if quad > 0.0 { (rng.gen_range(0.1..1.0) * eps / quad).sqrt() } else { 0.0 };
                let g0 = &qm * &x0 + dv(c) + &qm * &u * s;
                (f, x0, g0)
            };
            let g0gap = fenchel_gap(&f, &x0, &g0).map_err(e2s)?.to_f64();
            ensure(g0gap <= eps + 1e-12, || format!("seed {seed}: start gap {g0gap} > ε {eps}"))?;
            let st = br_step(&f, &x0, &g0, eps, norm).map_err(e2s)?;
            let x1 = dv(&st.x1);
            let g1 = dv(&st.g1);
            let step = norm.primal(&(&x1 - &x0));
            let drift = norm.dual(&(&g1 - &g0));
            let r = eps.sqrt();
            ensure(step <= r + 1e-6, || format!("seed {seed}: step {step} > √ε {r}"))?;
            ensure(drift <= r * (1.0 + r) + 1e-6, || format!("seed {seed}: drift {drift}"))?;
            let gap = val(&f, &x1) + conjugate_eval(&f, &g1).map_err(e2s)?.to_f64() - g1.dot(&x1);
            worst_gap = worst_gap.max(gap);
            ensure(gap <= 1e-9, || format!("seed {seed}: exact gap {gap}"))?;
        }
        Ok(format!("100 steps; worst exact gap {worst_gap:.1e}"))
    };
    report(10, "br_step contract", run());
}

#[test]
fn c11_sequential_certificates() {
    let run = || -> Check {
        let dirs = probe_directions(2, 16);
        let mut certified = 0usize;
        for seed in 0..20u64 {
            let inst = gen(Family::Maxaffine, 2, 5, 11_000 + seed);
            let (f, x) = single(&inst);
            let fx = val(&f, &x);
            let c = sublevel_poly(&f, ExtReal::Finite(fx)).ok_or("level set is not polyhedral")?;
            let normal = delta_normal_set(&c, &x, 0.0).map_err(e2s)?;
            let level = level_set_at(&f, &x).map_err(e2s)?;
            for g in normal.truncated_vertices(&dirs, 10.0).map_err(e2s)? {
                let out = sequential_certificate(&f, &x, &g, &default_schedule(), 1e-3, NormChoice::Euclidean).map_err(e2s)?;
                let SequentialOutcome::Certified(cert) = out else {
                    return Err(format!("seed {seed}: plateau at {:?}", g.as_slice()));
                };
                let last = cert.steps.last().unwrap();
                let xk = dv(&last.x);
                let gk = dv(&last.g);
                let res = [
                    (&gk * last.mu - &g).norm(),
                    (last.mu * (val(&f, &xk) - fx)).abs(),
                    (last.mu * gk.dot(&(&xk - &x))).abs(),
                ];
                ensure(res.iter().all(|r| *r <= 1e-3), || format!("seed {seed}: final residuals {res:?}"))?;
                let exact = fenchel_gap(&f, &xk, &gk).map_err(e2s)?.to_f64();
                ensure(exact <= 1e-6, || format!("seed {seed}: g_k not a subgradient (gap {exact})"))?;
                let check = teoepi_conditions_check(&cert, &f, &x, 1e-3, CheckMode::Teoepi).map_err(e2s)?;
                ensure(check.passed(), || format!("seed {seed}: conditions check {:?}", check.notes))?;
                let m = delta_normal_membership(&level, &x, 0.0, &dv(&cert.target), 1e-6).map_err(e2s)?;
                ensure(m.membership.is_inside(), || format!("seed {seed}: target fails δ = 0 membership"))?;
                certified += 1;
            }
        }
        Ok(format!("20 instances; {certified} normal-cone vertices certified"))
    };
    report(11, "sequential certificates", run());
}

#[test]
fn c12_ratio_operator() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (mut products, mut worst) = (0usize, 0.0f64);
        let ext_f = |e: ExtReal| e.to_f64();
        for seed in 0..20u64 {
            let inst = if seed % 2 == 0 {
                gen(Family::Maxaffine, 2, 5, 12_000 + seed)
            } else {
                gen(Family::Quadratic, 2, 2, 12_000 + seed)
            };
            let (f, x) = single(&inst);
            let v = uniform(&mut rng, 2, 1.0);
            let r_of = |eps: f64| -> std::result::Result<f64, String> { Ok(ext_f(ratio_operator_S(&f, &x, &v, eps).map_err(e2s)?.value)) };
            for _ in 0..25 {
                let mut e1 = 10f64.powf(rng.gen_range(-3.0..1.0));
                let mut e2 = 10f64.powf(rng.gen_range(-3.0..1.0));
                if e1 > e2 {
                    std::mem::swap(&mut e1, &mut e2);
                }
                let s1 = ratio_operator_S(&f, &x, &v, e1).map_err(e2s)?;
                let s2 = ratio_operator_S(&f, &x, &v, e2).map_err(e2s)?;
                for a in &s1.s_values {
                    for b in &s2.s_values {
                        let ok = match (a, b) {
                            (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                                worst = worst.min((b - a) * (e2 - e1));
                                (b - a) * (e2 - e1) >= -1e-9
                            }
                            (ExtReal::NegInf, _) => true,
                            (_, ExtReal::NegInf) => false,
                            _ => true,
                        };
                        ensure(ok, || format!("seed {seed}: S({e1}) ∋ {a}, S({e2}) ∋ {b}"))?;
                        products += 1;
                    }
                }
                ensure(s1.value.to_f64() <= s2.value.to_f64() + 1e-10, || format!("seed {seed}: R decreases on [{e1}, {e2}]"))?;
                let orc = eps_deriv_oracle(&f, &x, &v, e1);
                ensure((s1.value.to_f64() - orc).abs() <= 1e-6, || format!("seed {seed}: R({e1}) = {} vs oracle {orc}", s1.value))?;
            }
            for e0 in [0.0, 0.1, 1.0] {
                let r0 = r_of(e0)?;
                let diffs: Vec<f64> = (2..=6).map(|k| r_of(e0 + 10f64.powi(-k)).map(|r| (r - r0).abs())).collect::<std::result::Result<_, _>>()?;
                let shrinking = diffs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
                ensure(shrinking && diffs[4] <= 0.1 * diffs[0] + 1e-9, || format!("seed {seed}: R not continuous at {e0}: {diffs:?}"))?;
            }
        }
        ensure(products >= 500, || format!("only {products} products sampled"))?;
        Ok(format!("20 instances; {products} products, min {worst:.1e}; R monotone and continuous"))
    };
    report(12, "S-operator monotonicity and R continuity", run());
}

#[test]
fn c13_recession_identities() {
    let run = || -> Check {
        let mut polys = 0usize;
        for seed in 0..15u64 {
            let (f, x) = single(&gen(Family::Maxaffine, 2 + (seed % 2) as usize, 4, 13_000 + seed));
            let rep = recession_identity_verify(&f, &x, 32, 1e-9).map_err(e2s)?;
            ensure(rep.passed() && max_gap(&rep) <= 1e-9, || format!("seed {seed}: gap {}", max_gap(&rep)))?;
            polys += 1;
        }
        // Unbounded level sets: the cone is a genuine cone, not {0}.
        for (sl, of) in [
            (vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]),
            (vec![vec![1.0, 1.0], vec![-1.0, 0.0], vec![0.0, -2.0]], vec![1.0, 0.0, -1.0]),
            (vec![vec![1.0, -1.0], vec![-1.0, 1.0]], vec![0.0, 0.0]),
        ] {
            let f = ConvexFn::max_affine(sl.iter().map(|s| dv(s)).collect(), of).unwrap();
            let x = dv(&[1.0, 0.5]);
            let rep = recession_identity_verify(&f, &x, 32, 1e-9).map_err(e2s)?;
            ensure(rep.passed() && max_gap(&rep) <= 1e-9, || format!("unbounded level: gap {}", max_gap(&rep)))?;
            polys += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut worst = 0.0f64;
        let mut samples = 0usize;
        for seed in 0..10u64 {
            let inst = gen(Family::Spectral, 3, 3, 13_500 + seed);
            let f = func(&inst);
            let (sl, _) = slopes_offsets(&inst, 0);
            let sf = SymmetricFn::new(f).map_err(e2s)?;
            let x0 = SymMatrix::from_rows(inst.matrix_point.as_ref().unwrap()).map_err(e2s)?;
            for _ in 0..10 {
                let x = sym_random(&mut rng, 3, 2.0);
                let a = spectral_recession(&sf, &x).map_err(e2s)?.to_f64();
                let b = recession_quotient(&sf, &x0, &x).map_err(e2s)?.to_f64();
                // f^∞(y) = max_i ⟨a_i, y⟩ for a max-affine f.
                let l = sorted_eigs(x.matrix());
                let c = sl.iter().map(|s| s.dot(&l)).fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max((a - b).abs());
                ensure((a - b).abs() <= 1e-6 && (a - c).abs() <= 1e-9, || format!("seed {seed}: {a} vs quotient {b} vs direct {c}"))?;
                samples += 1;
            }
        }
        Ok(format!("{polys} polyhedral cone equalities at 1e-9; {samples} spectral samples, max gap {worst:.1e}"))
    };
    report(13, "recession identities", run());
}

#[test]
fn c14_spectral() {
    let run = || -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        // ∂λ_max(diag(2, 1)) = {diag(1, 0)}.
        let lmax = SymmetricFn::max_coordinate(2);
        let x = SymMatrix::diag(&[2.0, 1.0]);
        let m = spectral_eps_subdiff_membership(&lmax, &x, 0.0, &SymMatrix::diag(&[1.0, 0.0]), 1e-8).map_err(e2s)?;
        ensure(m.membership == Membership::Inside, || format!("diag(1,0) classified {:?}", m.membership))?;
        let mut rejected = 0usize;
        for _ in 0..200 {
            let eta = 10f64.powf(rng.gen_range(-6.0..-0.3));
            let bmax = (eta * (1.0 - eta)).sqrt();
            let b = match rng.gen_range(0..3) {
                0 => 0.0,
                1 => rng.gen_range(-bmax..=bmax),
                _ => bmax * rng.gen_range(1.5..3.0),
            };
            let tr = if rng.gen_bool(0.8) { 1.0 } else { rng.gen_range(0.5..1.5) };
            let g = SymMatrix::from_rows(&[vec![tr - eta, b], vec![b, eta]]).map_err(e2s)?;
            let m = spectral_eps_subdiff_membership(&lmax, &x, 0.0, &g, 1e-8).map_err(e2s)?;
            ensure(m.membership == Membership::Outside, || format!("{:?} classified {:?}", g.to_rows(), m.membership))?;
            rejected += 1;
        }
        // Conjugate identity against the attained matrix supremum.
        let mut conj_checks = 0usize;
        for seed in 0..10u64 {
            let inst = gen(Family::Spectral, 3, 3, 14_000 + seed);
            let f = func(&inst);
            let sf = SymmetricFn::new(f.clone()).map_err(e2s)?;
            for _ in 0..10 {
                let g = sym_random(&mut rng, 3, 1.0);
                let ev = g.matrix().clone().symmetric_eigen();
                let want = conjugate_eval(&f, &ev.eigenvalues).map_err(e2s)?;
                let got = spectral_conjugate(&sf, &g).map_err(e2s)?;
                match (want, got) {
                    (ExtReal::Finite(w), ExtReal::Finite(c)) => {
                        ensure((w - c).abs() <= 1e-9, || format!("seed {seed}: F*(G) {c} vs f*(λ(G)) {w}"))?;
                        let xs = subnormal::spectral::conjugate_argmax(&f, &ev.eigenvalues).map_err(e2s)?.ok_or("no maximiser")?;
                        let xm = &ev.eigenvectors * DMatrix::from_diagonal(&xs) * ev.eigenvectors.transpose();
                        let xm = SymMatrix::new((&xm + xm.transpose()) * 0.5).map_err(e2s)?;
                        let attained = g.inner(&xm) - spectral_eval(&sf, &xm).map_err(e2s)?.to_f64();
                        ensure((attained - c).abs() <= 1e-9, || format!("seed {seed}: attained {attained} vs {c}"))?;
                    }
                    (w, c) => ensure(w == c, || format!("seed {seed}: {w} vs {c}"))?,
                }
                conj_checks += 1;
            }
        }
        // Von Neumann on 10⁴ pairs, eigenvalues from an independent decomposition.
        let mut worst = f64::NEG_INFINITY;
        for k in 0..10_000 {
            let n = 2 + k % 3;
            let g = sym_random(&mut rng, n, 3.0);
            let xm = sym_random(&mut rng, n, 3.0);
            let lhs = (g.matrix() * xm.matrix()).trace();
            let rhs = sorted_eigs(g.matrix()).dot(&sorted_eigs(xm.matrix()));
            worst = worst.max(lhs - rhs);
            ensure(lhs <= rhs + 1e-9, || format!("pair {k}: tr(GX) {lhs} > {rhs}"))?;
        }
        // λ_max δ-normal sets: matrix test against the diagonal reduction on commuting probes.
        let mut agree = 0usize;
        for k in 0..200 {
            let n = 2 + k % 3;
            let xbar = sym_random(&mut rng, n, 2.0);
            let ev = xbar.matrix().clone().symmetric_eigen();
            let gamma = uniform(&mut rng, n, 2.0).map(|v| if k % 4 == 0 { v.abs() } else { v });
            let gm = &ev.eigenvectors * DMatrix::from_diagonal(&gamma) * ev.eigenvectors.transpose();
            let g = SymMatrix::new((&gm + gm.transpose()) * 0.5).map_err(e2s)?;
            let alpha = ev.eigenvalues.max() + rng.gen_range(-2.0..1.0);
            let delta = [0.0, 0.25, 1.0][k % 3];
            let a = lmax_normal_membership(&xbar, alpha, delta, &g, 1e-7).map_err(e2s)?;
            let b = diag_reduced_membership(&SymmetricFn::max_coordinate(n), &xbar, alpha, delta, &g, 1e-7).map_err(e2s)?;
            ensure(a.commuting, || format!("probe {k}: commuting probe not detected"))?;
            if a.membership == Membership::Band || b.membership == Membership::Band {
                continue;
            }
            ensure(a.membership == b.membership, || format!("probe {k}: {:?} vs {:?}", a.membership, b.membership))?;
            agree += 1;
        }
        Ok(format!(
            "∂λ_max(diag(2,1)) = {{diag(1,0)}} ({rejected} rejections); {conj_checks} conjugate checks; \
             10⁴ Von Neumann pairs, max tr(GX) − ⟨λ,λ⟩ = {worst:.1e}; {agree} commuting probes agree"
        ))
    };
    report(14, "spectral identities", run());
}

#[test]
fn c15_negative_controls() {
    let run = || -> Check {
        let mut cfg = SuiteConfig::from_json(include_str!("../../../suites/default.json")).map_err(e2s)?;
        cfg.entries.retain(|e| e.expect == Expect::Fail);
        ensure(!cfg.entries.is_empty(), || "default suite has no negative controls".into())?;
        let tampered = run_suite(&cfg, None).map_err(e2s)?;
        ensure(tampered.failures == tampered.total && tampered.failures > 0, || tampered.table_text())?;
        // The same instances without the tamper pass, so the failures come from the tamper.
        for e in &mut cfg.entries {
            e.tamper = Tamper::default();
            e.expect = Expect::Pass;
        }
        let clean = run_suite(&cfg, None).map_err(e2s)?;
        ensure(clean.failures == 0 && clean.unmet == 0, || clean.table_text())?;
        Ok(format!("{} tampered instances, {} failures; untampered copies all pass", tampered.total, tampered.failures))
    };
    report(15, "negative controls", run());
}
