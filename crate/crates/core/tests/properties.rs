//! Property tests for the module invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use subnormal::convexfn::{conjugate_eval, eps_dir_derivative, Canonical};
use subnormal::geometry::{compare_sets, dual_cone, ConvexCone, ConvexSet, VRep, Verdict};
use subnormal::harness::{generate, run_verify, Family, GenRequest, Instance, Tamper, TheoremId};
use subnormal::report::VerificationReport;
use subnormal::sequential::{br_step, NormChoice};
use subnormal::spectral::{spectral_eval, von_neumann_gap, SymMatrix, SymmetricFn};
use subnormal::subdiff::{eps_subdiff, fenchel_gap};
use subnormal::ConvexFn;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn val(f: &ConvexFn, x: &DVector<f64>) -> f64 {
    f.eval(x).unwrap().to_f64()
}

/// Max-affine data in ℝⁿ: `k` slopes in `[−3, 3]ⁿ`, offsets in `[−2, 2]`, plus a point.
fn maxaffine() -> impl Strategy<Value = (Vec<DVector<f64>>, Vec<f64>, DVector<f64>)> {
    (1usize..=3, 1usize..=5).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, n), k),
            prop::collection::vec(-2.0..2.0f64, k),
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_map(|(s, o, x)| (s.iter().map(|v| dv(v)).collect(), o, dv(&x)))
    })
}

/// `Q = BᵀB` (possibly singular), `c`, `r`, a point and a direction.
fn quadratic() -> impl Strategy<Value = (ConvexFn, DVector<f64>, DVector<f64>)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.5..1.5f64, n * n),
            prop::collection::vec(-1.0..1.0f64, n),
            -1.0..1.0f64,
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(b, c, r, x, v)| {
                let b = DMatrix::from_row_slice(n, n, &b);
                let q = b.transpose() * &b;
                (ConvexFn::quadratic(q, dv(&c), r).unwrap(), dv(&x), dv(&v))
            })
    })
}

fn sym(n: usize, vals: &[f64]) -> SymMatrix {
    let m = DMatrix::from_row_slice(n, n, &vals[..n * n]);
    SymMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

fn orthogonal(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(n, n, &vals[..n * n]) + DMatrix::identity(n, n) * 0.1;
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fenchel_young_maxaffine((s, o, x) in maxaffine(), w in prop::collection::vec(0.0..1.0f64, 5)) {
        let f = ConvexFn::max_affine(s.clone(), o.clone()).unwrap();
        let ws: f64 = w.iter().take(s.len()).sum::<f64>() + 1e-9;
        let g = s.iter().zip(&w).fold(DVector::zeros(x.len()), |acc, (a, wi)| acc + a * (wi / ws));
        let c = conjugate_eval(&f, &g).unwrap().to_f64();
        prop_assert!(val(&f, &x) + c >= g.dot(&x) - 1e-9);
        let act = (0..s.len()).max_by(|&i, &j| (s[i].dot(&x) + o[i]).total_cmp(&(s[j].dot(&x) + o[j]))).unwrap();
        prop_assert!(fenchel_gap(&f, &x, &s[act]).unwrap().to_f64().abs() <= 1e-9);
    }

    #[test]
    fn fenchel_young_quadratic((f, x, v) in quadratic()) {
        let Canonical::Quad(q) = f.canonical() else { unreachable!() };
        let grad = q.grad(&x);
        prop_assert!(fenchel_gap(&f, &x, &grad).unwrap().to_f64().abs() <= 1e-9);
        let g = &grad + &v;
        let gap = fenchel_gap(&f, &x, &g).unwrap();
        prop_assert!(gap.to_f64() >= -1e-9);
    }

    #[test]
    fn eps_dir_derivative_is_monotone((f, x, v) in quadratic(), e1 in 0.0..2.0f64, de in 0.0..2.0f64) {
        let a = eps_dir_derivative(&f, &x, &v, e1).unwrap();
        let b = eps_dir_derivative(&f, &x, &v, e1 + de).unwrap();
        prop_assert!(a.to_f64() <= b.to_f64() + 1e-10, "{a} > {b}");
    }

    #[test]
    fn eps_subdiff_grows_and_scales((s, o, x) in maxaffine(), e1 in 0.0..1.0f64, de in 0.0..1.0f64, mu in 0.1..5.0f64, u in prop::collection::vec(-1.0..1.0f64, 3)) {
        let f = ConvexFn::max_affine(s, o).unwrap();
        let v = dv(&u[..x.len()]);
        let a = eps_subdiff(&f, &x, e1).unwrap().support(&v).unwrap().to_f64();
        let b = eps_subdiff(&f, &x, e1 + de).unwrap().support(&v).unwrap().to_f64();
        prop_assert!(a <= b + 1e-9);
        // ∂_ε(μf)(x) = μ ∂_{ε/μ} f(x).
        let fm = ConvexFn::scale(mu, f.clone()).unwrap();
        let lhs = eps_subdiff(&fm, &x, e1).unwrap().support(&v).unwrap().to_f64();
        let rhs = mu * eps_subdiff(&f, &x, e1 / mu).unwrap().support(&v).unwrap().to_f64();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn support_is_sublinear(pts in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..6), v in prop::collection::vec(-2.0..2.0f64, 2), w in prop::collection::vec(-2.0..2.0f64, 2), t in 0.0..4.0f64) {
        let set = ConvexSet::from(VRep { dim: 2, points: pts.iter().map(|p| dv(p)).collect(), rays: vec![] });
        let (v, w) = (dv(&v), dv(&w));
        let sv = set.support(&v).unwrap().to_f64();
        let sw = set.support(&w).unwrap().to_f64();
        let svw = set.support(&(&v + &w)).unwrap().to_f64();
        prop_assert!(svw <= sv + sw + 1e-12);
        let stv = set.support(&(&v * t)).unwrap().to_f64();
        prop_assert!((stv - t * sv).abs() <= 1e-12 * (1.0 + stv.abs()));
    }

    #[test]
    fn compare_sets_mirrors(a in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 1..5), b in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 1..5)) {
        let s1 = ConvexSet::from(VRep { dim: 2, points: a.iter().map(|p| dv(p)).collect(), rays: vec![] });
        let s2 = ConvexSet::from(VRep { dim: 2, points: b.iter().map(|p| dv(p)).collect(), rays: vec![] });
        let l = compare_sets(&s1, &s2, 10.0, 16, 1e-9).unwrap();
        let r = compare_sets(&s2, &s1, 10.0, 16, 1e-9).unwrap();
        prop_assert_eq!(l.verdict, r.verdict.mirrored());
    }

    #[test]
    fn bipolar_cone(gens in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 2), 1..4)) {
        let k = ConvexCone::generated(2, gens.iter().map(|g| dv(g)).collect()).unwrap();
        let kk = dual_cone(&dual_cone(&k));
        let cmp = compare_sets(&k.to_set(), &kk.to_set(), 10.0, 32, 1e-9).unwrap();
        prop_assert_eq!(cmp.verdict, Verdict::Equal, "{:?}", cmp.max_gap);
    }

    #[test]
    fn br_step_guarantees((s, o, x) in maxaffine(), w in prop::collection::vec(0.0..1.0f64, 5), extra in 1e-3..1.0f64, euclid in any::<bool>()) {
        let f = ConvexFn::max_affine(s.clone(), o).unwrap();
        let w: Vec<f64> = w.iter().map(|wi| wi + 0.01).collect();
        let ws: f64 = w.iter().take(s.len()).sum();
        let g0 = s.iter().zip(&w).fold(DVector::zeros(x.len()), |acc, (a, wi)| acc + a * (wi / ws));
        let eps = fenchel_gap(&f, &x, &g0).unwrap().to_f64() + extra;
        let norm = if euclid { NormChoice::Euclidean } else { NormChoice::Max };
        let st = br_step(&f, &x, &g0, eps, norm).unwrap();
        let r = eps.sqrt();
        prop_assert!(norm.primal(&(dv(&st.x1) - &x)) <= r + 1e-6);
        prop_assert!(norm.dual(&(dv(&st.g1) - &g0)) <= r * (1.0 + r) + 1e-6);
        prop_assert!(fenchel_gap(&f, &dv(&st.x1), &dv(&st.g1)).unwrap().to_f64() <= 1e-9);
    }

    #[test]
    fn spectral_orthogonal_invariance(n in 2usize..=3, xv in prop::collection::vec(-2.0..2.0f64, 9), qv in prop::collection::vec(-1.0..1.0f64, 9)) {
        let x = sym(n, &xv);
        let q = orthogonal(n, &qv);
        let y = SymMatrix::new(q.transpose() * x.matrix() * &q).unwrap();
        for f in [SymmetricFn::max_coordinate(n), SymmetricFn::half_sq_norm(n)] {
            let a = spectral_eval(&f, &x).unwrap().to_f64();
            let b = spectral_eval(&f, &y).unwrap().to_f64();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn von_neumann(n in 2usize..=3, gv in prop::collection::vec(-2.0..2.0f64, 9), xv in prop::collection::vec(-2.0..2.0f64, 9), a in prop::collection::vec(-2.0..2.0f64, 3), b in prop::collection::vec(-2.0..2.0f64, 3), qv in prop::collection::vec(-1.0..1.0f64, 9)) {
        prop_assert!(von_neumann_gap(&sym(n, &gv), &sym(n, &xv)).unwrap() >= -1e-9);
        // Shared eigenbasis with matching order: equality.
        let mut a: Vec<f64> = a[..n].to_vec();
        let mut b: Vec<f64> = b[..n].to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let q = orthogonal(n, &qv);
        let g = SymMatrix::new(&q * DMatrix::from_diagonal(&dv(&a)) * q.transpose()).unwrap();
        let x = SymMatrix::new(&q * DMatrix::from_diagonal(&dv(&b)) * q.transpose()).unwrap();
        prop_assert!(von_neumann_gap(&g, &x).unwrap().abs() <= 1e-9);
    }
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Maxaffine),
        Just(Family::Quadratic),
        Just(Family::Indicator),
        Just(Family::Finitemax),
        Just(Family::Spectral),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn instance_schema_round_trip(fam in family(), dim in 2usize..=3, size in 1usize..=4, seed in any::<u64>()) {
        let inst = generate(&GenRequest { family: fam, dim, size, seed }).unwrap();
        let a = inst.to_json();
        let b = Instance::from_json(&a).unwrap().to_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reports_are_deterministic(size in 2usize..=5, seed in 0u64..1000) {
        let inst = generate(&GenRequest { family: Family::Maxaffine, dim: 2, size, seed }).unwrap();
        let run = || serde_json::to_string(&run_verify(TheoremId::Cor1, &inst, &Tamper::default()).unwrap()).unwrap();
        let a = run();
        prop_assert_eq!(&a, &run());
        let back: VerificationReport = serde_json::from_str(&a).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }
}
