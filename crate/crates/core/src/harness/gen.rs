//! Seeded instance generators on integer lattices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Instance, Params, ProbeConfig, SCHEMA_VERSION};
use crate::convexfn::{infimum, ConvexFn, FnSpec};
use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::lp::{LinearProgram, LpOutcome};
use crate::geometry::HPolyhedron;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Maxaffine,
    Quadratic,
    Indicator,
    Finitemax,
    Spectral,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "maxaffine" => Family::Maxaffine,
            "quadratic" => Family::Quadratic,
            "indicator" => Family::Indicator,
            "finitemax" => Family::Finitemax,
            "spectral" => Family::Spectral,
            _ => return Err(Error::Input(format!("unknown family '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenRequest {
    pub family: Family,
    /// Vector dimension, or the matrix order for the spectral family.
    pub dim: usize,
    /// Pieces, constraints or branches.
    pub size: usize,
    pub seed: u64,
}

const MAX_TRIES: usize = 200;

/// Deterministic instance for `(family, dim, size, seed)`.
pub fn generate(req: &GenRequest) -> Result<Instance> {
    let GenRequest { family, dim, size, seed } = *req;
    match family {
        Family::Spectral if !(2..=4).contains(&dim) => {
            return Err(Error::Input("spectral instances need n ∈ [2, 4]".into()))
        }
        Family::Spectral => {}
        _ if !(1..=4).contains(&dim) => return Err(Error::Input("dimension must lie in [1, 4]".into())),
        _ => {}
    }
    if !(1..=8).contains(&size) {
        return Err(Error::Input("size must lie in [1, 8]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inst = Instance {
        schema_version: SCHEMA_VERSION,
        functions: Vec::new(),
        point: None,
        matrix_point: None,
        params: Params { delta: Some(0.25), eps: Some(0.2), lambda: None, alpha: None },
        probe: ProbeConfig::default(),
        targets: Vec::new(),
        matrix_targets: Vec::new(),
        direction: None,
        seed,
    };
    match family {
        Family::Maxaffine => {
            let (slopes, offsets) = bounded_max_affine(&mut rng, dim, size);
            let f = ConvexFn::max_affine(slopes.clone(), offsets.clone())?;
            inst.point = Some(non_minimising_point(&mut rng, &f, dim)?);
            inst.functions.push(max_affine_spec(&slopes, &offsets));
        }
        Family::Quadratic => {
            let b = DMatrix::from_fn(size, dim, |_, _| lattice(&mut rng, 2) as f64);
            let q = b.transpose() * b;
            let c: Vec<f64> = (0..dim).map(|_| lattice(&mut rng, 3) as f64).collect();
            let r = lattice(&mut rng, 3) as f64;
            inst.functions.push(FnSpec::Quadratic {
                q: (0..dim).map(|i| q.row(i).iter().copied().collect()).collect(),
                c,
                r,
            });
            inst.point = Some((0..dim).map(|_| lattice(&mut rng, 2) as f64).collect());
        }
        Family::Indicator => {
            let (a, b) = bounded_polytope(&mut rng, dim, size);
            let p = HPolyhedron::from_rows(&a, &b)?;
            inst.point = Some(random_vertex(&mut rng, &p)?);
            inst.functions.push(FnSpec::Indicator { dim, a, b });
        }
        Family::Finitemax => {
            let mut members = Vec::with_capacity(size);
            for _ in 0..size {
                let pieces = rng.gen_range(1..=2);
                let slopes: Vec<DVector<f64>> =
                    (0..pieces).map(|_| DVector::from_fn(dim, |_, _| lattice(&mut rng, 3) as f64)).collect();
                let offsets: Vec<f64> = (0..pieces).map(|_| lattice(&mut rng, 3) as f64).collect();
                members.push(max_affine_spec(&slopes, &offsets));
            }
            inst.point = Some((0..dim).map(|_| lattice(&mut rng, 2) as f64).collect());
            inst.functions = members;
        }
        Family::Spectral => {
            let base: Vec<Vec<i64>> = (0..size).map(|_| (0..dim).map(|_| lattice(&mut rng, 2)).collect()).collect();
            let offsets: Vec<i64> = (0..size).map(|_| lattice(&mut rng, 2)).collect();
            let mut slopes: Vec<Vec<i64>> = Vec::new();
            let mut offs: Vec<f64> = Vec::new();
            for (s, o) in base.iter().zip(&offsets) {
                for p in permutations(dim) {
                    let ps: Vec<i64> = p.iter().map(|&i| s[i]).collect();
                    if let Some(k) = slopes.iter().position(|q| *q == ps) {
                        offs[k] = offs[k].max(*o as f64);
                    } else {
                        slopes.push(ps);
                        offs.push(*o as f64);
                    }
                }
            }
            let slopes: Vec<DVector<f64>> =
                slopes.iter().map(|s| DVector::from_iterator(dim, s.iter().map(|v| *v as f64))).collect();
            inst.functions.push(max_affine_spec(&slopes, &offs));
            let m = DMatrix::from_fn(dim, dim, |_, _| lattice(&mut rng, 2) as f64);
            let sym = &m + m.transpose();
            inst.matrix_point = Some((0..dim).map(|i| sym.row(i).iter().copied().collect()).collect());
        }
    }
    Ok(inst)
}

fn lattice(rng: &mut ChaCha8Rng, r: i64) -> i64 {
    rng.gen_range(-r..=r)
}

fn max_affine_spec(slopes: &[DVector<f64>], offsets: &[f64]) -> FnSpec {
    FnSpec::MaxAffine { slopes: slopes.iter().map(|s| s.iter().copied().collect()).collect(), offsets: offsets.to_vec() }
}

/// `0 ∈ int conv(rows)` iff `max_i ⟨s_i, v⟩ > 0` for every `v ≠ 0`; each LP minimises that
/// maximum over `‖v‖_∞ ≤ 1` with one coordinate pinned to `±1`.
fn positively_spanning(rows: &[DVector<f64>], n: usize) -> bool {
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut lp = LinearProgram::new(n + 1);
            let mut c = vec![0.0; n + 1];
            c[n] = 1.0;
            lp.minimize(&c);
            for s in rows {
                let mut r: Vec<f64> = s.iter().copied().collect();
                r.push(-1.0);
                lp.le(r, 0.0);
            }
            for i in 0..n {
                let mut r = vec![0.0; n + 1];
                r[i] = 1.0;
                lp.le(r.clone(), 1.0);
                lp.ge(r, -1.0);
            }
            let mut r = vec![0.0; n + 1];
            r[j] = sign;
            lp.eq(r, 1.0);
            match lp.solve() {
                Ok(LpOutcome::Optimal { value, .. }) if value > 1e-9 => {}
                _ => return false,
            }
        }
    }
    true
}

/// Lattice slopes, resampled until `0 ∈ int conv(slopes)` (bounded below and coercive)
/// whenever `size > dim`.
fn bounded_max_affine(rng: &mut ChaCha8Rng, dim: usize, size: usize) -> (Vec<DVector<f64>>, Vec<f64>) {
    let draw = |rng: &mut ChaCha8Rng| -> (Vec<DVector<f64>>, Vec<f64>) {
        let slopes = (0..size).map(|_| DVector::from_fn(dim, |_, _| lattice(rng, 3) as f64)).collect();
        let offsets = (0..size).map(|_| lattice(rng, 3) as f64).collect();
        (slopes, offsets)
    };
    let first = draw(rng);
    if size <= dim || positively_spanning(&first.0, dim) {
        return first;
    }
    for _ in 0..MAX_TRIES {
        let next = draw(rng);
        if positively_spanning(&next.0, dim) {
            return next;
        }
    }
    first
}

/// A lattice point whose value exceeds `inf f` by at least `1/4`, so sublevel-set checks
/// below `f(x̄)` have room.
fn non_minimising_point(rng: &mut ChaCha8Rng, f: &ConvexFn, dim: usize) -> Result<Vec<f64>> {
    let inf = infimum(f)?;
    let mut last = Vec::new();
    for _ in 0..MAX_TRIES {
        let x: Vec<f64> = (0..dim).map(|_| lattice(rng, 2) as f64).collect();
        let fx = f.value_at(&DVector::from_column_slice(&x))?;
        last = x.clone();
        match inf {
            ExtReal::Finite(m) if fx < m + 0.25 => continue,
            _ => return Ok(x),
        }
    }
    Ok(last)
}

/// `{x : Ax ≤ b}` with lattice normals and `b ∈ {1, 2, 3}`; normals are resampled until
/// they positively span, so the polytope is bounded and contains the origin.
fn bounded_polytope(rng: &mut ChaCha8Rng, dim: usize, size: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = size.max(dim + 1);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<DVector<f64>> {
        (0..rows)
            .map(|_| loop {
                let v = DVector::from_fn(dim, |_, _| lattice(rng, 2) as f64);
                if v.amax() > 0.0 {
                    break v;
                }
            })
            .collect()
    };
    let mut normals = draw(rng);
    for _ in 0..MAX_TRIES {
        if positively_spanning(&normals, dim) {
            break;
        }
        normals = draw(rng);
    }
    if !positively_spanning(&normals, dim) {
        normals = (0..dim)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| DVector::from_fn(dim, |j, _| if i == j { s } else { 0.0 }))
            })
            .collect();
    }
    let b = normals.iter().map(|_| rng.gen_range(1..=3) as f64).collect();
    (normals.iter().map(|v| v.iter().copied().collect()).collect(), b)
}

fn random_vertex(rng: &mut ChaCha8Rng, p: &HPolyhedron) -> Result<Vec<f64>> {
    let n = p.dim();
    let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mut lp = LinearProgram::new(n);
    lp.maximize(v.as_slice());
    for i in 0..p.num_rows() {
        lp.le(p.row(i).iter().copied().collect(), p.b()[i]);
    }
    match lp.solve()? {
        LpOutcome::Optimal { point, .. } => Ok(point.iter().copied().collect()),
        _ => Ok(vec![0.0; n]),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SymmetricFn;

    #[test]
    fn deterministic() {
        let req = GenRequest { family: Family::Maxaffine, dim: 2, size: 5, seed: 42 };
        let a = generate(&req).unwrap();
        let b = generate(&req).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let FnSpec::MaxAffine { slopes, .. } = &a.functions[0] else { panic!() };
        assert_eq!(slopes.len(), 5);
        assert!(slopes.iter().flatten().all(|v| v.fract() == 0.0));
        let c = generate(&GenRequest { seed: 43, ..req }).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn indicator_is_bounded_and_contains_origin() {
        for seed in 0..10 {
            let inst = generate(&GenRequest { family: Family::Indicator, dim: 2, size: 4, seed }).unwrap();
            let f = inst.convex_functions().unwrap().remove(0);
            assert_eq!(f.eval(&DVector::zeros(2)).unwrap(), ExtReal::ZERO);
            assert!(f.recession_form().lineality_basis().is_empty());
            assert_eq!(f.eval(&inst.point_vec().unwrap()).unwrap(), ExtReal::ZERO);
        }
    }

    #[test]
    fn spectral_family_is_symmetric() {
        for n in 2..=4 {
            let inst = generate(&GenRequest { family: Family::Spectral, dim: n, size: 3, seed: 5 }).unwrap();
            let f = inst.convex_functions().unwrap().remove(0);
            assert!(SymmetricFn::new(f).is_ok());
        }
    }

    #[test]
    fn range_checks() {
        assert!(generate(&GenRequest { family: Family::Maxaffine, dim: 5, size: 2, seed: 0 }).is_err());
        assert!(generate(&GenRequest { family: Family::Spectral, dim: 1, size: 2, seed: 0 }).is_err());
        assert!(generate(&GenRequest { family: Family::Quadratic, dim: 2, size: 9, seed: 0 }).is_err());
    }
}
