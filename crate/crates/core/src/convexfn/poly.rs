use nalgebra::{DMatrix, DVector};

use super::push_unique;
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;
use crate::geometry::lp::{LinearProgram, LpOutcome, RowKind, VarKind};
use crate::geometry::{HPolyhedron, LpSet, VRep};

/// `x ↦ max_i ⟨a_i, x⟩ + b_i` restricted to a polyhedral domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyForm {
    pub slopes: Vec<DVector<f64>>,
    pub offsets: Vec<f64>,
    pub dom: HPolyhedron,
}

impl PolyForm {
    pub fn new(slopes: Vec<DVector<f64>>, offsets: Vec<f64>, dom: HPolyhedron) -> PolyForm {
        PolyForm { slopes, offsets, dom }
    }

    pub fn indicator(dom: HPolyhedron) -> PolyForm {
        let n = dom.dim();
        PolyForm { slopes: vec![DVector::zeros(n)], offsets: vec![0.0], dom }
    }

    pub fn dim(&self) -> usize {
        self.dom.dim()
    }

    pub fn num_pieces(&self) -> usize {
        self.slopes.len()
    }

    pub fn scaled(&self, mu: f64) -> PolyForm {
        PolyForm {
            slopes: self.slopes.iter().map(|a| a * mu).collect(),
            offsets: self.offsets.iter().map(|b| b * mu).collect(),
            dom: self.dom.clone(),
        }
    }

    pub fn plus(&self, other: &PolyForm) -> PolyForm {
        let mut slopes = Vec::new();
        let mut offsets = Vec::new();
        for (a1, b1) in self.slopes.iter().zip(&self.offsets) {
            for (a2, b2) in other.slopes.iter().zip(&other.offsets) {
                slopes.push(a1 + a2);
                offsets.push(b1 + b2);
            }
        }
        let (slopes, offsets) = dedupe(slopes, offsets);
        PolyForm { slopes, offsets, dom: self.dom.intersect(&other.dom).expect("dims") }
    }

    pub fn max_with(&self, other: &PolyForm) -> PolyForm {
        let slopes = self.slopes.iter().chain(&other.slopes).cloned().collect();
        let offsets = self.offsets.iter().chain(&other.offsets).copied().collect();
        let (slopes, offsets) = dedupe(slopes, offsets);
        PolyForm { slopes, offsets, dom: self.dom.intersect(&other.dom).expect("dims") }
    }

    pub fn eval(&self, x: &DVector<f64>) -> ExtReal {
        if !self.dom.contains(x, super::DOMAIN_TOL) {
            return ExtReal::PosInf;
        }
        ExtReal::Finite(self.max_piece(x))
    }

    fn max_piece(&self, x: &DVector<f64>) -> f64 {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| a.dot(x) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Piece gaps `f(x) − ⟨a_i,x⟩ − b_i ≥ 0` and domain slacks `b − Ax ≥ 0` at `x`.
    pub fn gaps(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let fx = self.max_piece(x);
        let g = self
            .slopes
            .iter()
            .zip(&self.offsets)
            .map(|(a, b)| (fx - a.dot(x) - b).max(0.0))
            .collect();
        let s = self.dom.slack(x).iter().map(|v| v.max(0.0)).collect();
        (g, s)
    }

    /// `f*(g) = min{−Σλ_i b_i + yᵀb : Σλ_i a_i + Aᵀy = g, λ ∈ Δ̄, y ≥ 0}`.
    pub fn conjugate(&self, g: &DVector<f64>) -> Result<ExtReal> {
        Ok(match self.conjugate_lp(g)? {
            LpOutcome::Optimal { value, .. } => ExtReal::Finite(value),
            LpOutcome::Infeasible => ExtReal::PosInf,
            LpOutcome::Unbounded => {
                return Err(Error::Solver { message: "conjugate LP unbounded for a proper function".into(), residual: f64::INFINITY })
            }
        })
    }

    /// Conjugate LP with its optimal `(λ, y)` when finite.
    pub fn conjugate_lp(&self, g: &DVector<f64>) -> Result<LpOutcome> {
        check_dim(self.dim(), g.len())?;
        let k = self.num_pieces();
        let m = self.dom.num_rows();
        let n = self.dim();
        let mut lp = LinearProgram::new(k + m);
        lp.nonneg_range(0..k + m);
        let mut c: Vec<f64> = self.offsets.iter().map(|b| -b).collect();
        c.extend(self.dom.b().iter().copied());
        lp.minimize(&c);
        for d in 0..n {
            let mut row: Vec<f64> = self.slopes.iter().map(|a| a[d]).collect();
            row.extend((0..m).map(|j| self.dom.a()[(j, d)]));
            lp.eq(row, g[d]);
        }
        let mut sum = vec![1.0; k];
        sum.extend(std::iter::repeat(0.0).take(m));
        lp.eq(sum, 1.0);
        lp.solve()
    }

    /// `Φ'_ε(x; v) = min_{s ≥ 0, z} z + εs` subject to `z ≥ ⟨a_i,v⟩ − s·gap_i` and
    /// `⟨A_j, v⟩ ≤ s·slack_j` (the substitution `s = 1/t`).
    pub fn eps_dir_derivative(&self, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> Result<ExtReal> {
        let (gap, slack) = self.gaps(x);
        let mut lp = LinearProgram::new(2);
        lp.nonneg(1).minimize(&[1.0, eps]);
        for (a, gi) in self.slopes.iter().zip(&gap) {
            lp.le(vec![-1.0, -gi], -a.dot(v));
        }
        let av = self.dom.a() * v;
        for (j, sj) in slack.iter().enumerate() {
            lp.le(vec![0.0, -sj], -av[j]);
        }
        Ok(match lp.solve()? {
            LpOutcome::Optimal { value, .. } => ExtReal::Finite(value),
            LpOutcome::Infeasible => ExtReal::PosInf,
            LpOutcome::Unbounded => ExtReal::NegInf,
        })
    }

    /// `∂_ε f(x) = {Σλ_i a_i + Aᵀy : λ ∈ Δ̄, y ≥ 0, Σλ_i gap_i + yᵀ slack ≤ ε}`.
    pub fn eps_subdiff_lp(&self, x: &DVector<f64>, eps: f64) -> LpSet {
        let (gap, slack) = self.gaps(x);
        let k = self.num_pieces();
        let m = self.dom.num_rows();
        let n = self.dim();
        let map = DMatrix::from_fn(n, k + m, |i, j| if j < k { self.slopes[j][i] } else { self.dom.a()[(j - k, i)] });
        let mut set = LpSet::new(map, vec![VarKind::NonNeg; k + m]).expect("dims");
        let mut sum = vec![1.0; k];
        sum.extend(std::iter::repeat(0.0).take(m));
        set.add_row(sum, RowKind::Eq, 1.0).expect("dims");
        let mut budget = gap.clone();
        budget.extend(slack.iter().copied());
        set.add_row(budget, RowKind::Le, eps).expect("dims");
        set
    }

    /// Vertices and extreme rays of `∂_ε f(x)`. The lifted feasible region has one
    /// equality and one budget row, so its vertices carry at most two nonzeros: single
    /// pieces with `gap_i ≤ ε`, budget-tight pairs of pieces, and budget-tight
    /// piece/constraint pairs. Constraint rows with zero slack contribute rays.
    pub fn eps_subdiff_vrep(&self, x: &DVector<f64>, eps: f64) -> VRep {
        let (gap, slack) = self.gaps(x);
        let n = self.dim();
        let tol = 1e-12 * (1.0 + eps);
        let mut points = Vec::new();
        let mut rays = Vec::new();
        let k = self.num_pieces();
        for i in 0..k {
            if gap[i] <= eps + tol {
                push_unique(&mut points, self.slopes[i].clone());
            }
        }
        for i in 0..k {
            for j in 0..k {
                if gap[i] < eps - tol && gap[j] > eps + tol {
                    let w = (gap[j] - eps) / (gap[j] - gap[i]);
                    push_unique(&mut points, &self.slopes[i] * w + &self.slopes[j] * (1.0 - w));
                }
            }
        }
        for j in 0..self.dom.num_rows() {
            let row = self.dom.row(j);
            if slack[j] <= tol {
                if row.amax() > 0.0 {
                    push_unique(&mut rays, row);
                }
                continue;
            }
            for i in 0..k {
                if gap[i] < eps - tol {
                    let y = (eps - gap[i]) / slack[j];
                    push_unique(&mut points, &self.slopes[i] + &row * y);
                }
            }
        }
        VRep { dim: n, points, rays }
    }

    /// `{x ∈ dom : ⟨a_i,x⟩ + b_i ≤ λ ∀i}`.
    pub fn sublevel(&self, lambda: ExtReal) -> HPolyhedron {
        let n = self.dim();
        match lambda {
            ExtReal::PosInf => self.dom.clone(),
            ExtReal::NegInf => HPolyhedron::new(DMatrix::zeros(1, n), DVector::from_element(1, -1.0)).expect("valid"),
            ExtReal::Finite(l) => {
                let k = self.num_pieces();
                let a = DMatrix::from_fn(k, n, |i, j| self.slopes[i][j]);
                let b = DVector::from_fn(k, |i, _| l - self.offsets[i]);
                HPolyhedron::new(a, b).expect("valid").intersect(&self.dom).expect("dims")
            }
        }
    }

    /// `inf f` over its domain (`−∞` when unbounded below).
    pub fn infimum(&self) -> Result<ExtReal> {
        let n = self.dim();
        let mut lp = LinearProgram::new(n + 1);
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        lp.minimize(&c);
        for (a, b) in self.slopes.iter().zip(&self.offsets) {
            let mut row: Vec<f64> = a.iter().copied().collect();
            row.push(-1.0);
            lp.le(row, -b);
        }
        for j in 0..self.dom.num_rows() {
            let mut row: Vec<f64> = self.dom.a().row(j).iter().copied().collect();
            row.push(0.0);
            lp.le(row, self.dom.b()[j]);
        }
        Ok(match lp.solve()? {
            LpOutcome::Optimal { value, .. } => ExtReal::Finite(value),
            LpOutcome::Unbounded => ExtReal::NegInf,
            LpOutcome::Infeasible => ExtReal::PosInf,
        })
    }

    /// `sup{s : s < λ - (⟨a_i,x⟩+b_i) ∀i, Ax ≤ b}`: the largest uniform margin by which
    /// some domain point sits strictly below level `λ` (capped at 1).
    pub fn slater_margin(&self, lambda: f64) -> Result<f64> {
        let n = self.dim();
        let mut lp = LinearProgram::new(n + 1);
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        lp.maximize(&c);
        for (a, b) in self.slopes.iter().zip(&self.offsets) {
            let mut row: Vec<f64> = a.iter().copied().collect();
            row.push(1.0);
            lp.le(row, lambda - b);
        }
        for j in 0..self.dom.num_rows() {
            let mut row: Vec<f64> = self.dom.a().row(j).iter().copied().collect();
            row.push(0.0);
            lp.le(row, self.dom.b()[j]);
        }
        lp.le(c.clone(), 1.0);
        Ok(match lp.solve()? {
            LpOutcome::Optimal { value, .. } => value,
            _ => f64::NEG_INFINITY,
        })
    }
}

fn dedupe(slopes: Vec<DVector<f64>>, offsets: Vec<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let mut out_s: Vec<DVector<f64>> = Vec::new();
    let mut out_o: Vec<f64> = Vec::new();
    for (s, o) in slopes.into_iter().zip(offsets) {
        if let Some(k) = out_s.iter().position(|w| (w - &s).amax() <= 1e-14 * (1.0 + s.amax())) {
            out_o[k] = out_o[k].max(o);
        } else {
            out_s.push(s);
            out_o.push(o);
        }
    }
    (out_s, out_o)
}
