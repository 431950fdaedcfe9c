//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are stated over free or nonnegative variables with `≤`, `≥` and `=` rows.
//! After the tableau phase the optimal basis is re-solved with an LU factorisation of
//! the original columns, so returned points satisfy the constraints to ~1e-12 on
//! well-scaled data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Free,
    NonNeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: DVector<f64> },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// A linear program `max / min ⟨c, x⟩` over rows `⟨a_i, x⟩ {≤,≥,=} b_i`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    n: usize,
    kinds: Vec<VarKind>,
    objective: Vec<f64>,
    maximize: bool,
    rows: Vec<(Vec<f64>, RowKind, f64)>,
}

impl LinearProgram {
    /// `n` free variables, zero objective (a feasibility problem until an objective is set).
    pub fn new(n: usize) -> Self {
        LinearProgram {
            n,
            kinds: vec![VarKind::Free; n],
            objective: vec![0.0; n],
            maximize: true,
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn nonneg(&mut self, j: usize) -> &mut Self {
        self.kinds[j] = VarKind::NonNeg;
        self
    }

    pub fn nonneg_range(&mut self, range: std::ops::Range<usize>) -> &mut Self {
        for j in range {
            self.kinds[j] = VarKind::NonNeg;
        }
        self
    }

    pub fn maximize(&mut self, c: &[f64]) -> &mut Self {
        assert_eq!(c.len(), self.n, "objective length");
        self.objective = c.to_vec();
        self.maximize = true;
        self
    }

    pub fn minimize(&mut self, c: &[f64]) -> &mut Self {
        assert_eq!(c.len(), self.n, "objective length");
        self.objective = c.to_vec();
        self.maximize = false;
        self
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.n, "row length");
        self.rows.push((coeffs, kind, rhs));
        self
    }

    pub fn le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_row(coeffs, RowKind::Le, rhs)
    }

    pub fn ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_row(coeffs, RowKind::Ge, rhs)
    }

    pub fn eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_row(coeffs, RowKind::Eq, rhs)
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        for (row, _, rhs) in &self.rows {
            if row.iter().any(|v| !v.is_finite()) || !rhs.is_finite() {
                return Err(Error::Input("non-finite LP data".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite LP objective".into()));
        }
        Standard::build(self).solve(self)
    }
}

/// Maximises `⟨c, x⟩` over `{x : Ax ≤ b}`.
pub fn solve_lp(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LpOutcome> {
    crate::error::check_dim(a.ncols(), c.len())?;
    crate::error::check_dim(a.nrows(), b.len())?;
    let mut lp = LinearProgram::new(c.len());
    lp.maximize(c.as_slice());
    for i in 0..a.nrows() {
        lp.le(a.row(i).iter().copied().collect(), b[i]);
    }
    lp.solve()
}

/// Equality-form problem `min ⟨cost, z⟩ s.t. M z = rhs, z ≥ 0` with column provenance.
struct Standard {
    m: usize,
    ncols: usize,
    mat: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    // For every original variable: (positive column, optional negative column).
    var_cols: Vec<(usize, Option<usize>)>,
    // Row index whose slack column can start in the basis with coefficient +1.
    slack_basis: Vec<Option<usize>>,
}

impl Standard {
    fn build(lp: &LinearProgram) -> Standard {
        let mut var_cols = Vec::with_capacity(lp.n);
        let mut ncols = 0;
        for k in &lp.kinds {
            match k {
                VarKind::NonNeg => {
                    var_cols.push((ncols, None));
                    ncols += 1;
                }
                VarKind::Free => {
                    var_cols.push((ncols, Some(ncols + 1)));
                    ncols += 2;
                }
            }
        }
        let n_slack = lp.rows.iter().filter(|r| r.1 != RowKind::Eq).count();
        let total = ncols + n_slack;
        let m = lp.rows.len();
        let mut mat = vec![vec![0.0; total]; m];
        let mut rhs = vec![0.0; m];
        let mut slack_basis = vec![None; m];
        let mut next_slack = ncols;
        for (i, (row, kind, b)) in lp.rows.iter().enumerate() {
            let scale = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
            let scale = if scale < 1e-12 { 1.0 } else { scale };
            for (j, &v) in row.iter().enumerate() {
                let (p, q) = var_cols[j];
                mat[i][p] = v / scale;
                if let Some(q) = q {
                    mat[i][q] = -v / scale;
                }
            }
            rhs[i] = b / scale;
            let slack_sign = match kind {
                RowKind::Le => Some(1.0),
                RowKind::Ge => Some(-1.0),
                RowKind::Eq => None,
            };
            let mut slack_col = None;
            if let Some(s) = slack_sign {
                mat[i][next_slack] = s;
                slack_col = Some(next_slack);
                next_slack += 1;
            }
            if rhs[i] < 0.0 {
                for v in mat[i].iter_mut() {
                    *v = -*v;
                }
                rhs[i] = -rhs[i];
            }
            if let Some(c) = slack_col {
                if mat[i][c] > 0.0 {
                    slack_basis[i] = Some(c);
                }
            }
        }
        let sign = if lp.maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; total];
        for (j, &c) in lp.objective.iter().enumerate() {
            let (p, q) = var_cols[j];
            cost[p] = sign * c;
            if let Some(q) = q {
                cost[q] = -sign * c;
            }
        }
        Standard { m, ncols: total, mat, rhs, cost, var_cols, slack_basis }
    }

    fn solve(self, lp: &LinearProgram) -> Result<LpOutcome> {
        let m = self.m;
        let n = self.ncols;
        // Artificial columns for rows lacking a usable slack.
        let art_rows: Vec<usize> = (0..m).filter(|&i| self.slack_basis[i].is_none()).collect();
        let width = n + art_rows.len();
        let mut t = Tableau {
            rows: vec![vec![0.0; width + 1]; m],
            basis: vec![0; m],
            width,
        };
        for i in 0..m {
            t.rows[i][..n].copy_from_slice(&self.mat[i]);
            t.rows[i][width] = self.rhs[i];
        }
        for (k, &i) in art_rows.iter().enumerate() {
            t.rows[i][n + k] = 1.0;
            t.basis[i] = n + k;
        }
        for i in 0..m {
            if let Some(c) = self.slack_basis[i] {
                t.basis[i] = c;
            }
        }
        let mut alive = vec![true; m];

        if !art_rows.is_empty() {
            let mut c1 = vec![0.0; width];
            for k in 0..art_rows.len() {
                c1[n + k] = 1.0;
            }
            let status = t.run(&c1, width, &alive)?;
            debug_assert!(status);
            let infeas: f64 = (0..m)
                .filter(|&i| alive[i] && t.basis[i] >= n)
                .map(|i| t.rows[i][width])
                .sum();
            let bnorm = self.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            if infeas > FEAS_EPS * bnorm {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive remaining artificials out of the basis; drop redundant rows.
            for i in 0..m {
                if t.basis[i] < n {
                    continue;
                }
                let entering = (0..n).find(|&j| t.rows[i][j].abs() > 1e-9);
                match entering {
                    Some(j) => t.pivot(i, j),
                    None => alive[i] = false,
                }
            }
        }

        let mut c2 = vec![0.0; width];
        c2[..n].copy_from_slice(&self.cost);
        if !t.run(&c2, n, &alive)? {
            return Ok(LpOutcome::Unbounded);
        }

        let mut z = vec![0.0; n];
        for i in 0..m {
            if alive[i] && t.basis[i] < n {
                z[t.basis[i]] = t.rows[i][width];
            }
        }
        self.polish(&t, &alive, &mut z);
        let mut x = DVector::zeros(lp.n);
        for (j, &(p, q)) in self.var_cols.iter().enumerate() {
            x[j] = z[p] - q.map_or(0.0, |q| z[q]);
        }
        let value = lp.objective.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { value, point: x })
    }

    /// Re-solves `B z_B = rhs` on the final basis using the unpivoted data.
    fn polish(&self, t: &Tableau, alive: &[bool], z: &mut [f64]) {
        let rows: Vec<usize> = (0..self.m).filter(|&i| alive[i]).collect();
        let cols: Vec<usize> = rows.iter().map(|&i| t.basis[i]).filter(|&c| c < self.ncols).collect();
        if cols.len() != rows.len() || rows.is_empty() {
            return;
        }
        let k = rows.len();
        let bm = DMatrix::from_fn(k, k, |r, c| self.mat[rows[r]][cols[c]]);
        let rhs = DVector::from_iterator(k, rows.iter().map(|&i| self.rhs[i]));
        let Some(sol) = bm.clone().lu().solve(&rhs) else { return };
        if sol.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return;
        }
        let res = (&bm * &sol - &rhs).amax();
        if res > 1e-10 * (1.0 + rhs.amax()) {
            return;
        }
        for (c, v) in cols.iter().zip(sol.iter()) {
            z[*c] = v.max(0.0);
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..=w {
                    row[j] -= f * prow[j];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost` using columns `< ncols_allowed`. Returns `false` when unbounded.
    fn run(&mut self, cost: &[f64], ncols_allowed: usize, alive: &[bool]) -> Result<bool> {
        let w = self.width;
        let max_iter = 50_000;
        for _ in 0..max_iter {
            let mut entering = None;
            for j in 0..ncols_allowed {
                if self.basis.iter().enumerate().any(|(i, &b)| alive[i] && b == j) {
                    continue;
                }
                let mut red = cost[j];
                for (i, row) in self.rows.iter().enumerate() {
                    if alive[i] {
                        red -= cost[self.basis[i]] * row[j];
                    }
                }
                if red < -1e-10 {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(true) };
            // Harris two-pass ratio test: a slightly relaxed minimum ratio, then the largest
            // pivot among rows within it, which keeps tiny pivots out of the tableau.
            let mut bound = f64::INFINITY;
            for (i, row) in self.rows.iter().enumerate() {
                if alive[i] && row[c] > PIVOT_EPS {
                    bound = bound.min((row[w].max(0.0) + HARRIS_TOL) / row[c]);
                }
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !alive[i] || row[c] <= PIVOT_EPS || row[w].max(0.0) / row[c] > bound {
                    continue;
                }
                best = match best {
                    Some((bi, ba)) if row[c] < ba || (row[c] == ba && self.basis[i] > self.basis[bi]) => Some((bi, ba)),
                    _ => Some((i, row[c])),
                };
            }
            let Some((r, _)) = best else { return Ok(false) };
            self.pivot(r, c);
        }
        Err(Error::Solver { message: "simplex iteration limit".into(), residual: f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(rows: &[(f64, f64)]) -> LpOutcome {
        let a = DMatrix::from_fn(rows.len(), 1, |i, _| rows[i].0);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        solve_lp(&DVector::from_element(1, 1.0), &a, &b).unwrap()
    }

    #[test]
    fn interval_endpoint() {
        match one_d(&[(1.0, 1.0), (-1.0, 1.0)]) {
            LpOutcome::Optimal { value, point } => {
                assert!((value - 1.0).abs() < 1e-12);
                assert!((point[0] - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn half_line_is_unbounded() {
        assert_eq!(one_d(&[(-1.0, 0.0)]), LpOutcome::Unbounded);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        assert_eq!(one_d(&[(1.0, 0.0), (-1.0, -1.0)]), LpOutcome::Infeasible);
    }

    #[test]
    fn equality_and_nonneg_rows() {
        // min x + 2y s.t. x + y = 3, x - y >= -1, x,y >= 0  ->  x = 3, y = 0
        let mut lp = LinearProgram::new(2);
        lp.nonneg_range(0..2).minimize(&[1.0, 2.0]);
        lp.eq(vec![1.0, 1.0], 3.0).ge(vec![1.0, -1.0], -1.0);
        let out = lp.solve().unwrap();
        assert!((out.value().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_redundant_equalities() {
        let mut lp = LinearProgram::new(3);
        lp.nonneg_range(0..3).maximize(&[1.0, 1.0, 1.0]);
        lp.eq(vec![1.0, 1.0, 1.0], 1.0).eq(vec![2.0, 2.0, 2.0], 2.0).le(vec![1.0, 0.0, 0.0], 0.0);
        assert!((lp.solve().unwrap().value().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn klee_minty_3d() {
        let mut lp = LinearProgram::new(3);
        lp.nonneg_range(0..3).maximize(&[4.0, 2.0, 1.0]);
        lp.le(vec![1.0, 0.0, 0.0], 5.0)
            .le(vec![4.0, 1.0, 0.0], 25.0)
            .le(vec![8.0, 4.0, 1.0], 125.0);
        assert!((lp.solve().unwrap().value().unwrap() - 125.0).abs() < 1e-9);
    }
}
