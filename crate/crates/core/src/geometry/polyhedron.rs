use nalgebra::{DMatrix, DVector};

use super::lp::{LinearProgram, LpOutcome};
use crate::error::{check_dim, Error, Result};
use crate::extreal::ExtReal;

/// `{x ∈ ℝⁿ : Ax ≤ b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolyhedron {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl HPolyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() == 0 {
            return Err(Error::Input("polyhedron dimension must be at least 1".into()));
        }
        check_dim(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite polyhedron data".into()));
        }
        Ok(HPolyhedron { a, b })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = rows.first().map(|r| r.len()).ok_or_else(|| {
            Error::Input("use HPolyhedron::universe for a constraint-free polyhedron".into())
        })?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("ragged constraint rows".into()));
        }
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    /// All of ℝⁿ.
    pub fn universe(n: usize) -> Self {
        HPolyhedron { a: DMatrix::zeros(0, n), b: DVector::zeros(0) }
    }

    /// The box `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo;
        }
        HPolyhedron { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.a.row(i).transpose()
    }

    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * x
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.slack(x).iter().all(|s| *s >= -tol)
    }

    pub fn intersect(&self, other: &HPolyhedron) -> Result<HPolyhedron> {
        check_dim(self.dim(), other.dim())?;
        let m1 = self.num_rows();
        let m2 = other.num_rows();
        let n = self.dim();
        let a = DMatrix::from_fn(m1 + m2, n, |i, j| {
            if i < m1 {
                self.a[(i, j)]
            } else {
                other.a[(i - m1, j)]
            }
        });
        let b = DVector::from_fn(m1 + m2, |i, _| if i < m1 { self.b[i] } else { other.b[i - m1] });
        Ok(HPolyhedron { a, b })
    }

    /// Appends the row `⟨a, x⟩ ≤ b`.
    pub fn with_row(&self, a: &DVector<f64>, b: f64) -> Result<HPolyhedron> {
        check_dim(self.dim(), a.len())?;
        let row = HPolyhedron { a: DMatrix::from_row_slice(1, a.len(), a.as_slice()), b: DVector::from_element(1, b) };
        self.intersect(&row)
    }

    /// `{x : A x ≤ 0}`, the recession cone of a nonempty polyhedron.
    pub fn recession(&self) -> HPolyhedron {
        HPolyhedron { a: self.a.clone(), b: DVector::zeros(self.b.len()) }
    }

    /// `{x : x + x̄ ∈ P}`.
    pub fn translate(&self, shift: &DVector<f64>) -> Result<HPolyhedron> {
        check_dim(self.dim(), shift.len())?;
        Ok(HPolyhedron { a: self.a.clone(), b: &self.b + &self.a * shift })
    }

    pub fn maximize(&self, v: &DVector<f64>) -> Result<LpOutcome> {
        check_dim(self.dim(), v.len())?;
        let mut lp = LinearProgram::new(self.dim());
        lp.maximize(v.as_slice());
        for i in 0..self.num_rows() {
            lp.le(self.a.row(i).iter().copied().collect(), self.b[i]);
        }
        lp.solve()
    }

    /// `σ_P(v) = sup{⟨v,x⟩ : x ∈ P}`: `+∞` when unbounded, `−∞` when `P = ∅`.
    pub fn support(&self, v: &DVector<f64>) -> Result<ExtReal> {
        Ok(match self.maximize(v)? {
            LpOutcome::Optimal { value, .. } => ExtReal::Finite(value),
            LpOutcome::Unbounded => ExtReal::PosInf,
            LpOutcome::Infeasible => ExtReal::NegInf,
        })
    }

    pub fn feasible_point(&self) -> Result<Option<DVector<f64>>> {
        Ok(self.maximize(&DVector::zeros(self.dim()))?.point().cloned())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.feasible_point()?.is_none())
    }

    pub fn is_bounded(&self) -> Result<bool> {
        let n = self.dim();
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = DVector::zeros(n);
                e[i] = s;
                if self.support(&e)? == ExtReal::PosInf {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Point maximising the minimum slack (a Chebyshev-type centre in ∞-row scaling).
    /// Returns the point and its slack; the slack is positive iff the interior is nonempty.
    pub fn interior_point(&self) -> Result<Option<(DVector<f64>, f64)>> {
        let n = self.dim();
        let mut lp = LinearProgram::new(n + 1);
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        lp.maximize(&c);
        for i in 0..self.num_rows() {
            let norm = self.a.row(i).norm();
            let mut row: Vec<f64> = self.a.row(i).iter().copied().collect();
            row.push(norm);
            lp.le(row, self.b[i]);
        }
        let mut cap = vec![0.0; n + 1];
        cap[n] = 1.0;
        lp.le(cap, 1.0);
        Ok(match lp.solve()? {
            LpOutcome::Optimal { point, .. } => {
                let r = point[n];
                Some((point.rows(0, n).into_owned(), r))
            }
            LpOutcome::Infeasible => None,
            LpOutcome::Unbounded => unreachable!("radius is capped"),
        })
    }
}
