use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ConvexFn;
use crate::error::{Error, Result};
use crate::geometry::HPolyhedron;

/// JSON form of [`ConvexFn`]; vectors and matrices are plain (row-major) arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FnSpec {
    MaxAffine { slopes: Vec<Vec<f64>>, offsets: Vec<f64> },
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64>, r: f64 },
    Indicator { dim: usize, a: Vec<Vec<f64>>, b: Vec<f64> },
    Scale { mu: f64, inner: Box<FnSpec> },
    Sum { terms: Vec<FnSpec> },
    FiniteMax { branches: Vec<FnSpec> },
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Input("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<FnSpec> for ConvexFn {
    type Error = Error;

    fn try_from(s: FnSpec) -> Result<ConvexFn> {
        match s {
            FnSpec::MaxAffine { slopes, offsets } => {
                ConvexFn::max_affine(slopes.into_iter().map(DVector::from_vec).collect(), offsets)
            }
            FnSpec::Quadratic { q, c, r } => {
                let n = c.len();
                if q.len() != n {
                    return Err(Error::Dimension { expected: n, got: q.len() });
                }
                ConvexFn::quadratic(matrix_from_rows(&q, n)?, DVector::from_vec(c), r)
            }
            FnSpec::Indicator { dim, a, b } => {
                if dim == 0 {
                    return Err(Error::Input("dimension must be at least 1".into()));
                }
                let p = HPolyhedron::new(matrix_from_rows(&a, dim)?, DVector::from_vec(b))?;
                ConvexFn::indicator(p)
            }
            FnSpec::Scale { mu, inner } => ConvexFn::scale(mu, ConvexFn::try_from(*inner)?),
            FnSpec::Sum { terms } => {
                ConvexFn::sum(terms.into_iter().map(ConvexFn::try_from).collect::<Result<_>>()?)
            }
            FnSpec::FiniteMax { branches } => {
                ConvexFn::finite_max(branches.into_iter().map(ConvexFn::try_from).collect::<Result<_>>()?)
            }
        }
    }
}

impl From<ConvexFn> for FnSpec {
    fn from(f: ConvexFn) -> FnSpec {
        match f {
            ConvexFn::MaxAffine { slopes, offsets } => FnSpec::MaxAffine {
                slopes: slopes.iter().map(|s| s.iter().copied().collect()).collect(),
                offsets,
            },
            ConvexFn::Quadratic { q, c, r } => FnSpec::Quadratic { q: matrix_to_rows(&q), c: c.iter().copied().collect(), r },
            ConvexFn::IndicatorPoly(p) => FnSpec::Indicator {
                dim: p.dim(),
                a: matrix_to_rows(p.a()),
                b: p.b().iter().copied().collect(),
            },
            ConvexFn::Scale { mu, inner } => FnSpec::Scale { mu, inner: Box::new(FnSpec::from(*inner)) },
            ConvexFn::Sum(t) => FnSpec::Sum { terms: t.into_iter().map(FnSpec::from).collect() },
            ConvexFn::FiniteMax(b) => FnSpec::FiniteMax { branches: b.into_iter().map(FnSpec::from).collect() },
        }
    }
}
