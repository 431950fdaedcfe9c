use nalgebra::{DMatrix, DVector};

use crate::extreal::ExtReal;
use crate::geometry::Ellipsoid;

/// `x ↦ ½ xᵀQx + ⟨c, x⟩ + r` with `Q ⪰ 0`, carrying its eigendecomposition.
#[derive(Debug, Clone)]
pub struct QuadForm {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: f64,
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
}

/// Relative tolerance of the range test `g − c ∈ range Q`.
pub const RANGE_TOL: f64 = 1e-9;

impl QuadForm {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, r: f64) -> QuadForm {
        let eig = q.clone().symmetric_eigen();
        QuadForm { q, c, r, eigvals: eig.eigenvalues, eigvecs: eig.eigenvectors }
    }

    pub fn scaled(&self, mu: f64) -> QuadForm {
        QuadForm::new(&self.q * mu, &self.c * mu, self.r * mu)
    }

    pub fn plus(&self, o: &QuadForm) -> QuadForm {
        QuadForm::new(&self.q + &o.q, &self.c + &o.c, self.r + o.r)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x) + self.r
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.c
    }

    fn scale(&self) -> f64 {
        self.eigvals.amax().max(1.0)
    }

    fn rank_threshold(&self) -> f64 {
        1e-10 * self.scale()
    }

    /// Eigenbasis coordinates of `w`, split into range and kernel parts.
    fn split(&self, w: &DVector<f64>) -> (Vec<(f64, f64)>, f64) {
        let d = self.eigvecs.transpose() * w;
        let thr = self.rank_threshold();
        let mut range = Vec::new();
        let mut off = 0.0f64;
        for k in 0..self.dim() {
            if self.eigvals[k] > thr {
                range.push((self.eigvals[k], d[k]));
            } else {
                off = off.max(d[k].abs());
            }
        }
        (range, off)
    }

    pub fn nonsingular(&self) -> bool {
        self.eigvals.iter().all(|l| *l > self.rank_threshold())
    }

    /// `f*(g) = ½ (g−c)ᵀ Q⁺ (g−c) − r` on `c + range Q`, `+∞` elsewhere.
    pub fn conjugate(&self, g: &DVector<f64>) -> ExtReal {
        let w = g - &self.c;
        let (range, off) = self.split(&w);
        if off > RANGE_TOL * (1.0 + w.norm()) * self.scale() {
            return ExtReal::PosInf;
        }
        ExtReal::Finite(range.iter().map(|(l, d)| d * d / (2.0 * l)).sum::<f64>() - self.r)
    }

    /// `inf f`, or `−∞` when `c ∉ range Q`.
    pub fn infimum(&self) -> ExtReal {
        self.conjugate(&DVector::zeros(self.dim())).neg()
    }

    pub fn eps_dir_derivative(&self, x: &DVector<f64>, v: &DVector<f64>, eps: f64) -> f64 {
        let curv = v.dot(&(&self.q * v)).max(0.0);
        self.grad(x).dot(v) + (2.0 * eps * curv).sqrt()
    }

    /// `∂_ε f(x) = {∇f(x) + Qz : ½ zᵀQz ≤ ε}`.
    pub fn eps_subdiff(&self, x: &DVector<f64>, eps: f64) -> Ellipsoid {
        Ellipsoid { center: self.grad(x), shape: self.q.clone(), rad2: 2.0 * eps }
    }

    /// `[f ≤ λ]` as an ellipsoid when `Q` is nonsingular (`Some(None)` when empty);
    /// `None` when `Q` is singular.
    pub fn sublevel_ellipsoid(&self, lambda: f64) -> Option<Option<Ellipsoid>> {
        if !self.nonsingular() {
            return None;
        }
        let qinv = self.q.clone().try_inverse()?;
        let center = -(&qinv * &self.c);
        let fmin = self.eval(&center);
        let level = lambda - fmin;
        if level < 0.0 {
            return Some(None);
        }
        Some(Some(Ellipsoid { center, shape: qinv, rad2: 2.0 * level }))
    }
}
