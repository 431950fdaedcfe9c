//! Euclidean projection onto `conv(points) + cone(rays)` by a primal active-set method
//! (Wolfe's minimum-norm-point scheme extended with unconstrained-sum ray columns).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    pub distance: f64,
    /// Convex weights on the points followed by nonnegative weights on the rays.
    pub weights: Vec<f64>,
}

/// Nearest point of `conv(points) + cone(rays)` to `target`. `points` must be nonempty.
pub fn project(points: &[DVector<f64>], rays: &[DVector<f64>], target: &DVector<f64>) -> Projection {
    assert!(!points.is_empty(), "projection onto an empty point set");
    let np = points.len();
    let cols: Vec<DVector<f64>> = points
        .iter()
        .map(|p| p - target)
        .chain(rays.iter().cloned())
        .collect();
    let total = cols.len();
    let is_point = |j: usize| j < np;
    let scale = cols.iter().map(|c| c.norm_squared()).fold(1.0f64, f64::max);
    let tol = 1e-13 * scale;

    let i0 = (0..np)
        .min_by(|&a, &b| cols[a].norm_squared().total_cmp(&cols[b].norm_squared()))
        .unwrap();
    let mut z = vec![0.0; total];
    z[i0] = 1.0;
    let mut active = vec![i0];

    let combo = |z: &[f64]| {
        let mut x = DVector::zeros(target.len());
        for (j, w) in z.iter().enumerate() {
            if *w != 0.0 {
                x.axpy(*w, &cols[j], 1.0);
            }
        }
        x
    };

    for _ in 0..(50 * total + 100) {
        let x = combo(&z);
        let nu = x.norm_squared();
        let mut entering = None;
        let mut worst = -tol;
        for j in 0..total {
            if active.contains(&j) {
                continue;
            }
            let viol = x.dot(&cols[j]) - if is_point(j) { nu } else { 0.0 };
            if viol < worst {
                worst = viol;
                entering = Some(j);
            }
        }
        let Some(j_new) = entering else { break };
        active.push(j_new);
        let mut progressed = false;
        for _ in 0..(total + 5) {
            let y = affine_min(&cols, &active, np);
            if active.iter().all(|&j| y[j] > 1e-15) {
                for &j in &active {
                    z[j] = y[j];
                }
                progressed = true;
                break;
            }
            let mut theta = 1.0f64;
            for &j in &active {
                if y[j] <= 1e-15 {
                    let denom = z[j] - y[j];
                    if denom > 0.0 {
                        theta = theta.min(z[j] / denom);
                    }
                }
            }
            for &j in &active {
                z[j] += theta * (y[j] - z[j]);
            }
            let before = active.len();
            active.retain(|&j| {
                if z[j] <= 1e-15 {
                    z[j] = 0.0;
                    false
                } else {
                    true
                }
            });
            if !active.contains(&j_new) && active.len() < before && theta == 0.0 {
                break;
            }
            if active.is_empty() {
                z[i0] = 1.0;
                active.push(i0);
                break;
            }
        }
        if !progressed && !active.contains(&j_new) {
            break;
        }
    }
    // Renormalise point weights against drift.
    let s: f64 = z[..np].iter().sum();
    if s > 0.0 {
        for w in z[..np].iter_mut() {
            *w /= s;
        }
    }
    let x = combo(&z);
    Projection { point: &x + target, distance: x.norm(), weights: z }
}

/// Minimiser of `‖Σ_{j∈S} y_j q_j‖²` subject to `Σ_{j∈S, point} y_j = 1`.
fn affine_min(cols: &[DVector<f64>], active: &[usize], np: usize) -> Vec<f64> {
    let k = active.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut trace = 0.0;
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            kkt[(a, b)] = cols[i].dot(&cols[j]);
        }
        trace += kkt[(a, a)];
        if i < np {
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
        }
    }
    let ridge = 1e-14 * (1.0 + trace);
    for a in 0..k {
        kkt[(a, a)] += ridge;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt
        .clone()
        .lu()
        .solve(&rhs)
        .or_else(|| kkt.svd(true, true).solve(&rhs, 1e-14).ok())
        .unwrap_or_else(|| DVector::zeros(k + 1));
    let mut y = vec![0.0; cols.len()];
    for (a, &j) in active.iter().enumerate() {
        y[j] = sol[a];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn segment_projection() {
        let p = project(&[v(&[0.5]), v(&[1.0])], &[], &v(&[0.0]));
        assert!((p.distance - 0.5).abs() < 1e-12);
    }

    #[test]
    fn square_projection() {
        let pts = [v(&[1.0, 1.0]), v(&[1.0, -1.0]), v(&[-1.0, 1.0]), v(&[-1.0, -1.0])];
        let p = project(&pts, &[], &v(&[2.0, 0.0]));
        assert!((p.distance - 1.0).abs() < 1e-12);
        assert!((p.point - v(&[1.0, 0.0])).norm() < 1e-12);
        let inside = project(&pts, &[], &v(&[0.3, -0.2]));
        assert!(inside.distance < 1e-10);
    }

    #[test]
    fn ray_projection() {
        // conv{0} + cone{(1,0)} is the nonnegative x-axis.
        let p = project(&[v(&[0.0, 0.0])], &[v(&[1.0, 0.0])], &v(&[3.0, 4.0]));
        assert!((p.distance - 4.0).abs() < 1e-12);
        let q = project(&[v(&[0.0, 0.0])], &[v(&[1.0, 0.0])], &v(&[-3.0, 4.0]));
        assert!((q.distance - 5.0).abs() < 1e-12);
    }
}
