//! Deterministic probe directions for support-function comparisons.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed seed for the high-dimensional direction sample.
pub const DIRECTION_SEED: u64 = 0x5eed_d1e5;

/// `count` unit directions in ℝⁿ: `±1` in one dimension, a uniform angular grid in two,
/// a Fibonacci sphere in three, and a seeded uniform sample on the sphere above that.
/// The signed coordinate axes are always included first when `n ≥ 2`.
pub fn probe_directions(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count.max(4))
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count.max(4) as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        3 => {
            let mut out = axes(3);
            out.extend(fibonacci_sphere(count.max(8)));
            out
        }
        _ => {
            let mut out = axes(n);
            let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED ^ n as u64);
            while out.len() < count.max(2 * n) {
                let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let nv = v.norm();
                if nv > 1e-3 && nv <= 1.0 {
                    out.push(v / nv);
                }
            }
            out
        }
    }
}

fn axes(n: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = s;
            out.push(e);
        }
    }
    out
}

fn fibonacci_sphere(count: usize) -> Vec<DVector<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let y = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * k as f64;
            DVector::from_vec(vec![r * th.cos(), y, r * th.sin()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_and_deterministic() {
        for n in 1..=5 {
            let a = probe_directions(n, 32);
            let b = probe_directions(n, 32);
            assert_eq!(a, b);
            assert!(a.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
        }
    }
}
