//! Random inputs for the derivative and invariance checks.

use crate::kinematics::{determinant, Matrix};
use rand::Rng;

/// Random rotation in SO(d) from a product of planar rotations.
pub fn random_rotation(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut r = Matrix::identity(d);
    for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
        if b >= d {
            continue;
        }
        let th: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut g = Matrix::identity(d);
        g[(a, a)] = th.cos();
        g[(b, b)] = th.cos();
        g[(a, b)] = -th.sin();
        g[(b, a)] = th.sin();
        r = g * r;
    }
    r
}

/// Random F with det in (lo, hi): a perturbed identity rescaled onto the target det.
pub fn random_f(d: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    loop {
        let f = Matrix::from_fn(d, |i, j| {
            let e: f64 = rng.random_range(-0.5..0.5);
            if i == j {
                1.0 + e
            } else {
                e
            }
        });
        let det = determinant(&f);
        if det <= 0.05 {
            continue;
        }
        let target = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();
        let s = (target / det).powf(1.0 / d as f64);
        let f = f.scale(s);
        let det = determinant(&f);
        if det > lo && det < hi {
            return f;
        }
    }
}
