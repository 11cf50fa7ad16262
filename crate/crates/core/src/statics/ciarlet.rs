//! A posteriori Monte-Carlo test of ∫det∇y ≤ meas(y(Ω)).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretization::{evaluate, Discretization, FieldCoefficients, FieldRole};
use crate::kinematics::{cofactor, determinant, GradientVector, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CiarletNecasReport {
    pub det_integral: f64,
    pub image_measure: f64,
    /// one standard error of the Monte-Carlo estimate
    pub std_error: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

/// Verdict rule: PASS when ∫det lies within 3σ above the estimate, FAIL when
/// it exceeds the estimate by more than 6σ and 1e-3 relative, otherwise
/// INCONCLUSIVE. Statistical evidence only.
fn verdict(det_integral: f64, measure: f64, sigma: f64) -> Verdict {
    let slack = 1e-12 * measure.abs().max(det_integral.abs());
    if det_integral <= measure + 3.0 * sigma + slack {
        Verdict::Pass
    } else if det_integral > measure + 6.0 * sigma && det_integral > measure * (1.0 + 1e-3) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Check for a deformation given as a closure returning (y(X), ∇y(X)).
/// `det_integral` is supplied by the caller (quadrature of the same map).
pub fn check_ciarlet_necas_map(
    lower: &[f64],
    upper: &[f64],
    map: impl Fn(&[f64]) -> (Vec<f64>, Matrix),
    det_integral: f64,
    samples: usize,
    seed: u64,
) -> CiarletNecasReport {
    let d = lower.len();
    // preimage grid for the bounding box and Newton seeds
    let per_axis = if d == 1 { 512 } else { 48 };
    let mut grid: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let x: Vec<f64> = (0..d)
            .map(|a| lower[a] + (upper[a] - lower[a]) * idx[a] as f64 / (per_axis - 1) as f64)
            .collect();
        let (y, _) = map(&x);
        grid.push((x, y));
        let mut a = 0;
        while a < d {
            idx[a] += 1;
            if idx[a] < per_axis {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
        if a == d {
            break;
        }
    }
    let mut blo = vec![f64::INFINITY; d];
    let mut bhi = vec![f64::NEG_INFINITY; d];
    for (_, y) in &grid {
        for a in 0..d {
            blo[a] = blo[a].min(y[a]);
            bhi[a] = bhi[a].max(y[a]);
        }
    }
    let scale = (0..d).map(|a| bhi[a] - blo[a]).fold(0.0, f64::max).max(1e-300);
    for a in 0..d {
        let pad = 0.02 * (bhi[a] - blo[a]).max(1e-12);
        blo[a] -= pad;
        bhi[a] += pad;
    }
    let box_measure: f64 = (0..d).map(|a| bhi[a] - blo[a]).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let p: Vec<f64> = (0..d).map(|a| rng.random_range(blo[a]..bhi[a])).collect();
        if in_image(&p, &grid, &map, lower, upper, scale) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples.max(1) as f64;
    let image_measure = frac * box_measure;
    let std_error = box_measure * (frac * (1.0 - frac) / samples.max(1) as f64).sqrt();
    CiarletNecasReport {
        det_integral,
        image_measure,
        std_error,
        samples,
        verdict: verdict(det_integral, image_measure, std_error),
    }
}

/// Newton inversion of y(X) = p with X kept in the box, seeded from the
/// nearest grid images.
fn in_image(
    p: &[f64],
    grid: &[(Vec<f64>, Vec<f64>)],
    map: &impl Fn(&[f64]) -> (Vec<f64>, Matrix),
    lower: &[f64],
    upper: &[f64],
    scale: f64,
) -> bool {
    let d = p.len();
    let mut near: Vec<(f64, usize)> = grid
        .iter()
        .enumerate()
        .map(|(i, (_, y))| ((0..d).map(|a| (y[a] - p[a]).powi(2)).sum::<f64>(), i))
        .collect();
    let k = 4.min(near.len());
    near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
    near.truncate(k);
    for (_, i) in near {
        let mut x = grid[i].0.clone();
        for _ in 0..50 {
            let (y, f) = map(&x);
            let r: Vec<f64> = (0..d).map(|a| y[a] - p[a]).collect();
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 * scale {
                return true;
            }
            // any nonsingular Jacobian will do here, orientation is irrelevant
            let det = determinant(&f);
            if det.abs() < 1e-300 || !det.is_finite() {
                break;
            }
            let dx = cofactor(&f).transpose().scale(1.0 / det).apply(&GradientVector::new(&r));
            for a in 0..d {
                x[a] = (x[a] - dx[a]).clamp(lower[a], upper[a]);
            }
        }
    }
    false
}

/// Check for a spline deformation; ∫det is computed with the space's quadrature.
pub fn check_ciarlet_necas(disc: &Discretization, y: &[f64], samples: usize, seed: u64) -> CiarletNecasReport {
    let sp = &disc.deformation;
    let d = sp.dim();
    let ny = sp.n_basis();
    let mut det_integral = 0.0;
    for el in sp.elements() {
        for qp in &el.points {
            let mut f = Matrix::zeros(d);
            for a in 0..d {
                for (il, b) in qp.basis.iter().enumerate() {
                    for j in 0..d {
                        f[(a, j)] += y[a * ny + el.dofs[il]] * b.d1[j];
                    }
                }
            }
            det_integral += qp.weight * determinant(&f);
        }
    }
    let coeffs = FieldCoefficients { role: FieldRole::Deformation, components: d, values: y.to_vec() };
    let map = |x: &[f64]| {
        let jets = evaluate(sp, &coeffs, x, 1).expect("point inside the box");
        let v: Vec<f64> = jets.iter().map(|j| j.v).collect();
        (v, Matrix::from_fn(d, |a, b| jets[a].d1[b]))
    };
    check_ciarlet_necas_map(sp.lower(), sp.upper(), map, det_integral, samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_and_dilation_pass() {
        let disc = Discretization::new(&[0.0, 0.0], &[1.0, 2.0], &[3, 3], 3, 3, 3).unwrap();
        let id = disc.deformation.identity_coefficients();
        let r = check_ciarlet_necas(&disc, &id, 2000, 1);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!((r.det_integral - 2.0).abs() < 1e-12);
        assert!((r.image_measure - 2.0).abs() < 0.1);
        let dil: Vec<f64> = id.iter().map(|v| 2.0 * v).collect();
        let r = check_ciarlet_necas(&disc, &dil, 2000, 2);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!((r.det_integral - 8.0).abs() < 1e-11);
    }

    #[test]
    fn overlapping_polar_wrap_fails() {
        // r = 1 + X₁, θ = 3πX₂ covers the annulus 1 ≤ r ≤ 2 one and a half times, det = 3πr > 0
        let map = |x: &[f64]| {
            let (r, t) = (1.0 + x[0], 3.0 * PI * x[1]);
            let y = vec![r * t.cos(), r * t.sin()];
            let f = Matrix::from_rows(&[&[t.cos(), -3.0 * PI * r * t.sin()], &[t.sin(), 3.0 * PI * r * t.cos()]]);
            (y, f)
        };
        let det_integral = 4.5 * PI;
        let r = check_ciarlet_necas_map(&[0.0, 0.0], &[1.0, 1.0], map, det_integral, 4000, 3);
        assert!((r.image_measure - 3.0 * PI).abs() < 4.0 * r.std_error + 0.05, "{r:?}");
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn one_dimensional_maps_never_fail() {
        // in 1D ∫y' = y(b) − y(a) ≤ |y([a, b])| for any continuous y
        let map = |x: &[f64]| {
            let t = x[0];
            (vec![t + 0.3 * (6.0 * t).sin()], Matrix::from_rows(&[&[1.0 + 1.8 * (6.0 * t).cos()]]))
        };
        let integral = 1.0 + 0.3 * (6.0f64).sin();
        let r = check_ciarlet_necas_map(&[0.0], &[1.0], map, integral, 4000, 4);
        assert_eq!(r.verdict, Verdict::Pass);
    }
}
