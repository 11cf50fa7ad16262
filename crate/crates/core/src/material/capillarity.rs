use crate::error::Result;
use crate::kinematics::{
    inverse, korteweg_stress, pullback_gradient, FourTensor, GradientVector, Matrix, ThreeTensor,
};

/// `(κ/2)|F^{-T} g|²`
pub fn capillarity_density(f: &Matrix, g: &GradientVector, kappa: f64) -> Result<f64> {
    let w = pullback_gradient(f, g)?;
    Ok(0.5 * kappa * w.norm_sq())
}

/// Capillarity density with first derivatives in F and in g.
#[derive(Clone, Copy, Debug)]
pub struct CapillarityEval {
    pub value: f64,
    /// σ_K = ∂_F c
    pub stress: Matrix,
    /// ∂_g c = κ F^{-1} F^{-T} g
    pub flux: GradientVector,
}

/// Second derivatives of the capillarity density.
#[derive(Clone, Copy, Debug)]
pub struct CapillarityHessian {
    pub d_ff: FourTensor,
    /// `d_fg[(a,b,c)] = ∂σ_K,ab / ∂g_c`
    pub d_fg: ThreeTensor,
    pub d_gg: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct Capillarity {
    pub kappa: f64,
}

impl Capillarity {
    pub fn new(kappa: f64) -> Self {
        Capillarity { kappa }
    }

    pub fn eval(&self, f: &Matrix, g: &GradientVector) -> Result<CapillarityEval> {
        let w = pullback_gradient(f, g)?;
        let finv = inverse(f)?;
        Ok(CapillarityEval {
            value: 0.5 * self.kappa * w.norm_sq(),
            stress: korteweg_stress(f, g, self.kappa)?,
            flux: finv.apply(&w).scale(self.kappa),
        })
    }

    /// Hessian via `w = F^{-T} g`, `s = F^{-1} w`, `σ_K = −κ w ⊗ s`.
    pub fn hessian(&self, f: &Matrix, g: &GradientVector) -> Result<CapillarityHessian> {
        let d = f.dim();
        let k = self.kappa;
        let finv = inverse(f)?;
        let w = finv.transpose().apply(g);
        let s = finv.apply(&w);
        let a = finv * finv.transpose();
        let mut d_ff = FourTensor::zeros(d);
        let mut d_fg = ThreeTensor::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for p in 0..d {
                    d_fg[(i, j, p)] = -k * (finv[(p, i)] * s[j] + w[i] * a[(j, p)]);
                    for q in 0..d {
                        d_ff[(i, j, p, q)] = k
                            * (finv[(q, i)] * w[p] * s[j]
                                + w[i] * finv[(j, p)] * s[q]
                                + w[i] * a[(j, q)] * w[p]);
                    }
                }
            }
        }
        Ok(CapillarityHessian {
            d_ff,
            d_fg,
            d_gg: a.scale(k),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::sampling::{random_f, random_rotation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_g(d: usize, rng: &mut impl Rng) -> GradientVector {
        GradientVector::new(&(0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())
    }

    #[test]
    fn density_examples() {
        let g0 = GradientVector::zeros(2);
        assert_eq!(capillarity_density(&Matrix::identity(2), &g0, 1.0).unwrap(), 0.0);
        let g = GradientVector::new(&[1.0, 1.0]);
        assert_eq!(capillarity_density(&Matrix::identity(2), &g, 2.0).unwrap(), 2.0);
        let g = GradientVector::new(&[1.0, 0.0]);
        let c = capillarity_density(&Matrix::scaled_identity(2, 2.0), &g, 1.0).unwrap();
        assert!((c - 0.125).abs() < 1e-16);
    }

    #[test]
    fn korteweg_is_gradient_of_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 1e-6;
        for _ in 0..100 {
            let d = rng.random_range(1..=3);
            let f = random_f(d, 0.2, 5.0, &mut rng);
            let g = random_g(d, &mut rng);
            let cap = Capillarity::new(rng.random_range(0.1..2.0));
            let e = cap.eval(&f, &g).unwrap();
            for a in 0..d {
                for b in 0..d {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(a, b)] += h;
                    fm[(a, b)] -= h;
                    let fd = (capillarity_density(&fp, &g, cap.kappa).unwrap()
                        - capillarity_density(&fm, &g, cap.kappa).unwrap())
                        / (2.0 * h);
                    let an = e.stress[(a, b)];
                    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "{fd} vs {an}");
                }
            }
            for c in 0..d {
                let mut gp = g;
                let mut gm = g;
                gp[c] += h;
                gm[c] -= h;
                let fd = (capillarity_density(&f, &gp, cap.kappa).unwrap()
                    - capillarity_density(&f, &gm, cap.kappa).unwrap())
                    / (2.0 * h);
                assert!((fd - e.flux[c]).abs() <= 1e-6 * e.flux[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn hessian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let h = 1e-6;
        for _ in 0..100 {
            let d = rng.random_range(1..=3);
            let f = random_f(d, 0.2, 5.0, &mut rng);
            let g = random_g(d, &mut rng);
            let cap = Capillarity::new(0.7);
            let hs = cap.hessian(&f, &g).unwrap();
            for p in 0..d {
                for q in 0..d {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(p, q)] += h;
                    fm[(p, q)] -= h;
                    let ep = cap.eval(&fp, &g).unwrap();
                    let em = cap.eval(&fm, &g).unwrap();
                    let ds = (ep.stress - em.stress).scale(0.5 / h);
                    for a in 0..d {
                        for b in 0..d {
                            let an = hs.d_ff[(a, b, p, q)];
                            assert!((ds[(a, b)] - an).abs() <= 1e-6 * an.abs().max(1.0));
                        }
                    }
                }
            }
            for c in 0..d {
                let mut gp = g;
                let mut gm = g;
                gp[c] += h;
                gm[c] -= h;
                let ep = cap.eval(&f, &gp).unwrap();
                let em = cap.eval(&f, &gm).unwrap();
                let ds = (ep.stress - em.stress).scale(0.5 / h);
                for a in 0..d {
                    for b in 0..d {
                        let an = hs.d_fg[(a, b, c)];
                        assert!((ds[(a, b)] - an).abs() <= 1e-6 * an.abs().max(1.0));
                    }
                    let dflux = (ep.flux[a] - em.flux[a]) / (2.0 * h);
                    assert!((dflux - hs.d_gg[(a, c)]).abs() <= 1e-6 * hs.d_gg[(a, c)].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn density_is_frame_indifferent() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            for d in [2, 3] {
                let f = random_f(d, 0.2, 5.0, &mut rng);
                let r = random_rotation(d, &mut rng);
                let g = random_g(d, &mut rng);
                let a = capillarity_density(&f, &g, 1.3).unwrap();
                let b = capillarity_density(&(r * f), &g, 1.3).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }
}
