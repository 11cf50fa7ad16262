use crate::error::{Error, Result};
use crate::kinematics::{cofactor, determinant, inverse, GradientVector, Matrix, ThreeTensor, TOL_DET};

/// Pulled-back mobility `𝔐 = (Cof F)^T 𝕄 (Cof F) / det F`.
pub fn mobility_pullback(f: &Matrix, mobility: &Matrix) -> Result<Matrix> {
    let j = determinant(f);
    if !(j.is_finite() && j > TOL_DET) {
        return Err(Error::SingularDeformation { det: j });
    }
    let cof = cofactor(f);
    Ok((cof.transpose() * *mobility * cof).scale(1.0 / j))
}

/// Reference diffusive flux `q = 𝔐(F, z) ∇μ` with its derivatives.
#[derive(Clone, Copy, Debug)]
pub struct MobilityFlux {
    pub tensor: Matrix,
    pub flux: GradientVector,
    /// `d_f[(b,p,q)] = ∂q_b / ∂F_pq`
    pub d_f: ThreeTensor,
    pub d_z: GradientVector,
}

/// Uses `𝔐 = J F^{-1} 𝕄 F^{-T}`; `mobility_dz` is d𝕄/dz at the same z.
pub fn mobility_flux(
    f: &Matrix,
    mobility: &Matrix,
    mobility_dz: &Matrix,
    grad_mu: &GradientVector,
) -> Result<MobilityFlux> {
    let d = f.dim();
    let tensor = mobility_pullback(f, mobility)?;
    let j = determinant(f);
    let finv = inverse(f)?;
    let u = finv.transpose().apply(grad_mu);
    let fn_ = finv.apply(&mobility.apply(&u));
    let b_mat = finv * *mobility * finv.transpose();
    let mut d_f = ThreeTensor::zeros(d);
    for b in 0..d {
        for p in 0..d {
            for q in 0..d {
                d_f[(b, p, q)] =
                    j * (finv[(q, p)] * fn_[b] - finv[(b, p)] * fn_[q] - b_mat[(b, q)] * u[p]);
            }
        }
    }
    let d_z = (finv * *mobility_dz * finv.transpose()).scale(j).apply(grad_mu);
    Ok(MobilityFlux {
        tensor,
        flux: tensor.apply(grad_mu),
        d_f,
        d_z,
    })
}
