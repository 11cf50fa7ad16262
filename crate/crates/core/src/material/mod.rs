//! Constitutive laws: stored energy φ(F, z), capillarity, hypergradient
//! terms and the pulled-back mobility.

mod capillarity;
mod hypergradient;
mod mobility;

pub use capillarity::{capillarity_density, Capillarity, CapillarityEval};
pub use hypergradient::{hypergradient_dynamic, hypergradient_static, HyperEval};
pub use mobility::{mobility_flux, mobility_pullback, MobilityFlux};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{cofactor, determinant, FourTensor, Matrix};

/// Material mobility 𝕄: a scalar multiple of the identity or a constant SPD matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mobility {
    Isotropic(f64),
    Tensor(Vec<Vec<f64>>),
}

impl Mobility {
    pub fn matrix(&self, d: usize) -> Matrix {
        match self {
            Mobility::Isotropic(m0) => Matrix::scaled_identity(d, *m0),
            Mobility::Tensor(rows) => Matrix::from_fn(d, |i, j| rows[i][j]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// G
    pub shear_modulus: f64,
    /// λ
    pub volumetric_modulus: f64,
    /// ε_q
    pub barrier_coefficient: f64,
    /// q
    pub barrier_exponent: f64,
    /// η: stress per unit concentration excess.
    pub coupling: f64,
    /// β
    pub chemical_stiffness: f64,
    /// z_eq
    pub equilibrium_concentration: f64,
    /// κ
    pub capillarity: f64,
    /// h₀, scale of the hypergradient tensor ℍ = h₀·𝕀.
    pub hyper_scale: f64,
    /// p of the static 2nd-grade term.
    pub static_exponent: f64,
    /// ρ
    pub density: f64,
    /// α, boundary permeability.
    pub permeability: f64,
    pub mobility: Mobility,
    /// Add the null-Lagrangian counter-term that makes (I, z_eq) stress free with zero energy.
    pub stress_free_reference: bool,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            shear_modulus: 1.0,
            volumetric_modulus: 1.0,
            barrier_coefficient: 1e-4,
            barrier_exponent: 5.0,
            coupling: 0.1,
            chemical_stiffness: 1.0,
            equilibrium_concentration: 0.5,
            capillarity: 1e-2,
            hyper_scale: 1e-4,
            static_exponent: 4.0,
            density: 1.0,
            permeability: 0.0,
            mobility: Mobility::Isotropic(1.0),
            stress_free_reference: true,
        }
    }
}

impl MaterialParams {
    /// Check the parameter invariants for a d-dimensional body.
    pub fn validate(&self, d: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let positive = [
            ("shear_modulus", self.shear_modulus),
            ("barrier_exponent", self.barrier_exponent),
            ("chemical_stiffness", self.chemical_stiffness),
            ("capillarity", self.capillarity),
            ("density", self.density),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be > 0 (got {v})"));
            }
        }
        let nonneg = [
            ("volumetric_modulus", self.volumetric_modulus),
            ("barrier_coefficient", self.barrier_coefficient),
            ("equilibrium_concentration", self.equilibrium_concentration),
            ("hyper_scale", self.hyper_scale),
            ("permeability", self.permeability),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if !self.coupling.is_finite() {
            return fail("coupling must be finite".into());
        }
        let (p, q, df) = (self.static_exponent, self.barrier_exponent, d as f64);
        if !(p > df) {
            return fail(format!("static_exponent p must satisfy p > d (p = {p}, d = {d})"));
        }
        let qmin = p * df / (p - df);
        if !(q > qmin) {
            return fail(format!(
                "barrier_exponent must satisfy q > pd/(p-d) = {qmin} (q = {q}, p = {p}, d = {d})"
            ));
        }
        match &self.mobility {
            Mobility::Isotropic(m0) => {
                if !(m0.is_finite() && *m0 > 0.0) {
                    return fail(format!("mobility must be > 0 (got {m0})"));
                }
            }
            Mobility::Tensor(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return fail(format!("mobility tensor must be {d}x{d}"));
                }
                let m = self.mobility.matrix(d);
                if (m - m.transpose()).max_abs() > 1e-12 * m.max_abs() {
                    return fail("mobility tensor must be symmetric".into());
                }
                if m.symmetric_eigenvalues()[0] <= 0.0 {
                    return fail("mobility tensor must be positive definite".into());
                }
            }
        }
        Ok(())
    }
}

/// Stored-energy density with its first derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEval {
    pub value: f64,
    /// ∂_F φ
    pub dphi_df: Matrix,
    /// ∂_z φ
    pub dphi_dz: f64,
}

/// Second derivatives of φ, `d_ff[(a,b,p,q)] = ∂²φ/∂F_ab ∂F_pq`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyHessian {
    pub d_ff: FourTensor,
    pub d_fz: Matrix,
    pub d_zz: f64,
}

/// Extension point for constitutive laws. Implementations must be
/// frame indifferent and blow up as det F ↓ 0.
pub trait MaterialLaw: Send + Sync {
    fn stored(&self, f: &Matrix, z: f64) -> Result<EnergyEval>;
    fn stored_hessian(&self, f: &Matrix, z: f64) -> Result<EnergyHessian>;
    /// 𝕄(z)
    fn mobility(&self, z: f64, d: usize) -> Matrix;
    /// d𝕄/dz
    fn mobility_dz(&self, _z: f64, d: usize) -> Matrix {
        Matrix::zeros(d)
    }
}

/// Compressible neo-Hookean solid with quadratic chemical energy and linear
/// swelling coupling:
///
/// φ = G/2 (|F|² − d) − G ln J + λ/2 (J−1)² + ε_q J^{−q}
///     + β/2 (z − z_eq)² + η (z − z_eq)(J − 1)
///
/// plus, when `stress_free_reference` is set, `q ε_q (J − 1) − ε_q`.
#[derive(Clone, Debug)]
pub struct NeoHookeanSwelling {
    pub params: MaterialParams,
}

impl NeoHookeanSwelling {
    pub fn new(params: MaterialParams) -> Self {
        NeoHookeanSwelling { params }
    }

    fn calibration(&self) -> f64 {
        if self.params.stress_free_reference {
            self.params.barrier_exponent * self.params.barrier_coefficient
        } else {
            0.0
        }
    }

    /// Volumetric pressure-like factor p(J) multiplying Cof F in ∂_F φ.
    fn volumetric(&self, j: f64, z: f64) -> (f64, f64) {
        let p = &self.params;
        let q = p.barrier_exponent;
        let eps = p.barrier_coefficient;
        let dz = z - p.equilibrium_concentration;
        let val = p.volumetric_modulus * (j - 1.0) - q * eps * j.powf(-q - 1.0)
            + p.coupling * dz
            + self.calibration();
        let der = p.volumetric_modulus + q * (q + 1.0) * eps * j.powf(-q - 2.0);
        (val, der)
    }
}

fn positive_det(f: &Matrix) -> Result<f64> {
    let j = determinant(f);
    if j.is_finite() && j > 0.0 {
        Ok(j)
    } else {
        Err(Error::SingularDeformation { det: j })
    }
}

impl MaterialLaw for NeoHookeanSwelling {
    fn stored(&self, f: &Matrix, z: f64) -> Result<EnergyEval> {
        let p = &self.params;
        let d = f.dim();
        let j = positive_det(f)?;
        let g = p.shear_modulus;
        let eps = p.barrier_coefficient;
        let q = p.barrier_exponent;
        let dz = z - p.equilibrium_concentration;
        let mut value = 0.5 * g * (f.ddot(f) - d as f64) - g * j.ln()
            + 0.5 * p.volumetric_modulus * (j - 1.0).powi(2)
            + eps * j.powf(-q)
            + 0.5 * p.chemical_stiffness * dz * dz
            + p.coupling * dz * (j - 1.0);
        if p.stress_free_reference {
            value += q * eps * (j - 1.0) - eps;
        }
        let (vol, _) = self.volumetric(j, z);
        // P = G F − G F^{-T} + p(J) Cof F, with F^{-T} = Cof F / J
        let cof = cofactor(f);
        let dphi_df = f.scale(g) + cof.scale(vol - g / j);
        let dphi_dz = p.chemical_stiffness * dz + p.coupling * (j - 1.0);
        if !value.is_finite() || !dphi_df.is_finite() {
            return Err(Error::NonFiniteEvaluation(format!("stored energy at det F = {j:e}")));
        }
        Ok(EnergyEval { value, dphi_df, dphi_dz })
    }

    fn stored_hessian(&self, f: &Matrix, z: f64) -> Result<EnergyHessian> {
        let p = &self.params;
        let d = f.dim();
        let j = positive_det(f)?;
        let g = p.shear_modulus;
        let (vol, dvol) = self.volumetric(j, z);
        // P = G F + h(J) F^{-T},  h(J) = p(J) J − G
        let h = vol * j - g;
        let dh = dvol * j + vol;
        let fit = cofactor(f).scale(1.0 / j);
        let mut d_ff = FourTensor::zeros(d);
        for a in 0..d {
            for b in 0..d {
                for pp in 0..d {
                    for qq in 0..d {
                        let mut v = dh * j * fit[(pp, qq)] * fit[(a, b)]
                            - h * fit[(a, qq)] * fit[(pp, b)];
                        if a == pp && b == qq {
                            v += g;
                        }
                        d_ff[(a, b, pp, qq)] = v;
                    }
                }
            }
        }
        Ok(EnergyHessian {
            d_ff,
            d_fz: fit.scale(p.coupling * j),
            d_zz: p.chemical_stiffness,
        })
    }

    fn mobility(&self, _z: f64, d: usize) -> Matrix {
        self.params.mobility.matrix(d)
    }
}

/// φ(F, z) and its exact partial derivatives for the default law.
pub fn stored_density(f: &Matrix, z: f64, params: &MaterialParams) -> Result<EnergyEval> {
    NeoHookeanSwelling::new(params.clone()).stored(f, z)
}
