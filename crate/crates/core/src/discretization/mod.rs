//! Conforming B-spline Galerkin spaces on a box, quadrature, field
//! evaluation and element-parallel assembly.

pub mod assembly;
pub mod bspline;
pub mod linalg;
pub mod quadrature;
pub mod space;

pub use assembly::{
    assemble, assemble_energy, assemble_matrices, assemble_weak_residual, functionals, min_det, Assembly, EnergyParts,
    Functionals, HyperForm, LoadState, Matrices, MinDet, Model, WeakResidual,
};
pub use linalg::{SparseLu, SparseMatrix};
pub use space::{build_space, evaluate, evaluate_scalar, FieldCoefficients, FieldRole, Jet, Side, SplineSpace};

use crate::error::{Error, Result};

/// Deformation space plus the shared concentration / chemical-potential
/// space on the same mesh and quadrature.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub deformation: SplineSpace,
    pub scalar: SplineSpace,
}

impl Discretization {
    /// `deformation_degree` must be ≥ `min_deformation_degree` (3 for the
    /// third-grade dynamic form, 2 for the static second-grade form).
    pub fn new(
        lower: &[f64],
        upper: &[f64],
        elements: &[usize],
        deformation_degree: usize,
        scalar_degree: usize,
        min_deformation_degree: usize,
    ) -> Result<Self> {
        if deformation_degree < min_deformation_degree {
            return Err(Error::InvalidConfig(format!(
                "deformation degree {deformation_degree} is below the required {min_deformation_degree}"
            )));
        }
        let nq = deformation_degree.max(scalar_degree) + 1;
        Ok(Discretization {
            deformation: build_space(lower, upper, elements, deformation_degree, Some(nq))?,
            scalar: build_space(lower, upper, elements, scalar_degree, Some(nq))?,
        })
    }

    pub fn with_quadrature(&self, nq: usize) -> Result<Self> {
        let s = &self.deformation;
        let e = s.elements_per_axis();
        Ok(Discretization {
            deformation: build_space(s.lower(), s.upper(), &e, s.degree(), Some(nq))?,
            scalar: build_space(s.lower(), s.upper(), &e, self.scalar.degree(), Some(nq))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.deformation.dim()
    }

    pub fn layout(&self) -> Layout {
        Layout {
            d: self.dim(),
            ny: self.deformation.n_basis(),
            ns: self.scalar.n_basis(),
        }
    }
}

/// Global unknown ordering `[y (d·N_y, component-major) | ζ | μ]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub ny: usize,
    pub ns: usize,
}

impl Layout {
    pub fn n_y(&self) -> usize {
        self.d * self.ny
    }
    pub fn zeta_offset(&self) -> usize {
        self.n_y()
    }
    pub fn mu_offset(&self) -> usize {
        self.n_y() + self.ns
    }
    pub fn total(&self) -> usize {
        self.n_y() + 2 * self.ns
    }
    pub fn split<'a>(&self, u: &'a [f64]) -> Fields<'a> {
        Fields {
            y: &u[..self.n_y()],
            zeta: &u[self.zeta_offset()..self.mu_offset()],
            mu: &u[self.mu_offset()..],
        }
    }
    pub fn join(&self, y: &[f64], zeta: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.total());
        u.extend_from_slice(y);
        u.extend_from_slice(zeta);
        u.extend_from_slice(mu);
        u
    }
}

/// Borrowed coefficient vectors of (y, ζ, μ).
#[derive(Clone, Copy, Debug)]
pub struct Fields<'a> {
    pub y: &'a [f64],
    pub zeta: &'a [f64],
    pub mu: &'a [f64],
}
