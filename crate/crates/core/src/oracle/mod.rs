//! Independent references: finite differences, dense small-instance solvers,
//! the derivative check suite and the wave-dispersion probe.

mod checks;
mod dense;
mod dispersion;
mod fd;
pub mod sampling;

pub use checks::{derivative_suite, CheckReport, CheckRow};
pub use dense::{
    dense_static_solve, DenseDynamics, DenseModel, DenseState, DenseStaticProblem, DenseStaticSolution,
    MAX_DYNAMIC_UNKNOWNS, MAX_STATIC_UNKNOWNS,
};
pub use dispersion::{dispersion_probe, DispersionOptions, DispersionPoint, DispersionResult, DispersionVerdict};
pub use fd::{fd_gradient, fd_jacobian, relative_error, FDSettings};
