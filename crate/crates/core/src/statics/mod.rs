//! Constrained minimization of the static energy
//! J(y, ζ) = ℰ(y, ζ) − ∫ f·y − ∫_Γ g·y over {∫ζ = Z, ζ ≥ 0, y = y_D on Γ_D}.

mod ciarlet;

pub use ciarlet::{check_ciarlet_necas, check_ciarlet_necas_map, CiarletNecasReport, Verdict};

use std::sync::Arc;

use crate::discretization::{
    assemble, min_det, Discretization, Fields, HyperForm, LoadState, MinDet, Model, Side, SparseMatrix,
};
use crate::error::{Error, Result};
use crate::material::{MaterialLaw, MaterialParams};

pub type BoundaryMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct Dirichlet {
    pub sides: Vec<Side>,
    /// y_D, evaluated at the Greville points of the constrained coefficients.
    pub map: BoundaryMap,
}

impl Dirichlet {
    pub fn identity(sides: Vec<Side>) -> Self {
        Dirichlet { sides, map: Arc::new(|x: &[f64]| x.to_vec()) }
    }
}

#[derive(Clone)]
pub struct StaticProblem {
    pub disc: Discretization,
    pub params: MaterialParams,
    pub law: Arc<dyn MaterialLaw>,
    pub loads: LoadState,
    pub dirichlet: Option<Dirichlet>,
    pub total_diffusant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticOptions {
    /// projected-gradient sup-norm
    pub g_tol: f64,
    pub max_iterations: usize,
    pub det_floor: f64,
    pub armijo: f64,
}

impl Default for StaticOptions {
    fn default() -> Self {
        StaticOptions { g_tol: 1e-8, max_iterations: 200_000, det_floor: 1e-3, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct StaticSolution {
    pub y: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu_bar: f64,
    pub energy: f64,
    pub min_det: MinDet,
    /// ∫ζ − Z
    pub mass_residual: f64,
    pub projected_gradient: f64,
    pub iterations: usize,
    /// J at every accepted iterate, starting with the initial guess.
    pub energy_history: Vec<f64>,
}

impl StaticProblem {
    fn model(&self, floor: f64) -> Model<'_> {
        Model {
            disc: &self.disc,
            law: self.law.as_ref(),
            params: &self.params,
            hyper: HyperForm::SecondGrade,
            det_floor: floor,
        }
    }

    /// Constrained y coefficients (flat indices) and their prescribed values.
    pub fn dirichlet_values(&self) -> Vec<(usize, f64)> {
        let Some(dir) = &self.dirichlet else { return Vec::new() };
        let sp = &self.disc.deformation;
        let (d, n) = (sp.dim(), sp.n_basis());
        let mut dofs: Vec<usize> = dir.sides.iter().flat_map(|s| sp.boundary_dofs(*s)).collect();
        dofs.sort_unstable();
        dofs.dedup();
        let mut out = Vec::new();
        for i in dofs {
            let v = (dir.map)(&sp.greville_point(i));
            for a in 0..d {
                out.push((a * n + i, v[a]));
            }
        }
        out
    }

    /// J and its coefficient gradient (y part, ζ part).
    fn energy_and_gradient(&self, model: &Model, y: &[f64], zeta: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let zero = vec![0.0; zeta.len()];
        let a = assemble(model, &Fields { y, zeta, mu: &zero }, &self.loads, false)?;
        let lay = self.disc.layout();
        let gy = a.residual[..lay.n_y()].to_vec();
        // μ-rows at μ = 0 are ∂ℰ/∂ζ
        let gz = a.residual[lay.mu_offset()..].to_vec();
        Ok((a.energy.internal() - a.energy.load_potential, gy, gz))
    }
}

/// Euclidean projection onto {ζ ≥ 0, wᵀζ = Z} (w > 0).
pub fn project_mass_simplex(v: &[f64], w: &[f64], total: f64) -> Vec<f64> {
    let mass = |lam: f64| -> f64 { v.iter().zip(w).map(|(vi, wi)| wi * (vi - lam * wi).max(0.0)).sum() };
    if total <= 0.0 {
        return vec![0.0; v.len()];
    }
    // mass(λ) is continuous and nonincreasing; bracket the root
    let mut lo = v.iter().zip(w).map(|(vi, wi)| vi / wi).fold(f64::INFINITY, f64::min);
    let mut step = 1.0;
    while mass(lo) < total {
        lo -= step;
        step *= 2.0;
    }
    let mut hi = v.iter().zip(w).map(|(vi, wi)| vi / wi).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) >= total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // exact shift on the identified support
    let support: Vec<usize> = (0..v.len()).filter(|&i| v[i] - lo * w[i] > 0.0).collect();
    let sw2: f64 = support.iter().map(|&i| w[i] * w[i]).sum();
    let swv: f64 = support.iter().map(|&i| w[i] * v[i]).sum();
    let lam = (swv - total) / sw2;
    let mut out = vec![0.0; v.len()];
    for &i in &support {
        out[i] = (v[i] - lam * w[i]).max(0.0);
    }
    out
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Projected gradient descent with Barzilai–Borwein steps. Every trial is
/// first screened against the determinant floor, then must satisfy a
/// monotone Armijo condition, so J never increases between iterates.
pub fn minimize_energy(problem: &StaticProblem, y0: &[f64], zeta0: &[f64], options: &StaticOptions) -> Result<StaticSolution> {
    let lay = problem.disc.layout();
    if y0.len() != lay.n_y() || zeta0.len() != lay.ns {
        return Err(Error::InvalidConfig("initial guess does not match the spaces".into()));
    }
    if !(problem.total_diffusant >= 0.0) {
        return Err(Error::InfeasibleStart(format!("total diffusant {} < 0", problem.total_diffusant)));
    }
    if problem.disc.deformation.degree() < 2 {
        return Err(Error::InvalidConfig("static second-grade energy needs deformation degree >= 2".into()));
    }
    let model = problem.model(options.det_floor);
    let w = problem.disc.scalar.basis_integrals();
    let fixed = problem.dirichlet_values();
    let mut is_fixed = vec![false; lay.n_y()];
    let mut y = y0.to_vec();
    for &(i, v) in &fixed {
        is_fixed[i] = true;
        y[i] = v;
    }
    let md = min_det(&problem.disc, &y);
    if !(md.value >= options.det_floor) {
        return Err(Error::InfeasibleStart(format!(
            "det ∇y₀ = {:e} at {:?} is below the floor {}",
            md.value, md.point, options.det_floor
        )));
    }
    let mut zeta = project_mass_simplex(zeta0, &w, problem.total_diffusant);
    let (mut e, mut gy, mut gz) = problem.energy_and_gradient(&model, &y, &zeta)?;
    for i in 0..lay.n_y() {
        if is_fixed[i] {
            gy[i] = 0.0;
        }
    }
    let mut history = vec![e];
    let step_to = |y: &[f64], zeta: &[f64], gy: &[f64], gz: &[f64], alpha: f64| -> (Vec<f64>, Vec<f64>) {
        let yt: Vec<f64> = y.iter().zip(gy).map(|(a, g)| a - alpha * g).collect();
        let zt: Vec<f64> = zeta.iter().zip(gz).map(|(a, g)| a - alpha * g).collect();
        (yt, project_mass_simplex(&zt, &w, problem.total_diffusant))
    };
    let projected_gradient = |y: &[f64], zeta: &[f64], gy: &[f64], gz: &[f64]| -> f64 {
        let (yt, zt) = step_to(y, zeta, gy, gz, 1.0);
        let dy = y.iter().zip(&yt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dz = zeta.iter().zip(&zt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        dy.max(dz)
    };
    let mut alpha = 1.0 / sup_norm(&gy).max(sup_norm(&gz)).max(1.0);
    let mut pg = projected_gradient(&y, &zeta, &gy, &gz);
    let mut iterations = 0;
    while pg > options.g_tol {
        if iterations >= options.max_iterations {
            return Err(Error::MaxIterations { iterations, residual: pg });
        }
        iterations += 1;
        let mut a = alpha;
        let accepted = loop {
            if a < 1e-14 {
                return Err(Error::LineSearchStalled { step: a });
            }
            let (yt, zt) = step_to(&y, &zeta, &gy, &gz, a);
            match problem.energy_and_gradient(&model, &yt, &zt) {
                Err(Error::DeterminantFloorViolated { .. }) | Err(Error::SingularDeformation { .. }) => {
                    a *= 0.5;
                    continue;
                }
                Err(err) => return Err(err),
                Ok((et, mut gyt, gzt)) => {
                    let slope: f64 = gy.iter().zip(y.iter().zip(&yt)).map(|(g, (a0, a1))| g * (a1 - a0)).sum::<f64>()
                        + gz.iter().zip(zeta.iter().zip(&zt)).map(|(g, (a0, a1))| g * (a1 - a0)).sum::<f64>();
                    let armijo = et <= e + options.armijo * slope;
                    // below round-off the sufficient-decrease test is meaningless; keep strict monotonicity
                    let roundoff = slope.abs() <= 1e-13 * e.abs().max(1e-300) && et <= e;
                    if armijo || roundoff {
                        for i in 0..lay.n_y() {
                            if is_fixed[i] {
                                gyt[i] = 0.0;
                            }
                        }
                        break (yt, zt, et, gyt, gzt);
                    }
                    a *= 0.5;
                }
            }
        };
        let (yt, zt, et, gyt, gzt) = accepted;
        // BB step from the accepted move
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..lay.n_y() {
            let s = yt[i] - y[i];
            ss += s * s;
            sy += s * (gyt[i] - gy[i]);
        }
        for i in 0..lay.ns {
            let s = zt[i] - zeta[i];
            ss += s * s;
            sy += s * (gzt[i] - gz[i]);
        }
        alpha = if sy > 0.0 && ss > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (2.0 * a).min(1e12) };
        y = yt;
        zeta = zt;
        e = et;
        gy = gyt;
        gz = gzt;
        history.push(e);
        pg = projected_gradient(&y, &zeta, &gy, &gz);
    }
    let mu_bar = {
        let inactive: Vec<usize> = (0..lay.ns).filter(|&i| zeta[i] > 0.0).collect();
        let sg: f64 = inactive.iter().map(|&i| gz[i]).sum();
        let sw: f64 = inactive.iter().map(|&i| w[i]).sum();
        if sw > 0.0 {
            sg / sw
        } else {
            0.0
        }
    };
    let mass: f64 = zeta.iter().zip(&w).map(|(a, b)| a * b).sum();
    Ok(StaticSolution {
        min_det: min_det(&problem.disc, &y),
        y,
        zeta,
        mu_bar,
        energy: e,
        mass_residual: mass - problem.total_diffusant,
        projected_gradient: pg,
        iterations,
        energy_history: history,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChemicalPotentialField {
    /// μ at every quadrature point, element by element
    pub values: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
}

/// Weak chemical potential: the L² Riesz representative of ∂ℰ/∂ζ in the
/// scalar space, i.e. M μ = (∫∂_zφ bᵢ + κ F^{-1}F^{-T}∇ζ·∇bᵢ)ᵢ.
pub fn chemical_potential_field(
    disc: &Discretization,
    law: &dyn MaterialLaw,
    params: &MaterialParams,
    y: &[f64],
    zeta: &[f64],
) -> Result<ChemicalPotentialField> {
    let lay = disc.layout();
    let model = Model { disc, law, params, hyper: HyperForm::SecondGrade, det_floor: 0.0 };
    let zero = vec![0.0; lay.ns];
    let a = assemble(&model, &Fields { y, zeta, mu: &zero }, &LoadState::default(), false)?;
    let rhs = &a.residual[lay.mu_offset()..];
    let mass: SparseMatrix = disc.scalar.mass_matrix(1.0);
    let coefficients = mass.solve(rhs)?;
    let mut values = Vec::new();
    let (mut total, mut vol) = (0.0, 0.0);
    for el in disc.scalar.elements() {
        for qp in &el.points {
            let v: f64 = el.dofs.iter().zip(&qp.basis).map(|(i, b)| coefficients[*i] * b.v).sum();
            values.push(v);
            total += qp.weight * v;
            vol += qp.weight;
        }
    }
    let mean = total / vol;
    let mut var = 0.0;
    let mut k = 0;
    for el in disc.scalar.elements() {
        for qp in &el.points {
            var += qp.weight * (values[k] - mean).powi(2);
            k += 1;
        }
    }
    Ok(ChemicalPotentialField { values, coefficients, mean, stddev: (var / vol).sqrt() })
}
