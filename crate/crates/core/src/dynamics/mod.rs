//! Implicit time integration of the coupled momentum / diffusion /
//! chemical-potential system with per-step energy accounting.
//!
//! Unknowns per step are (y⁺, ζ⁺, μ⁺); the velocity is eliminated via
//! v⁺ = (y⁺ − yⁿ)/Δt (implicit Euler) or v⁺ = 2(y⁺ − yⁿ)/Δt − vⁿ (midpoint).
//! Rows are scaled so the system reads
//!
//! ```text
//! M_ρ (y⁺ − yⁿ − Δt vⁿ) + θΔt² R_y(·)           = 0
//! M_s (ζ⁺ − ζⁿ)        + Δt R_ζ(·)              = 0     (Cahn–Hilliard)
//! τ M_s (ζ⁺ − ζⁿ)      + Δt M_s μ⁺              = 0     (Allen–Cahn)
//! R_μ(·)                                        = 0
//! ```
//!
//! with θ = 1 (Euler) or ½ (midpoint) and spatial terms evaluated at the
//! new state (Euler) or at the averages of y and ζ (midpoint).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{
    assemble, assemble_matrices, functionals, min_det, Discretization, Fields, HyperForm, Layout, LoadState, Matrices,
    MinDet, Model, SparseMatrix,
};
use crate::error::{Error, Result};
use crate::material::{MaterialLaw, MaterialParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    ImplicitEuler,
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionMode {
    CahnHilliard,
    /// local relaxation τ ζ̇ + μ = 0
    AllenCahn { relaxation: f64 },
    /// ζ held fixed; mechanics only
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicOptions {
    pub scheme: TimeScheme,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    /// number of Δt halvings tried before a step is given up
    pub retry_budget: usize,
    pub det_floor: f64,
    /// relative tolerance of the per-step energy balance flag
    pub energy_tol: f64,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        DynamicOptions {
            scheme: TimeScheme::ImplicitEuler,
            newton_tol: 1e-10,
            max_newton_iterations: 25,
            retry_budget: 8,
            det_floor: 1e-3,
            energy_tol: 1e-8,
        }
    }
}

pub type LoadSchedule = Arc<dyn Fn(f64) -> LoadState + Send + Sync>;

pub fn constant_loads(loads: LoadState) -> LoadSchedule {
    Arc::new(move |_| loads.clone())
}

/// Cached diagnostics of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSummary {
    pub kinetic: f64,
    pub stored: f64,
    pub mass: f64,
    pub min_det: MinDet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicState {
    pub t: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub summary: StateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub kinetic: f64,
    pub stored: f64,
    pub delta_energy: f64,
    pub dissipated: f64,
    pub work: f64,
    pub balance_residual: f64,
    pub mass: f64,
    pub mass_change: f64,
    pub min_det: f64,
    pub newton_iterations: usize,
    /// Δt halvings needed for this step
    pub substeps: usize,
    /// ∫|∇μ⁺|² and ∫|∇ζ⁺|² at the end of the step
    pub grad_mu_sq: f64,
    pub grad_zeta_sq: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub initial: StateSummary,
    pub steps: Vec<StepDiagnostics>,
    pub final_state: DynamicState,
}

/// One solver instance: spaces, material, loads and options. Assembled
/// mass matrices are cached; the instance holds no per-trajectory state.
pub struct DynamicSystem {
    pub disc: Discretization,
    pub params: MaterialParams,
    pub law: Arc<dyn MaterialLaw>,
    pub loads: LoadSchedule,
    pub mode: DiffusionMode,
    pub options: DynamicOptions,
    mats: Matrices,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Y,
    Zeta,
    Mu,
}

impl DynamicSystem {
    pub fn new(
        disc: Discretization,
        params: MaterialParams,
        law: Arc<dyn MaterialLaw>,
        loads: LoadSchedule,
        mode: DiffusionMode,
        options: DynamicOptions,
    ) -> Result<Self> {
        if disc.deformation.degree() < 3 {
            return Err(Error::InvalidConfig(
                "dynamics needs a deformation degree >= 3 for the third-gradient term".into(),
            ));
        }
        if let DiffusionMode::AllenCahn { relaxation } = mode {
            if !(relaxation > 0.0 && relaxation.is_finite()) {
                return Err(Error::Validation(format!("relaxation τ must be > 0 (got {relaxation})")));
            }
        }
        let mats = assemble_matrices(&disc, &params);
        Ok(DynamicSystem { disc, params, law, loads, mode, options, mats })
    }

    fn model(&self) -> Model<'_> {
        Model {
            disc: &self.disc,
            law: self.law.as_ref(),
            params: &self.params,
            hyper: HyperForm::ThirdGrade,
            det_floor: self.options.det_floor,
        }
    }

    pub fn layout(&self) -> Layout {
        self.disc.layout()
    }

    pub fn matrices(&self) -> &Matrices {
        &self.mats
    }

    pub fn summarize(&self, y: &[f64], v: &[f64], zeta: &[f64]) -> Result<StateSummary> {
        let lay = self.layout();
        let zero = vec![0.0; lay.ns];
        let m = Model { det_floor: f64::NEG_INFINITY, ..self.model() };
        let e = assemble(&m, &Fields { y, zeta, mu: &zero }, &LoadState::default(), false)?.energy;
        let w = self.disc.scalar.basis_integrals();
        Ok(StateSummary {
            kinetic: 0.5 * self.mats.mass.quadratic_form(v),
            stored: e.internal(),
            mass: zeta.iter().zip(&w).map(|(a, b)| a * b).sum(),
            min_det: min_det(&self.disc, y),
        })
    }

    /// Initial state; without μ the consistent chemical potential
    /// (the solution of R_μ = 0) is used.
    pub fn initial_state(&self, y: Vec<f64>, v: Vec<f64>, zeta: Vec<f64>, mu: Option<Vec<f64>>) -> Result<DynamicState> {
        let lay = self.layout();
        if y.len() != lay.n_y() || v.len() != lay.n_y() || zeta.len() != lay.ns {
            return Err(Error::InvalidConfig("initial fields do not match the spaces".into()));
        }
        if y.iter().chain(&v).chain(&zeta).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("initial fields".into()));
        }
        let md = min_det(&self.disc, &y);
        if !(md.value >= self.options.det_floor) {
            return Err(Error::DeterminantFloorViolated {
                point: md.point,
                value: md.value,
                floor: self.options.det_floor,
            });
        }
        let mu = match mu {
            Some(mu) => mu,
            None => {
                let zero = vec![0.0; lay.ns];
                let a = assemble(&self.model(), &Fields { y: &y, zeta: &zeta, mu: &zero }, &LoadState::default(), false)?;
                self.mats.scalar_mass.solve(&a.residual[lay.mu_offset()..])?
            }
        };
        let summary = self.summarize(&y, &v, &zeta)?;
        Ok(DynamicState { t: 0.0, y, v, zeta, mu, summary })
    }

    fn n_unknowns(&self) -> usize {
        let lay = self.layout();
        match self.mode {
            DiffusionMode::Frozen => lay.n_y(),
            _ => lay.total(),
        }
    }

    fn block(&self, i: usize) -> Block {
        let lay = self.layout();
        if i < lay.n_y() {
            Block::Y
        } else if i < lay.mu_offset() {
            Block::Zeta
        } else {
            Block::Mu
        }
    }

    fn theta(&self) -> f64 {
        match self.options.scheme {
            TimeScheme::ImplicitEuler => 1.0,
            TimeScheme::Midpoint => 0.5,
        }
    }

    /// Expand the unknown vector to (y⁺, ζ⁺, μ⁺).
    fn unpack(&self, prev: &DynamicState, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let lay = self.layout();
        match self.mode {
            DiffusionMode::Frozen => (u.to_vec(), prev.zeta.clone(), prev.mu.clone()),
            _ => {
                let f = lay.split(u);
                (f.y.to_vec(), f.zeta.to_vec(), f.mu.to_vec())
            }
        }
    }

    fn stage(&self, prev: &DynamicState, y: &[f64], zeta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match self.options.scheme {
            TimeScheme::ImplicitEuler => (y.to_vec(), zeta.to_vec()),
            TimeScheme::Midpoint => (
                y.iter().zip(&prev.y).map(|(a, b)| 0.5 * (a + b)).collect(),
                zeta.iter().zip(&prev.zeta).map(|(a, b)| 0.5 * (a + b)).collect(),
            ),
        }
    }

    fn stage_time(&self, prev: &DynamicState, dt: f64) -> f64 {
        prev.t + self.theta() * dt
    }

    /// Scaled step residual and (optionally) its Jacobian.
    fn system(&self, prev: &DynamicState, u: &[f64], dt: f64, jac: bool) -> Result<(Vec<f64>, Option<SparseMatrix>)> {
        let lay = self.layout();
        let theta = self.theta();
        let (y, zeta, mu) = self.unpack(prev, u);
        let (ys, zs) = self.stage(prev, &y, &zeta);
        let loads = (self.loads)(self.stage_time(prev, dt));
        let asm = assemble(&self.model(), &Fields { y: &ys, zeta: &zs, mu: &mu }, &loads, jac)?;
        let n = self.n_unknowns();
        let cy = theta * dt * dt;
        let mut r = vec![0.0; n];
        let inertia: Vec<f64> = (0..lay.n_y()).map(|i| y[i] - prev.y[i] - dt * prev.v[i]).collect();
        let mi = self.mats.mass.matvec(&inertia);
        for i in 0..lay.n_y() {
            r[i] = mi[i] + cy * asm.residual[i];
        }
        let dz: Vec<f64> = zeta.iter().zip(&prev.zeta).map(|(a, b)| a - b).collect();
        match self.mode {
            DiffusionMode::Frozen => {}
            DiffusionMode::CahnHilliard => {
                let mz = self.mats.scalar_mass.matvec(&dz);
                for i in 0..lay.ns {
                    r[lay.zeta_offset() + i] = mz[i] + dt * asm.residual[lay.zeta_offset() + i];
                }
            }
            DiffusionMode::AllenCahn { relaxation } => {
                let mz = self.mats.scalar_mass.matvec(&dz);
                let mm = self.mats.scalar_mass.matvec(&mu);
                for i in 0..lay.ns {
                    r[lay.zeta_offset() + i] = relaxation * mz[i] + dt * mm[i];
                }
            }
        }
        if self.mode != DiffusionMode::Frozen {
            for i in 0..lay.ns {
                r[lay.mu_offset() + i] = asm.residual[lay.mu_offset() + i];
            }
        }
        if !jac {
            return Ok((r, None));
        }
        let k = asm.jacobian.expect("jacobian requested");
        let mut trips = Vec::with_capacity(k.nnz() + self.mats.mass.nnz() + 2 * self.mats.scalar_mass.nnz());
        for (i, j, v) in k.triplets() {
            let (bi, bj) = (self.block(i), self.block(j));
            if self.mode == DiffusionMode::Frozen && (bi != Block::Y || bj != Block::Y) {
                continue;
            }
            let row = match bi {
                Block::Y => cy,
                Block::Zeta => match self.mode {
                    DiffusionMode::CahnHilliard => dt,
                    _ => continue,
                },
                Block::Mu => 1.0,
            };
            let col = if bj == Block::Mu { 1.0 } else { theta };
            trips.push((i, j, row * col * v));
        }
        trips.extend(self.mats.mass.triplets());
        let zo = lay.zeta_offset();
        match self.mode {
            DiffusionMode::Frozen => {}
            DiffusionMode::CahnHilliard => {
                trips.extend(self.mats.scalar_mass.triplets().map(|(i, j, v)| (zo + i, zo + j, v)))
            }
            DiffusionMode::AllenCahn { relaxation } => {
                let mo = lay.mu_offset();
                for (i, j, v) in self.mats.scalar_mass.triplets() {
                    trips.push((zo + i, zo + j, relaxation * v));
                    trips.push((zo + i, mo + j, dt * v));
                }
            }
        }
        Ok((r, Some(SparseMatrix::from_triplets(n, n, &trips))))
    }

    fn pack(&self, y: &[f64], zeta: &[f64], mu: &[f64]) -> Vec<f64> {
        match self.mode {
            DiffusionMode::Frozen => y.to_vec(),
            _ => self.layout().join(y, zeta, mu),
        }
    }

    /// Newton with a residual-decrease line search that halves until every
    /// trial state clears the determinant floor.
    fn newton(&self, prev: &DynamicState, dt: f64) -> Result<(Vec<f64>, usize)> {
        let tol = self.options.newton_tol;
        let predictor: Vec<f64> = prev.y.iter().zip(&prev.v).map(|(y, v)| y + dt * v).collect();
        let mut u = self.pack(&predictor, &prev.zeta, &prev.mu);
        let mut current = self.system(prev, &u, dt, true);
        if matches!(current, Err(Error::DeterminantFloorViolated { .. })) {
            u = self.pack(&prev.y, &prev.zeta, &prev.mu);
            current = self.system(prev, &u, dt, true);
        }
        let (mut r, mut jac) = current?;
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sup = |r: &[f64]| r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut it = 0;
        while sup(&r) > tol {
            if it >= self.options.max_newton_iterations {
                return Err(Error::NewtonDiverged { iterations: it, residual: sup(&r) });
            }
            it += 1;
            let k = jac.take().expect("jacobian");
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let du = k.solve(&rhs)?;
            let r0 = norm(&r);
            let mut alpha = 1.0;
            let mut floor_error = None;
            loop {
                if alpha < 1e-10 {
                    return Err(floor_error.unwrap_or(Error::NewtonDiverged { iterations: it, residual: sup(&r) }));
                }
                let ut: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
                match self.system(prev, &ut, dt, false) {
                    Ok((rt, _)) if norm(&rt) <= (1.0 - 1e-4 * alpha) * r0 || sup(&rt) <= tol => {
                        u = ut;
                        break;
                    }
                    Ok(_) => {}
                    Err(e @ Error::DeterminantFloorViolated { .. }) => floor_error = Some(e),
                    Err(Error::SingularDeformation { .. }) | Err(Error::NonFiniteEvaluation(_)) => {}
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            let (rn, jn) = self.system(prev, &u, dt, true)?;
            r = rn;
            jac = jn;
        }
        Ok((u, it))
    }

    /// One time step of size dt; no retries.
    pub fn step(&self, prev: &DynamicState, dt: f64) -> Result<(DynamicState, StepDiagnostics)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be > 0 (got {dt})")));
        }
        let (u, iterations) = self.newton(prev, dt)?;
        let (y, zeta, mu) = self.unpack(prev, &u);
        let v: Vec<f64> = match self.options.scheme {
            TimeScheme::ImplicitEuler => y.iter().zip(&prev.y).map(|(a, b)| (a - b) / dt).collect(),
            TimeScheme::Midpoint => (0..y.len()).map(|i| 2.0 * (y[i] - prev.y[i]) / dt - prev.v[i]).collect(),
        };
        // the power terms use the velocity and μ that the scheme pairs with the equations
        let v_pair: Vec<f64> = y.iter().zip(&prev.y).map(|(a, b)| (a - b) / dt).collect();
        let (ys, zs) = self.stage(prev, &y, &zeta);
        let loads = (self.loads)(self.stage_time(prev, dt));
        let fun = functionals(&self.model(), &Fields { y: &ys, zeta: &zs, mu: &mu }, Some(&v_pair), &loads)?;
        let dissipated = match self.mode {
            DiffusionMode::CahnHilliard => dt * fun.dissipation_rate,
            DiffusionMode::AllenCahn { relaxation } => {
                let dz: Vec<f64> = zeta.iter().zip(&prev.zeta).map(|(a, b)| a - b).collect();
                relaxation / dt * self.mats.scalar_mass.quadratic_form(&dz)
            }
            DiffusionMode::Frozen => 0.0,
        };
        let work = dt
            * (fun.work_rate
                + if self.mode == DiffusionMode::CahnHilliard { fun.exchange_rate } else { 0.0 });
        let summary = self.summarize(&y, &v, &zeta)?;
        let end = fun_at_end(self, &y, &zeta, &mu, &loads)?;
        let delta_energy = summary.kinetic + summary.stored - prev.summary.kinetic - prev.summary.stored;
        let state = DynamicState { t: prev.t + dt, y, v, zeta, mu, summary: summary.clone() };
        if state.y.iter().chain(&state.v).chain(&state.zeta).chain(&state.mu).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("step produced non-finite coefficients".into()));
        }
        let diag = StepDiagnostics {
            step: 0,
            t: state.t,
            dt,
            kinetic: summary.kinetic,
            stored: summary.stored,
            delta_energy,
            dissipated,
            work,
            balance_residual: delta_energy + dissipated - work,
            mass: summary.mass,
            mass_change: summary.mass - prev.summary.mass,
            min_det: summary.min_det.value,
            newton_iterations: iterations,
            substeps: 0,
            grad_mu_sq: end.0,
            grad_zeta_sq: end.1,
        };
        Ok((state, diag))
    }

    /// Step with Δt halving on solver failure; the interval [t, t+dt] is
    /// covered by 2^k substeps whose diagnostics are summed.
    pub fn step_with_retry(&self, prev: &DynamicState, dt: f64) -> Result<(DynamicState, StepDiagnostics)> {
        let mut last_err = None;
        for level in 0..=self.options.retry_budget {
            let n = 1usize << level;
            let h = dt / n as f64;
            let mut state = prev.clone();
            let mut agg: Option<StepDiagnostics> = None;
            let mut failed = None;
            for _ in 0..n {
                match self.step(&state, h) {
                    Ok((s, d)) => {
                        agg = Some(match agg {
                            None => d,
                            Some(a) => StepDiagnostics {
                                delta_energy: a.delta_energy + d.delta_energy,
                                dissipated: a.dissipated + d.dissipated,
                                work: a.work + d.work,
                                balance_residual: a.balance_residual + d.balance_residual,
                                mass_change: a.mass_change + d.mass_change,
                                min_det: a.min_det.min(d.min_det),
                                newton_iterations: a.newton_iterations + d.newton_iterations,
                                ..d
                            },
                        });
                        state = s;
                    }
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            match failed {
                None => {
                    let mut d = agg.expect("at least one substep");
                    d.dt = dt;
                    d.substeps = level;
                    return Ok((state, d));
                }
                Some(e @ (Error::NewtonDiverged { .. } | Error::DeterminantFloorViolated { .. } | Error::LinearSolveFailed(_))) => {
                    last_err = Some(e);
                }
                Some(e) => return Err(e),
            }
        }
        Err(last_err.expect("retry loop ran"))
    }
}

fn fun_at_end(sys: &DynamicSystem, y: &[f64], zeta: &[f64], mu: &[f64], loads: &LoadState) -> Result<(f64, f64)> {
    let f = functionals(&sys.model(), &Fields { y, zeta, mu }, None, loads)?;
    Ok((f.grad_mu_sq, f.grad_zeta_sq))
}

/// Run from `initial` to `t_end` with nominal step `dt`. The observer sees
/// every completed step (for streaming output); an observer error aborts.
pub fn simulate(
    system: &DynamicSystem,
    initial: DynamicState,
    t_end: f64,
    dt: f64,
    observer: &mut dyn FnMut(&StepDiagnostics, &DynamicState) -> Result<()>,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be > 0 (got {dt})")));
    }
    if !(t_end >= initial.t) {
        return Err(Error::Validation(format!("final time {t_end} precedes the initial time {}", initial.t)));
    }
    let t0 = initial.t;
    let n_steps = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut steps = Vec::with_capacity(n_steps);
    let initial_summary = initial.summary.clone();
    let mut state = initial;
    for n in 0..n_steps {
        let target = if n + 1 == n_steps { t_end } else { t0 + (n + 1) as f64 * dt };
        let h = target - state.t;
        let (next, mut diag) = system.step_with_retry(&state, h).map_err(|e| Error::AtStep {
            step: n + 1,
            time: state.t,
            source: Box::new(e),
        })?;
        diag.step = n + 1;
        observer(&diag, &next)?;
        steps.push(diag);
        state = next;
    }
    Ok(Trajectory { initial: initial_summary, steps, final_state: state })
}

pub fn allen_cahn_step(system: &DynamicSystem, state: &DynamicState, dt: f64) -> Result<(DynamicState, StepDiagnostics)> {
    if !matches!(system.mode, DiffusionMode::AllenCahn { .. }) {
        return Err(Error::InvalidConfig("system is not in Allen-Cahn mode".into()));
    }
    system.step(state, dt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub step: usize,
    pub t: f64,
    pub kinetic: f64,
    pub stored: f64,
    pub dissipated: f64,
    pub work: f64,
    pub balance_residual: f64,
    pub mass: f64,
    pub min_det: f64,
    pub cumulative_dissipated: f64,
    pub cumulative_work: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub rows: Vec<ReportRow>,
    pub flagged_steps: Vec<usize>,
    pub max_relative_balance: f64,
}

/// Per-step table with cumulative sums; a step is flagged when its balance
/// residual exceeds `energy_tol` relative to the total energy.
pub fn energy_report(trajectory: &Trajectory, energy_tol: f64) -> Result<EnergyReport> {
    if trajectory.steps.is_empty() {
        return Err(Error::Validation("empty trajectory".into()));
    }
    let mut rows = Vec::new();
    let mut flagged_steps = Vec::new();
    let (mut cd, mut cw) = (0.0, 0.0);
    let mut prev_total = trajectory.initial.kinetic + trajectory.initial.stored;
    let mut max_rel = 0.0f64;
    for s in &trajectory.steps {
        cd += s.dissipated;
        cw += s.work;
        let total = s.kinetic + s.stored;
        let scale = prev_total.abs().max(total.abs()).max(1e-6);
        let rel = s.balance_residual / scale;
        max_rel = max_rel.max(rel);
        let flagged = rel > energy_tol;
        if flagged {
            flagged_steps.push(s.step);
        }
        rows.push(ReportRow {
            step: s.step,
            t: s.t,
            kinetic: s.kinetic,
            stored: s.stored,
            dissipated: s.dissipated,
            work: s.work,
            balance_residual: s.balance_residual,
            mass: s.mass,
            min_det: s.min_det,
            cumulative_dissipated: cd,
            cumulative_work: cw,
            flagged,
        });
        prev_total = total;
    }
    Ok(EnergyReport { rows, flagged_steps, max_relative_balance: max_rel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::NeoHookeanSwelling;

    fn system(d: usize, mode: DiffusionMode, scheme: TimeScheme) -> DynamicSystem {
        let params = MaterialParams { permeability: 0.3, hyper_scale: 1e-3, ..Default::default() };
        let disc = if d == 1 {
            Discretization::new(&[0.0], &[1.0], &[4], 3, 3, 3).unwrap()
        } else {
            Discretization::new(&[0.0, 0.0], &[1.0, 1.0], &[2, 2], 3, 2, 3).unwrap()
        };
        let loads = constant_loads(LoadState { body_force: [0.1, -0.2], mu_ext: 0.2, ..Default::default() });
        let opts = DynamicOptions { scheme, ..Default::default() };
        DynamicSystem::new(disc, params.clone(), Arc::new(NeoHookeanSwelling::new(params)), loads, mode, opts).unwrap()
    }

    fn perturbed(sys: &DynamicSystem) -> DynamicState {
        let lay = sys.layout();
        let y: Vec<f64> = sys
            .disc
            .deformation
            .identity_coefficients()
            .iter()
            .enumerate()
            .map(|(i, x)| x + 0.01 * (i as f64 * 0.7).sin())
            .collect();
        let v: Vec<f64> = (0..lay.n_y()).map(|i| 0.05 * (i as f64).cos()).collect();
        let z: Vec<f64> = (0..lay.ns).map(|i| 0.5 + 0.05 * (i as f64 * 1.3).sin()).collect();
        sys.initial_state(y, v, z, None).unwrap()
    }

    #[test]
    fn step_jacobian_matches_differences() {
        for d in [1, 2] {
            for mode in [DiffusionMode::CahnHilliard, DiffusionMode::AllenCahn { relaxation: 0.7 }, DiffusionMode::Frozen] {
                for scheme in [TimeScheme::ImplicitEuler, TimeScheme::Midpoint] {
                    let sys = system(d, mode, scheme);
                    let prev = perturbed(&sys);
                    let dt = 0.05;
                    let mut u = sys.pack(&prev.y, &prev.zeta, &prev.mu);
                    for (i, x) in u.iter_mut().enumerate() {
                        *x += 1e-3 * (i as f64).sin();
                    }
                    let (_, k) = sys.system(&prev, &u, dt, true).unwrap();
                    let k = k.unwrap().to_dense();
                    let h = 1e-6;
                    for j in 0..u.len() {
                        let mut up = u.clone();
                        let mut um = u.clone();
                        up[j] += h;
                        um[j] -= h;
                        let rp = sys.system(&prev, &up, dt, false).unwrap().0;
                        let rm = sys.system(&prev, &um, dt, false).unwrap().0;
                        for i in 0..u.len() {
                            let fd = (rp[i] - rm[i]) / (2.0 * h);
                            assert!((fd - k[(i, j)]).abs() <= 1e-6 * k[(i, j)].abs().max(1e-3), "{d} {mode:?} {scheme:?} ({i},{j})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn converged_step_satisfies_the_scheme() {
        let sys = system(1, DiffusionMode::CahnHilliard, TimeScheme::ImplicitEuler);
        let prev = perturbed(&sys);
        let (next, diag) = sys.step(&prev, 0.02).unwrap();
        let u = sys.pack(&next.y, &next.zeta, &next.mu);
        let r = sys.system(&prev, &u, 0.02, false).unwrap().0;
        assert!(r.iter().all(|x| x.abs() <= 1e-10));
        assert!(diag.newton_iterations >= 1);
        assert!((next.t - 0.02).abs() < 1e-15);
    }
}
