//! Subcommand drivers. Every run ends with `report.json` in the output
//! directory, whether it succeeded or not.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{parse_config, ConcentrationInit, DeformationInit, Diffusion, Mode, ProblemConfig};
use super::export::{
    read_coefficients, snapshot_rows, write_json, write_snapshot, write_table, DiagnosticsRow, DiagnosticsWriter,
};
use crate::discretization::{Discretization, LoadState, Side};
use crate::dynamics::{energy_report, simulate, DiffusionMode, DynamicState, DynamicSystem, TimeScheme};
use crate::error::{Error, Result};
use crate::material::{MaterialLaw, MaterialParams, NeoHookeanSwelling};
use crate::oracle::{
    dense_static_solve, derivative_suite, dispersion_probe, DenseDynamics, DenseModel, DenseState, DenseStaticProblem,
    DispersionOptions,
};
use crate::statics::{chemical_potential_field, check_ciarlet_necas, minimize_energy, Dirichlet, StaticProblem};

pub const OUT_DIR_ENV: &str = "CHEMOMECH_OUT_DIR";

/// Command-line overrides of the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure { class: String, message: String, exit_code: i32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    /// the resolved configuration, every default filled in
    pub config: Option<ProblemConfig>,
    pub outcome: Outcome,
    pub artifacts: Vec<String>,
    pub summary: Value,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match &self.outcome {
            Outcome::Success => 0,
            Outcome::Failure { exit_code, .. } => *exit_code,
        }
    }
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Output {
    fn path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.dir.join(name)
    }
}

fn output_dir(overrides: &Overrides, config: Option<&ProblemConfig>) -> PathBuf {
    if let Some(d) = &overrides.out_dir {
        return d.clone();
    }
    if let Some(d) = std::env::var_os(OUT_DIR_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(d);
    }
    PathBuf::from(config.map(|c| c.output.directory.clone()).unwrap_or_else(|| "chemomech-out".into()))
}

fn failure(e: &Error) -> Outcome {
    Outcome::Failure { class: e.class().to_string(), message: e.to_string(), exit_code: e.exit_code() }
}

/// Parse, run and report. The returned report has already been written.
pub fn execute(mode: Mode, config_path: &Path, overrides: &Overrides) -> RunReport {
    let parsed = parse_config(config_path, mode).map(|mut c| {
        if let Some(s) = overrides.seed {
            c.seed = s;
        }
        c
    });
    let config = parsed.as_ref().ok().cloned();
    let mut out = Output { dir: output_dir(overrides, config.as_ref()), artifacts: Vec::new() };
    let mut summary = Value::Null;
    let result = parsed.and_then(|c| {
        std::fs::create_dir_all(&out.dir).map_err(|e| Error::Io(format!("{}: {e}", out.dir.display())))?;
        std::fs::write(out.path("config.toml"), c.to_toml()?)
            .map_err(|e| Error::Io(format!("{}: {e}", out.dir.display())))?;
        run(&c, &mut out, &mut summary)
    });
    let outcome = match &result {
        Ok(()) => Outcome::Success,
        Err(e) => failure(e),
    };
    let mut report = RunReport { command: mode.name().to_string(), config, outcome, artifacts: Vec::new(), summary };
    let wrote = std::fs::create_dir_all(&out.dir)
        .map_err(|e| Error::Io(format!("{}: {e}", out.dir.display())))
        .and_then(|_| {
            let path = out.path("report.json");
            report.artifacts = out.artifacts.clone();
            write_json(&path, &report)
        });
    if let (Err(e), Outcome::Success) = (wrote, &report.outcome) {
        report.outcome = failure(&e);
    }
    report
}

fn run(c: &ProblemConfig, out: &mut Output, summary: &mut Value) -> Result<()> {
    match c.mode() {
        Mode::Static => run_static(c, out, summary),
        Mode::Dynamic | Mode::AllenCahn => run_dynamic(c, out, summary),
        Mode::Dispersion => run_dispersion(c, out, summary),
        Mode::Check => run_check(c, out, summary),
    }
}

pub fn discretization(c: &ProblemConfig, min_degree: usize) -> Result<Discretization> {
    let m = &c.mesh;
    let scalar = m.scalar_degree.unwrap_or(m.degree);
    let disc = Discretization::new(&c.domain.lower, &c.domain.upper, &m.elements, m.degree, scalar, min_degree)?;
    match m.quadrature {
        Some(nq) if nq != m.degree.max(scalar) + 1 => disc.with_quadrature(nq),
        _ => Ok(disc),
    }
}

fn product_profile(x: &[f64], lower: &[f64], upper: &[f64], mode: usize, f: fn(f64) -> f64) -> f64 {
    x.iter()
        .enumerate()
        .map(|(b, xb)| f(mode as f64 * PI * (xb - lower[b]) / (upper[b] - lower[b])))
        .product()
}

fn read_sized(path: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v = read_coefficients(Path::new(path))?;
    if v.len() != n {
        return Err(Error::Validation(format!("{what} file {path} has {} coefficients, expected {n}", v.len())));
    }
    Ok(v)
}

pub fn initial_fields(c: &ProblemConfig, disc: &Discretization) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = c.dimension;
    let (lo, hi) = (c.domain.lower.clone(), c.domain.upper.clone());
    let sp = &disc.deformation;
    let y = match &c.initial.deformation {
        DeformationInit::Identity => sp.identity_coefficients(),
        DeformationInit::Sinusoidal { amplitude, mode, component } => {
            if *component >= d {
                return Err(Error::Validation(format!("initial.deformation.component must be < {d}")));
            }
            let bump = sp.project(d, |x| {
                let mut v = vec![0.0; d];
                v[*component] = amplitude * product_profile(x, &lo, &hi, *mode, f64::sin);
                v
            })?;
            sp.identity_coefficients().iter().zip(bump).map(|(a, b)| a + b).collect()
        }
        DeformationInit::Stretch { factors } => {
            if factors.len() != d {
                return Err(Error::Validation(format!("initial.deformation.factors needs {d} entries")));
            }
            sp.interpolate_greville(d, |x| x.iter().zip(factors).map(|(a, s)| a * s).collect())
        }
        DeformationInit::File { path } => read_sized(path, d * sp.n_basis(), "deformation")?,
    };
    let ns = disc.scalar.n_basis();
    let zeta = match &c.initial.concentration {
        None => vec![c.material.equilibrium_concentration; ns],
        Some(ConcentrationInit::Uniform { value }) => vec![*value; ns],
        Some(ConcentrationInit::Sinusoidal { mean, amplitude, mode }) => {
            disc.scalar.project(1, |x| vec![mean + amplitude * product_profile(x, &lo, &hi, *mode, f64::cos)])?
        }
        Some(ConcentrationInit::File { path }) => read_sized(path, ns, "concentration")?,
    };
    Ok((y, zeta))
}

fn law(params: &MaterialParams) -> Arc<dyn MaterialLaw> {
    Arc::new(NeoHookeanSwelling::new(params.clone()))
}

fn run_static(c: &ProblemConfig, out: &mut Output, summary: &mut Value) -> Result<()> {
    let disc = discretization(c, 2)?;
    let (y0, z0) = initial_fields(c, &disc)?;
    let w = disc.scalar.basis_integrals();
    let total = c.statics.total_diffusant.unwrap_or_else(|| z0.iter().zip(&w).map(|(a, b)| a * b).sum());
    let dirichlet = (!c.statics.dirichlet.is_empty()).then(|| Dirichlet::identity(c.statics.dirichlet.clone()));
    let problem = StaticProblem {
        disc: disc.clone(),
        params: c.material.clone(),
        law: law(&c.material),
        loads: c.loads.at(0.0),
        dirichlet,
        total_diffusant: total,
    };
    let sol = minimize_energy(&problem, &y0, &z0, &c.tolerances.statics())?;
    let mu = chemical_potential_field(&disc, problem.law.as_ref(), &c.material, &sol.y, &sol.zeta)?;
    let cn = check_ciarlet_necas(&disc, &sol.y, c.statics.ciarlet_samples, c.seed);
    write_snapshot(&out.path("solution.csv"), c.dimension, &snapshot_rows(&disc, &sol.y, &sol.zeta, &mu.coefficients))?;
    #[derive(Serialize)]
    struct Iterate {
        iteration: usize,
        energy: f64,
    }
    let history: Vec<Iterate> =
        sol.energy_history.iter().enumerate().map(|(iteration, &energy)| Iterate { iteration, energy }).collect();
    write_table(&out.path("energy_history.csv"), &history)?;
    *summary = json!({
        "energy": sol.energy,
        "total_diffusant": total,
        "mu_bar": sol.mu_bar,
        "mu_mean": mu.mean,
        "mu_stddev": mu.stddev,
        "min_det": sol.min_det.value,
        "min_det_point": sol.min_det.point,
        "mass_residual": sol.mass_residual,
        "projected_gradient": sol.projected_gradient,
        "iterations": sol.iterations,
        "ciarlet_necas": cn,
    });
    Ok(())
}

fn diffusion_mode(c: &ProblemConfig) -> DiffusionMode {
    match (c.mode(), c.dynamics.diffusion) {
        (Mode::AllenCahn, _) => DiffusionMode::AllenCahn { relaxation: c.allen_cahn.relaxation },
        (_, Diffusion::CahnHilliard) => DiffusionMode::CahnHilliard,
        (_, Diffusion::Frozen) => DiffusionMode::Frozen,
    }
}

pub fn dynamic_system(c: &ProblemConfig) -> Result<DynamicSystem> {
    let time = c.time()?;
    let loads = c.loads.clone();
    DynamicSystem::new(
        discretization(c, 3)?,
        c.material.clone(),
        law(&c.material),
        Arc::new(move |t| loads.at(t)),
        diffusion_mode(c),
        c.tolerances.dynamic(time.scheme),
    )
}

fn run_dynamic(c: &ProblemConfig, out: &mut Output, summary: &mut Value) -> Result<()> {
    let time = c.time()?.clone();
    let sys = dynamic_system(c)?;
    let (y, zeta) = initial_fields(c, &sys.disc)?;
    let v = vec![0.0; y.len()];
    let init = sys.initial_state(y, v, zeta, None)?;
    let d = c.dimension;
    let stride = c.output.snapshot_stride;
    let snapshot = |out: &mut Output, n: usize, s: &DynamicState| -> Result<()> {
        let path = out.path(&format!("snapshot_{n}.csv"));
        write_snapshot(&path, d, &snapshot_rows(&sys.disc, &s.y, &s.zeta, &s.mu))
    };
    let mut diag = DiagnosticsWriter::create(&out.path("diagnostics.csv"))?;
    let s0 = &init.summary;
    diag.write(&DiagnosticsRow {
        t: init.t,
        kinetic: s0.kinetic,
        stored: s0.stored,
        dissipated_step: 0.0,
        work_step: 0.0,
        balance_residual: 0.0,
        mass: s0.mass,
        min_det: s0.min_det.value,
    })?;
    snapshot(out, 0, &init)?;
    let mut last_snapshot = 0;
    let traj = simulate(&sys, init, time.t_end, time.dt, &mut |st, state| {
        diag.write(&DiagnosticsRow {
            t: st.t,
            kinetic: st.kinetic,
            stored: st.stored,
            dissipated_step: st.dissipated,
            work_step: st.work,
            balance_residual: st.balance_residual,
            mass: st.mass,
            min_det: st.min_det,
        })?;
        if st.step % stride == 0 {
            last_snapshot = st.step;
            snapshot(out, st.step, state)?;
        }
        Ok(())
    })?;
    let n = traj.steps.len();
    if last_snapshot != n {
        snapshot(out, n, &traj.final_state)?;
    }
    let report = energy_report(&traj, c.tolerances.energy_tol)?;
    let last = report.rows.last().expect("nonempty trajectory");
    *summary = json!({
        "steps": n,
        "t_final": traj.final_state.t,
        "scheme": time.scheme,
        "diffusion": sys.mode,
        "kinetic": last.kinetic,
        "stored": last.stored,
        "cumulative_dissipated": last.cumulative_dissipated,
        "cumulative_work": last.cumulative_work,
        "max_relative_balance": report.max_relative_balance,
        "flagged_steps": report.flagged_steps,
        "mass_initial": traj.initial.mass,
        "mass_final": last.mass,
        "min_det": traj.steps.iter().map(|s| s.min_det).fold(traj.initial.min_det.value, f64::min),
        "substeps": traj.steps.iter().map(|s| s.substeps).sum::<usize>(),
        "newton_iterations": traj.steps.iter().map(|s| s.newton_iterations).sum::<usize>(),
    });
    Ok(())
}

fn run_dispersion(c: &ProblemConfig, out: &mut Output, summary: &mut Value) -> Result<()> {
    let p = &c.dispersion;
    let length = c.domain.upper[0] - c.domain.lower[0];
    let opts = DispersionOptions {
        elements: p.elements,
        degree: p.degree,
        length,
        amplitude: p.amplitude,
        periods: p.periods,
        steps_per_period: p.steps_per_period,
        tolerance: p.tolerance,
        check_time_step: p.check_time_step,
    };
    let ks: Vec<f64> = p.modes.iter().map(|&m| m as f64 * PI / length).collect();
    let h0 = p.hyper_scale.unwrap_or(c.material.hyper_scale);
    let result = dispersion_probe(h0, &c.material, &ks, &opts)?;
    #[derive(Serialize)]
    struct Row {
        mode: usize,
        wavenumber: f64,
        omega: f64,
        phase_velocity: f64,
        omega_fft: f64,
        omega_linear: f64,
        omega_half_dt: Option<f64>,
    }
    let rows: Vec<Row> = p
        .modes
        .iter()
        .zip(&result.points)
        .map(|(&mode, q)| Row {
            mode,
            wavenumber: q.wavenumber,
            omega: q.omega,
            phase_velocity: q.phase_velocity,
            omega_fft: q.omega_fft,
            omega_linear: q.omega_linear,
            omega_half_dt: q.omega_half_dt,
        })
        .collect();
    write_table(&out.path("dispersion.csv"), &rows)?;
    *summary = json!({
        "hyper_scale": h0,
        "verdict": result.verdict,
        "spread": result.spread,
        "dt_sensitivity": result.dt_sensitivity,
        "phase_velocities": result.points.iter().map(|q| q.phase_velocity).collect::<Vec<_>>(),
    });
    Ok(())
}

/// Fixed 1D problems, small enough for the dense reference solvers.
const CROSS_STATIC_ELEMENTS: usize = 6;
const CROSS_DYNAMIC_ELEMENTS: usize = 8;
const CROSS_DYNAMIC_STEPS: usize = 10;
const CROSS_ENERGY_TOL: f64 = 1e-6;
const CROSS_STATE_TOL: f64 = 1e-8;

fn dense_model(params: &MaterialParams, elements: usize, loads: LoadState) -> DenseModel {
    DenseModel {
        params: params.clone(),
        law: law(params),
        domain: (0.0, 1.0),
        elements,
        deformation_degree: 3,
        scalar_degree: 3,
        quad_points: None,
        loads,
        det_floor: 1e-3,
    }
}

fn cross_static(params: &MaterialParams, seed: u64) -> Result<Value> {
    let loads = LoadState { body_force: [0.3, 0.0], tractions: [[0.0; 2], [0.2, 0.0], [0.0; 2], [0.0; 2]], mu_ext: 0.0 };
    let total = 0.55;
    let disc = Discretization::new(&[0.0], &[1.0], &[CROSS_STATIC_ELEMENTS], 3, 3, 2)?;
    let problem = StaticProblem {
        disc,
        params: params.clone(),
        law: law(params),
        loads: loads.clone(),
        dirichlet: Some(Dirichlet::identity(vec![Side::Left])),
        total_diffusant: total,
    };
    let y0 = problem.disc.deformation.identity_coefficients();
    let z0 = vec![total; problem.disc.scalar.n_basis()];
    let main = minimize_energy(&problem, &y0, &z0, &Default::default())?;
    let dense = dense_static_solve(
        &DenseStaticProblem {
            model: dense_model(params, CROSS_STATIC_ELEMENTS, loads),
            dirichlet: vec![Side::Left],
            total_diffusant: total,
        },
        32,
        seed,
    )?;
    let rel = (main.energy - dense.energy).abs() / dense.energy.abs().max(1e-12);
    Ok(json!({
        "energy_main": main.energy,
        "energy_dense": dense.energy,
        "relative_error": rel,
        "tolerance": CROSS_ENERGY_TOL,
        "passed": rel <= CROSS_ENERGY_TOL,
    }))
}

fn cross_dynamic(params: &MaterialParams, scheme: TimeScheme) -> Result<Value> {
    let loads = LoadState { body_force: [0.1, 0.0], tractions: [[0.0; 2], [0.05, 0.0], [0.0; 2], [0.0; 2]], mu_ext: 0.1 };
    let disc = Discretization::new(&[0.0], &[1.0], &[CROSS_DYNAMIC_ELEMENTS], 3, 3, 3)?;
    let options = crate::dynamics::DynamicOptions { scheme, ..Default::default() };
    let l = loads.clone();
    let sys = DynamicSystem::new(
        disc,
        params.clone(),
        law(params),
        Arc::new(move |_| l.clone()),
        DiffusionMode::CahnHilliard,
        options,
    )?;
    let y = sys.disc.deformation.project(1, |x| vec![x[0] + 0.01 * (PI * x[0]).sin()])?;
    let z = sys.disc.scalar.project(1, |x| vec![0.5 + 0.05 * (2.0 * PI * x[0]).cos()])?;
    let mut state = sys.initial_state(y.clone(), vec![0.0; y.len()], z, None)?;
    let dense = DenseDynamics::new(&dense_model(params, CROSS_DYNAMIC_ELEMENTS, loads), DiffusionMode::CahnHilliard, scheme)?;
    let mut ds = DenseState { y: state.y.clone(), v: state.v.clone(), zeta: state.zeta.clone(), mu: state.mu.clone() };
    for _ in 0..CROSS_DYNAMIC_STEPS {
        state = sys.step(&state, 0.02)?.0;
        ds = dense.step(&ds, 0.02)?;
    }
    let sup = [(&state.y, &ds.y), (&state.v, &ds.v), (&state.zeta, &ds.zeta), (&state.mu, &ds.mu)]
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(json!({
        "scheme": scheme,
        "steps": CROSS_DYNAMIC_STEPS,
        "sup_difference": sup,
        "tolerance": CROSS_STATE_TOL,
        "passed": sup <= CROSS_STATE_TOL,
    }))
}

fn run_check(c: &ProblemConfig, out: &mut Output, summary: &mut Value) -> Result<()> {
    let suite = derivative_suite(&c.material, c.check.samples, c.seed)?;
    let statics = cross_static(&c.material, c.seed)?;
    let dynamics: Vec<Value> = [TimeScheme::ImplicitEuler, TimeScheme::Midpoint]
        .into_iter()
        .map(|s| cross_dynamic(&c.material, s))
        .collect::<Result<_>>()?;
    let mut failed: Vec<String> = suite.rows.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    if statics["passed"] != json!(true) {
        failed.push("dense_static".into());
    }
    for dy in &dynamics {
        if dy["passed"] != json!(true) {
            failed.push(format!("dense_dynamic_{}", dy["scheme"].as_str().unwrap_or("?")));
        }
    }
    *summary = json!({
        "passed": failed.is_empty(),
        "failed": failed,
        "derivative_suite": suite,
        "dense_static": statics,
        "dense_dynamic": dynamics,
    });
    write_json(&out.path("check.json"), summary)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(failed.join(", ")))
    }
}
