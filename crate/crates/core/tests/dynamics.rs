use std::sync::Arc;

use chemomech::discretization::{Discretization, LoadState};
use chemomech::dynamics::{
    constant_loads, energy_report, simulate, DiffusionMode, DynamicOptions, DynamicState, DynamicSystem, StepDiagnostics,
};
use chemomech::material::{MaterialParams, NeoHookeanSwelling};
use chemomech::Error;

fn system(params: MaterialParams, elements: usize, loads: LoadState, mode: DiffusionMode, options: DynamicOptions) -> DynamicSystem {
    let disc = Discretization::new(&[0.0], &[1.0], &[elements], 3, 3, 3).unwrap();
    DynamicSystem::new(disc, params.clone(), Arc::new(NeoHookeanSwelling::new(params)), constant_loads(loads), mode, options)
        .unwrap()
}

fn perturbed_state(sys: &DynamicSystem, amp: f64) -> DynamicState {
    let y = sys.disc.deformation.project(1, |x| vec![x[0] + amp * (std::f64::consts::PI * x[0]).sin()]).unwrap();
    let z = sys.disc.scalar.project(1, |x| vec![0.5 + 0.1 * (2.0 * std::f64::consts::PI * x[0]).cos()]).unwrap();
    let v = vec![0.0; y.len()];
    sys.initial_state(y, v, z, None).unwrap()
}

fn run(sys: &DynamicSystem, init: DynamicState, t: f64, dt: f64) -> Result<Vec<StepDiagnostics>, Error> {
    let mut rows = Vec::new();
    let traj = simulate(sys, init, t, dt, &mut |d, _| {
        rows.push(d.clone());
        Ok(())
    })?;
    assert_eq!(traj.steps.len(), rows.len());
    Ok(rows)
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let params = MaterialParams { permeability: 0.5, ..Default::default() };
    let sys = system(params, 6, LoadState::default(), DiffusionMode::CahnHilliard, DynamicOptions::default());
    let y = sys.disc.deformation.identity_coefficients();
    let init = sys.initial_state(y.clone(), vec![0.0; y.len()], vec![0.5; sys.layout().ns], None).unwrap();
    let traj = simulate(&sys, init.clone(), 1.0, 0.1, &mut |_, _| Ok(())).unwrap();
    let fin = &traj.final_state;
    let dev = fin.y.iter().zip(&init.y).chain(fin.zeta.iter().zip(&init.zeta)).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(dev <= 1e-10);
    for s in &traj.steps {
        assert!(s.balance_residual.abs() <= 1e-12 && s.dissipated.abs() <= 1e-12 && s.mass_change.abs() <= 1e-12);
    }
    let rep = energy_report(&traj, 1e-8).unwrap();
    assert!(rep.flagged_steps.is_empty());
}

#[test]
fn robin_uptake_increases_mass_with_balanced_energy() {
    let params = MaterialParams { permeability: 1.0, ..Default::default() };
    let loads = LoadState { mu_ext: 0.2, ..Default::default() };
    let sys = system(params, 8, loads, DiffusionMode::CahnHilliard, DynamicOptions::default());
    let y = sys.disc.deformation.identity_coefficients();
    let init = sys.initial_state(y.clone(), vec![0.0; y.len()], vec![0.5; sys.layout().ns], None).unwrap();
    let rows = run(&sys, init, 0.5, 0.01).unwrap();
    for r in &rows {
        assert!(r.mass_change > 0.0, "step {} mass change {}", r.step, r.mass_change);
        let scale = (r.kinetic + r.stored).abs().max(1e-6);
        assert!(r.balance_residual <= 1e-8 * scale, "step {}: {}", r.step, r.balance_residual);
    }
}

#[test]
fn compression_hits_a_high_floor_with_a_structured_error() {
    let params = MaterialParams::default();
    // press both ends inward
    let loads = LoadState { tractions: [[2.0, 0.0], [-2.0, 0.0], [0.0; 2], [0.0; 2]], ..Default::default() };
    let strict = DynamicOptions { det_floor: 0.9, ..Default::default() };
    let sys = system(params.clone(), 8, loads.clone(), DiffusionMode::CahnHilliard, strict);
    let y = sys.disc.deformation.identity_coefficients();
    let init = sys.initial_state(y.clone(), vec![0.0; y.len()], vec![0.5; sys.layout().ns], None).unwrap();
    let err = run(&sys, init, 2.0, 0.05).unwrap_err();
    assert_eq!(err.root().class(), "DeterminantFloorViolated", "{err:?}");
    let sys = system(params, 8, loads, DiffusionMode::CahnHilliard, DynamicOptions::default());
    let init = sys.initial_state(y.clone(), vec![0.0; y.len()], vec![0.5; sys.layout().ns], None).unwrap();
    let rows = run(&sys, init, 2.0, 0.05).unwrap();
    assert!(rows.iter().all(|r| r.min_det >= 1e-3 && r.min_det.is_finite()));
    assert!(rows.iter().map(|r| r.min_det).fold(f64::INFINITY, f64::min) < 0.9);
}

#[test]
fn perturbed_run_dissipates() {
    let sys = system(MaterialParams::default(), 8, LoadState::default(), DiffusionMode::CahnHilliard, DynamicOptions::default());
    let init = perturbed_state(&sys, 0.02);
    let rows = run(&sys, init, 0.5, 0.01).unwrap();
    let total: f64 = rows.iter().map(|r| r.dissipated).sum();
    assert!(total > 0.0);
    for r in &rows {
        let scale = (r.kinetic + r.stored).abs().max(1e-6);
        assert!(r.balance_residual <= 1e-8 * scale);
        assert!(r.mass_change.abs() <= 1e-13);
    }
}

#[test]
fn allen_cahn_does_not_conserve_mass_and_descends() {
    let sys = system(
        MaterialParams::default(),
        6,
        LoadState::default(),
        DiffusionMode::AllenCahn { relaxation: 1.0 },
        DynamicOptions::default(),
    );
    let y = sys.disc.deformation.identity_coefficients();
    let init = sys.initial_state(y.clone(), vec![0.0; y.len()], vec![0.6; sys.layout().ns], None).unwrap();
    let rows = run(&sys, init, 0.2, 0.01).unwrap();
    assert!(rows.iter().all(|r| r.mass_change < -1e-6));
    for r in &rows {
        assert!(r.work == 0.0);
        assert!(r.balance_residual <= 1e-8 * (r.kinetic + r.stored).abs().max(1e-6));
    }
}
