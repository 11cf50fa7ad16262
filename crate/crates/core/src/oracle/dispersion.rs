//! Phase velocities of small standing waves in a 1D bar with frozen diffusion.
//!
//! For k a multiple of π/L, cos(k x) is a free mode of the classical bar; with
//! the hypergradient term the free modes acquire boundary layers, so the
//! released profile is the linearized discrete mode with the largest overlap
//! with cos(k x). It is released from rest at small amplitude about the
//! stress-free uniform state and integrated nonlinearly with the implicit
//! midpoint rule. The frequency comes from zero crossings of the modal
//! amplitude, confirmed by the peak of its zero-padded spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use nalgebra::DMatrix;

use crate::discretization::{assemble, Discretization, Fields, HyperForm, LoadState, Model};
use crate::dynamics::{constant_loads, DiffusionMode, DynamicOptions, DynamicSystem, TimeScheme};
use crate::error::{Error, Result};
use crate::kinematics::Matrix;
use crate::material::{MaterialLaw, MaterialParams, NeoHookeanSwelling};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionOptions {
    pub elements: usize,
    /// deformation spline degree (≥ 3)
    pub degree: usize,
    pub length: f64,
    pub amplitude: f64,
    /// simulated periods per wavenumber (≥ 5)
    pub periods: usize,
    pub steps_per_period: usize,
    /// relative measurement tolerance of the verdict
    pub tolerance: f64,
    /// repeat each run with Δt/2 and report the frequency change
    pub check_time_step: bool,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        DispersionOptions {
            elements: 32,
            degree: 3,
            length: 1.0,
            amplitude: 1e-4,
            periods: 8,
            steps_per_period: 200,
            tolerance: 0.01,
            check_time_step: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DispersionVerdict {
    /// spread of the phase velocities within the tolerance
    Nondispersive,
    /// strictly increasing with the wavenumber
    Anomalous,
    /// strictly decreasing
    Normal,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub wavenumber: f64,
    pub omega: f64,
    pub phase_velocity: f64,
    pub omega_fft: f64,
    /// eigenfrequency of the linearized discrete problem
    pub omega_linear: f64,
    pub omega_half_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispersionResult {
    pub points: Vec<DispersionPoint>,
    /// (max − min)/mean of the phase velocities
    pub spread: f64,
    /// largest relative change of ω under Δt → Δt/2
    pub dt_sensitivity: Option<f64>,
    pub verdict: DispersionVerdict,
}

/// Uniform stress-free stretch and the tangent modulus there.
fn reference_state(law: &dyn MaterialLaw, z: f64) -> Result<(f64, f64)> {
    let stress = |s: f64| law.stored(&Matrix::diag(&[s]), z).map(|e| e.dphi_df[(0, 0)]);
    let modulus = |s: f64| -> Result<f64> {
        let h = 1e-6 * s;
        Ok((stress(s + h)? - stress(s - h)?) / (2.0 * h))
    };
    let mut s = 1.0;
    for _ in 0..100 {
        let r = stress(s)?;
        if r.abs() < 1e-14 {
            break;
        }
        s -= r / modulus(s)?;
    }
    let e = modulus(s)?;
    if !(e > 0.0) {
        return Err(Error::Validation(format!("uniform state has no positive wave modulus (E = {e})")));
    }
    Ok((s, e))
}

fn zero_crossing_omega(q: &[f64], dt: f64) -> Option<f64> {
    let mut times = Vec::new();
    for (n, w) in q.windows(2).enumerate() {
        if w[0] == 0.0 || w[0].signum() != w[1].signum() {
            let frac = if w[0] == w[1] { 0.0 } else { w[0] / (w[0] - w[1]) };
            times.push((n as f64 + frac) * dt);
        }
    }
    if times.len() < 10 {
        return None;
    }
    let half_period = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    Some(PI / half_period)
}

fn fft_omega(q: &[f64], dt: f64) -> f64 {
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    let n = (8 * q.len()).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = q.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
    let j = (1..mag.len() - 1).max_by(|a, b| mag[*a].total_cmp(&mag[*b])).unwrap_or(1);
    let (a, b, c) = (mag[j - 1], mag[j], mag[j + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    2.0 * PI * (j as f64 + shift) / (n as f64 * dt)
}

struct Probe {
    system: DynamicSystem,
    base: Vec<f64>,
}

impl Probe {
    fn new(params: &MaterialParams, opts: &DispersionOptions, stretch: f64) -> Result<Probe> {
        let disc = Discretization::new(&[0.0], &[opts.length], &[opts.elements], opts.degree, 2, 3)?;
        let options = DynamicOptions { scheme: TimeScheme::Midpoint, newton_tol: 1e-13, ..Default::default() };
        let law: Arc<dyn MaterialLaw> = Arc::new(NeoHookeanSwelling::new(params.clone()));
        let base: Vec<f64> = disc.deformation.identity_coefficients().iter().map(|x| stretch * x).collect();
        let system = DynamicSystem::new(
            disc,
            params.clone(),
            law,
            constant_loads(LoadState::default()),
            DiffusionMode::Frozen,
            options,
        )?;
        Ok(Probe { system, base })
    }

    /// M-normalized linearized mode closest to cos(k x) and its frequency.
    fn mode(&self, k: f64, z: f64) -> Result<(Vec<f64>, f64)> {
        let sys = &self.system;
        let sp = &sys.disc.deformation;
        let n = sp.n_basis();
        let ns = sys.layout().ns;
        let zeta = vec![z; ns];
        let mu = vec![0.0; ns];
        let model = Model {
            disc: &sys.disc,
            law: sys.law.as_ref(),
            params: &sys.params,
            hyper: HyperForm::ThirdGrade,
            det_floor: f64::NEG_INFINITY,
        };
        let asm = assemble(&model, &Fields { y: &self.base, zeta: &zeta, mu: &mu }, &LoadState::default(), true)?;
        let full = asm.jacobian.expect("jacobian requested").to_dense();
        let stiff = full.view((0, 0), (n, n)).into_owned();
        let stiff = (&stiff + stiff.transpose()) * 0.5;
        let mass = sys.matrices().mass.to_dense();
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::LinearSolveFailed("mass matrix is not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::LinearSolveFailed("mass factor is singular".into()))?;
        let c = &linv * &stiff * linv.transpose();
        let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
        let target: Vec<f64> = sp.project(1, |x| vec![(k * x[0]).cos()])?;
        let mt = &mass * DMatrix::from_column_slice(n, 1, &target);
        let mut best = (0usize, 0.0f64);
        for j in 0..n {
            // φ = L^{-T} e_j is M-orthonormal
            let phi = linv.transpose() * eig.eigenvectors.column(j);
            let overlap = phi.dot(&mt.column(0)).abs();
            if overlap > best.1 {
                best = (j, overlap);
            }
        }
        let phi = linv.transpose() * eig.eigenvectors.column(best.0);
        let sign = phi.dot(&mt.column(0)).signum();
        let omega = eig.eigenvalues[best.0].max(0.0).sqrt();
        Ok((phi.iter().map(|v| sign * v).collect(), omega))
    }

    /// Modal amplitude history of one release with the given Δt.
    fn run(&self, shape: &[f64], amplitude: f64, z: f64, dt: f64, steps: usize) -> Result<Vec<f64>> {
        let mass = &self.system.matrices().mass;
        let weights = mass.matvec(shape);
        let n = shape.len();
        // scale so that the displacement peaks at `amplitude`
        let peak = shape.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y: Vec<f64> = self.base.iter().zip(shape).map(|(a, b)| a + amplitude / peak * b).collect();
        let zeta = vec![z; self.system.layout().ns];
        let mut state = self.system.initial_state(y, vec![0.0; n], zeta, None)?;
        let modal = |y: &[f64]| -> f64 { (0..n).map(|i| weights[i] * (y[i] - self.base[i])).sum() };
        let mut q = Vec::with_capacity(steps + 1);
        q.push(modal(&state.y));
        for _ in 0..steps {
            state = self.system.step_with_retry(&state, dt)?.0;
            q.push(modal(&state.y));
        }
        Ok(q)
    }
}

/// Measure ω(k) and the phase velocities for the given hyperscale and
/// wavenumbers (strictly increasing multiples of π/L).
pub fn dispersion_probe(
    h0: f64,
    params: &MaterialParams,
    wavenumbers: &[f64],
    opts: &DispersionOptions,
) -> Result<DispersionResult> {
    if wavenumbers.is_empty() || wavenumbers.windows(2).any(|w| w[1] <= w[0]) || wavenumbers[0] <= 0.0 {
        return Err(Error::InvalidConfig("wavenumbers must be positive and strictly increasing".into()));
    }
    if opts.periods < 5 || opts.steps_per_period < 20 {
        return Err(Error::InvalidConfig("the probe needs >= 5 periods and >= 20 steps per period".into()));
    }
    let base_k = PI / opts.length;
    for &k in wavenumbers {
        let m = k / base_k;
        if (m - m.round()).abs() > 1e-9 * m {
            return Err(Error::InvalidConfig(format!("wavenumber {k} is not a multiple of π/L")));
        }
        let per_wavelength = opts.elements as f64 * (2.0 * PI / k) / opts.length;
        if per_wavelength < 10.0 {
            return Err(Error::ResolutionInsufficient { elements_per_wavelength: per_wavelength });
        }
    }
    let params = MaterialParams { hyper_scale: h0, ..params.clone() };
    params.validate(1)?;
    let z = params.equilibrium_concentration;
    let law = NeoHookeanSwelling::new(params.clone());
    let (stretch, modulus) = reference_state(&law, z)?;
    let probe = Probe::new(&params, opts, stretch)?;
    let mut points = Vec::new();
    for &k in wavenumbers {
        let (shape, omega_linear) = probe.mode(k, z)?;
        // the linearized frequency only fixes Δt; ω itself is measured
        let estimate = if omega_linear > 0.0 { omega_linear } else { k * (modulus / params.density).sqrt() };
        let dt = 2.0 * PI / estimate / opts.steps_per_period as f64;
        let steps = opts.periods * opts.steps_per_period;
        let measure = |dt: f64, steps: usize| -> Result<(f64, f64)> {
            let q = probe.run(&shape, opts.amplitude * opts.length, z, dt, steps)?;
            let omega = zero_crossing_omega(&q, dt)
                .ok_or_else(|| Error::Validation(format!("too few zero crossings at k = {k}")))?;
            Ok((omega, fft_omega(&q, dt)))
        };
        let (omega, omega_fft) = measure(dt, steps)?;
        let omega_half_dt = if opts.check_time_step { Some(measure(0.5 * dt, 2 * steps)?.0) } else { None };
        points.push(DispersionPoint { wavenumber: k, omega, phase_velocity: omega / k, omega_fft, omega_linear, omega_half_dt });
    }
    let c: Vec<f64> = points.iter().map(|p| p.phase_velocity).collect();
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    let spread = (c.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - c.iter().cloned().fold(f64::INFINITY, f64::min)) / mean;
    let verdict = if spread <= opts.tolerance {
        DispersionVerdict::Nondispersive
    } else if c.windows(2).all(|w| w[1] > w[0]) {
        DispersionVerdict::Anomalous
    } else if c.windows(2).all(|w| w[1] < w[0]) {
        DispersionVerdict::Normal
    } else {
        DispersionVerdict::Mixed
    };
    let dt_sensitivity = if opts.check_time_step {
        Some(points.iter().map(|p| (p.omega_half_dt.unwrap() - p.omega).abs() / p.omega).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(DispersionResult { points, spread, dt_sensitivity, verdict })
}
