//! Finite-difference cross-checks of every analytic derivative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fd::{fd_gradient, fd_jacobian, relative_error, FDSettings};
use super::sampling::random_f;
use crate::discretization::{assemble, Discretization, Fields, HyperForm, LoadState, Model};
use crate::error::Result;
use crate::kinematics::{cofactor, cofactor_derivative, korteweg_stress, GradientVector, Matrix};
use crate::material::{
    capillarity_density, hypergradient_dynamic, hypergradient_static, mobility_flux, Capillarity, MaterialLaw,
    MaterialParams, NeoHookeanSwelling,
};

/// Quantities are nondimensional and O(1); errors are measured against
/// max(|analytic|, |difference|, 1e-3) so vanishing entries do not divide by zero.
const SCALE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub samples: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub rows: Vec<CheckRow>,
    pub passed: bool,
}

struct Tally {
    rows: Vec<CheckRow>,
    tol: f64,
}

impl Tally {
    fn record(&mut self, name: &str, err: f64) {
        let tol = self.tol;
        match self.rows.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                r.samples += 1;
                r.max_rel_err = r.max_rel_err.max(err);
                r.passed = r.max_rel_err < tol;
            }
            None => self.rows.push(CheckRow {
                name: name.into(),
                samples: 1,
                max_rel_err: err,
                tolerance: tol,
                passed: err < tol,
            }),
        }
    }
}

fn flat(m: &Matrix) -> Vec<f64> {
    let d = m.dim();
    (0..d * d).map(|k| m[(k / d, k % d)]).collect()
}

fn unflat(v: &[f64], d: usize) -> Matrix {
    Matrix::from_fn(d, |i, j| v[i * d + j])
}

fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Run the full derivative suite: `samples` random (F, z, ∇ζ) with det F in
/// (0.2, 5), cycling d = 1, 2, 3, plus residual/energy duality on small meshes.
pub fn derivative_suite(params: &MaterialParams, samples: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = NeoHookeanSwelling::new(params.clone());
    let cap = Capillarity::new(params.capillarity);
    let fd = FDSettings::default();
    let mut t = Tally { rows: Vec::new(), tol: 1e-6 };
    for s in 0..samples {
        let d = 1 + s % 3;
        let f = random_f(d, 0.2, 5.0, &mut rng);
        let z = rng.random_range(0.0..1.0);
        let g = GradientVector::new(&random_vec(d, -1.0, 1.0, &mut rng));
        let gm = GradientVector::new(&random_vec(d, -1.0, 1.0, &mut rng));
        let fv = flat(&f);

        let ev = law.stored(&f, z)?;
        let num = fd_gradient(|x| law.stored(&unflat(x, d), z).map(|e| e.value).unwrap_or(f64::NAN), &fv, &fd)?;
        t.record("stored_energy_dF", relative_error(&flat(&ev.dphi_df), &num, SCALE_FLOOR));
        let num = fd_gradient(|x| law.stored(&f, x[0]).map(|e| e.value).unwrap_or(f64::NAN), &[z], &fd)?;
        t.record("stored_energy_dz", relative_error(&[ev.dphi_dz], &num, SCALE_FLOOR));

        let hess = law.stored_hessian(&f, z)?;
        let num = fd_jacobian(|x| Ok(flat(&law.stored(&unflat(x, d), z)?.dphi_df)), &fv, &fd)?;
        let ana: Vec<f64> = (0..d * d)
            .flat_map(|r| (0..d * d).map(move |c| (r, c)))
            .map(|(r, c)| hess.d_ff[(r / d, r % d, c / d, c % d)])
            .collect();
        let num_v: Vec<f64> = (0..d * d).flat_map(|r| (0..d * d).map(move |c| (r, c))).map(|(r, c)| num[(r, c)]).collect();
        t.record("stored_energy_hessian_FF", relative_error(&ana, &num_v, SCALE_FLOOR));
        let num = fd_jacobian(|x| Ok(flat(&law.stored(&f, x[0])?.dphi_df)), &[z], &fd)?;
        t.record("stored_energy_hessian_Fz", relative_error(&flat(&hess.d_fz), num.as_slice(), SCALE_FLOOR));

        let dens = |x: &[f64], gg: &GradientVector| capillarity_density(&unflat(x, d), gg, params.capillarity);
        let num = fd_gradient(|x| dens(x, &g).unwrap_or(f64::NAN), &fv, &fd)?;
        let closed = korteweg_stress(&f, &g, params.capillarity)?;
        t.record("korteweg_stress_closed_form", relative_error(&flat(&closed), &num, SCALE_FLOOR));
        let ce = cap.eval(&f, &g)?;
        t.record("capillarity_stress", relative_error(&flat(&ce.stress), &num, SCALE_FLOOR));
        let num = fd_gradient(|x| dens(&fv, &GradientVector::new(x)).unwrap_or(f64::NAN), g.as_slice(), &fd)?;
        t.record("capillarity_flux", relative_error(ce.flux.as_slice(), &num, SCALE_FLOOR));

        let ch = cap.hessian(&f, &g)?;
        let num = fd_jacobian(|x| Ok(flat(&cap.eval(&unflat(x, d), &g)?.stress)), &fv, &fd)?;
        let ana: Vec<f64> = (0..d * d)
            .flat_map(|r| (0..d * d).map(move |c| (r, c)))
            .map(|(r, c)| ch.d_ff[(r / d, r % d, c / d, c % d)])
            .collect();
        let num_v: Vec<f64> = (0..d * d).flat_map(|r| (0..d * d).map(move |c| (r, c))).map(|(r, c)| num[(r, c)]).collect();
        t.record("capillarity_hessian_FF", relative_error(&ana, &num_v, SCALE_FLOOR));
        let num = fd_jacobian(|x| Ok(flat(&cap.eval(&f, &GradientVector::new(x))?.stress)), g.as_slice(), &fd)?;
        let ana: Vec<f64> = (0..d * d).flat_map(|r| (0..d).map(move |k| (r, k))).map(|(r, k)| ch.d_fg[(r / d, r % d, k)]).collect();
        let num_v: Vec<f64> = (0..d * d).flat_map(|r| (0..d).map(move |k| (r, k))).map(|(r, k)| num[(r, k)]).collect();
        t.record("capillarity_hessian_Fg", relative_error(&ana, &num_v, SCALE_FLOOR));
        let num = fd_jacobian(|x| Ok(cap.eval(&f, &GradientVector::new(x))?.flux.as_slice().to_vec()), g.as_slice(), &fd)?;
        let num_v: Vec<f64> = (0..d * d).map(|k| num[(k / d, k % d)]).collect();
        t.record("capillarity_hessian_gg", relative_error(&flat(&ch.d_gg), &num_v, SCALE_FLOOR));

        let mob = law.mobility(z, d);
        let mob_dz = law.mobility_dz(z, d);
        let mf = mobility_flux(&f, &mob, &mob_dz, &gm)?;
        let num = fd_jacobian(
            |x| Ok(mobility_flux(&unflat(x, d), &mob, &mob_dz, &gm)?.flux.as_slice().to_vec()),
            &fv,
            &fd,
        )?;
        let ana: Vec<f64> = (0..d).flat_map(|i| (0..d * d).map(move |c| (i, c))).map(|(i, c)| mf.d_f[(i, c / d, c % d)]).collect();
        let num_v: Vec<f64> = (0..d).flat_map(|i| (0..d * d).map(move |c| (i, c))).map(|(i, c)| num[(i, c)]).collect();
        t.record("mobility_flux_dF", relative_error(&ana, &num_v, SCALE_FLOOR));
        let num = fd_jacobian(
            |x| Ok(mobility_flux(&f, &law.mobility(x[0], d), &mob_dz, &gm)?.flux.as_slice().to_vec()),
            &[z],
            &fd,
        )?;
        t.record("mobility_flux_dz", relative_error(mf.d_z.as_slice(), num.as_slice(), SCALE_FLOOR));

        let dc = cofactor_derivative(&f);
        let num = fd_jacobian(|x| Ok(flat(&cofactor(&unflat(x, d)))), &fv, &fd)?;
        let ana: Vec<f64> = (0..d * d)
            .flat_map(|r| (0..d * d).map(move |c| (r, c)))
            .map(|(r, c)| dc[(r / d, r % d, c / d, c % d)])
            .collect();
        let num_v: Vec<f64> = (0..d * d).flat_map(|r| (0..d * d).map(move |c| (r, c))).map(|(r, c)| num[(r, c)]).collect();
        t.record("cofactor_derivative", relative_error(&ana, &num_v, SCALE_FLOOR));

        let h2 = random_vec(d * d * d, -1.0, 1.0, &mut rng);
        let hs = hypergradient_static(&h2, params.hyper_scale.max(1e-3), params.static_exponent);
        let num = fd_gradient(|x| hypergradient_static(x, params.hyper_scale.max(1e-3), params.static_exponent).value, &h2, &fd)?;
        t.record("hypergradient_second_grade", relative_error(&hs.derivative, &num, SCALE_FLOOR));
        let h3 = random_vec(d * d * d * d, -1.0, 1.0, &mut rng);
        let hd = hypergradient_dynamic(&h3, params.hyper_scale.max(1e-3));
        let num = fd_gradient(|x| hypergradient_dynamic(x, params.hyper_scale.max(1e-3)).value, &h3, &fd)?;
        t.record("hypergradient_third_grade", relative_error(&hd.derivative, &num, SCALE_FLOOR));
    }
    let duality_samples = (samples / 50).max(2);
    for s in 0..duality_samples {
        let disc = if s % 2 == 0 {
            Discretization::new(&[0.0], &[1.0], &[4], 3, 3, 3)?
        } else {
            Discretization::new(&[0.0, 0.0], &[1.0, 1.0], &[2, 2], 3, 2, 3)?
        };
        for hyper in [HyperForm::ThirdGrade, HyperForm::SecondGrade] {
            let err = duality_error(&disc, params, &law, hyper, &mut rng)?;
            t.record("residual_energy_duality", err);
        }
    }
    let passed = t.rows.iter().all(|r| r.passed);
    Ok(CheckReport { rows: t.rows, passed })
}

/// R_y and the μ-rows at μ = 0 against the FD gradient of ℰ − load potential.
fn duality_error(
    disc: &Discretization,
    params: &MaterialParams,
    law: &dyn MaterialLaw,
    hyper: HyperForm,
    rng: &mut impl Rng,
) -> Result<f64> {
    let model = Model { disc, law, params, hyper, det_floor: f64::NEG_INFINITY };
    let lay = disc.layout();
    let mut y = disc.deformation.identity_coefficients();
    for v in y.iter_mut() {
        *v += rng.random_range(-0.02..0.02);
    }
    let zeta = random_vec(lay.ns, 0.3, 0.7, rng);
    let zero = vec![0.0; lay.ns];
    let loads = LoadState {
        body_force: [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)],
        tractions: [[rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]; 4],
        mu_ext: 0.0,
    };
    let a = assemble(&model, &Fields { y: &y, zeta: &zeta, mu: &zero }, &loads, false)?;
    let mut analytic = a.residual[..lay.n_y()].to_vec();
    analytic.extend_from_slice(&a.residual[lay.mu_offset()..]);
    let mut point = y.clone();
    point.extend(&zeta);
    let energy = |u: &[f64]| {
        let (yy, zz) = u.split_at(lay.n_y());
        assemble(&model, &Fields { y: yy, zeta: zz, mu: &zero }, &loads, false)
            .map(|a| a.energy.internal() - a.energy.load_potential)
            .unwrap_or(f64::NAN)
    };
    let num = fd_gradient(energy, &point, &FDSettings::default())?;
    Ok(relative_error(&analytic, &num, SCALE_FLOOR))
}
