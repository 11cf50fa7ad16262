//! Brute-force 1D reference solvers.
//!
//! Everything below the material closed forms is re-derived here: the basis
//! comes from the Cox–de Boor recursion, the Gauss nodes from Newton on
//! Legendre polynomials, the weak forms are written out for scalar F = y', and
//! all Jacobians and Hessians are finite differences factorized densely.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd::{fd_jacobian, FDSettings};
use crate::discretization::{LoadState, Side};
use crate::dynamics::{DiffusionMode, TimeScheme};
use crate::error::{Error, Result};
use crate::kinematics::Matrix;
use crate::material::{MaterialLaw, MaterialParams};

/// Static problems are capped at this many (y, ζ) coefficients.
pub const MAX_STATIC_UNKNOWNS: usize = 30;
/// One dynamic step is capped at this many unknowns.
pub const MAX_DYNAMIC_UNKNOWNS: usize = 40;

/// Cox–de Boor: r-th derivative of N_{i,k} at x (half-open spans).
fn cox_de_boor(t: &[f64], i: usize, k: usize, x: f64, r: usize) -> f64 {
    if k == 0 {
        return if r == 0 && t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    let left = t[i + k] - t[i];
    let right = t[i + k + 1] - t[i + 1];
    let mut v = 0.0;
    if r == 0 {
        if left > 0.0 {
            v += (x - t[i]) / left * cox_de_boor(t, i, k - 1, x, 0);
        }
        if right > 0.0 {
            v += (t[i + k + 1] - x) / right * cox_de_boor(t, i + 1, k - 1, x, 0);
        }
    } else {
        let kf = k as f64;
        if left > 0.0 {
            v += kf / left * cox_de_boor(t, i, k - 1, x, r - 1);
        }
        if right > 0.0 {
            v -= kf / right * cox_de_boor(t, i + 1, k - 1, x, r - 1);
        }
    }
    v
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn legendre_gauss(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

struct Basis {
    knots: Vec<f64>,
    degree: usize,
    n: usize,
}

impl Basis {
    fn new(a: f64, b: f64, elements: usize, degree: usize) -> Basis {
        let h = (b - a) / elements as f64;
        let mut knots = vec![a; degree + 1];
        knots.extend((1..elements).map(|e| a + e as f64 * h));
        knots.extend(std::iter::repeat(b).take(degree + 1));
        Basis { knots, degree, n: elements + degree }
    }

    fn eval(&self, x: f64, r: usize) -> Vec<f64> {
        (0..self.n).map(|i| cox_de_boor(&self.knots, i, self.degree, x, r)).collect()
    }
}

struct Point {
    x: f64,
    w: f64,
    /// deformation basis: value, 1st, 2nd, 3rd derivatives
    y: [Vec<f64>; 4],
    /// scalar basis: value, 1st derivative
    s: [Vec<f64>; 2],
}

/// 1D discretized model on [a, b] with uniform open knot vectors.
#[derive(Clone)]
pub struct DenseModel {
    pub params: MaterialParams,
    pub law: Arc<dyn MaterialLaw>,
    pub domain: (f64, f64),
    pub elements: usize,
    pub deformation_degree: usize,
    pub scalar_degree: usize,
    /// Gauss points per element; `None` uses max degree + 1.
    pub quad_points: Option<usize>,
    pub loads: LoadState,
    pub det_floor: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Hyper {
    Second,
    Third,
}

struct Reference {
    params: MaterialParams,
    law: Arc<dyn MaterialLaw>,
    loads: LoadState,
    floor: f64,
    ny: usize,
    ns: usize,
    points: Vec<Point>,
}

struct Residual {
    ry: Vec<f64>,
    rz: Vec<f64>,
    rm: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Reference {
    fn new(m: &DenseModel) -> Result<Reference> {
        let (a, b) = m.domain;
        if !(b > a) || m.elements == 0 || m.deformation_degree == 0 || m.scalar_degree == 0 {
            return Err(Error::InvalidConfig("dense reference needs a nondegenerate 1D mesh".into()));
        }
        let by = Basis::new(a, b, m.elements, m.deformation_degree);
        let bs = Basis::new(a, b, m.elements, m.scalar_degree);
        let nq = m.quad_points.unwrap_or(m.deformation_degree.max(m.scalar_degree) + 1);
        let gauss = legendre_gauss(nq);
        let h = (b - a) / m.elements as f64;
        let mut points = Vec::new();
        for e in 0..m.elements {
            let (lo, hi) = (a + e as f64 * h, a + (e + 1) as f64 * h);
            for &(xi, wi) in &gauss {
                let x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi;
                points.push(Point {
                    x,
                    w: 0.5 * (hi - lo) * wi,
                    y: [by.eval(x, 0), by.eval(x, 1), by.eval(x, 2), by.eval(x, 3)],
                    s: [bs.eval(x, 0), bs.eval(x, 1)],
                });
            }
        }
        Ok(Reference {
            params: m.params.clone(),
            law: m.law.clone(),
            loads: m.loads.clone(),
            floor: m.det_floor,
            ny: by.n,
            ns: bs.n,
            points,
        })
    }

    fn stretch(&self, p: &Point, y: &[f64]) -> Result<f64> {
        let f = dot(&p.y[1], y);
        if !(f >= self.floor) {
            return Err(Error::DeterminantFloorViolated { point: vec![p.x], value: f, floor: self.floor });
        }
        Ok(f)
    }

    fn hyper(&self, kind: Hyper, p: &Point, y: &[f64]) -> (f64, f64, usize) {
        let h0 = self.params.hyper_scale;
        match kind {
            Hyper::Third => {
                let y3 = dot(&p.y[3], y);
                (0.5 * h0 * y3 * y3, h0 * y3, 3)
            }
            Hyper::Second => {
                let pe = self.params.static_exponent;
                let y2 = dot(&p.y[2], y);
                (h0 / pe * y2.abs().powf(pe), h0 * y2.abs().powf(pe - 2.0) * y2, 2)
            }
        }
    }

    /// ℰ − ∫ f y − Σ g y at the ends.
    fn energy(&self, kind: Hyper, y: &[f64], z: &[f64]) -> Result<f64> {
        let kappa = self.params.capillarity;
        let f_body = self.loads.body_force[0];
        let mut e = 0.0;
        for p in &self.points {
            let f = self.stretch(p, y)?;
            let zv = dot(&p.s[0], z);
            let g = dot(&p.s[1], z);
            let phi = self.law.stored(&Matrix::diag(&[f]), zv)?.value;
            let (hv, _, _) = self.hyper(kind, p, y);
            e += p.w * (phi + 0.5 * kappa * (g / f).powi(2) + hv - f_body * dot(&p.y[0], y));
        }
        e -= self.loads.traction(Side::Left)[0] * y[0] + self.loads.traction(Side::Right)[0] * y[self.ny - 1];
        Ok(e)
    }

    fn residual(&self, kind: Hyper, y: &[f64], z: &[f64], mu: &[f64]) -> Result<Residual> {
        let kappa = self.params.capillarity;
        let f_body = self.loads.body_force[0];
        let mut ry = vec![0.0; self.ny];
        let mut rz = vec![0.0; self.ns];
        let mut rm = vec![0.0; self.ns];
        for p in &self.points {
            let f = self.stretch(p, y)?;
            let zv = dot(&p.s[0], z);
            let g = dot(&p.s[1], z);
            let m = dot(&p.s[0], mu);
            let dm = dot(&p.s[1], mu);
            let ev = self.law.stored(&Matrix::diag(&[f]), zv)?;
            // Korteweg stress and capillary flux of (κ/2)(g/F)²
            let stress = ev.dphi_df[(0, 0)] - kappa * g * g / (f * f * f);
            let cap_flux = kappa * g / (f * f);
            let mobility = self.law.mobility(zv, 1)[(0, 0)] / f;
            let (_, hd, order) = self.hyper(kind, p, y);
            for i in 0..self.ny {
                ry[i] += p.w * (stress * p.y[1][i] + hd * p.y[order][i] - f_body * p.y[0][i]);
            }
            for i in 0..self.ns {
                rz[i] += p.w * mobility * dm * p.s[1][i];
                rm[i] += p.w * ((ev.dphi_dz - m) * p.s[0][i] + cap_flux * p.s[1][i]);
            }
        }
        ry[0] -= self.loads.traction(Side::Left)[0];
        ry[self.ny - 1] -= self.loads.traction(Side::Right)[0];
        let alpha = self.params.permeability;
        if alpha != 0.0 {
            let last = self.ns - 1;
            rz[0] += alpha * (mu[0] - self.loads.mu_ext);
            rz[last] += alpha * (mu[last] - self.loads.mu_ext);
        }
        Ok(Residual { ry, rz, rm })
    }

    fn gram(&self, deformation: bool) -> DMatrix<f64> {
        let n = if deformation { self.ny } else { self.ns };
        let mut m = DMatrix::zeros(n, n);
        for p in &self.points {
            let b = if deformation { &p.y[0] } else { &p.s[0] };
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += p.w * b[i] * b[j];
                }
            }
        }
        m
    }

    fn weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.ns];
        for p in &self.points {
            for (wi, b) in w.iter_mut().zip(&p.s[0]) {
                *wi += p.w * b;
            }
        }
        w
    }
}

/// Static problem for the dense minimizer; Dirichlet data is the identity.
#[derive(Clone)]
pub struct DenseStaticProblem {
    pub model: DenseModel,
    pub dirichlet: Vec<Side>,
    pub total_diffusant: f64,
}

#[derive(Clone, Debug)]
pub struct DenseStaticSolution {
    pub y: Vec<f64>,
    pub zeta: Vec<f64>,
    pub energy: f64,
    /// least-squares multiplier of the mass constraint
    pub mu_bar: f64,
    pub starts: usize,
    /// energies reached by the starts that converged, in start order
    pub converged_energies: Vec<f64>,
}

/// Multi-start Newton minimization with the mass constraint eliminated through
/// the last concentration coefficient and the Dirichlet coefficients removed.
pub fn dense_static_solve(problem: &DenseStaticProblem, starts: usize, seed: u64) -> Result<DenseStaticSolution> {
    let r = Reference::new(&problem.model)?;
    let (ny, ns) = (r.ny, r.ns);
    if ny + ns > MAX_STATIC_UNKNOWNS {
        return Err(Error::InvalidConfig(format!(
            "dense static reference is capped at {MAX_STATIC_UNKNOWNS} unknowns (got {})",
            ny + ns
        )));
    }
    if starts < 32 {
        return Err(Error::InvalidConfig(format!("multi-start needs at least 32 starts (got {starts})")));
    }
    let (a, b) = problem.model.domain;
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    for side in &problem.dirichlet {
        match side {
            Side::Left => fixed.push((0, a)),
            Side::Right => fixed.push((ny - 1, b)),
            _ => return Err(Error::InvalidConfig(format!("side {side:?} does not exist in 1D"))),
        }
    }
    let free_y: Vec<usize> = (0..ny).filter(|i| fixed.iter().all(|(j, _)| j != i)).collect();
    let w = r.weights();
    let last = ns - 1;
    let total = problem.total_diffusant;
    let basis_y = Basis::new(a, b, problem.model.elements, problem.model.deformation_degree);
    // identity coefficients are the Greville abscissae
    let identity: Vec<f64> = (0..ny).map(|i| greville(&basis_y, i)).collect();
    let expand = |u: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut y = identity.clone();
        for &(i, v) in &fixed {
            y[i] = v;
        }
        for (k, &i) in free_y.iter().enumerate() {
            y[i] = u[k];
        }
        let mut z = u[free_y.len()..].to_vec();
        let partial: f64 = z.iter().zip(&w).map(|(zi, wi)| zi * wi).sum();
        z.push((total - partial) / w[last]);
        (y, z)
    };
    let objective = |u: &[f64]| -> Result<f64> {
        let (y, z) = expand(u);
        if z.iter().any(|v| *v < 0.0) {
            return Err(Error::InfeasibleStart("negative concentration".into()));
        }
        r.energy(Hyper::Second, &y, &z)
    };
    let gradient = |u: &[f64]| -> Result<Vec<f64>> {
        let (y, z) = expand(u);
        let res = r.residual(Hyper::Second, &y, &z, &vec![0.0; ns])?;
        let mut g: Vec<f64> = free_y.iter().map(|&i| res.ry[i]).collect();
        g.extend((0..last).map(|i| res.rm[i] - w[i] / w[last] * res.rm[last]));
        Ok(g)
    };

    let spacing = (b - a) / problem.model.elements as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = total / (b - a);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut energies = Vec::new();
    let mut last_error = None;
    for _ in 0..starts {
        let mut u: Vec<f64> = free_y
            .iter()
            .map(|&i| identity[i] + 0.05 * spacing * rng.random_range(-1.0..1.0))
            .collect();
        u.extend((0..last).map(|_| mean * (1.0 + 0.1 * rng.random_range(-1.0..1.0))));
        match newton_minimize(&objective, &gradient, u) {
            Ok((e, u)) => {
                energies.push(e);
                if best.as_ref().is_none_or(|(eb, _)| e < *eb) {
                    best = Some((e, u));
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    let Some((energy, u)) = best else {
        return Err(last_error.unwrap_or(Error::InfeasibleStart("no start converged".into())));
    };
    let (y, zeta) = expand(&u);
    let res = r.residual(Hyper::Second, &y, &zeta, &vec![0.0; ns])?;
    let mu_bar = dot(&res.rm, &w) / dot(&w, &w);
    Ok(DenseStaticSolution { y, zeta, energy, mu_bar, starts, converged_energies: energies })
}

fn greville(b: &Basis, i: usize) -> f64 {
    b.knots[i + 1..=i + b.degree].iter().sum::<f64>() / b.degree as f64
}

/// Damped Newton on a smooth objective with FD Hessians.
fn newton_minimize(
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    gradient: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    mut u: Vec<f64>,
) -> Result<(f64, Vec<f64>)> {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut e = objective(&u)?;
    let mut g = gradient(&u)?;
    let settings = FDSettings { h: 1e-6, richardson: 0 };
    for _ in 0..200 {
        if sup(&g) <= 1e-12 {
            return Ok((e, u));
        }
        let h = fd_jacobian(|x| gradient(x), &u, &settings)?;
        let h = (&h + h.transpose()) * 0.5;
        let n = u.len();
        let gv = DVector::from_column_slice(&g);
        let mut shift = 0.0;
        let dir = loop {
            let m = &h + DMatrix::identity(n, n) * shift;
            if let Some(ch) = m.cholesky() {
                break ch.solve(&(-&gv));
            }
            shift = if shift == 0.0 { 1e-10 * h.amax().max(1.0) } else { shift * 10.0 };
        };
        let slope = gv.dot(&dir);
        let mut alpha = 1.0;
        loop {
            if alpha < 1e-14 {
                if sup(&g) <= 1e-9 {
                    return Ok((e, u));
                }
                return Err(Error::LineSearchStalled { step: alpha });
            }
            let ut: Vec<f64> = u.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
            if let Ok(et) = objective(&ut) {
                let accept = et <= e + 1e-4 * alpha * slope
                    || ((et - e).abs() <= 1e-14 * e.abs().max(1e-300)
                        && gradient(&ut).map(|gt| sup(&gt) < sup(&g)).unwrap_or(false));
                if accept {
                    u = ut;
                    e = et;
                    break;
                }
            }
            alpha *= 0.5;
        }
        g = gradient(&u)?;
    }
    Err(Error::MaxIterations { iterations: 200, residual: sup(&g) })
}

/// State of the dense dynamic reference.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
}

/// One-step dense solver of the same time-discrete system as the main integrator.
pub struct DenseDynamics {
    reference: Reference,
    mode: DiffusionMode,
    scheme: TimeScheme,
    mass_y: DMatrix<f64>,
    mass_s: DMatrix<f64>,
}

impl DenseDynamics {
    pub fn new(model: &DenseModel, mode: DiffusionMode, scheme: TimeScheme) -> Result<DenseDynamics> {
        let reference = Reference::new(model)?;
        let n = match mode {
            DiffusionMode::Frozen => reference.ny,
            _ => reference.ny + 2 * reference.ns,
        };
        if n > MAX_DYNAMIC_UNKNOWNS {
            return Err(Error::InvalidConfig(format!(
                "dense dynamic reference is capped at {MAX_DYNAMIC_UNKNOWNS} unknowns (got {n})"
            )));
        }
        let mass_y = reference.gram(true) * reference.params.density;
        let mass_s = reference.gram(false);
        Ok(DenseDynamics { reference, mode, scheme, mass_y, mass_s })
    }

    fn theta(&self) -> f64 {
        match self.scheme {
            TimeScheme::ImplicitEuler => 1.0,
            TimeScheme::Midpoint => 0.5,
        }
    }

    fn split(&self, prev: &DenseState, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (ny, ns) = (self.reference.ny, self.reference.ns);
        match self.mode {
            DiffusionMode::Frozen => (u.to_vec(), prev.zeta.clone(), prev.mu.clone()),
            _ => (u[..ny].to_vec(), u[ny..ny + ns].to_vec(), u[ny + ns..].to_vec()),
        }
    }

    fn residual(&self, prev: &DenseState, u: &[f64], dt: f64) -> Result<Vec<f64>> {
        let th = self.theta();
        let (y, z, mu) = self.split(prev, u);
        let ys: Vec<f64> = y.iter().zip(&prev.y).map(|(a, b)| th * a + (1.0 - th) * b).collect();
        let zs: Vec<f64> = z.iter().zip(&prev.zeta).map(|(a, b)| th * a + (1.0 - th) * b).collect();
        let res = self.reference.residual(Hyper::Third, &ys, &zs, &mu)?;
        let inertia = DVector::from_iterator(y.len(), (0..y.len()).map(|i| y[i] - prev.y[i] - dt * prev.v[i]));
        let mi = &self.mass_y * inertia;
        let mut out: Vec<f64> = (0..y.len()).map(|i| mi[i] + th * dt * dt * res.ry[i]).collect();
        let dz = DVector::from_iterator(z.len(), z.iter().zip(&prev.zeta).map(|(a, b)| a - b));
        match self.mode {
            DiffusionMode::Frozen => return Ok(out),
            DiffusionMode::CahnHilliard => {
                let mz = &self.mass_s * dz;
                out.extend((0..z.len()).map(|i| mz[i] + dt * res.rz[i]));
            }
            DiffusionMode::AllenCahn { relaxation } => {
                let mz = &self.mass_s * dz;
                let mm = &self.mass_s * DVector::from_column_slice(&mu);
                out.extend((0..z.len()).map(|i| relaxation * mz[i] + dt * mm[i]));
            }
        }
        out.extend(res.rm);
        Ok(out)
    }

    /// Advance by dt with Newton on FD Jacobians, solved by dense LU.
    pub fn step(&self, prev: &DenseState, dt: f64) -> Result<DenseState> {
        let mut u: Vec<f64> = prev.y.iter().zip(&prev.v).map(|(y, v)| y + dt * v).collect();
        if self.mode != DiffusionMode::Frozen {
            u.extend(&prev.zeta);
            u.extend(&prev.mu);
        }
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut r = self.residual(prev, &u, dt)?;
        let settings = FDSettings { h: 1e-7, richardson: 0 };
        let mut it = 0;
        while sup(&r) > 1e-14 {
            if it >= 60 {
                if sup(&r) <= 1e-12 {
                    break;
                }
                return Err(Error::NewtonDiverged { iterations: it, residual: sup(&r) });
            }
            it += 1;
            let jac = fd_jacobian(|x| self.residual(prev, x, dt), &u, &settings)?;
            let du = jac
                .lu()
                .solve(&DVector::from_iterator(r.len(), r.iter().map(|v| -v)))
                .ok_or_else(|| Error::LinearSolveFailed("dense step Jacobian is singular".into()))?;
            let mut alpha = 1.0;
            let before = sup(&r);
            loop {
                let ut: Vec<f64> = u.iter().zip(du.iter()).map(|(a, b)| a + alpha * b).collect();
                match self.residual(prev, &ut, dt) {
                    Ok(rt) if sup(&rt) < before => {
                        u = ut;
                        r = rt;
                        break;
                    }
                    Err(e @ Error::DeterminantFloorViolated { .. }) if alpha < 1e-10 => return Err(e),
                    _ => {}
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    // no further decrease available: accept only a converged state
                    if before <= 1e-12 {
                        return self.finish(prev, &u, dt);
                    }
                    return Err(Error::NewtonDiverged { iterations: it, residual: before });
                }
            }
        }
        self.finish(prev, &u, dt)
    }

    fn finish(&self, prev: &DenseState, u: &[f64], dt: f64) -> Result<DenseState> {
        let (y, zeta, mu) = self.split(prev, u);
        let v = match self.scheme {
            TimeScheme::ImplicitEuler => (0..y.len()).map(|i| (y[i] - prev.y[i]) / dt).collect(),
            TimeScheme::Midpoint => (0..y.len()).map(|i| 2.0 * (y[i] - prev.y[i]) / dt - prev.v[i]).collect(),
        };
        Ok(DenseState { y, v, zeta, mu })
    }

    /// Internal energy ℰ = ∫φ + capillarity + third-grade term (no load potential).
    pub fn stored_energy(&self, y: &[f64], zeta: &[f64]) -> Result<f64> {
        let reference = &self.reference;
        let mut e = 0.0;
        for p in &reference.points {
            let f = dot(&p.y[1], y);
            let zv = dot(&p.s[0], zeta);
            let g = dot(&p.s[1], zeta);
            let phi = reference.law.stored(&Matrix::diag(&[f]), zv)?.value;
            let (hv, _, _) = reference.hyper(Hyper::Third, p, y);
            e += p.w * (phi + 0.5 * reference.params.capillarity * (g / f).powi(2) + hv);
        }
        Ok(e)
    }

    pub fn unknowns(&self) -> usize {
        match self.mode {
            DiffusionMode::Frozen => self.reference.ny,
            _ => self.reference.ny + 2 * self.reference.ns,
        }
    }
}
