use rayon::prelude::*;

use super::linalg::SparseMatrix;
use super::space::Side;
use super::{Discretization, Fields, Layout};
use crate::error::{Error, Result};
use crate::kinematics::{determinant, GradientVector, Matrix};
use crate::material::{hypergradient_dynamic, hypergradient_static, mobility_flux, Capillarity, MaterialLaw, MaterialParams};

/// Which hypergradient energy enters the functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperForm {
    /// `(h₀/2)|∇³y|²`, used by the evolution problem.
    ThirdGrade,
    /// `(h₀/p)|∇²y|^p`, used by the static minimization.
    SecondGrade,
}

/// Loads frozen at one time instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadState {
    pub body_force: [f64; 2],
    /// Traction per side (Left, Right, Bottom, Top), pressure already folded in.
    pub tractions: [[f64; 2]; 4],
    pub mu_ext: f64,
}

impl Default for LoadState {
    fn default() -> Self {
        LoadState { body_force: [0.0; 2], tractions: [[0.0; 2]; 4], mu_ext: 0.0 }
    }
}

impl LoadState {
    pub fn traction(&self, side: Side) -> [f64; 2] {
        self.tractions[side as usize]
    }
}

/// Everything the element kernels need besides the coefficients.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub disc: &'a Discretization,
    pub law: &'a dyn MaterialLaw,
    pub params: &'a MaterialParams,
    pub hyper: HyperForm,
    pub det_floor: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyParts {
    pub stored: f64,
    pub capillarity: f64,
    pub hyper: f64,
    /// ∫ f·y + ∫_Γ g·y
    pub load_potential: f64,
}

impl EnergyParts {
    /// ℰ = ∫ φ + capillarity + hypergradient.
    pub fn internal(&self) -> f64 {
        self.stored + self.capillarity + self.hyper
    }
    fn add(&mut self, o: &EnergyParts) {
        self.stored += o.stored;
        self.capillarity += o.capillarity;
        self.hyper += o.hyper;
        self.load_potential += o.load_potential;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinDet {
    pub value: f64,
    pub point: Vec<f64>,
}

pub struct Assembly {
    /// Full residual in [`Layout`] order.
    pub residual: Vec<f64>,
    pub jacobian: Option<SparseMatrix>,
    pub energy: EnergyParts,
    pub min_det: MinDet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakResidual {
    pub r_y: Vec<f64>,
    pub r_zeta: Vec<f64>,
    pub r_mu: Vec<f64>,
}

struct PointFields {
    f: Matrix,
    h2: [f64; 8],
    h3: [f64; 16],
    z: f64,
    g: GradientVector,
    mu: f64,
    m: GradientVector,
}

fn point_fields(
    d: usize,
    ny: usize,
    y_dofs: &[usize],
    y_basis: &[super::Jet],
    s_dofs: &[usize],
    s_basis: &[super::Jet],
    fields: &Fields,
) -> PointFields {
    let mut f = Matrix::zeros(d);
    let mut h2 = [0.0; 8];
    let mut h3 = [0.0; 16];
    for a in 0..d {
        for (il, b) in y_basis.iter().enumerate() {
            let c = fields.y[a * ny + y_dofs[il]];
            for j in 0..d {
                f[(a, j)] += c * b.d1[j];
                for k in 0..d {
                    h2[(a * d + j) * d + k] += c * b.d2[j][k];
                    for l in 0..d {
                        h3[((a * d + j) * d + k) * d + l] += c * b.d3[j][k][l];
                    }
                }
            }
        }
    }
    let (mut z, mut mu) = (0.0, 0.0);
    let mut g = GradientVector::zeros(d);
    let mut m = GradientVector::zeros(d);
    for (jl, s) in s_basis.iter().enumerate() {
        let zi = fields.zeta[s_dofs[jl]];
        let mi = fields.mu[s_dofs[jl]];
        z += zi * s.v;
        mu += mi * s.v;
        for j in 0..d {
            g[j] += zi * s.d1[j];
            m[j] += mi * s.d1[j];
        }
    }
    PointFields { f, h2, h3, z, g, mu, m }
}

struct ElementOut {
    res: Vec<f64>,
    jac: Vec<f64>,
    energy: EnergyParts,
    min_det: (f64, [f64; 2]),
}

fn element_kernel(model: &Model, e: usize, fields: &Fields, loads: &LoadState, want_jac: bool) -> Result<ElementOut> {
    let disc = model.disc;
    let d = disc.dim();
    let p = model.params;
    let ny = disc.deformation.n_basis();
    let ely = &disc.deformation.elements()[e];
    let els = &disc.scalar.elements()[e];
    let nly = ely.dofs.len();
    let nls = els.dofs.len();
    let oz = d * nly;
    let om = oz + nls;
    let n = om + nls;
    let mut res = vec![0.0; n];
    let mut jac = if want_jac { vec![0.0; n * n] } else { Vec::new() };
    let mut energy = EnergyParts::default();
    let mut min_det = (f64::INFINITY, [0.0; 2]);
    let cap = Capillarity::new(p.capillarity);
    let h0 = p.hyper_scale;
    let pexp = p.static_exponent;
    let nh2 = d * d * d;
    let nh3 = nh2 * d;

    for (qy, qs) in ely.points.iter().zip(&els.points) {
        let w = qy.weight;
        let pf = point_fields(d, ny, &ely.dofs, &qy.basis, &els.dofs, &qs.basis, fields);
        let det = determinant(&pf.f);
        if det < min_det.0 || det.is_nan() {
            min_det = (det, qy.x);
        }
        if !(det >= model.det_floor) {
            return Err(Error::DeterminantFloorViolated {
                point: qy.x[..d].to_vec(),
                value: det,
                floor: model.det_floor,
            });
        }
        let mat = model.law.stored(&pf.f, pf.z)?;
        let ce = cap.eval(&pf.f, &pf.g)?;
        let mob = model.law.mobility(pf.z, d);
        let mob_dz = model.law.mobility_dz(pf.z, d);
        let flux = mobility_flux(&pf.f, &mob, &mob_dz, &pf.m)?;
        let hyper = match model.hyper {
            HyperForm::ThirdGrade => hypergradient_dynamic(&pf.h3[..nh3], h0),
            HyperForm::SecondGrade => hypergradient_static(&pf.h2[..nh2], h0, pexp),
        };
        let stress = mat.dphi_df + ce.stress;
        let fb = loads.body_force;

        energy.stored += w * mat.value;
        energy.capillarity += w * ce.value;
        energy.hyper += w * hyper.value;
        for a in 0..d {
            let ya: f64 = (0..nly).map(|il| fields.y[a * ny + ely.dofs[il]] * qy.basis[il].v).sum();
            energy.load_potential += w * fb[a] * ya;
        }

        for a in 0..d {
            for (il, b) in qy.basis.iter().enumerate() {
                let mut r = -fb[a] * b.v;
                for j in 0..d {
                    r += stress[(a, j)] * b.d1[j];
                }
                r += hyper_pair(model.hyper, d, a, &hyper.derivative, b);
                res[a * nly + il] += w * r;
            }
        }
        for (jl, s) in qs.basis.iter().enumerate() {
            let (mut rz, mut rm) = (0.0, (mat.dphi_dz - pf.mu) * s.v);
            for j in 0..d {
                rz += flux.flux[j] * s.d1[j];
                rm += ce.flux[j] * s.d1[j];
            }
            res[oz + jl] += w * rz;
            res[om + jl] += w * rm;
        }

        if !want_jac {
            continue;
        }
        let mh = model.law.stored_hessian(&pf.f, pf.z)?;
        let ch = cap.hessian(&pf.f, &pf.g)?;
        let tangent = mh.d_ff + ch.d_ff;
        let hyper_hess = HyperHessian::new(model.hyper, &pf, d, h0, pexp);
        // y rows
        for a in 0..d {
            for (il, bi) in qy.basis.iter().enumerate() {
                let row = (a * nly + il) * n;
                for c in 0..d {
                    for (jl, bj) in qy.basis.iter().enumerate() {
                        let mut v = 0.0;
                        for jj in 0..d {
                            for ll in 0..d {
                                v += tangent[(a, jj, c, ll)] * bi.d1[jj] * bj.d1[ll];
                            }
                        }
                        v += hyper_hess.pair(d, a, c, bi, bj);
                        jac[row + c * nly + jl] += w * v;
                    }
                }
                for (kl, s) in qs.basis.iter().enumerate() {
                    let mut v = 0.0;
                    for jj in 0..d {
                        let mut t = mh.d_fz[(a, jj)] * s.v;
                        for kk in 0..d {
                            t += ch.d_fg[(a, jj, kk)] * s.d1[kk];
                        }
                        v += bi.d1[jj] * t;
                    }
                    jac[row + oz + kl] += w * v;
                }
            }
        }
        // ζ and μ rows
        for (il, si) in qs.basis.iter().enumerate() {
            let rz = (oz + il) * n;
            let rm = (om + il) * n;
            for c in 0..d {
                for (jl, bj) in qy.basis.iter().enumerate() {
                    let (mut vz, mut vm) = (0.0, 0.0);
                    for ll in 0..d {
                        let mut tz = 0.0;
                        let mut tm = si.v * mh.d_fz[(c, ll)];
                        for jj in 0..d {
                            tz += si.d1[jj] * flux.d_f[(jj, c, ll)];
                            tm += si.d1[jj] * ch.d_fg[(c, ll, jj)];
                        }
                        vz += tz * bj.d1[ll];
                        vm += tm * bj.d1[ll];
                    }
                    jac[rz + c * nly + jl] += w * vz;
                    jac[rm + c * nly + jl] += w * vm;
                }
            }
            for (jl, sj) in qs.basis.iter().enumerate() {
                let (mut zz, mut zm, mut mz) = (0.0, 0.0, mh.d_zz * si.v * sj.v);
                for jj in 0..d {
                    zz += si.d1[jj] * flux.d_z[jj] * sj.v;
                    for kk in 0..d {
                        zm += si.d1[jj] * flux.tensor[(jj, kk)] * sj.d1[kk];
                        mz += si.d1[jj] * ch.d_gg[(jj, kk)] * sj.d1[kk];
                    }
                }
                jac[rz + oz + jl] += w * zz;
                jac[rz + om + jl] += w * zm;
                jac[rm + oz + jl] += w * mz;
                jac[rm + om + jl] -= w * si.v * sj.v;
            }
        }
    }

    for (by, bs) in ely.boundary.iter().zip(&els.boundary) {
        let w = by.weight;
        let t = loads.traction(by.side);
        for a in 0..d {
            let ya: f64 = (0..nly).map(|il| fields.y[a * ny + ely.dofs[il]] * by.values[il]).sum();
            energy.load_potential += w * t[a] * ya;
            for il in 0..nly {
                res[a * nly + il] -= w * t[a] * by.values[il];
            }
        }
        if p.permeability != 0.0 {
            let alpha = p.permeability;
            let mu_b: f64 = (0..nls).map(|jl| fields.mu[els.dofs[jl]] * bs.values[jl]).sum();
            for il in 0..nls {
                res[oz + il] += w * alpha * (mu_b - loads.mu_ext) * bs.values[il];
                if want_jac {
                    for jl in 0..nls {
                        jac[(oz + il) * n + om + jl] += w * alpha * bs.values[il] * bs.values[jl];
                    }
                }
            }
        }
    }
    Ok(ElementOut { res, jac, energy, min_det })
}

/// `∂ψ/∂(∇ᵐy)_a ⋮ ∇ᵐ b` for the active hypergradient form.
fn hyper_pair(form: HyperForm, d: usize, a: usize, der: &[f64], b: &super::Jet) -> f64 {
    let mut v = 0.0;
    match form {
        HyperForm::ThirdGrade => {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        v += der[((a * d + j) * d + k) * d + l] * b.d3[j][k][l];
                    }
                }
            }
        }
        HyperForm::SecondGrade => {
            for j in 0..d {
                for k in 0..d {
                    v += der[(a * d + j) * d + k] * b.d2[j][k];
                }
            }
        }
    }
    v
}

struct HyperHessian {
    form: HyperForm,
    h0: f64,
    /// second-grade: scale h₀|H|^{p−2}, rank-one coefficient (p−2)/|H|², H
    scale: f64,
    rank1: f64,
    h2: [f64; 8],
}

impl HyperHessian {
    fn new(form: HyperForm, pf: &PointFields, d: usize, h0: f64, p: f64) -> Self {
        let norm2: f64 = pf.h2[..d * d * d].iter().map(|t| t * t).sum();
        let (scale, rank1) = if form == HyperForm::SecondGrade && norm2 > 0.0 {
            (h0 * norm2.powf(0.5 * (p - 2.0)), (p - 2.0) / norm2)
        } else if form == HyperForm::SecondGrade && p == 2.0 {
            (h0, 0.0)
        } else {
            (0.0, 0.0)
        };
        HyperHessian { form, h0, scale, rank1, h2: pf.h2 }
    }

    fn pair(&self, d: usize, a: usize, c: usize, bi: &super::Jet, bj: &super::Jet) -> f64 {
        match self.form {
            HyperForm::ThirdGrade => {
                if a != c {
                    return 0.0;
                }
                let mut v = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            v += bi.d3[j][k][l] * bj.d3[j][k][l];
                        }
                    }
                }
                self.h0 * v
            }
            HyperForm::SecondGrade => {
                if self.scale == 0.0 {
                    return 0.0;
                }
                let (mut diag, mut hi, mut hj) = (0.0, 0.0, 0.0);
                for j in 0..d {
                    for k in 0..d {
                        if a == c {
                            diag += bi.d2[j][k] * bj.d2[j][k];
                        }
                        hi += self.h2[(a * d + j) * d + k] * bi.d2[j][k];
                        hj += self.h2[(c * d + j) * d + k] * bj.d2[j][k];
                    }
                }
                self.scale * (diag + self.rank1 * hi * hj)
            }
        }
    }
}

fn global_map(disc: &Discretization, e: usize) -> Vec<usize> {
    let lay = disc.layout();
    let ely = &disc.deformation.elements()[e];
    let els = &disc.scalar.elements()[e];
    let mut map = Vec::with_capacity(lay.d * ely.dofs.len() + 2 * els.dofs.len());
    for a in 0..lay.d {
        map.extend(ely.dofs.iter().map(|i| a * lay.ny + i));
    }
    map.extend(els.dofs.iter().map(|i| lay.zeta_offset() + i));
    map.extend(els.dofs.iter().map(|i| lay.mu_offset() + i));
    map
}

fn check_lengths(lay: &Layout, fields: &Fields) -> Result<()> {
    if fields.y.len() != lay.n_y() || fields.zeta.len() != lay.ns || fields.mu.len() != lay.ns {
        return Err(Error::InvalidConfig("field coefficient lengths do not match the spaces".into()));
    }
    Ok(())
}

/// Residual, optional Jacobian, energy and minimum determinant in one
/// element-parallel pass. Per-element results are reduced serially in
/// element order, so the output is bitwise reproducible.
pub fn assemble(model: &Model, fields: &Fields, loads: &LoadState, jacobian: bool) -> Result<Assembly> {
    let disc = model.disc;
    let lay = disc.layout();
    check_lengths(&lay, fields)?;
    let n_el = disc.deformation.elements().len();
    let outs: Vec<Result<ElementOut>> = (0..n_el)
        .into_par_iter()
        .map(|e| element_kernel(model, e, fields, loads, jacobian))
        .collect();
    let mut residual = vec![0.0; lay.total()];
    let mut trips = Vec::new();
    let mut energy = EnergyParts::default();
    let mut md = (f64::INFINITY, [0.0; 2]);
    for (e, out) in outs.into_iter().enumerate() {
        let out = out?;
        let map = global_map(disc, e);
        let n = map.len();
        for (l, g) in map.iter().enumerate() {
            residual[*g] += out.res[l];
        }
        if jacobian {
            for (l, gi) in map.iter().enumerate() {
                for (m, gj) in map.iter().enumerate() {
                    let v = out.jac[l * n + m];
                    if v != 0.0 {
                        trips.push((*gi, *gj, v));
                    }
                }
            }
        }
        energy.add(&out.energy);
        if out.min_det.0 < md.0 {
            md = out.min_det;
        }
    }
    if residual.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation("assembled residual".into()));
    }
    Ok(Assembly {
        residual,
        jacobian: jacobian.then(|| SparseMatrix::from_triplets(lay.total(), lay.total(), &trips)),
        energy,
        min_det: MinDet { value: md.0, point: md.1[..lay.d].to_vec() },
    })
}

pub fn assemble_weak_residual(model: &Model, fields: &Fields, loads: &LoadState) -> Result<WeakResidual> {
    let lay = model.disc.layout();
    let r = assemble(model, fields, loads, false)?.residual;
    Ok(WeakResidual {
        r_y: r[..lay.n_y()].to_vec(),
        r_zeta: r[lay.zeta_offset()..lay.mu_offset()].to_vec(),
        r_mu: r[lay.mu_offset()..].to_vec(),
    })
}

pub fn assemble_energy(model: &Model, fields: &Fields, loads: &LoadState) -> Result<EnergyParts> {
    Ok(assemble(model, fields, loads, false)?.energy)
}

/// Minimum of det ∇y over all quadrature points; never fails.
pub fn min_det(disc: &Discretization, y: &[f64]) -> MinDet {
    let d = disc.dim();
    let ny = disc.deformation.n_basis();
    let mut best = MinDet { value: f64::INFINITY, point: vec![0.0; d] };
    for el in disc.deformation.elements() {
        for qp in &el.points {
            let mut f = Matrix::zeros(d);
            for a in 0..d {
                for (il, b) in qp.basis.iter().enumerate() {
                    for j in 0..d {
                        f[(a, j)] += y[a * ny + el.dofs[il]] * b.d1[j];
                    }
                }
            }
            let det = determinant(&f);
            if det < best.value || det.is_nan() {
                best = MinDet { value: det, point: qp.x[..d].to_vec() };
            }
        }
    }
    best
}

/// Scalar functionals recorded by the time stepper.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Functionals {
    /// ∫ ζ
    pub mass: f64,
    /// ∫ 𝔐∇μ·∇μ + ∫_Γ α μ²
    pub dissipation_rate: f64,
    /// ∫_Γ α μ_ext μ
    pub exchange_rate: f64,
    /// ∫ f·v + ∫_Γ g·v (zero without a velocity)
    pub work_rate: f64,
    /// ∫ |∇ζ|², ∫ |∇μ|²
    pub grad_zeta_sq: f64,
    pub grad_mu_sq: f64,
}

pub fn functionals(model: &Model, fields: &Fields, velocity: Option<&[f64]>, loads: &LoadState) -> Result<Functionals> {
    let disc = model.disc;
    let d = disc.dim();
    let ny = disc.deformation.n_basis();
    let alpha = model.params.permeability;
    let mut out = Functionals::default();
    for (ely, els) in disc.deformation.elements().iter().zip(disc.scalar.elements()) {
        for (qy, qs) in ely.points.iter().zip(&els.points) {
            let pf = point_fields(d, ny, &ely.dofs, &qy.basis, &els.dofs, &qs.basis, fields);
            let w = qy.weight;
            let mob = model.law.mobility(pf.z, d);
            let flux = mobility_flux(&pf.f, &mob, &Matrix::zeros(d), &pf.m)?;
            out.mass += w * pf.z;
            out.dissipation_rate += w * flux.flux.dot(&pf.m);
            out.grad_zeta_sq += w * pf.g.norm_sq();
            out.grad_mu_sq += w * pf.m.norm_sq();
            if let Some(v) = velocity {
                for a in 0..d {
                    let va: f64 = (0..ely.dofs.len()).map(|il| v[a * ny + ely.dofs[il]] * qy.basis[il].v).sum();
                    out.work_rate += w * loads.body_force[a] * va;
                }
            }
        }
        for (by, bs) in ely.boundary.iter().zip(&els.boundary) {
            let w = by.weight;
            let mu_b: f64 = (0..els.dofs.len()).map(|jl| fields.mu[els.dofs[jl]] * bs.values[jl]).sum();
            out.dissipation_rate += w * alpha * mu_b * mu_b;
            out.exchange_rate += w * alpha * loads.mu_ext * mu_b;
            if let Some(v) = velocity {
                let t = loads.traction(by.side);
                for a in 0..d {
                    let va: f64 = (0..ely.dofs.len()).map(|il| v[a * ny + ely.dofs[il]] * by.values[il]).sum();
                    out.work_rate += w * t[a] * va;
                }
            }
        }
    }
    Ok(out)
}

/// Mass and Gram matrices of a discretization.
pub struct Matrices {
    /// ρ-weighted mass on the vector deformation space (block diagonal).
    pub mass: SparseMatrix,
    /// L² Gram matrix of the scalar space.
    pub scalar_mass: SparseMatrix,
    pub l2_gram: SparseMatrix,
    pub h1_gram: SparseMatrix,
}

pub fn assemble_matrices(disc: &Discretization, params: &MaterialParams) -> Matrices {
    let lay = disc.layout();
    let scalar_y = disc.deformation.mass_matrix(params.density);
    let mut trips = Vec::with_capacity(scalar_y.nnz() * lay.d);
    for a in 0..lay.d {
        trips.extend(scalar_y.triplets().map(|(i, j, v)| (a * lay.ny + i, a * lay.ny + j, v)));
    }
    Matrices {
        mass: SparseMatrix::from_triplets(lay.n_y(), lay.n_y(), &trips),
        scalar_mass: disc.scalar.mass_matrix(1.0),
        l2_gram: disc.deformation.mass_matrix(1.0),
        h1_gram: disc.deformation.gram(1.0, 1.0),
    }
}
