use serde::{Deserialize, Serialize};

use super::bspline::KnotVector;
use super::linalg::SparseMatrix;
use super::quadrature::gauss_on;
use crate::error::{Error, Result};

/// Value and Cartesian derivatives up to third order of one scalar function.
/// Unused directions (d = 1) stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: [f64; 2],
    pub d2: [[f64; 2]; 2],
    pub d3: [[[f64; 2]; 2]; 2],
}

impl Jet {
    fn axpy(&mut self, a: f64, o: &Jet) {
        self.v += a * o.v;
        for i in 0..2 {
            self.d1[i] += a * o.d1[i];
            for j in 0..2 {
                self.d2[i][j] += a * o.d2[i][j];
                for k in 0..2 {
                    self.d3[i][j][k] += a * o.d3[i][j][k];
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn all(d: usize) -> &'static [Side] {
        if d == 1 {
            &[Side::Left, Side::Right]
        } else {
            &[Side::Left, Side::Right, Side::Bottom, Side::Top]
        }
    }
    fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
        }
    }
    fn is_upper(self) -> bool {
        matches!(self, Side::Right | Side::Top)
    }
}

#[derive(Clone, Debug)]
pub struct QuadPoint {
    pub x: [f64; 2],
    pub weight: f64,
    /// one jet per local basis function of the element
    pub basis: Vec<Jet>,
}

#[derive(Clone, Debug)]
pub struct BoundaryPoint {
    pub x: [f64; 2],
    pub weight: f64,
    pub normal: [f64; 2],
    pub side: Side,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Element {
    pub index: [usize; 2],
    /// global scalar indices of the local basis functions
    pub dofs: Vec<usize>,
    pub points: Vec<QuadPoint>,
    pub boundary: Vec<BoundaryPoint>,
}

/// Tensor-product B-spline space on a box. Immutable once built.
#[derive(Clone, Debug)]
pub struct SplineSpace {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    axes: Vec<KnotVector>,
    quad_points: usize,
    elements: Vec<Element>,
}

/// Build a space on the box `[lower, upper]` with `elements[a]` uniform
/// elements along axis a. `quad_points` Gauss points per axis and element;
/// `None` picks k + 1, exact for degree 2k + 1.
pub fn build_space(
    lower: &[f64],
    upper: &[f64],
    elements: &[usize],
    degree: usize,
    quad_points: Option<usize>,
) -> Result<SplineSpace> {
    let d = lower.len();
    if !(1..=2).contains(&d) || upper.len() != d || elements.len() != d {
        return Err(Error::InvalidConfig(format!(
            "domain box must be 1D or 2D with matching bounds and element counts (got {d})"
        )));
    }
    for a in 0..d {
        if !(lower[a].is_finite() && upper[a].is_finite() && upper[a] > lower[a]) {
            return Err(Error::InvalidConfig(format!(
                "degenerate box along axis {a}: [{}, {}]",
                lower[a], upper[a]
            )));
        }
        if elements[a] == 0 {
            return Err(Error::InvalidConfig(format!("axis {a} needs at least one element")));
        }
    }
    if degree == 0 {
        return Err(Error::InvalidConfig("spline degree must be >= 1".into()));
    }
    let nq = quad_points.unwrap_or(degree + 1);
    if nq < degree + 1 {
        return Err(Error::InvalidConfig(format!(
            "{nq} quadrature points cannot integrate degree {} exactly",
            2 * degree
        )));
    }
    let axes: Vec<KnotVector> = (0..d)
        .map(|a| KnotVector::uniform_open(lower[a], upper[a], elements[a], degree))
        .collect();
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    lo[..d].copy_from_slice(lower);
    hi[..d].copy_from_slice(upper);
    let mut space = SplineSpace {
        dim: d,
        lower: lo,
        upper: hi,
        axes,
        quad_points: nq,
        elements: Vec::new(),
    };
    space.elements = space.build_elements();
    Ok(space)
}

impl SplineSpace {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn degree(&self) -> usize {
        self.axes[0].degree()
    }
    pub fn quad_points(&self) -> usize {
        self.quad_points
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }
    pub fn axis(&self, a: usize) -> &KnotVector {
        &self.axes[a]
    }
    pub fn elements_per_axis(&self) -> Vec<usize> {
        self.axes.iter().map(|k| k.n_elements()).collect()
    }
    pub fn n_basis_axis(&self, a: usize) -> usize {
        self.axes[a].n_basis()
    }
    /// Number of scalar basis functions N.
    pub fn n_basis(&self) -> usize {
        self.axes.iter().map(|k| k.n_basis()).product()
    }
    pub fn n_local(&self) -> usize {
        (self.degree() + 1).pow(self.dim as u32)
    }
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    /// Global scalar index of the tensor-product function (i₀, i₁).
    pub fn global_index(&self, multi: [usize; 2]) -> usize {
        if self.dim == 1 {
            multi[0]
        } else {
            multi[0] + self.axes[0].n_basis() * multi[1]
        }
    }

    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            let n0 = self.axes[0].n_basis();
            [i % n0, i / n0]
        }
    }

    /// Greville point of scalar function i.
    pub fn greville_point(&self, i: usize) -> Vec<f64> {
        let m = self.multi_index(i);
        (0..self.dim).map(|a| self.axes[a].greville()[m[a]]).collect()
    }

    /// Scalar functions whose support touches the given side.
    pub fn boundary_dofs(&self, side: Side) -> Vec<usize> {
        let a = side.axis();
        let last = self.axes[a].n_basis() - 1;
        let target = if side.is_upper() { last } else { 0 };
        (0..self.n_basis())
            .filter(|&i| self.multi_index(i)[a] == target)
            .collect()
    }

    fn element_cells(&self) -> Vec<[usize; 2]> {
        let n0 = self.axes[0].n_elements();
        let n1 = if self.dim == 2 { self.axes[1].n_elements() } else { 1 };
        (0..n1).flat_map(|e1| (0..n0).map(move |e0| [e0, e1])).collect()
    }

    fn local_dofs(&self, cell: [usize; 2]) -> Vec<usize> {
        let k = self.degree();
        if self.dim == 1 {
            (0..=k).map(|j| cell[0] + j).collect()
        } else {
            let mut v = Vec::with_capacity((k + 1) * (k + 1));
            for j1 in 0..=k {
                for j0 in 0..=k {
                    v.push(self.global_index([cell[0] + j0, cell[1] + j1]));
                }
            }
            v
        }
    }

    /// Jets of the local functions of `cell` at x (ordered as `local_dofs`).
    fn local_jets(&self, cell: [usize; 2], x: &[f64]) -> Vec<Jet> {
        let k = self.degree();
        let nd = 3;
        let b0 = self.axes[0].basis_derivatives(cell[0], x[0], nd);
        if self.dim == 1 {
            return (0..=k)
                .map(|j| {
                    let mut jet = Jet { v: b0[0][j], ..Jet::default() };
                    jet.d1[0] = b0[1][j];
                    jet.d2[0][0] = b0[2][j];
                    jet.d3[0][0][0] = b0[3][j];
                    jet
                })
                .collect();
        }
        let b1 = self.axes[1].basis_derivatives(cell[1], x[1], nd);
        let mut out = Vec::with_capacity((k + 1) * (k + 1));
        for j1 in 0..=k {
            for j0 in 0..=k {
                // derivative split: c₀ derivatives along axis 0, the rest along axis 1
                let f = |c0: usize, c1: usize| b0[c0][j0] * b1[c1][j1];
                let mut jet = Jet { v: f(0, 0), ..Jet::default() };
                for i in 0..2 {
                    let c0 = (i == 0) as usize;
                    jet.d1[i] = f(c0, 1 - c0);
                    for j in 0..2 {
                        let c0 = (i == 0) as usize + (j == 0) as usize;
                        jet.d2[i][j] = f(c0, 2 - c0);
                        for l in 0..2 {
                            let c0 = (i == 0) as usize + (j == 0) as usize + (l == 0) as usize;
                            jet.d3[i][j][l] = f(c0, 3 - c0);
                        }
                    }
                }
                out.push(jet);
            }
        }
        out
    }

    fn build_elements(&self) -> Vec<Element> {
        let d = self.dim;
        let nq = self.quad_points;
        self.element_cells()
            .into_iter()
            .map(|cell| {
                let rules: Vec<Vec<(f64, f64)>> = (0..d)
                    .map(|a| {
                        let (lo, hi) = self.axes[a].element_bounds(cell[a]);
                        gauss_on(lo, hi, nq)
                    })
                    .collect();
                let mut points = Vec::new();
                if d == 1 {
                    for &(x, w) in &rules[0] {
                        points.push(QuadPoint { x: [x, 0.0], weight: w, basis: self.local_jets(cell, &[x]) });
                    }
                } else {
                    for &(x1, w1) in &rules[1] {
                        for &(x0, w0) in &rules[0] {
                            points.push(QuadPoint {
                                x: [x0, x1],
                                weight: w0 * w1,
                                basis: self.local_jets(cell, &[x0, x1]),
                            });
                        }
                    }
                }
                let mut boundary = Vec::new();
                for &side in Side::all(d) {
                    let a = side.axis();
                    let on_side = if side.is_upper() {
                        cell[a] + 1 == self.axes[a].n_elements()
                    } else {
                        cell[a] == 0
                    };
                    if !on_side {
                        continue;
                    }
                    let coord = if side.is_upper() { self.upper[a] } else { self.lower[a] };
                    let mut normal = [0.0; 2];
                    normal[a] = if side.is_upper() { 1.0 } else { -1.0 };
                    let along: Vec<(f64, f64)> = if d == 1 { vec![(0.0, 1.0)] } else { rules[1 - a].clone() };
                    for (t, w) in along {
                        let mut x = [0.0; 2];
                        x[a] = coord;
                        if d == 2 {
                            x[1 - a] = t;
                        }
                        let values = self.local_jets(cell, &x[..d]).iter().map(|j| j.v).collect();
                        boundary.push(BoundaryPoint { x, weight: w, normal, side, values });
                    }
                }
                Element { index: cell, dofs: self.local_dofs(cell), points, boundary }
            })
            .collect()
    }

    fn locate(&self, x: &[f64]) -> Result<[usize; 2]> {
        if x.len() != self.dim {
            return Err(Error::OutOfDomain { point: x.to_vec() });
        }
        let mut cell = [0usize; 2];
        for a in 0..self.dim {
            let tol = 1e-12 * (self.upper[a] - self.lower[a]);
            if !(x[a] >= self.lower[a] - tol && x[a] <= self.upper[a] + tol) {
                return Err(Error::OutOfDomain { point: x.to_vec() });
            }
            cell[a] = self.axes[a].element_of(x[a].clamp(self.lower[a], self.upper[a]));
        }
        Ok(cell)
    }

    /// Nonzero basis functions at x: (global index, jet).
    pub fn basis_at(&self, x: &[f64]) -> Result<Vec<(usize, Jet)>> {
        let cell = self.locate(x)?;
        let xc: Vec<f64> = (0..self.dim).map(|a| x[a].clamp(self.lower[a], self.upper[a])).collect();
        Ok(self.local_dofs(cell).into_iter().zip(self.local_jets(cell, &xc)).collect())
    }

    /// Scalar mass matrix ∫ bᵢ bⱼ scaled by `weight`.
    pub fn mass_matrix(&self, weight: f64) -> SparseMatrix {
        self.gram(weight, 0.0)
    }

    /// `a ∫ bᵢbⱼ + c ∫ ∇bᵢ·∇bⱼ`
    pub fn gram(&self, a: f64, c: f64) -> SparseMatrix {
        let d = self.dim;
        let mut trips = Vec::new();
        for el in &self.elements {
            let n = el.dofs.len();
            let mut local = vec![0.0; n * n];
            for qp in &el.points {
                for i in 0..n {
                    let bi = &qp.basis[i];
                    for j in 0..n {
                        let bj = &qp.basis[j];
                        let mut v = a * bi.v * bj.v;
                        for s in 0..d {
                            v += c * bi.d1[s] * bj.d1[s];
                        }
                        local[i * n + j] += qp.weight * v;
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    trips.push((el.dofs[i], el.dofs[j], local[i * n + j]));
                }
            }
        }
        SparseMatrix::from_triplets(self.n_basis(), self.n_basis(), &trips)
    }

    /// ∫ bᵢ over the box.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_basis()];
        for el in &self.elements {
            for qp in &el.points {
                for (i, b) in el.dofs.iter().zip(&qp.basis) {
                    w[*i] += qp.weight * b.v;
                }
            }
        }
        w
    }

    /// L² projection of a vector-valued function (component-major output).
    pub fn project(&self, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
        let n = self.n_basis();
        let lu = self.mass_matrix(1.0).lu()?;
        let mut rhs = vec![vec![0.0; n]; components];
        for el in &self.elements {
            for qp in &el.points {
                let val = f(&qp.x[..self.dim]);
                for c in 0..components {
                    for (i, b) in el.dofs.iter().zip(&qp.basis) {
                        rhs[c][*i] += qp.weight * val[c] * b.v;
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(n * components);
        for r in rhs {
            out.extend(lu.solve(&r)?);
        }
        Ok(out)
    }

    /// Greville quasi-interpolant; exact for affine functions.
    pub fn interpolate_greville(&self, components: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let n = self.n_basis();
        let mut out = vec![0.0; n * components];
        for i in 0..n {
            let v = f(&self.greville_point(i));
            for c in 0..components {
                out[c * n + i] = v[c];
            }
        }
        out
    }

    /// Coefficients of the identity map X ↦ X.
    pub fn identity_coefficients(&self) -> Vec<f64> {
        self.interpolate_greville(self.dim, |x| x.to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldRole {
    Deformation,
    Velocity,
    Concentration,
    ChemicalPotential,
}

impl FieldRole {
    pub fn components(self, d: usize) -> usize {
        match self {
            FieldRole::Deformation | FieldRole::Velocity => d,
            FieldRole::Concentration | FieldRole::ChemicalPotential => 1,
        }
    }
}

/// Coefficients of a field, component-major: entry `c·N + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldCoefficients {
    pub role: FieldRole,
    pub components: usize,
    pub values: Vec<f64>,
}

impl FieldCoefficients {
    pub fn new(space: &SplineSpace, role: FieldRole, values: Vec<f64>) -> Result<Self> {
        let components = role.components(space.dim());
        if values.len() != components * space.n_basis() {
            return Err(Error::InvalidConfig(format!(
                "{role:?} field needs {} coefficients, got {}",
                components * space.n_basis(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation(format!("{role:?} coefficients")));
        }
        Ok(FieldCoefficients { role, components, values })
    }
}

/// Value and derivatives of every component at x. Entries above `order` are zero.
pub fn evaluate(space: &SplineSpace, coeffs: &FieldCoefficients, x: &[f64], order: usize) -> Result<Vec<Jet>> {
    if order > 3 {
        return Err(Error::InvalidConfig(format!("derivative order {order} > 3")));
    }
    let n = space.n_basis();
    if coeffs.values.len() != coeffs.components * n {
        return Err(Error::InvalidConfig("coefficient length does not match space".into()));
    }
    let basis = space.basis_at(x)?;
    let mut out = vec![Jet::default(); coeffs.components];
    for (c, jet) in out.iter_mut().enumerate() {
        for (i, b) in &basis {
            jet.axpy(coeffs.values[c * n + i], b);
        }
        if order < 3 {
            jet.d3 = Default::default();
        }
        if order < 2 {
            jet.d2 = Default::default();
        }
        if order < 1 {
            jet.d1 = Default::default();
        }
    }
    Ok(out)
}

/// Point evaluation of a scalar slice of coefficients (length N).
pub fn evaluate_scalar(space: &SplineSpace, coeffs: &[f64], x: &[f64]) -> Result<Jet> {
    let mut jet = Jet::default();
    for (i, b) in space.basis_at(x)? {
        jet.axpy(coeffs[i], &b);
    }
    Ok(jet)
}
