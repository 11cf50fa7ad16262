//! Dimension-generic (d = 1, 2, 3) large-strain tensor calculus.
//!
//! Conventions: `F[(a, J)] = ∂y_a/∂X_J`. For d = 1 the cofactor is the
//! constant 1 so that `F^{-T} = Cof F / det F` holds in every dimension and
//! the solver code above this module never branches on dimension.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Absolute determinant floor below which inversion is refused.
pub const TOL_DET: f64 = 1e-10;

/// A d×d real matrix, d ≤ 3, stored in a fixed 3×3 block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix {
    d: usize,
    m: [[f64; 3]; 3],
}

impl Matrix {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        Matrix { d, m: [[0.0; 3]; 3] }
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        let mut out = Self::zeros(d);
        for i in 0..d {
            out.m[i][i] = s;
        }
        out
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut out = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            out.m[i][i] = e;
        }
        out
    }

    /// Build from row slices; every row must have the same length as the row count.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        let mut out = Self::zeros(d);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), d, "matrix must be square");
            out.m[i][..d].copy_from_slice(r);
        }
        out
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.m[i][j] = f(i, j);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.d, |i, j| self.m[j][i])
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.m[i][i]).sum()
    }

    /// Frobenius inner product `A : B`.
    pub fn ddot(&self, other: &Matrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.m[i][j] * other.m[i][j];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s = s.max(self.m[i][j].abs());
            }
        }
        s
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.d, |i, j| s * self.m[i][j])
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        debug_assert_eq!(self.d, other.d);
        Self::from_fn(self.d, |i, j| {
            (0..self.d).map(|k| self.m[i][k] * other.m[k][j]).sum()
        })
    }

    pub fn apply(&self, v: &GradientVector) -> GradientVector {
        let mut out = GradientVector::zeros(self.d);
        for i in 0..self.d {
            out.c[i] = (0..self.d).map(|j| self.m[i][j] * v.c[j]).sum();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| self.m[i][j].is_finite()))
    }

    /// Symmetric eigenvalues (ascending) of the symmetric part.
    pub fn symmetric_eigenvalues(&self) -> Vec<f64> {
        let d = self.d;
        let a = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (self.m[i][j] + self.m[j][i]));
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| x.total_cmp(y));
        ev
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.m[i][j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.m[i][j]
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(self, rhs: Matrix) -> Matrix {
        Matrix::from_fn(self.d, |i, j| self.m[i][j] + rhs.m[i][j])
    }
}

impl AddAssign for Matrix {
    fn add_assign(&mut self, rhs: Matrix) {
        for i in 0..self.d {
            for j in 0..self.d {
                self.m[i][j] += rhs.m[i][j];
            }
        }
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(self, rhs: Matrix) -> Matrix {
        Matrix::from_fn(self.d, |i, j| self.m[i][j] - rhs.m[i][j])
    }
}

impl Neg for Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Matrix) -> Matrix {
        self.matmul(&rhs)
    }
}

/// Reference-configuration gradient of a scalar field (or any d-vector).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientVector {
    d: usize,
    c: [f64; 3],
}

impl GradientVector {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        GradientVector { d, c: [0.0; 3] }
    }

    pub fn new(components: &[f64]) -> Self {
        let mut g = Self::zeros(components.len());
        g.c[..components.len()].copy_from_slice(components);
        g
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.d]
    }

    pub fn dot(&self, other: &GradientVector) -> f64 {
        (0..self.d).map(|i| self.c[i] * other.c[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            out.c[i] *= s;
        }
        out
    }

    /// Dyadic product `self ⊗ other`.
    pub fn outer(&self, other: &GradientVector) -> Matrix {
        Matrix::from_fn(self.d, |i, j| self.c[i] * other.c[j])
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.c[i]
    }
}

impl IndexMut<usize> for GradientVector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.c[i]
    }
}

/// Dense d×d×d tensor, row-major (`(i*d + j)*d + k`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeTensor {
    d: usize,
    a: [f64; 27],
}

impl ThreeTensor {
    pub fn zeros(d: usize) -> Self {
        ThreeTensor { d, a: [0.0; 27] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.d + j) * self.d + k
    }
}

impl Index<(usize, usize, usize)> for ThreeTensor {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.a[self.idx(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for ThreeTensor {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let n = self.idx(i, j, k);
        &mut self.a[n]
    }
}

/// Dense d⁴ tensor, row-major (`((i*d + j)*d + k)*d + l`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourTensor {
    d: usize,
    a: [f64; 81],
}

impl FourTensor {
    pub fn zeros(d: usize) -> Self {
        FourTensor { d, a: [0.0; 81] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.d + j) * self.d + k) * self.d + l
    }

    /// `(T : H)_ij = Σ_kl T_ijkl H_kl`.
    pub fn contract(&self, h: &Matrix) -> Matrix {
        let d = self.d;
        Matrix::from_fn(d, |i, j| {
            let mut s = 0.0;
            for k in 0..d {
                for l in 0..d {
                    s += self[(i, j, k, l)] * h[(k, l)];
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.d.pow(4);
        self.a[..n].iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.a.iter_mut().for_each(|x| *x *= s);
        out
    }
}

impl Index<(usize, usize, usize, usize)> for FourTensor {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j, k, l): (usize, usize, usize, usize)) -> &f64 {
        &self.a[self.idx(i, j, k, l)]
    }
}

impl IndexMut<(usize, usize, usize, usize)> for FourTensor {
    #[inline]
    fn index_mut(&mut self, (i, j, k, l): (usize, usize, usize, usize)) -> &mut f64 {
        let n = self.idx(i, j, k, l);
        &mut self.a[n]
    }
}

impl Add for FourTensor {
    type Output = FourTensor;
    fn add(mut self, rhs: FourTensor) -> FourTensor {
        self.a.iter_mut().zip(rhs.a.iter()).for_each(|(x, y)| *x += y);
        self
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn determinant(f: &Matrix) -> f64 {
    let m = &f.m;
    match f.d {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            let c = cross(m[1], m[2]);
            m[0][0] * c[0] + m[0][1] * c[1] + m[0][2] * c[2]
        }
    }
}

/// Cofactor matrix: `F · (Cof F)^T = det(F) I`; `Cof F := 1` for d = 1.
pub fn cofactor(f: &Matrix) -> Matrix {
    let m = &f.m;
    match f.d {
        1 => Matrix::identity(1),
        2 => Matrix::from_rows(&[&[m[1][1], -m[1][0]], &[-m[0][1], m[0][0]]]),
        _ => {
            let r0 = cross(m[1], m[2]);
            let r1 = cross(m[2], m[0]);
            let r2 = cross(m[0], m[1]);
            Matrix::from_rows(&[&r0, &r1, &r2])
        }
    }
}

fn guarded_det(f: &Matrix) -> Result<f64> {
    let det = determinant(f);
    if det.is_finite() && det > TOL_DET {
        Ok(det)
    } else {
        Err(Error::SingularDeformation { det })
    }
}

/// `F^{-T} = Cof F / det F`.
pub fn inverse_transpose(f: &Matrix) -> Result<Matrix> {
    let det = guarded_det(f)?;
    Ok(cofactor(f).scale(1.0 / det))
}

pub fn inverse(f: &Matrix) -> Result<Matrix> {
    Ok(inverse_transpose(f)?.transpose())
}

/// Directional derivative of the cofactor along `h`: `d/ds Cof(F + sH)` at s = 0.
pub fn cofactor_directional(f: &Matrix, h: &Matrix) -> Matrix {
    let d = f.d;
    match d {
        1 => Matrix::zeros(1),
        2 => Matrix::from_rows(&[&[h[(1, 1)], -h[(1, 0)]], &[-h[(0, 1)], h[(0, 0)]]]),
        _ => {
            let fm = &f.m;
            let hm = &h.m;
            let row = |a: usize, b: usize| {
                let u = cross(hm[a], fm[b]);
                let v = cross(fm[a], hm[b]);
                [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
            };
            let r0 = row(1, 2);
            let r1 = row(2, 0);
            let r2 = row(0, 1);
            Matrix::from_rows(&[&r0, &r1, &r2])
        }
    }
}

/// Fréchet derivative `Cof′F` with `Cof′F[(i,j,k,l)] = ∂Cof_ij / ∂F_kl`.
///
/// Zero for d = 1 and constant in F for d = 2; the cofactor is polynomial of
/// degree d − 1, so the directional derivative along each unit matrix is exact.
pub fn cofactor_derivative(f: &Matrix) -> FourTensor {
    let d = f.d;
    let mut t = FourTensor::zeros(d);
    for k in 0..d {
        for l in 0..d {
            let mut e = Matrix::zeros(d);
            e[(k, l)] = 1.0;
            let dc = cofactor_directional(f, &e);
            for i in 0..d {
                for j in 0..d {
                    t[(i, j, k, l)] = dc[(i, j)];
                }
            }
        }
    }
    t
}

/// `F^{-T} g`: the spatial gradient expressed through reference quantities.
pub fn pullback_gradient(f: &Matrix, g: &GradientVector) -> Result<GradientVector> {
    let det = guarded_det(f)?;
    Ok(cofactor(f).apply(g).scale(1.0 / det))
}

/// Korteweg stress `∂_F [(κ/2)|F^{-T} g|²]`.
///
/// Evaluated through the cofactor form
/// `σ_K = (κ/J)·[(w ⊗ g) : Cof′F − |w|² Cof F]` with `w = Cof F·g / J`,
/// which is `(κ/2)|Cof F·g|²/J²` differentiated with `∂J/∂F = Cof F`.
pub fn korteweg_stress(f: &Matrix, g: &GradientVector, kappa: f64) -> Result<Matrix> {
    let det = guarded_det(f)?;
    let d = f.d;
    let cof = cofactor(f);
    let w = cof.apply(g).scale(1.0 / det);
    let dcof = cofactor_derivative(f);
    let w2 = w.norm_sq();
    Ok(Matrix::from_fn(d, |k, l| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += w[i] * dcof[(i, j, k, l)] * g[j];
            }
        }
        kappa / det * (s - w2 * cof[(k, l)])
    }))
}

#[cfg(test)]
mod tests {
    use crate::oracle::sampling::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        (*a - *b).max_abs() <= tol
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(determinant(&Matrix::identity(2)), 1.0);
        assert_eq!(determinant(&Matrix::diag(&[2.0, 3.0])), 6.0);
        assert_eq!(determinant(&Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]])), 1.0);
        assert_eq!(determinant(&Matrix::from_rows(&[&[-4.0]])), -4.0);
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(cofactor(&Matrix::identity(3)), Matrix::identity(3));
        assert_eq!(cofactor(&Matrix::diag(&[2.0, 3.0])), Matrix::diag(&[3.0, 2.0]));
        let f = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let c = cofactor(&f);
        assert_eq!(c, Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 2.0]]));
        assert!(close(&(f * c.transpose()), &Matrix::identity(2), 1e-15));
        assert_eq!(cofactor(&Matrix::from_rows(&[&[7.0]])), Matrix::identity(1));
    }

    #[test]
    fn inverse_transpose_examples() {
        assert_eq!(inverse_transpose(&Matrix::identity(2)).unwrap(), Matrix::identity(2));
        let half = inverse_transpose(&Matrix::scaled_identity(2, 2.0)).unwrap();
        assert!(close(&half, &Matrix::scaled_identity(2, 0.5), 1e-16));
        let f = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let x = inverse_transpose(&f).unwrap();
        assert!(close(&(f.transpose() * x), &Matrix::identity(2), 1e-14));
        assert!(close(&x, &Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 2.0]]), 1e-14));
    }

    #[test]
    fn singular_inputs_are_refused() {
        let singular = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        let g = GradientVector::new(&[1.0, 0.0]);
        assert!(matches!(inverse_transpose(&singular), Err(Error::SingularDeformation { .. })));
        assert!(matches!(pullback_gradient(&singular, &g), Err(Error::SingularDeformation { .. })));
        assert!(matches!(korteweg_stress(&singular, &g, 1.0), Err(Error::SingularDeformation { .. })));
        let flipped = Matrix::diag(&[1.0, -1.0]);
        assert!(inverse_transpose(&flipped).is_err());
        let tiny = Matrix::diag(&[1e-6, 1e-5]);
        assert!(inverse_transpose(&tiny).is_err());
        let nan = Matrix::diag(&[f64::NAN, 1.0]);
        assert!(inverse_transpose(&nan).is_err());
    }

    #[test]
    fn cofactor_derivative_examples() {
        let d1 = cofactor_derivative(&Matrix::from_rows(&[&[3.0]]));
        assert_eq!(d1.max_abs(), 0.0);

        let h = Matrix::from_rows(&[&[0.3, -1.2], &[2.5, 0.7]]);
        let f = Matrix::from_rows(&[&[1.1, 0.2], &[-0.4, 0.9]]);
        let got = cofactor_derivative(&f).contract(&h);
        let want = Matrix::from_rows(&[&[0.7, -2.5], &[1.2, 0.3]]);
        assert!(close(&got, &want, 1e-15));

        let at_id = cofactor_derivative(&Matrix::identity(3)).contract(&Matrix::identity(3));
        assert!(close(&at_id, &Matrix::scaled_identity(3, 2.0), 1e-15));
    }

    #[test]
    fn korteweg_examples() {
        let g0 = GradientVector::zeros(2);
        let s = korteweg_stress(&Matrix::diag(&[1.3, 0.8]), &g0, 1.0).unwrap();
        assert_eq!(s.max_abs(), 0.0);

        let g = GradientVector::new(&[0.7, -1.1]);
        let s = korteweg_stress(&Matrix::identity(2), &g, 1.0).unwrap();
        assert!(close(&s, &g.outer(&g).scale(-1.0), 1e-15));

        let c = 1.7;
        let s = korteweg_stress(&Matrix::scaled_identity(2, c), &g, 1.0).unwrap();
        assert!(close(&s, &g.outer(&g).scale(-1.0 / c.powi(3)), 1e-14));

        // d = 1: ∂_F (κ/2) g²/F² = −κ g²/F³
        let s = korteweg_stress(&Matrix::from_rows(&[&[2.0]]), &GradientVector::new(&[3.0]), 0.5).unwrap();
        assert!((s[(0, 0)] + 0.5 * 9.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn pullback_examples() {
        let g = GradientVector::new(&[0.3, 0.4]);
        assert_eq!(pullback_gradient(&Matrix::identity(2), &g).unwrap(), g);
        let p = pullback_gradient(&Matrix::scaled_identity(2, 2.0), &GradientVector::new(&[1.0, 0.0])).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.0]);
        let f = Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 1.0]]);
        let p = pullback_gradient(&f, &GradientVector::new(&[1.0, 1.0])).unwrap();
        // F^T x = g solved by hand: x = (0, 1)
        assert!((p[0] - 0.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adjugate_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d = rng.random_range(1..=3);
            let f = random_f(d, 0.1, 10.0, &mut rng);
            let c = cofactor(&f);
            let err = (f * c.transpose() - Matrix::scaled_identity(d, determinant(&f))).norm();
            assert!(err <= 1e-12 * f.norm() * c.norm(), "err {err}");
        }
    }

    #[test]
    fn cofactor_derivative_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = 1e-6;
        for _ in 0..100 {
            let d = rng.random_range(2..=3);
            let f = random_f(d, 0.2, 5.0, &mut rng);
            let t = cofactor_derivative(&f);
            for k in 0..d {
                for l in 0..d {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(k, l)] += h;
                    fm[(k, l)] -= h;
                    let fd = (cofactor(&fp) - cofactor(&fm)).scale(0.5 / h);
                    for i in 0..d {
                        for j in 0..d {
                            let a = t[(i, j, k, l)];
                            let b = fd[(i, j)];
                            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn korteweg_matches_compact_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let d = rng.random_range(1..=3);
            let f = random_f(d, 0.2, 5.0, &mut rng);
            let g = GradientVector::new(&(0..d).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>());
            let kappa = rng.random_range(0.1..3.0);
            let s = korteweg_stress(&f, &g, kappa).unwrap();
            let w = pullback_gradient(&f, &g).unwrap();
            let fw = inverse(&f).unwrap().apply(&w);
            let compact = w.outer(&fw).scale(-kappa);
            assert!((s - compact).max_abs() <= 1e-12 * compact.max_abs().max(1.0));
        }
    }

    #[test]
    fn capillarity_is_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            for d in [2, 3] {
                let f = random_f(d, 0.2, 5.0, &mut rng);
                let r = random_rotation(d, &mut rng);
                let g = GradientVector::new(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
                let a = pullback_gradient(&f, &g).unwrap().norm_sq().sqrt();
                let b = pullback_gradient(&(r * f), &g).unwrap().norm_sq().sqrt();
                assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }
}
