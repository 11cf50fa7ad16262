//! Univariate B-splines on open uniform knot vectors.

/// Open (clamped) uniform knot vector on `[a, b]` with simple interior knots,
/// hence globally C^{k−1}.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    n_elements: usize,
    a: f64,
    b: f64,
}

impl KnotVector {
    pub fn uniform_open(a: f64, b: f64, n_elements: usize, degree: usize) -> Self {
        let mut knots = Vec::with_capacity(n_elements + 2 * degree + 1);
        knots.extend(std::iter::repeat(a).take(degree));
        for e in 0..=n_elements {
            knots.push(a + (b - a) * e as f64 / n_elements as f64);
        }
        *knots.last_mut().unwrap() = b;
        knots.extend(std::iter::repeat(b).take(degree));
        KnotVector { knots, degree, n_elements, a, b }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_basis(&self) -> usize {
        self.n_elements + self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Breakpoints `[x_e, x_{e+1}]` of element e.
    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.knots[e + self.degree], self.knots[e + self.degree + 1])
    }

    /// Element containing x (right-closed on the last element).
    pub fn element_of(&self, x: f64) -> usize {
        let h = (self.b - self.a) / self.n_elements as f64;
        let e = ((x - self.a) / h).floor();
        let mut e = if e < 0.0 { 0 } else { e as usize };
        e = e.min(self.n_elements - 1);
        // correct floating round-off at breakpoints
        while e > 0 && x < self.element_bounds(e).0 {
            e -= 1;
        }
        while e + 1 < self.n_elements && x >= self.element_bounds(e + 1).0 {
            e += 1;
        }
        e
    }

    /// Greville abscissae; interpolating at them reproduces affine functions exactly.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.n_basis())
            .map(|i| {
                if p == 0 {
                    0.5 * (self.knots[i] + self.knots[i + 1])
                } else {
                    self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Values and derivatives up to `n_ders` of the degree + 1 functions that
    /// are nonzero on element `e`, evaluated at x. `out[k][j]` is the k-th
    /// derivative of basis function `e + j`. Derivatives above the degree are zero.
    pub fn basis_derivatives(&self, e: usize, x: f64, n_ders: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let span = e + p;
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let top = n_ders.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=top {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p as isize - k as isize;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[(pk + 1) as usize][idx];
                    d += a[s2][j] * ndu[idx][pk as usize];
                }
                if r <= pk as usize {
                    a[s2][k] = -a[s1][k - 1] / ndu[(pk + 1) as usize][r];
                    d += a[s2][k] * ndu[r][pk as usize];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for k in 1..=top {
            for j in 0..=p {
                ders[k][j] *= fac;
            }
            fac *= (p - k) as f64;
        }
        ders
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_partition_of_unity() {
        let kv = KnotVector::uniform_open(0.0, 2.0, 4, 3);
        assert_eq!(kv.n_basis(), 7);
        for e in 0..4 {
            let (lo, hi) = kv.element_bounds(e);
            for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
                let x = lo + t * (hi - lo);
                let d = kv.basis_derivatives(e, x, 3);
                let s: f64 = d[0].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                for k in 1..=3 {
                    assert!(d[k].iter().sum::<f64>().abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let kv = KnotVector::uniform_open(-1.0, 1.0, 5, 3);
        let h = 1e-6;
        for e in 0..5 {
            let (lo, hi) = kv.element_bounds(e);
            let x = 0.37 * lo + 0.63 * hi;
            let d = kv.basis_derivatives(e, x, 3);
            let dp = kv.basis_derivatives(e, x + h, 3);
            let dm = kv.basis_derivatives(e, x - h, 3);
            for k in 0..3 {
                for j in 0..4 {
                    let fd = (dp[k][j] - dm[k][j]) / (2.0 * h);
                    assert!((fd - d[k + 1][j]).abs() < 1e-5 * d[k + 1][j].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn element_lookup() {
        let kv = KnotVector::uniform_open(0.0, 1.0, 3, 2);
        assert_eq!(kv.element_of(0.0), 0);
        assert_eq!(kv.element_of(1.0 / 3.0), 1);
        assert_eq!(kv.element_of(0.999), 2);
        assert_eq!(kv.element_of(1.0), 2);
        let g = kv.greville();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
