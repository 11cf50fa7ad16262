//! Central finite differences with optional Richardson extrapolation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FDSettings {
    pub h: f64,
    /// extra extrapolation levels; 0 is the plain central difference
    pub richardson: usize,
}

impl Default for FDSettings {
    fn default() -> Self {
        FDSettings { h: 1e-6, richardson: 0 }
    }
}

impl FDSettings {
    fn check(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!("finite-difference step must be > 0 (got {})", self.h)));
        }
        Ok(())
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation(format!("{what} is not finite in the difference stencil")))
    }
}

/// Central difference of `f` along coordinate `i`, extrapolated.
fn partial(f: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>, x: &[f64], i: usize, s: &FDSettings) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut level = |h: f64| -> Result<Vec<f64>> {
        let (hi, lo) = (x[i] + h, x[i] - h);
        xp[i] = hi;
        let fp = f(&xp)?;
        xp[i] = lo;
        let fm = f(&xp)?;
        xp[i] = x[i];
        // divide by the step actually taken in floating point
        let span = hi - lo;
        fp.iter().zip(&fm).map(|(a, b)| finite((a - b) / span, "functional")).collect()
    };
    // Neville tableau in h²: t[k][j] from t[k][j−1] and t[k−1][j−1]
    let mut prev: Vec<Vec<f64>> = Vec::new();
    let mut h = s.h;
    for _ in 0..=s.richardson {
        let mut row = vec![level(h)?];
        let mut factor = 4.0;
        for (j, above) in prev.iter().enumerate() {
            let next = row[j].iter().zip(above).map(|(a, b)| (factor * a - b) / (factor - 1.0)).collect();
            row.push(next);
            factor *= 4.0;
        }
        prev = row;
        h *= 0.5;
    }
    Ok(prev.pop().expect("at least one level"))
}

/// Central-difference gradient of a scalar functional.
pub fn fd_gradient(mut functional: impl FnMut(&[f64]) -> f64, point: &[f64], settings: &FDSettings) -> Result<Vec<f64>> {
    settings.check()?;
    finite(functional(point), "functional")?;
    let mut f = |x: &[f64]| Ok(vec![functional(x)]);
    (0..point.len()).map(|i| Ok(partial(&mut f, point, i, settings)?[0])).collect()
}

/// Central-difference Jacobian J[(r, c)] = ∂f_r/∂x_c of a fallible vector map.
pub fn fd_jacobian(
    mut map: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    point: &[f64],
    settings: &FDSettings,
) -> Result<DMatrix<f64>> {
    settings.check()?;
    let f0 = map(point)?;
    let mut jac = DMatrix::zeros(f0.len(), point.len());
    for c in 0..point.len() {
        let col = partial(&mut map, point, c, settings)?;
        for (r, v) in col.into_iter().enumerate() {
            jac[(r, c)] = v;
        }
    }
    Ok(jac)
}

/// ‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, floor)
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / sup(a).max(sup(b)).max(floor)
}
