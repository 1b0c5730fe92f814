//! Multiple linear regression by Householder QR.

use log::warn;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub intercept: T,
    /// One per input column; dropped columns hold zero.
    pub coefficients: Vec<T>,
    /// Columns left out as constant or linearly dependent.
    pub dropped: Vec<usize>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != self.coefficients.len() {
            return Err(Error::Dimension {
                expected: self.coefficients.len(),
                actual: x.len(),
            });
        }
        Ok(self.intercept + x.iter().zip(&self.coefficients).map(|(&a, &b)| a * b).sum::<T>())
    }
}

pub fn ols_fit<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<LinearModel<T>> {
    ols_fit_with(x, y, false)
}

/// Least squares with intercept. Constant columns are always dropped;
/// columns that are linear combinations of earlier ones are dropped with a
/// warning, or rejected when `strict`.
pub fn ols_fit_with<T: Scalar>(x: &Matrix<T>, y: &[T], strict: bool) -> Result<LinearModel<T>> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("OLS on an empty design".into()));
    }
    let mut dropped = Vec::new();
    let mut candidates = Vec::new();
    for j in 0..x.cols() {
        let first = x.get(0, j);
        if (1..n).all(|i| x.get(i, j) == first) {
            dropped.push(j);
        } else {
            candidates.push(j);
        }
    }
    if n < candidates.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "{n} rows cannot determine {} coefficients plus intercept",
            candidates.len()
        )));
    }

    // design columns: intercept, then candidates
    let column = |c: usize| -> Vec<T> {
        if c == 0 {
            vec![T::one(); n]
        } else {
            x.column(candidates[c - 1])
        }
    };
    let tol = T::epsilon().sqrt();
    let mut reflectors: Vec<Vec<T>> = Vec::new();
    let mut r_cols: Vec<Vec<T>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..=candidates.len() {
        let mut v = column(c);
        let norm0 = v.iter().map(|&a| a * a).sum::<T>().sqrt();
        for (k, h) in reflectors.iter().enumerate() {
            apply_reflector(h, k, &mut v);
        }
        let rank = reflectors.len();
        let tail = v[rank..].iter().map(|&a| a * a).sum::<T>().sqrt();
        if tail <= tol * norm0 {
            let col = candidates[c - 1];
            if strict {
                return Err(Error::Numerical(format!("column {col} is linearly dependent on earlier columns")));
            }
            warn!("dropping linearly dependent column {col}");
            dropped.push(col);
            continue;
        }
        let alpha = if v[rank] > T::zero() { -tail } else { tail };
        let mut h = v[rank..].to_vec();
        h[0] = h[0] - alpha;
        let hn = h.iter().map(|&a| a * a).sum::<T>().sqrt();
        h.iter_mut().for_each(|a| *a = *a / hn);
        let mut r = v[..rank].to_vec();
        r.push(alpha);
        r_cols.push(r);
        reflectors.push(h);
        kept.push(c);
    }

    let mut qty = y.to_vec();
    for (k, h) in reflectors.iter().enumerate() {
        apply_reflector(h, k, &mut qty);
    }
    let m = kept.len();
    let mut beta = vec![T::zero(); m];
    for i in (0..m).rev() {
        let mut s = qty[i];
        for j in i + 1..m {
            s = s - r_cols[j][i] * beta[j];
        }
        beta[i] = s / r_cols[i][i];
    }

    let mut coefficients = vec![T::zero(); x.cols()];
    let mut intercept = T::zero();
    for (&c, &b) in kept.iter().zip(&beta) {
        if c == 0 {
            intercept = b;
        } else {
            coefficients[candidates[c - 1]] = b;
        }
    }
    if coefficients.iter().any(|c| !c.is_finite()) || !intercept.is_finite() {
        return Err(Error::Numerical("non-finite OLS coefficient".into()));
    }
    dropped.sort_unstable();
    Ok(LinearModel {
        intercept,
        coefficients,
        dropped,
    })
}

/// `v[offset..] -= 2 h (h . v[offset..])` for a unit reflector `h`.
fn apply_reflector<T: Scalar>(h: &[T], offset: usize, v: &mut [T]) {
    let dot = h.iter().zip(&v[offset..]).map(|(&a, &b)| a * b).sum::<T>();
    let two = T::one() + T::one();
    for (vi, &hi) in v[offset..].iter_mut().zip(h) {
        *vi = *vi - two * hi * dot;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = ols_fit(&x, &[1.0, 3.0]).unwrap();
        assert!((m.intercept - 1.0f64).abs() < 1e-12);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((m.predict(&[2.0]).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 5.0], [2.0, 2.0], [4.0, 0.0]]).unwrap();
        let m = ols_fit(&x, &[7.0; 4]).unwrap();
        assert!((m.intercept - 7.0f64).abs() < 1e-12);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn drops_constant_and_duplicate_columns() {
        let x = Matrix::from_rows(&[
            [1.0, 3.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 1.0],
            [1.0, 3.0, 2.0, 2.0],
            [1.0, 3.0, 3.0, 3.0],
        ])
        .unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let m = ols_fit(&x, &y).unwrap();
        assert_eq!(m.dropped, vec![0, 1, 3]);
        assert!((m.coefficients[2] - 2.0f64).abs() < 1e-10);
        assert!(ols_fit_with(&x, &y, true).is_err());
    }

    #[test]
    fn too_few_rows() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(ols_fit(&x, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn works_in_f32() {
        let x = Matrix::from_rows(&[[0.0f32], [1.0], [2.0]]).unwrap();
        let m = ols_fit(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-5);
    }
}
