//! Gaussian-process regression with a squared-exponential kernel and zero
//! prior mean.

use serde::{Deserialize, Serialize};

use super::matrix::{backward_sub_transposed, cholesky, forward_sub};
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::{variance, Scalar};

/// `k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 lengthscale^2))`,
/// observed with additive Gaussian noise of `noise_variance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams<T> {
    pub lengthscale: T,
    pub signal_variance: T,
    pub noise_variance: T,
}

impl<T: Scalar> GpParams<T> {
    /// Lengthscale 2, signal variance `var(y)`, noise `0.01 var(y)`. A
    /// constant target falls back to unit signal variance.
    pub fn from_targets(y: &[T]) -> Self {
        let v = variance(y);
        let v = if v > T::zero() { v } else { T::one() };
        Self {
            lengthscale: T::of(2.0),
            signal_variance: v,
            noise_variance: T::of(0.01) * v,
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: T, f: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(f, format!("{v} must be positive")))
            }
        };
        pos(self.lengthscale, "lengthscale")?;
        pos(self.signal_variance, "signal_variance")?;
        pos(self.noise_variance, "noise_variance")
    }

    pub fn kernel(&self, a: &[T], b: &[T]) -> T {
        let d2 = a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>();
        let two = T::one() + T::one();
        self.signal_variance * (-d2 / (two * self.lengthscale * self.lengthscale)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel<T> {
    pub params: GpParams<T>,
    x: Matrix<T>,
    /// `(K + noise I)^-1 y`
    alpha: Vec<T>,
    /// Cholesky factor of `K + noise I`, row-major lower triangle.
    chol: Vec<T>,
}

pub fn gp_fit<T: Scalar>(x: &Matrix<T>, y: &[T], params: GpParams<T>) -> Result<GpModel<T>> {
    params.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("GP fit on no data".into()));
    }
    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = params.kernel(x.row(i), x.row(j));
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] = k[i * n + i] + params.noise_variance;
    }
    let chol = cholesky(&k, n).ok_or_else(|| {
        Error::Numerical(format!(
            "kernel matrix is not positive definite with noise variance {}; use a larger noise variance",
            params.noise_variance
        ))
    })?;
    let z = forward_sub(&chol, n, y);
    let alpha = backward_sub_transposed(&chol, n, &z);
    Ok(GpModel {
        params,
        x: x.clone(),
        alpha,
        chol,
    })
}

impl<T: Scalar> GpModel<T> {
    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Posterior mean and variance of the latent function at `q`.
    pub fn predict(&self, q: &[T]) -> Result<(T, T)> {
        if q.len() != self.x.cols() {
            return Err(Error::Dimension {
                expected: self.x.cols(),
                actual: q.len(),
            });
        }
        let n = self.x.rows();
        let ks: Vec<T> = self.x.iter_rows().map(|r| self.params.kernel(r, q)).collect();
        let mean = ks.iter().zip(&self.alpha).map(|(&a, &b)| a * b).sum::<T>();
        let v = forward_sub(&self.chol, n, &ks);
        let var = self.params.signal_variance - v.iter().map(|&a| a * a).sum::<T>();
        Ok((mean, var.max(T::zero())))
    }
}

pub fn gp_predict<T: Scalar>(model: &GpModel<T>, q: &[T]) -> Result<(T, T)> {
    model.predict(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(noise: f64) -> GpParams<f64> {
        GpParams {
            lengthscale: 1.0,
            signal_variance: 2.0,
            noise_variance: noise,
        }
    }

    #[test]
    fn interpolates_without_noise() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.5], [4.0]]).unwrap();
        let y = [1.0, -0.5, 2.0, 0.3];
        let m = gp_fit(&x, &y, params(1e-10)).unwrap();
        for (row, &t) in x.iter_rows().zip(&y) {
            let (mean, var) = m.predict(row).unwrap();
            assert!((mean - t).abs() <= 1e-6);
            assert!(var <= 1e-8);
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = gp_fit(&x, &[5.0, 6.0], params(0.1)).unwrap();
        let (mean, var) = m.predict(&[1e3]).unwrap();
        assert!(mean.abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_pd_system_is_reported() {
        // duplicate inputs with vanishing noise
        let x = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let err = gp_fit(
            &x,
            &[1.0, 2.0],
            GpParams { lengthscale: 1.0, signal_variance: 1.0, noise_variance: 1e-300 },
        )
        .unwrap_err();
        assert!(err.to_string().contains("noise"), "{err}");
    }

    #[test]
    fn default_params_from_targets() {
        let p = GpParams::<f64>::from_targets(&[1.0, 3.0]);
        assert_eq!(p.lengthscale, 2.0);
        assert_eq!(p.signal_variance, 1.0);
        assert!((p.noise_variance - 0.01).abs() < 1e-15);
        assert!(gp_fit(&Matrix::from_rows(&[[0.0]]).unwrap(), &[1.0], GpParams { lengthscale: 0.0, ..p }).is_err());
    }
}
