//! Goodness-of-fit metrics for energy predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean, Scalar};

fn check_pair<T>(predicted: &[T], truth: &[T]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("metric over empty vectors".into()));
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`; negative when the
/// predictions are worse than the mean of `truth`.
pub fn r_squared<T: Scalar>(predicted: &[T], truth: &[T]) -> Result<T> {
    check_pair(predicted, truth)?;
    if truth.len() < 2 {
        return Err(Error::InvalidInput("R-squared needs at least 2 points".into()));
    }
    let m = mean(truth);
    let ss_tot = truth.iter().map(|&t| (t - m) * (t - m)).sum::<T>();
    if ss_tot == T::zero() {
        return Err(Error::InvalidInput("R-squared undefined for constant truth".into()));
    }
    Ok(T::one() - ss_res(predicted, truth) / ss_tot)
}

pub(crate) fn ss_res<T: Scalar>(predicted: &[T], truth: &[T]) -> T {
    predicted.iter().zip(truth).map(|(&p, &t)| (p - t) * (p - t)).sum()
}

pub fn rmse<T: Scalar>(predicted: &[T], truth: &[T]) -> Result<T> {
    check_pair(predicted, truth)?;
    Ok((ss_res(predicted, truth) / T::of_usize(truth.len())).sqrt())
}

/// `rmse / range`.
pub fn nrmse<T: Scalar>(rmse: T, range: T) -> Result<T> {
    if !(range > T::zero()) {
        return Err(Error::InvalidInput(format!("normalized RMSE needs a positive range, got {range}")));
    }
    Ok(rmse / range)
}

pub fn range<T: Scalar>(xs: &[T]) -> T {
    let lo = xs.iter().copied().fold(T::infinity(), T::min);
    let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if xs.is_empty() {
        T::zero()
    } else {
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    /// Absent when the truth is constant or has fewer than two points.
    pub r_squared: Option<T>,
    pub rmse: T,
    pub range: T,
    /// Absent when the range is zero.
    pub nrmse: Option<T>,
}

impl<T: Scalar> Metrics<T> {
    pub fn compute(predicted: &[T], truth: &[T]) -> Result<Self> {
        let rmse = rmse(predicted, truth)?;
        let range = range(truth);
        Ok(Self {
            r_squared: r_squared(predicted, truth).ok(),
            rmse,
            range,
            nrmse: nrmse(rmse, range).ok(),
        })
    }
}
