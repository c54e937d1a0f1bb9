//! Competing interval constructions on a single ASGD path over the full
//! stream: the random scaling method (self-normalization by a running
//! functional of partial sums) and the oracle interval built from the true
//! limiting covariance.

use crate::parallel::ConfidenceInterval;
use crate::stats;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("non-finite projection fed to the random scaling tracker at step {step}")]
    NonFiniteInput { step: u64 },
    #[error("random scaling tracker is empty")]
    EmptyTracker,
    #[error("covariance matrix is not symmetric within 1e-12")]
    AsymmetricCovariance,
    #[error("covariance dimension {got} does not match expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("confidence level parameter alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// O(1)-per-step state for the projected random scaling variance of one
/// functional along one SGD path.
///
/// Fed with `y_i = v . x_i` for the post-update iterates in order, it
/// maintains `n`, `S_n = sum y_i`, `A_n = sum_s S_s^2` and `b_n = sum_s s S_s`,
/// from which the projected variance follows in closed form without the d x d
/// per-step update the full matrix version needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RandomScalingTracker {
    n: u64,
    sum: f64,
    sum_sq_partials: f64,
    weighted_partials: f64,
}

impl RandomScalingTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn update(&mut self, y: f64) -> Result<(), BaselineError> {
        if !y.is_finite() {
            return Err(BaselineError::NonFiniteInput { step: self.n + 1 });
        }
        self.n += 1;
        self.sum += y;
        self.sum_sq_partials += self.sum * self.sum;
        self.weighted_partials += self.n as f64 * self.sum;
        Ok(())
    }

    /// The projected random scaling variance
    /// `(1/n) sum_s [ (1/sqrt(n)) sum_{i<=s} (y_i - ybar) ]^2`.
    ///
    /// Expanding the square gives `(A_n - 2 ybar b_n + ybar^2 c_n) / n^2` with
    /// `c_n = n(n+1)(2n+1)/6`; the result is clamped at zero against rounding
    /// since the quantity is a sum of squares.
    pub fn projected_variance(&self) -> Result<f64, BaselineError> {
        if self.n == 0 {
            return Err(BaselineError::EmptyTracker);
        }
        let n = self.n as f64;
        let ybar = self.sum / n;
        let c = sum_of_squared_indices(self.n);
        let total = self.sum_sq_partials - 2.0 * ybar * self.weighted_partials + ybar * ybar * c;
        Ok((total / (n * n)).max(0.0))
    }

    /// Interval `center +- q sqrt(variance / n)` where `q` is the 1 - alpha/2
    /// quantile of the random scaling pivot and `center = v . xbar_n`.
    pub fn confidence_interval(
        &self,
        center: f64,
        q: f64,
        alpha: f64,
    ) -> Result<ConfidenceInterval, BaselineError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BaselineError::InvalidAlpha(alpha));
        }
        let variance = self.projected_variance()?;
        let half_width = q * (variance / self.n as f64).sqrt();
        Ok(ConfidenceInterval::new(center, half_width, 1.0 - alpha))
    }
}

/// `sum_{s=1..n} s^2`, exact through u128 before conversion.
fn sum_of_squared_indices(n: u64) -> f64 {
    let n = n as u128;
    (n * (n + 1) * (2 * n + 1) / 6) as f64
}

/// Full d x d running-sum variant, kept for cross-validating the projected
/// trackers on small dimensions.
#[derive(Debug, Clone)]
pub struct MatrixRandomScalingTracker {
    d: usize,
    n: u64,
    sum: Vec<f64>,
    sum_sq_partials: Vec<f64>,
    weighted_partials: Vec<f64>,
}

impl MatrixRandomScalingTracker {
    pub fn new(d: usize) -> Self {
        assert!((1..=50).contains(&d), "matrix tracker is meant for d <= 50");
        Self {
            d,
            n: 0,
            sum: vec![0.0; d],
            sum_sq_partials: vec![0.0; d * d],
            weighted_partials: vec![0.0; d],
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn update(&mut self, iterate: &[f64]) -> Result<(), BaselineError> {
        assert_eq!(iterate.len(), self.d, "iterate dimension mismatch");
        if iterate.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFiniteInput { step: self.n + 1 });
        }
        self.n += 1;
        for (s, &x) in self.sum.iter_mut().zip(iterate) {
            *s += x;
        }
        for i in 0..self.d {
            for j in 0..self.d {
                self.sum_sq_partials[i * self.d + j] += self.sum[i] * self.sum[j];
            }
        }
        let step = self.n as f64;
        for (w, &s) in self.weighted_partials.iter_mut().zip(&self.sum) {
            *w += step * s;
        }
        Ok(())
    }

    /// `v . V_rs v` from the matrix running sums.
    pub fn projected_variance(&self, v: &[f64]) -> Result<f64, BaselineError> {
        assert_eq!(v.len(), self.d, "functional dimension mismatch");
        if self.n == 0 {
            return Err(BaselineError::EmptyTracker);
        }
        let n = self.n as f64;
        let proj_sum = crate::model::dot(v, &self.sum);
        let ybar = proj_sum / n;
        let proj_weighted = crate::model::dot(v, &self.weighted_partials);
        let mut quad = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, &vj) in v.iter().enumerate() {
                quad += vi * vj * self.sum_sq_partials[i * self.d + j];
            }
        }
        let c = sum_of_squared_indices(self.n);
        let total = quad - 2.0 * ybar * proj_weighted + ybar * ybar * c;
        Ok((total / (n * n)).max(0.0))
    }
}

/// The true limiting covariance, for the oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleSpec {
    d: usize,
    sigma: Vec<f64>,
}

impl OracleSpec {
    /// Row-major d x d matrix; must be symmetric within 1e-12.
    pub fn new(d: usize, sigma: Vec<f64>) -> Result<Self, BaselineError> {
        if sigma.len() != d * d {
            return Err(BaselineError::DimensionMismatch {
                got: sigma.len(),
                expected: d * d,
            });
        }
        for i in 0..d {
            for j in (i + 1)..d {
                if (sigma[i * d + j] - sigma[j * d + i]).abs() > 1e-12 {
                    return Err(BaselineError::AsymmetricCovariance);
                }
            }
        }
        Ok(Self { d, sigma })
    }

    pub fn identity(d: usize) -> Self {
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        Self { d, sigma }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Quadratic form `v . Sigma v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.d, "functional dimension mismatch");
        let mut acc = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, &vj) in v.iter().enumerate() {
                acc += vi * vj * self.sigma[i * self.d + j];
            }
        }
        acc
    }
}

/// The oracle interval `v . xbar_n +- z_{1-alpha/2} sqrt(v . Sigma v / n)`.
pub fn oracle_ci(
    run_average: &[f64],
    spec: &OracleSpec,
    v: &[f64],
    n: u64,
    alpha: f64,
) -> Result<ConfidenceInterval, BaselineError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BaselineError::InvalidAlpha(alpha));
    }
    assert!(n >= 1, "oracle interval needs at least one step");
    assert_eq!(run_average.len(), spec.d, "average dimension mismatch");
    let z = stats::normal_quantile(1.0 - alpha / 2.0);
    let center = crate::model::dot(v, run_average);
    let half_width = z * (spec.quad_form(v) / n as f64).sqrt();
    Ok(ConfidenceInterval::new(center, half_width, 1.0 - alpha))
}
