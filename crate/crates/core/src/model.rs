//! Stochastic objectives: linear regression, logistic regression, and mean
//! estimation, with their gradient oracles and seeded synthetic data.

use crate::rng::SeededStream;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    /// The mean model has no canonical true parameter; callers supply one.
    #[error("model kind {0:?} has no fixed true parameter")]
    UnsupportedKind(ModelKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Logistic,
    Mean,
}

/// Which objective is being optimized, its dimension, and (for the linear
/// model) the response noise standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub noise_sd: f64,
}

impl ModelSpec {
    pub fn linear(d: usize) -> Self {
        Self::new(ModelKind::Linear, d)
    }

    pub fn logistic(d: usize) -> Self {
        Self::new(ModelKind::Logistic, d)
    }

    pub fn mean(d: usize) -> Self {
        Self::new(ModelKind::Mean, d)
    }

    pub fn new(kind: ModelKind, d: usize) -> Self {
        assert!(d >= 1, "model dimension must be at least 1");
        Self {
            kind,
            d,
            noise_sd: 1.0,
        }
    }

    /// Zero is accepted for exactly noiseless responses.
    pub fn with_noise_sd(mut self, noise_sd: f64) -> Self {
        assert!(
            noise_sd >= 0.0 && noise_sd.is_finite(),
            "noise_sd must be nonnegative and finite"
        );
        self.noise_sd = noise_sd;
        self
    }
}

/// One streaming observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    /// Covariate/response pair; the response is a {0,1} label for logistic.
    Regression { covariate: Vec<f64>, response: f64 },
    /// Raw vector observation (mean model).
    Raw(Vec<f64>),
}

impl Sample {
    /// Vector part and response (0 for the mean model), as borrowed parts.
    fn parts(&self) -> (&[f64], f64) {
        match self {
            Sample::Regression {
                covariate,
                response,
            } => (covariate, *response),
            Sample::Raw(raw) => (raw, 0.0),
        }
    }
}

/// True parameter `(0, 1/d, 2/d, ..., (d-1)/d)` for the regression models.
pub fn true_param(spec: &ModelSpec) -> Result<Vec<f64>, ModelError> {
    match spec.kind {
        ModelKind::Linear | ModelKind::Logistic => {
            let d = spec.d as f64;
            Ok((0..spec.d).map(|j| j as f64 / d).collect())
        }
        ModelKind::Mean => Err(ModelError::UnsupportedKind(spec.kind)),
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-z))`.
///
/// Evaluates `exp(z) / (1 + exp(z))` for negative `z` so that no `exp`
/// overflows even for |z| in the thousands.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(-z))` without overflow for large |z|.
#[inline]
fn log1p_exp_neg(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Draws the next sample of the stream and advances its counter.
///
/// Draw order per sample is fixed: the `d` vector components first (standard
/// normals), then one extra draw for the linear noise or the logistic label.
pub fn gen_sample(spec: &ModelSpec, x_star: &[f64], stream: &mut SeededStream) -> Sample {
    let mut vector = vec![0.0; spec.d];
    let response = gen_sample_into(spec, x_star, stream, &mut vector);
    match spec.kind {
        ModelKind::Linear | ModelKind::Logistic => Sample::Regression {
            covariate: vector,
            response,
        },
        ModelKind::Mean => Sample::Raw(vector),
    }
}

/// Allocation-free form of [`gen_sample`]: fills the vector part of the
/// sample into `vector` and returns the response (0 for the mean model).
pub fn gen_sample_into(
    spec: &ModelSpec,
    x_star: &[f64],
    stream: &mut SeededStream,
    vector: &mut [f64],
) -> f64 {
    assert_eq!(x_star.len(), spec.d, "true parameter dimension mismatch");
    assert_eq!(vector.len(), spec.d, "sample buffer dimension mismatch");
    let mut draws = stream.next_draws();
    draws.fill_normals(vector);
    match spec.kind {
        ModelKind::Linear => {
            let signal = dot(vector, x_star);
            signal + spec.noise_sd * draws.normal()
        }
        ModelKind::Logistic => {
            let p = sigmoid(dot(vector, x_star));
            if draws.uniform() < p {
                1.0
            } else {
                0.0
            }
        }
        ModelKind::Mean => {
            for (v, mu) in vector.iter_mut().zip(x_star) {
                *v += mu;
            }
            0.0
        }
    }
}

/// Stochastic gradient of the per-sample loss at `x`.
pub fn gradient(spec: &ModelSpec, x: &[f64], sample: &Sample) -> Vec<f64> {
    let mut out = vec![0.0; spec.d];
    let (vector, response) = sample.parts();
    gradient_parts_into(spec, x, vector, response, &mut out);
    out
}

/// Allocation-free gradient on the borrowed parts of a sample.
#[inline]
pub fn gradient_parts_into(
    spec: &ModelSpec,
    x: &[f64],
    vector: &[f64],
    response: f64,
    out: &mut [f64],
) {
    assert_eq!(x.len(), spec.d, "iterate dimension mismatch");
    assert_eq!(vector.len(), spec.d, "sample dimension mismatch");
    match spec.kind {
        ModelKind::Linear => {
            let residual = dot(vector, x) - response;
            for (o, &a) in out.iter_mut().zip(vector) {
                *o = a * residual;
            }
        }
        ModelKind::Logistic => {
            let margin = sigmoid(dot(vector, x)) - response;
            for (o, &a) in out.iter_mut().zip(vector) {
                *o = a * margin;
            }
        }
        ModelKind::Mean => {
            for ((o, &xi), &raw) in out.iter_mut().zip(x).zip(vector) {
                *o = xi - raw;
            }
        }
    }
}

/// Per-sample loss; the objective whose gradient [`gradient`] returns.
pub fn loss(spec: &ModelSpec, x: &[f64], sample: &Sample) -> f64 {
    let (vector, response) = sample.parts();
    assert_eq!(x.len(), spec.d, "iterate dimension mismatch");
    assert_eq!(vector.len(), spec.d, "sample dimension mismatch");
    match spec.kind {
        ModelKind::Linear => {
            let residual = dot(vector, x) - response;
            0.5 * residual * residual
        }
        ModelKind::Logistic => {
            let z = dot(vector, x);
            (1.0 - response) * z + log1p_exp_neg(z)
        }
        ModelKind::Mean => {
            let mut acc = 0.0;
            for (&raw, &xi) in vector.iter().zip(x) {
                let diff = raw - xi;
                acc += diff * diff;
            }
            0.5 * acc
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
