//! One SGD sequence with polynomially decaying steps and a recursively
//! maintained Polyak-Ruppert average of the post-update iterates.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SgdError {
    #[error("step size schedule requires eta > 0 and beta in (0.5, 1], got eta={eta}, beta={beta}")]
    InvalidSchedule { eta: f64, beta: f64 },
    #[error("non-finite gradient component at step {step}")]
    NonFiniteGradient { step: u64 },
}

/// Step sizes `eta * i^-beta`.
///
/// `beta = 1` is accepted (it makes the mean-model iterate an exact sample
/// mean, which the tests rely on) even though the convergence theory behind
/// the interval construction assumes `beta < 1` strictly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    eta: f64,
    beta: f64,
}

impl StepSchedule {
    pub fn new(eta: f64, beta: f64) -> Result<Self, SgdError> {
        if !(eta > 0.0 && eta.is_finite() && beta > 0.5 && beta <= 1.0) {
            return Err(SgdError::InvalidSchedule { eta, beta });
        }
        Ok(Self { eta, beta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Step size for step `i >= 1`.
    pub fn step_size(&self, i: u64) -> f64 {
        assert!(i >= 1, "step index starts at 1");
        self.eta * (i as f64).powf(-self.beta)
    }
}

/// Defaults used throughout the simulations: eta = 0.5, beta = 0.505.
impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            eta: 0.5,
            beta: 0.505,
        }
    }
}

/// State of one SGD sequence: current iterate, running average of the
/// post-update iterates `x_1..x_i`, and the step count `i`.
///
/// All sequences start from `x_0 = 0`; the average starts with `x_1` (no
/// burn-in), so at `steps = 0` it is still the zero initialization.
#[derive(Debug, Clone)]
pub struct RunState {
    iterate: Vec<f64>,
    average: Vec<f64>,
    steps: u64,
    grad_buf: Vec<f64>,
}

/// Equality over the observable state (the gradient scratch buffer is not
/// part of it).
impl PartialEq for RunState {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps && self.iterate == other.iterate && self.average == other.average
    }
}

impl RunState {
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self {
            iterate: vec![0.0; d],
            average: vec![0.0; d],
            steps: 0,
            grad_buf: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.iterate.len()
    }

    pub fn iterate(&self) -> &[f64] {
        &self.iterate
    }

    /// Running mean of `x_1..x_steps`.
    pub fn average(&self) -> &[f64] {
        &self.average
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Performs one update `x_i = x_{i-1} - eta_i * grad(x_{i-1})`.
    ///
    /// `grad_into` receives the current iterate and writes the stochastic
    /// gradient evaluated there; the average is then folded in as
    /// `avg += (x_i - avg) / i`, which keeps it the exact arithmetic mean of
    /// all post-update iterates up to float rounding.
    pub fn step<G>(&mut self, schedule: &StepSchedule, grad_into: G) -> Result<(), SgdError>
    where
        G: FnOnce(&[f64], &mut [f64]),
    {
        let i = self.steps + 1;
        let eta = schedule.step_size(i);
        grad_into(&self.iterate, &mut self.grad_buf);
        for &g in &self.grad_buf {
            if !g.is_finite() {
                return Err(SgdError::NonFiniteGradient { step: i });
            }
        }
        let inv_i = 1.0 / i as f64;
        for ((x, avg), &g) in self
            .iterate
            .iter_mut()
            .zip(self.average.iter_mut())
            .zip(&self.grad_buf)
        {
            *x -= eta * g;
            *avg += (*x - *avg) * inv_i;
        }
        self.steps = i;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_sample, gradient_parts_into, true_param, ModelSpec, Sample};
    use crate::rng::{derive_seed, SeededStream};

    #[test]
    fn step_sizes() {
        let sched = StepSchedule::default();
        assert_eq!(sched.step_size(1), 0.5);
        // 0.5 * 100^-0.505, evaluated independently.
        assert!((sched.step_size(100) - 0.048861861047790535).abs() < 1e-6);
        let harmonic = StepSchedule::new(1.0, 1.0).unwrap();
        assert!((harmonic.step_size(4) - 0.25).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "step index starts at 1")]
    fn step_size_rejects_zero() {
        StepSchedule::default().step_size(0);
    }

    #[test]
    fn schedule_validation() {
        assert!(StepSchedule::new(0.0, 0.505).is_err());
        assert!(StepSchedule::new(0.5, 0.5).is_err());
        assert!(StepSchedule::new(0.5, 1.01).is_err());
        assert!(StepSchedule::new(0.5, 1.0).is_ok());
    }

    #[test]
    fn harmonic_schedule_tracks_sample_mean_on_mean_model() {
        // With eta_i = 1/i the mean-model iterate is the running sample mean.
        let spec = ModelSpec::mean(3);
        let sched = StepSchedule::new(1.0, 1.0).unwrap();
        let x_star = vec![0.5, -1.0, 0.0];
        let mut stream = SeededStream::new(8);
        let mut state = RunState::new(3);
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for _ in 0..50 {
            let s = gen_sample(&spec, &x_star, &mut stream);
            let raw = match &s {
                Sample::Raw(raw) => raw.clone(),
                _ => unreachable!(),
            };
            state
                .step(&sched, |x, out| {
                    gradient_parts_into(&spec, x, &raw, 0.0, out)
                })
                .unwrap();
            seen.push(raw);
        }
        let n = seen.len() as f64;
        for j in 0..3 {
            let mean: f64 = seen.iter().map(|r| r[j]).sum::<f64>() / n;
            assert!((state.iterate()[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = RunState::new(2);
        let sched = StepSchedule::default();
        for _ in 0..10 {
            state.step(&sched, |_, out| out.fill(0.0)).unwrap();
        }
        assert_eq!(state.iterate(), &[0.0, 0.0]);
        assert_eq!(state.average(), &[0.0, 0.0]);
        assert_eq!(state.steps(), 10);
    }

    #[test]
    fn single_linear_step_by_hand() {
        // d=1, x0=0, a=1, b=1: gradient is -1, eta_1 = 0.5, so x_1 = 0.5.
        let spec = ModelSpec::linear(1);
        let mut state = RunState::new(1);
        state
            .step(&StepSchedule::default(), |x, out| {
                gradient_parts_into(&spec, x, &[1.0], 1.0, out)
            })
            .unwrap();
        assert_eq!(state.iterate(), &[0.5]);
        assert_eq!(state.average(), &[0.5]);
    }

    #[test]
    fn non_finite_gradient_reports_step_index() {
        let mut state = RunState::new(1);
        let sched = StepSchedule::default();
        state.step(&sched, |_, out| out.fill(1.0)).unwrap();
        let err = state.step(&sched, |_, out| out.fill(f64::NAN)).unwrap_err();
        match err {
            SgdError::NonFiniteGradient { step } => assert_eq!(step, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn running_average_matches_stored_history() {
        let spec = ModelSpec::linear(4);
        let x_star = true_param(&spec).unwrap();
        let sched = StepSchedule::default();
        let mut stream = SeededStream::new(21);
        let mut state = RunState::new(4);
        let mut history: Vec<Vec<f64>> = Vec::new();
        for _ in 0..1000 {
            let s = gen_sample(&spec, &x_star, &mut stream);
            let (cov, resp) = match &s {
                Sample::Regression {
                    covariate,
                    response,
                } => (covariate.clone(), *response),
                _ => unreachable!(),
            };
            state
                .step(&sched, |x, out| {
                    gradient_parts_into(&spec, x, &cov, resp, out)
                })
                .unwrap();
            history.push(state.iterate().to_vec());
        }
        let n = history.len() as f64;
        for j in 0..4 {
            let mean: f64 = history.iter().map(|x| x[j]).sum::<f64>() / n;
            let rel = (state.average()[j] - mean).abs() / mean.abs().max(1e-12);
            assert!(rel <= 1e-12, "coord {j}: {} vs {}", state.average()[j], mean);
        }
    }

    #[test]
    fn averaged_iterate_is_root_n_consistent() {
        // |avg_n - x*| <= 5 sqrt(d) / sqrt(n) should hold in >= 95% of runs.
        let spec = ModelSpec::linear(5);
        let x_star = true_param(&spec).unwrap();
        let sched = StepSchedule::default();
        let n = 100_000u64;
        let bound = 5.0 * (5.0f64).sqrt() / (n as f64).sqrt();
        let runs = 200;
        let mut hits = 0;
        let mut cov = vec![0.0; 5];
        for run in 0..runs {
            let mut stream = SeededStream::new(derive_seed(0xBEEF, run));
            let mut state = RunState::new(5);
            for _ in 0..n {
                let resp = crate::model::gen_sample_into(&spec, &x_star, &mut stream, &mut cov);
                let cov_ref = &cov;
                state
                    .step(&sched, |x, out| {
                        gradient_parts_into(&spec, x, cov_ref, resp, out)
                    })
                    .unwrap();
            }
            let err: f64 = state
                .average()
                .iter()
                .zip(&x_star)
                .map(|(a, t)| (a - t) * (a - t))
                .sum::<f64>()
                .sqrt();
            if err <= bound {
                hits += 1;
            }
        }
        assert!(hits >= 190, "only {hits}/200 runs within the bound");
    }
}
