//! Parallel one-shot inference: K independent SGD runs fed round-robin from a
//! single stream, aggregated by averaging, with t-based confidence intervals
//! for linear functionals of the optimum.
//!
//! The K per-run averages are i.i.d. (identical initialization, disjoint data
//! slices), so studentizing the parallel average by their sample standard
//! deviation yields a statistic that is asymptotically t with K-1 degrees of
//! freedom. Inference is only defined when all runs sit at the same local
//! step; a trailing partial round of the stream is ignored rather than
//! extrapolated.

use crate::model::{self, ModelSpec};
use crate::rng::SeededStream;
use crate::sgd::{RunState, SgdError, StepSchedule};
use crate::stats;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("parallel inference requires at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("runs are not aligned at a common local step (or no step taken yet)")]
    MisalignedRuns,
    #[error("numeric fault in run {run}: {source}")]
    NumericFault { run: usize, source: SgdError },
    #[error("confidence level parameter alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("t-statistic is undefined: the functional spread across runs is zero")]
    DegenerateStatistic,
}

/// A two-sided interval `center +- half_width` at confidence `level = 1 - alpha`.
///
/// `degenerate` marks the zero-spread case where the half width collapses to
/// zero; such an interval covers a value only by exact equality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    center: f64,
    half_width: f64,
    level: f64,
    degenerate: bool,
}

impl ConfidenceInterval {
    pub(crate) fn new(center: f64, half_width: f64, level: f64) -> Self {
        debug_assert!(half_width >= 0.0);
        Self {
            center,
            half_width,
            level,
            degenerate: half_width == 0.0,
        }
    }

    /// Builds the t interval `center +- t_quantile * sd / sqrt(k)` from the
    /// across-run projection statistics. Single assembly point shared by the
    /// estimator API and the experiment harness.
    pub(crate) fn from_run_stats(
        center: f64,
        sd: f64,
        k: usize,
        t_quantile: f64,
        alpha: f64,
    ) -> Self {
        let half_width = t_quantile * sd / (k as f64).sqrt();
        Self::new(center, half_width, 1.0 - alpha)
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    /// Whether `value` lies in the interval. A degenerate interval contains
    /// exactly its center.
    pub fn contains(&self, value: f64) -> bool {
        (value - self.center).abs() <= self.half_width
    }
}

/// K parallel runs plus round-robin dispatch bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelEstimator {
    runs: Vec<RunState>,
    schedule: StepSchedule,
    dispatched: u64,
}

impl ParallelEstimator {
    pub fn new(k: usize, d: usize, schedule: StepSchedule) -> Result<Self, InferenceError> {
        if k < 2 {
            return Err(InferenceError::TooFewRuns(k));
        }
        Ok(Self {
            runs: (0..k).map(|_| RunState::new(d)).collect(),
            schedule,
            dispatched: 0,
        })
    }

    /// Reassembles an estimator from independently advanced runs, e.g. after
    /// driving each run on its own executor.
    pub fn from_runs(
        runs: Vec<RunState>,
        schedule: StepSchedule,
    ) -> Result<Self, InferenceError> {
        if runs.len() < 2 {
            return Err(InferenceError::TooFewRuns(runs.len()));
        }
        let dispatched = runs.iter().map(RunState::steps).sum();
        Ok(Self {
            runs,
            schedule,
            dispatched,
        })
    }

    pub fn k(&self) -> usize {
        self.runs.len()
    }

    /// Global samples consumed so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn runs(&self) -> &[RunState] {
        &self.runs
    }

    /// Routes the next global sample to run `dispatched mod K` and performs
    /// one SGD step there.
    pub fn ingest<G>(&mut self, grad_into: G) -> Result<(), InferenceError>
    where
        G: FnOnce(&[f64], &mut [f64]),
    {
        let k = self.runs.len();
        let run = (self.dispatched % k as u64) as usize;
        self.runs[run]
            .step(&self.schedule, grad_into)
            .map_err(|source| InferenceError::NumericFault { run, source })?;
        self.dispatched += 1;
        Ok(())
    }

    /// Common local step of all runs, if they are aligned.
    pub fn aligned_step(&self) -> Option<u64> {
        let first = self.runs[0].steps();
        self.runs
            .iter()
            .all(|r| r.steps() == first)
            .then_some(first)
    }

    fn require_aligned(&self) -> Result<u64, InferenceError> {
        match self.aligned_step() {
            Some(n) if n >= 1 => Ok(n),
            _ => Err(InferenceError::MisalignedRuns),
        }
    }

    /// Mean of the K per-run averages.
    pub fn parallel_mean(&self) -> Result<Vec<f64>, InferenceError> {
        self.require_aligned()?;
        let d = self.runs[0].dim();
        let mut mean = vec![0.0; d];
        for run in &self.runs {
            for (m, &a) in mean.iter_mut().zip(run.average()) {
                *m += a;
            }
        }
        let inv_k = 1.0 / self.runs.len() as f64;
        for m in &mut mean {
            *m *= inv_k;
        }
        Ok(mean)
    }

    /// Projections `v . avg_k` of each run average onto the functional.
    pub fn projections(&self, v: &[f64]) -> Result<Vec<f64>, InferenceError> {
        self.require_aligned()?;
        Ok(self
            .runs
            .iter()
            .map(|r| model::dot(v, r.average()))
            .collect())
    }

    /// Sample standard deviation of the functional across the K runs.
    pub fn functional_sd(&self, v: &[f64]) -> Result<f64, InferenceError> {
        let projections = self.projections(v)?;
        Ok(projection_sd(&projections))
    }

    /// The (1 - alpha) t interval for `v . x*`.
    pub fn confidence_interval(
        &self,
        v: &[f64],
        alpha: f64,
    ) -> Result<ConfidenceInterval, InferenceError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(InferenceError::InvalidAlpha(alpha));
        }
        let projections = self.projections(v)?;
        let k = projections.len();
        let center = projections.iter().sum::<f64>() / k as f64;
        let sd = projection_sd(&projections);
        let t = stats::t_quantile(1.0 - alpha / 2.0, (k - 1) as u32);
        Ok(ConfidenceInterval::from_run_stats(center, sd, k, t, alpha))
    }

    /// The studentized statistic `sqrt(K) (v . mean - truth) / sd`.
    pub fn t_statistic(&self, v: &[f64], truth: f64) -> Result<f64, InferenceError> {
        let projections = self.projections(v)?;
        let k = projections.len() as f64;
        let center = projections.iter().sum::<f64>() / k;
        let sd = projection_sd(&projections);
        if sd == 0.0 {
            return Err(InferenceError::DegenerateStatistic);
        }
        Ok(k.sqrt() * (center - truth) / sd)
    }
}

pub(crate) fn projection_sd(projections: &[f64]) -> f64 {
    let k = projections.len();
    debug_assert!(k >= 2);
    let mean = projections.iter().sum::<f64>() / k as f64;
    let ss: f64 = projections.iter().map(|p| (p - mean) * (p - mean)).sum();
    (ss / (k - 1) as f64).sqrt()
}

/// Drives the K runs concurrently, each on its own slice of the stream.
///
/// Run `r` consumes global sample counters `r, r + K, r + 2K, ...` for `n`
/// local steps, which is exactly the round-robin split [`ParallelEstimator::ingest`]
/// performs serially; because samples are pure functions of `(seed, counter)`,
/// the result is bit-identical to the serial path.
pub fn run_split_streams(
    spec: &ModelSpec,
    x_star: &[f64],
    schedule: StepSchedule,
    k: usize,
    n: u64,
    seed: u64,
) -> Result<ParallelEstimator, InferenceError> {
    if k < 2 {
        return Err(InferenceError::TooFewRuns(k));
    }
    let runs: Result<Vec<RunState>, InferenceError> = (0..k)
        .into_par_iter()
        .map(|r| {
            let mut state = RunState::new(spec.d);
            let mut vector = vec![0.0; spec.d];
            for i in 0..n {
                let counter = r as u64 + i * k as u64;
                let mut local = SeededStream::at(seed, counter);
                let response = model::gen_sample_into(spec, x_star, &mut local, &mut vector);
                let vector_ref = &vector;
                state
                    .step(&schedule, |x, out| {
                        model::gradient_parts_into(spec, x, vector_ref, response, out)
                    })
                    .map_err(|source| InferenceError::NumericFault { run: r, source })?;
            }
            Ok(state)
        })
        .collect();
    ParallelEstimator::from_runs(runs?, schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_sample_into, gradient_parts_into, true_param};
    use crate::rng::derive_seed;
    use proptest::prelude::*;

    /// Feeds d=1 mean-model values through the round-robin dispatcher with a
    /// harmonic schedule, so each run average equals exactly the values it saw.
    fn estimator_from_values(k: usize, values: &[f64]) -> ParallelEstimator {
        let spec = ModelSpec::mean(1);
        let sched = StepSchedule::new(1.0, 1.0).unwrap();
        let mut est = ParallelEstimator::new(k, 1, sched).unwrap();
        for &v in values {
            est.ingest(|x, out| gradient_parts_into(&spec, x, &[v], 0.0, out))
                .unwrap();
        }
        est
    }

    #[test]
    fn round_robin_dispatch() {
        let mut est = estimator_from_values(2, &[1.0, 2.0, 3.0, 4.0]);
        // Samples 1..4 land on runs (1, 2, 1, 2).
        assert_eq!(est.runs()[0].steps(), 2);
        assert_eq!(est.runs()[1].steps(), 2);
        assert_eq!(est.dispatched(), 4);
        // Next sample goes back to run 1.
        let spec = ModelSpec::mean(1);
        est.ingest(|x, out| gradient_parts_into(&spec, x, &[0.0], 0.0, out))
            .unwrap();
        assert_eq!(est.runs()[0].steps(), 3);
    }

    #[test]
    fn seventh_sample_with_three_runs_lands_on_run_one() {
        let est = estimator_from_values(3, &[0.0; 7]);
        assert_eq!(est.runs()[0].steps(), 3);
        assert_eq!(est.runs()[1].steps(), 2);
        assert_eq!(est.runs()[2].steps(), 2);
    }

    #[test]
    fn inference_refused_when_misaligned() {
        let est = estimator_from_values(2, &[1.0]);
        assert_eq!(est.runs()[0].steps(), 1);
        assert_eq!(est.runs()[1].steps(), 0);
        assert!(matches!(
            est.parallel_mean(),
            Err(InferenceError::MisalignedRuns)
        ));
        assert!(est.aligned_step().is_none());
    }

    #[test]
    fn requires_at_least_two_runs() {
        assert!(matches!(
            ParallelEstimator::new(1, 1, StepSchedule::default()),
            Err(InferenceError::TooFewRuns(1))
        ));
    }

    #[test]
    fn parallel_mean_hand_cases() {
        let est = estimator_from_values(2, &[1.0, 3.0]);
        assert_eq!(est.parallel_mean().unwrap(), vec![2.0]);
        let est = estimator_from_values(4, &[0.0, 0.0, 0.0, 4.0]);
        assert_eq!(est.parallel_mean().unwrap(), vec![1.0]);
        let est = estimator_from_values(3, &[7.0, 7.0, 7.0]);
        assert_eq!(est.parallel_mean().unwrap(), vec![7.0]);
    }

    #[test]
    fn functional_sd_hand_cases() {
        let v = [1.0];
        let est = estimator_from_values(3, &[5.0, 5.0, 5.0]);
        assert_eq!(est.functional_sd(&v).unwrap(), 0.0);
        let est = estimator_from_values(2, &[1.0, 3.0]);
        assert!((est.functional_sd(&v).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
        let est = estimator_from_values(3, &[0.0, 1.0, 2.0]);
        assert!((est.functional_sd(&v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn confidence_interval_hand_case() {
        // K=2, projections (1, 3), alpha = 0.5: t_{0.75,1} = tan(pi/4) = 1,
        // so the interval is [1, 3].
        let est = estimator_from_values(2, &[1.0, 3.0]);
        let ci = est.confidence_interval(&[1.0], 0.5).unwrap();
        assert!((ci.center() - 2.0).abs() < 1e-12);
        assert!((ci.half_width() - 1.0).abs() < 1e-9);
        assert!((ci.lower() - 1.0).abs() < 1e-9);
        assert!((ci.upper() - 3.0).abs() < 1e-9);
        assert!(!ci.degenerate());
        assert_eq!(ci.level(), 0.5);
    }

    #[test]
    fn degenerate_interval_contains_only_its_center() {
        let est = estimator_from_values(3, &[4.0, 4.0, 4.0]);
        let ci = est.confidence_interval(&[1.0], 0.05).unwrap();
        assert!(ci.degenerate());
        assert_eq!(ci.length(), 0.0);
        assert!(ci.contains(4.0));
        assert!(!ci.contains(4.0 + 1e-12));
        // ...while the t statistic refuses the degenerate case.
        assert!(matches!(
            est.t_statistic(&[1.0], 4.0),
            Err(InferenceError::DegenerateStatistic)
        ));
    }

    #[test]
    fn half_width_grows_as_alpha_shrinks() {
        let est = estimator_from_values(2, &[1.0, 3.0]);
        let mut last = 0.0;
        for alpha in [0.5, 0.1, 0.01, 0.001, 1e-6] {
            let hw = est.confidence_interval(&[1.0], alpha).unwrap().half_width();
            assert!(hw > last, "alpha {alpha}: {hw} <= {last}");
            last = hw;
        }
        assert!(matches!(
            est.confidence_interval(&[1.0], 0.0),
            Err(InferenceError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn t_statistic_hand_cases() {
        let est = estimator_from_values(2, &[1.0, 3.0]);
        assert!((est.t_statistic(&[1.0], 2.0).unwrap()).abs() < 1e-12);
        assert!((est.t_statistic(&[1.0], 1.0).unwrap() - 1.0).abs() < 1e-12);
        let est = estimator_from_values(3, &[0.0, 1.0, 2.0]);
        assert!((est.t_statistic(&[1.0], 0.0).unwrap() - 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cauchy_closed_form_matches_generic_quantile_at_k2() {
        // For K=2 the interval uses t with one degree of freedom; the closed
        // form tan((1-alpha) pi / 2) must agree with numerically inverting
        // the t CDF.
        let est = estimator_from_values(2, &[1.0, 3.0]);
        for alpha in [0.5, 0.2, 0.05, 0.01, 0.001] {
            let ci = est.confidence_interval(&[1.0], alpha).unwrap();
            let q = invert_cdf(|x| crate::stats::t_cdf(x, 1), 1.0 - alpha / 2.0);
            let expected = q * est.functional_sd(&[1.0]).unwrap() / 2.0f64.sqrt();
            let rel = (ci.half_width() - expected).abs() / expected;
            assert!(rel <= 1e-9, "alpha {alpha}: rel {rel}");
        }
    }

    /// Test-side bisection inversion, independent of the quantile code path.
    fn invert_cdf<F: Fn(f64) -> f64>(cdf: F, p: f64) -> f64 {
        let (mut lo, mut hi) = (-1e9, 1e9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn serial_and_parallel_execution_are_bit_identical() {
        let spec = ModelSpec::linear(3);
        let x_star = true_param(&spec).unwrap();
        let sched = StepSchedule::default();
        let (k, n, seed) = (4usize, 250u64, derive_seed(99, 0));

        let mut serial = ParallelEstimator::new(k, 3, sched).unwrap();
        let mut stream = SeededStream::new(seed);
        let mut vector = vec![0.0; 3];
        for _ in 0..n * k as u64 {
            let response = gen_sample_into(&spec, &x_star, &mut stream, &mut vector);
            let vector_ref = &vector;
            serial
                .ingest(|x, out| gradient_parts_into(&spec, x, vector_ref, response, out))
                .unwrap();
        }

        let parallel = run_split_streams(&spec, &x_star, sched, k, n, seed).unwrap();
        assert_eq!(serial.aligned_step(), Some(n));
        for (a, b) in serial.runs().iter().zip(parallel.runs()) {
            assert_eq!(a.steps(), b.steps());
            assert_eq!(a.iterate(), b.iterate());
            assert_eq!(a.average(), b.average());
        }
        assert_eq!(
            serial.parallel_mean().unwrap(),
            parallel.parallel_mean().unwrap()
        );
    }

    proptest! {
        /// Coverage symmetry: truth inside the CI iff |t| <= t quantile.
        #[test]
        fn coverage_matches_t_statistic_threshold(
            values in proptest::collection::vec(-10.0f64..10.0, 2..7),
            truth in -12.0f64..12.0,
            alpha_idx in 0usize..4,
        ) {
            let alpha = [0.5, 0.1, 0.01, 0.001][alpha_idx];
            let k = values.len();
            let est = estimator_from_values(k, &values);
            let ci = est.confidence_interval(&[1.0], alpha).unwrap();
            match est.t_statistic(&[1.0], truth) {
                Ok(t) => {
                    let threshold = crate::stats::t_quantile(1.0 - alpha / 2.0, (k - 1) as u32);
                    // Exact algebraic identity up to float rounding.
                    if (t.abs() - threshold).abs() > 1e-9 * threshold.max(1.0) {
                        prop_assert_eq!(ci.contains(truth), t.abs() <= threshold);
                    }
                }
                Err(InferenceError::DegenerateStatistic) => {
                    prop_assert_eq!(ci.contains(truth), truth == ci.center());
                }
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }
    }
}
