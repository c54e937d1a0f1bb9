//! Streaming statistical inference for stochastic optimization.
//!
//! K independent averaged-SGD sequences consume a data stream round-robin;
//! their per-run averages are i.i.d., so studentizing the pooled average by
//! the across-run spread gives a t-statistic with K-1 degrees of freedom and
//! a confidence interval that costs almost nothing beyond the SGD updates
//! themselves. The crate also ships two baselines on the same stream — the
//! random scaling interval (self-normalization by a running functional of
//! partial sums, with simulated pivot quantiles) and the oracle interval
//! built from the true limiting covariance — plus a Monte Carlo harness that
//! measures coverage, relative error of coverage, interval length and timing
//! over many seeded trials, and an IDX/PGM pipeline for the mean-image demo.
//!
//! Everything is deterministic: samples are pure functions of
//! `(seed, counter)`, trials and simulation shards derive their own seeds,
//! and aggregations reduce in a fixed order, so results are bit-identical
//! across thread counts.

pub mod baselines;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod sgd;
pub mod stats;

pub use baselines::{oracle_ci, MatrixRandomScalingTracker, OracleSpec, RandomScalingTracker};
pub use harness::{
    k_sweep, relative_error, run_experiment, run_trial, CoverageReport, ExperimentConfig,
    Functional, Method, ReportRow,
};
pub use ingest::{
    mnist_mean_demo, read_idx_images, read_idx_labels, DenoiseTarget, GrayImage, IdxImages,
};
pub use model::{gen_sample, gradient, true_param, ModelKind, ModelSpec, Sample};
pub use parallel::{run_split_streams, ConfidenceInterval, ParallelEstimator};
pub use rng::SeededStream;
pub use sgd::{RunState, StepSchedule};
pub use stats::{normal_quantile, rs_pivot_quantile, rs_pivot_quantiles, t_cdf, t_quantile, PivotMCConfig};
