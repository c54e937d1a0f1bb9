//! Monte Carlo coverage studies: many seeded trials of the same streaming
//! experiment, confidence intervals evaluated at fixed checkpoints, and
//! aggregation into coverage, relative error, interval length and timing per
//! (method, alpha, checkpoint) cell.
//!
//! Trials are embarrassingly parallel. They are processed in fixed blocks
//! whose partial aggregates are reduced in block order, so reports are
//! bit-identical regardless of how many threads participate.

use crate::baselines::{BaselineError, OracleSpec, RandomScalingTracker};
use crate::model::{self, ModelKind, ModelSpec};
use crate::parallel::{self, ConfidenceInterval, InferenceError, ParallelEstimator};
use crate::rng::{derive_seed, SeededStream};
use crate::sgd::{RunState, SgdError, StepSchedule};
use crate::stats;
use rayon::prelude::*;
use std::io::{self, Write};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("trial {trial}: {source}")]
    TrialInference {
        trial: u64,
        #[source]
        source: InferenceError,
    },
    #[error("trial {trial}: {source}")]
    TrialBaseline {
        trial: u64,
        #[source]
        source: BaselineError,
    },
    #[error("trial {trial}: {source}")]
    TrialSgd {
        trial: u64,
        #[source]
        source: SgdError,
    },
}

/// Interval constructions the harness can run side by side on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Parallel,
    RandomScaling,
    Oracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Parallel => "parallel",
            Method::RandomScaling => "random_scaling",
            Method::Oracle => "oracle",
        }
    }
}

/// A linear functional of the parameter: a canonical coordinate or an
/// arbitrary direction vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    Coordinate(usize),
    Direction(Vec<f64>),
}

impl Functional {
    #[inline]
    fn project(&self, x: &[f64]) -> f64 {
        match self {
            Functional::Coordinate(j) => x[*j],
            Functional::Direction(v) => model::dot(v, x),
        }
    }

    fn dense(&self, d: usize) -> Vec<f64> {
        match self {
            Functional::Coordinate(j) => {
                let mut v = vec![0.0; d];
                v[*j] = 1.0;
                v
            }
            Functional::Direction(v) => v.clone(),
        }
    }
}

/// Full description of one coverage study.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// True parameter; `None` means the model's canonical one (the mean model
    /// has none, so it must be supplied there).
    pub x_star: Option<Vec<f64>>,
    /// Total stream length per trial, shared by every method.
    pub n_total: u64,
    /// Number of parallel runs for the parallel method.
    pub k: usize,
    pub alphas: Vec<f64>,
    pub trials: u64,
    /// Global samples between inferences; must be a multiple of `k` so the
    /// runs are aligned at every checkpoint.
    pub checkpoint_every: u64,
    pub functionals: Vec<Functional>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub schedule: StepSchedule,
}

impl ExperimentConfig {
    /// Headline defaults around a model: K = 6, N = 60000, inference every
    /// 600 samples, alphas {0.05, 0.01, 0.001}, marginal functionals.
    pub fn new(model: ModelSpec) -> Self {
        let functionals = (0..model.d).map(Functional::Coordinate).collect();
        Self {
            model,
            x_star: None,
            n_total: 60_000,
            k: 6,
            alphas: vec![0.05, 0.01, 0.001],
            trials: 10_000,
            checkpoint_every: 600,
            functionals,
            methods: vec![Method::Parallel, Method::RandomScaling],
            seed: 42,
            schedule: StepSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.trials == 0 {
            return fail("trials must be positive".into());
        }
        if self.checkpoint_every == 0 || !self.checkpoint_every.is_multiple_of(self.k as u64) {
            return fail(format!(
                "checkpoint_every ({}) must be a positive multiple of k ({})",
                self.checkpoint_every, self.k
            ));
        }
        if self.n_total < self.checkpoint_every {
            return fail(format!(
                "n_total ({}) admits no checkpoint at cadence {}",
                self.n_total, self.checkpoint_every
            ));
        }
        if self.alphas.is_empty() {
            return fail("at least one alpha is required".into());
        }
        for &alpha in &self.alphas {
            if !(alpha > 0.0 && alpha < 1.0) {
                return fail(format!("alpha must lie in (0, 1), got {alpha}"));
            }
        }
        if self.methods.is_empty() {
            return fail("at least one method is required".into());
        }
        if self.methods.contains(&Method::Oracle) && self.model.kind == ModelKind::Logistic {
            return fail(
                "the oracle method needs the limiting covariance, which is only \
                 available in closed form for the linear and mean models"
                    .into(),
            );
        }
        if self.functionals.is_empty() {
            return fail("at least one functional is required".into());
        }
        for f in &self.functionals {
            match f {
                Functional::Coordinate(j) if *j >= self.model.d => {
                    return fail(format!(
                        "coordinate functional {j} out of range for d = {}",
                        self.model.d
                    ));
                }
                Functional::Direction(v) if v.len() != self.model.d => {
                    return fail(format!(
                        "direction functional has length {}, expected {}",
                        v.len(),
                        self.model.d
                    ));
                }
                _ => {}
            }
        }
        if let Some(x) = &self.x_star {
            if x.len() != self.model.d {
                return fail(format!(
                    "x_star has length {}, expected {}",
                    x.len(),
                    self.model.d
                ));
            }
        } else if self.model.kind == ModelKind::Mean {
            return fail("the mean model has no canonical x_star; supply one".into());
        }
        Ok(())
    }

    fn resolved_x_star(&self) -> Result<Vec<f64>, HarnessError> {
        match &self.x_star {
            Some(x) => Ok(x.clone()),
            None => model::true_param(&self.model)
                .map_err(|e| HarnessError::Config(e.to_string())),
        }
    }

    fn checkpoints(&self) -> Vec<u64> {
        (1..=self.n_total / self.checkpoint_every)
            .map(|i| i * self.checkpoint_every)
            .collect()
    }
}

/// `|coverage - (1 - alpha)| / alpha`, the relative error of coverage.
pub fn relative_error(coverage: f64, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    (coverage - (1.0 - alpha)).abs() / alpha
}

/// One aggregated report cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub alpha: f64,
    pub checkpoint_samples: u64,
    pub coverage: f64,
    pub relative_error: f64,
    pub mean_length: f64,
    pub length_std: f64,
    pub wall_seconds: f64,
}

/// Aggregated coverage study results plus the end-to-end wall time.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub rows: Vec<ReportRow>,
    pub total_wall_seconds: f64,
}

impl CoverageReport {
    /// Row for `method` and `alpha` at the last checkpoint.
    pub fn final_row(&self, method: Method, alpha: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && (r.alpha - alpha).abs() < 1e-12)
            .max_by_key(|r| r.checkpoint_samples)
    }

    /// Writes the report as CSV: header then one row per
    /// (method, alpha, checkpoint), floats with 6 significant digits, LF
    /// line endings. With `include_timing` off the timing column is written
    /// as 0 so that outputs are byte-identical across thread counts.
    pub fn write_csv<W: Write>(&self, mut w: W, include_timing: bool) -> io::Result<()> {
        w.write_all(
            b"method,alpha,checkpoint_samples,coverage,relative_error,mean_length,length_std,wall_seconds\n",
        )?;
        for row in &self.rows {
            let wall = if include_timing { row.wall_seconds } else { 0.0 };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.method.as_str(),
                fmt_g6(row.alpha),
                row.checkpoint_samples,
                fmt_g6(row.coverage),
                fmt_g6(row.relative_error),
                fmt_g6(row.mean_length),
                fmt_g6(row.length_std),
                fmt_g6(wall),
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self, include_timing: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, include_timing)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Formats with 6 significant digits in the style of C's `%.6g`
/// (fixed notation for exponents in [-4, 5], scientific otherwise,
/// trailing zeros trimmed).
pub(crate) fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exponent) = sci.split_once('e').expect("{:e} always contains 'e'");
    let e: i32 = exponent.parse().expect("exponent is an integer");
    let trim = |mut s: String| {
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    };
    if (-4..6).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), e)
    }
}

/// One confidence interval emitted by a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CiRecord {
    pub method: Method,
    pub alpha: f64,
    pub checkpoint_samples: u64,
    pub functional_index: usize,
    pub interval: ConfidenceInterval,
    pub covered: bool,
}

/// Everything a trial emits; used directly in tests, aggregated in
/// [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecords {
    pub trial_index: u64,
    pub records: Vec<CiRecord>,
}

/// Precomputed per-experiment quantities shared by all trials.
struct ExperimentContext {
    x_star: Vec<f64>,
    truths: Vec<f64>,
    checkpoints: Vec<u64>,
    /// t_{1 - alpha/2, K-1} per alpha.
    t_quantiles: Vec<f64>,
    /// z_{1 - alpha/2} per alpha (oracle method).
    z_quantiles: Vec<f64>,
    /// Random scaling pivot quantile per alpha.
    rs_quantiles: Vec<f64>,
    /// sqrt(v . Sigma v) per functional (oracle method).
    oracle_sqrt_quads: Vec<f64>,
}

/// Path/grid used when a requested alpha is missing from the precomputed
/// pivot table; smaller than the table's configuration but deterministic.
const RS_FALLBACK_MC: stats::PivotMCConfig = stats::PivotMCConfig {
    paths: 200_000,
    grid: 1000,
    seed: 7,
};

fn build_context(cfg: &ExperimentConfig) -> Result<ExperimentContext, HarnessError> {
    cfg.validate()?;
    let x_star = cfg.resolved_x_star()?;
    let truths = cfg
        .functionals
        .iter()
        .map(|f| f.project(&x_star))
        .collect();
    let df = (cfg.k - 1) as u32;
    let t_quantiles = cfg
        .alphas
        .iter()
        .map(|&a| stats::t_quantile(1.0 - a / 2.0, df))
        .collect();
    let z_quantiles = cfg
        .alphas
        .iter()
        .map(|&a| stats::normal_quantile(1.0 - a / 2.0))
        .collect();
    let rs_quantiles = if cfg.methods.contains(&Method::RandomScaling) {
        cfg.alphas
            .iter()
            .map(|&a| {
                let p = 1.0 - a / 2.0;
                stats::rs_critical_value(p)
                    .unwrap_or_else(|| stats::rs_pivot_quantile(p, &RS_FALLBACK_MC))
            })
            .collect()
    } else {
        Vec::new()
    };
    let oracle_sqrt_quads = if cfg.methods.contains(&Method::Oracle) {
        let sigma = OracleSpec::identity(cfg.model.d);
        cfg.functionals
            .iter()
            .map(|f| sigma.quad_form(&f.dense(cfg.model.d)).sqrt())
            .collect()
    } else {
        Vec::new()
    };
    Ok(ExperimentContext {
        x_star,
        truths,
        checkpoints: cfg.checkpoints(),
        t_quantiles,
        z_quantiles,
        rs_quantiles,
        oracle_sqrt_quads,
    })
}

/// Pre-generated stream of one trial, stored flat.
struct SampleBuffer {
    d: usize,
    vectors: Vec<f64>,
    responses: Vec<f64>,
}

impl SampleBuffer {
    fn new(d: usize) -> Self {
        Self {
            d,
            vectors: Vec::new(),
            responses: Vec::new(),
        }
    }

    fn generate(&mut self, cfg: &ExperimentConfig, x_star: &[f64], trial: u64) {
        let n = cfg.n_total as usize;
        self.vectors.resize(n * self.d, 0.0);
        self.responses.resize(n, 0.0);
        let mut stream = SeededStream::new(derive_seed(cfg.seed, trial));
        for i in 0..n {
            let row = &mut self.vectors[i * self.d..(i + 1) * self.d];
            self.responses[i] = model::gen_sample_into(&cfg.model, x_star, &mut stream, row);
        }
    }

    #[inline]
    fn row(&self, i: usize) -> (&[f64], f64) {
        (
            &self.vectors[i * self.d..(i + 1) * self.d],
            self.responses[i],
        )
    }
}

/// Runs every selected method over the trial's stream, feeding each emitted
/// interval to `sink`. Returns per-method elapsed seconds (stream generation
/// excluded).
fn trial_pass<S>(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    buffer: &mut SampleBuffer,
    trial: u64,
    mut sink: S,
) -> Result<Vec<f64>, HarnessError>
where
    S: FnMut(usize, usize, usize, usize, &ConfidenceInterval, bool),
{
    buffer.generate(cfg, &ctx.x_star, trial);
    let mut method_seconds = vec![0.0; cfg.methods.len()];
    for (mi, method) in cfg.methods.iter().enumerate() {
        let start = Instant::now();
        match method {
            Method::Parallel => {
                pass_parallel(cfg, ctx, buffer, trial, mi, &mut sink)?;
            }
            Method::RandomScaling => {
                pass_random_scaling(cfg, ctx, buffer, trial, mi, &mut sink)?;
            }
            Method::Oracle => {
                pass_oracle(cfg, ctx, buffer, trial, mi, &mut sink)?;
            }
        }
        method_seconds[mi] = start.elapsed().as_secs_f64();
    }
    Ok(method_seconds)
}

fn pass_parallel<S>(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    buffer: &SampleBuffer,
    trial: u64,
    mi: usize,
    sink: &mut S,
) -> Result<(), HarnessError>
where
    S: FnMut(usize, usize, usize, usize, &ConfidenceInterval, bool),
{
    let mut est = ParallelEstimator::new(cfg.k, cfg.model.d, cfg.schedule)
        .map_err(|source| HarnessError::TrialInference { trial, source })?;
    let mut next_checkpoint = 0usize;
    let mut projections = vec![0.0; cfg.k];
    for i in 0..cfg.n_total as usize {
        let (vector, response) = buffer.row(i);
        est.ingest(|x, out| model::gradient_parts_into(&cfg.model, x, vector, response, out))
            .map_err(|source| HarnessError::TrialInference { trial, source })?;
        let consumed = (i + 1) as u64;
        if next_checkpoint < ctx.checkpoints.len() && consumed == ctx.checkpoints[next_checkpoint]
        {
            debug_assert_eq!(est.aligned_step(), Some(consumed / cfg.k as u64));
            for (fi, functional) in cfg.functionals.iter().enumerate() {
                for (p, run) in projections.iter_mut().zip(est.runs()) {
                    *p = functional.project(run.average());
                }
                let center = projections.iter().sum::<f64>() / cfg.k as f64;
                let sd = parallel::projection_sd(&projections);
                for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                    let ci = ConfidenceInterval::from_run_stats(
                        center,
                        sd,
                        cfg.k,
                        ctx.t_quantiles[ai],
                        alpha,
                    );
                    sink(mi, ai, next_checkpoint, fi, &ci, ci.contains(ctx.truths[fi]));
                }
            }
            next_checkpoint += 1;
        }
    }
    Ok(())
}

fn pass_random_scaling<S>(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    buffer: &SampleBuffer,
    trial: u64,
    mi: usize,
    sink: &mut S,
) -> Result<(), HarnessError>
where
    S: FnMut(usize, usize, usize, usize, &ConfidenceInterval, bool),
{
    let mut path = RunState::new(cfg.model.d);
    let mut trackers: Vec<RandomScalingTracker> = cfg
        .functionals
        .iter()
        .map(|_| RandomScalingTracker::new())
        .collect();
    let mut next_checkpoint = 0usize;
    for i in 0..cfg.n_total as usize {
        let (vector, response) = buffer.row(i);
        path.step(&cfg.schedule, |x, out| {
            model::gradient_parts_into(&cfg.model, x, vector, response, out)
        })
        .map_err(|source| HarnessError::TrialSgd { trial, source })?;
        for (tracker, functional) in trackers.iter_mut().zip(&cfg.functionals) {
            tracker
                .update(functional.project(path.iterate()))
                .map_err(|source| HarnessError::TrialBaseline { trial, source })?;
        }
        let consumed = (i + 1) as u64;
        if next_checkpoint < ctx.checkpoints.len() && consumed == ctx.checkpoints[next_checkpoint]
        {
            for (fi, functional) in cfg.functionals.iter().enumerate() {
                let center = functional.project(path.average());
                for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                    let ci = trackers[fi]
                        .confidence_interval(center, ctx.rs_quantiles[ai], alpha)
                        .map_err(|source| HarnessError::TrialBaseline { trial, source })?;
                    sink(mi, ai, next_checkpoint, fi, &ci, ci.contains(ctx.truths[fi]));
                }
            }
            next_checkpoint += 1;
        }
    }
    Ok(())
}

fn pass_oracle<S>(
    cfg: &ExperimentConfig,
    ctx: &ExperimentContext,
    buffer: &SampleBuffer,
    trial: u64,
    mi: usize,
    sink: &mut S,
) -> Result<(), HarnessError>
where
    S: FnMut(usize, usize, usize, usize, &ConfidenceInterval, bool),
{
    let mut path = RunState::new(cfg.model.d);
    let mut next_checkpoint = 0usize;
    for i in 0..cfg.n_total as usize {
        let (vector, response) = buffer.row(i);
        path.step(&cfg.schedule, |x, out| {
            model::gradient_parts_into(&cfg.model, x, vector, response, out)
        })
        .map_err(|source| HarnessError::TrialSgd { trial, source })?;
        let consumed = (i + 1) as u64;
        if next_checkpoint < ctx.checkpoints.len() && consumed == ctx.checkpoints[next_checkpoint]
        {
            let inv_sqrt_n = 1.0 / (consumed as f64).sqrt();
            for (fi, functional) in cfg.functionals.iter().enumerate() {
                let center = functional.project(path.average());
                for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                    let half_width = ctx.z_quantiles[ai] * ctx.oracle_sqrt_quads[fi] * inv_sqrt_n;
                    let ci = ConfidenceInterval::new(center, half_width, 1.0 - alpha);
                    sink(mi, ai, next_checkpoint, fi, &ci, ci.contains(ctx.truths[fi]));
                }
            }
            next_checkpoint += 1;
        }
    }
    Ok(())
}

/// Runs one trial and materializes every confidence interval it produces.
///
/// Deterministic in `(cfg.seed, trial_index)`.
pub fn run_trial(cfg: &ExperimentConfig, trial_index: u64) -> Result<TrialRecords, HarnessError> {
    let ctx = build_context(cfg)?;
    let mut buffer = SampleBuffer::new(cfg.model.d);
    let mut records = Vec::new();
    trial_pass(cfg, &ctx, &mut buffer, trial_index, |mi, ai, ci_idx, fi, ci, covered| {
        records.push(CiRecord {
            method: cfg.methods[mi],
            alpha: cfg.alphas[ai],
            checkpoint_samples: ctx.checkpoints[ci_idx],
            functional_index: fi,
            interval: *ci,
            covered,
        });
    })?;
    Ok(TrialRecords {
        trial_index,
        records,
    })
}

#[derive(Clone)]
struct CellAgg {
    covered: u64,
    observations: u64,
    length_sum: f64,
    length_sq_sum: f64,
}

impl CellAgg {
    fn empty() -> Self {
        Self {
            covered: 0,
            observations: 0,
            length_sum: 0.0,
            length_sq_sum: 0.0,
        }
    }

    fn merge(&mut self, other: &Self) {
        self.covered += other.covered;
        self.observations += other.observations;
        self.length_sum += other.length_sum;
        self.length_sq_sum += other.length_sq_sum;
    }
}

struct BlockStats {
    cells: Vec<CellAgg>,
    method_seconds: Vec<f64>,
}

/// Trials per aggregation block. Blocks are the unit of parallelism and the
/// reduction order, so this constant is part of the deterministic contract.
const TRIAL_BLOCK: u64 = 32;

/// Runs the full coverage study.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport, HarnessError> {
    let started = Instant::now();
    let ctx = build_context(cfg)?;
    let n_methods = cfg.methods.len();
    let n_alphas = cfg.alphas.len();
    let n_checkpoints = ctx.checkpoints.len();
    let n_cells = n_methods * n_alphas * n_checkpoints;
    let cell_index =
        |mi: usize, ai: usize, ci: usize| (mi * n_alphas + ai) * n_checkpoints + ci;

    let n_blocks = cfg.trials.div_ceil(TRIAL_BLOCK);
    let blocks: Result<Vec<BlockStats>, HarnessError> = (0..n_blocks)
        .into_par_iter()
        .map(|block| {
            let mut cells = vec![CellAgg::empty(); n_cells];
            let mut method_seconds = vec![0.0; n_methods];
            let mut buffer = SampleBuffer::new(cfg.model.d);
            let lo = block * TRIAL_BLOCK;
            let hi = (lo + TRIAL_BLOCK).min(cfg.trials);
            for trial in lo..hi {
                let seconds = trial_pass(
                    cfg,
                    &ctx,
                    &mut buffer,
                    trial,
                    |mi, ai, ci, _fi, interval, covered| {
                        let cell = &mut cells[cell_index(mi, ai, ci)];
                        cell.observations += 1;
                        cell.covered += covered as u64;
                        let length = interval.length();
                        cell.length_sum += length;
                        cell.length_sq_sum += length * length;
                    },
                )?;
                for (acc, s) in method_seconds.iter_mut().zip(&seconds) {
                    *acc += s;
                }
            }
            Ok(BlockStats {
                cells,
                method_seconds,
            })
        })
        .collect();
    let blocks = blocks?;

    // Deterministic reduction in block order.
    let mut cells = vec![CellAgg::empty(); n_cells];
    let mut method_seconds = vec![0.0; n_methods];
    for block in &blocks {
        for (acc, cell) in cells.iter_mut().zip(&block.cells) {
            acc.merge(cell);
        }
        for (acc, s) in method_seconds.iter_mut().zip(&block.method_seconds) {
            *acc += s;
        }
    }

    let mut rows = Vec::with_capacity(n_cells);
    for (mi, method) in cfg.methods.iter().enumerate() {
        for (ai, &alpha) in cfg.alphas.iter().enumerate() {
            for (ci, &checkpoint) in ctx.checkpoints.iter().enumerate() {
                let cell = &cells[cell_index(mi, ai, ci)];
                let obs = cell.observations as f64;
                let coverage = cell.covered as f64 / obs;
                let mean_length = cell.length_sum / obs;
                let length_std = if cell.observations >= 2 {
                    ((cell.length_sq_sum - cell.length_sum * cell.length_sum / obs)
                        / (obs - 1.0))
                        .max(0.0)
                        .sqrt()
                } else {
                    0.0
                };
                rows.push(ReportRow {
                    method: *method,
                    alpha,
                    checkpoint_samples: checkpoint,
                    coverage,
                    relative_error: relative_error(coverage, alpha),
                    mean_length,
                    length_std,
                    wall_seconds: method_seconds[mi],
                });
            }
        }
    }
    Ok(CoverageReport {
        rows,
        total_wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Reruns the study for each K, splitting the same total sample budget into
/// `n = n_total / K` steps per run and inferring once at the end.
pub fn k_sweep(
    cfg: &ExperimentConfig,
    k_values: &[usize],
) -> Result<Vec<(usize, CoverageReport)>, HarnessError> {
    let mut out = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if k < 2 {
            return Err(HarnessError::Config(format!(
                "k must be at least 2, got {k}"
            )));
        }
        if !cfg.n_total.is_multiple_of(k as u64) {
            return Err(HarnessError::Config(format!(
                "n_total ({}) is not divisible by k = {k}",
                cfg.n_total
            )));
        }
        let mut sub = cfg.clone();
        sub.k = k;
        sub.checkpoint_every = cfg.n_total;
        out.push((k, run_experiment(&sub)?));
    }
    Ok(out)
}
