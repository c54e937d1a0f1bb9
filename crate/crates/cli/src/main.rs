//! Command line front end: coverage simulations, K sweeps, pivot critical
//! values, quantile queries, and the MNIST mean-image demo.
//!
//! Every subcommand is deterministic given its flags; `--threads` changes
//! only how work is distributed, never the output (timing columns are the
//! one exception, and `--no-timing` silences those).

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgdinfer_core::harness::{
    k_sweep, run_experiment, ExperimentConfig, Functional, Method,
};
use sgdinfer_core::ingest::{
    mnist_mean_demo, read_idx_images, read_idx_labels, DenoiseTarget,
};
use sgdinfer_core::model::{ModelKind, ModelSpec};
use sgdinfer_core::sgd::StepSchedule;
use sgdinfer_core::stats::{self, PivotMCConfig};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sgdinfer",
    version,
    about = "Streaming confidence intervals for SGD via parallel averaged runs",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo coverage study and write the CSV report.
    Simulate(SimulateArgs),
    /// Rerun the study for several K at a fixed total sample budget.
    KSweep(KSweepArgs),
    /// Simulate critical values of the random scaling pivot.
    CriticalValues(CriticalValuesArgs),
    /// Print a normal or Student-t quantile.
    Quantile(QuantileArgs),
    /// Estimate and denoise the mean image of one digit from IDX files.
    MnistMean(MnistMeanArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Linear,
    Logistic,
    Mean,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Parallel,
    RandomScaling,
    Oracle,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Parallel => Method::Parallel,
            MethodArg::RandomScaling => Method::RandomScaling,
            MethodArg::Oracle => Method::Oracle,
        }
    }
}

#[derive(Args)]
struct StreamArgs {
    /// Objective to optimize.
    #[arg(long, value_enum, default_value = "linear")]
    model: ModelArg,
    /// Parameter dimension.
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Linear-model noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Total samples per trial, shared by all methods.
    #[arg(long, default_value_t = 60_000)]
    n_total: u64,
    /// Step size scale eta in eta * i^-beta.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Step size decay beta in eta * i^-beta.
    #[arg(long, default_value_t = 0.505)]
    beta: f64,
    /// Miscoverage levels; repeat the flag for several.
    #[arg(long = "alpha", value_name = "ALPHA", default_values_t = [0.05, 0.01, 0.001])]
    alphas: Vec<f64>,
    /// Number of independent trials.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// Base seed; trial t derives its own stream from (seed, t).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Coordinates to infer; defaults to all of them.
    #[arg(long = "functional", value_name = "COORD")]
    functionals: Vec<usize>,
    /// Worker threads for trial-level parallelism (0 = automatic). The
    /// report does not depend on this value.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write 0 in the wall_seconds column so reruns are byte-identical.
    #[arg(long, default_value_t = false)]
    no_timing: bool,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Number of parallel runs K (at least 2).
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Global samples between inferences; must be a multiple of K.
    #[arg(long, default_value_t = 600)]
    checkpoint_every: u64,
    /// Methods to run side by side.
    #[arg(long = "method", value_enum, value_name = "METHOD",
          default_values_t = [MethodArg::Parallel, MethodArg::RandomScaling])]
    methods: Vec<MethodArg>,
}

#[derive(Args)]
struct KSweepArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// K values to sweep; each must divide n-total.
    #[arg(long = "k", value_name = "K", default_values_t = [2u64, 3, 4, 5, 6, 7, 8, 9, 10, 11])]
    ks: Vec<u64>,
    /// Methods to run side by side.
    #[arg(long = "method", value_enum, value_name = "METHOD",
          default_values_t = [MethodArg::Parallel])]
    methods: Vec<MethodArg>,
}

#[derive(Args)]
struct CriticalValuesArgs {
    /// Probabilities to report; repeat the flag for several.
    #[arg(long = "p", value_name = "P", default_values_t = [0.975, 0.995, 0.9995])]
    ps: Vec<f64>,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 1_000_000)]
    paths: u64,
    /// Brownian mesh size per path.
    #[arg(long, default_value_t = 1000)]
    grid: u32,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads (0 = automatic); does not affect the output.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Normal,
    T,
}

#[derive(Args)]
struct QuantileArgs {
    /// Distribution family.
    #[arg(long, value_enum)]
    dist: DistArg,
    /// Degrees of freedom (required for t).
    #[arg(long)]
    df: Option<u32>,
    /// Probability in (0, 1).
    #[arg(long)]
    p: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DenoiseArg {
    Black,
    Gray,
}

#[derive(Args)]
struct MnistMeanArgs {
    /// IDX image file (magic 0x00000803).
    #[arg(long)]
    images: PathBuf,
    /// IDX label file (magic 0x00000801).
    #[arg(long)]
    labels: PathBuf,
    /// Digit whose mean image to estimate.
    #[arg(long)]
    digit: u8,
    /// Number of parallel runs K (at least 2).
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Overall miscoverage; per-coordinate level is 1 - alpha/d.
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    /// Step size scale (the demo default is eta_n = n^-0.505).
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.505)]
    beta: f64,
    /// Value painted over coordinates whose upper confidence bound is
    /// negative.
    #[arg(long, value_enum, default_value = "black")]
    denoise_to: DenoiseArg,
    /// Output prefix; writes <prefix>_mean.pgm and <prefix>_denoised.pgm.
    #[arg(long)]
    out_prefix: String,
}

/// Usage-class failure: exit status 2, like flag parsing errors.
struct UsageError(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::KSweep(args) => cmd_k_sweep(args),
        Command::CriticalValues(args) => cmd_critical_values(args),
        Command::Quantile(args) => cmd_quantile(args),
        Command::MnistMean(args) => cmd_mnist_mean(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn schedule(eta: f64, beta: f64) -> Result<StepSchedule, UsageError> {
    StepSchedule::new(eta, beta).map_err(|e| UsageError(e.to_string()))
}

fn in_pool<T: Send>(threads: usize, run: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        Ok(run())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(pool.install(run))
    }
}

fn build_config(stream: &StreamArgs, k: usize, checkpoint_every: u64, methods: &[MethodArg])
    -> Result<ExperimentConfig, UsageError>
{
    let kind = match stream.model {
        ModelArg::Linear => ModelKind::Linear,
        ModelArg::Logistic => ModelKind::Logistic,
        ModelArg::Mean => ModelKind::Mean,
    };
    if stream.d == 0 {
        return Err(UsageError("--d must be at least 1".into()));
    }
    if !(stream.noise_sd >= 0.0 && stream.noise_sd.is_finite()) {
        return Err(UsageError("--noise-sd must be nonnegative".into()));
    }
    let model = ModelSpec::new(kind, stream.d).with_noise_sd(stream.noise_sd);
    // The mean model has no canonical truth; reuse the regression ramp so a
    // plain `--model mean` is runnable.
    let x_star = match kind {
        ModelKind::Mean => Some(
            (0..stream.d)
                .map(|j| j as f64 / stream.d as f64)
                .collect(),
        ),
        _ => None,
    };
    let functionals = if stream.functionals.is_empty() {
        (0..stream.d).map(Functional::Coordinate).collect()
    } else {
        stream
            .functionals
            .iter()
            .map(|&j| Functional::Coordinate(j))
            .collect()
    };
    let cfg = ExperimentConfig {
        model,
        x_star,
        n_total: stream.n_total,
        k,
        alphas: stream.alphas.clone(),
        trials: stream.trials,
        checkpoint_every,
        functionals,
        methods: methods.iter().map(|&m| m.into()).collect(),
        seed: stream.seed,
        schedule: schedule(stream.eta, stream.beta)?,
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = build_config(&args.stream, args.k, args.checkpoint_every, &args.methods)?;
    let report = in_pool(args.stream.threads, || run_experiment(&cfg))?
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = open_out(&args.stream.out)?;
    report.write_csv(&mut out, !args.stream.no_timing)?;
    out.flush()?;
    eprintln!(
        "simulate: {} trials, {} rows, {:.3}s total",
        cfg.trials,
        report.rows.len(),
        report.total_wall_seconds
    );
    Ok(())
}

fn cmd_k_sweep(args: KSweepArgs) -> Result<(), CliError> {
    let ks: Vec<usize> = args.ks.iter().map(|&k| k as usize).collect();
    // Validation needs some k in place; each sweep entry revalidates.
    let base = build_config(
        &args.stream,
        *ks.iter().min().unwrap_or(&2),
        args.stream.n_total,
        &args.methods,
    )?;
    let reports = in_pool(args.stream.threads, || k_sweep(&base, &ks))?
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = open_out(&args.stream.out)?;
    // Same row schema as simulate; the method column carries the K, e.g.
    // "parallel_k6", since each sweep entry is its own experiment.
    out.write_all(
        b"method,alpha,checkpoint_samples,coverage,relative_error,mean_length,length_std,wall_seconds\n",
    )?;
    for (k, report) in &reports {
        let csv = report.csv_string(!args.stream.no_timing);
        for line in csv.lines().skip(1) {
            let (method, rest) = line.split_once(',').expect("rows have 8 columns");
            writeln!(out, "{method}_k{k},{rest}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_critical_values(args: CriticalValuesArgs) -> Result<(), CliError> {
    for &p in &args.ps {
        if !(p > 0.0 && p < 1.0) {
            return Err(CliError::Usage(format!("--p must lie in (0, 1), got {p}")));
        }
    }
    if args.paths == 0 || args.grid < 2 {
        return Err(CliError::Usage(
            "--paths must be positive and --grid at least 2".into(),
        ));
    }
    let cfg = PivotMCConfig {
        paths: args.paths,
        grid: args.grid,
        seed: args.seed,
    };
    let quantiles = in_pool(args.threads, || stats::rs_pivot_quantiles(&args.ps, &cfg))?;
    let mut out = io::stdout().lock();
    writeln!(out, "p,quantile")?;
    for (p, q) in args.ps.iter().zip(quantiles) {
        writeln!(out, "{p},{q:.6}")?;
    }
    Ok(())
}

fn cmd_quantile(args: QuantileArgs) -> Result<(), CliError> {
    if !(args.p > 0.0 && args.p < 1.0) {
        return Err(CliError::Usage(format!(
            "--p must lie in (0, 1), got {}",
            args.p
        )));
    }
    let value = match args.dist {
        DistArg::Normal => stats::normal_quantile(args.p),
        DistArg::T => {
            let df = args
                .df
                .ok_or_else(|| CliError::Usage("--df is required for --dist t".into()))?;
            if df == 0 {
                return Err(CliError::Usage("--df must be at least 1".into()));
            }
            stats::t_quantile(args.p, df)
        }
    };
    println!("{value:.6}");
    Ok(())
}

fn cmd_mnist_mean(args: MnistMeanArgs) -> Result<(), CliError> {
    if args.k < 2 {
        return Err(CliError::Usage(format!(
            "--k must be at least 2, got {}",
            args.k
        )));
    }
    if args.digit > 9 {
        return Err(CliError::Usage(format!(
            "--digit must lie in 0..=9, got {}",
            args.digit
        )));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    let sched = schedule(args.eta, args.beta)?;
    let image_bytes = std::fs::read(&args.images)?;
    let label_bytes = std::fs::read(&args.labels)?;
    let images = read_idx_images(&image_bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
    let labels = read_idx_labels(&label_bytes).map_err(|e| CliError::Runtime(e.to_string()))?;
    let target = match args.denoise_to {
        DenoiseArg::Black => DenoiseTarget::Black,
        DenoiseArg::Gray => DenoiseTarget::Gray,
    };
    let (mean, denoised) = mnist_mean_demo(
        &images,
        &labels,
        args.digit,
        args.k,
        args.alpha,
        &sched,
        target,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mean_path = format!("{}_mean.pgm", args.out_prefix);
    let denoised_path = format!("{}_denoised.pgm", args.out_prefix);
    mean.write_pgm(BufWriter::new(File::create(&mean_path)?))?;
    denoised.write_pgm(BufWriter::new(File::create(&denoised_path)?))?;
    eprintln!("wrote {mean_path} and {denoised_path}");
    Ok(())
}
