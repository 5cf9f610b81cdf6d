use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaoam::data::read_libsvm_file;
use adaoam::eval::{auc_score, convergence_curve};
use adaoam::harness::{ExperimentConfig, Grid, tradeoff_sweep, write_tradeoff_csv};
use adaoam::learners::train_single_pass;
use adaoam::synth::{SynthConfig, generate};
use adaoam::{Algorithm, Dataset, Error, HyperParams, ModelSnapshot};
use clap::{ArgAction, Args, Parser, Subcommand};

/// Streaming AUC maximization: train, evaluate and benchmark online learners.
#[derive(Debug, Parser)]
#[command(name = "adaoam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model in a single pass and write a JSON snapshot.
    Train(TrainArgs),
    /// Score a snapshot against a LIBSVM file and print the AUC.
    Eval(EvalArgs),
    /// Run the cross-validated benchmark described by a JSON config.
    Bench(BenchArgs),
    /// Emit held-out AUC against rounds seen as CSV.
    Curve(CurveArgs),
    /// Emit the sparsity/AUC tradeoff over a θ grid as CSV.
    Sweep(SweepArgs),
    /// Write a synthetic LIBSVM dataset with planted rare features.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, default_value = "adaoam")]
    algorithm: Algorithm,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Sparsity strength; only the sparse learner uses it.
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
}

impl ModelArgs {
    fn params(&self) -> HyperParams {
        HyperParams::new(self.eta, self.lambda)
            .with_theta(self.theta)
            .with_delta(self.delta)
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// LIBSVM training file.
    #[arg(long)]
    data: PathBuf,
    /// Scale every instance to unit norm.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    normalize: bool,
    /// Force the feature dimension instead of inferring it.
    #[arg(long)]
    dimension: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        load(&self.data, self.dimension, self.normalize)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Snapshot written by `train`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// CSV path (a JSON summary is written next to it); overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Worker threads for the grid search.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record wall-clock training times (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Held-out LIBSVM file; without it one fold of `--data` is held out.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated, strictly increasing round counts.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Number of shuffles, seeded `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 4)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    /// θ values, e.g. `0,1e-4,1e-3` or `10^[-8:-1]`.
    #[arg(long, default_value = "0,1e-6,1e-5,1e-4,1e-3,1e-2,1e-1")]
    theta_grid: Grid,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 4)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON generator config; explicit flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    positive_fraction: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    informative: Option<usize>,
    #[arg(long)]
    rare_frequency: Option<f64>,
    #[arg(long)]
    rare_signal: Option<f64>,
    #[arg(long)]
    rare_noise: Option<f64>,
    #[arg(long)]
    background_shift: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) => CliError::Usage(msg),
            Error::Numeric(_) | Error::UndefinedStatistics(_) | Error::Evaluation(_) => CliError::Numeric(msg),
            Error::Parse { .. } | Error::Io(_) | Error::Dimension { .. } | Error::Json(_) => CliError::Data(msg),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn load(path: &Path, dimension: Option<usize>, normalize: bool) -> Result<Dataset, CliError> {
    let ds: Dataset = read_libsvm_file(path, dimension).map_err(|e| match e {
        Error::Io(io) => io_error(path, io),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })?;
    Ok(if normalize { ds.normalized() } else { ds })
}

/// Runs `write` against the named file, or stdout when no path is given.
fn emit(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> adaoam::Result<()>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_error(p, e))?;
            let mut out = BufWriter::new(file);
            write(&mut out)?;
            out.flush().map_err(|e| io_error(p, e))?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out)?;
        }
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    if ds.is_empty() {
        return Err(CliError::Data(format!("{}: no instances", args.data.data.display())));
    }
    let model = train_single_pass(&ds, args.model.algorithm, args.model.params(), args.seed, &[], |_, _| {})?;
    let snap = ModelSnapshot::from_model(&model);
    emit(args.output.as_deref(), |out| snap.write_json(out))?;
    if let Some(p) = &args.output {
        let nonzero = snap.weights.len();
        println!(
            "trained {} on {} ({} rounds, {nonzero}/{} nonzero weights) -> {}",
            snap.algorithm,
            ds.name,
            snap.round,
            snap.dimension,
            p.display()
        );
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let file = File::open(&args.model).map_err(|e| io_error(&args.model, e))?;
    let snap = ModelSnapshot::read_json(io::BufReader::new(file))?;
    let ds = args.data.load()?;
    let scores: Vec<f64> = ds.instances().iter().map(|x| snap.score(&x.features)).collect();
    let auc = auc_score(&scores, &ds.labels())?;
    println!("{auc}");
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::from_file(&args.config).map_err(|e| match e {
        Error::Io(io) => io_error(&args.config, io),
        other => other.into(),
    })?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.folds {
        cfg.folds = f;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.record_timing |= args.timing;
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    let output = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Usage("no output path: pass --output or set `output` in the config".into()))?;
    cfg.validate()?;

    let report = adaoam::harness::run_benchmark(&cfg)?;
    report.write_files(&output)?;
    for cell in &report.cells {
        let failed = cell.runs.iter().filter(|r| !r.ok()).count();
        let verdict = match &cell.significance {
            None => "reference".to_string(),
            Some(t) => format!("t = {:.3}{}", t.t_stat, if t.significant { " *" } else { "" }),
        };
        println!(
            "{:<20} {:<13} auc {:.4} ± {:.4}  sparsity {:.3}  {verdict}{}",
            cell.dataset,
            cell.algorithm.name(),
            cell.mean_auc,
            cell.std_auc,
            cell.mean_sparsity,
            if failed > 0 { format!("  ({failed} failed runs)") } else { String::new() }
        );
    }
    println!("wrote {}", output.display());
    Ok(())
}

fn curve(args: &CurveArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let (train, test) = match &args.test {
        Some(p) => (ds, load(p, args.data.dimension, args.data.normalize)?),
        None => {
            let plan = adaoam::data::PartitionPlan::new(ds.len(), args.folds, 1, args.seed)?;
            (ds.subset(&plan.train_indices(0, 0)), ds.subset(&plan.test_indices(0, 0)))
        }
    };
    let dim = train.dimension().max(test.dimension());
    let train = train.with_dimension(dim)?;
    let test = test.with_dimension(dim)?;
    let seeds: Vec<u64> = (0..args.repeats as u64).map(|k| args.seed.wrapping_add(k)).collect();
    let curves = convergence_curve(
        &train,
        &test,
        args.model.algorithm,
        args.model.params(),
        &args.checkpoints,
        &seeds,
        args.timing,
    )?;
    emit(args.output.as_deref(), |out| curves.write_csv(out))
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let ds = args.data.load()?;
    let cfg = ExperimentConfig {
        folds: args.folds,
        repeats: args.repeats,
        seed: args.seed,
        jobs: args.jobs,
        delta: args.delta,
        // already normalized (or deliberately not) at load time
        normalize: false,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    let points = tradeoff_sweep(&ds, args.theta_grid.values(), args.eta, args.lambda, &cfg)?;
    emit(args.output.as_deref(), |out| write_tradeoff_csv(&points, out))
}

fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! override_fields {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    override_fields!(
        instances,
        dimension,
        positive_fraction,
        density,
        informative,
        rare_frequency,
        rare_signal,
        rare_noise,
        background_shift,
        seed
    );
    cfg.validate()?;
    let ds = generate(&cfg)?;
    emit(args.output.as_deref(), |out| ds.write_libsvm(out))?;
    if let Some(p) = &args.output {
        let (pos, neg) = ds.class_counts();
        println!("wrote {} instances ({pos} positive, {neg} negative) to {}", ds.len(), p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Curve(a) => curve(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("exiting with {e:?}");
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
