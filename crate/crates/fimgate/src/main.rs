use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fimgate::checkpoint;
use fimgate::fimgate_core::datagen::{build_lagged, SimConfig, SystemId};
use fimgate::fimgate_core::trainer::{evaluate, train, LrSchedule, Method, X0Mode};
use fimgate::harness::{
    self, emit_report, ExperimentSpec, InputRange, ReportFormat, RunResult, SuiteStatus,
};
use fimgate::io;
use fimgate::surrogate::PhSurrogate;
use fimgate::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fimgate", version, about = "Input-relevance gating for NARX identification")]
struct Cli {
    /// TOML file with experiment settings; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system and write its series as CSV.
    Generate(GenerateArgs),
    /// Run every (system, method, seed) combination and write reports.
    Bench(BenchArgs),
    /// Train a single model on one simulated system and save it.
    Train(TrainArgs),
    /// Train on an external `u`/`y` series.
    Ingest(IngestArgs),
    /// Rebuild reports from stored per-run results.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Surrogate {
    Ph,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, required_unless_present = "surrogate")]
    system: Option<SystemId>,
    #[arg(long, value_enum, conflicts_with = "system")]
    surrogate: Option<Surrogate>,
    #[arg(long, default_value_t = 6010)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// `benchmark`, `stable` or `LOW:HIGH`.
    #[arg(long, default_value = "stable", value_parser = parse_range)]
    range: InputRange,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the lagged regressor matrix here.
    #[arg(long)]
    lagged: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    lag: usize,
}

/// Overrides for [`ExperimentSpec`]; unset flags keep the file or default value.
#[derive(Args, Default)]
struct SpecArgs {
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<SystemId>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    lag: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_parser = parse_range)]
    range: Option<InputRange>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Default, Clone)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda_v: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gate_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long, value_enum)]
    x0: Option<X0Arg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    Cosine,
}

#[derive(Clone, Copy, ValueEnum)]
enum X0Arg {
    TrainMean,
    Zero,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<FormatArg>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    system: SystemId,
    #[arg(long, default_value = "decision_unit")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "u")]
    input_column: String,
    #[arg(long, default_value = "y")]
    output_column: String,
    #[arg(long, default_value_t = 5)]
    na: usize,
    #[arg(long, default_value_t = 5)]
    nb: usize,
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value = "decision_unit")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct ReportArgs {
    /// `runs.json` written by `bench`.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<FormatArg>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn formats(f: &[FormatArg]) -> Vec<ReportFormat> {
    f.iter()
        .map(|f| match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        })
        .collect()
}

fn parse_range(s: &str) -> std::result::Result<InputRange, String> {
    match s {
        "benchmark" => Ok(InputRange::Benchmark),
        "stable" => Ok(InputRange::Stable),
        _ => {
            let (lo, hi) = s
                .split_once(':')
                .ok_or_else(|| format!("expected `benchmark`, `stable` or LOW:HIGH, got `{s}`"))?;
            let low = lo.trim().parse().map_err(|_| format!("bad bound `{lo}`"))?;
            let high = hi.trim().parse().map_err(|_| format!("bad bound `{hi}`"))?;
            Ok(InputRange::Fixed { low, high })
        }
    }
}

fn base_spec(config: Option<&Path>) -> Result<ExperimentSpec> {
    match config {
        Some(p) => ExperimentSpec::from_toml_file(p),
        None => Ok(ExperimentSpec::default()),
    }
}

impl TrainFlags {
    fn apply(&self, spec: &mut ExperimentSpec) {
        let t = &mut spec.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.lambda_v {
            t.lambda_v = v;
        }
        if let Some(v) = self.lr {
            t.lr = v;
        }
        if let Some(v) = self.gate_lr {
            t.gate_lr = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = &self.hidden {
            t.hidden = v.clone();
        }
        if let Some(v) = self.schedule {
            t.schedule = match v {
                ScheduleArg::Constant => LrSchedule::Constant,
                ScheduleArg::Cosine => LrSchedule::Cosine,
            };
        }
        if let Some(v) = self.x0 {
            t.x0_mode = match v {
                X0Arg::TrainMean => X0Mode::TrainMean,
                X0Arg::Zero => X0Mode::Zero,
            };
        }
    }
}

impl SpecArgs {
    fn resolve(&self, config: Option<&Path>) -> Result<ExperimentSpec> {
        let mut spec = base_spec(config)?;
        if let Some(v) = &self.systems {
            spec.systems = v.clone();
        }
        if let Some(v) = &self.methods {
            spec.methods = v.clone();
        }
        if let Some(v) = self.seeds {
            spec.n_seeds = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.n_train {
            spec.n_train = v;
        }
        if let Some(v) = self.n_test {
            spec.n_test = v;
        }
        if let Some(v) = self.lag {
            spec.lag = v;
        }
        if let Some(v) = self.noise {
            spec.noise_std = v;
        }
        if let Some(v) = self.range {
            spec.input_range = v;
        }
        if let Some(v) = self.threshold {
            spec.threshold = v;
        }
        if let Some(v) = &self.out {
            spec.output_dir = v.clone();
        }
        self.train.apply(&mut spec);
        spec.validate()?;
        Ok(spec)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<ExitCode> {
    let pair = match (args.system, args.surrogate) {
        (_, Some(Surrogate::Ph)) => PhSurrogate {
            n_samples: args.samples,
            noise_std: args.noise,
            seed: args.seed,
            ..PhSurrogate::default()
        }
        .run()?,
        (Some(system), None) => {
            let mut sim = SimConfig::new(system, args.samples, args.seed);
            sim.noise_std = args.noise;
            let sim = match args.range {
                InputRange::Benchmark => sim,
                InputRange::Stable => sim.with_stable_range(),
                InputRange::Fixed { low, high } => sim.with_input_range(low, high),
            };
            sim.run()?
        }
        (None, None) => return Err(Error::Config("either --system or --surrogate is required".into())),
    };
    io::write_series(&args.out, &pair)?;
    if let Some(path) = &args.lagged {
        io::write_lagged(path, &build_lagged(&pair, args.lag)?)?;
    }
    eprintln!("wrote {} samples to {}", pair.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &BenchArgs, config: Option<&Path>) -> Result<ExitCode> {
    let spec = args.spec.resolve(config)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let suite = harness::run_suite(&spec)?;
    harness::save_runs(&spec.output_dir.join("runs.json"), &suite)?;
    for f in &suite.failures {
        eprintln!(
            "run failed: {} {} replicate {}: {}",
            f.system, f.method, f.replicate, f.message
        );
    }
    if !suite.aggregate.cells.is_empty() {
        emit_report(&suite.aggregate, &spec.output_dir, &formats(&args.format))?;
    }
    for c in &suite.aggregate.cells {
        println!(
            "{:<4} {:<14} seeds={:<3} mse={:.6} l1={:.3} f1={:.3}",
            c.system.to_string(),
            c.method.to_string(),
            c.seeds,
            c.mse_mean,
            c.l1_mean,
            c.f1
        );
    }
    Ok(match suite.status(&spec) {
        SuiteStatus::Complete => ExitCode::SUCCESS,
        SuiteStatus::Partial | SuiteStatus::CellFailed => ExitCode::from(1),
    })
}

fn save_model_artifacts(
    dir: &Path,
    model: &fimgate::fimgate_core::trainer::FittedModel,
    labels: &[fimgate::fimgate_core::datagen::LagLabel],
) -> Result<()> {
    checkpoint::save(&dir.join("checkpoint.json"), model)?;
    io::write_scores(&dir.join("scores.csv"), labels, &model.alpha)?;
    io::write_history(&dir.join("history.csv"), &model.history)?;
    io::write_correlation(&dir.join("correlation.csv"), &model.correlation, labels)
}

fn train_cmd(args: &TrainArgs, config: Option<&Path>) -> Result<ExitCode> {
    let mut spec = args.spec.resolve(config)?;
    spec.systems = vec![args.system];
    spec.methods = vec![args.method];
    let (result, model) = harness::run_one(&spec, args.system, args.method, args.replicate)?;
    let (train_set, _) = harness::prepare_data(&spec, args.system, args.replicate)?;
    save_model_artifacts(&spec.output_dir, &model, &train_set.labels)?;
    print_json::<RunResult>(&result)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IngestSummary {
    train_rows: usize,
    test_rows: usize,
    test_mse: f64,
    l1: f64,
    scores: Vec<(String, f64)>,
}

fn ingest(args: &IngestArgs, config: Option<&Path>) -> Result<ExitCode> {
    let mut spec = base_spec(config)?;
    args.train.apply(&mut spec);
    let data = harness::ingest_csv(
        &args.input,
        &args.input_column,
        &args.output_column,
        args.na,
        args.nb,
        args.split,
    )?;
    let cfg = fimgate::fimgate_core::trainer::TrainConfig {
        method: args.method,
        seed: args.seed,
        ..spec.train
    };
    let model = train(&data.train, &cfg)?;
    let test_mse = evaluate(&model, &data.test)?;
    save_model_artifacts(&args.out, &model, &data.train.labels)?;
    print_json(&IngestSummary {
        train_rows: data.train.n_rows(),
        test_rows: data.test.n_rows(),
        test_mse,
        l1: model.alpha.as_slice().iter().sum(),
        scores: data
            .train
            .labels
            .iter()
            .map(ToString::to_string)
            .zip(model.alpha.as_slice().iter().copied())
            .collect(),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn report(args: &ReportArgs) -> Result<ExitCode> {
    let suite = harness::load_runs(&args.runs)?;
    let agg = harness::aggregate(&suite.runs);
    for p in emit_report(&agg, &args.out, &formats(&args.format))? {
        eprintln!("wrote {}", p.display());
    }
    Ok(if suite.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench(a, config),
        Command::Train(a) => train_cmd(a, config),
        Command::Ingest(a) => ingest(a, config),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
