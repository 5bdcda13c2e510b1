use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};
use serde_json::json;

use pipefuse_core::engine::{run_with, EngineError, RunOptions, SimTrace};
use pipefuse_core::latency::LatencyTable;
use pipefuse_core::model::{ConfigAssignment, ExecutionMode, Scenario, ScenarioError};
use pipefuse_core::optimizer::{brute_force, optimizer_step, AccuracyModel, OptimizerError};
use pipefuse_core::predictor::{train, EncodingSpec, ModelFileError, PredictorHyper, PredictorModel};
use pipefuse_core::rng;
use pipefuse_core::sample::Sample;
use pipefuse_core::skip::{calibrate, gate_dataset, gate_train, GateHyper, GateModel};
use pipefuse_core::trace::{read_traces, report_csv, sweep_csv, sweep_rows, traces_to_string};
use pipefuse_core::workload::{
    gen_accuracy_surface, gen_samples, gen_scenario, predictor_dataset, random_assignment, sample_indicators,
    DifficultyMix, PRESETS,
};

#[derive(Parser)]
#[command(name = "pipefuse", version, about = "Virtual-time simulator for pipelined multimodal inference")]
struct Cli {
    /// Repeat for more log output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more samples and write their traces.
    Run(RunArgs),
    /// Pick an assignment for one sample with a trained predictor.
    Optimize(OptimizeArgs),
    /// Latency and predicted accuracy of every assignment.
    Sweep(SweepArgs),
    /// Write the latency lookup table for every resource level.
    Profile(ProfileArgs),
    /// Fit the accuracy predictor on noisy samples of the scenario's accuracy surface.
    TrainPredictor(TrainPredictorArgs),
    /// Fit and calibrate the skip gate on simulated windows.
    TrainGate(TrainGateArgs),
    /// Latency breakdown of a trace file as CSV.
    Report(ReportArgs),
    /// Write a preset scenario file.
    GenScenario(GenScenarioArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file, or `preset:<name>`.
    #[arg(long)]
    scenario: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Blocking,
    #[value(name = "non_blocking", alias = "non-blocking")]
    NonBlocking,
    Pipelined,
}

impl From<Mode> for ExecutionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Blocking => ExecutionMode::Blocking,
            Mode::NonBlocking => ExecutionMode::NonBlocking,
            Mode::Pipelined => ExecutionMode::Pipelined,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mix {
    Easy,
    Medium,
    Hard,
    Even,
}

impl From<Mix> for DifficultyMix {
    fn from(m: Mix) -> Self {
        match m {
            Mix::Easy => DifficultyMix::EASY,
            Mix::Medium => DifficultyMix { easy: 0.0, medium: 1.0, hard: 0.0 },
            Mix::Hard => DifficultyMix::HARD,
            Mix::Even => DifficultyMix::EVEN,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = Mix::Even)]
    mix: Mix,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Gate model file. Without one, skipping is disabled.
    #[arg(long)]
    gate: Option<PathBuf>,
    /// Choose each sample's assignment with the optimizer.
    #[arg(long, conflicts_with = "assignment")]
    optimize: bool,
    /// Predictor used by --optimize; defaults to the scenario's accuracy surface.
    #[arg(long, requires = "optimize")]
    predictor: Option<PathBuf>,
    /// Fixed assignment such as `s1m2/s0m0`; defaults to all-minimal.
    #[arg(long)]
    assignment: Option<ConfigAssignment>,
    /// Latency budget override in milliseconds.
    #[arg(long)]
    t_max: Option<f64>,
    #[command(flatten)]
    samples: SampleArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    predictor: PathBuf,
    /// Also run brute force and report the gap.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    t_max: Option<f64>,
    #[command(flatten)]
    samples: SampleArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Full,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, value_enum)]
    grid: Grid,
    /// Predictor to score with; defaults to the scenario's accuracy surface.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Consistency indicator to score at, in [-1, 1]; defaults to that of sample 0.
    #[arg(long)]
    consistency: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainPredictorArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 2000)]
    examples: usize,
    /// Label noise standard deviation, in accuracy points.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainGateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = Mix::Even)]
    mix: Mix,
    /// Assignments to build windows from; repeatable. Defaults to all of
    /// them when there are at most 16, else 16 seeded random picks.
    #[arg(long)]
    assignment: Vec<ConfigAssignment>,
    /// Calibrate so this share of training windows commits a skip.
    #[arg(long)]
    target_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenScenarioArgs {
    /// Preset name, or `scaling-<L>` for L in 2..=8.
    #[arg(long)]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self { code: 1, kind: "usage", message: message.to_string() }
    }

    fn validation(kind: &'static str, message: impl Display) -> Self {
        Self { code: 2, kind, message: message.to_string() }
    }

    fn runtime(kind: &'static str, message: impl Display) -> Self {
        Self { code: 3, kind, message: message.to_string() }
    }
}

impl From<ModelFileError> for Failure {
    fn from(e: ModelFileError) -> Self {
        Failure::validation("model_file", e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Assignment(_) | EngineError::Gate(_) => Failure::validation("engine_input", e),
            _ => Failure::runtime("engine", e),
        }
    }
}

impl From<OptimizerError> for Failure {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::NoFeasibleAssignment { .. } => Failure::runtime("no_feasible_assignment", e),
            OptimizerError::EncodingMismatch => Failure::validation("encoding_mismatch", e),
            OptimizerError::Latency(_) => Failure::runtime("latency", e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::validation("input", format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::runtime("output", format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(arg: &ScenarioArg, t_max_ms: Option<f64>) -> Result<Scenario, Failure> {
    let mut s = match arg.scenario.strip_prefix("preset:") {
        Some(name) => gen_scenario(name, 0).map_err(|e| Failure::validation("scenario", e))?,
        None => Scenario::from_toml(&read_input(Path::new(&arg.scenario))?).map_err(|e| match e {
            ScenarioError::Invalid(r) => Failure::validation("scenario_invalid", r),
            other => Failure::validation("scenario", other),
        })?,
    };
    if let Some(ms) = t_max_ms {
        if !(ms.is_finite() && ms > 0.0) {
            return Err(Failure::usage(format!("--t-max must be a positive number of milliseconds, got {ms}")));
        }
        s.t_max_us = (ms * 1000.0).round() as u64;
    }
    Ok(s)
}

fn load_predictor(path: &Path) -> Result<PredictorModel, Failure> {
    Ok(PredictorModel::from_json(&read_input(path)?)?)
}

fn check_encoding(scenario: &Scenario, model: &PredictorModel) -> Outcome {
    if model.encoding != EncodingSpec::for_scenario(scenario) {
        return Err(OptimizerError::EncodingMismatch.into());
    }
    Ok(())
}

fn samples(scenario: &Scenario, args: &SampleArgs) -> Result<Vec<Sample>, Failure> {
    if args.samples == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    Ok(gen_samples(scenario, args.samples, args.mix.into(), args.seed))
}

fn cmd_run(args: RunArgs) -> Outcome {
    let mut scenario = load_scenario(&args.scenario, args.t_max)?.with_mode(args.mode.into());
    let gate = match &args.gate {
        Some(p) => Some(GateModel::from_json(&read_input(p)?)?),
        None => None,
    };
    if gate.is_none() && !scenario.skip_checkpoints.is_empty() {
        info!("no gate given; skipping disabled");
        scenario = scenario.without_skipping();
    }
    let fixed = args.assignment.clone().unwrap_or_else(|| ConfigAssignment::minimal(scenario.modality_count()));
    let model: Box<dyn AccuracyModel> = match &args.predictor {
        Some(p) => {
            let m = load_predictor(p)?;
            check_encoding(&scenario, &m)?;
            Box::new(m)
        }
        None => Box::new(gen_accuracy_surface(&scenario, scenario.accuracy_surface_seed)),
    };
    let mut traces: Vec<SimTrace> = Vec::new();
    for sample in samples(&scenario, &args.samples)? {
        let options = RunOptions { gate: gate.as_ref().map(|g| g as _), config_switch: None };
        let trace = if args.optimize {
            let d = optimizer_step(&sample, &scenario, model.as_ref())?;
            eprintln!(
                "{}",
                json!({ "sample": sample.id, "assignment": d.assignment.to_string(), "decision_latency_ms": d.decision_latency.as_secs_f64() * 1e3 })
            );
            run_with(&scenario, &d.assignment, &sample, RunOptions { config_switch: Some(scenario.probe_cost_us), ..options })?
        } else {
            run_with(&scenario, &fixed, &sample, options)?
        };
        traces.push(trace);
    }
    write_output(Some(&args.out), &traces_to_string(&traces))
}

fn cmd_optimize(args: OptimizeArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario, args.t_max)?;
    let model = load_predictor(&args.predictor)?;
    check_encoding(&scenario, &model)?;
    for sample in samples(&scenario, &args.samples)? {
        let d = optimizer_step(&sample, &scenario, &model)?;
        let mut line = json!({
            "sample": sample.id,
            "assignment": d.assignment.to_string(),
            "score": d.score,
            "consistency": d.indicators.consistency,
        });
        if args.oracle {
            let b = brute_force(&scenario, &d.indicators, &model, scenario.resource_at(0))?;
            let gap = if b.best_score > 0.0 { (b.best_score - d.score) / b.best_score } else { 0.0 };
            line["oracle"] = json!({ "assignment": b.best.to_string(), "score": b.best_score, "relative_gap": gap });
        }
        println!("{line}");
        eprintln!("{}", json!({ "sample": sample.id, "decision_latency_ms": d.decision_latency.as_secs_f64() * 1e3 }));
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Outcome {
    let Grid::Full = args.grid;
    let scenario = load_scenario(&args.scenario, args.t_max)?;
    let ind = match args.consistency {
        Some(c) if (-1.0..=1.0).contains(&c) => pipefuse_core::predictor::ModalityIndicators::from_consistency(c),
        Some(c) => return Err(Failure::usage(format!("--consistency must be in [-1, 1], got {c}"))),
        None => {
            let sample = &gen_samples(&scenario, 1, DifficultyMix::EVEN, args.seed)[0];
            sample_indicators(&scenario, &pipefuse_core::sample::World::for_scenario(&scenario), sample)
        }
    };
    let resource = scenario.resource_at(0);
    let rows = match &args.predictor {
        Some(p) => {
            let m = load_predictor(p)?;
            check_encoding(&scenario, &m)?;
            sweep_rows(&scenario, &ind, &m, resource)
        }
        None => sweep_rows(&scenario, &ind, &gen_accuracy_surface(&scenario, scenario.accuracy_surface_seed), resource),
    }
    .map_err(|e| Failure::runtime("latency", e))?;
    write_output(Some(&args.out), &sweep_csv(&rows))
}

fn cmd_profile(args: ProfileArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario, None)?;
    let tables = (0..scenario.profile.resource_levels.len())
        .map(|r| LatencyTable::build(&scenario, pipefuse_core::model::ResourceLevel(r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::runtime("latency", e))?;
    let doc = json!({
        "schema": "pipefuse-profile/1",
        "fingerprint": scenario.fingerprint(),
        "resource_levels": scenario.profile.resource_levels,
        "tables": tables,
    });
    write_output(Some(&args.out), &format!("{}\n", serde_json::to_string_pretty(&doc).expect("json value")))
}

fn cmd_train_predictor(args: TrainPredictorArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario, None)?;
    if args.examples == 0 || !(args.noise.is_finite() && args.noise >= 0.0) {
        return Err(Failure::usage("--examples must be positive and --noise non-negative"));
    }
    let surface = gen_accuracy_surface(&scenario, scenario.accuracy_surface_seed);
    let data = predictor_dataset(&scenario, &surface, args.examples, args.noise, args.seed);
    let mut hyper = PredictorHyper { seed: args.seed, ..PredictorHyper::default() };
    hyper.epochs = args.epochs.unwrap_or(hyper.epochs);
    hyper.learning_rate = args.learning_rate.unwrap_or(hyper.learning_rate);
    let model = train(&data, &EncodingSpec::for_scenario(&scenario), &hyper).map_err(|e| Failure::runtime("training", e))?;
    println!("{}", serde_json::to_string(&model.meta).expect("json value"));
    write_output(Some(&args.out), &model.to_json())
}

fn cmd_train_gate(args: TrainGateArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario, None)?;
    if scenario.skip_checkpoints.is_empty() {
        return Err(Failure::validation("scenario", "scenario has no skip checkpoints"));
    }
    let samples = samples(&scenario, &SampleArgs { seed: args.seed, samples: args.samples, mix: args.mix })?;
    let assignments = if !args.assignment.is_empty() {
        args.assignment.clone()
    } else if scenario.assignment_count() <= 16 {
        ConfigAssignment::enumerate(&scenario)
    } else {
        let mut r = rng::stream(args.seed, "cli/gate-assignments", 0);
        (0..16).map(|_| random_assignment(&scenario, &mut r)).collect()
    };
    for a in &assignments {
        a.check(&scenario).map_err(|e| Failure::validation("assignment", e))?;
    }
    let data = gate_dataset(&scenario, &samples, &assignments)?;
    let mut hyper = GateHyper { seed: args.seed, ..GateHyper::default() };
    hyper.epochs = args.epochs.unwrap_or(hyper.epochs);
    hyper.learning_rate = args.learning_rate.unwrap_or(hyper.learning_rate);
    hyper.dropout = args.dropout.unwrap_or(hyper.dropout);
    let mut model = gate_train(&data, &hyper).map_err(|e| Failure::runtime("training", e))?;
    let mut report = json!({ "examples": data.len(), "meta": model.meta });
    if let Some(target) = args.target_rate {
        if !(0.0..=1.0).contains(&target) {
            return Err(Failure::usage(format!("--target-rate must be in [0, 1], got {target}")));
        }
        let rate = calibrate(&mut model, &data, target, scenario.tau).map_err(|e| Failure::runtime("calibration", e))?;
        report["skip_rate"] = json!(rate);
    }
    println!("{report}");
    write_output(Some(&args.out), &model.to_json())
}

fn cmd_report(args: ReportArgs) -> Outcome {
    let traces = read_traces(&read_input(&args.trace)?).map_err(|e| Failure::validation("trace", e))?;
    let csv = report_csv(&traces).map_err(|e| Failure::validation("trace", e))?;
    write_output(args.out.as_deref(), &csv)
}

fn cmd_gen_scenario(args: GenScenarioArgs) -> Outcome {
    let scenario = gen_scenario(&args.preset, args.seed)
        .map_err(|e| Failure::usage(format!("{e}; presets are {} and scaling-2..scaling-8", PRESETS.join(", "))))?;
    write_output(args.out.as_deref(), &scenario.to_toml())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e.render());
            let f = Failure::usage(e.kind());
            eprintln!("{}", json!({ "error": f.kind, "exit": f.code, "message": f.message }));
            return ExitCode::from(f.code);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Profile(a) => cmd_profile(a),
        Command::TrainPredictor(a) => cmd_train_predictor(a),
        Command::TrainGate(a) => cmd_train_gate(a),
        Command::Report(a) => cmd_report(a),
        Command::GenScenario(a) => cmd_gen_scenario(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "exit": f.code, "message": f.message }));
            ExitCode::from(f.code)
        }
    }
}
