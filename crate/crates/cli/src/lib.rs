//! Batch front-end for the inference pipeline: reorder, plan, analyze,
//! run, bench. All reports are line-oriented structured text with a
//! stable field order. Exit status: 0 success, 1 internal error, 2 bad
//! input.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use mapconv_core::analyzer::{format_report, select_modes, AnalyzerConfig};
use mapconv_core::dataset::{read_dataset, read_tensor, write_tensor};
use mapconv_core::engine::{
    build_execution_plan, check_plan, run_network, ArithmeticMode, ExecutionPlan, ModeSpec,
    PlanConfig,
};
use mapconv_core::layout::{
    parse_reordered_parameters, reorder_weights, write_reordered_parameters, CPPR_MAGIC,
};
use mapconv_core::model::{
    parse_model_parameters, parse_network_description, NetworkModel, ParameterSet, CPPO_MAGIC,
};
use mapconv_core::stats::{speedup, trimmed_mean};

mod error;
pub use error::CliError;

#[derive(Parser)]
#[command(name = "mapconv", about = "CNN inference with map-major layouts and inexact arithmetic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Statically reorder model parameters for a vector width (CPPO -> CPPR).
    Reorder(ReorderArgs),
    /// Build an execution plan from an explicit mode configuration.
    Plan(PlanArgs),
    /// Select per-layer arithmetic modes against a labeled dataset.
    Analyze(AnalyzeArgs),
    /// Execute a network under a plan on one input tensor.
    Run(RunArgs),
    /// Time one or more plans and report trimmed-mean speedups.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ReorderArgs {
    /// Network description file.
    #[arg(long)]
    net: PathBuf,
    /// CPPO parameter file.
    #[arg(long)]
    model: PathBuf,
    /// Vector width (power of two, <= 16).
    #[arg(long, default_value_t = 4)]
    u: usize,
    /// Output CPPR file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    net: PathBuf,
    /// Global arithmetic mode: precise|relaxed|imprecise.
    #[arg(long, default_value = "imprecise")]
    mode: String,
    /// Comma-separated per-layer modes; overrides --mode when given.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long, default_value_t = 4)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// CPPD validation dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Acceptable accuracy degradation, as a fraction in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long, default_value_t = 4)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output plan file.
    #[arg(long)]
    out: PathBuf,
    /// Optional report file; the report always goes to stdout too.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    net: PathBuf,
    /// CPPO or CPPR parameter file (detected by magic).
    #[arg(long)]
    model: PathBuf,
    /// Execution plan file.
    #[arg(long)]
    plan: PathBuf,
    /// Input tensor (single-record CPPD).
    #[arg(long)]
    input: PathBuf,
    /// Output tensor file (single-record CPPD).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Plan files; the first is the baseline.
    #[arg(required = true)]
    plans: Vec<PathBuf>,
    /// Timed repetitions per plan (a warmup run is discarded first).
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Input tensor file; a deterministic synthetic input is used if omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Optional report file; the report always goes to stdout too.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run() {
    let code = match Cli::parse().command {
        Command::Reorder(args) => dispatch(cmd_reorder(&args)),
        Command::Plan(args) => dispatch(cmd_plan(&args)),
        Command::Analyze(args) => dispatch(cmd_analyze(&args)),
        Command::Run(args) => dispatch(cmd_run(&args)),
        Command::Bench(args) => dispatch(cmd_bench(&args)),
    };
    std::process::exit(code);
}

fn dispatch(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::bad_input(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::bad_input(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<NetworkModel, CliError> {
    parse_network_description(&read_text(path)?)
        .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))
}

/// Load a parameter file, accepting CPPO or CPPR by magic.
fn load_params(path: &Path, model: &NetworkModel) -> Result<ParameterSet, CliError> {
    let bytes = read_file(path)?;
    if bytes.starts_with(CPPO_MAGIC) {
        parse_model_parameters(&bytes[..], model)
            .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))
    } else if bytes.starts_with(CPPR_MAGIC) {
        parse_reordered_parameters(&bytes[..], model)
            .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))
    } else {
        Err(CliError::bad_input(format!(
            "{}: not a CPPO or CPPR file",
            path.display()
        )))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

fn cmd_reorder(args: &ReorderArgs) -> Result<(), CliError> {
    let model = load_model(&args.net)?;
    let params = load_params(&args.model, &model)?;
    let reordered = reorder_weights(&model, &params, args.u)
        .map_err(|e| CliError::bad_input(e.to_string()))?;
    let mut out = Vec::new();
    write_reordered_parameters(&mut out, &reordered)
        .map_err(|e| CliError::internal(e.to_string()))?;
    write_file(&args.out, &out)
}

fn parse_mode(s: &str) -> Result<ArithmeticMode, CliError> {
    s.parse().map_err(|_| {
        CliError::bad_input(format!(
            "unknown mode `{s}`, expected precise|relaxed|imprecise"
        ))
    })
}

fn cmd_plan(args: &PlanArgs) -> Result<(), CliError> {
    let model = load_model(&args.net)?;
    let modes = match &args.modes {
        Some(list) => {
            let modes: Result<Vec<_>, _> = list.split(',').map(parse_mode).collect();
            ModeSpec::PerLayer(modes?)
        }
        None => ModeSpec::Global(parse_mode(&args.mode)?),
    };
    let plan = build_execution_plan(
        &model,
        &PlanConfig {
            u: args.u,
            workers: args.workers,
            modes,
        },
    )
    .map_err(|e| CliError::bad_input(e.to_string()))?;
    write_file(&args.out, plan.to_string().as_bytes())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let model = load_model(&args.net)?;
    let params = load_params(&args.model, &model)?;
    let dataset = read_dataset(&read_file(&args.dataset)?[..])
        .map_err(|e| CliError::bad_input(format!("{}: {e}", args.dataset.display())))?;
    let config = AnalyzerConfig {
        u: args.u,
        workers: args.workers,
    };
    let assignment = select_modes(&model, &params, &dataset, args.tolerance, &config)
        .map_err(|e| CliError::bad_input(e.to_string()))?;
    let report = format_report(&model, &assignment);
    print!("{report}");
    if let Some(path) = &args.report {
        write_file(path, report.as_bytes())?;
    }
    let plan = build_execution_plan(
        &model,
        &PlanConfig {
            u: args.u,
            workers: args.workers,
            modes: ModeSpec::PerLayer(assignment.modes.clone()),
        },
    )
    .map_err(|e| CliError::internal(e.to_string()))?;
    write_file(&args.out, plan.to_string().as_bytes())
}

fn load_plan(path: &Path, model: &NetworkModel) -> Result<ExecutionPlan, CliError> {
    let plan: ExecutionPlan = read_text(path)?
        .parse()
        .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))?;
    check_plan(&plan, model).map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))?;
    Ok(plan)
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let model = load_model(&args.net)?;
    let params = load_params(&args.model, &model)?;
    let plan = load_plan(&args.plan, &model)?;
    let input = read_tensor(&read_file(&args.input)?[..])
        .map_err(|e| CliError::bad_input(format!("{}: {e}", args.input.display())))?;
    let result = run_network(&plan, &model, &params, &input)
        .map_err(|e| CliError::bad_input(e.to_string()))?;
    for t in &result.timings {
        println!("timing {} {:.3}", t.layer, t.millis);
    }
    println!("total {:.3}", result.total_millis);
    let mut out = Vec::new();
    write_tensor(&mut out, &result.output).map_err(|e| CliError::internal(e.to_string()))?;
    write_file(&args.out, &out)
}

fn synthetic_input(model: &NetworkModel) -> mapconv_core::Tensor {
    let shape = model.input_shape();
    // Deterministic, denormal-free values in [-1, 1).
    let data = (0..shape.elements())
        .map(|i| ((i as f32 * 0.61803) % 2.0) - 1.0)
        .collect();
    mapconv_core::Tensor::row_major(shape, data).expect("length matches")
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.runs < 3 {
        return Err(CliError::bad_input(format!(
            "--runs must be >= 3, got {}",
            args.runs
        )));
    }
    let model = load_model(&args.net)?;
    let params = load_params(&args.model, &model)?;
    let input = match &args.input {
        Some(path) => read_tensor(&read_file(path)?[..])
            .map_err(|e| CliError::bad_input(format!("{}: {e}", path.display())))?,
        None => synthetic_input(&model),
    };

    let mut report = String::new();
    report.push_str("bench v1\n");
    report.push_str(&format!("runs {}\n", args.runs));
    let mut baseline = None;
    for path in &args.plans {
        let plan = load_plan(path, &model)?;
        // One discarded warmup reaches steady state before measuring.
        run_network(&plan, &model, &params, &input)
            .map_err(|e| CliError::bad_input(e.to_string()))?;
        let mut durations = Vec::with_capacity(args.runs);
        for _ in 0..args.runs {
            let result = run_network(&plan, &model, &params, &input)
                .map_err(|e| CliError::bad_input(e.to_string()))?;
            durations.push(result.total_millis);
        }
        let mean = trimmed_mean(&durations).map_err(|e| CliError::internal(e.to_string()))?;
        let ratio = speedup(*baseline.get_or_insert(mean), mean);
        report.push_str(&format!(
            "plan {} trimmed_mean_ms {:.4} speedup {:.3}\n",
            path.display(),
            mean,
            ratio
        ));
        report.push_str(&format!(
            "raw {} {}\n",
            path.display(),
            durations
                .iter()
                .map(|d| format!("{d:.4}"))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    print!("{report}");
    if let Some(path) = &args.out {
        write_file(path, report.as_bytes())?;
    }
    Ok(())
}
