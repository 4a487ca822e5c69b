use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sopa_core::bpmn::{self, parse_model_with_annotations, ProcessModel};
use sopa_core::costing::{analyze, CostFunction, CostReport};
use sopa_core::oracle::expectation;
use sopa_core::report::{
    activity_chart, compare_many, instance_average_chart, render_comparison, render_report, Format,
    RenderOptions,
};
use sopa_core::simulator::{self, simulate, SimulationSettings, VariantMode};
use sopa_core::variant_config::{parse_variant_config_with, ConfigOptions, CostVariantConfig};
use sopa_core::xes::{parse_xes, write_xes, Strictness};
use sopa_core::Rounding;

/// Environmental cost analysis of business processes.
#[derive(Debug, Parser)]
#[command(name = "sopa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a BPMN model into an XES event log.
    Simulate(SimulateArgs),
    /// Compute activity and process instance costs of an event log.
    Analyze(AnalyzeArgs),
    /// Compare a baseline report with one or more candidate reports.
    Compare(CompareArgs),
    /// Predict expected costs from the model without simulating.
    Expect(ExpectArgs),
    /// Check a model against a cost variant config.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// BPMN 2.0 process model.
    #[arg(long)]
    model: PathBuf,
    /// Sidecar file with cost driver annotations and branch probabilities.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Cost variant configuration.
    #[arg(long)]
    variants: PathBuf,
    /// Renormalize variant frequencies that miss 1 by at most 1e-9.
    #[arg(long)]
    tolerant_frequencies: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: ModelArgs,
    /// Number of process instances [default: the config's count].
    #[arg(long)]
    instances: Option<u64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Assign variants by largest-remainder quotas instead of sampling.
    #[arg(long)]
    exact_variant_quotas: bool,
    /// Visits allowed per node and trace before a loop counts as runaway.
    #[arg(long, default_value_t = bpmn::DEFAULT_MAX_ITERATIONS)]
    max_iterations: u64,
    /// Timestamp of the first event of every trace (RFC 3339).
    #[arg(long, default_value = simulator::DEFAULT_BASE_TIMESTAMP)]
    start_time: String,
    /// Output XES file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// XES event log.
    #[arg(long)]
    log: PathBuf,
    /// Cost variant configuration; without it only inline cost:value
    /// attributes are used.
    #[arg(long)]
    variants: Option<PathBuf>,
    /// Skip unresolvable drivers and variants with a warning.
    #[arg(long)]
    lenient: bool,
    /// Scenario label [default: the log's file stem].
    #[arg(long)]
    scenario: Option<String>,
    /// JSON report; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a CSV table, one row per activity.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Significant digits of costs in the CSV.
    #[arg(long, default_value_t = 3)]
    precision: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Chart {
    /// Grouped bars of average activity costs.
    Activities,
    /// One bar per scenario with its average process instance cost.
    Instances,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Baseline report (JSON written by `analyze`).
    baseline: PathBuf,
    /// Candidate reports.
    #[arg(required = true)]
    candidates: Vec<PathBuf>,
    /// Output file; the format follows the extension (md, json, csv, svg).
    /// Markdown on stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fractional digits of percentages.
    #[arg(long, default_value_t = 2)]
    percent_decimals: u32,
    /// Rounding of displayed numbers: toward-zero or half-even.
    #[arg(long, default_value = "toward-zero")]
    rounding: Rounding,
    /// Chart drawn for SVG output.
    #[arg(long, value_enum, default_value_t = Chart::Activities)]
    chart: Chart,
}

#[derive(Debug, Args)]
struct ExpectArgs {
    #[command(flatten)]
    inputs: ModelArgs,
    #[arg(long)]
    scenario: Option<String>,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: ModelArgs,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
            }
            fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn load_config(path: &Path, tolerant: bool) -> Result<CostVariantConfig> {
    let options = ConfigOptions {
        tolerant_frequencies: tolerant,
    };
    parse_variant_config_with(&read(path)?, options).with_context(|| path.display().to_string())
}

fn load_model(args: &ModelArgs) -> Result<ProcessModel> {
    let bytes = read(&args.model)?;
    let sidecar = args.annotations.as_deref().map(read).transpose()?;
    parse_model_with_annotations(&bytes, sidecar.as_deref()).with_context(|| {
        match &args.annotations {
            Some(a) => format!("{} with {}", args.model.display(), a.display()),
            None => args.model.display().to_string(),
        }
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let model = load_model(&args.inputs)?;
    let config = load_config(&args.inputs.variants, args.inputs.tolerant_frequencies)?;
    let mut settings = SimulationSettings::new(args.instances.unwrap_or(config.count), args.seed);
    if args.exact_variant_quotas {
        settings.variant_mode = VariantMode::ExactQuota;
    }
    settings.max_iterations = args.max_iterations;
    settings.base_timestamp = chrono::DateTime::parse_from_rfc3339(&args.start_time)
        .with_context(|| format!("--start-time `{}`", args.start_time))?;
    settings.threads = simulator::threads_from_env();
    let log = simulate(&model, &config, &settings)?;
    emit(args.out.as_deref(), &write_xes(&log))
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let strictness = if args.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    let parsed = parse_xes(&read(&args.log)?, strictness)
        .with_context(|| args.log.display().to_string())?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", args.log.display());
    }
    let config = args
        .variants
        .as_deref()
        .map(|p| load_config(p, false))
        .transpose()?;
    let mut costs = match &config {
        Some(c) => CostFunction::new(c),
        None => CostFunction::inline_only(),
    };
    if args.lenient {
        costs = costs.lenient();
    }
    let scenario = args.scenario.unwrap_or_else(|| stem(&args.log));
    let report = analyze(&parsed.log, &costs, &scenario)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let opts = RenderOptions {
        significant: args.precision,
        ..RenderOptions::default()
    };
    if let Some(csv) = &args.csv {
        emit(Some(csv), render_report(&report, Format::Csv, &opts)?.as_bytes())?;
    }
    emit(
        args.out.as_deref(),
        render_report(&report, Format::Json, &opts)?.as_bytes(),
    )
}

fn load_report(path: &Path) -> Result<CostReport> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("{}: not a cost report", path.display()))
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let baseline = load_report(&args.baseline)?;
    let candidates = args
        .candidates
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>>>()?;
    let opts = RenderOptions {
        percent_decimals: args.percent_decimals,
        rounding: args.rounding,
        ..RenderOptions::default()
    };
    let format = match &args.out {
        Some(p) => Format::from_path(p).with_context(|| p.display().to_string())?,
        None => Format::Markdown,
    };
    let text = match format {
        Format::SvgBar => {
            let mut all = vec![baseline];
            all.extend(candidates);
            match args.chart {
                Chart::Activities => activity_chart(&all, &opts),
                Chart::Instances => instance_average_chart(&all, &opts),
            }
        }
        _ => render_comparison(&compare_many(&baseline, &candidates)?, format, &opts)?,
    };
    emit(args.out.as_deref(), text.as_bytes())
}

fn run_expect(args: ExpectArgs) -> Result<()> {
    let model = load_model(&args.inputs)?;
    let config = load_config(&args.inputs.variants, args.inputs.tolerant_frequencies)?;
    let scenario = args.scenario.unwrap_or_else(|| stem(&args.inputs.variants));
    let e = expectation(&model, &config, &scenario)?;
    let json = serde_json::to_string_pretty(&e)? + "\n";
    emit(args.out.as_deref(), json.as_bytes())
}

fn run_validate(args: ValidateArgs) -> Result<()> {
    let model = load_model(&args.inputs)?;
    let config = load_config(&args.inputs.variants, args.inputs.tolerant_frequencies)?;
    let diagnostics = bpmn::validate(&model, &config);
    for d in &diagnostics {
        eprintln!("{}: {d}", args.inputs.model.display());
    }
    if !diagnostics.is_empty() {
        bail!("{} diagnostic(s)", diagnostics.len());
    }
    println!(
        "ok: {} tasks, {} activities, {} cost variants",
        model.tasks().count(),
        model.activities().len(),
        config.variants.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Compare(a) => run_compare(a),
        Command::Expect(a) => run_expect(a),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
