//! Command-line front end: simulate call-center logs with known ground
//! truth, run the examiner-design estimation pipeline, emit validity
//! diagnostics, and sweep robustness grids.
//!
//! Exit codes: 0 success, 2 usage/configuration error, 3 data error,
//! 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agentiv_core::estimator::{ClusterField, ClusterSpec};
use agentiv_core::ingest::{parse_calls, CallRecord, ParseReport, Schema};
use agentiv_core::panel::{Outcome, Score};
use agentiv_core::pipeline::{
    self, run_diagnostics, run_estimation, EstimationOutput, PipelineOptions,
};
use agentiv_core::{sim, Error};

mod manifest;
mod report;

use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "agentiv",
    version,
    about = "Examiner-design IV toolkit for call-center service data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic call log with known causal ground truth.
    Simulate(SimulateArgs),
    /// Run the full estimation pipeline: OLS and 2SLS side by side.
    Estimate(EstimateArgs),
    /// Run the instrument-validity diagnostics.
    Diagnose(DiagnoseArgs),
    /// Re-estimate across recontact horizons or span window lengths.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario: multiqueue_bias or random_routing.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Simulator configuration file (plain-text key-value format).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the preset/config seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Horizon override in days.
    #[arg(long)]
    horizon_days: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Call log in the ingest CSV schema.
    #[arg(long)]
    data: PathBuf,
    /// Schema mapping file for non-default column names.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Outcome: recontact or any outcome flag column.
    #[arg(long, default_value = "recontact")]
    outcome: String,
    /// Endogenous score: csat or fcr.
    #[arg(long, default_value = "csat")]
    score: String,
    /// Time-span window length in minutes.
    #[arg(long, default_value_t = 20)]
    window_minutes: u32,
    /// Recontact horizon in hours.
    #[arg(long, default_value_t = 24)]
    horizon_hours: u32,
    /// Cluster scheme: two-way, agent, time, or robust.
    #[arg(long, default_value = "two-way")]
    cluster: String,
    /// Families with more distinct customers than this are treated as
    /// agencies and excluded.
    #[arg(long, default_value_t = 25)]
    agency_threshold: u32,
    /// Residualize the score on spans only, not the baseline covariates.
    #[arg(long)]
    no_baseline_residualization: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also export call_id -> family assignments.
    #[arg(long)]
    export_families: bool,
    /// Also export the per-call leave-one-out instrument.
    #[arg(long)]
    export_instrument: bool,
    /// Also export the estimation design matrix.
    #[arg(long)]
    export_design: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comma-separated recontact horizons in hours (e.g. 24,48,72,168).
    #[arg(long, conflicts_with = "windows")]
    horizons: Option<String>,
    /// Comma-separated span windows in minutes (e.g. 15,20,30,45,60).
    #[arg(long)]
    windows: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                CliError::Usage(_) => 2,
                CliError::Io(_) => 3,
                CliError::Core(Error::Config(_)) => 2,
                CliError::Core(Error::Data(_)) => 3,
                CliError::Core(Error::Numerical(_)) => 4,
            };
            ExitCode::from(code)
        }
    }
}

enum CliError {
    Usage(String),
    Io(std::io::Error),
    Core(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(err) => write!(f, "io error: {err}"),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(value: Error) -> Self {
        CliError::Core(value)
    }
}

impl From<std::io::Error> for CliError {
    fn from(value: std::io::Error) -> Self {
        CliError::Io(value)
    }
}

type CliResult = Result<(), CliError>;

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)?;
    Ok(())
}

fn calls_to_csv(schema: &Schema, calls: &[CallRecord]) -> String {
    let mut text = schema.header();
    text.push('\n');
    for call in calls {
        text.push_str(&schema.encode_row(call));
        text.push('\n');
    }
    text
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), None) => sim::preset(name, 1).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset {name:?}; available: {}",
                sim::preset_names().join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            sim::SimConfig::from_kv_text(&text)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "either --preset or --config is required".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(days) = args.horizon_days {
        config.horizon_days = days;
    }

    let run = sim::run(&config)?;
    ensure_out_dir(&args.out)?;
    let schema = Schema::default();
    let config_text = config.to_kv_text();
    fs::write(
        args.out.join("calls.csv"),
        calls_to_csv(&schema, &run.calls),
    )?;
    fs::write(args.out.join("truth.csv"), sim::truth_to_csv(&run.truth))?;
    fs::write(args.out.join("config.kv"), &config_text)?;
    let summary = serde_json::json!({
        "arrivals": run.summary.arrivals,
        "served": run.summary.served,
        "abandoned": run.summary.abandoned,
        "surveyed": run.summary.surveyed,
        "recontacts_scheduled": run.summary.recontacts_scheduled,
        "late_recontacts": run.summary.late_recontacts,
        "clamp_events": run.summary.clamp_events,
    });
    fs::write(args.out.join("summary.json"), format!("{summary:#}\n"))?;
    Manifest::new("simulate")
        .with_config_text(&config_text)
        .with_seed(config.seed)
        .write(&args.out)?;
    println!(
        "simulated {} calls ({} served, {} surveyed) -> {}",
        run.summary.arrivals,
        run.summary.served,
        run.summary.surveyed,
        args.out.display()
    );
    Ok(())
}

fn parse_cluster(raw: &str) -> Result<ClusterSpec, CliError> {
    match raw {
        "two-way" => Ok(ClusterSpec::TwoWay(ClusterField::Agent, ClusterField::Span)),
        "agent" => Ok(ClusterSpec::OneWay(ClusterField::Agent)),
        "time" => Ok(ClusterSpec::OneWay(ClusterField::Span)),
        "robust" => Ok(ClusterSpec::HetRobust),
        other => Err(CliError::Usage(format!(
            "unknown cluster scheme {other:?}; expected two-way, agent, time, or robust"
        ))),
    }
}

fn pipeline_options(args: &PipelineArgs) -> Result<PipelineOptions, CliError> {
    let score = match args.score.as_str() {
        "csat" => Score::Csat,
        "fcr" => Score::Fcr,
        other => {
            return Err(CliError::Usage(format!(
                "unknown score {other:?}; expected csat or fcr"
            )))
        }
    };
    let outcome = if args.outcome == "recontact" {
        Outcome::Recontact
    } else {
        Outcome::Flag(args.outcome.clone())
    };
    Ok(PipelineOptions {
        window_minutes: args.window_minutes,
        horizon_hours: args.horizon_hours,
        score,
        outcome,
        cluster: parse_cluster(&args.cluster)?,
        agency_threshold: args.agency_threshold,
        origin: None,
        residualize_baseline: !args.no_baseline_residualization,
        weak_f_warn: 10.0,
    })
}

struct LoadedData {
    report: ParseReport,
    schema: Schema,
    data_hash: String,
}

fn load_data(args: &PipelineArgs) -> Result<LoadedData, CliError> {
    let schema = match &args.schema {
        Some(path) => Schema::from_kv_text(&fs::read_to_string(path)?)?,
        None => Schema::default(),
    };
    let text = fs::read_to_string(&args.data)?;
    let report = parse_calls(&text, &schema)?;
    Ok(LoadedData {
        report,
        schema,
        data_hash: manifest::sha256_hex(text.as_bytes()),
    })
}

fn write_rejects(out: &Path, schema: &Schema, report: &ParseReport) -> CliResult {
    if report.rejects.is_empty() {
        return Ok(());
    }
    let mut text = format!("{},reject_reason\n", schema.header());
    for r in &report.rejects {
        text.push_str(&format!("{},{}\n", r.raw, r.reason.replace(',', ";")));
    }
    fs::write(out.join("rejects.csv"), text)?;
    Ok(())
}

fn estimation_manifest(name: &str, loaded: &LoadedData, opts_desc: &str) -> Manifest {
    let mut m = Manifest::new(name).with_config_text(opts_desc);
    m.input_hashes
        .push(("data".to_string(), loaded.data_hash.clone()));
    m
}

fn options_text(args: &PipelineArgs) -> String {
    format!(
        "outcome={} score={} window_minutes={} horizon_hours={} cluster={} agency_threshold={} residualize_baseline={}",
        args.outcome,
        args.score,
        args.window_minutes,
        args.horizon_hours,
        args.cluster,
        args.agency_threshold,
        !args.no_baseline_residualization
    )
}

fn cmd_estimate(args: EstimateArgs) -> CliResult {
    let loaded = load_data(&args.pipeline)?;
    let opts = pipeline_options(&args.pipeline)?;
    let ctx = pipeline::prepare(&loaded.report.records, &opts)?;
    let out = pipeline::estimate_in_context(&ctx, &opts)?;

    ensure_out_dir(&args.out)?;
    write_rejects(&args.out, &loaded.schema, &loaded.report)?;
    fs::write(args.out.join("estimate.txt"), report::estimate_table(&out))?;
    let mut jsonl = String::new();
    for row in report::estimation_json(&out) {
        jsonl.push_str(&row.to_string());
        jsonl.push('\n');
    }
    fs::write(args.out.join("fits.jsonl"), jsonl)?;

    if args.export_families {
        let mut text = String::from("call_id,family_id\n");
        for (call, family) in pipeline::family_assignments(&ctx) {
            text.push_str(&format!("{call},{family}\n"));
        }
        fs::write(args.out.join("families.csv"), text)?;
    }
    if args.export_instrument {
        let mut text = String::from("call_id,agent_id,z\n");
        for (call, agent, z) in pipeline::instrument_export(&ctx) {
            text.push_str(&format!("{call},{agent},{z}\n"));
        }
        fs::write(args.out.join("instrument.csv"), text)?;
    }
    if args.export_design {
        fs::write(args.out.join("design.csv"), ctx.design.to_delimited(','))?;
    }

    estimation_manifest("estimate", &loaded, &options_text(&args.pipeline)).write(&args.out)?;
    print!("{}", report::estimate_table(&out));
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> CliResult {
    let loaded = load_data(&args.pipeline)?;
    let opts = pipeline_options(&args.pipeline)?;
    let diag = run_diagnostics(&loaded.report.records, &opts)?;

    ensure_out_dir(&args.out)?;
    write_rejects(&args.out, &loaded.schema, &loaded.report)?;
    let mut text = report::waiting_table(&diag.waiting);
    text.push('\n');
    text.push_str(&report::balance_table(&diag.balance));
    fs::write(args.out.join("diagnostics.txt"), &text)?;
    let mut jsonl = String::new();
    for rep in diag.waiting.iter().chain(&diag.balance) {
        jsonl.push_str(&report::diagnostic_json(rep).to_string());
        jsonl.push('\n');
    }
    fs::write(args.out.join("diagnostics.jsonl"), jsonl)?;
    estimation_manifest("diagnose", &loaded, &options_text(&args.pipeline)).write(&args.out)?;
    print!("{text}");
    Ok(())
}

fn parse_sweep_list(raw: &str) -> Result<Vec<u32>, CliError> {
    let points: Result<Vec<u32>, _> = raw.split(',').map(|p| p.trim().parse::<u32>()).collect();
    let points = points.map_err(|_| CliError::Usage(format!("bad sweep list {raw:?}")))?;
    if points.is_empty() || points.contains(&0) {
        return Err(CliError::Usage("sweep points must be positive".to_string()));
    }
    Ok(points)
}

fn cmd_sweep(args: SweepArgs) -> CliResult {
    let loaded = load_data(&args.pipeline)?;
    let base = pipeline_options(&args.pipeline)?;

    let (axis, points): (&str, Vec<u32>) = match (&args.horizons, &args.windows) {
        (Some(h), None) => ("horizon_hours", parse_sweep_list(h)?),
        (None, Some(w)) => ("window_minutes", parse_sweep_list(w)?),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --horizons or --windows is required".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    let mut results: Vec<(String, EstimationOutput)> = vec![];
    for point in &points {
        let mut opts = base.clone();
        match axis {
            "horizon_hours" => opts.horizon_hours = *point,
            _ => opts.window_minutes = *point,
        }
        let out = run_estimation(&loaded.report.records, &opts)?;
        let unit = if axis == "horizon_hours" { "h" } else { "min" };
        results.push((format!("{point}{unit}"), out));
    }

    ensure_out_dir(&args.out)?;
    write_rejects(&args.out, &loaded.schema, &loaded.report)?;
    fs::write(
        args.out.join("sweep.txt"),
        report::sweep_table(axis, &results),
    )?;
    let mut jsonl = String::new();
    for (label, out) in &results {
        for mut row in report::estimation_json(out) {
            row["sweep_axis"] = serde_json::json!(axis);
            row["sweep_point"] = serde_json::json!(label);
            jsonl.push_str(&row.to_string());
            jsonl.push('\n');
        }
    }
    fs::write(args.out.join("sweep.jsonl"), jsonl)?;
    estimation_manifest("sweep", &loaded, &options_text(&args.pipeline)).write(&args.out)?;
    print!("{}", report::sweep_table(axis, &results));
    Ok(())
}
