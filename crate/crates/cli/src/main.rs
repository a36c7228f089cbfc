//! Command-line front end: validate, analyze, report, synth, and all.
//!
//! Exit codes: 0 success, 1 validation findings (or a rejected synth spec),
//! 2 fatal parse/IO errors. Progress goes to stderr as one-line key=value
//! events; result tables live only in the output directory.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use courselens::pipeline::{self, PipelineError};
use courselens::report::{self, ReportError};
use courselens::synth::{self, CohortSpec, Fixture, SpecError};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "courselens",
    version,
    about = "Course-telemetry analytics: engagement, objectives, and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate all inputs; write diagnostics and coverage
    Validate(RunArgs),
    /// Run the full pipeline and write result tables plus a manifest
    Analyze(RunArgs),
    /// Render the static SVG/HTML report from previously written tables
    Report(RunArgs),
    /// Generate a seed-reproducible synthetic fixture with ground truth
    Synth(SynthArgs),
    /// Validate, analyze, and report in one pass
    All(RunArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Course structure JSON
    #[arg(long)]
    pub course: Option<PathBuf>,
    /// Event log glob (ndjson, `.gz` accepted)
    #[arg(long)]
    pub events: Option<String>,
    /// Activity tag CSV
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Learning-objective registry CSV
    #[arg(long = "lo-registry")]
    pub lo_registry: Option<PathBuf>,
    /// Subsection grade CSV
    #[arg(long)]
    pub grades: Option<PathBuf>,
    /// Final grade CSV
    #[arg(long = "final-grades")]
    pub final_grades: Option<PathBuf>,
    /// Chapter-to-week override CSV
    #[arg(long = "week-overrides")]
    pub week_overrides: Option<PathBuf>,
    /// Learner ids to exclude, one per line
    #[arg(long = "exclude-learners")]
    pub exclude_learners: Option<PathBuf>,
    /// Output directory (default: out)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Session break threshold in seconds (default: 600)
    #[arg(long = "break-seconds")]
    pub break_seconds: Option<u64>,
    /// Passing grade fraction when no certificate column (default: 0.60)
    #[arg(long = "pass-threshold")]
    pub pass_threshold: Option<f64>,
    /// Dwell for terminal/break-ending events: zero or cap
    #[arg(long = "terminal-dwell")]
    pub terminal_dwell: Option<String>,
    /// Cohort segments for the grade boxes (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub segments: Option<Vec<String>>,
    /// Seed recorded in the run configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bound worker threads (output is identical for any setting)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also compute the Spearman rank correlation
    #[arg(long)]
    pub spearman: bool,
    /// TOML config file; explicit flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Cohort spec TOML
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the fixture
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also emit the five single-defect variants under variants/
    #[arg(long)]
    variants: bool,
}

fn log(event: &str, fields: &[(&str, String)]) {
    let mut line = format!("event={event}");
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log("fatal", &[("error", format!("{e:#}"))]);
            ExitCode::from(2)
        }
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore re-initialization in tests that call dispatch twice
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = RunConfig::resolve(&args)?;
            init_threads(cfg.threads);
            cmd_validate(&cfg)
        }
        Command::Analyze(args) => {
            let cfg = RunConfig::resolve(&args)?;
            init_threads(cfg.threads);
            cmd_analyze(&cfg).map(|_| 0)
        }
        Command::Report(args) => {
            let cfg = RunConfig::resolve(&args)?;
            cmd_report(&cfg)
        }
        Command::All(args) => {
            let cfg = RunConfig::resolve(&args)?;
            init_threads(cfg.threads);
            let findings = cmd_analyze(&cfg)?;
            cmd_report(&cfg)?;
            Ok(u8::from(findings > 0))
        }
        Command::Synth(args) => cmd_synth(&args),
    }
}

/// Map pipeline failures onto exit semantics: everything fatal here is 2.
fn run_pipeline(cfg: &RunConfig) -> Result<pipeline::PipelineOutput> {
    let paths = cfg.input_paths()?;
    let output = pipeline::run(&paths, &cfg.pipeline_config())
        .map_err(|e: PipelineError| anyhow::anyhow!(e))?;
    Ok(output)
}

fn cmd_validate(cfg: &RunConfig) -> Result<u8> {
    let output = run_pipeline(cfg)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create '{}'", cfg.out.display()))?;
    std::fs::write(
        cfg.out.join("diagnostics.json"),
        report::to_sorted_json(&output.results.diagnostics),
    )?;
    std::fs::write(
        cfg.out.join("coverage.json"),
        report::to_sorted_json(&output.results.coverage),
    )?;
    cfg.write_used(&cfg.out)?;

    let findings = &output.findings;
    log(
        "validate",
        &[
            ("learners", output.learners_with_events.to_string()),
            ("findings", findings.total().to_string()),
            ("untagged_leaves", findings.untagged_leaves.to_string()),
            ("los_without_activities", findings.los_without_activities.to_string()),
            ("los_without_assessment", findings.los_without_assessment.to_string()),
            ("tag_violations", findings.tag_violations.to_string()),
            ("grade_row_errors", findings.grade_row_errors.to_string()),
            ("zero_possible_dropped", findings.zero_possible_dropped.to_string()),
            ("deduplicated_events", findings.deduplicated_events.to_string()),
            ("out_of_order_events", findings.out_of_order_events.to_string()),
            ("skipped_lines", findings.skipped_lines.to_string()),
            ("unmapped_events", findings.unmapped_events.to_string()),
        ],
    );
    for leaf in output.results.coverage.untagged_leaves.iter().take(20) {
        log("untagged_leaf", &[("id", leaf.clone())]);
    }
    for lo in output.results.coverage.los_without_assessment.iter().take(20) {
        log("lo_without_assessment", &[("code", lo.clone())]);
    }
    Ok(u8::from(!findings.is_clean()))
}

fn cmd_analyze(cfg: &RunConfig) -> Result<u64> {
    let output = run_pipeline(cfg)?;
    let manifest = report::emit_tables(&output.results, &cfg.out)?;
    cfg.write_used(&cfg.out)?;

    if output.learners_with_events == 0 {
        log("warning", &[("message", "empty event log".to_string())]);
    }
    let corr = &output.results.correlation;
    log(
        "analyze",
        &[
            ("learners", output.learners_with_events.to_string()),
            ("joined", corr.n.to_string()),
            ("r", corr.r.map(|v| v.to_string()).unwrap_or_else(|| "na".into())),
            ("p", corr.p.map(|v| v.to_string()).unwrap_or_else(|| "na".into())),
            ("tables", manifest.len().to_string()),
            ("out", cfg.out.display().to_string()),
            ("findings", output.findings.total().to_string()),
        ],
    );
    Ok(output.findings.total())
}

fn cmd_report(cfg: &RunConfig) -> Result<u8> {
    let tables = match report::read_tables(&cfg.out) {
        Ok(t) => t,
        Err(ReportError::MissingTable(name)) => {
            log("fatal", &[("error", format!("missing table {name}; run analyze first"))]);
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    let manifest = report::build_report(&tables, &cfg.out)?;
    log(
        "report",
        &[
            ("files", manifest.len().to_string()),
            ("index", cfg.out.join("index.html").display().to_string()),
        ],
    );
    Ok(0)
}

fn cmd_synth(args: &SynthArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read spec '{}'", args.spec.display()))?;
    let mut spec: CohortSpec = toml::from_str(&text)
        .with_context(|| format!("cannot parse spec '{}'", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }

    let fixture = match Fixture::generate(&spec) {
        Ok(f) => f,
        Err(e @ SpecError::Invalid(_)) => {
            log("spec_error", &[("error", e.to_string())]);
            return Ok(1);
        }
        Err(e) => return Err(e.into()),
    };
    let written = fixture
        .write(&args.out)
        .with_context(|| format!("cannot write fixture to '{}'", args.out.display()))?;

    let names: Vec<String> = written.iter().map(|(n, _)| n.clone()).collect();
    let manifest = report::build_manifest(&args.out, &names)?;
    let realized = fixture
        .truth
        .realized_r
        .map(|r| r.to_string())
        .unwrap_or_else(|| "na".into());
    log(
        "synth",
        &[
            ("learners", spec.n_learners.to_string()),
            ("activities", spec.activities_total.to_string()),
            ("realized_r", realized.clone()),
            ("out", args.out.display().to_string()),
        ],
    );
    println!("realized_r={realized}");
    for entry in &manifest {
        println!("{}  {}", entry.sha256, entry.path);
    }

    if args.variants {
        for (name, variant) in synth::plant_defects(&spec)? {
            let dir = args.out.join("variants").join(&name);
            let files = variant
                .write(&dir)
                .with_context(|| format!("cannot write variant '{name}'"))?;
            log(
                "synth_variant",
                &[("name", name.clone()), ("files", files.len().to_string())],
            );
            let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
            for entry in report::build_manifest(&dir, &names)? {
                println!("{}  variants/{}/{}", entry.sha256, name, entry.path);
            }
        }
    }
    Ok(0)
}
