//! Run configuration: flags merged over an optional TOML config file, with
//! flags winning. The resolved configuration is echoed into the output
//! directory so a run is reproducible from a single artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use courselens::analytics::Segment;
use courselens::events::TerminalDwell;
use courselens::pipeline::{InputPaths, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::RunArgs;

/// File-level configuration; every key optional, flags override.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub course: Option<PathBuf>,
    pub events: Option<String>,
    pub tags: Option<PathBuf>,
    pub lo_registry: Option<PathBuf>,
    pub grades: Option<PathBuf>,
    pub final_grades: Option<PathBuf>,
    pub week_overrides: Option<PathBuf>,
    pub exclude_learners: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub break_seconds: Option<u64>,
    pub pass_threshold: Option<f64>,
    pub terminal_dwell: Option<String>,
    pub segments: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub spearman: Option<bool>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub course: Option<PathBuf>,
    pub events_glob: Option<String>,
    pub events: Vec<PathBuf>,
    pub tags: Option<PathBuf>,
    pub lo_registry: Option<PathBuf>,
    pub grades: Option<PathBuf>,
    pub final_grades: Option<PathBuf>,
    pub week_overrides: Option<PathBuf>,
    pub exclude_learners: Option<PathBuf>,
    pub out: PathBuf,
    pub break_seconds: u64,
    pub pass_threshold: f64,
    pub terminal_dwell: String,
    pub segments: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub spearman: bool,
}

impl RunConfig {
    /// Merge flags over the optional config file and validate invariants.
    pub fn resolve(args: &RunArgs) -> Result<RunConfig> {
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config '{}'", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config '{}'", path.display()))?
            }
            None => FileConfig::default(),
        };

        let events_glob = args.events.clone().or(file.events);
        let events = match &events_glob {
            Some(pattern) => expand_glob(pattern)?,
            None => Vec::new(),
        };
        let break_seconds = args.break_seconds.or(file.break_seconds).unwrap_or(600);
        if break_seconds == 0 {
            bail!("--break-seconds must be > 0");
        }
        let pass_threshold = args.pass_threshold.or(file.pass_threshold).unwrap_or(0.60);
        if !(0.0..=1.0).contains(&pass_threshold) {
            bail!("--pass-threshold must lie in [0, 1]");
        }
        let terminal_dwell = args
            .terminal_dwell
            .clone()
            .or(file.terminal_dwell)
            .unwrap_or_else(|| "zero".to_string());
        if !matches!(terminal_dwell.as_str(), "zero" | "cap") {
            bail!("--terminal-dwell must be 'zero' or 'cap'");
        }
        let segments = args
            .segments
            .clone()
            .or(file.segments)
            .unwrap_or_else(|| vec!["all".into(), "passed".into(), "not_passed".into()]);
        for segment in &segments {
            if Segment::parse(segment).is_none() {
                bail!("unknown segment '{segment}' (expected all, passed, not_passed)");
            }
        }
        let out = args
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out"));

        Ok(RunConfig {
            course: args.course.clone().or(file.course),
            events_glob,
            events,
            tags: args.tags.clone().or(file.tags),
            lo_registry: args.lo_registry.clone().or(file.lo_registry),
            grades: args.grades.clone().or(file.grades),
            final_grades: args.final_grades.clone().or(file.final_grades),
            week_overrides: args.week_overrides.clone().or(file.week_overrides),
            exclude_learners: args.exclude_learners.clone().or(file.exclude_learners),
            out,
            break_seconds,
            pass_threshold,
            terminal_dwell,
            segments,
            seed: args.seed.or(file.seed).unwrap_or(0),
            threads: args.threads.or(file.threads),
            spearman: args.spearman || file.spearman.unwrap_or(false),
        })
    }

    /// Input paths for the pipeline; fails on missing required inputs.
    pub fn input_paths(&self) -> Result<InputPaths> {
        let course = self.course.clone().context("--course is required")?;
        let tags = self.tags.clone().context("--tags is required")?;
        let lo_registry = self.lo_registry.clone().context("--lo-registry is required")?;
        Ok(InputPaths {
            course,
            events: self.events.clone(),
            tags,
            lo_registry,
            grades: self.grades.clone(),
            final_grades: self.final_grades.clone(),
            week_overrides: self.week_overrides.clone(),
            exclusions: self.exclude_learners.clone(),
        })
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            break_s: self.break_seconds,
            pass_threshold: self.pass_threshold,
            terminal_dwell: if self.terminal_dwell == "cap" {
                TerminalDwell::Cap
            } else {
                TerminalDwell::Zero
            },
            segments: self
                .segments
                .iter()
                .filter_map(|s| Segment::parse(s))
                .collect(),
            with_spearman: self.spearman,
        }
    }

    /// Echo the resolved configuration into the output directory.
    pub fn write_used(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("cannot create '{}'", out_dir.display()))?;
        let text = toml::to_string_pretty(self).context("config serializes")?;
        let path = out_dir.join("config_used.toml");
        std::fs::write(&path, text).with_context(|| format!("cannot write '{}'", path.display()))?;
        Ok(())
    }
}

/// Expand an event-log glob into a sorted path list. A pattern that matches
/// nothing yields an empty list (an empty event log is a warning, not an
/// error).
fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad events glob '{pattern}'"))?
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("cannot expand events glob '{pattern}'"))?;
    paths.sort();
    Ok(paths)
}
