//! End-to-end orchestration: load every input, sessionize and attribute the
//! event stream, aggregate grades, compute the figure statistics, and
//! assemble diagnostics.
//!
//! Per-learner sessionization runs in parallel; every merge is over integer
//! milliseconds or sorted keys, so output does not depend on thread count.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    bipartite_edges, bloom_distribution, chapter_activity_counts, engagement_performance,
    lo_dwell_summary, lo_grade_box, Segment,
};
use crate::course::{CourseError, CourseTree};
use crate::events::{
    attribute, partition_and_sort, read_event_stream, sessionize, AttributedDwell, EventError,
    IngestStats, RefResolver, TerminalDwell,
};
use crate::grades::{
    aggregate_by_lo, filter_zero_possible, load_final_grades, load_subsection_grades, FinalGrades,
    GradeError, LoAggregation,
};
use crate::report::{AnalysisResults, CorrelationTable, ReportError};
use crate::tags::{coverage_report, LoRegistry, TagError, TagMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Course(#[from] CourseError),
    #[error(transparent)]
    Tags(#[from] TagError),
    #[error(transparent)]
    Grades(#[from] GradeError),
    #[error(transparent)]
    Events(#[from] EventError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Input file locations. Optional tables may be absent; events may be empty.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub course: PathBuf,
    pub events: Vec<PathBuf>,
    pub tags: PathBuf,
    pub lo_registry: PathBuf,
    pub grades: Option<PathBuf>,
    pub final_grades: Option<PathBuf>,
    pub week_overrides: Option<PathBuf>,
    pub exclusions: Option<PathBuf>,
}

/// Tunables of one analysis run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub break_s: u64,
    pub pass_threshold: f64,
    pub terminal_dwell: TerminalDwell,
    pub segments: Vec<Segment>,
    pub with_spearman: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            break_s: 600,
            pass_threshold: 0.60,
            terminal_dwell: TerminalDwell::Zero,
            segments: Segment::ALL_SEGMENTS.to_vec(),
            with_spearman: false,
        }
    }
}

/// Counts that decide the validate exit code; all zero on a clean fixture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Findings {
    pub untagged_leaves: usize,
    pub los_without_activities: usize,
    pub los_without_assessment: usize,
    pub tag_violations: usize,
    pub grade_row_errors: usize,
    pub final_grade_row_errors: usize,
    pub zero_possible_dropped: usize,
    pub deduplicated_events: u64,
    pub out_of_order_events: u64,
    pub skipped_lines: u64,
    pub unmapped_events: u64,
    pub untagged_point_records: usize,
}

impl Findings {
    pub fn total(&self) -> u64 {
        self.untagged_leaves as u64
            + self.los_without_activities as u64
            + self.los_without_assessment as u64
            + self.tag_violations as u64
            + self.grade_row_errors as u64
            + self.final_grade_row_errors as u64
            + self.zero_possible_dropped as u64
            + self.deduplicated_events
            + self.out_of_order_events
            + self.skipped_lines
            + self.unmapped_events
            + self.untagged_point_records as u64
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

/// Everything a run produces before serialization.
#[derive(Debug)]
pub struct PipelineOutput {
    pub results: AnalysisResults,
    pub findings: Findings,
    pub dwell: AttributedDwell,
    pub lo_grades: LoAggregation,
    pub finals: FinalGrades,
    pub learners_with_events: usize,
}

/// Run the full pipeline over the configured inputs.
pub fn run(paths: &InputPaths, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    // Course structure and overrides.
    let mut tree = CourseTree::parse(&read(&paths.course)?)?;
    if let Some(overrides) = &paths.week_overrides {
        tree = tree.with_week_override_csv(&read(overrides)?)?;
    }

    // Objective registry and tags.
    let registry = LoRegistry::load(&read(&paths.lo_registry)?)?;
    let tags = TagMap::load(&read(&paths.tags)?, &registry, &tree)?;

    // Event ingestion.
    let exclusions: HashSet<String> = match &paths.exclusions {
        Some(path) => crate::events::parse_exclusion_list(&read(path)?),
        None => HashSet::new(),
    };
    let mut ingest = IngestStats::default();
    let mut records = Vec::new();
    let mut sorted_event_paths = paths.events.clone();
    sorted_event_paths.sort();
    for path in &sorted_event_paths {
        let file = fs::File::open(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let gz = path.extension().is_some_and(|e| e == "gz");
        read_event_stream(file, gz, &exclusions, &mut ingest, &mut records).map_err(|e| {
            PipelineError::Io {
                path: path.display().to_string(),
                source: e,
            }
        })?;
    }
    let partitions = partition_and_sort(records, &mut ingest);

    // Pre-resolve distinct module references once.
    let mut resolver = RefResolver::new(&tree);
    let mut unmapped_refs: BTreeMap<String, u64> = BTreeMap::new();
    let mut unmapped_events: u64 = 0;
    for events in partitions.values() {
        for event in events {
            if let Some(reference) = &event.module_ref {
                if resolver.resolve(reference).is_none() {
                    *unmapped_refs.entry(reference.clone()).or_insert(0) += 1;
                    unmapped_events += 1;
                }
            }
        }
    }
    let resolved: BTreeMap<String, Option<String>> = partitions
        .values()
        .flatten()
        .filter_map(|e| e.module_ref.as_deref())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|r| (r.to_string(), resolver.resolve(r)))
        .collect();

    // Sessionize and attribute per learner, in parallel; integer merges keep
    // the result independent of thread count.
    let learners_with_events = partitions.len();
    let per_learner: Result<Vec<AttributedDwell>, EventError> = partitions
        .par_iter()
        .map(|(learner, events)| {
            let segments = sessionize(learner, events, config.break_s, config.terminal_dwell, |r| {
                resolved.get(r).cloned().flatten()
            })?;
            Ok(attribute(&segments))
        })
        .collect();
    let mut dwell = AttributedDwell::default();
    for part in per_learner? {
        dwell.merge(part);
    }

    // Grades.
    let (subsection, dropped, lo_grades, graded_sequentials) = match &paths.grades {
        Some(path) => {
            let loaded = load_subsection_grades(&read(path)?, &tree)?;
            let (kept, dropped) = filter_zero_possible(loaded.records);
            let graded: BTreeSet<String> = kept.iter().map(|r| r.sequential_id.clone()).collect();
            let aggregated = aggregate_by_lo(&kept, &tags, &tree);
            (loaded.row_errors, dropped, aggregated, graded)
        }
        None => (Vec::new(), 0, LoAggregation::default(), BTreeSet::new()),
    };
    let finals = match &paths.final_grades {
        Some(path) => load_final_grades(&read(path)?, config.pass_threshold)?,
        None => FinalGrades::default(),
    };

    // Statistics.
    let coverage = coverage_report(&tree, &tags, &registry, &graded_sequentials);
    let correlation = CorrelationTable::from_result(engagement_performance(
        &dwell,
        &finals,
        config.with_spearman,
    ));
    let dwell_summary = lo_dwell_summary(&dwell, &tags, &tree, &registry);
    let grade_boxes: Vec<_> = config
        .segments
        .iter()
        .map(|&segment| lo_grade_box(&lo_grades.grades, &finals, &registry, segment))
        .collect();
    let bloom = bloom_distribution(&tags, &tree);
    let bipartite = bipartite_edges(&tree, &tags);
    let chapters = chapter_activity_counts(&tree, &tags);

    let findings = Findings {
        untagged_leaves: coverage.untagged_leaves.len(),
        los_without_activities: coverage.los_without_activities.len(),
        los_without_assessment: coverage.los_without_assessment.len(),
        tag_violations: tags.violations.len(),
        grade_row_errors: subsection.len(),
        final_grade_row_errors: finals.row_errors.len(),
        zero_possible_dropped: dropped,
        deduplicated_events: ingest.deduplicated,
        out_of_order_events: ingest.out_of_order,
        skipped_lines: ingest.skipped_total(),
        unmapped_events,
        untagged_point_records: lo_grades.untagged.records,
    };

    let joined = correlation.n;
    let diagnostics = serde_json::json!({
        "events": {
            "files": sorted_event_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "ingest": ingest,
            "learners": learners_with_events,
            "unmapped_events": unmapped_events,
            "unmapped_refs": unmapped_refs,
        },
        "dwell": {
            "total_ms": dwell.grand_total_ms(),
            "mapped_ms": dwell.mapped_total_ms(),
            "unmapped_ms": dwell.unmapped_total_ms(),
            "untagged_dwell_ms": dwell_summary.untagged_dwell_ms,
        },
        "tags": {
            "accepted": tags.len(),
            "violations": tags.violations,
        },
        "grades": {
            "row_errors": subsection,
            "zero_possible_dropped": dropped,
            "graded_sequentials": graded_sequentials.len(),
            "untagged_points": lo_grades.untagged,
        },
        "final_grades": {
            "rows": finals.records.len(),
            "row_errors": finals.row_errors,
        },
        "cohort": {
            "learners_with_events": learners_with_events,
            "learners_with_final_grade": finals.records.len(),
            "joined_for_correlation": joined,
            "excluded_from_correlation": correlation.excluded,
        },
        "findings": findings,
    });

    let results = AnalysisResults {
        correlation,
        lo_dwell: dwell_summary,
        grade_boxes,
        bloom,
        bipartite,
        chapter_activities: chapters,
        coverage,
        diagnostics,
    };

    Ok(PipelineOutput {
        results,
        findings,
        dwell,
        lo_grades,
        finals,
        learners_with_events,
    })
}

/// Per-learner dwell segments for one parsed fixture, exposed for oracle
/// comparisons in tests and the acceptance suite.
pub fn segments_for(
    paths: &InputPaths,
    config: &PipelineConfig,
) -> Result<BTreeMap<String, Vec<crate::events::DwellSegment>>, PipelineError> {
    let mut tree = CourseTree::parse(&read(&paths.course)?)?;
    if let Some(overrides) = &paths.week_overrides {
        tree = tree.with_week_override_csv(&read(overrides)?)?;
    }
    let mut ingest = IngestStats::default();
    let mut records = Vec::new();
    let mut sorted_event_paths = paths.events.clone();
    sorted_event_paths.sort();
    for path in &sorted_event_paths {
        let file = fs::File::open(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let gz = path.extension().is_some_and(|e| e == "gz");
        read_event_stream(file, gz, &HashSet::new(), &mut ingest, &mut records).map_err(|e| {
            PipelineError::Io {
                path: path.display().to_string(),
                source: e,
            }
        })?;
    }
    let partitions = partition_and_sort(records, &mut ingest);
    let mut resolver = RefResolver::new(&tree);
    let mut out = BTreeMap::new();
    for (learner, events) in &partitions {
        let segments = sessionize(learner, events, config.break_s, config.terminal_dwell, |r| {
            resolver.resolve(r)
        })?;
        out.insert(learner.clone(), segments);
    }
    Ok(out)
}
