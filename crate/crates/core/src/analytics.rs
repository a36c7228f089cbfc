//! Figure-backing statistics: the engagement-performance correlation,
//! per-objective dwell and grade summaries, the cognitive-load distribution,
//! and the chapter-objective bipartite map.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::course::CourseTree;
use crate::events::AttributedDwell;
use crate::grades::{FinalGrades, LoGrade};
use crate::stats::{box_stats, p_value_two_tailed, pearson, quantile_sorted, spearman, BoxStats, StatsError};
use crate::tags::{BloomLevel, LoRegistry, TagMap};
use crate::Scalar;

/// Engagement-performance correlation over the joined cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: Scalar,
    /// Two-tailed p-value; exactly 0 when |r| = 1.
    pub p: Scalar,
    pub n: usize,
    /// Learners present in only one of the two tables.
    pub excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman_r: Option<Scalar>,
}

/// Correlate per-learner total dwell (mapped plus unmapped, in seconds)
/// against the final course grade. Learners missing either variable are
/// excluded and counted.
pub fn engagement_performance(
    dwell: &AttributedDwell,
    finals: &FinalGrades,
    with_spearman: bool,
) -> Result<CorrelationResult, StatsError> {
    let grades = finals.by_learner();
    let mut xs: Vec<Scalar> = Vec::new();
    let mut ys: Vec<Scalar> = Vec::new();
    let mut excluded = 0usize;
    for (learner, &total_ms) in &dwell.total_by_learner {
        match grades.get(learner.as_str()) {
            Some(g) => {
                xs.push(total_ms as Scalar / 1000.0);
                ys.push(g.grade);
            }
            None => excluded += 1,
        }
    }
    excluded += grades
        .keys()
        .filter(|l| !dwell.total_by_learner.contains_key(**l))
        .count();

    let r = pearson(&xs, &ys)?;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        p_value_two_tailed(r, xs.len())?
    };
    let spearman_r = if with_spearman {
        Some(spearman(&xs, &ys)?)
    } else {
        None
    };
    Ok(CorrelationResult {
        r,
        p,
        n: xs.len(),
        excluded,
        spearman_r,
    })
}

/// Per-objective engagement summary (one row per registry LO).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoDwellRow {
    pub lo_code: String,
    pub group: String,
    pub total_s: Scalar,
    /// Mean over learners with nonzero dwell on the objective.
    pub mean_s_engaged: Scalar,
    pub median_s_engaged: Scalar,
    pub engaged_n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoDwellSummary {
    pub rows: Vec<LoDwellRow>,
    /// Dwell on modules with no tag on themselves or any ancestor.
    pub untagged_dwell_ms: u64,
}

/// Sum attributed dwell per objective. A learner's dwell on a module counts
/// in full toward every objective tagged on that module or, failing that,
/// its nearest tagged ancestor.
pub fn lo_dwell_summary(
    dwell: &AttributedDwell,
    tagmap: &TagMap,
    tree: &CourseTree,
    registry: &LoRegistry,
) -> LoDwellSummary {
    let mut per_lo_learner: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    let mut untagged_dwell_ms = 0u64;
    for ((learner, module), &ms) in &dwell.by_learner_module {
        match tagmap.effective_tag(tree, module) {
            Some(tag) => {
                for code in &tag.lo_codes {
                    *per_lo_learner.entry((code.as_str(), learner.as_str())).or_insert(0) += ms;
                }
            }
            None => untagged_dwell_ms += ms,
        }
    }

    let mut rows = Vec::with_capacity(registry.len());
    for lo in registry.objectives() {
        let mut engaged: Vec<Scalar> = Vec::new();
        let mut total_ms = 0u64;
        for ((code, _), &ms) in per_lo_learner.range((lo.code.as_str(), "")..) {
            if *code != lo.code {
                break;
            }
            total_ms += ms;
            if ms > 0 {
                engaged.push(ms as Scalar / 1000.0);
            }
        }
        engaged.sort_by(|a, b| a.partial_cmp(b).expect("finite dwell"));
        let engaged_n = engaged.len();
        let total_s = total_ms as Scalar / 1000.0;
        let (mean, median) = if engaged_n > 0 {
            (total_s / engaged_n as Scalar, quantile_sorted(&engaged, 0.5))
        } else {
            (0.0, 0.0)
        };
        rows.push(LoDwellRow {
            lo_code: lo.code.clone(),
            group: lo.group.clone(),
            total_s,
            mean_s_engaged: mean,
            median_s_engaged: median,
            engaged_n,
        });
    }
    LoDwellSummary {
        rows,
        untagged_dwell_ms,
    }
}

/// Cohort segment for the grade box plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    All,
    Passed,
    NotPassed,
}

impl Segment {
    pub const ALL_SEGMENTS: [Segment; 3] = [Segment::All, Segment::Passed, Segment::NotPassed];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::All => "all",
            Segment::Passed => "passed",
            Segment::NotPassed => "not_passed",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "all" => Some(Segment::All),
            "passed" => Some(Segment::Passed),
            "not_passed" | "notpassed" | "not-passed" => Some(Segment::NotPassed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoGradeBoxRow {
    pub lo_code: String,
    pub group: String,
    pub segment: Segment,
    pub stats: BoxStats<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoGradeBoxes {
    pub segment: Segment,
    pub rows: Vec<LoGradeBoxRow>,
    /// Registry LOs with no grade data in this segment: (code, group).
    pub omitted: Vec<(String, String)>,
}

/// Box summaries of per-objective grade percentages for one cohort segment.
/// Learners without a final grade belong only to the `All` segment.
pub fn lo_grade_box(
    lo_grades: &[LoGrade],
    finals: &FinalGrades,
    registry: &LoRegistry,
    segment: Segment,
) -> LoGradeBoxes {
    let passed = finals.by_learner();
    let in_segment = |learner: &str| match segment {
        Segment::All => true,
        Segment::Passed => passed.get(learner).map(|g| g.passed).unwrap_or(false),
        Segment::NotPassed => passed.get(learner).map(|g| !g.passed).unwrap_or(false),
    };

    let mut values: BTreeMap<&str, Vec<Scalar>> = BTreeMap::new();
    for grade in lo_grades {
        if in_segment(&grade.learner_id) {
            values.entry(grade.lo_code.as_str()).or_default().push(grade.pct);
        }
    }

    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for lo in registry.objectives() {
        match values.get(lo.code.as_str()) {
            Some(pcts) if !pcts.is_empty() => {
                let stats = box_stats(pcts, 1.5).expect("nonempty pct values");
                rows.push(LoGradeBoxRow {
                    lo_code: lo.code.clone(),
                    group: lo.group.clone(),
                    segment,
                    stats,
                });
            }
            _ => omitted.push((lo.code.clone(), lo.group.clone())),
        }
    }
    LoGradeBoxes {
        segment,
        rows,
        omitted,
    }
}

/// One (week, level) cell of the cognitive-load distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BloomCell {
    pub week: u32,
    pub level: BloomLevel,
    pub count: u32,
    /// Fraction of the week's tagged activities; 0 for empty weeks.
    pub pct: Scalar,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BloomDistribution {
    pub cells: Vec<BloomCell>,
    pub week_totals: BTreeMap<u32, u32>,
    /// Weeks carrying no tagged activities.
    pub empty_weeks: Vec<u32>,
}

/// Count tagged activities per (week, Bloom level). Week 0 holds
/// supplemental chapters assigned by override.
pub fn bloom_distribution(tagmap: &TagMap, tree: &CourseTree) -> BloomDistribution {
    let mut weeks: BTreeSet<u32> = tree
        .chapters()
        .iter()
        .filter_map(|ch| tree.week_of(&ch.id).ok())
        .collect();
    let mut counts: BTreeMap<(u32, BloomLevel), u32> = BTreeMap::new();
    let mut week_totals: BTreeMap<u32, u32> = BTreeMap::new();
    for tag in tagmap.records() {
        let week = tree.week_of(&tag.module_id).expect("tagged module has a chapter");
        weeks.insert(week);
        *counts.entry((week, tag.bloom)).or_insert(0) += 1;
        *week_totals.entry(week).or_insert(0) += 1;
    }

    let mut cells = Vec::new();
    let mut empty_weeks = Vec::new();
    for &week in &weeks {
        let total = week_totals.get(&week).copied().unwrap_or(0);
        if total == 0 {
            empty_weeks.push(week);
        }
        for level in BloomLevel::ALL {
            let count = counts.get(&(week, level)).copied().unwrap_or(0);
            let pct = if total > 0 {
                count as Scalar / total as Scalar
            } else {
                0.0
            };
            cells.push(BloomCell {
                week,
                level,
                count,
                pct,
            });
        }
        week_totals.entry(week).or_insert(0);
    }
    BloomDistribution {
        cells,
        week_totals,
        empty_weeks,
    }
}

/// One weighted edge of the chapter-objective map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BipartiteEdge {
    pub chapter_id: String,
    pub week: u32,
    pub lo_code: String,
    /// Tagged activities under the chapter carrying the objective.
    pub weight: u32,
}

/// Tagged activities per chapter: id -> (week, count). Drives the left
/// circle sizes of the bipartite map.
pub fn chapter_activity_counts(tree: &CourseTree, tagmap: &TagMap) -> BTreeMap<String, (u32, u32)> {
    let mut counts: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    for tag in tagmap.records() {
        let chapter = tree.chapter_of(&tag.module_id).expect("tagged module has a chapter");
        let week = tree.week_of(&tag.module_id).expect("tagged module has a week");
        counts.entry(chapter.id.clone()).or_insert((week, 0)).1 += 1;
    }
    counts
}

/// Count tagged activities per (chapter, objective); zero-weight pairs are
/// omitted. Total weight equals the total number of tag assignments.
pub fn bipartite_edges(tree: &CourseTree, tagmap: &TagMap) -> Vec<BipartiteEdge> {
    let mut weights: BTreeMap<(u32, String, String), u32> = BTreeMap::new();
    for tag in tagmap.records() {
        let chapter = tree.chapter_of(&tag.module_id).expect("tagged module has a chapter");
        let week = tree.week_of(&tag.module_id).expect("tagged module has a week");
        for code in &tag.lo_codes {
            *weights
                .entry((week, chapter.id.clone(), code.clone()))
                .or_insert(0) += 1;
        }
    }
    weights
        .into_iter()
        .map(|((week, chapter_id, lo_code), weight)| BipartiteEdge {
            chapter_id,
            week,
            lo_code,
            weight,
        })
        .collect()
}
