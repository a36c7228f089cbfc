//! Subsection and final grades: loading, the zero-possible filter, and
//! aggregation of points per learner and learning objective.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::course::{CourseTree, ModuleKind};
use crate::tags::TagMap;

/// Raw points earned on one graded sequential.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsectionGrade {
    pub learner_id: String,
    pub sequential_id: String,
    pub earned: f64,
    pub possible: f64,
}

/// Per-learner per-objective aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoGrade {
    pub learner_id: String,
    pub lo_code: String,
    pub earned: f64,
    pub possible: f64,
    pub pct: f64,
}

/// Final course outcome for one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalGrade {
    pub learner_id: String,
    pub grade: f64,
    pub passed: bool,
}

/// One rejected grade row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GradeRowError {
    pub line: usize,
    pub learner_id: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("cannot read csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("pass threshold {0} outside [0, 1]")]
    BadThreshold(f64),
}

/// Result of loading a grade table: valid records plus the rejection report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubsectionGrades {
    pub records: Vec<SubsectionGrade>,
    pub row_errors: Vec<GradeRowError>,
}

/// Load the subsection grade CSV: `learner_id,sequential_id,earned,possible`.
/// Rows referencing unknown sequentials, with earned > possible, or with
/// negative points are reported and excluded.
pub fn load_subsection_grades(contents: &str, tree: &CourseTree) -> Result<SubsectionGrades, GradeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(contents.as_bytes());
    let mut out = SubsectionGrades::default();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let learner_id = row.get(0).map(str::trim).unwrap_or("").to_string();
        let reject = |learner_id: &str, reason: String, out: &mut SubsectionGrades| {
            out.row_errors.push(GradeRowError {
                line,
                learner_id: learner_id.to_string(),
                reason,
            });
        };
        if learner_id.is_empty() {
            reject("", "missing learner id".into(), &mut out);
            continue;
        }
        let sequential_id = row.get(1).map(str::trim).unwrap_or("").to_string();
        match tree.get(&sequential_id) {
            Some(m) if m.kind == ModuleKind::Sequential => {}
            Some(_) => {
                reject(&learner_id, format!("'{sequential_id}' is not a sequential"), &mut out);
                continue;
            }
            None => {
                reject(&learner_id, format!("unknown sequential '{sequential_id}'"), &mut out);
                continue;
            }
        }
        let earned: f64 = match row.get(2).map(str::trim).and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => {
                reject(&learner_id, "earned is not a number".into(), &mut out);
                continue;
            }
        };
        let possible: f64 = match row.get(3).map(str::trim).and_then(|v| v.parse().ok()) {
            Some(v) => v,
            None => {
                reject(&learner_id, "possible is not a number".into(), &mut out);
                continue;
            }
        };
        if earned < 0.0 || possible < 0.0 {
            reject(&learner_id, "negative points".into(), &mut out);
            continue;
        }
        if earned > possible {
            reject(
                &learner_id,
                format!("earned {earned} exceeds possible {possible}"),
                &mut out,
            );
            continue;
        }
        if !seen.insert((learner_id.clone(), sequential_id.clone())) {
            reject(&learner_id, format!("duplicate row for sequential '{sequential_id}'"), &mut out);
            continue;
        }
        out.records.push(SubsectionGrade {
            learner_id,
            sequential_id,
            earned,
            possible,
        });
    }
    Ok(out)
}

/// Drop records of sequentials that carry no points; returns the kept
/// records and the drop count.
pub fn filter_zero_possible(records: Vec<SubsectionGrade>) -> (Vec<SubsectionGrade>, usize) {
    let before = records.len();
    let kept: Vec<SubsectionGrade> = records.into_iter().filter(|r| r.possible > 0.0).collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Points that could not be attributed to any objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UntaggedPoints {
    pub sequentials: BTreeSet<String>,
    pub records: usize,
    pub earned: f64,
    pub possible: f64,
}

/// Output of [`aggregate_by_lo`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoAggregation {
    /// Sorted by (learner_id, lo_code).
    pub grades: Vec<LoGrade>,
    pub untagged: UntaggedPoints,
}

impl LoAggregation {
    pub fn get(&self, learner_id: &str, lo_code: &str) -> Option<&LoGrade> {
        self.grades
            .iter()
            .find(|g| g.learner_id == learner_id && g.lo_code == lo_code)
    }
}

/// Attribute each record's points in full to every objective tagged on its
/// sequential (or, for untagged sequentials, to the union of objectives
/// tagged on descendants), then aggregate per learner and objective.
///
/// Multi-objective items duplicate points by design, which keeps per-LO
/// percentages comparable across objectives.
pub fn aggregate_by_lo(records: &[SubsectionGrade], tagmap: &TagMap, tree: &CourseTree) -> LoAggregation {
    let mut codes_by_seq: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut sums: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    let mut untagged = UntaggedPoints::default();
    for rec in records {
        let codes = codes_by_seq
            .entry(rec.sequential_id.as_str())
            .or_insert_with(|| tagmap.sequential_lo_codes(tree, &rec.sequential_id));
        if codes.is_empty() {
            untagged.sequentials.insert(rec.sequential_id.clone());
            untagged.records += 1;
            untagged.earned += rec.earned;
            untagged.possible += rec.possible;
            continue;
        }
        for code in codes.iter() {
            let slot = sums
                .entry((rec.learner_id.clone(), code.clone()))
                .or_insert((0.0, 0.0));
            slot.0 += rec.earned;
            slot.1 += rec.possible;
        }
    }
    let grades = sums
        .into_iter()
        .filter(|(_, (_, possible))| *possible > 0.0)
        .map(|((learner_id, lo_code), (earned, possible))| LoGrade {
            learner_id,
            lo_code,
            earned,
            possible,
            pct: earned / possible,
        })
        .collect();
    LoAggregation { grades, untagged }
}

/// Result of loading the final grade table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinalGrades {
    pub records: Vec<FinalGrade>,
    pub row_errors: Vec<GradeRowError>,
}

impl FinalGrades {
    pub fn by_learner(&self) -> BTreeMap<&str, &FinalGrade> {
        self.records.iter().map(|g| (g.learner_id.as_str(), g)).collect()
    }
}

/// Load the final grade CSV: `learner_id,grade,certificate`. Passing follows
/// the certificate column when present, else `grade >= pass_threshold`.
pub fn load_final_grades(contents: &str, pass_threshold: f64) -> Result<FinalGrades, GradeError> {
    if !(0.0..=1.0).contains(&pass_threshold) {
        return Err(GradeError::BadThreshold(pass_threshold));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(contents.as_bytes());
    let mut out = FinalGrades::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let learner_id = row.get(0).map(str::trim).unwrap_or("").to_string();
        let reject = |learner_id: &str, reason: String, out: &mut FinalGrades| {
            out.row_errors.push(GradeRowError {
                line,
                learner_id: learner_id.to_string(),
                reason,
            });
        };
        if learner_id.is_empty() {
            reject("", "missing learner id".into(), &mut out);
            continue;
        }
        let grade: f64 = match row.get(1).map(str::trim).and_then(|v| v.parse().ok()) {
            Some(v) if (0.0..=1.0).contains(&v) => v,
            Some(v) => {
                reject(&learner_id, format!("grade {v} outside [0, 1]"), &mut out);
                continue;
            }
            None => {
                reject(&learner_id, "grade is not a number".into(), &mut out);
                continue;
            }
        };
        let passed = match row.get(2).map(str::trim).unwrap_or("") {
            "" => grade >= pass_threshold,
            "earned" => true,
            "notpassing" => false,
            other => {
                reject(&learner_id, format!("unknown certificate status '{other}'"), &mut out);
                continue;
            }
        };
        if !seen.insert(learner_id.clone()) {
            reject(&learner_id, "duplicate learner".into(), &mut out);
            continue;
        }
        out.records.push(FinalGrade {
            learner_id,
            grade,
            passed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::course::CourseTree;
    use crate::tags::{LoRegistry, TagMap};

    fn tree() -> CourseTree {
        CourseTree::parse(
            r#"{
            "course_id": "c", "title": "t",
            "modules": [
                {"id": "root", "kind": "course_root", "display_name": "", "parent_id": null},
                {"id": "ch1", "kind": "chapter", "display_name": "", "parent_id": "root"},
                {"id": "sq1", "kind": "sequential", "display_name": "", "parent_id": "ch1", "ordinal": 0},
                {"id": "sq2", "kind": "sequential", "display_name": "", "parent_id": "ch1", "ordinal": 1},
                {"id": "vt1", "kind": "vertical", "display_name": "", "parent_id": "sq1"},
                {"id": "bk1", "kind": "block", "block_type": "problem", "display_name": "", "parent_id": "vt1"}
            ]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn subsection_schema_example() {
        let tree = tree();
        let loaded =
            load_subsection_grades("learner_id,sequential_id,earned,possible\nu1,sq1,8,10\n", &tree)
                .unwrap();
        assert_eq!(loaded.records.len(), 1);
        let rec = &loaded.records[0];
        assert_eq!(rec.learner_id, "u1");
        assert_eq!(rec.sequential_id, "sq1");
        assert_eq!(rec.earned, 8.0);
        assert_eq!(rec.possible, 10.0);
    }

    #[test]
    fn subsection_row_errors() {
        let tree = tree();
        let csv = "learner_id,sequential_id,earned,possible\n\
                   u1,sq1,11,10\n\
                   u1,ghost,5,10\n\
                   u1,bk1,5,10\n\
                   u1,sq1,-1,10\n\
                   u1,sq1,x,10\n";
        let loaded = load_subsection_grades(csv, &tree).unwrap();
        assert!(loaded.records.is_empty());
        assert_eq!(loaded.row_errors.len(), 5);
        assert!(loaded.row_errors[0].reason.contains("exceeds possible"));
    }

    #[test]
    fn zero_possible_filtered_and_counted() {
        let tree = tree();
        let csv = "learner_id,sequential_id,earned,possible\nu1,sq1,8,10\nu1,sq2,0,0\n";
        let loaded = load_subsection_grades(csv, &tree).unwrap();
        let (kept, dropped) = filter_zero_possible(loaded.records);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped, 1);
        assert_eq!(kept[0].sequential_id, "sq1");
    }

    #[test]
    fn aggregate_single_and_multi_lo() {
        let tree = tree();
        let reg = LoRegistry::load("code,group,description,week\nLO1.1,,a,1\nLO1.2,,b,1\n").unwrap();

        let single = TagMap::load("module_id,lo_codes,bloom_level\nsq1,LO1.1,2\n", &reg, &tree).unwrap();
        let recs = vec![SubsectionGrade {
            learner_id: "u1".into(),
            sequential_id: "sq1".into(),
            earned: 8.0,
            possible: 10.0,
        }];
        let agg = aggregate_by_lo(&recs, &single, &tree);
        assert_eq!(agg.grades.len(), 1);
        let g = agg.get("u1", "LO1.1").unwrap();
        assert_eq!((g.earned, g.possible, g.pct), (8.0, 10.0, 0.8));

        // Full attribution to each tagged objective.
        let multi =
            TagMap::load("module_id,lo_codes,bloom_level\nsq1,LO1.1;LO1.2,2\n", &reg, &tree).unwrap();
        let agg = aggregate_by_lo(&recs, &multi, &tree);
        assert_eq!(agg.grades.len(), 2);
        for code in ["LO1.1", "LO1.2"] {
            let g = agg.get("u1", code).unwrap();
            assert_eq!((g.earned, g.possible), (8.0, 10.0));
        }
    }

    #[test]
    fn untagged_sequential_falls_back_to_descendants() {
        let tree = tree();
        let reg = LoRegistry::load("code,group,description,week\nLO1.1,,a,1\n").unwrap();
        let tags = TagMap::load("module_id,lo_codes,bloom_level\nbk1,LO1.1,2\n", &reg, &tree).unwrap();
        let recs = vec![
            SubsectionGrade {
                learner_id: "u1".into(),
                sequential_id: "sq1".into(),
                earned: 4.0,
                possible: 5.0,
            },
            // sq2 has no tagged descendants: goes to the untagged bucket.
            SubsectionGrade {
                learner_id: "u1".into(),
                sequential_id: "sq2".into(),
                earned: 1.0,
                possible: 2.0,
            },
        ];
        let agg = aggregate_by_lo(&recs, &tags, &tree);
        assert_eq!(agg.grades.len(), 1);
        assert_eq!(agg.get("u1", "LO1.1").unwrap().earned, 4.0);
        assert_eq!(agg.untagged.records, 1);
        assert!(agg.untagged.sequentials.contains("sq2"));
        assert_eq!(agg.untagged.possible, 2.0);
    }

    #[test]
    fn final_grades_certificate_and_threshold() {
        let loaded = load_final_grades(
            "learner_id,grade,certificate\nu1,0.85,earned\nu2,0.40,\nu3,0.70,notpassing\n",
            0.6,
        )
        .unwrap();
        let by = loaded.by_learner();
        assert!(by["u1"].passed);
        assert!(!by["u2"].passed);
        assert!(!by["u3"].passed); // certificate wins over threshold
    }

    #[test]
    fn final_grades_zero_threshold_passes_all() {
        let loaded = load_final_grades("learner_id,grade,certificate\nu1,0.0,\nu2,0.99,\n", 0.0).unwrap();
        assert!(loaded.records.iter().all(|g| g.passed));
    }

    #[test]
    fn final_grade_row_errors() {
        let loaded = load_final_grades(
            "learner_id,grade,certificate\nu1,1.5,\nu2,x,\nu3,0.5,maybe\nu4,0.5,\nu4,0.6,\n",
            0.6,
        )
        .unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.row_errors.len(), 4);
        assert!(load_final_grades("learner_id,grade,certificate\n", 1.5).is_err());
    }
}
