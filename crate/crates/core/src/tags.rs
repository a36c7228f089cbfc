//! Learning-objective registry, per-activity tag records, and coverage
//! diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::{CourseTree, ModuleKind};

/// One learning objective from the registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearningObjective {
    pub code: String,
    /// Grouping key, by default the code prefix before the dot.
    pub group: String,
    pub description: String,
    pub week: Option<u32>,
}

/// The six cognitive process levels, ordered least to most complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum BloomLevel {
    Remember = 1,
    Understand = 2,
    Apply = 3,
    Analyze = 4,
    Evaluate = 5,
    Create = 6,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remember,
        BloomLevel::Understand,
        BloomLevel::Apply,
        BloomLevel::Analyze,
        BloomLevel::Evaluate,
        BloomLevel::Create,
    ];

    pub fn from_index(level: u8) -> Option<Self> {
        match level {
            1 => Some(BloomLevel::Remember),
            2 => Some(BloomLevel::Understand),
            3 => Some(BloomLevel::Apply),
            4 => Some(BloomLevel::Analyze),
            5 => Some(BloomLevel::Evaluate),
            6 => Some(BloomLevel::Create),
            _ => None,
        }
    }

    /// Accepts "1".."6" or a level name, case-insensitive.
    pub fn parse(text: &str) -> Option<Self> {
        if let Ok(n) = text.trim().parse::<u8>() {
            return Self::from_index(n);
        }
        match text.trim().to_ascii_lowercase().as_str() {
            "remember" => Some(BloomLevel::Remember),
            "understand" => Some(BloomLevel::Understand),
            "apply" => Some(BloomLevel::Apply),
            "analyze" => Some(BloomLevel::Analyze),
            "evaluate" => Some(BloomLevel::Evaluate),
            "create" => Some(BloomLevel::Create),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            BloomLevel::Remember => "Remember",
            BloomLevel::Understand => "Understand",
            BloomLevel::Apply => "Apply",
            BloomLevel::Analyze => "Analyze",
            BloomLevel::Evaluate => "Evaluate",
            BloomLevel::Create => "Create",
        }
    }
}

/// Instructor coding of one activity: up to three objectives and one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRecord {
    pub module_id: String,
    pub lo_codes: Vec<String>,
    pub bloom: BloomLevel,
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("duplicate learning-objective code '{code}' at line {line}")]
    DuplicateCode { code: String, line: usize },
    #[error("malformed registry row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("tag file yielded no valid rows")]
    NoValidTags,
    #[error("cannot read csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Validated registry of learning objectives, iteration in code order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoRegistry {
    objectives: BTreeMap<String, LearningObjective>,
}

impl LoRegistry {
    /// Load the registry CSV: `code,group,description,week`. An empty group
    /// column derives the group from the code prefix before the dot.
    pub fn load(contents: &str) -> Result<Self, TagError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(contents.as_bytes());
        let mut objectives = BTreeMap::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2; // 1-based, after the header
            let row = row?;
            let code = row
                .get(0)
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .ok_or_else(|| TagError::MalformedRow {
                    line,
                    reason: "missing code".into(),
                })?
                .to_string();
            let group = match row.get(1).map(str::trim) {
                Some(g) if !g.is_empty() => {
                    if !code.starts_with(g) {
                        return Err(TagError::MalformedRow {
                            line,
                            reason: format!("group '{g}' is not a prefix of code '{code}'"),
                        });
                    }
                    g.to_string()
                }
                _ => derive_group(&code),
            };
            let description = row.get(2).unwrap_or("").trim().to_string();
            let week = match row.get(3).map(str::trim) {
                Some(w) if !w.is_empty() => {
                    Some(w.parse::<u32>().map_err(|_| TagError::MalformedRow {
                        line,
                        reason: format!("week '{w}' is not an integer"),
                    })?)
                }
                _ => None,
            };
            if objectives.contains_key(&code) {
                return Err(TagError::DuplicateCode { code, line });
            }
            objectives.insert(
                code.clone(),
                LearningObjective {
                    code,
                    group,
                    description,
                    week,
                },
            );
        }
        Ok(LoRegistry { objectives })
    }

    pub fn contains(&self, code: &str) -> bool {
        self.objectives.contains_key(code)
    }

    pub fn get(&self, code: &str) -> Option<&LearningObjective> {
        self.objectives.get(code)
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn objectives(&self) -> impl Iterator<Item = &LearningObjective> {
        self.objectives.values()
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.objectives.keys().map(String::as_str)
    }

    /// Distinct groups in code order.
    pub fn groups(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.objectives.values().map(|o| o.group.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }
}

/// Group = code prefix before the dot; the whole code when there is none.
pub fn derive_group(code: &str) -> String {
    match code.split_once('.') {
        Some((prefix, _)) => prefix.to_string(),
        None => code.to_string(),
    }
}

/// One rejected tag row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TagViolation {
    pub line: usize,
    pub module_id: String,
    pub reason: String,
}

/// Validated tag records keyed by module id, plus the rejection report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagMap {
    records: BTreeMap<String, TagRecord>,
    pub violations: Vec<TagViolation>,
}

impl TagMap {
    /// Load the tag CSV: `module_id,lo_codes,bloom_level` with semicolon-
    /// separated codes and a numeric or named level. Rows failing validation
    /// are excluded and reported; only a fully empty result is fatal.
    pub fn load(contents: &str, registry: &LoRegistry, tree: &CourseTree) -> Result<Self, TagError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(contents.as_bytes());
        let mut records: BTreeMap<String, TagRecord> = BTreeMap::new();
        let mut violations = Vec::new();
        let mut saw_rows = false;
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            saw_rows = true;
            let row = row?;
            let module_id = row.get(0).map(str::trim).unwrap_or("").to_string();
            let mut reject = |module_id: &str, reason: String| {
                violations.push(TagViolation {
                    line,
                    module_id: module_id.to_string(),
                    reason,
                });
            };

            let module = match tree.get(&module_id) {
                Some(m) => m,
                None => {
                    reject(&module_id, "module does not exist in the course tree".into());
                    continue;
                }
            };
            if !matches!(
                module.kind,
                ModuleKind::Sequential | ModuleKind::Vertical | ModuleKind::Block
            ) {
                reject(&module_id, format!("'{}' modules cannot be tagged", module.kind.as_str()));
                continue;
            }
            let codes: Vec<String> = row
                .get(1)
                .unwrap_or("")
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(str::to_string)
                .collect();
            if codes.is_empty() {
                reject(&module_id, "no learning objectives listed".into());
                continue;
            }
            if codes.len() > 3 {
                reject(&module_id, format!("too many LOs ({} > 3)", codes.len()));
                continue;
            }
            let mut distinct = BTreeSet::new();
            if !codes.iter().all(|c| distinct.insert(c.clone())) {
                reject(&module_id, "duplicate LO code within the row".into());
                continue;
            }
            if let Some(unknown) = codes.iter().find(|c| !registry.contains(c)) {
                reject(&module_id, format!("unknown LO code '{unknown}'"));
                continue;
            }
            let bloom = match row.get(2).and_then(BloomLevel::parse) {
                Some(b) => b,
                None => {
                    reject(&module_id, format!("invalid bloom level '{}'", row.get(2).unwrap_or("")));
                    continue;
                }
            };
            if records.contains_key(&module_id) {
                reject(&module_id, "module tagged more than once".into());
                continue;
            }
            records.insert(
                module_id.clone(),
                TagRecord {
                    module_id,
                    lo_codes: codes,
                    bloom,
                },
            );
        }
        if saw_rows && records.is_empty() {
            return Err(TagError::NoValidTags);
        }
        Ok(TagMap { records, violations })
    }

    pub fn get(&self, module_id: &str) -> Option<&TagRecord> {
        self.records.get(module_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &TagRecord> {
        self.records.values()
    }

    /// The tag that governs a module: its own, else the nearest tagged
    /// ancestor's.
    pub fn effective_tag<'a>(&'a self, tree: &CourseTree, module_id: &str) -> Option<&'a TagRecord> {
        tree.ancestry(module_id).find_map(|m| self.records.get(&m.id))
    }

    /// LOs attributed to a sequential for grading: its own tag, else the
    /// union of tags on its descendants.
    pub fn sequential_lo_codes(&self, tree: &CourseTree, sequential_id: &str) -> Vec<String> {
        if let Some(tag) = self.records.get(sequential_id) {
            return tag.lo_codes.clone();
        }
        let mut codes = BTreeSet::new();
        let mut stack: Vec<&str> = tree.children_of(sequential_id).iter().map(String::as_str).collect();
        while let Some(id) = stack.pop() {
            if let Some(tag) = self.records.get(id) {
                codes.extend(tag.lo_codes.iter().cloned());
            }
            stack.extend(tree.children_of(id).iter().map(String::as_str));
        }
        codes.into_iter().collect()
    }
}

/// Coverage diagnostics per the assessment-alignment analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Leaves with no tag on themselves or any ancestor.
    pub untagged_leaves: Vec<String>,
    /// Registry LOs never carried by any tag record.
    pub los_without_activities: Vec<String>,
    /// Registry LOs that no graded sequential attributes points to.
    pub los_without_assessment: Vec<String>,
    /// Tag records carrying each LO code.
    pub tag_histogram: BTreeMap<String, u32>,
}

impl CoverageReport {
    pub fn is_clean(&self) -> bool {
        self.untagged_leaves.is_empty()
            && self.los_without_activities.is_empty()
            && self.los_without_assessment.is_empty()
    }
}

/// Compute coverage diagnostics. `graded_sequentials` lists sequentials that
/// carry points after the zero-possible filter.
pub fn coverage_report(
    tree: &CourseTree,
    tagmap: &TagMap,
    registry: &LoRegistry,
    graded_sequentials: &BTreeSet<String>,
) -> CoverageReport {
    let untagged_leaves: Vec<String> = tree
        .linearize()
        .into_iter()
        .filter(|leaf| tagmap.effective_tag(tree, leaf).is_none())
        .collect();

    let mut histogram: BTreeMap<String, u32> = registry.codes().map(|c| (c.to_string(), 0)).collect();
    for tag in tagmap.records() {
        for code in &tag.lo_codes {
            *histogram.entry(code.clone()).or_insert(0) += 1;
        }
    }
    let los_without_activities: Vec<String> = histogram
        .iter()
        .filter(|(_, &n)| n == 0)
        .map(|(code, _)| code.clone())
        .collect();

    let mut assessed: BTreeSet<String> = BTreeSet::new();
    for seq in graded_sequentials {
        assessed.extend(tagmap.sequential_lo_codes(tree, seq));
    }
    let los_without_assessment: Vec<String> = registry
        .codes()
        .filter(|code| !assessed.contains(*code))
        .map(str::to_string)
        .collect();

    CoverageReport {
        untagged_leaves,
        los_without_activities,
        los_without_assessment,
        tag_histogram: histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::course::CourseTree;

    fn tree() -> CourseTree {
        CourseTree::parse(
            r#"{
            "course_id": "c", "title": "t",
            "modules": [
                {"id": "root", "kind": "course_root", "display_name": "", "parent_id": null},
                {"id": "ch1", "kind": "chapter", "display_name": "", "parent_id": "root"},
                {"id": "sq1", "kind": "sequential", "display_name": "", "parent_id": "ch1"},
                {"id": "vt1", "kind": "vertical", "display_name": "", "parent_id": "sq1"},
                {"id": "bk1", "kind": "block", "block_type": "problem", "display_name": "", "parent_id": "vt1", "ordinal": 0},
                {"id": "bk2", "kind": "block", "block_type": "html", "display_name": "", "parent_id": "vt1", "ordinal": 1}
            ]
        }"#,
        )
        .unwrap()
    }

    fn registry() -> LoRegistry {
        LoRegistry::load("code,group,description,week\nLO1.1,,first,1\nLO1.2,,second,1\nLO2.1,,third,2\n")
            .unwrap()
    }

    #[test]
    fn registry_schema_example() {
        let reg = LoRegistry::load("code,group,description,week\nLO2.1,LO2,desc,2\n").unwrap();
        let lo = reg.get("LO2.1").unwrap();
        assert_eq!(lo.group, "LO2");
        assert_eq!(lo.week, Some(2));
    }

    #[test]
    fn registry_duplicate_code_rejected() {
        let err = LoRegistry::load("code,group,description,week\nLO1.1,,a,1\nLO1.1,,b,1\n").unwrap_err();
        assert!(matches!(err, TagError::DuplicateCode { ref code, line: 3 } if code == "LO1.1"));
    }

    #[test]
    fn registry_group_derivation_and_override() {
        let reg = registry();
        assert_eq!(reg.get("LO1.1").unwrap().group, "LO1");
        assert_eq!(reg.groups(), vec!["LO1", "LO2"]);
        assert!(LoRegistry::load("code,group,description,week\nLO1.1,ZZ,a,1\n").is_err());
    }

    #[test]
    fn tag_row_variants() {
        let tree = tree();
        let reg = registry();
        let csv = "module_id,lo_codes,bloom_level\n\
                   bk1,LO1.1;LO1.2,2\n\
                   bk2,LO2.1,Apply\n";
        let tags = TagMap::load(csv, &reg, &tree).unwrap();
        assert_eq!(tags.len(), 2);
        assert_eq!(tags.get("bk1").unwrap().bloom, BloomLevel::Understand);
        assert_eq!(tags.get("bk2").unwrap().bloom, BloomLevel::Apply);
        assert!(tags.violations.is_empty());
    }

    #[test]
    fn tag_violations_excluded_not_fatal() {
        let tree = tree();
        let reg = registry();
        let csv = "module_id,lo_codes,bloom_level\n\
                   bk1,LO1.1;LO1.2;LO2.1;LO1.1,2\n\
                   ghost,LO1.1,2\n\
                   ch1,LO1.1,2\n\
                   bk2,LO9.9,2\n\
                   vt1,LO1.1,7\n\
                   sq1,LO1.1,remember\n";
        let tags = TagMap::load(csv, &reg, &tree).unwrap();
        assert_eq!(tags.len(), 1);
        assert_eq!(tags.violations.len(), 5);
        assert!(tags.violations[0].reason.contains("too many LOs"));
    }

    #[test]
    fn all_rows_invalid_is_fatal() {
        let tree = tree();
        let reg = registry();
        assert!(matches!(
            TagMap::load("module_id,lo_codes,bloom_level\nghost,LO1.1,2\n", &reg, &tree),
            Err(TagError::NoValidTags)
        ));
    }

    #[test]
    fn effective_tag_walks_ancestors() {
        let tree = tree();
        let reg = registry();
        let tags = TagMap::load("module_id,lo_codes,bloom_level\nvt1,LO1.1,2\n", &reg, &tree).unwrap();
        assert_eq!(tags.effective_tag(&tree, "bk1").unwrap().module_id, "vt1");
        assert_eq!(tags.effective_tag(&tree, "vt1").unwrap().module_id, "vt1");
        assert!(tags.effective_tag(&tree, "ch1").is_none());
    }

    #[test]
    fn sequential_codes_union_descendants() {
        let tree = tree();
        let reg = registry();
        let tags = TagMap::load(
            "module_id,lo_codes,bloom_level\nbk1,LO1.1;LO1.2,2\nbk2,LO2.1,3\n",
            &reg,
            &tree,
        )
        .unwrap();
        assert_eq!(tags.sequential_lo_codes(&tree, "sq1"), vec!["LO1.1", "LO1.2", "LO2.1"]);
    }

    #[test]
    fn coverage_clean_on_fully_tagged_course() {
        let tree = tree();
        let reg = LoRegistry::load("code,group,description,week\nLO1.1,,a,1\n").unwrap();
        let tags = TagMap::load(
            "module_id,lo_codes,bloom_level\nbk1,LO1.1,2\nbk2,LO1.1,2\n",
            &reg,
            &tree,
        )
        .unwrap();
        let graded: BTreeSet<String> = [String::from("sq1")].into();
        let report = coverage_report(&tree, &tags, &reg, &graded);
        assert!(report.untagged_leaves.is_empty());
        assert!(report.los_without_activities.is_empty());
        assert!(report.los_without_assessment.is_empty());
        assert!(report.is_clean());
    }

    #[test]
    fn coverage_flags_gaps() {
        let tree = tree();
        let reg = registry();
        let tags = TagMap::load("module_id,lo_codes,bloom_level\nbk1,LO1.1,2\n", &reg, &tree).unwrap();
        // No graded sequentials at all: every LO lacks an assessment.
        let report = coverage_report(&tree, &tags, &reg, &BTreeSet::new());
        assert_eq!(report.untagged_leaves, vec!["bk2"]);
        assert_eq!(report.los_without_activities, vec!["LO1.2", "LO2.1"]);
        assert_eq!(report.los_without_assessment.len(), 3);
        assert_eq!(report.tag_histogram["LO1.1"], 1);
        assert_eq!(report.tag_histogram["LO2.1"], 0);
    }
}
