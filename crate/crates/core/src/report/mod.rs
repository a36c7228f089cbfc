//! Result serialization: CSV/JSON tables with a hashed manifest, and the
//! static SVG/HTML report rendered from those tables.
//!
//! Tables are the only interface between analysis and rendering; the report
//! stage re-reads them from disk rather than touching raw inputs.

pub mod html;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{
    BipartiteEdge, BloomDistribution, CorrelationResult, LoDwellSummary, LoGradeBoxes, Segment,
};
use crate::stats::BoxStats;
use crate::tags::CoverageReport;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error at '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing table '{0}' (run analyze first)")]
    MissingTable(String),
    #[error("malformed table '{path}': {reason}")]
    Malformed { path: String, reason: String },
}

impl ReportError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ReportError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        ReportError::Malformed {
            path: path.display().to_string(),
            reason: reason.into(),
        }
    }
}

/// Statistics serialize with six decimal places; `{:.6}` rounds the binary
/// value to nearest, ties to even.
pub fn fmt6(value: Scalar) -> String {
    format!("{value:.6}")
}

/// JSON with keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut out = serde_json::to_string_pretty(&v).expect("json value renders");
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Hash files (paths relative to `dir`, sorted) into a manifest.
pub fn build_manifest(dir: &Path, files: &[String]) -> Result<Vec<ManifestEntry>, ReportError> {
    let mut sorted: Vec<String> = files.to_vec();
    sorted.sort();
    let mut entries = Vec::with_capacity(sorted.len());
    for rel in sorted {
        let path = dir.join(&rel);
        let bytes = fs::read(&path).map_err(|e| ReportError::io(&path, e))?;
        let digest = Sha256::digest(&bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect::<String>();
        entries.push(ManifestEntry { path: rel, sha256 });
    }
    Ok(entries)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|e| ReportError::io(path, e))
}

/// One row of `lo_dwell.csv`. Minutes columns carry the values the chart
/// labels, so every label matches a table cell verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoDwellTableRow {
    pub lo_code: String,
    pub group: String,
    pub total_s: Scalar,
    pub total_min: Scalar,
    pub mean_s_engaged: Scalar,
    pub mean_min_engaged: Scalar,
    pub median_s_engaged: Scalar,
    pub engaged_n: usize,
}

/// One row of `lo_grades_box.csv`; `n == 0` marks an objective omitted from
/// the segment, kept as a row so the renderer can draw the gap.
#[derive(Debug, Clone, PartialEq)]
pub struct LoGradeBoxTableRow {
    pub segment: Segment,
    pub lo_code: String,
    pub group: String,
    pub n: usize,
    pub stats: Option<BoxStats<Scalar>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloomTableRow {
    pub week: u32,
    pub level_index: u8,
    pub level_name: String,
    pub count: u32,
    pub pct: Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteTableRow {
    pub week: u32,
    pub chapter_id: String,
    /// Tagged activities under the chapter (drives left-circle area).
    pub chapter_activities: u32,
    pub lo_code: String,
    pub weight: u32,
}

/// `correlation.json`. The correlation is the one statistic kept at full
/// precision: recovery against generated ground truth is checked at 1e-9,
/// which six decimals cannot carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub r: Option<Scalar>,
    pub p: Option<Scalar>,
    pub n: usize,
    pub excluded: usize,
    pub spearman_r: Option<Scalar>,
    pub note: Option<String>,
}

impl CorrelationTable {
    pub fn from_result(result: Result<CorrelationResult, crate::stats::StatsError>) -> Self {
        match result {
            Ok(c) => CorrelationTable {
                r: Some(c.r),
                p: Some(c.p),
                n: c.n,
                excluded: c.excluded,
                spearman_r: c.spearman_r,
                note: None,
            },
            Err(e) => CorrelationTable {
                r: None,
                p: None,
                n: 0,
                excluded: 0,
                spearman_r: None,
                note: Some(e.to_string()),
            },
        }
    }
}

/// Everything the analyze stage computed, ready for serialization.
#[derive(Debug, Clone)]
pub struct AnalysisResults {
    pub correlation: CorrelationTable,
    pub lo_dwell: LoDwellSummary,
    pub grade_boxes: Vec<LoGradeBoxes>,
    pub bloom: BloomDistribution,
    pub bipartite: Vec<BipartiteEdge>,
    /// chapter id -> (week, tagged-activity count).
    pub chapter_activities: BTreeMap<String, (u32, u32)>,
    pub coverage: CoverageReport,
    pub diagnostics: serde_json::Value,
}

/// The tables as read back from disk; the report renders purely from these.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTables {
    pub lo_dwell: Vec<LoDwellTableRow>,
    pub grade_boxes: Vec<LoGradeBoxTableRow>,
    pub correlation: CorrelationTable,
    pub bloom: Vec<BloomTableRow>,
    pub bipartite: Vec<BipartiteTableRow>,
    pub coverage: CoverageReport,
    pub diagnostics: serde_json::Value,
}

pub const TABLE_FILES: [&str; 7] = [
    "lo_dwell.csv",
    "lo_grades_box.csv",
    "correlation.json",
    "bloom.csv",
    "bipartite.csv",
    "coverage.json",
    "diagnostics.json",
];

/// Write every result table plus `manifest.json` into `out_dir`; returns the
/// manifest. Row order is fixed, so reruns are byte-identical.
pub fn emit_tables(results: &AnalysisResults, out_dir: &Path) -> Result<Vec<ManifestEntry>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|e| ReportError::io(out_dir, e))?;

    let mut dwell = String::from(
        "lo_code,group,total_s,total_min,mean_s_engaged,mean_min_engaged,median_s_engaged,engaged_n\n",
    );
    for row in &results.lo_dwell.rows {
        dwell.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            csv_field(&row.lo_code),
            csv_field(&row.group),
            fmt6(row.total_s),
            fmt6(row.total_s / 60.0),
            fmt6(row.mean_s_engaged),
            fmt6(row.mean_s_engaged / 60.0),
            fmt6(row.median_s_engaged),
            row.engaged_n
        ));
    }
    write_file(&out_dir.join("lo_dwell.csv"), &dwell)?;

    let mut boxes = String::from(
        "segment,lo_code,group,n,min,q1,median,q3,max,lower_whisker,upper_whisker,outliers\n",
    );
    for seg in &results.grade_boxes {
        let mut rows: Vec<(String, String, Option<&BoxStats<Scalar>>)> = seg
            .rows
            .iter()
            .map(|r| (r.lo_code.clone(), r.group.clone(), Some(&r.stats)))
            .collect();
        for (code, group) in &seg.omitted {
            rows.push((code.clone(), group.clone(), None));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (code, group, stats) in rows {
            match stats {
                Some(s) => {
                    let outliers = s
                        .outliers
                        .iter()
                        .map(|&v| fmt6(v))
                        .collect::<Vec<_>>()
                        .join(";");
                    boxes.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        seg.segment.as_str(),
                        csv_field(&code),
                        csv_field(&group),
                        s.n,
                        fmt6(s.min),
                        fmt6(s.q1),
                        fmt6(s.median),
                        fmt6(s.q3),
                        fmt6(s.max),
                        fmt6(s.lower_whisker),
                        fmt6(s.upper_whisker),
                        csv_field(&outliers)
                    ));
                }
                None => {
                    boxes.push_str(&format!(
                        "{},{},{},0,,,,,,,,\n",
                        seg.segment.as_str(),
                        csv_field(&code),
                        csv_field(&group)
                    ));
                }
            }
        }
    }
    write_file(&out_dir.join("lo_grades_box.csv"), &boxes)?;

    write_file(&out_dir.join("correlation.json"), &to_sorted_json(&results.correlation))?;

    let mut bloom = String::from("week,level_index,level_name,count,pct\n");
    for cell in &results.bloom.cells {
        bloom.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.week,
            cell.level.index(),
            cell.level.name(),
            cell.count,
            fmt6(cell.pct)
        ));
    }
    write_file(&out_dir.join("bloom.csv"), &bloom)?;

    let mut bipartite = String::from("week,chapter_id,chapter_activities,lo_code,weight\n");
    for edge in &results.bipartite {
        let activities = results
            .chapter_activities
            .get(&edge.chapter_id)
            .map(|&(_, n)| n)
            .unwrap_or(0);
        bipartite.push_str(&format!(
            "{},{},{},{},{}\n",
            edge.week,
            csv_field(&edge.chapter_id),
            activities,
            csv_field(&edge.lo_code),
            edge.weight
        ));
    }
    write_file(&out_dir.join("bipartite.csv"), &bipartite)?;

    write_file(&out_dir.join("coverage.json"), &to_sorted_json(&results.coverage))?;
    write_file(&out_dir.join("diagnostics.json"), &to_sorted_json(&results.diagnostics))?;

    let files: Vec<String> = TABLE_FILES.iter().map(|s| s.to_string()).collect();
    let manifest = build_manifest(out_dir, &files)?;
    write_file(&out_dir.join("manifest.json"), &to_sorted_json(&manifest))?;
    Ok(manifest)
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn read_to_string(path: &Path) -> Result<String, ReportError> {
    if !path.exists() {
        return Err(ReportError::MissingTable(
            path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        ));
    }
    fs::read_to_string(path).map_err(|e| ReportError::io(path, e))
}

fn parse_scalar(path: &Path, field: &str, value: &str) -> Result<Scalar, ReportError> {
    value
        .parse()
        .map_err(|_| ReportError::malformed(path, format!("{field} '{value}' is not a number")))
}

/// Load the analyze-stage tables back from `out_dir`.
pub fn read_tables(out_dir: &Path) -> Result<ResultTables, ReportError> {
    let dwell_path = out_dir.join("lo_dwell.csv");
    let mut lo_dwell = Vec::new();
    for record in csv_records(&dwell_path)? {
        let (path, row) = (&dwell_path, record?);
        lo_dwell.push(LoDwellTableRow {
            lo_code: row.get(0).unwrap_or("").to_string(),
            group: row.get(1).unwrap_or("").to_string(),
            total_s: parse_scalar(path, "total_s", row.get(2).unwrap_or(""))?,
            total_min: parse_scalar(path, "total_min", row.get(3).unwrap_or(""))?,
            mean_s_engaged: parse_scalar(path, "mean_s_engaged", row.get(4).unwrap_or(""))?,
            mean_min_engaged: parse_scalar(path, "mean_min_engaged", row.get(5).unwrap_or(""))?,
            median_s_engaged: parse_scalar(path, "median_s_engaged", row.get(6).unwrap_or(""))?,
            engaged_n: row
                .get(7)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "engaged_n not an integer"))?,
        });
    }

    let boxes_path = out_dir.join("lo_grades_box.csv");
    let mut grade_boxes = Vec::new();
    for record in csv_records(&boxes_path)? {
        let (path, row) = (&boxes_path, record?);
        let segment = Segment::parse(row.get(0).unwrap_or(""))
            .ok_or_else(|| ReportError::malformed(path, "unknown segment"))?;
        let lo_code = row.get(1).unwrap_or("").to_string();
        let group = row.get(2).unwrap_or("").to_string();
        let n: usize = row
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|_| ReportError::malformed(path, "n not an integer"))?;
        let stats = if n == 0 {
            None
        } else {
            let outliers = row
                .get(11)
                .unwrap_or("")
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| parse_scalar(path, "outlier", s))
                .collect::<Result<Vec<_>, _>>()?;
            Some(BoxStats {
                n,
                min: parse_scalar(path, "min", row.get(4).unwrap_or(""))?,
                q1: parse_scalar(path, "q1", row.get(5).unwrap_or(""))?,
                median: parse_scalar(path, "median", row.get(6).unwrap_or(""))?,
                q3: parse_scalar(path, "q3", row.get(7).unwrap_or(""))?,
                max: parse_scalar(path, "max", row.get(8).unwrap_or(""))?,
                lower_whisker: parse_scalar(path, "lower_whisker", row.get(9).unwrap_or(""))?,
                upper_whisker: parse_scalar(path, "upper_whisker", row.get(10).unwrap_or(""))?,
                outliers,
            })
        };
        grade_boxes.push(LoGradeBoxTableRow {
            segment,
            lo_code,
            group,
            n,
            stats,
        });
    }

    let corr_path = out_dir.join("correlation.json");
    let correlation: CorrelationTable = serde_json::from_str(&read_to_string(&corr_path)?)
        .map_err(|e| ReportError::malformed(&corr_path, e.to_string()))?;

    let bloom_path = out_dir.join("bloom.csv");
    let mut bloom = Vec::new();
    for record in csv_records(&bloom_path)? {
        let (path, row) = (&bloom_path, record?);
        bloom.push(BloomTableRow {
            week: row
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "week not an integer"))?,
            level_index: row
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "level_index not an integer"))?,
            level_name: row.get(2).unwrap_or("").to_string(),
            count: row
                .get(3)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "count not an integer"))?,
            pct: parse_scalar(path, "pct", row.get(4).unwrap_or(""))?,
        });
    }

    let bi_path = out_dir.join("bipartite.csv");
    let mut bipartite = Vec::new();
    for record in csv_records(&bi_path)? {
        let (path, row) = (&bi_path, record?);
        bipartite.push(BipartiteTableRow {
            week: row
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "week not an integer"))?,
            chapter_id: row.get(1).unwrap_or("").to_string(),
            chapter_activities: row
                .get(2)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "chapter_activities not an integer"))?,
            lo_code: row.get(3).unwrap_or("").to_string(),
            weight: row
                .get(4)
                .unwrap_or("")
                .parse()
                .map_err(|_| ReportError::malformed(path, "weight not an integer"))?,
        });
    }

    let coverage_path = out_dir.join("coverage.json");
    let coverage: CoverageReport = serde_json::from_str(&read_to_string(&coverage_path)?)
        .map_err(|e| ReportError::malformed(&coverage_path, e.to_string()))?;

    let diag_path = out_dir.join("diagnostics.json");
    let diagnostics: serde_json::Value = serde_json::from_str(&read_to_string(&diag_path)?)
        .map_err(|e| ReportError::malformed(&diag_path, e.to_string()))?;

    Ok(ResultTables {
        lo_dwell,
        grade_boxes,
        correlation,
        bloom,
        bipartite,
        coverage,
        diagnostics,
    })
}

fn csv_records(
    path: &Path,
) -> Result<impl Iterator<Item = Result<csv::StringRecord, ReportError>> + '_, ReportError> {
    let contents = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::Cursor::new(contents.into_bytes()));
    let records: Vec<_> = reader.records().collect();
    let path_owned: PathBuf = path.to_path_buf();
    Ok(records.into_iter().map(move |r| {
        r.map_err(|e| ReportError::Malformed {
            path: path_owned.display().to_string(),
            reason: e.to_string(),
        })
    }))
}

/// Render the four charts and the self-contained HTML page into `out_dir`;
/// returns the report manifest (`report_manifest.json`).
pub fn build_report(tables: &ResultTables, out_dir: &Path) -> Result<Vec<ManifestEntry>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|e| ReportError::io(out_dir, e))?;
    let charts = [
        ("fig1_engagement.svg", svg::render_dwell_bar(&tables.lo_dwell)),
        ("fig2_grades.svg", svg::render_grade_box(&tables.grade_boxes)),
        ("fig3_alignment.svg", svg::render_bipartite(&tables.bipartite)),
        ("fig4_bloom.svg", svg::render_bloom_stack(&tables.bloom)),
    ];
    for (name, body) in &charts {
        write_file(&out_dir.join(name), body)?;
    }
    let page = html::build_html(tables, &charts);
    write_file(&out_dir.join("index.html"), &page)?;

    let mut files: Vec<String> = charts.iter().map(|(n, _)| n.to_string()).collect();
    files.push("index.html".to_string());
    let manifest = build_manifest(out_dir, &files)?;
    write_file(&out_dir.join("report_manifest.json"), &to_sorted_json(&manifest))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Segment;

    fn empty_results() -> AnalysisResults {
        AnalysisResults {
            correlation: CorrelationTable {
                r: None,
                p: None,
                n: 0,
                excluded: 0,
                spearman_r: None,
                note: Some("no data".into()),
            },
            lo_dwell: LoDwellSummary::default(),
            grade_boxes: vec![LoGradeBoxes {
                segment: Segment::All,
                rows: Vec::new(),
                omitted: Vec::new(),
            }],
            bloom: BloomDistribution::default(),
            bipartite: Vec::new(),
            chapter_activities: BTreeMap::new(),
            coverage: CoverageReport::default(),
            diagnostics: serde_json::json!({}),
        }
    }

    #[test]
    fn fmt6_is_six_decimals() {
        assert_eq!(fmt6(0.0), "0.000000");
        assert_eq!(fmt6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt6(12345.6789012), "12345.678901");
    }

    #[test]
    fn empty_results_emit_header_only_tables() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_tables(&empty_results(), dir.path()).unwrap();
        assert_eq!(manifest.len(), TABLE_FILES.len());
        let dwell = fs::read_to_string(dir.path().join("lo_dwell.csv")).unwrap();
        assert_eq!(dwell.lines().count(), 1);
        let tables = read_tables(dir.path()).unwrap();
        assert!(tables.lo_dwell.is_empty());
        assert_eq!(tables.correlation.n, 0);
    }

    #[test]
    fn emit_is_deterministic() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let m1 = emit_tables(&empty_results(), dir1.path()).unwrap();
        let m2 = emit_tables(&empty_results(), dir2.path()).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn missing_table_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        match read_tables(dir.path()) {
            Err(ReportError::MissingTable(name)) => assert_eq!(name, "lo_dwell.csv"),
            other => panic!("expected MissingTable, got {other:?}"),
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
