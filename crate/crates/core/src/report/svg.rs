//! Deterministic SVG rendering for the four report figures.
//!
//! Charts are pure functions of the result tables: identical tables render
//! byte-identical documents. Numeric data labels always carry the table
//! value at six decimals; axis scale text is non-numeric by construction.

use std::collections::{BTreeMap, BTreeSet};

use crate::analytics::Segment;
use crate::report::{fmt6, BipartiteTableRow, BloomTableRow, LoDwellTableRow, LoGradeBoxTableRow};
use crate::tags::derive_group;
use crate::Scalar;

/// Fixed palette for learning-objective groups; colors are data, not style.
pub const GROUP_PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
];

/// Fixed six-step ramp for Bloom levels, Remember through Create.
pub const BLOOM_PALETTE: [&str; 6] = [
    "#deebf7", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#084594",
];

/// Color for a group, assigned by sorted-group index.
pub fn group_color(groups: &[String], group: &str) -> &'static str {
    let idx = groups.iter().position(|g| g == group).unwrap_or(0);
    GROUP_PALETTE[idx % GROUP_PALETTE.len()]
}

const CANVAS_W: f64 = 1200.0;

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Truncate long labels; the full text belongs in a title attribute.
fn ellipsize(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        text.to_string()
    } else {
        let head: String = text.chars().take(max.saturating_sub(1)).collect();
        format!("{head}\u{2026}")
    }
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

// positional geometry arguments mirror the SVG attributes
#[allow(clippy::too_many_arguments)]
impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, attrs: &str, title: Option<&str>) {
        match title {
            Some(t) => self.body.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"{}><title>{}</title></rect>\n",
                px(x), px(y), px(w), px(h), fill, attrs, esc(t)
            )),
            None => self.body.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"{}/>\n",
                px(x), px(y), px(w), px(h), fill, attrs
            )),
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, attrs: &str, title: Option<&str>) {
        match title {
            Some(t) => self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"{}><title>{}</title></line>\n",
                px(x1), px(y1), px(x2), px(y2), stroke, px(width), attrs, esc(t)
            )),
            None => self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"{}/>\n",
                px(x1), px(y1), px(x2), px(y2), stroke, px(width), attrs
            )),
        }
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str, attrs: &str, title: Option<&str>) {
        match title {
            Some(t) => self.body.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"{}><title>{}</title></circle>\n",
                px(cx), px(cy), px(r), fill, attrs, esc(t)
            )),
            None => self.body.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"{}/>\n",
                px(cx), px(cy), px(r), fill, attrs
            )),
        }
    }

    fn text(&mut self, x: f64, y: f64, class: &str, anchor: &str, size: f64, content: &str, title: Option<&str>) {
        let title_attr = match title {
            Some(t) => format!("><title>{}</title>{}</text>", esc(t), esc(content)),
            None => format!(">{}</text>", esc(content)),
        };
        self.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" class=\"{}\" text-anchor=\"{}\" font-size=\"{}\" font-family=\"sans-serif\"{}\n",
            px(x),
            px(y),
            class,
            anchor,
            px(size),
            title_attr
        ));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            px(self.width),
            px(self.height),
            px(self.width),
            px(self.height),
            self.body
        )
    }
}

/// Horizontal bar chart of mean engagement minutes per learning objective,
/// ordered by code, colored by group.
pub fn render_dwell_bar(rows: &[LoDwellTableRow]) -> String {
    let mut rows: Vec<&LoDwellTableRow> = rows.iter().collect();
    rows.sort_by(|a, b| a.lo_code.cmp(&b.lo_code));
    let groups: Vec<String> = {
        let set: BTreeSet<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };

    let (left, right, top, bottom) = (100.0, 130.0, 48.0, 28.0);
    let bar_h = 18.0;
    let bar_gap = 10.0;
    let n = rows.len();
    let height = top + (n as f64) * (bar_h + bar_gap) + bottom;
    let plot_w = CANVAS_W - left - right;
    let max_value = rows
        .iter()
        .map(|r| r.mean_min_engaged)
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut svg = Svg::new(CANVAS_W, height.max(top + bottom + 40.0));
    svg.text(left, 22.0, "chart-title", "start", 15.0, "Engagement time by learning objective", None);
    svg.text(
        left,
        40.0,
        "axis",
        "start",
        11.0,
        "mean minutes per engaged learner",
        None,
    );
    if n == 0 {
        svg.text(left, top + 30.0, "note", "start", 12.0, "no data", None);
        return svg.finish();
    }
    svg.line(left, top - 4.0, left, top + (n as f64) * (bar_h + bar_gap), "#333333", 1.0, "", None);
    for (i, row) in rows.iter().enumerate() {
        let y = top + (i as f64) * (bar_h + bar_gap);
        let w = row.mean_min_engaged / max_value * plot_w;
        let color = group_color(&groups, &row.group);
        let label = fmt6(row.mean_min_engaged);
        let title = format!(
            "{}: mean {} min over {} engaged learners",
            row.lo_code, label, row.engaged_n
        );
        svg.text(
            left - 8.0,
            y + bar_h - 5.0,
            "category",
            "end",
            11.0,
            &ellipsize(&row.lo_code, 12),
            Some(&row.lo_code),
        );
        svg.rect(
            left,
            y,
            w,
            bar_h,
            color,
            &format!(
                " data-lo=\"{}\" data-value=\"{}\"",
                esc(&row.lo_code),
                label
            ),
            Some(&title),
        );
        svg.text(left + w + 6.0, y + bar_h - 5.0, "value", "start", 10.0, &label, None);
    }
    svg.finish()
}

/// Side-by-side box plots of per-objective grade percentages per segment.
pub fn render_grade_box(rows: &[LoGradeBoxTableRow]) -> String {
    let codes: Vec<String> = {
        let set: BTreeSet<&str> = rows.iter().map(|r| r.lo_code.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let groups: Vec<String> = {
        let set: BTreeSet<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let segments: Vec<Segment> = {
        let set: BTreeSet<Segment> = rows.iter().map(|r| r.segment).collect();
        set.into_iter().collect()
    };

    let (left, right, top, bottom) = (70.0, 30.0, 48.0, 90.0);
    let height = 460.0;
    let plot_h = height - top - bottom;
    let plot_w = CANVAS_W - left - right;
    let mut svg = Svg::new(CANVAS_W, height);
    svg.text(left, 22.0, "chart-title", "start", 15.0, "Grade percentage by learning objective", None);
    svg.text(left, 40.0, "axis", "start", 11.0, "grade share of points possible, bottom 0% to top 100%", None);
    if codes.is_empty() {
        svg.text(left, top + 30.0, "note", "start", 12.0, "no data", None);
        return svg.finish();
    }

    // frame: y axis spans 0..100%
    svg.line(left, top, left, top + plot_h, "#333333", 1.0, "", None);
    svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333333", 1.0, "", None);
    svg.text(left - 6.0, top + 4.0, "axis", "end", 10.0, "max", None);
    svg.text(left - 6.0, top + plot_h + 4.0, "axis", "end", 10.0, "min", None);

    let slot_w = plot_w / codes.len() as f64;
    let box_w = (slot_w / (segments.len() as f64 + 1.0)).min(26.0);
    let y_of = |pct: Scalar| top + (1.0 - pct) * plot_h;

    let mut footnotes: Vec<String> = Vec::new();
    for row in rows {
        let code_idx = codes.iter().position(|c| *c == row.lo_code).unwrap();
        let seg_idx = segments.iter().position(|s| *s == row.segment).unwrap();
        let slot_x = left + code_idx as f64 * slot_w;
        let cx = slot_x
            + slot_w * (seg_idx as f64 + 1.0) / (segments.len() as f64 + 1.0);
        match &row.stats {
            Some(s) => {
                let color = group_color(&groups, &row.group);
                let title = format!(
                    "{} [{}]: median {} q1 {} q3 {} n {}",
                    row.lo_code,
                    row.segment.as_str(),
                    fmt6(s.median),
                    fmt6(s.q1),
                    fmt6(s.q3),
                    s.n
                );
                let attrs = format!(
                    " data-lo=\"{}\" data-segment=\"{}\" data-median=\"{}\" data-q1=\"{}\" data-q3=\"{}\"",
                    esc(&row.lo_code),
                    row.segment.as_str(),
                    fmt6(s.median),
                    fmt6(s.q1),
                    fmt6(s.q3)
                );
                // whiskers first, box on top
                svg.line(cx, y_of(s.upper_whisker), cx, y_of(s.q3), "#555555", 1.0, "", None);
                svg.line(cx, y_of(s.q1), cx, y_of(s.lower_whisker), "#555555", 1.0, "", None);
                svg.line(cx - box_w / 3.0, y_of(s.upper_whisker), cx + box_w / 3.0, y_of(s.upper_whisker), "#555555", 1.0, "", None);
                svg.line(cx - box_w / 3.0, y_of(s.lower_whisker), cx + box_w / 3.0, y_of(s.lower_whisker), "#555555", 1.0, "", None);
                let box_top = y_of(s.q3);
                let box_h = (y_of(s.q1) - box_top).max(0.5);
                svg.rect(cx - box_w / 2.0, box_top, box_w, box_h, color, &attrs, Some(&title));
                svg.line(cx - box_w / 2.0, y_of(s.median), cx + box_w / 2.0, y_of(s.median), "#222222", 1.5, "", None);
                for outlier in &s.outliers {
                    svg.circle(
                        cx,
                        y_of(*outlier),
                        2.2,
                        "#88888880",
                        &format!(" data-outlier=\"{}\"", fmt6(*outlier)),
                        Some(&format!("{} [{}] outlier {}", row.lo_code, row.segment.as_str(), fmt6(*outlier))),
                    );
                }
            }
            None => {
                footnotes.push(format!("{} [{}]", row.lo_code, row.segment.as_str()));
            }
        }
    }
    for (i, code) in codes.iter().enumerate() {
        let x = left + (i as f64 + 0.5) * slot_w;
        svg.text(x, top + plot_h + 16.0, "category", "middle", 10.0, &ellipsize(code, 10), Some(code));
    }
    // legend per segment
    for (i, seg) in segments.iter().enumerate() {
        let x = left + i as f64 * 140.0;
        let y = top + plot_h + 38.0;
        svg.rect(x, y - 9.0, 10.0, 10.0, "#999999", "", None);
        svg.text(x + 14.0, y, "legend", "start", 10.0, seg.as_str(), None);
    }
    if !footnotes.is_empty() {
        let note = format!("no graded data: {}", footnotes.join(", "));
        svg.text(left, top + plot_h + 62.0, "note", "start", 10.0, &ellipsize(&note, 170), Some(&note));
    }
    svg.finish()
}

/// Bipartite chapter-to-objective map: circle areas scale with activity
/// counts, connector width with edge weight.
pub fn render_bipartite(rows: &[BipartiteTableRow]) -> String {
    let mut chapters: Vec<(u32, String, u32)> = {
        let set: BTreeSet<(u32, &str, u32)> = rows
            .iter()
            .map(|r| (r.week, r.chapter_id.as_str(), r.chapter_activities))
            .collect();
        set.into_iter().map(|(w, id, n)| (w, id.to_string(), n)).collect()
    };
    chapters.sort();
    let lo_codes: Vec<String> = {
        let set: BTreeSet<&str> = rows.iter().map(|r| r.lo_code.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let groups: Vec<String> = {
        let set: BTreeSet<String> = lo_codes.iter().map(|c| derive_group(c)).collect();
        set.into_iter().collect()
    };

    let row_gap = 46.0;
    let (top, bottom) = (56.0, 30.0);
    let n_rows = chapters.len().max(lo_codes.len()).max(1);
    let height = top + n_rows as f64 * row_gap + bottom;
    let left_x = 260.0;
    let right_x = CANVAS_W - 260.0;

    let mut svg = Svg::new(CANVAS_W, height);
    svg.text(60.0, 22.0, "chart-title", "start", 15.0, "Course modules and learning objectives", None);
    svg.text(left_x, 42.0, "axis", "middle", 11.0, "chapters", None);
    svg.text(right_x, 42.0, "axis", "middle", 11.0, "learning objectives", None);
    if rows.is_empty() {
        svg.text(60.0, top + 30.0, "note", "start", 12.0, "no tagged activities", None);
        return svg.finish();
    }

    let chapter_y = |idx: usize| top + (idx as f64 + 0.5) * row_gap;
    let lo_y = |idx: usize| top + (idx as f64 + 0.5) * row_gap;
    let max_activities = chapters.iter().map(|&(_, _, n)| n).max().unwrap_or(1).max(1);
    let mut lo_weights: BTreeMap<&str, u32> = BTreeMap::new();
    for r in rows {
        *lo_weights.entry(r.lo_code.as_str()).or_insert(0) += r.weight;
    }
    let max_lo_weight = lo_weights.values().copied().max().unwrap_or(1).max(1);
    let max_edge = rows.iter().map(|r| r.weight).max().unwrap_or(1).max(1);

    // connectors under the circles
    for r in rows {
        let ci = chapters
            .iter()
            .position(|(w, id, _)| *w == r.week && *id == r.chapter_id)
            .unwrap();
        let li = lo_codes.iter().position(|c| *c == r.lo_code).unwrap();
        let width = 0.75 + 7.25 * (r.weight as f64 / max_edge as f64);
        let title = format!("{} -> {}: {} tagged activities", r.chapter_id, r.lo_code, r.weight);
        svg.line(
            left_x,
            chapter_y(ci),
            right_x,
            lo_y(li),
            "#9aa5b1",
            width,
            &format!(
                " stroke-opacity=\"0.55\" data-weight=\"{}\" data-chapter=\"{}\" data-lo=\"{}\"",
                r.weight,
                esc(&r.chapter_id),
                esc(&r.lo_code)
            ),
            Some(&title),
        );
    }
    for (i, (week, chapter_id, activities)) in chapters.iter().enumerate() {
        // area proportional to activity count
        let r = 6.0 + 22.0 * ((*activities as f64) / (max_activities as f64)).sqrt();
        let color = GROUP_PALETTE[(*week as usize) % GROUP_PALETTE.len()];
        let label = if *week == 0 {
            format!("{chapter_id} (supplemental)")
        } else {
            format!("{chapter_id} (week {week})")
        };
        svg.circle(
            left_x,
            chapter_y(i),
            r,
            color,
            &format!(" data-chapter=\"{}\" data-activities=\"{}\"", esc(chapter_id), activities),
            Some(&format!("{label}: {activities} tagged activities")),
        );
        svg.text(left_x - r - 8.0, chapter_y(i) + 4.0, "category", "end", 11.0, &ellipsize(&label, 28), Some(&label));
    }
    for (i, code) in lo_codes.iter().enumerate() {
        let total = lo_weights.get(code.as_str()).copied().unwrap_or(0);
        let r = 4.0 + 16.0 * ((total as f64) / (max_lo_weight as f64)).sqrt();
        let color = group_color(&groups, &derive_group(code));
        svg.circle(
            right_x,
            lo_y(i),
            r,
            color,
            &format!(" data-lo=\"{}\" data-weight=\"{}\"", esc(code), total),
            Some(&format!("{code}: {total} tag assignments")),
        );
        svg.text(right_x + r + 8.0, lo_y(i) + 4.0, "category", "start", 11.0, &ellipsize(code, 24), Some(code));
    }
    svg.finish()
}

/// Stacked cognitive-load distribution per week; supplemental (week 0)
/// renders apart from the weekly sequence.
pub fn render_bloom_stack(cells: &[BloomTableRow]) -> String {
    let weekly: Vec<u32> = {
        let set: BTreeSet<u32> = cells.iter().map(|c| c.week).filter(|&w| w > 0).collect();
        set.into_iter().collect()
    };
    let has_supplemental = cells.iter().any(|c| c.week == 0);

    let (left, right, top, bottom) = (70.0, 40.0, 48.0, 110.0);
    let height = 480.0;
    let plot_h = height - top - bottom;
    let plot_w = CANVAS_W - left - right;
    let mut svg = Svg::new(CANVAS_W, height);
    svg.text(left, 22.0, "chart-title", "start", 15.0, "Cognitive load by course week", None);
    svg.text(left, 40.0, "axis", "start", 11.0, "share of tagged activities per Bloom level, full bar = all of the week", None);
    if cells.is_empty() {
        svg.text(left, top + 30.0, "note", "start", 12.0, "no data", None);
        return svg.finish();
    }

    let slots = weekly.len() + if has_supplemental { 2 } else { 0 };
    let slot_w = plot_w / slots.max(1) as f64;
    let bar_w = (slot_w * 0.55).min(80.0);
    svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333333", 1.0, "", None);

    let mut empty_weeks: Vec<u32> = Vec::new();
    let mut draw_week = |svg: &mut Svg, week: u32, slot: usize, label: &str| {
        let x = left + slot as f64 * slot_w + (slot_w - bar_w) / 2.0;
        let mut y = top + plot_h;
        let mut total_count = 0u32;
        for cell in cells.iter().filter(|c| c.week == week) {
            total_count += cell.count;
            if cell.pct <= 0.0 {
                continue;
            }
            let h = cell.pct * plot_h;
            y -= h;
            let color = BLOOM_PALETTE[(cell.level_index.saturating_sub(1) as usize) % BLOOM_PALETTE.len()];
            let title = format!(
                "{label} {}: {} activities, share {}",
                cell.level_name,
                cell.count,
                fmt6(cell.pct)
            );
            svg.rect(
                x,
                y,
                bar_w,
                h,
                color,
                &format!(
                    " data-week=\"{}\" data-level=\"{}\" data-pct=\"{}\" data-count=\"{}\"",
                    week, cell.level_index, fmt6(cell.pct), cell.count
                ),
                Some(&title),
            );
        }
        if total_count == 0 {
            empty_weeks.push(week);
        }
        svg.text(
            x + bar_w / 2.0,
            top + plot_h + 16.0,
            "category",
            "middle",
            10.0,
            label,
            None,
        );
    };

    for (i, &week) in weekly.iter().enumerate() {
        draw_week(&mut svg, week, i, &format!("week {week}"));
    }
    if has_supplemental {
        draw_week(&mut svg, 0, weekly.len() + 1, "supplemental");
    }

    // legend in taxonomy order
    let names = ["Remember", "Understand", "Apply", "Analyze", "Evaluate", "Create"];
    for (i, name) in names.iter().enumerate() {
        let x = left + i as f64 * 150.0;
        let y = top + plot_h + 44.0;
        svg.rect(x, y - 9.0, 10.0, 10.0, BLOOM_PALETTE[i], "", None);
        svg.text(x + 14.0, y, "legend", "start", 10.0, name, None);
    }
    if !empty_weeks.is_empty() {
        let note = format!(
            "weeks with no tagged activities: {}",
            empty_weeks
                .iter()
                .map(|w| if *w == 0 { "supplemental".to_string() } else { format!("week {w}") })
                .collect::<Vec<_>>()
                .join(", ")
        );
        svg.text(left, top + plot_h + 70.0, "note", "start", 10.0, &note, None);
    }
    svg.finish()
}
