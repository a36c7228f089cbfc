//! Self-contained HTML report: inline SVG, no external assets.

use crate::report::{fmt6, ResultTables};

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Strip the XML prolog so the document can sit inline in HTML5.
fn inline_svg(svg: &str) -> &str {
    match svg.find("<svg") {
        Some(idx) => &svg[idx..],
        None => svg,
    }
}

fn list_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "<p class=\"ok\">none</p>".to_string()
    } else {
        let lis: String = items
            .iter()
            .map(|i| format!("<li><code>{}</code></li>", esc(i)))
            .collect();
        format!("<ul>{lis}</ul>")
    }
}

/// Assemble the report page from the tables and the rendered charts.
pub fn build_html(tables: &ResultTables, charts: &[(&str, String)]) -> String {
    let mut page = String::new();
    page.push_str(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <title>Course engagement and performance report</title>\n<style>\n\
         body { font-family: sans-serif; margin: 2em auto; max-width: 1250px; color: #222; }\n\
         h1 { font-size: 1.5em; } h2 { font-size: 1.2em; margin-top: 2em; border-bottom: 1px solid #ccc; }\n\
         table.summary td, table.summary th { padding: 0.2em 0.9em; text-align: left; }\n\
         .ok { color: #2a7a2a; } .warn { color: #a04000; }\n\
         figure { margin: 1em 0; } code { background: #f4f4f4; padding: 0 0.2em; }\n\
         </style>\n</head>\n<body>\n<h1>Course engagement and performance report</h1>\n",
    );

    // Summary
    page.push_str("<h2 id=\"summary\">Summary</h2>\n<table class=\"summary\">\n");
    let corr = &tables.correlation;
    match (corr.r, corr.p) {
        (Some(r), Some(p)) => {
            page.push_str(&format!(
                "<tr><th>engagement-performance r</th><td>{}</td></tr>\n\
                 <tr><th>two-tailed p</th><td>{}</td></tr>\n\
                 <tr><th>learners in cohort (joined)</th><td>{}</td></tr>\n\
                 <tr><th>learners missing a variable</th><td>{}</td></tr>\n",
                fmt6(r),
                if p < 0.000001 { "&lt; 0.000001".to_string() } else { fmt6(p) },
                corr.n,
                corr.excluded
            ));
            if let Some(s) = corr.spearman_r {
                page.push_str(&format!("<tr><th>spearman r (rank)</th><td>{}</td></tr>\n", fmt6(s)));
            }
        }
        _ => {
            let note = corr.note.as_deref().unwrap_or("not computed");
            page.push_str(&format!(
                "<tr><th>engagement-performance correlation</th><td class=\"warn\">no data ({})</td></tr>\n",
                esc(note)
            ));
        }
    }
    page.push_str(&format!(
        "<tr><th>untagged leaves</th><td>{}</td></tr>\n\
         <tr><th>objectives without activities</th><td>{}</td></tr>\n\
         <tr><th>objectives without assessment</th><td>{}</td></tr>\n</table>\n",
        tables.coverage.untagged_leaves.len(),
        tables.coverage.los_without_activities.len(),
        tables.coverage.los_without_assessment.len()
    ));

    let sections = [
        ("engagement", "Engagement", "fig1_engagement.svg"),
        ("performance", "Performance", "fig2_grades.svg"),
        ("alignment", "Alignment", "fig3_alignment.svg"),
        ("cognitive-load", "Cognitive load", "fig4_bloom.svg"),
    ];
    for (anchor, heading, file) in sections {
        page.push_str(&format!("<h2 id=\"{anchor}\">{heading}</h2>\n"));
        match charts.iter().find(|(name, _)| *name == file) {
            Some((_, svg)) => {
                page.push_str("<figure>\n");
                page.push_str(inline_svg(svg));
                page.push_str("</figure>\n");
            }
            None => page.push_str("<p class=\"warn\">no data</p>\n"),
        }
    }

    // Coverage diagnostics
    page.push_str("<h2 id=\"coverage\">Coverage diagnostics</h2>\n");
    page.push_str("<h3>Untagged leaf modules</h3>\n");
    page.push_str(&list_or_none(&tables.coverage.untagged_leaves));
    page.push_str("<h3>Objectives with no tagged activities</h3>\n");
    page.push_str(&list_or_none(&tables.coverage.los_without_activities));
    page.push_str("<h3>Objectives with no assessment measure</h3>\n");
    page.push_str(&list_or_none(&tables.coverage.los_without_assessment));

    page.push_str("<h3>Tag assignments per objective</h3>\n");
    if tables.coverage.tag_histogram.is_empty() {
        page.push_str("<p class=\"ok\">no data</p>\n");
    } else {
        page.push_str("<table class=\"summary\"><tr><th>objective</th><th>tagged activities</th></tr>\n");
        for (code, count) in &tables.coverage.tag_histogram {
            page.push_str(&format!(
                "<tr><td><code>{}</code></td><td>{}</td></tr>\n",
                esc(code),
                count
            ));
        }
        page.push_str("</table>\n");
    }

    page.push_str("</body>\n</html>\n");
    page
}
