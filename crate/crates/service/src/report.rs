// Copyright 2026 The Epiwatch Authors
// SPDX-License-Identifier: Apache-2.0

//! The static top-k report: one HTML file, inline SVG plots, no scripts or
//! external resources. The same run always yields the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use epiwatch_core::filter::FilterSpec;
use epiwatch_core::store::FramePoint;
use epiwatch_core::Result;

use crate::views::{self, RankedRowView};
use crate::workspace::{pick_run, Workspace};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 180.0;
const PAD: f64 = 36.0;

const STYLE: &str = "body{font-family:system-ui,sans-serif;margin:2rem auto;max-width:780px;color:#222}\
h1{font-size:1.4rem}section{border-top:1px solid #ddd;padding:.6rem 0}\
h2{font-size:1rem;margin:.2rem 0}.meta{color:#555;font-size:.85rem;margin:.2rem 0}\
svg{display:block;background:#fafafa}polyline{fill:none;stroke:#3a6ea5;stroke-width:1.5}\
circle{fill:#3a6ea5}circle.hot{fill:#e0a030}circle.peak{fill:#c0392b}\
text{font-size:10px;fill:#666}table{border-collapse:collapse;font-size:.8rem}\
td,th{padding:1px 8px;text-align:right}";

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Value line for `points`, with a dot per scored date (hover for numbers).
fn plot(points: &[FramePoint], scores: &BTreeMap<NaiveDate, f64>, peak: NaiveDate) -> String {
    let mut svg = format!(
        "<svg viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\" role=\"img\">"
    );
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        svg.push_str("<text x=\"10\" y=\"20\">no data in window</text></svg>");
        return svg;
    };
    let span = (last.time_value - first.time_value).num_days().max(1) as f64;
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.value), hi.max(p.value))
    });
    let range = if hi > lo { hi - lo } else { 1.0 };
    let x = |d: NaiveDate| PAD + (d - first.time_value).num_days() as f64 / span * (WIDTH - 2.0 * PAD);
    let y = |v: f64| HEIGHT - PAD - (v - lo) / range * (HEIGHT - 2.0 * PAD);

    let line: Vec<String> = points
        .iter()
        .map(|p| format!("{:.1},{:.1}", x(p.time_value), y(p.value)))
        .collect();
    let _ = write!(svg, "<polyline points=\"{}\"/>", line.join(" "));
    for p in points {
        let Some(&score) = scores.get(&p.time_value) else {
            continue;
        };
        let class = if p.time_value == peak {
            "peak"
        } else if score >= 3.0 {
            "hot"
        } else {
            ""
        };
        let r = if p.time_value == peak { 4.0 } else { 2.0 };
        let _ = write!(
            svg,
            "<circle class=\"{class}\" cx=\"{:.1}\" cy=\"{:.1}\" r=\"{r}\"><title>{} value {} score {:.3}</title></circle>",
            x(p.time_value),
            y(p.value),
            p.time_value,
            p.value,
            score
        );
    }
    let _ = write!(
        svg,
        "<text x=\"2\" y=\"{:.1}\">{}</text><text x=\"2\" y=\"{:.1}\">{}</text>\
         <text x=\"{PAD}\" y=\"{}\">{}</text><text x=\"{:.1}\" y=\"{}\" text-anchor=\"end\">{}</text></svg>",
        y(hi) + 4.0,
        hi,
        y(lo) + 4.0,
        lo,
        HEIGHT - 8.0,
        first.time_value,
        WIDTH - PAD,
        HEIGHT - 8.0,
        last.time_value
    );
    svg
}

fn section(out: &mut String, row: &RankedRowView, points: &[FramePoint]) {
    let scores: BTreeMap<NaiveDate, f64> = row.row.window_scores.iter().copied().collect();
    let peak = &row.row.peak;
    let _ = write!(
        out,
        "<section id=\"rank-{rank}\"><h2>{rank}. {key}</h2>\
         <p class=\"meta\">{path}</p>\
         <p class=\"meta\">peak score {score:.3} on {date}: value {value}, expected {expected:.3}, dispersion {disp:.3}{bound}</p>",
        rank = row.row.rank,
        key = escape(&row.row.key.to_string()),
        path = escape(&row.geo_path.join(" / ")),
        score = peak.score,
        date = peak.time_value,
        value = peak.value,
        expected = peak.expected,
        disp = peak.dispersion,
        bound = if peak.violated_bound { ", implausible value" } else { "" },
    );
    if let Some(v) = row.avg_variance {
        let _ = write!(out, "<p class=\"meta\">score variance across revisions {v:.3}</p>");
    }
    out.push_str(&plot(points, &scores, peak.time_value));
    out.push_str("<details><summary>scores</summary><table><tr><th>date</th><th>score</th></tr>");
    for (date, score) in &row.row.window_scores {
        let _ = write!(out, "<tr><td>{date}</td><td>{score:.3}</td></tr>");
    }
    out.push_str("</table></details></section>\n");
}

/// Renders the top `k` streams of the run for `as_of`.
pub fn emit_report(ws: &Workspace, as_of: NaiveDate, k: usize, filter: Option<&FilterSpec>) -> Result<String> {
    let runs = ws.runs();
    let run = pick_run(&runs, Some(as_of))?;
    let mut ranked = views::rankings(ws, &runs, &run, k, 0, filter);
    // Reviewer annotations change over time; the report covers the run only.
    for row in &mut ranked.rows {
        row.triage.clear();
    }
    let snapshot = ws.snapshot();
    let window = ws.scoring().window_days;

    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\">\
         <title>Top {n} streams as of {as_of}</title><style>{STYLE}</style></head><body>\n\
         <h1>Top {n} streams as of {as_of}</h1>\
         <p class=\"meta\">run {run_id}; {total} ranked streams{filter}</p>\n",
        n = ranked.rows.len(),
        run_id = escape(&ranked.run_id),
        total = ranked.total,
        filter = ranked
            .filter
            .as_deref()
            .map(|f| format!("; filter {}", escape(f)))
            .unwrap_or_default(),
    );
    for row in &ranked.rows {
        let points = snapshot
            .latest_frame(&row.row.key, as_of, window)
            .map(|f| f.points)
            .unwrap_or_default();
        section(&mut out, row, &points);
    }
    out.push_str("</body></html>\n");
    Ok(out)
}

pub fn write_report(
    ws: &Workspace,
    as_of: NaiveDate,
    k: usize,
    filter: Option<&FilterSpec>,
    path: &Path,
) -> Result<()> {
    let html = emit_report(ws, as_of, k, filter)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, html)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b>&\"'"), "a&lt;b&gt;&amp;&quot;&#39;");
    }

    #[test]
    fn empty_plot_says_so() {
        assert!(plot(&[], &BTreeMap::new(), NaiveDate::MIN).contains("no data"));
    }
}
