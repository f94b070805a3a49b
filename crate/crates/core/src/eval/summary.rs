//! Static HTML summary of an experiment.

use std::fmt::Write;

use super::matrix::{Cell, DetectionMatrix};
use super::metrics::EffectivenessMetrics;
use super::SelfCheck;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn mark(c: Cell) -> &'static str {
    match c {
        Cell::Detected => "D",
        Cell::NotDetected => ".",
        Cell::ActivatedOnly => "a",
        Cell::TestError => "E",
        Cell::Excluded => "x",
    }
}

pub fn render_summary(
    experiment_id: &str,
    matrix: &DetectionMatrix,
    metrics: &EffectivenessMetrics,
    checks: &[SelfCheck],
) -> String {
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Experiment {0}</title>\n\
         <style>body{{font-family:sans-serif}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #ccc;padding:2px 6px;text-align:center}}\
         .detected{{background:#b7e1b5}}.activated_only{{background:#f7e19c}}\
         .test_error{{background:#f2a7a7}}.excluded{{background:#ddd}}\
         .fail{{color:#b00}}</style></head><body>\n<h1>Experiment {0}</h1>\n",
        esc(experiment_id)
    );
    let _ = writeln!(
        h,
        "<p>Overall detection rate: <b>{:.3}</b> ({} of {} clones detected)</p>",
        metrics.overall_detection_rate, metrics.detected_clones, metrics.clones
    );
    h.push_str("<h2>Self-checks</h2>\n<ul>\n");
    for c in checks {
        let _ = writeln!(
            h,
            "<li class=\"{}\">{} {}: {}</li>",
            if c.passed { "pass" } else { "fail" },
            if c.passed { "PASS" } else { "FAIL" },
            esc(&c.name),
            esc(&c.detail)
        );
    }
    h.push_str("</ul>\n<h2>Clones</h2>\n<table><tr><th>clone</th><th>detected by</th><th>first detecting test</th><th>activated only</th><th>test errors</th></tr>\n");
    for (clone, m) in &metrics.per_clone_detection {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            esc(clone),
            m.detected_by,
            esc(m.first_detecting_test.as_deref().unwrap_or("-")),
            m.activated_only,
            m.test_errors
        );
    }
    h.push_str("</table>\n<h2>Detection matrix</h2>\n<p>D detected, a activated only, E test error, x excluded, . not detected</p>\n<table><tr><th>test</th>");
    for c in &matrix.clones {
        let _ = write!(h, "<th>{}</th>", esc(c));
    }
    h.push_str("</tr>\n");
    for (t, row) in matrix.tests.iter().zip(&matrix.cells) {
        let _ = write!(h, "<tr><td>{}</td>", esc(t));
        for c in row {
            let _ = write!(h, "<td class=\"{}\">{}</td>", c.as_str(), mark(*c));
        }
        h.push_str("</tr>\n");
    }
    h.push_str("</table>\n");
    if !matrix.warnings.is_empty() {
        h.push_str("<h2>Warnings</h2>\n<ul>\n");
        for w in &matrix.warnings {
            let _ = writeln!(h, "<li>{}</li>", esc(w));
        }
        h.push_str("</ul>\n");
    }
    h.push_str("</body></html>\n");
    h
}
