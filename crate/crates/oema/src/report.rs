//! Text and JSON renderings of evaluation reports.

use std::fmt::Write;

use oema_core::eval::{EvalReport, Metrics};

fn row(out: &mut String, name: &str, m: &Metrics) {
    let _ = writeln!(
        out,
        "{name:<24} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>7}",
        m.precision, m.recall, m.f1, m.gold_count, m.pred_count, m.matched_count
    );
}

/// Fixed-width table: one line per type, then micro and macro.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "regime: {}", report.regime.name());
    let _ = writeln!(
        out,
        "{:<24} {:>9} {:>9} {:>9} {:>6} {:>6} {:>7}",
        "type", "precision", "recall", "f1", "gold", "pred", "matched"
    );
    for t in &report.per_type {
        row(&mut out, &t.label, &t.metrics);
    }
    row(&mut out, "micro", &report.micro);
    let m = &report.macro_avg;
    let _ = writeln!(out, "{:<24} {:>9.4} {:>9.4} {:>9.4}", "macro", m.precision, m.recall, m.f1);
    out
}

/// Pretty-printed JSON with a trailing newline.
pub fn render_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}
