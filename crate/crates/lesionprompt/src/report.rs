//! Text and CSV renderings of metrics reports and curves.

use std::fmt::Write as _;

use lesionprompt_core::metrics::{MetricsReport, Summary, TTest};
use lesionprompt_core::selection::MetricCurve;

fn pct(s: &Summary) -> String {
    format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.std)
}

fn p(t: &TTest) -> String {
    format!("t = {:.4}, df = {}, p = {:.4}", t.t, t.degrees_of_freedom, t.p_value)
}

/// One row per case (fractions), then mean ± std in percent.
pub fn table(report: &MetricsReport) -> String {
    let width = report.cases.iter().map(|c| c.case_id.len()).max().unwrap_or(0).max(10);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}  {:>8}", "case", "dice", "precision", "recall");
    for c in &report.cases {
        let _ = writeln!(s, "{:<width$}  {:>8.4}  {:>9.4}  {:>8.4}", c.case_id, c.dice, c.precision, c.recall);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "n = {}", report.cases.len());
    let _ = writeln!(s, "Dice (%)      {}", pct(&report.dice));
    let _ = writeln!(s, "Precision (%) {}", pct(&report.precision));
    let _ = writeln!(s, "Recall (%)    {}", pct(&report.recall));
    if let Some(c) = &report.comparison {
        let _ = writeln!(s);
        let _ = writeln!(s, "paired t-test against baseline");
        let _ = writeln!(s, "Dice      {}", p(&c.dice));
        let _ = writeln!(s, "Precision {}", p(&c.precision));
        let _ = writeln!(s, "Recall    {}", p(&c.recall));
    }
    s
}

pub fn cases_csv(report: &MetricsReport) -> String {
    let mut s = String::from("case_id,dice,precision,recall,tp,fp,fn\n");
    for c in &report.cases {
        let _ = writeln!(s, "{},{},{},{},{},{},{}", c.case_id, c.dice, c.precision, c.recall, c.tp, c.fp, c.fn_);
    }
    s
}

pub fn curve_csv(curve: &MetricCurve) -> String {
    let mut s = String::from("epoch,dice,train_loss\n");
    for e in &curve.entries {
        let loss = e.train_loss.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", e.epoch, e.dice, loss);
    }
    s
}
