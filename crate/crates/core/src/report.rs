//! Leaderboard rendering: markdown, CSV and JSON.

use std::fmt::Write as _;

use crate::aggregate::{AggregateReport, Interval};
use crate::numfmt::{format_g17, to_json_pretty};

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn opt(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "-".to_string())
}

fn ci_pct(point: f64, ci: &Interval) -> String {
    format!("{} [{}, {}]", pct(point), pct(ci.lower), pct(ci.upper))
}

/// Markdown leaderboard followed by the pairwise tables with intervals.
pub fn render_markdown(report: &AggregateReport) -> String {
    let mut out = String::new();
    let metric = report.metric.as_deref().unwrap_or("error");
    let _ = writeln!(
        out,
        "# Leaderboard ({metric}, {} tasks, baseline `{}`)\n",
        report.num_tasks, report.baseline
    );
    out.push_str("| Model | Avg. win rate (%) | Skill score (%) | Median runtime (s) | Leakage (%) | # failures |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|\n");
    for row in &report.marginal {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.0} | {} |",
            row.model,
            pct(row.avg_win_rate),
            pct(row.skill_score),
            opt(row.median_runtime_s, |r| format!("{r:.3}")),
            row.leakage_pct,
            row.failures
        );
    }

    let names = &report.model_names;
    let table = |out: &mut String, title: &str, values: &[Vec<f64>], cis: &[Vec<Interval>]| {
        let _ = writeln!(
            out,
            "\n## {title} (row vs column, {:.0}% CI)\n",
            100.0 * (1.0 - report.bootstrap.alpha)
        );
        let _ = writeln!(out, "| | {} |", names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(names.len()));
        for (j, name) in names.iter().enumerate() {
            let cells: Vec<String> = (0..names.len())
                .map(|k| ci_pct(values[j][k], &cis[j][k]))
                .collect();
            let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
        }
    };
    table(
        &mut out,
        "Pairwise win rate (%)",
        &report.pairwise_win_rate,
        &report.win_rate_intervals,
    );
    table(
        &mut out,
        "Pairwise skill score (%)",
        &report.pairwise_skill,
        &report.skill_intervals,
    );

    out.push_str(
        "\n## Cross-checks\n\n| Model | Average rank | Bradley-Terry rating |\n|---|---:|---:|\n",
    );
    for row in &report.marginal {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {} |",
            row.model,
            row.average_rank,
            opt(row.bt_rating, |t| format!("{t:.1}"))
        );
    }
    if let Some(err) = &report.bradley_terry.error {
        let _ = writeln!(out, "\nRatings unavailable: {err}");
    }
    if !report.imputations.is_empty() {
        out.push_str("\n## Imputations\n\n| Task | Model | Reason | Source |\n|---|---|---|---|\n");
        for imp in &report.imputations {
            let reason = match imp.reason {
                crate::aggregate::ImputationReason::Failure => "failure",
                crate::aggregate::ImputationReason::Leakage => "leakage",
            };
            let _ = writeln!(
                out,
                "| {} | {} | {reason} | {} |",
                imp.task_name, imp.model_name, imp.source_model
            );
        }
    }
    out
}

/// One row per model with full-precision values.
pub fn render_csv(report: &AggregateReport) -> String {
    let mut out = String::from(
        "model,avg_win_rate_pct,skill_score_pct,median_runtime_s,leakage_pct,failures,average_rank,bt_rating\n",
    );
    for row in &report.marginal {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&row.model),
            format_g17(100.0 * row.avg_win_rate),
            format_g17(100.0 * row.skill_score),
            row.median_runtime_s.map(format_g17).unwrap_or_default(),
            format_g17(row.leakage_pct),
            row.failures,
            format_g17(row.average_rank),
            row.bt_rating.map(format_g17).unwrap_or_default(),
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_json(report: &AggregateReport) -> String {
    let mut s = to_json_pretty(report).expect("report serializes");
    s.push('\n');
    s
}
