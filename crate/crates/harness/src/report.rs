//! Rendering an evaluation report as a recall table.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::ThresholdPair;
use crate::error::{HarnessError, Result};
use crate::evaluate::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(HarnessError::InvalidConfig(format!(
                "unknown report format '{other}' (expected markdown, csv, or json)"
            ))),
        }
    }
}

fn threshold_heading(t: &ThresholdPair) -> String {
    format!("{}m/{}\u{b0}", t.pos_m, t.rot_deg)
}

fn markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("# Viewpoint selection recall\n\n");
    out.push_str(&format!(
        "Scenes {} — {} waypoints, {} candidates each. Config `{}`, master seed {}.\n\n",
        report.scenes.join(", "),
        report.waypoint_count,
        report.candidates_per_waypoint,
        report.config_hash,
        report.master_seed
    ));
    out.push_str("| policy |");
    for t in &report.thresholds {
        out.push_str(&format!(" {} |", threshold_heading(t)));
    }
    out.push_str("\n|---|");
    for _ in &report.thresholds {
        out.push_str("---:|");
    }
    out.push('\n');
    for row in report.policies.iter().chain(std::iter::once(&report.best)) {
        out.push_str(&format!("| {} |", row.label));
        for r in &row.recall_pct {
            out.push_str(&format!(" {r:.2}% |"));
        }
        out.push('\n');
    }
    out.push('\n');
    out.push_str("Expected recall of a uniform-random pick:");
    for (t, e) in report.thresholds.iter().zip(&report.random_expectation_pct) {
        out.push_str(&format!(" {} {:.2}%,", threshold_heading(t), e));
    }
    if out.ends_with(',') {
        out.pop();
    }
    out.push_str(".\n");
    out
}

fn csv(report: &EvalReport) -> String {
    let mut out = String::from("policy,pos_m,rot_deg,recall_pct\n");
    for row in report.policies.iter().chain(std::iter::once(&report.best)) {
        for (t, r) in report.thresholds.iter().zip(&row.recall_pct) {
            out.push_str(&format!("{},{},{},{:.2}\n", row.label, t.pos_m, t.rot_deg, r));
        }
    }
    out
}

/// Render the report in the requested format.
pub fn render(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Markdown => Ok(markdown(report)),
        ReportFormat::Csv => Ok(csv(report)),
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| HarnessError::Generation(format!("serializing report: {e}"))),
    }
}

/// Render and write `report.<ext>` under `out_dir`, returning the path.
pub fn render_to_file(report: &EvalReport, format: ReportFormat, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("report.{}", format.extension()));
    std::fs::write(&path, render(report, format)?)?;
    Ok(path)
}
