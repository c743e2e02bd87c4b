//! Report files and summary formatting.
//!
//! JSON files are canonical (sorted keys, fixed 12-significant-digit
//! floats) so equal experiments produce byte-identical bytes. CSV files
//! document their columns in the header row and use the same float format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use postselect_core::{
    canonical_json_line, format_float, AuditReport, ErrorSample, EstimateReport, GridReport,
    Result, SuperLearnerResult,
};

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, canonical_json_line(value))?;
    Ok(path)
}

pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// One-line five-percentile summary of a report.
pub fn estimate_line(label: &str, report: &EstimateReport) -> String {
    let std = report
        .sample_std
        .map(|s| format!("{s:.6}"))
        .unwrap_or_else(|| "n/a".into());
    format!(
        "{label}  n={}  mean={:.6}  std={std}  percentiles[0/25/50/75/100%]={:.4}/{:.4}/{:.4}/{:.4}/{:.4}",
        report.n, report.mean, report.p0, report.p25, report.p50, report.p75, report.p100
    )
}

/// Per-trial rows plus summary rows for a post-selection style result.
pub fn trials_csv(
    samples: &[ErrorSample],
    report: &EstimateReport,
    test_report: Option<&EstimateReport>,
) -> String {
    let mut out = String::from("kind,theta_id,descriptor,err_val,err_test\n");
    for s in samples {
        let _ = writeln!(
            out,
            "trial,{},{},{},{}",
            s.theta_id,
            s.descriptor,
            format_float(s.err_val),
            opt_float(s.err_test)
        );
    }
    let summary = |out: &mut String, kind: &str, v: Option<f64>, t: Option<f64>| {
        let _ = writeln!(out, "{kind},,,{},{}", opt_float(v), opt_float(t));
    };
    summary(
        &mut out,
        "mean",
        Some(report.mean),
        test_report.map(|r| r.mean),
    );
    summary(
        &mut out,
        "sample_std",
        report.sample_std,
        test_report.and_then(|r| r.sample_std),
    );
    for (name, pick) in [
        ("p0", 0usize),
        ("p25", 1),
        ("p50", 2),
        ("p75", 3),
        ("p100", 4),
    ] {
        summary(
            &mut out,
            name,
            Some(report.percentiles()[pick]),
            test_report.map(|r| r.percentiles()[pick]),
        );
    }
    out
}

pub fn audit_csv(report: &AuditReport) -> String {
    let mut out = String::from(
        "family,mode,consumed_validation,cv_error,withheld_test_error,gap,total_guess_count,pass\n",
    );
    for row in &report.families {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.family,
            row.mode,
            row.consumed_validation,
            format_float(row.cv_error),
            format_float(row.withheld_test_error),
            format_float(row.gap),
            row.total_guess_count,
            row.pass
        );
    }
    out
}

pub fn superlearner_csv(result: &SuperLearnerResult) -> String {
    let mut out = String::from("kind,candidate,weight,candidate_risk\n");
    for (i, kind) in result.candidates.iter().enumerate() {
        let _ = writeln!(
            out,
            "candidate,{},{},{}",
            kind,
            format_float(result.weights[i]),
            format_float(result.candidate_risks[i])
        );
    }
    let _ = writeln!(out, "cv_risk,,{},", format_float(result.cv_risk));
    if let Some(t) = result.withheld_test_error {
        let _ = writeln!(out, "withheld_test_error,,{},", format_float(t));
    }
    out
}

pub fn grid_report_csv(report: &GridReport) -> String {
    let mut out = String::from("kind,theta_id,descriptor,err_val,err_test\n");
    for t in &report.trials {
        let _ = writeln!(
            out,
            "trial,{},{},{},{}",
            t.theta_id,
            t.descriptor,
            format_float(t.err_val),
            opt_float(t.err_test)
        );
    }
    for arch in &report.per_architecture {
        let _ = writeln!(
            out,
            "architecture-mean,,{},{},",
            arch.kind,
            format_float(arch.report.mean)
        );
    }
    let _ = writeln!(out, "overall-mean,,,{},", format_float(report.overall.mean));
    out
}

/// The audit's one-line machine-readable verdicts.
pub fn audit_verdict_lines(report: &AuditReport) -> Vec<String> {
    report
        .families
        .iter()
        .map(|row| {
            format!(
                "verdict family={} mode={} cv_error={} test_error={} gap={} pass={}",
                row.family,
                row.mode,
                format_float(row.cv_error),
                format_float(row.withheld_test_error),
                format_float(row.gap),
                row.pass
            )
        })
        .collect()
}
