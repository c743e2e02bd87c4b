//! Protocol orchestration: config in, report files and a summary out.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde_json::json;

use postselect_core::{
    adversarial_injection, cv_misconduct_audit, derive_seed, estimate_report, generate_synthetic,
    lost_luck_experiment, make_folds, make_nested_folds, make_split, report_all_networks, CvScheme,
    Dataset, Error, LostLuckResult, Result, SplitFractions,
};

use crate::config::{ExperimentConfig, Protocol};
use crate::output;

pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    /// `None` for protocols without a verdict (gen-data, report).
    pub verdict_pass: Option<bool>,
}

pub fn run(config: &ExperimentConfig, show_misconduct_view: bool) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = generate_synthetic(
        config.dataset.generator,
        config.dataset.d,
        config.dataset.dim,
        config.dataset.num_labels,
        config.master_seed,
    )?;
    match config.protocol {
        Protocol::GenData => run_gen_data(config, &dataset),
        Protocol::LostLuck => run_lost_luck(config, &dataset, show_misconduct_view),
        Protocol::CvAudit | Protocol::NestedCvAudit => run_audit(config, &dataset),
        Protocol::Superlearner => run_superlearner(config, &dataset),
        Protocol::Report => run_report(config, &dataset),
    }
}

fn dataset_line(config: &ExperimentConfig) -> String {
    format!(
        "{}(d={}, dim={}, labels={}, seed={})",
        config.dataset.generator,
        config.dataset.d,
        config.dataset.dim,
        config.dataset.num_labels,
        config.master_seed
    )
}

fn run_gen_data(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome> {
    let dir = &config.output.dir;
    let csv_path = output::write_text(dir, "dataset.csv", &dataset.to_csv())?;
    let manifest_path = output::write_json(dir, "dataset", &dataset.manifest())?;
    let summary = format!(
        "gen-data: wrote {} samples of {} to {} (manifest {})\n",
        dataset.len(),
        dataset_line(config),
        csv_path.display(),
        manifest_path.display()
    );
    Ok(RunOutcome {
        files: vec![csv_path, manifest_path],
        summary,
        verdict_pass: None,
    })
}

fn lost_luck_summary(
    config: &ExperimentConfig,
    result: &LostLuckResult,
    show_misconduct_view: bool,
) -> String {
    let outcome = &result.outcome;
    let verdict = &result.verdict;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "lost-luck: {} x {} trials on {}",
        result.family,
        verdict.n,
        dataset_line(config)
    );
    if show_misconduct_view {
        let _ = writeln!(
            s,
            "--- misconduct view (luckiest-only; shown for contrast, never written to files) ---"
        );
        let _ = writeln!(
            s,
            "would-be headline: trial {} reaches validation error {:.6}",
            outcome.luckiest_ids[0], outcome.luckiest_val_err
        );
        let _ = writeln!(s, "--- full report (what the tool always emits) ---");
    }
    let _ = writeln!(s, "{}", output::estimate_line("V errors", &outcome.report));
    if let Some(test_report) = &outcome.test_report {
        let _ = writeln!(s, "{}", output::estimate_line("T errors", test_report));
    }
    let _ = writeln!(
        s,
        "luckiest trial {}: err_val={:.6} err_test={:.6} inflation_gap={:+.6}",
        outcome.luckiest_ids[0],
        outcome.luckiest_val_err,
        verdict.luckiest_test_err,
        outcome.inflation_gap.unwrap_or(0.0)
    );
    let _ = writeln!(
        s,
        "verdict average-predicts-test: |{:.6} - {:.6}| = {:.6} vs tolerance {:.6} ({} x std_T {:.6}) => {}",
        verdict.luckiest_test_err,
        verdict.mean_val_err,
        verdict.average_predicts_gap.abs(),
        verdict.tolerance,
        verdict.se_multiplier,
        verdict.sample_std_test,
        if verdict.average_predicts_test { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(
        s,
        "verdict luck-transfer: |{:.6} - {:.6}| = {:.6} vs tolerance {:.6} => {}",
        verdict.luckiest_test_err,
        verdict.luckiest_val_err,
        verdict.luck_transfer_gap.abs(),
        verdict.tolerance,
        if verdict.luck_transferred {
            "transferred (unusual)"
        } else {
            "did not transfer (as the analysis predicts)"
        }
    );
    let _ = writeln!(
        s,
        "verdict strict-underestimation: {:.6} < {:.6} => {}",
        verdict.luckiest_val_err,
        verdict.mean_val_err,
        if verdict.strict_underestimation {
            "PASS"
        } else {
            "FAIL"
        }
    );
    let _ = writeln!(
        s,
        "verdict overall: {}",
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    s
}

fn run_lost_luck(
    config: &ExperimentConfig,
    dataset: &Dataset,
    show_misconduct_view: bool,
) -> Result<RunOutcome> {
    let split_spec = config.split.expect("validated");
    let split = make_split(
        dataset,
        SplitFractions::new(split_spec.fit, split_spec.val, split_spec.test),
        derive_seed(config.master_seed, "cli/split", &[]),
    )?;
    let result = lost_luck_experiment(
        dataset,
        &split,
        &config.learners[0],
        config.trials.expect("validated"),
        config.master_seed,
        config.top_m.unwrap_or(1),
        config.se_multiplier,
    )?;

    let report = json!({
        "protocol": "lost-luck",
        "config": config.experiment_identity(),
        "outcome": result.outcome,
        "verdict": result.verdict,
    });
    let mut files = vec![output::write_json(
        &config.output.dir,
        "lost-luck",
        &report,
    )?];
    if config.output.csv {
        let csv = output::trials_csv(
            &result.samples,
            &result.outcome.report,
            result.outcome.test_report.as_ref(),
        );
        files.push(output::write_text(
            &config.output.dir,
            "lost-luck.csv",
            &csv,
        )?);
    }
    let verdict_pass = Some(result.verdict.pass);
    Ok(RunOutcome {
        files,
        summary: lost_luck_summary(config, &result, show_misconduct_view),
        verdict_pass,
    })
}

fn run_audit(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome> {
    let withheld_size = config.withheld_test.expect("validated");
    let universe = dataset.len() - withheld_size;
    let withheld: Vec<usize> = (universe..dataset.len()).collect();

    let folds;
    let nested;
    let scheme = match config.protocol {
        Protocol::CvAudit => {
            folds = make_folds(
                universe,
                config.folds.expect("validated"),
                derive_seed(config.master_seed, "cli/folds", &[]),
            )?;
            CvScheme::Folds(&folds)
        }
        Protocol::NestedCvAudit => {
            let spec = config.nested.expect("validated");
            nested = make_nested_folds(
                universe,
                spec.n,
                spec.k,
                derive_seed(config.master_seed, "cli/nested", &[]),
            )?;
            CvScheme::Nested(&nested)
        }
        _ => unreachable!("run_audit only handles audit protocols"),
    };

    let audit = cv_misconduct_audit(
        dataset,
        scheme,
        &config.learners,
        &withheld,
        config.master_seed,
        config.honest_tolerance,
    )?;

    // A report carrying per-fold errors must carry their full distribution
    // report as well.
    let mut audit_value = serde_json::to_value(&audit)?;
    for family in audit_value["families"]
        .as_array_mut()
        .expect("families is an array")
    {
        let fold_errors: Vec<f64> = serde_json::from_value(family["fold_errors"].clone())?;
        family["fold_error_report"] = serde_json::to_value(estimate_report(&fold_errors)?)?;
    }
    let report = json!({
        "protocol": config.protocol.name(),
        "config": config.experiment_identity(),
        "audit": audit_value,
    });

    let mut files = vec![output::write_json(
        &config.output.dir,
        config.protocol.name(),
        &report,
    )?];
    if config.output.csv {
        files.push(output::write_text(
            &config.output.dir,
            &format!("{}.csv", config.protocol.name()),
            &output::audit_csv(&audit),
        )?);
    }

    let mut summary = format!(
        "{}: {} cross-validation over {} development samples, {} withheld test samples, {}\n",
        config.protocol,
        audit.scheme,
        audit.universe_size,
        audit.withheld_test_size,
        dataset_line(config)
    );
    let _ = writeln!(
        summary,
        "chance error for this dataset: {:.4}",
        audit.chance_error
    );
    for line in output::audit_verdict_lines(&audit) {
        let _ = writeln!(summary, "{line}");
    }
    let _ = writeln!(
        summary,
        "verdict overall: {}",
        if audit.all_pass { "PASS" } else { "FAIL" }
    );
    Ok(RunOutcome {
        files,
        summary,
        verdict_pass: Some(audit.all_pass),
    })
}

fn run_superlearner(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome> {
    let withheld_size = config.withheld_test.expect("validated");
    let universe = dataset.len() - withheld_size;
    let withheld: Vec<usize> = (universe..dataset.len()).collect();
    let misconduct = config.misconduct.as_ref().expect("validated");

    let folds;
    let nested;
    let scheme = if let Some(spec) = config.nested {
        nested = make_nested_folds(
            universe,
            spec.n,
            spec.k,
            derive_seed(config.master_seed, "cli/nested", &[]),
        )?;
        CvScheme::Nested(&nested)
    } else {
        folds = make_folds(
            universe,
            config.folds.ok_or_else(|| {
                Error::InvalidConfig("superlearner needs `folds` or `nested`".into())
            })?,
            derive_seed(config.master_seed, "cli/folds", &[]),
        )?;
        CvScheme::Folds(&folds)
    };

    let (result, verdict) = adversarial_injection(
        dataset,
        scheme,
        &config.learners,
        misconduct,
        config.grid_step.expect("validated"),
        &withheld,
        config.master_seed,
    )?;

    let report = json!({
        "protocol": "superlearner",
        "config": config.experiment_identity(),
        "result": result,
        "verdict": verdict,
    });
    let mut files = vec![output::write_json(
        &config.output.dir,
        "superlearner",
        &report,
    )?];
    if config.output.csv {
        files.push(output::write_text(
            &config.output.dir,
            "superlearner.csv",
            &output::superlearner_csv(&result),
        )?);
    }

    let mut summary = format!(
        "superlearner: exhaustive search over {} grid points (step {}) with {} injected, {}\n",
        result.grid_points,
        result.grid_step,
        verdict.misconduct,
        dataset_line(config)
    );
    for (i, kind) in result.candidates.iter().enumerate() {
        let _ = writeln!(
            summary,
            "candidate {}: weight={:.4} single-candidate risk={:.4}",
            kind, result.weights[i], result.candidate_risks[i]
        );
    }
    let _ = writeln!(
        summary,
        "cv_risk of returned weighting: {:.6}",
        result.cv_risk
    );
    let _ = writeln!(
        summary,
        "verdict capture: weight={:.4} cv_risk={:.6} => {}",
        verdict.misconduct_weight,
        verdict.cv_risk,
        if verdict.captured {
            "captured"
        } else {
            "no capture"
        }
    );
    let _ = writeln!(
        summary,
        "verdict withheld test: error={:.6} vs chance {:.4} (tolerance {:.4}) => {}",
        verdict.withheld_test_error,
        verdict.chance_error,
        verdict.chance_tolerance,
        if verdict.test_near_chance {
            "at chance"
        } else {
            "off chance"
        }
    );
    let _ = writeln!(
        summary,
        "verdict overall: {}",
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    Ok(RunOutcome {
        files,
        summary,
        verdict_pass: Some(verdict.pass),
    })
}

fn run_report(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome> {
    let split_spec = config.split.expect("validated");
    let split = make_split(
        dataset,
        SplitFractions::new(split_spec.fit, split_spec.val, split_spec.test),
        derive_seed(config.master_seed, "cli/split", &[]),
    )?;
    let grid = report_all_networks(
        &config.learners,
        config.trials.expect("validated"),
        dataset,
        &split,
        config.master_seed,
    )?;

    let report = json!({
        "protocol": "report",
        "config": config.experiment_identity(),
        "overall": grid.overall,
        "per_architecture": grid.per_architecture,
        "architecture_spread": grid.architecture_spread,
        "trial_count": grid.trials.len(),
    });
    let mut files = vec![output::write_json(&config.output.dir, "report", &report)?];
    if config.output.csv {
        files.push(output::write_text(
            &config.output.dir,
            "report.csv",
            &output::grid_report_csv(&grid),
        )?);
    }

    let mut summary = format!(
        "report: {} architectures x {} seeds on {}\n",
        config.learners.len(),
        config.trials.expect("validated"),
        dataset_line(config)
    );
    let _ = writeln!(
        summary,
        "{}",
        output::estimate_line("all trials", &grid.overall)
    );
    for arch in &grid.per_architecture {
        let _ = writeln!(
            summary,
            "{}",
            output::estimate_line(&format!("  {}", arch.kind), &arch.report)
        );
    }
    let _ = writeln!(
        summary,
        "architecture spread (max mean - min mean): {:.6}",
        grid.architecture_spread
    );
    Ok(RunOutcome {
        files,
        summary,
        verdict_pass: None,
    })
}
