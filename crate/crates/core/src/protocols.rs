//! Post-selection protocols and error reporting.
//!
//! A trial is one trained model identified by `theta_id`; its validation
//! and test errors form an [`ErrorSample`]. Post-selection ranks trials by
//! one of those errors and picks the luckiest few — the practice under
//! audit. Every outcome therefore carries the full distribution report over
//! *all* trials alongside the selected ones; nothing is dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::learners::{
    evaluate_error, fit_family, fit_honest, Learner, LearnerDescriptor, LearnerKind, Mode,
};
use crate::seed::derive_seed;

/// Default width, in sample standard deviations, of the tolerance bands
/// used by experiment verdicts.
pub const DEFAULT_SE_MULTIPLIER: f64 = 3.0;

/// Errors of one trial on the validation set and (when a test set exists)
/// on the withheld test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub theta_id: u64,
    pub descriptor: LearnerDescriptor,
    pub err_val: f64,
    pub err_test: Option<f64>,
}

/// Mean, sample standard deviation, and the five percentage positions
/// (0%, 25%, 50%, 75%, 100%) of a ranked error list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub mean: f64,
    /// `1/(n-1)` normalization; absent for a single sample.
    pub sample_std: Option<f64>,
    pub p0: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p100: f64,
}

impl EstimateReport {
    pub fn percentiles(&self) -> [f64; 5] {
        [self.p0, self.p25, self.p50, self.p75, self.p100]
    }

    /// Standard error of the reported mean.
    pub fn standard_error(&self) -> Option<f64> {
        self.sample_std.map(|s| s / (self.n as f64).sqrt())
    }
}

/// Minimum-MSE estimate of an error from weighted samples: the probability
/// mean `Σ e_i · P_i`.
pub fn min_mse_estimate(weighted_errors: &[(f64, f64)]) -> Result<f64> {
    if weighted_errors.is_empty() {
        return Err(Error::EmptyErrorList);
    }
    let mut total_p = 0.0;
    let mut mean = 0.0;
    for &(e, p) in weighted_errors {
        if p < 0.0 {
            return Err(Error::ProbabilitiesNotNormalized(p));
        }
        total_p += p;
        mean += e * p;
    }
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::ProbabilitiesNotNormalized(total_p));
    }
    Ok(mean)
}

/// Nearest-rank percentile of sorted values: rank `⌈q·n⌉` (1-based), with
/// 0% pinned to the first value and 100% to the last.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Build the full distribution report for a list of errors in `[0, 1]`.
pub fn estimate_report(errors: &[f64]) -> Result<EstimateReport> {
    if errors.is_empty() {
        return Err(Error::EmptyErrorList);
    }
    for &e in errors {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::ErrorValueOutOfRange(e));
        }
    }
    let n = errors.len();
    let mean = errors.iter().sum::<f64>() / n as f64;
    let sample_std = if n >= 2 {
        let ss: f64 = errors.iter().map(|e| (e - mean) * (e - mean)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("errors validated finite"));
    Ok(EstimateReport {
        n,
        mean,
        sample_std,
        p0: sorted[0],
        p25: nearest_rank(&sorted, 0.25),
        p50: nearest_rank(&sorted, 0.50),
        p75: nearest_rank(&sorted, 0.75),
        p100: sorted[n - 1],
    })
}

/// Which error the selection ranks on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Post-Selection Using Validation Set.
    #[serde(rename = "PSUVS")]
    Psuvs,
    /// Post-Selection Using Test Set — presumes illegitimate possession of
    /// the test set; modeled so the audit can measure it.
    #[serde(rename = "PSUTS")]
    Psuts,
}

impl std::fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionMode::Psuvs => "PSUVS",
            SelectionMode::Psuts => "PSUTS",
        })
    }
}

/// Result of post-selecting the luckiest `m` of `n` trials. The reports
/// always cover all `n` trials; the selection is recorded next to them,
/// never instead of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostSelectionOutcome {
    pub mode: SelectionMode,
    pub m: usize,
    /// Trial ids of the luckiest `m`, best first.
    pub luckiest_ids: Vec<u64>,
    /// Validation error of the single luckiest trial.
    pub luckiest_val_err: f64,
    /// Test error of the single luckiest trial, when a test set exists.
    pub luckiest_test_err: Option<f64>,
    /// Report over all `n` validation errors.
    pub report: EstimateReport,
    /// Report over all `n` test errors, when every trial has one.
    pub test_report: Option<EstimateReport>,
    /// `luckiest_test_err - luckiest_val_err`: how much the selected
    /// trial's reported performance overstates its future performance.
    pub inflation_gap: Option<f64>,
}

/// Rank trials by validation error (PSUVS) or test error (PSUTS) and record
/// the luckiest `m` alongside full reports over all trials.
pub fn post_select(
    samples: &[ErrorSample],
    mode: SelectionMode,
    m: usize,
) -> Result<PostSelectionOutcome> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyErrorList);
    }
    if m == 0 || m > n {
        return Err(Error::TopMExceedsTrials { m, n });
    }
    for s in samples {
        if !(0.0..=1.0).contains(&s.err_val) {
            return Err(Error::ErrorValueOutOfRange(s.err_val));
        }
        if let Some(t) = s.err_test {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::ErrorValueOutOfRange(t));
            }
        }
    }
    let all_test: Option<Vec<f64>> = samples.iter().map(|s| s.err_test).collect();
    if mode == SelectionMode::Psuts && all_test.is_none() {
        return Err(Error::MissingTestErrors);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| match mode {
            SelectionMode::Psuvs => samples[i].err_val,
            SelectionMode::Psuts => samples[i].err_test.expect("checked above"),
        };
        key(a)
            .partial_cmp(&key(b))
            .expect("errors validated finite")
            .then(samples[a].theta_id.cmp(&samples[b].theta_id))
    });

    let luckiest = &samples[order[0]];
    let val_errors: Vec<f64> = samples.iter().map(|s| s.err_val).collect();
    let report = estimate_report(&val_errors)?;
    let test_report = all_test.as_deref().map(estimate_report).transpose()?;

    Ok(PostSelectionOutcome {
        mode,
        m,
        luckiest_ids: order[..m].iter().map(|&i| samples[i].theta_id).collect(),
        luckiest_val_err: luckiest.err_val,
        luckiest_test_err: luckiest.err_test,
        report,
        test_report,
        inflation_gap: luckiest.err_test.map(|t| t - luckiest.err_val),
    })
}

/// Verdict of one lost-luck experiment.
///
/// The claim under test: the luckiest-on-validation trial's *test* error is
/// predicted by the average validation error over all trials, not by its
/// own (lucky) validation error. Tolerances are bands of
/// `se_multiplier` sample standard deviations of the per-trial test errors,
/// since the selected trial's test error is a single draw from that
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LostLuckVerdict {
    pub n: usize,
    pub mean_val_err: f64,
    pub luckiest_val_err: f64,
    pub luckiest_test_err: f64,
    /// Sample standard deviation of the per-trial test errors.
    pub sample_std_test: f64,
    /// Standard error of the mean test error over the `n` trials.
    pub se_test_mean: f64,
    pub se_multiplier: f64,
    pub tolerance: f64,
    /// `luckiest_test_err - mean_val_err`.
    pub average_predicts_gap: f64,
    /// The average-validation-error prediction holds within tolerance.
    pub average_predicts_test: bool,
    /// `luckiest_test_err - luckiest_val_err`.
    pub luck_transfer_gap: f64,
    /// Whether the trial's own lucky validation error predicted its test
    /// error within tolerance. Expected false on noisy data: that failure
    /// is the point.
    pub luck_transferred: bool,
    /// Strict under-estimation: the luckiest validation error is below the
    /// mean validation error.
    pub strict_underestimation: bool,
    pub pass: bool,
}

/// Outcome, verdict, and the raw per-trial samples of one lost-luck run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LostLuckResult {
    pub family: LearnerKind,
    pub samples: Vec<ErrorSample>,
    pub outcome: PostSelectionOutcome,
    pub verdict: LostLuckVerdict,
}

/// Fit `n` honest learners with derived seeds, evaluate each on the
/// validation and test sets, post-select the luckiest on validation, and
/// compare its test error against the average validation error.
pub fn lost_luck_experiment(
    dataset: &Dataset,
    split: &SplitPlan,
    family: &LearnerKind,
    n: usize,
    master_seed: u64,
    top_m: usize,
    se_multiplier: f64,
) -> Result<LostLuckResult> {
    if family.mode() != Mode::Honest {
        return Err(Error::ModeMismatch(format!(
            "lost-luck requires an honest family, got {family} (no extra structure is assumed)"
        )));
    }
    if split.test_idx.is_empty() {
        return Err(Error::EmptyTest);
    }
    if n < 2 {
        return Err(Error::TooFewTrials { need: 2, got: n });
    }

    let samples: Vec<ErrorSample> = (0..n as u64)
        .into_par_iter()
        .map(|theta_id| {
            let seed = derive_seed(master_seed, "lost-luck/trial", &[theta_id]);
            let learner = Learner::new(family.clone(), seed);
            let model = fit_honest(&learner, dataset, &split.fit_idx)?;
            let err_val = evaluate_error(&model, dataset, &split.val_idx)?;
            let err_test = evaluate_error(&model, dataset, &split.test_idx)?;
            Ok(ErrorSample {
                theta_id,
                descriptor: learner.descriptor(),
                err_val,
                err_test: Some(err_test),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let outcome = post_select(&samples, SelectionMode::Psuvs, top_m)?;
    let test_report = outcome.test_report.expect("test errors present");
    let luckiest_test_err = outcome.luckiest_test_err.expect("test errors present");

    let mean_val_err = outcome.report.mean;
    let sample_std_test = test_report.sample_std.expect("n >= 2");
    let tolerance = se_multiplier * sample_std_test;
    let average_predicts_gap = luckiest_test_err - mean_val_err;
    let luck_transfer_gap = luckiest_test_err - outcome.luckiest_val_err;
    let average_predicts_test = average_predicts_gap.abs() <= tolerance;
    let strict_underestimation = outcome.luckiest_val_err < mean_val_err;
    let verdict = LostLuckVerdict {
        n,
        mean_val_err,
        luckiest_val_err: outcome.luckiest_val_err,
        luckiest_test_err,
        sample_std_test,
        se_test_mean: test_report.standard_error().expect("n >= 2"),
        se_multiplier,
        tolerance,
        average_predicts_gap,
        average_predicts_test,
        luck_transfer_gap,
        luck_transferred: luck_transfer_gap.abs() <= tolerance,
        strict_underestimation,
        pass: average_predicts_test && strict_underestimation,
    };

    Ok(LostLuckResult {
        family: family.clone(),
        samples,
        outcome,
        verdict,
    })
}

/// Report for one architecture's `n` seeded trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureReport {
    pub kind: LearnerKind,
    pub report: EstimateReport,
}

/// Full report over a `k x n` grid of (architecture, seed) trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub trials: Vec<ErrorSample>,
    /// Report over all `k*n` validation errors.
    pub overall: EstimateReport,
    pub per_architecture: Vec<ArchitectureReport>,
    /// Spread between the best and worst per-architecture mean: a coarse
    /// view of how much the architecture choice itself matters.
    pub architecture_spread: f64,
}

/// Train the full `k x n` grid of (architecture, seed) learners and report
/// the error distribution over all of them, plus per-architecture
/// sub-reports.
pub fn report_all_networks(
    architectures: &[LearnerKind],
    weights_per_arch: usize,
    dataset: &Dataset,
    split: &SplitPlan,
    master_seed: u64,
) -> Result<GridReport> {
    if architectures.is_empty() {
        return Err(Error::TooFewCandidates { need: 1, got: 0 });
    }
    if weights_per_arch == 0 {
        return Err(Error::TooFewTrials { need: 1, got: 0 });
    }
    let n = weights_per_arch as u64;
    let trials: Vec<ErrorSample> = (0..architectures.len() as u64 * n)
        .into_par_iter()
        .map(|theta_id| {
            let arch_ix = (theta_id / n) as usize;
            let rep = theta_id % n;
            let kind = &architectures[arch_ix];
            let seed = derive_seed(master_seed, "report/trial", &[arch_ix as u64, rep]);
            let model = fit_family(kind, seed, dataset, &split.fit_idx, &split.val_idx)?;
            let err_val = evaluate_error(&model, dataset, &split.val_idx)?;
            let err_test = if split.test_idx.is_empty() {
                None
            } else {
                Some(evaluate_error(&model, dataset, &split.test_idx)?)
            };
            Ok(ErrorSample {
                theta_id,
                descriptor: LearnerDescriptor {
                    kind: kind.clone(),
                    seed,
                    mode: kind.mode(),
                },
                err_val,
                err_test,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let overall = estimate_report(&trials.iter().map(|t| t.err_val).collect::<Vec<_>>())?;
    let per_architecture: Vec<ArchitectureReport> = architectures
        .iter()
        .enumerate()
        .map(|(a, kind)| {
            let errs: Vec<f64> = trials
                .iter()
                .filter(|t| (t.theta_id / n) as usize == a)
                .map(|t| t.err_val)
                .collect();
            Ok(ArchitectureReport {
                kind: kind.clone(),
                report: estimate_report(&errs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let means: Vec<f64> = per_architecture.iter().map(|a| a.report.mean).collect();
    let architecture_spread = means.iter().cloned().fold(f64::MIN, f64::max)
        - means.iter().cloned().fold(f64::MAX, f64::min);

    Ok(GridReport {
        trials,
        overall,
        per_architecture,
        architecture_spread,
    })
}
