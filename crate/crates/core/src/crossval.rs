//! Traditional and nested (input-output) cross-validation, plus the
//! misconduct audit.
//!
//! Misconduct families receive each fold's validation set at fit time —
//! the premise is that fit and validation data are both in the developer's
//! possession. The withheld test set is different: it is never passed to
//! any fitting code path, and the audit rejects plans that overlap it.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, FoldPlan, NestedFoldPlan};
use crate::error::{Error, Result};
use crate::learners::{
    evaluate_error, fit_family, LearnerKind, Mode, ResourceLedger, TrainedModel,
};
use crate::seed::derive_seed;

/// Default band for "honest families transfer": `|cv - test| <= 0.1`.
pub const DEFAULT_HONEST_TOLERANCE: f64 = 0.1;

/// Either a flat fold plan or a nested input-output plan.
#[derive(Debug, Clone, Copy)]
pub enum CvScheme<'a> {
    Folds(&'a FoldPlan),
    Nested(&'a NestedFoldPlan),
}

impl<'a> CvScheme<'a> {
    pub fn label(&self) -> &'static str {
        match self {
            CvScheme::Folds(_) => "n-fold",
            CvScheme::Nested(_) => "nested",
        }
    }

    pub fn universe_size(&self) -> usize {
        match self {
            CvScheme::Folds(p) => p.source_size,
            CvScheme::Nested(p) => p.source_size,
        }
    }

    /// The independent work units: `(fit, validation, seed indices)`.
    pub(crate) fn units(&self) -> Vec<CvUnit> {
        match self {
            CvScheme::Folds(plan) => (0..plan.num_folds())
                .map(|v| CvUnit {
                    fit: plan.fit_indices(v),
                    val: plan.folds[v].clone(),
                    seed_label: "cv/fold",
                    seed_indices: vec![v as u64],
                })
                .collect(),
            CvScheme::Nested(plan) => {
                let mut units = Vec::with_capacity(plan.num_cells());
                for i in 0..plan.num_input_folds() {
                    for j in 0..plan.num_output_folds() {
                        units.push(CvUnit {
                            fit: plan.fit_indices(i, j),
                            val: plan.cell(i, j).to_vec(),
                            seed_label: "nested-cv/cell",
                            seed_indices: vec![i as u64, j as u64],
                        });
                    }
                }
                units
            }
        }
    }
}

pub(crate) struct CvUnit {
    pub fit: Vec<usize>,
    pub val: Vec<usize>,
    pub seed_label: &'static str,
    pub seed_indices: Vec<u64>,
}

/// Result of cross-validating one family over a plan.
///
/// The per-fold models are retained (not serialized) so downstream
/// consumers — the audit's withheld-test evaluation, the Super Learner —
/// can reuse the exact fitted states instead of refitting.
#[derive(Debug, Clone, Serialize)]
pub struct CvResult {
    pub family: LearnerKind,
    pub consumed_validation: bool,
    pub fold_errors: Vec<f64>,
    /// Exact arithmetic mean of `fold_errors`.
    pub cv_error: f64,
    pub per_fold_ledgers: Vec<ResourceLedger>,
    pub withheld_test_error: Option<f64>,
    #[serde(skip)]
    pub models: Vec<TrainedModel>,
}

fn run_units(
    dataset: &Dataset,
    units: &[CvUnit],
    family: &LearnerKind,
    seed: u64,
) -> Result<Vec<(f64, TrainedModel)>> {
    units
        .par_iter()
        .map(|unit| {
            let unit_seed = derive_seed(seed, unit.seed_label, &unit.seed_indices);
            let model = fit_family(family, unit_seed, dataset, &unit.fit, &unit.val)?;
            let err = evaluate_error(&model, dataset, &unit.val)?;
            Ok((err, model))
        })
        .collect()
}

fn cross_validate_scheme(
    dataset: &Dataset,
    scheme: CvScheme<'_>,
    family: &LearnerKind,
    seed: u64,
) -> Result<CvResult> {
    if scheme.universe_size() > dataset.len() {
        return Err(Error::InvalidDataset(format!(
            "plan covers {} indices but the dataset has {}",
            scheme.universe_size(),
            dataset.len()
        )));
    }
    match scheme {
        CvScheme::Folds(plan) => plan.validate()?,
        CvScheme::Nested(plan) => plan.validate()?,
    }
    let units = scheme.units();
    let fitted = run_units(dataset, &units, family, seed)?;
    let fold_errors: Vec<f64> = fitted.iter().map(|(e, _)| *e).collect();
    let cv_error = fold_errors.iter().sum::<f64>() / fold_errors.len() as f64;
    let models: Vec<TrainedModel> = fitted.into_iter().map(|(_, m)| m).collect();
    Ok(CvResult {
        family: family.clone(),
        consumed_validation: family.consumes_validation(),
        fold_errors,
        cv_error,
        per_fold_ledgers: models.iter().map(|m| *m.ledger()).collect(),
        withheld_test_error: None,
        models,
    })
}

/// n-fold cross-validation: for each fold, fit on everything else and
/// evaluate on the fold; the cross-validated error is the exact mean.
pub fn cross_validate(
    dataset: &Dataset,
    folds: &FoldPlan,
    family: &LearnerKind,
    seed: u64,
) -> Result<CvResult> {
    cross_validate_scheme(dataset, CvScheme::Folds(folds), family, seed)
}

/// Input-output cross-validation: one model per cell `(i, j)`, fit on the
/// universe minus the cell, evaluated on the cell; the cross-validated
/// error is the mean over all `n*k` cells.
pub fn nested_cross_validate(
    dataset: &Dataset,
    plan: &NestedFoldPlan,
    family: &LearnerKind,
    seed: u64,
) -> Result<CvResult> {
    cross_validate_scheme(dataset, CvScheme::Nested(plan), family, seed)
}

/// One family's row in the audit.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyAudit {
    pub family: LearnerKind,
    pub mode: Mode,
    pub consumed_validation: bool,
    pub cv_error: f64,
    pub fold_errors: Vec<f64>,
    /// Mean error of the per-fold models on the withheld test set: the
    /// cross-validated system is all of its folds' models.
    pub withheld_test_error: f64,
    pub per_model_test_errors: Vec<f64>,
    /// `withheld_test_error - cv_error`.
    pub gap: f64,
    pub ledgers: Vec<ResourceLedger>,
    pub total_guess_count: u64,
    /// Misconduct families pass by exhibiting their construction's
    /// guarantee (`cv_error` exactly zero); honest families pass when cv
    /// and test agree within the tolerance.
    pub pass: bool,
}

/// Audit report over several families on one plan.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub scheme: String,
    pub universe_size: usize,
    pub withheld_test_size: usize,
    /// `1 - 1/num_labels` for the audited dataset.
    pub chance_error: f64,
    pub honest_tolerance: f64,
    pub families: Vec<FamilyAudit>,
    pub all_pass: bool,
}

/// Cross-validate each family over the plan, then evaluate every per-fold
/// model on a withheld test set the fitting code never saw.
///
/// The point of the audit: misconduct families post a cross-validated zero
/// while their withheld-test error sits at chance; honest families show
/// agreeing cv and test errors.
pub fn cv_misconduct_audit(
    dataset: &Dataset,
    scheme: CvScheme<'_>,
    families: &[LearnerKind],
    withheld_test: &[usize],
    seed: u64,
    honest_tolerance: f64,
) -> Result<AuditReport> {
    if withheld_test.is_empty() {
        return Err(Error::EmptyTest);
    }
    if !families.iter().any(|f| f.mode() == Mode::Misconduct) {
        return Err(Error::NoMisconductFamily);
    }
    let universe = scheme.universe_size();
    for &i in withheld_test {
        if i >= dataset.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                d: dataset.len(),
            });
        }
        if i < universe {
            return Err(Error::OverlappingIndices(format!(
                "withheld test index {i} lies inside the fold universe 0..{universe}"
            )));
        }
    }

    let mut audits = Vec::with_capacity(families.len());
    for (f_ix, family) in families.iter().enumerate() {
        let family_seed = derive_seed(seed, "audit/family", &[f_ix as u64]);
        let cv = cross_validate_scheme(dataset, scheme, family, family_seed)?;
        let per_model_test_errors: Vec<f64> = cv
            .models
            .par_iter()
            .map(|m| evaluate_error(m, dataset, withheld_test))
            .collect::<Result<Vec<_>>>()?;
        let withheld_test_error =
            per_model_test_errors.iter().sum::<f64>() / per_model_test_errors.len() as f64;
        let gap = withheld_test_error - cv.cv_error;
        let pass = match family.mode() {
            Mode::Misconduct => cv.cv_error == 0.0,
            Mode::Honest => gap.abs() <= honest_tolerance,
        };
        audits.push(FamilyAudit {
            family: family.clone(),
            mode: family.mode(),
            consumed_validation: family.consumes_validation(),
            cv_error: cv.cv_error,
            fold_errors: cv.fold_errors,
            withheld_test_error,
            per_model_test_errors,
            gap,
            total_guess_count: cv.per_fold_ledgers.iter().map(|l| l.guess_count).sum(),
            ledgers: cv.per_fold_ledgers,
            pass,
        });
    }

    let all_pass = audits.iter().all(|a| a.pass);
    Ok(AuditReport {
        scheme: scheme.label().to_string(),
        universe_size: universe,
        withheld_test_size: withheld_test.len(),
        chance_error: dataset.chance_error(),
        honest_tolerance,
        families: audits,
        all_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, make_folds, make_nested_folds, GeneratorKind};
    use crate::learners::ThresholdSpec;

    fn nnwt() -> LearnerKind {
        LearnerKind::Nnwt {
            threshold: ThresholdSpec::Construction,
        }
    }

    #[test]
    fn one_nn_loocv_on_clusters_is_near_zero() {
        let data = generate_synthetic(GeneratorKind::GaussianClusters, 60, 2, 3, 1).unwrap();
        let folds = make_folds(60, 60, 1).unwrap();
        let cv = cross_validate(&data, &folds, &LearnerKind::OneNn, 1).unwrap();
        assert!(cv.cv_error <= 0.05, "cv error {}", cv.cv_error);
        assert_eq!(cv.fold_errors.len(), 60);
        assert!(!cv.consumed_validation);
    }

    #[test]
    fn nnwt_cv_error_is_exactly_zero() {
        for seed in 0..5 {
            let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 50, 2, 2, seed).unwrap();
            let folds = make_folds(50, 5, seed).unwrap();
            let cv = cross_validate(&data, &folds, &nnwt(), seed).unwrap();
            assert_eq!(cv.cv_error, 0.0, "seed {seed}");
            assert!(cv.consumed_validation);
        }
    }

    #[test]
    fn constant_on_balanced_two_label_data_is_half() {
        // labeled-grid with an even count gives exactly balanced labels;
        // equal fold sizes make the fold-mean equal the global fraction.
        let data = generate_synthetic(GeneratorKind::LabeledGrid, 60, 2, 2, 0).unwrap();
        let folds = make_folds(60, 5, 3).unwrap();
        let cv = cross_validate(&data, &folds, &LearnerKind::Constant { label: 0 }, 3).unwrap();
        assert!(
            (cv.cv_error - 0.5).abs() < 1e-12,
            "cv error {}",
            cv.cv_error
        );
    }

    #[test]
    fn cv_error_is_exact_mean_of_fold_errors() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 40, 2, 2, 9).unwrap();
        let folds = make_folds(40, 4, 9).unwrap();
        let cv = cross_validate(
            &data,
            &folds,
            &LearnerKind::RandomPrototype { prototypes: 3 },
            9,
        )
        .unwrap();
        let mean = cv.fold_errors.iter().sum::<f64>() / cv.fold_errors.len() as f64;
        assert_eq!(cv.cv_error, mean);
        assert_eq!(cv.per_fold_ledgers.len(), 4);
        assert_eq!(cv.models.len(), 4);
    }

    #[test]
    fn cross_validate_rejects_invalid_plan() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 20, 2, 2, 0).unwrap();
        let broken = FoldPlan {
            folds: vec![vec![0, 1], vec![1, 2]],
            source_size: 4,
        };
        assert!(cross_validate(&data, &broken, &LearnerKind::OneNn, 0).is_err());
    }

    #[test]
    fn nested_nnwt_and_pgnn_cells_all_zero() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 36, 2, 2, 2).unwrap();
        let plan = make_nested_folds(36, 3, 2, 2).unwrap();
        for family in [nnwt(), LearnerKind::Pgnn] {
            let cv = nested_cross_validate(&data, &plan, &family, 2).unwrap();
            assert_eq!(cv.fold_errors.len(), 6);
            assert!(cv.fold_errors.iter().all(|&e| e == 0.0), "{family}");
            assert_eq!(cv.cv_error, 0.0);
        }
    }

    #[test]
    fn nested_honest_one_nn_on_noise_near_chance() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 120, 2, 2, 4).unwrap();
        let plan = make_nested_folds(120, 3, 2, 4).unwrap();
        let cv = nested_cross_validate(&data, &plan, &LearnerKind::OneNn, 4).unwrap();
        assert!((cv.cv_error - 0.5).abs() <= 0.2, "cv error {}", cv.cv_error);
    }

    #[test]
    fn audit_shows_misconduct_gap_on_noise() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 300, 2, 2, 7).unwrap();
        let folds = make_folds(100, 5, 7).unwrap();
        let withheld: Vec<usize> = (100..300).collect();
        let report = cv_misconduct_audit(
            &data,
            CvScheme::Folds(&folds),
            &[nnwt(), LearnerKind::OneNn],
            &withheld,
            7,
            DEFAULT_HONEST_TOLERANCE,
        )
        .unwrap();
        let nnwt_row = &report.families[0];
        assert_eq!(nnwt_row.cv_error, 0.0);
        let band = 3.0 * (0.25f64 / 200.0).sqrt();
        assert!(
            (nnwt_row.withheld_test_error - 0.5).abs() <= band,
            "test error {}",
            nnwt_row.withheld_test_error
        );
        assert!(nnwt_row.total_guess_count > 0);
        assert!(nnwt_row.pass);
        // Honest 1-NN on pure noise: cv and test both near chance.
        let honest_row = &report.families[1];
        assert!(honest_row.gap.abs() <= DEFAULT_HONEST_TOLERANCE + 0.05);
    }

    #[test]
    fn audit_honest_one_nn_transfers_on_clusters() {
        let data = generate_synthetic(GeneratorKind::GaussianClusters, 300, 2, 3, 5).unwrap();
        let folds = make_folds(200, 5, 5).unwrap();
        let withheld: Vec<usize> = (200..300).collect();
        let report = cv_misconduct_audit(
            &data,
            CvScheme::Folds(&folds),
            &[LearnerKind::OneNn, nnwt()],
            &withheld,
            5,
            DEFAULT_HONEST_TOLERANCE,
        )
        .unwrap();
        let honest = &report.families[0];
        assert!(honest.gap.abs() <= 0.1, "gap {}", honest.gap);
        assert!(honest.pass);
        assert!(report.all_pass);
    }

    #[test]
    fn audit_rejects_bad_setups() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 100, 2, 2, 0).unwrap();
        let folds = make_folds(60, 3, 0).unwrap();
        // Empty withheld test.
        assert!(matches!(
            cv_misconduct_audit(&data, CvScheme::Folds(&folds), &[nnwt()], &[], 0, 0.1),
            Err(Error::EmptyTest)
        ));
        // Withheld overlaps the fold universe.
        let overlapping: Vec<usize> = (50..80).collect();
        assert!(matches!(
            cv_misconduct_audit(
                &data,
                CvScheme::Folds(&folds),
                &[nnwt()],
                &overlapping,
                0,
                0.1
            ),
            Err(Error::OverlappingIndices(_))
        ));
        // No misconduct family present.
        let clean: Vec<usize> = (60..100).collect();
        assert!(matches!(
            cv_misconduct_audit(
                &data,
                CvScheme::Folds(&folds),
                &[LearnerKind::OneNn],
                &clean,
                0,
                0.1
            ),
            Err(Error::NoMisconductFamily)
        ));
    }

    #[test]
    fn nested_audit_also_shows_the_gap() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 260, 2, 2, 11).unwrap();
        let plan = make_nested_folds(60, 3, 2, 11).unwrap();
        let withheld: Vec<usize> = (60..260).collect();
        let report = cv_misconduct_audit(
            &data,
            CvScheme::Nested(&plan),
            &[nnwt(), LearnerKind::Pgnn],
            &withheld,
            11,
            0.1,
        )
        .unwrap();
        for row in &report.families {
            assert_eq!(row.cv_error, 0.0, "{}", row.family);
            assert!(
                (row.withheld_test_error - 0.5).abs() <= 0.12,
                "{}",
                row.family
            );
            assert!(row.pass);
        }
        assert_eq!(report.scheme, "nested");
    }

    #[test]
    fn honest_consistency_over_repeated_worlds() {
        // Honest families estimate their own future: over repeated worlds,
        // the mean cv error tracks the mean withheld-test error within
        // three standard errors.
        let reps = 50;
        let mut cv_errors = Vec::with_capacity(reps);
        let mut test_errors = Vec::with_capacity(reps);
        for seed in 0..reps as u64 {
            let data =
                generate_synthetic(GeneratorKind::GaussianClusters, 150, 2, 3, seed).unwrap();
            let folds = make_folds(100, 5, seed).unwrap();
            let withheld: Vec<usize> = (100..150).collect();
            let report = cv_misconduct_audit(
                &data,
                CvScheme::Folds(&folds),
                &[LearnerKind::OneNn, nnwt()],
                &withheld,
                seed,
                0.1,
            )
            .unwrap();
            cv_errors.push(report.families[0].cv_error);
            test_errors.push(report.families[0].withheld_test_error);
        }
        let n = reps as f64;
        let mean_cv = cv_errors.iter().sum::<f64>() / n;
        let mean_test = test_errors.iter().sum::<f64>() / n;
        let var: f64 = test_errors
            .iter()
            .map(|t| (t - mean_test) * (t - mean_test))
            .sum::<f64>()
            / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(
            (mean_cv - mean_test).abs() <= (3.0 * se).max(0.01),
            "mean cv {mean_cv} vs mean test {mean_test} (se {se})"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn misconduct_cv_is_zero_on_any_instance(
                seed in 0u64..1000,
                d in 20usize..60,
                n_folds in 2usize..6,
                kind_ix in 0usize..3,
                pgnn in proptest::bool::ANY,
            ) {
                let kind = [
                    GeneratorKind::PureNoiseLabels,
                    GeneratorKind::GaussianClusters,
                    GeneratorKind::LabeledGrid,
                ][kind_ix];
                let data = generate_synthetic(kind, d, 2, 2, seed).unwrap();
                let folds = make_folds(d, n_folds.min(d), seed).unwrap();
                let family = if pgnn {
                    LearnerKind::Pgnn
                } else {
                    LearnerKind::Nnwt { threshold: ThresholdSpec::Construction }
                };
                let cv = cross_validate(&data, &folds, &family, seed).unwrap();
                prop_assert_eq!(cv.cv_error, 0.0);
            }
        }
    }
}
