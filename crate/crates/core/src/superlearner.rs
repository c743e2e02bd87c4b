//! Super Learner reproduction: weight candidate models to minimize the
//! cross-validated risk by exhaustive simplex search, and demonstrate how a
//! zero-cv-risk lucky learner captures the whole ensemble.
//!
//! Classification adaptation: the ensemble prediction is a weighted
//! plurality vote over the candidates' predicted labels. Votes are tallied
//! in integer grid units (a weight `i/r` contributes `i` units), so vote
//! ties are exact; tied votes go to the smallest label.
//!
//! The search scans every simplex grid point in lexicographically
//! descending order and keeps the first strict minimum, so risk ties
//! resolve to the lexicographically greatest weight vector. In particular,
//! when the first candidate attains zero risk the search returns the exact
//! vertex `(1, 0, ..., 0)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::crossval::CvScheme;
use crate::data::{Dataset, FoldPlan, NestedFoldPlan};
use crate::error::{Error, Result};
use crate::learners::{fit_family, LearnerKind, Mode, TrainedModel};
use crate::protocols::DEFAULT_SE_MULTIPLIER;
use crate::seed::derive_seed;

/// Hard cap on simplex grid points for one search.
pub const MAX_GRID_POINTS: u128 = 2_000_000;

/// Hard cap on `grid_points * validation_points * candidates` for one
/// search: the number of vote tallies the exhaustive scan performs.
pub const SUPER_LEARNER_OP_BUDGET: u128 = 200_000_000;

/// Outcome of one exhaustive-search weighting.
#[derive(Debug, Clone, Serialize)]
pub struct SuperLearnerResult {
    pub candidates: Vec<LearnerKind>,
    /// Simplex weights, one per candidate, summing to 1.
    pub weights: Vec<f64>,
    /// Cross-validated risk of the returned weighting: mean over folds of
    /// the ensemble's fold-validation error.
    pub cv_risk: f64,
    /// Risk of each pure single-candidate weighting, from the same fitted
    /// models the search used.
    pub candidate_risks: Vec<f64>,
    pub grid_step: f64,
    pub grid_points: u64,
    pub withheld_test_error: Option<f64>,
}

/// Verdict of an adversarial injection run.
#[derive(Debug, Clone, Serialize)]
pub struct InjectionVerdict {
    pub misconduct: LearnerKind,
    /// Weight the search gave the injected candidate.
    pub misconduct_weight: f64,
    /// Full capture: weight exactly 1 on the injected candidate with a
    /// cross-validated risk of exactly zero.
    pub captured: bool,
    pub cv_risk: f64,
    pub withheld_test_error: f64,
    pub chance_error: f64,
    pub chance_tolerance: f64,
    /// Withheld-test error of the captured ensemble sits in the chance
    /// band — the lucky learner transfers nothing.
    pub test_near_chance: bool,
    pub pass: bool,
}

/// Number of simplex grid points for `candidates` weights at resolution
/// `r` (compositions of `r` into `candidates` parts).
pub fn simplex_grid_size(resolution: u64, candidates: usize) -> u128 {
    // binomial(r + c - 1, c - 1)
    let n = resolution as u128 + candidates as u128 - 1;
    let k = candidates as u128 - 1;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn resolution_for(grid_step: f64) -> Result<u64> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidGridStep(grid_step));
    }
    let r = (1.0 / grid_step).round();
    if r < 1.0 || (r * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidGridStep(grid_step));
    }
    Ok(r as u64)
}

/// Visit all compositions of `total` into `parts` parts in lexicographically
/// descending order.
fn for_each_composition(total: u64, parts: usize, visit: &mut impl FnMut(&[u64])) {
    let mut current = vec![0u64; parts];
    fn recurse(
        remaining: u64,
        position: usize,
        current: &mut Vec<u64>,
        visit: &mut impl FnMut(&[u64]),
    ) {
        if position == current.len() - 1 {
            current[position] = remaining;
            visit(current);
            return;
        }
        let mut value = remaining;
        loop {
            current[position] = value;
            recurse(remaining - value, position + 1, current, visit);
            if value == 0 {
                break;
            }
            value -= 1;
        }
    }
    recurse(total, 0, &mut current, visit);
}

struct FittedGrid {
    /// `[unit][candidate]` fitted models.
    models: Vec<Vec<TrainedModel>>,
    /// `[unit][candidate][point]` predicted labels on the unit's validation
    /// points.
    predictions: Vec<Vec<Vec<usize>>>,
    /// `[unit][point]` true labels.
    truths: Vec<Vec<usize>>,
    num_labels: usize,
}

impl FittedGrid {
    /// Weighted-plurality fold risk of an integer weight vector: mean over
    /// units of that unit's misclassification fraction.
    fn risk(&self, weights: &[u64]) -> f64 {
        let mut total = 0.0;
        for (unit_preds, unit_truths) in self.predictions.iter().zip(&self.truths) {
            let mut wrong = 0usize;
            for (p, &truth) in unit_truths.iter().enumerate() {
                if self.vote(weights, |c| unit_preds[c][p]) != truth {
                    wrong += 1;
                }
            }
            total += wrong as f64 / unit_truths.len() as f64;
        }
        total / self.truths.len() as f64
    }

    fn vote(&self, weights: &[u64], label_of: impl Fn(usize) -> usize) -> usize {
        let mut scores = vec![0u64; self.num_labels];
        for (c, &w) in weights.iter().enumerate() {
            if w > 0 {
                scores[label_of(c)] += w;
            }
        }
        let mut best = 0;
        for label in 1..self.num_labels {
            if scores[label] > scores[best] {
                best = label;
            }
        }
        best
    }

    /// Ensemble error on a withheld index set: each unit's model set votes
    /// on every test point; the reported error is the mean over units.
    fn test_error(&self, dataset: &Dataset, weights: &[u64], test: &[usize]) -> Result<f64> {
        let per_unit: Vec<f64> = self
            .models
            .par_iter()
            .map(|unit_models| {
                let mut wrong = 0usize;
                for &i in test {
                    let q = dataset.features(i);
                    let labels: Vec<usize> = unit_models
                        .iter()
                        .map(|m| m.predict(q))
                        .collect::<Result<Vec<_>>>()?;
                    if self.vote(weights, |c| labels[c]) != dataset.label(i) {
                        wrong += 1;
                    }
                }
                Ok(wrong as f64 / test.len() as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(per_unit.iter().sum::<f64>() / per_unit.len() as f64)
    }
}

/// Per-unit fit products: models, per-candidate predictions, true labels.
type FittedUnit = (Vec<TrainedModel>, Vec<Vec<usize>>, Vec<usize>);

fn fit_grid(
    dataset: &Dataset,
    scheme: CvScheme<'_>,
    candidates: &[LearnerKind],
    seed: u64,
) -> Result<FittedGrid> {
    match scheme {
        CvScheme::Folds(plan) => plan.validate()?,
        CvScheme::Nested(plan) => plan.validate()?,
    }
    if scheme.universe_size() > dataset.len() {
        return Err(Error::InvalidDataset(format!(
            "plan covers {} indices but the dataset has {}",
            scheme.universe_size(),
            dataset.len()
        )));
    }
    let units = scheme.units();
    let fitted: Vec<FittedUnit> = units
        .par_iter()
        .enumerate()
        .map(|(u, unit)| {
            let mut unit_models = Vec::with_capacity(candidates.len());
            let mut unit_preds = Vec::with_capacity(candidates.len());
            for (c, kind) in candidates.iter().enumerate() {
                let model_seed = derive_seed(seed, "super/fit", &[u as u64, c as u64]);
                let model = fit_family(kind, model_seed, dataset, &unit.fit, &unit.val)?;
                let preds: Vec<usize> = unit
                    .val
                    .iter()
                    .map(|&i| model.predict(dataset.features(i)))
                    .collect::<Result<Vec<_>>>()?;
                unit_models.push(model);
                unit_preds.push(preds);
            }
            let truths: Vec<usize> = unit.val.iter().map(|&i| dataset.label(i)).collect();
            Ok((unit_models, unit_preds, truths))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut models = Vec::with_capacity(fitted.len());
    let mut predictions = Vec::with_capacity(fitted.len());
    let mut truths = Vec::with_capacity(fitted.len());
    for (m, p, t) in fitted {
        models.push(m);
        predictions.push(p);
        truths.push(t);
    }
    Ok(FittedGrid {
        models,
        predictions,
        truths,
        num_labels: dataset.num_labels(),
    })
}

fn search(
    dataset: &Dataset,
    scheme: CvScheme<'_>,
    candidates: &[LearnerKind],
    grid_step: f64,
    withheld_test: Option<&[usize]>,
    seed: u64,
) -> Result<(SuperLearnerResult, FittedGrid)> {
    if candidates.len() < 2 {
        return Err(Error::TooFewCandidates {
            need: 2,
            got: candidates.len(),
        });
    }
    let resolution = resolution_for(grid_step)?;
    let grid_points = simplex_grid_size(resolution, candidates.len());
    if grid_points > MAX_GRID_POINTS {
        return Err(Error::BudgetExceeded {
            cost: grid_points,
            budget: MAX_GRID_POINTS,
        });
    }
    let val_points: u128 = scheme.units().iter().map(|u| u.val.len() as u128).sum();
    let cost = grid_points * val_points * candidates.len() as u128;
    if cost > SUPER_LEARNER_OP_BUDGET {
        return Err(Error::BudgetExceeded {
            cost,
            budget: SUPER_LEARNER_OP_BUDGET,
        });
    }

    let grid = fit_grid(dataset, scheme, candidates, seed)?;

    let mut best_weights: Option<Vec<u64>> = None;
    let mut best_risk = f64::INFINITY;
    for_each_composition(resolution, candidates.len(), &mut |weights| {
        let risk = grid.risk(weights);
        if risk < best_risk {
            best_risk = risk;
            best_weights = Some(weights.to_vec());
        }
    });
    let best_weights = best_weights.expect("grid is never empty");

    let candidate_risks: Vec<f64> = (0..candidates.len())
        .map(|c| {
            let mut vertex = vec![0u64; candidates.len()];
            vertex[c] = resolution;
            grid.risk(&vertex)
        })
        .collect();

    let withheld_test_error = match withheld_test {
        Some(test) => Some(grid.test_error(dataset, &best_weights, test)?),
        None => None,
    };

    let result = SuperLearnerResult {
        candidates: candidates.to_vec(),
        weights: best_weights
            .iter()
            .map(|&w| w as f64 / resolution as f64)
            .collect(),
        cv_risk: best_risk,
        candidate_risks,
        grid_step,
        grid_points: grid_points as u64,
        withheld_test_error,
    };
    Ok((result, grid))
}

/// Exhaustive-search Super Learner over an n-fold plan.
pub fn super_learn(
    dataset: &Dataset,
    folds: &FoldPlan,
    candidates: &[LearnerKind],
    grid_step: f64,
    seed: u64,
) -> Result<SuperLearnerResult> {
    search(
        dataset,
        CvScheme::Folds(folds),
        candidates,
        grid_step,
        None,
        seed,
    )
    .map(|(r, _)| r)
}

/// Exhaustive-search Super Learner over a nested input-output plan — the
/// extension the flat variant lacks. Candidates with a zero-risk
/// construction capture this one too.
pub fn super_learn_nested(
    dataset: &Dataset,
    plan: &NestedFoldPlan,
    candidates: &[LearnerKind],
    grid_step: f64,
    seed: u64,
) -> Result<SuperLearnerResult> {
    search(
        dataset,
        CvScheme::Nested(plan),
        candidates,
        grid_step,
        None,
        seed,
    )
    .map(|(r, _)| r)
}

/// Run the Super Learner with a misconduct candidate injected ahead of the
/// honest ones, and measure what the captured ensemble does on a withheld
/// test set.
pub fn adversarial_injection(
    dataset: &Dataset,
    scheme: CvScheme<'_>,
    honest_candidates: &[LearnerKind],
    misconduct: &LearnerKind,
    grid_step: f64,
    withheld_test: &[usize],
    seed: u64,
) -> Result<(SuperLearnerResult, InjectionVerdict)> {
    if misconduct.mode() != Mode::Misconduct {
        return Err(Error::ModeMismatch(format!(
            "adversarial injection needs a misconduct family, got {misconduct}"
        )));
    }
    if withheld_test.is_empty() {
        return Err(Error::EmptyTest);
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

    let mut candidates = Vec::with_capacity(honest_candidates.len() + 1);
    candidates.push(misconduct.clone());
    candidates.extend_from_slice(honest_candidates);

    let (result, _grid) = search(
        dataset,
        scheme,
        &candidates,
        grid_step,
        Some(withheld_test),
        seed,
    )?;

    let misconduct_weight = result.weights[0];
    let captured = misconduct_weight == 1.0 && result.cv_risk == 0.0;
    let withheld_test_error = result.withheld_test_error.expect("test requested");
    let chance_error = dataset.chance_error();
    let chance_tolerance = DEFAULT_SE_MULTIPLIER
        * (chance_error * (1.0 - chance_error) / withheld_test.len() as f64).sqrt();
    let test_near_chance = (withheld_test_error - chance_error).abs() <= chance_tolerance;
    let verdict = InjectionVerdict {
        misconduct: misconduct.clone(),
        misconduct_weight,
        captured,
        cv_risk: result.cv_risk,
        withheld_test_error,
        chance_error,
        chance_tolerance,
        test_near_chance,
        pass: captured && test_near_chance,
    };
    Ok((result, verdict))
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
    fn grid_size_matches_stars_and_bars() {
        assert_eq!(simplex_grid_size(10, 3), 66);
        assert_eq!(simplex_grid_size(10, 2), 11);
        assert_eq!(simplex_grid_size(1, 4), 4);
        assert_eq!(simplex_grid_size(10, 1), 1);
    }

    #[test]
    fn composition_enumeration_is_lex_descending_and_complete() {
        let mut seen = Vec::new();
        for_each_composition(3, 2, &mut |w| seen.push(w.to_vec()));
        assert_eq!(seen, vec![vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]);
        let mut count = 0usize;
        for_each_composition(10, 3, &mut |w| {
            assert_eq!(w.iter().sum::<u64>(), 10);
            count += 1;
        });
        assert_eq!(count, 66);
    }

    #[test]
    fn rejects_grid_steps_that_do_not_divide_one() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 30, 2, 2, 0).unwrap();
        let folds = make_folds(30, 3, 0).unwrap();
        let cands = [LearnerKind::OneNn, LearnerKind::Constant { label: 0 }];
        assert!(matches!(
            super_learn(&data, &folds, &cands, 0.3, 0),
            Err(Error::InvalidGridStep(_))
        ));
        assert!(matches!(
            super_learn(&data, &folds, &cands, 0.0, 0),
            Err(Error::InvalidGridStep(_))
        ));
    }

    #[test]
    fn rejects_single_candidate_and_blown_budget() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 30, 2, 2, 0).unwrap();
        let folds = make_folds(30, 3, 0).unwrap();
        assert!(matches!(
            super_learn(&data, &folds, &[LearnerKind::OneNn], 0.1, 0),
            Err(Error::TooFewCandidates { .. })
        ));
        let many = [
            LearnerKind::OneNn,
            LearnerKind::Constant { label: 0 },
            LearnerKind::Constant { label: 1 },
            LearnerKind::RandomPrototype { prototypes: 2 },
        ];
        assert!(matches!(
            super_learn(&data, &folds, &many, 0.001, 0),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn identical_candidates_tie_break_to_first_vertex() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 30, 2, 2, 1).unwrap();
        let folds = make_folds(30, 3, 1).unwrap();
        let cands = [
            LearnerKind::Constant { label: 0 },
            LearnerKind::Constant { label: 0 },
        ];
        let result = super_learn(&data, &folds, &cands, 0.1, 1).unwrap();
        assert_eq!(result.weights, vec![1.0, 0.0]);
        assert_eq!(result.grid_points, 11);
    }

    #[test]
    fn strong_candidate_takes_the_weight() {
        // 1-NN is near perfect on separable clusters; the constant
        // predictor is near chance. The search puts everything on 1-NN.
        let data = generate_synthetic(GeneratorKind::GaussianClusters, 90, 2, 3, 2).unwrap();
        let folds = make_folds(90, 5, 2).unwrap();
        let cands = [LearnerKind::OneNn, LearnerKind::Constant { label: 0 }];
        let result = super_learn(&data, &folds, &cands, 0.1, 2).unwrap();
        assert_eq!(result.weights[0], 1.0);
        assert!(result.cv_risk <= 0.05, "risk {}", result.cv_risk);
        assert!(result.candidate_risks[1] > 0.4);
    }

    #[test]
    fn returned_risk_is_grid_minimum_and_beats_every_vertex() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 40, 2, 2, 3).unwrap();
        let folds = make_folds(40, 4, 3).unwrap();
        let cands = [
            LearnerKind::OneNn,
            LearnerKind::RandomPrototype { prototypes: 3 },
            LearnerKind::Constant { label: 0 },
        ];
        let result = super_learn(&data, &folds, &cands, 0.1, 3).unwrap();
        for (c, &risk) in result.candidate_risks.iter().enumerate() {
            assert!(
                result.cv_risk <= risk + 1e-12,
                "candidate {c} risk {risk} below returned {}",
                result.cv_risk
            );
        }
        // Exhaustiveness: re-scan the same grid through the public pieces.
        let grid = fit_grid(&data, CvScheme::Folds(&folds), &cands, 3).unwrap();
        let mut min_risk = f64::INFINITY;
        for_each_composition(10, 3, &mut |w| {
            min_risk = min_risk.min(grid.risk(w));
        });
        assert_eq!(result.cv_risk, min_risk);
    }

    #[test]
    fn weights_stay_on_the_simplex() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 40, 2, 2, 4).unwrap();
        let folds = make_folds(40, 4, 4).unwrap();
        let cands = [
            LearnerKind::OneNn,
            LearnerKind::RandomPrototype { prototypes: 2 },
            LearnerKind::Constant { label: 1 },
        ];
        let result = super_learn(&data, &folds, &cands, 0.05, 4).unwrap();
        let sum: f64 = result.weights.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9);
        assert!(result.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn injected_misconduct_captures_the_ensemble() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 300, 2, 2, 5).unwrap();
        let folds = make_folds(100, 5, 5).unwrap();
        let withheld: Vec<usize> = (100..300).collect();
        let honest = [
            LearnerKind::OneNn,
            LearnerKind::RandomPrototype { prototypes: 4 },
            LearnerKind::Constant { label: 0 },
        ];
        let (result, verdict) = adversarial_injection(
            &data,
            CvScheme::Folds(&folds),
            &honest,
            &nnwt(),
            0.1,
            &withheld,
            5,
        )
        .unwrap();
        assert_eq!(result.weights, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(result.cv_risk, 0.0);
        assert!(verdict.captured);
        assert!(
            (verdict.withheld_test_error - 0.5).abs() <= verdict.chance_tolerance,
            "test error {}",
            verdict.withheld_test_error
        );
        assert!(verdict.pass);
    }

    #[test]
    fn zero_risk_candidate_always_gets_the_full_weight() {
        // Whenever a candidate attains exactly zero cross-validated risk,
        // the returned vector is a vertex on a zero-risk candidate.
        for seed in 0..8 {
            let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 60, 2, 2, seed).unwrap();
            let folds = make_folds(60, 4, seed).unwrap();
            let cands = [
                nnwt(),
                LearnerKind::OneNn,
                LearnerKind::Constant { label: 0 },
            ];
            let result = super_learn(&data, &folds, &cands, 0.1, seed).unwrap();
            assert_eq!(result.candidate_risks[0], 0.0);
            assert_eq!(result.weights[0], 1.0, "seed {seed}");
            assert_eq!(result.cv_risk, 0.0);
        }
    }

    #[test]
    fn degenerate_infinite_threshold_reports_no_capture_without_failing() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 200, 2, 2, 6).unwrap();
        let folds = make_folds(80, 4, 6).unwrap();
        let withheld: Vec<usize> = (80..200).collect();
        let degenerate = LearnerKind::Nnwt {
            threshold: ThresholdSpec::Infinite,
        };
        let honest = [LearnerKind::OneNn, LearnerKind::Constant { label: 0 }];
        let (result, verdict) = adversarial_injection(
            &data,
            CvScheme::Folds(&folds),
            &honest,
            &degenerate,
            0.1,
            &withheld,
            6,
        )
        .unwrap();
        // With no guesses the injected learner is plain 1-NN: on pure noise
        // its fold risk is near chance, so full capture is not guaranteed.
        assert!(result.candidate_risks[0] > 0.0);
        assert!(!verdict.captured);
    }

    #[test]
    fn nested_super_learner_is_captured_too() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 48, 2, 2, 7).unwrap();
        let plan = make_nested_folds(48, 3, 2, 7).unwrap();
        let cands = [
            nnwt(),
            LearnerKind::OneNn,
            LearnerKind::Constant { label: 0 },
        ];
        let result = super_learn_nested(&data, &plan, &cands, 0.1, 7).unwrap();
        assert_eq!(result.cv_risk, 0.0);
        assert_eq!(result.weights[0], 1.0);

        let pgnn_cands = [LearnerKind::Pgnn, LearnerKind::OneNn];
        let result = super_learn_nested(&data, &plan, &pgnn_cands, 0.1, 7).unwrap();
        assert_eq!(result.cv_risk, 0.0);
        assert_eq!(result.weights[0], 1.0);
    }

    #[test]
    fn injection_rejects_bad_setups() {
        let data = generate_synthetic(GeneratorKind::PureNoiseLabels, 100, 2, 2, 8).unwrap();
        let folds = make_folds(60, 3, 8).unwrap();
        let honest = [LearnerKind::OneNn, LearnerKind::Constant { label: 0 }];
        // Honest family injected as "misconduct".
        assert!(matches!(
            adversarial_injection(
                &data,
                CvScheme::Folds(&folds),
                &honest,
                &LearnerKind::OneNn,
                0.1,
                &[60, 61],
                8
            ),
            Err(Error::ModeMismatch(_))
        ));
        // Withheld test overlapping the fold universe.
        assert!(matches!(
            adversarial_injection(
                &data,
                CvScheme::Folds(&folds),
                &honest,
                &nnwt(),
                0.1,
                &[10, 61],
                8
            ),
            Err(Error::OverlappingIndices(_))
        ));
        // Empty withheld test.
        assert!(matches!(
            adversarial_injection(
                &data,
                CvScheme::Folds(&folds),
                &honest,
                &nnwt(),
                0.1,
                &[],
                8
            ),
            Err(Error::EmptyTest)
        ));
    }
}
