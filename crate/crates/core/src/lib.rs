//! Simulation library for auditing machine-learning evaluation protocols.
//!
//! The crate models the full lifecycle of a desk-scale classification
//! experiment: synthetic datasets, fit/validation/test splits, n-fold and
//! nested (input-output) cross-validation, honest and misconduct-mode
//! learners, post-selection over many seeded trials, and a Super Learner
//! reproduction with adversarial injection.
//!
//! Everything is deterministic: a single master seed plus a counter-based
//! derivation scheme ([`seed::derive_seed`]) fixes every random draw, so
//! results are bit-identical across runs and thread counts.

pub mod canonical;
pub mod crossval;
pub mod data;
pub mod error;
pub mod learners;
pub mod protocols;
pub mod seed;
pub mod superlearner;

pub use canonical::{canonical_json, canonical_json_line, format_float};
pub use crossval::{
    cross_validate, cv_misconduct_audit, nested_cross_validate, AuditReport, CvResult, CvScheme,
    FamilyAudit, DEFAULT_HONEST_TOLERANCE,
};
pub use data::{
    generate_synthetic, make_folds, make_nested_folds, make_split, Dataset, FoldPlan,
    GeneratorKind, LabeledSample, NestedFoldPlan, Provenance, SplitFractions, SplitPlan,
};
pub use error::{Error, Result};
pub use learners::{
    evaluate_error, fit_family, fit_honest, fit_nnwt, fit_pgnn, nnwt_construction_threshold,
    Learner, LearnerDescriptor, LearnerKind, Mode, ResourceLedger, ThresholdSpec, TrainedModel,
};
pub use protocols::{
    estimate_report, lost_luck_experiment, min_mse_estimate, post_select, report_all_networks,
    ArchitectureReport, ErrorSample, EstimateReport, GridReport, LostLuckResult, LostLuckVerdict,
    PostSelectionOutcome, SelectionMode, DEFAULT_SE_MULTIPLIER,
};
pub use seed::{derive_seed, rng_for};
pub use superlearner::{
    adversarial_injection, simplex_grid_size, super_learn, super_learn_nested, InjectionVerdict,
    SuperLearnerResult, MAX_GRID_POINTS, SUPER_LEARNER_OP_BUDGET,
};
