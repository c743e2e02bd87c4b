//! Learner families and trained models.
//!
//! Two kinds of family exist. Honest families (`1nn`, `random-prototype`,
//! `constant`) see only the fit set. Misconduct families (`nnwt`, `pgnn`)
//! are *constructed with the validation set in hand*: any validation query
//! the stored neighbors cannot answer is resolved by drawing random labels
//! until the draw matches the query's true label, so the finished model has
//! exactly zero validation error. Every draw is charged to the model's
//! [`ResourceLedger`] — the development cost that post-selection hides.
//!
//! Distances are Euclidean; nearest-neighbor ties break toward the lowest
//! stored index. Both rules are arbitrary but fixed, for reproducibility.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{rng_for, rng_for_bytes};

/// Whether a family consumes the validation set during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Honest,
    Misconduct,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Honest => "honest",
            Mode::Misconduct => "misconduct",
        })
    }
}

/// Threshold policy for `nnwt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    /// Largest threshold that still guarantees zero validation error for
    /// the given fit/validation pair, computed at fit time.
    Construction,
    /// Infinite threshold: every query is answered by its nearest neighbor,
    /// no guesses occur, and the zero-validation-error guarantee is void.
    Infinite,
    /// A fixed non-negative distance.
    Fixed(f64),
}

impl Serialize for ThresholdSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ThresholdSpec::Construction => serializer.serialize_str("construction"),
            ThresholdSpec::Infinite => serializer.serialize_str("infinite"),
            ThresholdSpec::Fixed(x) => serializer.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Value(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => match s.as_str() {
                "construction" => Ok(ThresholdSpec::Construction),
                "infinite" => Ok(ThresholdSpec::Infinite),
                other => Err(D::Error::custom(format!(
                    "unknown threshold spec `{other}` (expected `construction`, `infinite`, or a number)"
                ))),
            },
            Raw::Value(x) => Ok(ThresholdSpec::Fixed(x)),
        }
    }
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Construction => f.write_str("construction"),
            ThresholdSpec::Infinite => f.write_str("infinite"),
            ThresholdSpec::Fixed(x) => write!(f, "{x}"),
        }
    }
}

/// Architecture hyperparameters of a learner family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum LearnerKind {
    /// Plain nearest neighbor over the stored fit set.
    #[serde(rename = "1nn")]
    OneNn,
    /// Draws `prototypes` fit samples at random (seed-dependent), labels
    /// each by the majority label of the fit samples nearest to it, and
    /// predicts by nearest prototype. High variance across seeds.
    RandomPrototype { prototypes: usize },
    /// Always predicts the same label.
    Constant { label: usize },
    /// Nearest Neighbor With Threshold: neighbor answers within the
    /// threshold, tuned guesses beyond it. Misconduct mode.
    Nnwt { threshold: ThresholdSpec },
    /// Pure Guess Nearest Neighbor: `nnwt` with the threshold dropped to
    /// zero, so every non-identical query is a tuned guess. Misconduct mode.
    Pgnn,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::OneNn => "1nn",
            LearnerKind::RandomPrototype { .. } => "random-prototype",
            LearnerKind::Constant { .. } => "constant",
            LearnerKind::Nnwt { .. } => "nnwt",
            LearnerKind::Pgnn => "pgnn",
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            LearnerKind::Nnwt { .. } | LearnerKind::Pgnn => Mode::Misconduct,
            _ => Mode::Honest,
        }
    }

    /// Auditable flag: does training consume the validation set?
    pub fn consumes_validation(&self) -> bool {
        self.mode() == Mode::Misconduct
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::OneNn => f.write_str("1nn"),
            LearnerKind::RandomPrototype { prototypes } => {
                write!(f, "random-prototype(p={prototypes})")
            }
            LearnerKind::Constant { label } => write!(f, "constant(label={label})"),
            LearnerKind::Nnwt { threshold } => write!(f, "nnwt(threshold={threshold})"),
            LearnerKind::Pgnn => f.write_str("pgnn"),
        }
    }
}

/// A concrete trial: architecture hyperparameters plus the seed that fixes
/// its randomized parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub kind: LearnerKind,
    pub seed: u64,
}

impl Learner {
    pub fn new(kind: LearnerKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn mode(&self) -> Mode {
        self.kind.mode()
    }

    pub fn descriptor(&self) -> LearnerDescriptor {
        LearnerDescriptor {
            kind: self.kind.clone(),
            seed: self.seed,
            mode: self.mode(),
        }
    }
}

/// Full record of a trial's identity, serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerDescriptor {
    #[serde(flatten)]
    pub kind: LearnerKind,
    pub seed: u64,
    pub mode: Mode,
}

impl fmt::Display for LearnerDescriptor {
    // Comma-free so descriptors can sit unquoted in CSV cells.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#seed={}", self.kind, self.seed)
    }
}

/// Development-cost accounting, frozen when training finishes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLedger {
    /// Label draws spent tuning guesses against the validation set.
    pub guess_count: u64,
    /// Pairwise distance evaluations during training.
    pub distance_evals: u64,
    /// Samples or prototypes kept in the fitted state.
    pub stored_samples: u64,
    /// Abstract cost units: one per stored sample, distance evaluation,
    /// and guess draw.
    pub fit_time: u64,
}

impl ResourceLedger {
    fn freeze(mut self) -> Self {
        self.fit_time = self.guess_count + self.distance_evals + self.stored_samples;
        self
    }
}

#[derive(Debug, Clone)]
struct StoredPoint {
    features: Vec<f64>,
    label: usize,
}

#[derive(Debug, Clone)]
enum FittedState {
    Neighbors {
        points: Vec<StoredPoint>,
    },
    Prototypes {
        points: Vec<StoredPoint>,
    },
    Constant {
        label: usize,
    },
    Guessing {
        fit: Vec<StoredPoint>,
        threshold: f64,
        table: HashMap<Vec<u64>, usize>,
        guess_seed: u64,
    },
}

/// An immutable fitted model. Prediction is a pure function of the fitted
/// state and the query, so models can be shared across threads freely.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    descriptor: LearnerDescriptor,
    dim: usize,
    num_labels: usize,
    state: FittedState,
    ledger: ResourceLedger,
}

impl TrainedModel {
    pub fn descriptor(&self) -> &LearnerDescriptor {
        &self.descriptor
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// The threshold actually in force, for models that have one.
    pub fn resolved_threshold(&self) -> Option<f64> {
        match &self.state {
            FittedState::Guessing { threshold, .. } => Some(*threshold),
            _ => None,
        }
    }

    /// Serializable record of descriptor and ledger. Fitted state is not
    /// serialized: models are cheap to refit deterministically.
    pub fn manifest(&self) -> serde_json::Value {
        let threshold = self.resolved_threshold().map(|t| {
            if t.is_infinite() {
                ThresholdSpec::Infinite
            } else {
                ThresholdSpec::Fixed(t)
            }
        });
        serde_json::json!({
            "descriptor": self.descriptor,
            "ledger": self.ledger,
            "resolved_threshold": threshold,
        })
    }

    /// Predict the label for a query. Deterministic and free of side
    /// effects; repeated calls with the same query return the same label.
    pub fn predict(&self, query: &[f64]) -> Result<usize> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(match &self.state {
            FittedState::Neighbors { points } | FittedState::Prototypes { points } => {
                nearest(points, query).1
            }
            FittedState::Constant { label } => *label,
            FittedState::Guessing {
                fit,
                threshold,
                table,
                guess_seed,
            } => {
                let (d2, nn_label) = nearest(fit, query);
                if neighbor_answers(d2, *threshold) {
                    nn_label
                } else if let Some(&label) = table.get(&feature_key(query)) {
                    label
                } else {
                    // Fresh pure guess, keyed by the query bytes so the
                    // result is stable regardless of evaluation order.
                    fresh_guess(*guess_seed, query, self.num_labels)
                }
            }
        })
    }
}

/// Neighbor answers when the query sits strictly inside the threshold, or
/// coincides exactly with a stored point (so `pgnn` still returns stored
/// labels for identical queries).
fn neighbor_answers(nearest_d2: f64, threshold: f64) -> bool {
    nearest_d2 == 0.0 || nearest_d2 < threshold * threshold
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// `(squared distance, label)` of the nearest stored point; ties go to the
/// lowest index.
fn nearest(points: &[StoredPoint], query: &[f64]) -> (f64, usize) {
    debug_assert!(!points.is_empty());
    let mut best_d2 = f64::INFINITY;
    let mut best_label = 0;
    for p in points {
        let d2 = squared_distance(&p.features, query);
        if d2 < best_d2 {
            best_d2 = d2;
            best_label = p.label;
        }
    }
    (best_d2, best_label)
}

fn feature_key(features: &[f64]) -> Vec<u64> {
    features.iter().map(|x| x.to_bits()).collect()
}

fn feature_bytes(features: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(features.len() * 8);
    for x in features {
        out.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    out
}

fn fresh_guess(guess_seed: u64, query: &[f64], num_labels: usize) -> usize {
    let mut rng = rng_for_bytes(guess_seed, "nnwt/fresh-guess", &feature_bytes(query));
    rng.gen_range(0..num_labels)
}

fn check_indices(dataset: &Dataset, idx: &[usize]) -> Result<()> {
    for &i in idx {
        if i >= dataset.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                d: dataset.len(),
            });
        }
    }
    Ok(())
}

fn gather(dataset: &Dataset, idx: &[usize]) -> Vec<StoredPoint> {
    idx.iter()
        .map(|&i| StoredPoint {
            features: dataset.features(i).to_vec(),
            label: dataset.label(i),
        })
        .collect()
}

/// Fit an honest learner on the fit set. The signature deliberately has no
/// validation parameter: honest families cannot read it.
pub fn fit_honest(learner: &Learner, dataset: &Dataset, fit_idx: &[usize]) -> Result<TrainedModel> {
    if learner.mode() != Mode::Honest {
        return Err(Error::ModeMismatch(format!(
            "fit_honest called with misconduct family {}",
            learner.kind
        )));
    }
    if fit_idx.is_empty() {
        return Err(Error::EmptyFit);
    }
    check_indices(dataset, fit_idx)?;

    let mut ledger = ResourceLedger::default();
    let state = match &learner.kind {
        LearnerKind::OneNn => {
            let points = gather(dataset, fit_idx);
            ledger.stored_samples = points.len() as u64;
            FittedState::Neighbors { points }
        }
        LearnerKind::RandomPrototype { prototypes } => {
            let p = *prototypes;
            if p == 0 {
                return Err(Error::PrototypeCount {
                    requested: 0,
                    available: fit_idx.len(),
                });
            }
            if p > fit_idx.len() {
                return Err(Error::PrototypeCount {
                    requested: p,
                    available: fit_idx.len(),
                });
            }
            let mut rng = rng_for(learner.seed, "fit/random-prototype", &[]);
            let chosen = rand::seq::index::sample(&mut rng, fit_idx.len(), p).into_vec();
            let mut points: Vec<StoredPoint> = chosen
                .iter()
                .map(|&pos| StoredPoint {
                    features: dataset.features(fit_idx[pos]).to_vec(),
                    label: 0,
                })
                .collect();
            // Label each prototype by the majority label of the fit samples
            // nearest to it; ties break toward the smallest label.
            let mut votes = vec![vec![0usize; dataset.num_labels()]; p];
            for &i in fit_idx {
                let q = dataset.features(i);
                let mut best = 0;
                let mut best_d2 = f64::INFINITY;
                for (j, proto) in points.iter().enumerate() {
                    let d2 = squared_distance(&proto.features, q);
                    ledger.distance_evals += 1;
                    if d2 < best_d2 {
                        best_d2 = d2;
                        best = j;
                    }
                }
                votes[best][dataset.label(i)] += 1;
            }
            for (proto, vote) in points.iter_mut().zip(&votes) {
                let (label, _) = vote
                    .iter()
                    .enumerate()
                    .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
                    .expect("num_labels >= 2");
                proto.label = label;
            }
            ledger.stored_samples = points.len() as u64;
            FittedState::Prototypes { points }
        }
        LearnerKind::Constant { label } => {
            if *label >= dataset.num_labels() {
                return Err(Error::LabelOutOfRange {
                    label: *label,
                    num_labels: dataset.num_labels(),
                });
            }
            FittedState::Constant { label: *label }
        }
        misconduct => {
            return Err(Error::ModeMismatch(format!(
                "fit_honest called with misconduct family {misconduct}"
            )));
        }
    };

    Ok(TrainedModel {
        descriptor: learner.descriptor(),
        dim: dataset.dim(),
        num_labels: dataset.num_labels(),
        state,
        ledger: ledger.freeze(),
    })
}

/// The largest threshold that keeps NNWT's zero-validation-error guarantee
/// for this fit/validation pair: the smallest distance from a validation
/// sample to a nearest fit neighbor carrying the wrong label (infinite when
/// plain nearest neighbor is already perfect on the validation set).
pub fn nnwt_construction_threshold(
    dataset: &Dataset,
    fit_idx: &[usize],
    val_idx: &[usize],
) -> Result<f64> {
    if fit_idx.is_empty() {
        return Err(Error::EmptyFit);
    }
    check_indices(dataset, fit_idx)?;
    check_indices(dataset, val_idx)?;
    let fit = gather(dataset, fit_idx);
    let mut limit2 = f64::INFINITY;
    for &v in val_idx {
        let (d2, nn_label) = nearest(&fit, dataset.features(v));
        if nn_label != dataset.label(v) && d2 < limit2 {
            limit2 = d2;
        }
    }
    if limit2.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // The boundary sample must fall on the guess side of the strict
    // `distance < threshold` test, which compares squared values; walk the
    // square root down until squaring cannot round it past the limit.
    let mut t = limit2.sqrt();
    while t * t > limit2 {
        t = f64::from_bits(t.to_bits() - 1);
    }
    Ok(t)
}

fn check_disjoint(fit_idx: &[usize], val_idx: &[usize]) -> Result<()> {
    let fit: std::collections::BTreeSet<usize> = fit_idx.iter().copied().collect();
    for &v in val_idx {
        if fit.contains(&v) {
            return Err(Error::OverlappingIndices(format!(
                "index {v} is in both fit and validation sets"
            )));
        }
    }
    Ok(())
}

fn fit_guessing(
    dataset: &Dataset,
    fit_idx: &[usize],
    val_idx: &[usize],
    threshold: f64,
    seed: u64,
    descriptor: LearnerDescriptor,
    mut ledger: ResourceLedger,
) -> Result<TrainedModel> {
    if fit_idx.is_empty() {
        return Err(Error::EmptyFit);
    }
    check_indices(dataset, fit_idx)?;
    check_indices(dataset, val_idx)?;
    check_disjoint(fit_idx, val_idx)?;
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::NegativeThreshold(threshold));
    }

    let fit = gather(dataset, fit_idx);
    ledger.stored_samples = fit.len() as u64;

    // Tune a guess for every validation query the neighbors cannot answer:
    // draw labels until the draw matches the true label, charging each draw
    // to the ledger, and pin the winning label to the query's exact bytes.
    let mut table = HashMap::new();
    let mut guess_rng = rng_for(seed, "nnwt/guess-loop", &[]);
    let num_labels = dataset.num_labels();
    for &v in val_idx {
        let q = dataset.features(v);
        let (d2, _) = nearest(&fit, q);
        ledger.distance_evals += fit.len() as u64;
        if neighbor_answers(d2, threshold) {
            continue;
        }
        let truth = dataset.label(v);
        loop {
            let draw = guess_rng.gen_range(0..num_labels);
            ledger.guess_count += 1;
            if draw == truth {
                break;
            }
        }
        table.insert(feature_key(q), truth);
    }

    Ok(TrainedModel {
        descriptor,
        dim: dataset.dim(),
        num_labels,
        state: FittedState::Guessing {
            fit,
            threshold,
            table,
            guess_seed: seed,
        },
        ledger: ledger.freeze(),
    })
}

/// Fit a Nearest Neighbor With Threshold model. The validation set is an
/// input on purpose: this is the misconduct construction.
pub fn fit_nnwt(
    dataset: &Dataset,
    fit_idx: &[usize],
    val_idx: &[usize],
    threshold: f64,
    seed: u64,
) -> Result<TrainedModel> {
    let spec = if threshold.is_infinite() {
        ThresholdSpec::Infinite
    } else {
        ThresholdSpec::Fixed(threshold)
    };
    let descriptor = LearnerDescriptor {
        kind: LearnerKind::Nnwt { threshold: spec },
        seed,
        mode: Mode::Misconduct,
    };
    fit_guessing(
        dataset,
        fit_idx,
        val_idx,
        threshold,
        seed,
        descriptor,
        ResourceLedger::default(),
    )
}

/// Fit a Pure Guess Nearest Neighbor model: `nnwt` with threshold zero, so
/// every non-identical validation query is a tuned guess.
pub fn fit_pgnn(
    dataset: &Dataset,
    fit_idx: &[usize],
    val_idx: &[usize],
    seed: u64,
) -> Result<TrainedModel> {
    let descriptor = LearnerDescriptor {
        kind: LearnerKind::Pgnn,
        seed,
        mode: Mode::Misconduct,
    };
    fit_guessing(
        dataset,
        fit_idx,
        val_idx,
        0.0,
        seed,
        descriptor,
        ResourceLedger::default(),
    )
}

/// Fit any family. Honest families are routed through [`fit_honest`] and
/// never see `val_idx`; misconduct families receive it, as their
/// construction requires.
pub fn fit_family(
    kind: &LearnerKind,
    seed: u64,
    dataset: &Dataset,
    fit_idx: &[usize],
    val_idx: &[usize],
) -> Result<TrainedModel> {
    match kind {
        LearnerKind::Nnwt { threshold } => {
            let mut ledger = ResourceLedger::default();
            let resolved = match threshold {
                ThresholdSpec::Fixed(x) => *x,
                ThresholdSpec::Infinite => f64::INFINITY,
                ThresholdSpec::Construction => {
                    // The threshold search scans every (validation, fit)
                    // pair; that cost is part of development.
                    ledger.distance_evals += (fit_idx.len() * val_idx.len()) as u64;
                    nnwt_construction_threshold(dataset, fit_idx, val_idx)?
                }
            };
            let descriptor = LearnerDescriptor {
                kind: kind.clone(),
                seed,
                mode: Mode::Misconduct,
            };
            fit_guessing(
                dataset, fit_idx, val_idx, resolved, seed, descriptor, ledger,
            )
        }
        LearnerKind::Pgnn => fit_pgnn(dataset, fit_idx, val_idx, seed),
        honest => fit_honest(&Learner::new(honest.clone(), seed), dataset, fit_idx),
    }
}

/// Fraction of samples in `idx` the model misclassifies.
pub fn evaluate_error(model: &TrainedModel, dataset: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndexSet);
    }
    check_indices(dataset, idx)?;
    let mut wrong = 0usize;
    for &i in idx {
        if model.predict(dataset.features(i))? != dataset.label(i) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / idx.len() as f64)
}
