//! Dataset model, synthetic generators, and index-level split/fold plans.
//!
//! Splits and folds are index sets into a [`Dataset`], never copies: nested
//! plans stay cheap and every protocol is guaranteed to see the same
//! underlying samples. All construction is deterministic per seed.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// One `(features, label)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Synthetic data generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Well-separated Gaussian blobs, one per label; labels assigned
    /// round-robin so class counts differ by at most one.
    GaussianClusters,
    /// Features uniform on `[0, 1)^dim`; labels uniform and independent of
    /// the features, so no learner can beat chance on held-out data.
    PureNoiseLabels,
    /// A deterministic lattice in `[0, 1]^dim` with labels in contiguous
    /// blocks along the lattice order (learnable by nearest neighbor).
    LabeledGrid,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::GaussianClusters => "gaussian-clusters",
            GeneratorKind::PureNoiseLabels => "pure-noise-labels",
            GeneratorKind::LabeledGrid => "labeled-grid",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-clusters" => Ok(GeneratorKind::GaussianClusters),
            "pure-noise-labels" => Ok(GeneratorKind::PureNoiseLabels),
            "labeled-grid" => Ok(GeneratorKind::LabeledGrid),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }
}

/// How a dataset came to be; recorded so any run can be regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: GeneratorKind,
    pub seed: u64,
}

/// An ordered, immutable collection of labeled samples.
///
/// Sample order is part of the dataset's identity: plans address samples by
/// index, so reordering would silently change every downstream result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    dim: usize,
    num_labels: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        samples: Vec<LabeledSample>,
        dim: usize,
        num_labels: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dim must be positive".into()));
        }
        if num_labels < 2 {
            return Err(Error::InvalidDataset("num_labels must be >= 2".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.label >= num_labels {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has label {} but num_labels is {num_labels}",
                    s.label
                )));
            }
        }
        Ok(Self {
            samples,
            dim,
            num_labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> &LabeledSample {
        &self.samples[index]
    }

    pub fn features(&self, index: usize) -> &[f64] {
        &self.samples[index].features
    }

    pub fn label(&self, index: usize) -> usize {
        self.samples[index].label
    }

    /// Chance error rate `1 - 1/num_labels` for this label count.
    pub fn chance_error(&self) -> f64 {
        1.0 - 1.0 / self.num_labels as f64
    }

    /// CSV encoding: header `f0,...,f{dim-1},label`, one row per sample.
    /// Floats use the shortest round-trip representation so a reload is
    /// bit-exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label\n");
        for s in &self.samples {
            for x in &s.features {
                out.push_str(&format!("{x},"));
            }
            out.push_str(&format!("{}\n", s.label));
        }
        out
    }

    /// JSON manifest carrying everything needed to regenerate the dataset.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "d": self.len(),
            "dim": self.dim,
            "num_labels": self.num_labels,
            "generator": self.provenance.kind.name(),
            "seed": self.provenance.seed,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parse a dataset back from its CSV body plus manifest fields.
    pub fn from_csv(
        csv: &str,
        dim: usize,
        num_labels: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut lines = csv.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidDataset("empty CSV".into()))?;
        let expected_header = {
            let mut h = String::new();
            for j in 0..dim {
                h.push_str(&format!("f{j},"));
            }
            h.push_str("label");
            h
        };
        if header != expected_header {
            return Err(Error::InvalidDataset(format!(
                "unexpected CSV header `{header}`"
            )));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidDataset(format!(
                    "row {lineno} has {} fields, expected {}",
                    fields.len(),
                    dim + 1
                )));
            }
            let mut features = Vec::with_capacity(dim);
            for f in &fields[..dim] {
                features.push(f.parse::<f64>().map_err(|e| {
                    Error::InvalidDataset(format!("row {lineno}: bad float `{f}`: {e}"))
                })?);
            }
            let label = fields[dim].parse::<usize>().map_err(|e| {
                Error::InvalidDataset(format!("row {lineno}: bad label `{}`: {e}", fields[dim]))
            })?;
            samples.push(LabeledSample { features, label });
        }
        Dataset::new(samples, dim, num_labels, provenance)
    }
}

/// Generate a synthetic dataset. Deterministic for fixed arguments.
pub fn generate_synthetic(
    kind: GeneratorKind,
    d: usize,
    dim: usize,
    num_labels: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_labels < 2 || d < num_labels {
        return Err(Error::DatasetTooSmall { d, num_labels });
    }
    if dim == 0 {
        return Err(Error::InvalidDataset("dim must be positive".into()));
    }
    let provenance = Provenance { kind, seed };
    let samples = match kind {
        GeneratorKind::GaussianClusters => {
            let mut rng = rng_for(seed, "gen/gaussian-clusters", &[]);
            (0..d)
                .map(|i| {
                    let label = i % num_labels;
                    let mut features = Vec::with_capacity(dim);
                    for axis in 0..dim {
                        let center = if axis == 0 { 10.0 * label as f64 } else { 0.0 };
                        let noise: f64 = rng.sample(StandardNormal);
                        features.push(center + noise);
                    }
                    LabeledSample { features, label }
                })
                .collect()
        }
        GeneratorKind::PureNoiseLabels => {
            let mut rng = rng_for(seed, "gen/pure-noise-labels", &[]);
            (0..d)
                .map(|_| {
                    let features = (0..dim).map(|_| rng.gen::<f64>()).collect();
                    let label = rng.gen_range(0..num_labels);
                    LabeledSample { features, label }
                })
                .collect()
        }
        GeneratorKind::LabeledGrid => {
            // Deterministic lattice; the seed is recorded but unused.
            let side = (d as f64).powf(1.0 / dim as f64).ceil().max(1.0) as usize;
            (0..d)
                .map(|i| {
                    let mut remaining = i;
                    let mut features = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        let coord = remaining % side;
                        remaining /= side;
                        features.push((coord as f64 + 0.5) / side as f64);
                    }
                    // Contiguous label blocks along the lattice order.
                    let label = (i * num_labels) / d;
                    LabeledSample {
                        features,
                        label: label.min(num_labels - 1),
                    }
                })
                .collect()
        }
    };
    Dataset::new(samples, dim, num_labels, provenance)
}

/// Fit/validation/test proportions for [`make_split`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub fit: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(fit: f64, val: f64, test: f64) -> Self {
        Self { fit, val, test }
    }
}

/// Disjoint fit/validation/test index sets into a dataset.
///
/// `test` may be empty: that is the "trainer possession" scenario where all
/// available data is in the developer's hands and no independent test exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fit_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub source_size: usize,
}

impl SplitPlan {
    pub fn new(
        fit_idx: Vec<usize>,
        val_idx: Vec<usize>,
        test_idx: Vec<usize>,
        source_size: usize,
    ) -> Result<Self> {
        if fit_idx.is_empty() {
            return Err(Error::EmptyFit);
        }
        if val_idx.is_empty() {
            return Err(Error::EmptyValidation);
        }
        let mut seen = BTreeSet::new();
        for (name, set) in [("fit", &fit_idx), ("val", &val_idx), ("test", &test_idx)] {
            for &i in set.iter() {
                if i >= source_size {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        d: source_size,
                    });
                }
                if !seen.insert(i) {
                    return Err(Error::OverlappingIndices(format!(
                        "index {i} appears twice (second time in {name})"
                    )));
                }
            }
        }
        Ok(Self {
            fit_idx,
            val_idx,
            test_idx,
            source_size,
        })
    }

    /// True when no test set was withheld from the trainer.
    pub fn is_trainer_possession(&self) -> bool {
        self.test_idx.is_empty()
    }
}

/// Split a dataset into fit/validation/test index sets.
///
/// Sizes are the rounded proportions; the rounding remainder goes to the fit
/// set. A positive fraction is never rounded down to an empty set.
pub fn make_split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitPlan> {
    let SplitFractions { fit, val, test } = fractions;
    if fit <= 0.0 {
        return Err(Error::InvalidFractions(
            "fit fraction must be positive".into(),
        ));
    }
    if val <= 0.0 {
        return Err(Error::InvalidFractions(
            "val fraction must be positive".into(),
        ));
    }
    if test < 0.0 {
        return Err(Error::InvalidFractions(
            "test fraction must be non-negative".into(),
        ));
    }
    let sum = fit + val + test;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(format!(
            "fractions must sum to 1, got {sum}"
        )));
    }
    let d = dataset.len();
    let mut val_size = (val * d as f64).round() as usize;
    let mut test_size = (test * d as f64).round() as usize;
    if val_size == 0 {
        val_size = 1;
    }
    if test > 0.0 && test_size == 0 {
        test_size = 1;
    }
    if val_size + test_size >= d {
        return Err(Error::InvalidFractions(format!(
            "dataset of size {d} leaves no fit samples for fractions ({fit}, {val}, {test})"
        )));
    }
    let fit_size = d - val_size - test_size;

    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng_for(seed, "make-split", &[]));
    let mut fit_idx: Vec<usize> = order[..fit_size].to_vec();
    let mut val_idx: Vec<usize> = order[fit_size..fit_size + val_size].to_vec();
    let mut test_idx: Vec<usize> = order[fit_size + val_size..].to_vec();
    fit_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    SplitPlan::new(fit_idx, val_idx, test_idx, d)
}

/// Mutually exclusive, exhaustive folds over `{0..source_size-1}`, with
/// sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub source_size: usize,
}

impl FoldPlan {
    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }

    /// The fit indices for fold `v`: everything in the plan's universe
    /// except fold `v` itself.
    pub fn fit_indices(&self, v: usize) -> Vec<usize> {
        complement(self.source_size, &self.folds[v])
    }

    /// Check the fold-plan invariants: mutually exclusive, exhaustive over
    /// the universe, sizes within one of each other.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.source_size];
        let mut total = 0usize;
        let mut min_size = usize::MAX;
        let mut max_size = 0usize;
        for fold in &self.folds {
            min_size = min_size.min(fold.len());
            max_size = max_size.max(fold.len());
            for &i in fold {
                if i >= self.source_size {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        d: self.source_size,
                    });
                }
                if seen[i] {
                    return Err(Error::OverlappingIndices(format!(
                        "index {i} appears in two folds"
                    )));
                }
                seen[i] = true;
                total += 1;
            }
        }
        if total != self.source_size {
            return Err(Error::InvalidDataset(format!(
                "folds cover {total} of {} indices",
                self.source_size
            )));
        }
        if max_size > min_size + 1 {
            return Err(Error::InvalidDataset(format!(
                "fold sizes differ by more than 1 ({min_size}..{max_size})"
            )));
        }
        Ok(())
    }
}

/// Randomly divide `{0..d-1}` into `n` folds of as nearly equal size as
/// possible. `n == d` is leave-one-out.
pub fn make_folds(d: usize, n: usize, seed: u64) -> Result<FoldPlan> {
    if n < 2 || n > d {
        return Err(Error::InvalidFoldCount { n, d });
    }
    let folds = deal_folds(d, n, &mut rng_for(seed, "make-folds", &[]));
    let plan = FoldPlan {
        folds,
        source_size: d,
    };
    plan.validate()?;
    Ok(plan)
}

fn deal_folds(d: usize, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let base = d / n;
    let extra = d % n;
    let mut folds = Vec::with_capacity(n);
    let mut cursor = 0;
    for v in 0..n {
        let size = base + usize::from(v < extra);
        let mut fold: Vec<usize> = order[cursor..cursor + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        cursor += size;
    }
    folds
}

/// Input-output fold plan: an `n`-way partition at the input end, a `k`-way
/// partition at the output end, and the `n x k` grid of validation cells
/// `V_ij = input_fold_i ∩ output_fold_j`. Every cell's fit set is the whole
/// universe minus the cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedFoldPlan {
    pub input_folds: Vec<Vec<usize>>,
    pub output_folds: Vec<Vec<usize>>,
    /// Row-major: `cells[i][j] = input_folds[i] ∩ output_folds[j]`.
    pub cells: Vec<Vec<Vec<usize>>>,
    pub source_size: usize,
}

impl NestedFoldPlan {
    pub fn num_input_folds(&self) -> usize {
        self.input_folds.len()
    }

    pub fn num_output_folds(&self) -> usize {
        self.output_folds.len()
    }

    pub fn num_cells(&self) -> usize {
        self.num_input_folds() * self.num_output_folds()
    }

    pub fn cell(&self, i: usize, j: usize) -> &[usize] {
        &self.cells[i][j]
    }

    /// Fit indices for cell `(i, j)`: the universe minus the cell.
    pub fn fit_indices(&self, i: usize, j: usize) -> Vec<usize> {
        complement(self.source_size, &self.cells[i][j])
    }

    /// Check the nested-plan invariants: both partitions exclusive and
    /// exhaustive, cells equal to the pairwise intersections, every cell
    /// non-empty and strictly smaller than the universe.
    pub fn validate(&self) -> Result<()> {
        for (name, folds) in [("input", &self.input_folds), ("output", &self.output_folds)] {
            let mut seen = vec![false; self.source_size];
            for fold in folds {
                for &i in fold {
                    if i >= self.source_size {
                        return Err(Error::IndexOutOfRange {
                            index: i,
                            d: self.source_size,
                        });
                    }
                    if seen[i] {
                        return Err(Error::OverlappingIndices(format!(
                            "index {i} appears in two {name} folds"
                        )));
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidDataset(format!(
                    "{name} folds do not cover the universe"
                )));
            }
        }
        if self.cells.len() != self.input_folds.len()
            || self
                .cells
                .iter()
                .any(|row| row.len() != self.output_folds.len())
        {
            return Err(Error::InvalidDataset("cell grid shape mismatch".into()));
        }
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let expected = sorted_intersection(&self.input_folds[i], &self.output_folds[j]);
                if *cell != expected {
                    return Err(Error::InvalidDataset(format!(
                        "cell ({i}, {j}) is not the fold intersection"
                    )));
                }
                if cell.is_empty() {
                    return Err(Error::InvalidDataset(format!("cell ({i}, {j}) is empty")));
                }
                if cell.len() >= self.source_size {
                    return Err(Error::InvalidDataset(format!(
                        "cell ({i}, {j}) leaves an empty fit set"
                    )));
                }
            }
        }
        Ok(())
    }
}

const NESTED_REDEAL_BUDGET: usize = 128;

/// Build a nested plan from independent input and output shuffles, with the
/// cells formed as intersections. Re-deals (with fresh derived seeds) until
/// every cell is non-empty, failing after a fixed retry budget.
pub fn make_nested_folds(d: usize, n: usize, k: usize, seed: u64) -> Result<NestedFoldPlan> {
    if n < 2 || k < 2 {
        return Err(Error::InvalidNestedPlan {
            n,
            k,
            d,
            reason: "need n >= 2 and k >= 2".into(),
        });
    }
    if n.checked_mul(k).is_none_or(|cells| cells > d) {
        return Err(Error::InvalidNestedPlan {
            n,
            k,
            d,
            reason: "n*k cells cannot all be non-empty when n*k > d".into(),
        });
    }
    for attempt in 0..NESTED_REDEAL_BUDGET {
        let input_folds = deal_folds(
            d,
            n,
            &mut rng_for(seed, "make-nested-folds/input", &[attempt as u64]),
        );
        let output_folds = deal_folds(
            d,
            k,
            &mut rng_for(seed, "make-nested-folds/output", &[attempt as u64]),
        );
        let mut cells = Vec::with_capacity(n);
        let mut all_nonempty = true;
        for input_fold in &input_folds {
            let mut row = Vec::with_capacity(k);
            for output_fold in &output_folds {
                let cell = sorted_intersection(input_fold, output_fold);
                all_nonempty &= !cell.is_empty();
                row.push(cell);
            }
            cells.push(row);
        }
        if all_nonempty {
            return Ok(NestedFoldPlan {
                input_folds,
                output_folds,
                cells,
                source_size: d,
            });
        }
    }
    Err(Error::EmptyNestedCell {
        attempts: NESTED_REDEAL_BUDGET,
    })
}

/// Indices in `{0..d-1}` not present in the sorted set `exclude`.
pub fn complement(d: usize, exclude: &[usize]) -> Vec<usize> {
    let mut member = vec![false; d];
    for &i in exclude {
        member[i] = true;
    }
    (0..d).filter(|&i| !member[i]).collect()
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}
