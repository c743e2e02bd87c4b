//! Shared fixtures for the benchmark targets.

use postselect_core::{
    generate_synthetic, make_folds, make_split, Dataset, FoldPlan, GeneratorKind, SplitFractions,
    SplitPlan,
};

pub fn noise_dataset(d: usize) -> Dataset {
    generate_synthetic(GeneratorKind::PureNoiseLabels, d, 2, 2, 42).unwrap()
}

pub fn cluster_dataset(d: usize) -> Dataset {
    generate_synthetic(GeneratorKind::GaussianClusters, d, 2, 3, 42).unwrap()
}

pub fn standard_split(dataset: &Dataset) -> SplitPlan {
    make_split(dataset, SplitFractions::new(0.6, 0.2, 0.2), 42).unwrap()
}

pub fn standard_folds(d: usize, n: usize) -> FoldPlan {
    make_folds(d, n, 42).unwrap()
}
