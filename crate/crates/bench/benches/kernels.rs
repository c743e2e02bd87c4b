//! Benchmarks for the hot kernels: fitting, evaluation, cross-validation,
//! the lost-luck trial loop, and the Super Learner grid scan.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use postselect_bench::{cluster_dataset, noise_dataset, standard_folds, standard_split};
use postselect_core::{
    cross_validate, evaluate_error, fit_family, fit_honest, lost_luck_experiment, super_learn,
    Learner, LearnerKind, ThresholdSpec,
};

fn bench_fits(c: &mut Criterion) {
    let data = noise_dataset(300);
    let split = standard_split(&data);

    c.bench_function("fit_one_nn_180", |b| {
        b.iter(|| {
            fit_honest(
                &Learner::new(LearnerKind::OneNn, 1),
                black_box(&data),
                &split.fit_idx,
            )
            .unwrap()
        })
    });

    c.bench_function("fit_random_prototype_p4_180", |b| {
        b.iter(|| {
            fit_honest(
                &Learner::new(LearnerKind::RandomPrototype { prototypes: 4 }, 1),
                black_box(&data),
                &split.fit_idx,
            )
            .unwrap()
        })
    });

    c.bench_function("fit_nnwt_construction_180x60", |b| {
        let kind = LearnerKind::Nnwt {
            threshold: ThresholdSpec::Construction,
        };
        b.iter(|| fit_family(&kind, 1, black_box(&data), &split.fit_idx, &split.val_idx).unwrap())
    });
}

fn bench_evaluation(c: &mut Criterion) {
    let data = cluster_dataset(300);
    let split = standard_split(&data);
    let model = fit_honest(&Learner::new(LearnerKind::OneNn, 1), &data, &split.fit_idx).unwrap();
    c.bench_function("evaluate_one_nn_60_queries", |b| {
        b.iter(|| evaluate_error(black_box(&model), &data, &split.val_idx).unwrap())
    });
}

fn bench_cross_validation(c: &mut Criterion) {
    let data = noise_dataset(200);
    let folds = standard_folds(200, 5);
    let nnwt = LearnerKind::Nnwt {
        threshold: ThresholdSpec::Construction,
    };
    c.bench_function("cross_validate_nnwt_5_folds", |b| {
        b.iter(|| cross_validate(black_box(&data), &folds, &nnwt, 1).unwrap())
    });
}

fn bench_lost_luck(c: &mut Criterion) {
    let data = noise_dataset(200);
    let split = standard_split(&data);
    let family = LearnerKind::RandomPrototype { prototypes: 4 };
    c.bench_function("lost_luck_100_trials", |b| {
        b.iter(|| lost_luck_experiment(black_box(&data), &split, &family, 100, 1, 1, 3.0).unwrap())
    });
}

fn bench_super_learner(c: &mut Criterion) {
    let data = noise_dataset(120);
    let folds = standard_folds(120, 4);
    let candidates = [
        LearnerKind::OneNn,
        LearnerKind::RandomPrototype { prototypes: 4 },
        LearnerKind::Constant { label: 0 },
    ];
    c.bench_function("super_learn_66_grid_points", |b| {
        b.iter(|| super_learn(black_box(&data), &folds, &candidates, 0.1, 1).unwrap())
    });
}

criterion_group!(
    benches,
    bench_fits,
    bench_evaluation,
    bench_cross_validation,
    bench_lost_luck,
    bench_super_learner
);
criterion_main!(benches);
