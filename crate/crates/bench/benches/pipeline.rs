//! Benchmarks along the training pipeline's hot path: the student's
//! loss-and-gradient step, the optimizer update, the orthonormal retraction,
//! and the analysis routines that run once per evaluation.

use armada_bench::{bench_matrix, bench_run_spec, step_fixture, MANIFOLD, WIDTH};
use armada_core::analysis::{kmeans, silhouette, welch_t_one_sided};
use armada_core::experiments::run_distilled;
use armada_core::losses::student_total_loss;
use armada_core::models::{retract_orthonormal, student_forward};
use armada_core::tensor::{backward, Graph};
use armada_core::train::{AdamW, AdamWConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

/// Forward pass, full student loss, and reverse sweep on one batch.
fn bench_loss_backward(c: &mut Criterion) {
    let fix = step_fixture(32, 11).expect("fixture");
    c.bench_function("student_loss_backward/batch32", |b| {
        b.iter(|| {
            let g = Graph::new();
            let bound = fix.student.bind(&g);
            let out = student_forward(&g, &bound, &fix.inputs).expect("forward");
            let (loss, _) =
                student_total_loss(&g, &out, &fix.teacher, &fix.labels, &fix.loss)
                    .expect("loss");
            black_box(backward(&loss).expect("backward"))
        })
    });
}

/// One AdamW update over every student tensor, gradients precomputed.
fn bench_adamw_step(c: &mut Criterion) {
    let fix = step_fixture(32, 13).expect("fixture");
    let g = Graph::new();
    let bound = fix.student.bind(&g);
    let out = student_forward(&g, &bound, &fix.inputs).expect("forward");
    let (loss, _) =
        student_total_loss(&g, &out, &fix.teacher, &fix.labels, &fix.loss).expect("loss");
    let grads = backward(&loss).expect("backward");
    let named_grads: Vec<(String, armada_core::Matrix)> = bound
        .named()
        .iter()
        .map(|(name, node)| (name.clone(), grads.get(node).expect("leaf grad").clone()))
        .collect();

    c.bench_function("adamw_step/all_student_tensors", |b| {
        b.iter_batched(
            || {
                (
                    fix.student.clone(),
                    AdamW::new(AdamWConfig::new(0.01, 0.01)).expect("optimizer"),
                )
            },
            |(mut params, mut opt)| {
                opt.begin_step();
                let mut i = 0;
                params
                    .for_each_mut(|name, m| {
                        let (gname, grad) = &named_grads[i];
                        assert_eq!(name, gname);
                        i += 1;
                        opt.update(name, m, grad)
                    })
                    .expect("update");
                black_box(params)
            },
            BatchSize::SmallInput,
        )
    });
}

/// QR-based re-orthonormalization of a projection matrix.
fn bench_retraction(c: &mut Criterion) {
    let w = bench_matrix(WIDTH, MANIFOLD, 17).expect("matrix");
    c.bench_function("retract_orthonormal/16x8", |b| {
        b.iter(|| black_box(retract_orthonormal(&w).expect("retraction")))
    });
}

/// Clustering and cluster quality on a held-out-sized projection.
fn bench_analysis(c: &mut Criterion) {
    let points = bench_matrix(200, MANIFOLD, 19).expect("matrix");
    c.bench_function("kmeans/200x8_k4", |b| {
        b.iter(|| black_box(kmeans(&points, 4, 23).expect("kmeans")))
    });
    let labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
    c.bench_function("silhouette/200x8", |b| {
        b.iter(|| black_box(silhouette(&points, &labels).expect("silhouette")))
    });

    let a: Vec<f64> = (0..64).map(|i| 0.7 + 0.01 * (i % 7) as f64).collect();
    let b_: Vec<f64> = (0..64).map(|i| 0.6 + 0.015 * (i % 5) as f64).collect();
    c.bench_function("welch_t_one_sided/64v64", |b| {
        b.iter(|| black_box(welch_t_one_sided(&a, &b_).expect("welch")))
    });
}

/// End to end: one full (tiny) distilled training run.
fn bench_full_run(c: &mut Criterion) {
    let spec = bench_run_spec();
    let mut group = c.benchmark_group("end_to_end");
    group.sample_size(10);
    group.bench_function("distilled_run/n32_e1", |b| {
        b.iter(|| black_box(run_distilled(&spec).expect("run")))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_loss_backward,
    bench_adamw_step,
    bench_retraction,
    bench_analysis,
    bench_full_run
);
criterion_main!(benches);
