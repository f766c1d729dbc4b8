//! The bench fixtures must stay well-formed: shapes line up, the loss they
//! feed is finite, and the end-to-end recipe actually trains.

use armada_bench::{bench_run_spec, step_fixture, CLASSES, MANIFOLD, TEACHER_DIM};
use armada_core::experiments::run_distilled;
use armada_core::losses::student_total_loss;
use armada_core::models::student_forward;
use armada_core::tensor::{backward, Graph};

#[test]
fn step_fixture_supports_a_full_gradient_step() {
    let fix = step_fixture(16, 3).expect("fixture");
    assert_eq!(fix.teacher.logits.shape(), (16, CLASSES));
    assert_eq!(
        fix.teacher.projection.as_ref().expect("projection").shape(),
        (16, MANIFOLD)
    );

    let g = Graph::new();
    let bound = fix.student.bind(&g);
    let out = student_forward(&g, &bound, &fix.inputs).expect("forward");
    let (loss, parts) =
        student_total_loss(&g, &out, &fix.teacher, &fix.labels, &fix.loss).expect("loss");
    let value = loss.item().expect("scalar loss");
    assert!(value.is_finite() && value > 0.0);
    assert!(parts.task.is_finite());

    let grads = backward(&loss).expect("backward");
    for (name, node) in bound.named() {
        let grad = grads.get(node).unwrap_or_else(|| panic!("missing grad {name}"));
        assert!(grad.data().iter().all(|v| v.is_finite()), "{name}");
    }
}

#[test]
fn fixtures_are_deterministic_per_seed() {
    let a = step_fixture(8, 42).expect("fixture");
    let b = step_fixture(8, 42).expect("fixture");
    assert_eq!(a.teacher.logits.data(), b.teacher.logits.data());
    let c = step_fixture(8, 43).expect("fixture");
    assert_ne!(a.teacher.logits.data(), c.teacher.logits.data());
}

#[test]
fn bench_run_spec_trains_end_to_end() {
    let spec = bench_run_spec();
    assert_eq!(spec.teacher.d_t, TEACHER_DIM);
    let outcome = run_distilled(&spec).expect("run");
    assert!(outcome.report.final_eval.student_main.is_finite());
    assert_eq!(outcome.report.epochs.len(), spec.train.epochs);
}
