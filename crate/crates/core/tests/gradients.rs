//! Analytic gradients of the patch network against central differences in
//! float64.

mod common;

use common::*;

fn check(k: usize, probes_per_tensor: usize, seed: u64) -> GradCheck {
    let model = gradcheck_model(k, seed);
    let batch = random_batch(3, seed + 100);
    gradient_check(&model, &batch, probes_per_tensor, seed + 200)
}

#[test]
fn every_parameter_tensor_matches_finite_differences() {
    let gc = check(3, 40, 1);
    assert_eq!(gc.probes.len(), 320);
    for tensor in 0..8 {
        assert!(
            gc.max_error_for(tensor) < 1e-5,
            "tensor {tensor}: {:e}",
            gc.max_error_for(tensor)
        );
    }
    // The check is not vacuous: most probed parameters have a real gradient.
    let live = gc.probes.iter().filter(|p| p.2.abs() > 1e-8).count();
    assert!(
        live * 2 > gc.probes.len(),
        "only {live} probes with a non-zero gradient"
    );
}

#[test]
fn other_kernel_sizes() {
    for k in [1, 5] {
        let gc = check(k, 16, 7 + k as u64);
        assert!(gc.max_error() < 1e-5, "k = {k}: {:e}", gc.max_error());
    }
}

#[test]
fn single_sample_batch() {
    let model = gradcheck_model(3, 9);
    let batch = random_batch(1, 10);
    let gc = gradient_check(&model, &batch, 12, 11);
    assert!(gc.max_error() < 1e-5);
}

#[test]
fn relative_error_floor() {
    assert_eq!(rel_error(0.0, 0.0), 0.0);
    assert!((rel_error(1.0, 1.0 + 1e-9) - 1e-9).abs() < 1e-15);
    // Below the floor the difference is measured absolutely.
    assert!((rel_error(1e-9, 2e-9) - 1e-3).abs() < 1e-12);
}
