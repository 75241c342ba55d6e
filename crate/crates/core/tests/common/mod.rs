//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use lczpipe::nn::{build_model_with, CnnModel};
use lczpipe::sampling::PATCH_LEN;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-4;
/// Denominator floor of the relative error, so that parameters whose true
/// gradient is essentially zero are judged by absolute error.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub struct GradCheck {
    /// `(tensor index, element, analytic, numeric, relative error)`.
    pub probes: Vec<(usize, usize, f64, f64, f64)>,
    /// Probes redrawn because a perturbation crossed a ReLU or pooling kink.
    pub kinks_skipped: usize,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.probes.iter().map(|p| p.4).fold(0.0, f64::max)
    }

    pub fn max_error_for(&self, tensor: usize) -> f64 {
        self.probes
            .iter()
            .filter(|p| p.0 == tensor)
            .map(|p| p.4)
            .fold(0.0, f64::max)
    }
}

pub fn random_batch(n: usize, seed: u64) -> Vec<(Vec<f64>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = (0..PATCH_LEN).map(|_| rng.random::<f64>()).collect();
            (x, rng.random_range(0..14u8))
        })
        .collect()
}

/// A float64 network with He weights and small random biases, so every
/// parameter tensor has non-trivial gradients.
pub fn gradcheck_model(k: usize, seed: u64) -> CnnModel<f64> {
    let mut m = build_model_with::<f64>(k, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for b in m
        .conv1
        .bias
        .iter_mut()
        .chain(m.conv2.bias.iter_mut())
        .chain(m.dense1.bias.iter_mut())
        .chain(m.dense2.bias.iter_mut())
    {
        *b = rng.random_range(-0.1..0.1);
    }
    m
}

/// Compares analytic gradients with central differences on
/// `probes_per_tensor` random elements of each of the 8 parameter tensors.
pub fn gradient_check(
    model: &CnnModel<f64>,
    batch: &[(Vec<f64>, u8)],
    probes_per_tensor: usize,
    seed: u64,
) -> GradCheck {
    let refs: Vec<(&[f64], u8)> = batch.iter().map(|(x, l)| (x.as_slice(), *l)).collect();
    let (_, grads) = model.loss_and_grads(&refs, None).unwrap();
    let patterns = |m: &CnnModel<f64>| -> Vec<_> { batch.iter().map(|(x, _)| m.activation_pattern(x)).collect() };
    let base = patterns(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut out = GradCheck {
        probes: Vec::new(),
        kinks_skipped: 0,
    };
    for tensor in 0..8 {
        let len = model.params()[tensor].len();
        let mut done = 0;
        while done < probes_per_tensor {
            let i = rng.random_range(0..len);
            let w = model.params()[tensor][i];
            probe.params_mut()[tensor][i] = w + FD_EPS;
            let (plus, plus_pattern) = (probe.loss(&refs, None), patterns(&probe));
            probe.params_mut()[tensor][i] = w - FD_EPS;
            let (minus, minus_pattern) = (probe.loss(&refs, None), patterns(&probe));
            probe.params_mut()[tensor][i] = w;
            if plus_pattern != base || minus_pattern != base {
                out.kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_EPS);
            let analytic = grads.parts[tensor][i];
            out.probes
                .push((tensor, i, analytic, numeric, rel_error(analytic, numeric)));
            done += 1;
        }
    }
    out
}
