use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_rows, PixelClassifier, PixelRow};
use crate::error::{Error, Result};
use crate::{argmax_lowest, NUM_BANDS, NUM_CLASSES};

/// Fourteen one-vs-rest linear scorers `w_k . x + b_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmOvr {
    pub weights: [[f32; NUM_BANDS]; NUM_CLASSES],
    pub bias: [f32; NUM_CLASSES],
}

impl LinearSvmOvr {
    pub fn zeros() -> Self {
        LinearSvmOvr {
            weights: [[0.0; NUM_BANDS]; NUM_CLASSES],
            bias: [0.0; NUM_CLASSES],
        }
    }

    pub fn scores(&self, x: &[f32; NUM_BANDS]) -> [f32; NUM_CLASSES] {
        std::array::from_fn(|k| self.bias[k] + self.weights[k].iter().zip(x).map(|(w, v)| w * v).sum::<f32>())
    }
}

impl PixelClassifier for LinearSvmOvr {
    fn classify(&self, features: &[f32; NUM_BANDS]) -> u8 {
        argmax_lowest(&self.scores(features)) as u8
    }
}

/// Stochastic subgradient descent on the L2-regularized hinge loss
/// `lambda/2 |w|^2 + mean(max(0, 1 - y (w . x + b)))` with step size
/// `eta_t = eta0 / (1 + eta0 * lambda * t)`. The bias is not regularized.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    pub lambda: f64,
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 20,
            lambda: 1e-4,
            eta0: 0.1,
            seed: 0,
        }
    }
}

pub fn train_svm(rows: &[PixelRow], config: &SvmConfig) -> Result<LinearSvmOvr> {
    check_rows(rows)?;
    let mut present = [false; NUM_CLASSES];
    rows.iter().for_each(|r| present[r.label as usize] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::invalid("a one-vs-rest SVM needs at least two classes"));
    }
    if config.epochs == 0 || !(config.lambda > 0.0) || !(config.eta0 > 0.0) {
        return Err(Error::invalid("SVM needs positive epochs, lambda and eta0"));
    }

    // Weights in f64 so long runs do not drift; the model stores f32.
    let mut w = [[0.0f64; NUM_BANDS]; NUM_CLASSES];
    let mut b = [0.0f64; NUM_CLASSES];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let row = &rows[i];
            let eta = config.eta0 / (1.0 + config.eta0 * config.lambda * t as f64);
            let shrink = 1.0 - eta * config.lambda;
            t += 1;
            for k in 0..NUM_CLASSES {
                let y = if row.label as usize == k { 1.0 } else { -1.0 };
                let score: f64 = b[k] + w[k].iter().zip(&row.features).map(|(w, &x)| w * x as f64).sum::<f64>();
                w[k].iter_mut().for_each(|v| *v *= shrink);
                if y * score < 1.0 {
                    for (v, &x) in w[k].iter_mut().zip(&row.features) {
                        *v += eta * y * x as f64;
                    }
                    b[k] += eta * y;
                }
            }
        }
    }
    Ok(LinearSvmOvr {
        weights: w.map(|r| r.map(|v| v as f32)),
        bias: b.map(|v| v as f32),
    })
}
