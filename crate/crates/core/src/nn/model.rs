//! The patch classifier:
//!
//! ```text
//! input 11x11x10
//!   -> conv k x k, 32 filters -> ReLU
//!   -> conv k x k, 64 filters -> ReLU
//!   -> max pool 3x3 / 2 -> dropout 0.5
//!   -> flatten -> dense 128 -> ReLU -> dropout 0.25
//!   -> dense 14 -> softmax
//! ```
//!
//! With `k = 3` the volumes are 9x9x32, 7x7x64, 3x3x64, 576, 128 and 14.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::layers::{dropout_mask, maxpool_into, pool_dim, relu_in_place, softmax, softmax_cross_entropy};
use super::{ConvLayer, DenseLayer, DropoutMode, Real};
use crate::error::{Error, Result};
use crate::sampling::{Patch, PATCH_LEN};
use crate::{argmax_lowest, NUM_BANDS, NUM_CLASSES, PATCH_SIZE};

pub const FILTERS_1: usize = 32;
pub const FILTERS_2: usize = 64;
pub const DENSE_UNITS: usize = 128;
pub const DROPOUT_AFTER_POOL: f64 = 0.5;
pub const DROPOUT_AFTER_DENSE: f64 = 0.25;

/// Volume sizes through the network, `(rows, cols, channels)` for the
/// spatial stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub input: (usize, usize, usize),
    pub conv1: (usize, usize, usize),
    pub conv2: (usize, usize, usize),
    pub pool: (usize, usize, usize),
    pub flatten: usize,
    pub hidden: usize,
    pub output: usize,
}

impl ShapeChain {
    pub fn for_kernel(k: usize) -> Result<Self> {
        if !matches!(k, 1 | 3 | 5) {
            return Err(Error::invalid(format!("kernel size must be 1, 3 or 5, got {k}")));
        }
        let d1 = PATCH_SIZE - k + 1;
        let d2 = d1.checked_sub(k - 1).filter(|&d| d > 0);
        let p = d2.and_then(pool_dim);
        let (d2, p) = match (d2, p) {
            (Some(d2), Some(p)) => (d2, p),
            _ => return Err(Error::dims(format!("kernel size {k} leaves no room for pooling"))),
        };
        Ok(ShapeChain {
            input: (PATCH_SIZE, PATCH_SIZE, NUM_BANDS),
            conv1: (d1, d1, FILTERS_1),
            conv2: (d2, d2, FILTERS_2),
            pool: (p, p, FILTERS_2),
            flatten: p * p * FILTERS_2,
            hidden: DENSE_UNITS,
            output: NUM_CLASSES,
        })
    }

    pub(crate) fn conv1_len(&self) -> usize {
        self.conv1.0 * self.conv1.1 * self.conv1.2
    }

    pub(crate) fn conv2_len(&self) -> usize {
        self.conv2.0 * self.conv2.1 * self.conv2.2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<T> {
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    pub dense1: DenseLayer<T>,
    pub dense2: DenseLayer<T>,
    pub dropout_pool: f64,
    pub dropout_dense: f64,
    shape: ShapeChain,
}

/// Gradients in parameter order: conv1 kernel, conv1 bias, conv2 kernel,
/// conv2 bias, dense1 weights, dense1 bias, dense2 weights, dense2 bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnGrads<T> {
    pub parts: Vec<Vec<T>>,
}

impl<T: Real> CnnGrads<T> {
    fn zeros_like(model: &CnnModel<T>) -> Self {
        CnnGrads {
            parts: model.params().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    fn add_assign(&mut self, other: &CnnGrads<T>) {
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.parts.iter().map(Vec::as_slice).collect()
    }
}

/// Intermediate values of one training forward pass.
struct Trace<T> {
    z1: Vec<T>,
    a1: Vec<T>,
    z2: Vec<T>,
    argmax: Vec<usize>,
    pool_mask: Vec<T>,
    dropped: Vec<T>,
    hidden_pre: Vec<T>,
    hidden_mask: Vec<T>,
    hidden_out: Vec<T>,
    logits: Vec<T>,
}

/// Builds the `f32` network for kernel size `k` with He-normal weights
/// (`std = sqrt(2 / fan_in)`) drawn from `seed` and zero biases.
pub fn build_model(k: usize, seed: u64) -> Result<CnnModel<f32>> {
    build_model_with::<f32>(k, seed)
}

pub fn build_model_with<T: Real>(k: usize, seed: u64) -> Result<CnnModel<T>> {
    let shape = ShapeChain::for_kernel(k)?;
    if k == 3 {
        assert_eq!(
            (
                shape.conv1,
                shape.conv2,
                shape.pool,
                shape.flatten,
                shape.hidden,
                shape.output
            ),
            ((9, 9, 32), (7, 7, 64), (3, 3, 64), 576, 128, 14),
            "k = 3 shape chain deviates from the reference architecture"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut he = |fan_in: usize, n: usize| -> Vec<T> {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut rng))).collect()
    };

    let mut conv1 = ConvLayer::zeros(k, NUM_BANDS, FILTERS_1);
    conv1.kernel = he(k * k * NUM_BANDS, conv1.kernel.len());
    let mut conv2 = ConvLayer::zeros(k, FILTERS_1, FILTERS_2);
    conv2.kernel = he(k * k * FILTERS_1, conv2.kernel.len());
    let mut dense1 = DenseLayer::zeros(shape.flatten, DENSE_UNITS);
    dense1.weights = he(shape.flatten, dense1.weights.len());
    let mut dense2 = DenseLayer::zeros(DENSE_UNITS, NUM_CLASSES);
    dense2.weights = he(DENSE_UNITS, dense2.weights.len());

    Ok(CnnModel {
        conv1,
        conv2,
        dense1,
        dense2,
        dropout_pool: DROPOUT_AFTER_POOL,
        dropout_dense: DROPOUT_AFTER_DENSE,
        shape,
    })
}

impl<T: Real> CnnModel<T> {
    /// Assembles a model from layers, checking that their sizes chain.
    pub fn from_layers(
        conv1: ConvLayer<T>,
        conv2: ConvLayer<T>,
        dense1: DenseLayer<T>,
        dense2: DenseLayer<T>,
        dropout_pool: f64,
        dropout_dense: f64,
    ) -> Result<Self> {
        let shape = ShapeChain::for_kernel(conv1.k)?;
        let ok = conv2.k == conv1.k
            && conv1.c_in == NUM_BANDS
            && conv1.c_out == FILTERS_1
            && conv2.c_in == FILTERS_1
            && conv2.c_out == FILTERS_2
            && dense1.n_in == shape.flatten
            && dense1.n_out == DENSE_UNITS
            && dense2.n_in == DENSE_UNITS
            && dense2.n_out == NUM_CLASSES
            && conv1.kernel.len() == conv1.k * conv1.k * conv1.c_in * conv1.c_out
            && conv2.kernel.len() == conv2.k * conv2.k * conv2.c_in * conv2.c_out
            && conv1.bias.len() == conv1.c_out
            && conv2.bias.len() == conv2.c_out
            && dense1.weights.len() == dense1.n_in * dense1.n_out
            && dense2.weights.len() == dense2.n_in * dense2.n_out
            && dense1.bias.len() == dense1.n_out
            && dense2.bias.len() == dense2.n_out;
        if !ok {
            return Err(Error::dims("layer sizes do not form the patch classifier"));
        }
        for rate in [dropout_pool, dropout_dense] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
            }
        }
        Ok(CnnModel {
            conv1,
            conv2,
            dense1,
            dense2,
            dropout_pool,
            dropout_dense,
            shape,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.conv1.k
    }

    pub fn shape(&self) -> ShapeChain {
        self.shape
    }

    pub fn params(&self) -> [&[T]; 8] {
        [
            &self.conv1.kernel,
            &self.conv1.bias,
            &self.conv2.kernel,
            &self.conv2.bias,
            &self.dense1.weights,
            &self.dense1.bias,
            &self.dense2.weights,
            &self.dense2.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [T]; 8] {
        [
            &mut self.conv1.kernel,
            &mut self.conv1.bias,
            &mut self.conv2.kernel,
            &mut self.conv2.bias,
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Converts every weight to another scalar type.
    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from_f64_lossy(x.to_f64().unwrap())).collect() };
        CnnModel {
            conv1: ConvLayer {
                k: self.conv1.k,
                c_in: self.conv1.c_in,
                c_out: self.conv1.c_out,
                kernel: conv(&self.conv1.kernel),
                bias: conv(&self.conv1.bias),
            },
            conv2: ConvLayer {
                k: self.conv2.k,
                c_in: self.conv2.c_in,
                c_out: self.conv2.c_out,
                kernel: conv(&self.conv2.kernel),
                bias: conv(&self.conv2.bias),
            },
            dense1: DenseLayer {
                n_in: self.dense1.n_in,
                n_out: self.dense1.n_out,
                weights: conv(&self.dense1.weights),
                bias: conv(&self.dense1.bias),
            },
            dense2: DenseLayer {
                n_in: self.dense2.n_in,
                n_out: self.dense2.n_out,
                weights: conv(&self.dense2.weights),
                bias: conv(&self.dense2.bias),
            },
            dropout_pool: self.dropout_pool,
            dropout_dense: self.dropout_dense,
            shape: self.shape,
        }
    }

    /// Pooled, flattened features of one patch (dropout not applied).
    fn features(&self, input: &[T], z1: &mut [T], z2: &mut [T], pooled: &mut [T], argmax: &mut [usize]) {
        let s = self.shape;
        self.conv1.forward_into(input, s.input.0, s.input.1, z1);
        relu_in_place(z1);
        self.conv2.forward_into(z1, s.conv1.0, s.conv1.1, z2);
        relu_in_place(z2);
        maxpool_into(z2, s.conv2.0, s.conv2.1, s.conv2.2, pooled, argmax);
    }

    /// Dense head on flattened pooled features, inference mode.
    pub(crate) fn head_probs(&self, pooled: &[T]) -> Vec<T> {
        let mut hidden = vec![T::zero(); DENSE_UNITS];
        self.dense1.forward_into(pooled, &mut hidden);
        relu_in_place(&mut hidden);
        let mut logits = vec![T::zero(); NUM_CLASSES];
        self.dense2.forward_into(&hidden, &mut logits);
        softmax(&logits)
    }

    /// Class probabilities for one patch given as `11 * 11 * 10` values in
    /// row, column, band order. Dropout is in inference mode.
    pub fn predict_probs(&self, input: &[T]) -> Result<Vec<T>> {
        if input.len() != PATCH_LEN {
            return Err(Error::LengthMismatch {
                expected: PATCH_LEN,
                actual: input.len(),
            });
        }
        let s = self.shape;
        let mut z1 = vec![T::zero(); s.conv1_len()];
        let mut z2 = vec![T::zero(); s.conv2_len()];
        let mut pooled = vec![T::zero(); s.flatten];
        let mut argmax = vec![0; s.flatten];
        self.features(input, &mut z1, &mut z2, &mut pooled, &mut argmax);
        Ok(self.head_probs(&pooled))
    }

    /// Classifies every full 11x11 window of an HWC image with `NUM_BANDS`
    /// channels, returning `(rows - 10) x (cols - 10)` labels in row-major
    /// order.
    ///
    /// The convolutions run once over the whole image. A valid convolution
    /// commutes with cropping and every output element is accumulated in the
    /// same order as for a single patch, so each label equals
    /// [`predict_patch`] on the corresponding window bit for bit.
    pub(crate) fn classify_windows(&self, image: &[T], rows: usize, cols: usize) -> Vec<u8> {
        let s = self.shape;
        let k = self.kernel_size();
        debug_assert_eq!(image.len(), rows * cols * NUM_BANDS);
        let (r1, c1) = (rows - k + 1, cols - k + 1);
        let mut z1 = vec![T::zero(); r1 * c1 * FILTERS_1];
        self.conv1.forward_into(image, rows, cols, &mut z1);
        relu_in_place(&mut z1);
        let (r2, c2) = (r1 - k + 1, c1 - k + 1);
        let mut z2 = vec![T::zero(); r2 * c2 * FILTERS_2];
        self.conv2.forward_into(&z1, r1, c1, &mut z2);
        relu_in_place(&mut z2);
        drop(z1);

        let (wr, wc, ch) = s.conv2;
        let mut window = vec![T::zero(); wr * wc * ch];
        let mut pooled = vec![T::zero(); s.flatten];
        let mut argmax = vec![0; s.flatten];
        let (out_rows, out_cols) = (rows - PATCH_SIZE + 1, cols - PATCH_SIZE + 1);
        let mut labels = Vec::with_capacity(out_rows * out_cols);
        for i in 0..out_rows {
            for j in 0..out_cols {
                for a in 0..wr {
                    let src = ((i + a) * c2 + j) * ch;
                    window[a * wc * ch..(a + 1) * wc * ch].copy_from_slice(&z2[src..src + wc * ch]);
                }
                maxpool_into(&window, wr, wc, ch, &mut pooled, &mut argmax);
                labels.push(argmax_lowest(&self.head_probs(&pooled)) as u8);
            }
        }
        labels
    }

    fn forward_trace(&self, input: &[T], rng: Option<&mut ChaCha8Rng>) -> Trace<T> {
        let s = self.shape;
        let mut z1 = vec![T::zero(); s.conv1_len()];
        self.conv1.forward_into(input, s.input.0, s.input.1, &mut z1);
        let mut a1 = z1.clone();
        relu_in_place(&mut a1);
        let mut z2 = vec![T::zero(); s.conv2_len()];
        self.conv2.forward_into(&a1, s.conv1.0, s.conv1.1, &mut z2);
        let mut a2 = z2.clone();
        relu_in_place(&mut a2);
        let mut pooled = vec![T::zero(); s.flatten];
        let mut argmax = vec![0; s.flatten];
        maxpool_into(&a2, s.conv2.0, s.conv2.1, s.conv2.2, &mut pooled, &mut argmax);

        let (pool_mask, hidden_mask_rate, mut rng) = match rng {
            Some(r) => {
                let m = dropout_mask(s.flatten, self.dropout_pool, DropoutMode::Train, r);
                (m, self.dropout_dense, Some(r))
            }
            None => (vec![T::one(); s.flatten], 0.0, None),
        };
        let dropped: Vec<T> = pooled.iter().zip(&pool_mask).map(|(&v, &m)| v * m).collect();

        let mut hidden_pre = vec![T::zero(); DENSE_UNITS];
        self.dense1.forward_into(&dropped, &mut hidden_pre);
        let hidden_mask = match rng.as_mut() {
            Some(r) => dropout_mask(DENSE_UNITS, hidden_mask_rate, DropoutMode::Train, r),
            None => vec![T::one(); DENSE_UNITS],
        };
        let hidden_out: Vec<T> = hidden_pre
            .iter()
            .zip(&hidden_mask)
            .map(|(&v, &m)| v.max(T::zero()) * m)
            .collect();
        let mut logits = vec![T::zero(); NUM_CLASSES];
        self.dense2.forward_into(&hidden_out, &mut logits);

        Trace {
            z1,
            a1,
            z2,
            argmax,
            pool_mask,
            dropped,
            hidden_pre,
            hidden_mask,
            hidden_out,
            logits,
        }
    }

    /// Loss of one sample and the gradients of `scale * loss`.
    fn sample_grads(&self, input: &[T], label: usize, scale: T, rng: Option<&mut ChaCha8Rng>) -> (T, CnnGrads<T>) {
        let s = self.shape;
        let t = self.forward_trace(input, rng);
        let mut g = CnnGrads::zeros_like(self);
        let (loss, mut dlogits) = softmax_cross_entropy(&t.logits, label);
        for d in &mut dlogits {
            *d *= scale;
        }

        let [_, _, _, _, gw1, gb1, gw2, gb2] = &mut g.parts[..] else {
            unreachable!()
        };
        let mut d_hidden = vec![T::zero(); DENSE_UNITS];
        self.dense2
            .backward(&t.hidden_out, &dlogits, gw2, gb2, Some(&mut d_hidden));
        for ((d, &m), &pre) in d_hidden.iter_mut().zip(&t.hidden_mask).zip(&t.hidden_pre) {
            *d = if pre > T::zero() { *d * m } else { T::zero() };
        }
        let mut d_dropped = vec![T::zero(); s.flatten];
        self.dense1
            .backward(&t.dropped, &d_hidden, gw1, gb1, Some(&mut d_dropped));

        let mut d_a2 = vec![T::zero(); s.conv2_len()];
        for ((&d, &m), &src) in d_dropped.iter().zip(&t.pool_mask).zip(&t.argmax) {
            d_a2[src] += d * m;
        }
        for (d, &z) in d_a2.iter_mut().zip(&t.z2) {
            if !(z > T::zero()) {
                *d = T::zero();
            }
        }

        let [gk1, gc1, gk2, gc2, ..] = &mut g.parts[..] else {
            unreachable!()
        };
        let mut d_a1 = vec![T::zero(); s.conv1_len()];
        self.conv2
            .backward(&t.a1, s.conv1.0, s.conv1.1, &d_a2, gk2, gc2, Some(&mut d_a1));
        for (d, &z) in d_a1.iter_mut().zip(&t.z1) {
            if !(z > T::zero()) {
                *d = T::zero();
            }
        }
        self.conv1.backward(input, s.input.0, s.input.1, &d_a1, gk1, gc1, None);
        (loss, g)
    }

    /// Mean cross-entropy over `batch` and its gradient. With
    /// `dropout_seed`, each sample draws its dropout masks from its own
    /// stream derived in batch order from the seed; the masks are reused in
    /// the backward pass. Per-sample gradients are summed in batch order.
    pub fn loss_and_grads(&self, batch: &[(&[T], u8)], dropout_seed: Option<u64>) -> Result<(T, CnnGrads<T>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        for (x, label) in batch {
            if x.len() != PATCH_LEN {
                return Err(Error::LengthMismatch {
                    expected: PATCH_LEN,
                    actual: x.len(),
                });
            }
            if *label as usize >= NUM_CLASSES {
                return Err(Error::InvalidLabel(*label as u32));
            }
        }
        let seeds: Vec<Option<u64>> = match dropout_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                batch.iter().map(|_| Some(rng.random())).collect()
            }
            None => vec![None; batch.len()],
        };
        let scale = T::one() / T::from_usize(batch.len()).unwrap();
        let per_sample: Vec<(T, CnnGrads<T>)> = batch
            .par_iter()
            .zip(seeds.par_iter())
            .map(|((x, label), seed)| {
                let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
                self.sample_grads(x, *label as usize, scale, rng.as_mut())
            })
            .collect();

        let mut iter = per_sample.into_iter();
        let (mut loss, mut grads) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g);
        }
        Ok((loss * scale, grads))
    }

    /// Mean loss without gradients, with the same dropout-mask derivation
    /// as [`loss_and_grads`](Self::loss_and_grads).
    pub fn loss(&self, batch: &[(&[T], u8)], dropout_seed: Option<u64>) -> T {
        let mut seed_rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let mut total = T::zero();
        for (x, label) in batch {
            let mut rng = seed_rng.as_mut().map(|r| ChaCha8Rng::seed_from_u64(r.random()));
            let t = self.forward_trace(x, rng.as_mut());
            total += softmax_cross_entropy(&t.logits, *label as usize).0;
        }
        total / T::from_usize(batch.len()).unwrap()
    }

    /// Which ReLUs are active and which inputs win each pooling window.
    /// Finite differences are only meaningful between parameter values that
    /// share this pattern.
    pub fn activation_pattern(&self, input: &[T]) -> (Vec<bool>, Vec<usize>) {
        let t = self.forward_trace(input, None);
        let active =
            t.z1.iter()
                .chain(&t.z2)
                .chain(&t.hidden_pre)
                .map(|&z| z > T::zero())
                .collect();
        (active, t.argmax)
    }
}

/// Most probable class for `patch` and the 14 class probabilities. Ties go
/// to the lowest class id.
pub fn predict_patch(model: &CnnModel<f32>, patch: &Patch) -> Result<(u8, Vec<f32>)> {
    let probs = model.predict_probs(patch.values())?;
    Ok((argmax_lowest(&probs) as u8, probs))
}
