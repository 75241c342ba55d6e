use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_rows, PixelClassifier, PixelRow};
use crate::error::{Error, Result};
use crate::nn::{DenseLayer, DropoutMode, Optimizer, OptimizerKind};
use crate::{argmax_lowest, NUM_BANDS, NUM_CLASSES};

/// Width of both hidden layers.
pub const ANN_HIDDEN: usize = 20;

/// Multilayer perceptron 10 -> 20 -> 20 -> 14 with ReLU hidden units and a
/// softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    pub hidden1: DenseLayer<f32>,
    pub hidden2: DenseLayer<f32>,
    pub output: DenseLayer<f32>,
    /// Dropout rate after each hidden layer during training.
    pub dropout: f64,
}

impl AnnModel {
    pub fn zeros() -> Self {
        AnnModel {
            hidden1: DenseLayer::zeros(NUM_BANDS, ANN_HIDDEN),
            hidden2: DenseLayer::zeros(ANN_HIDDEN, ANN_HIDDEN),
            output: DenseLayer::zeros(ANN_HIDDEN, NUM_CLASSES),
            dropout: 0.5,
        }
    }

    /// Checks the fixed layer widths.
    pub fn from_layers(
        hidden1: DenseLayer<f32>,
        hidden2: DenseLayer<f32>,
        output: DenseLayer<f32>,
        dropout: f64,
    ) -> Result<Self> {
        let dims = [
            (hidden1.n_in, hidden1.n_out),
            (hidden2.n_in, hidden2.n_out),
            (output.n_in, output.n_out),
        ];
        if dims
            != [
                (NUM_BANDS, ANN_HIDDEN),
                (ANN_HIDDEN, ANN_HIDDEN),
                (ANN_HIDDEN, NUM_CLASSES),
            ]
        {
            return Err(Error::dims(format!("ANN layers must be 10-20-20-14, got {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::invalid("dropout rate must be in [0, 1)"));
        }
        Ok(AnnModel {
            hidden1,
            hidden2,
            output,
            dropout,
        })
    }

    fn params(&self) -> [&[f32]; 6] {
        [
            &self.hidden1.weights,
            &self.hidden1.bias,
            &self.hidden2.weights,
            &self.hidden2.bias,
            &self.output.weights,
            &self.output.bias,
        ]
    }

    fn params_mut(&mut self) -> [&mut [f32]; 6] {
        [
            &mut self.hidden1.weights,
            &mut self.hidden1.bias,
            &mut self.hidden2.weights,
            &mut self.hidden2.bias,
            &mut self.output.weights,
            &mut self.output.bias,
        ]
    }

    /// Every parameter in storage order.
    pub fn flat_params(&self) -> Vec<f32> {
        self.params().concat()
    }

    /// Softmax class probabilities without dropout.
    pub fn predict_probs(&self, features: &[f32; NUM_BANDS]) -> [f32; NUM_CLASSES] {
        let logits = self.logits(features);
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut p = logits.map(|l| (l - max).exp());
        let sum: f32 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= sum);
        p
    }

    fn logits(&self, x: &[f32; NUM_BANDS]) -> [f32; NUM_CLASSES] {
        let mut h1 = [0.0; ANN_HIDDEN];
        let mut h2 = [0.0; ANN_HIDDEN];
        let mut out = [0.0; NUM_CLASSES];
        self.hidden1.forward_into(x, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));
        self.hidden2.forward_into(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
        self.output.forward_into(&h2, &mut out);
        out
    }
}

impl PixelClassifier for AnnModel {
    fn classify(&self, features: &[f32; NUM_BANDS]) -> u8 {
        argmax_lowest(&self.logits(features)) as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnConfig {
    pub epochs: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            epochs: 250,
            dropout: 0.5,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

pub fn train_ann(rows: &[PixelRow], config: &AnnConfig) -> Result<AnnModel> {
    train_ann_with(rows, config, |_, _| {})
}

/// [`train_ann`] calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_ann_with(rows: &[PixelRow], config: &AnnConfig, mut on_epoch: impl FnMut(usize, f64)) -> Result<AnnModel> {
    check_rows(rows)?;
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = AnnModel::zeros();
    model.dropout = config.dropout;
    for layer in [&mut model.hidden1, &mut model.hidden2, &mut model.output] {
        let normal = Normal::new(0.0f64, (2.0 / layer.n_in as f64).sqrt()).expect("positive std");
        for w in &mut layer.weights {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    let mut model = AnnModel::from_layers(model.hidden1, model.hidden2, model.output, config.dropout)?;

    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = Optimizer::<f32>::new(config.optimizer, config.learning_rate, &sizes);
    let mut grads: Vec<Vec<f32>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mode = if config.dropout > 0.0 {
        DropoutMode::Train
    } else {
        DropoutMode::Inference
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            for &i in chunk {
                let row = &rows[i];
                loss_sum += sample_backward(&model, row, mode, &mut rng, &mut grads) as f64;
            }
            let scale = 1.0 / chunk.len() as f32;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            let g: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            opt.step(&mut model.params_mut(), &g);
        }
        let mean = loss_sum / rows.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        on_epoch(epoch, mean);
    }
    Ok(model)
}

/// Adds one sample's cross-entropy gradient to `grads` and returns its loss.
fn sample_backward(
    m: &AnnModel,
    row: &PixelRow,
    mode: DropoutMode,
    rng: &mut ChaCha8Rng,
    grads: &mut [Vec<f32>],
) -> f32 {
    let x = &row.features;
    let mask1: Vec<f32> = crate::nn::dropout_mask(ANN_HIDDEN, m.dropout, mode, rng);
    let mask2: Vec<f32> = crate::nn::dropout_mask(ANN_HIDDEN, m.dropout, mode, rng);

    let mut z1 = [0.0; ANN_HIDDEN];
    m.hidden1.forward_into(x, &mut z1);
    let a1: [f32; ANN_HIDDEN] = std::array::from_fn(|i| z1[i].max(0.0) * mask1[i]);
    let mut z2 = [0.0; ANN_HIDDEN];
    m.hidden2.forward_into(&a1, &mut z2);
    let a2: [f32; ANN_HIDDEN] = std::array::from_fn(|i| z2[i].max(0.0) * mask2[i]);
    let mut logits = [0.0; NUM_CLASSES];
    m.output.forward_into(&a2, &mut logits);

    let (loss, dlogits) = crate::nn::softmax_cross_entropy(&logits, row.label as usize);
    let (g, rest) = grads.split_at_mut(2);
    let (g2, g3) = rest.split_at_mut(2);
    let (gw3, gb3) = g3.split_at_mut(1);
    let mut da2 = [0.0; ANN_HIDDEN];
    m.output
        .backward(&a2, &dlogits, &mut gw3[0], &mut gb3[0], Some(&mut da2));
    let dz2: [f32; ANN_HIDDEN] = std::array::from_fn(|i| if z2[i] > 0.0 { da2[i] * mask2[i] } else { 0.0 });
    let (gw2, gb2) = g2.split_at_mut(1);
    let mut da1 = [0.0; ANN_HIDDEN];
    m.hidden2.backward(&a1, &dz2, &mut gw2[0], &mut gb2[0], Some(&mut da1));
    let dz1: [f32; ANN_HIDDEN] = std::array::from_fn(|i| if z1[i] > 0.0 { da1[i] * mask1[i] } else { 0.0 });
    let (gw1, gb1) = g.split_at_mut(1);
    m.hidden1.backward(x, &dz1, &mut gw1[0], &mut gb1[0], None);
    loss
}
