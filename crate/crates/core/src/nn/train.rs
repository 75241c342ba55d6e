use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{build_model, predict_patch, CnnModel};
use super::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::sampling::{DatasetSplit, Patch};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub dropout: bool,
    pub kernel_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            dropout: true,
            kernel_size: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there is no validation set.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_accuracy` rows, epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_accuracy\n");
        for r in &self.records {
            let val = r.val_accuracy.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{:.8},{}\n", r.epoch, r.train_loss, val));
        }
        out
    }
}

/// Fraction of `patches` whose predicted class equals their label.
pub fn accuracy(model: &CnnModel<f32>, patches: &[Patch]) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits: Vec<bool> = patches
        .par_iter()
        .map(|p| predict_patch(model, p).map(|(c, _)| c == p.label))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / patches.len() as f64)
}

/// Trains a freshly initialized network on `split.train` for exactly
/// `config.epochs` epochs, reporting validation accuracy on `split.val`
/// after each one. The test set is not touched.
pub fn train_cnn(split: &DatasetSplit<Patch>, config: &TrainConfig) -> Result<(CnnModel<f32>, TrainHistory)> {
    train_cnn_with(split, config, |_| {})
}

/// [`train_cnn`] with a callback after every epoch.
pub fn train_cnn_with(
    split: &DatasetSplit<Patch>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(CnnModel<f32>, TrainHistory)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut model = build_model(config.kernel_size, config.seed)?;
    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let mut opt = Optimizer::<f32>::new(config.optimizer, config.learning_rate, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00_0000);
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f32], u8)> = chunk
                .iter()
                .map(|&i| (split.train[i].values(), split.train[i].label))
                .collect();
            let dropout_seed = config.dropout.then(|| rng.random::<u64>());
            let (loss, grads) = model.loss_and_grads(&batch, dropout_seed)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            let g = grads.slices();
            opt.step(&mut model.params_mut(), &g);
        }
        let val_accuracy = if split.val.is_empty() {
            None
        } else {
            Some(accuracy(&model, &split.val)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / split.train.len() as f64,
            val_accuracy,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok((model, history))
}
