//! Spectral-only pixel classifiers: a small ANN, a random forest and a
//! one-vs-rest linear SVM.
//!
//! Each training patch is split into its 121 pixels, every pixel becoming an
//! independent 10-feature row that carries the patch label. The models never
//! see a pixel's neighbors.

mod ann;
mod forest;
mod svm;

pub use ann::{train_ann, train_ann_with, AnnConfig, AnnModel, ANN_HIDDEN};
pub use forest::{train_rf, DecisionTree, Forest, ForestConfig, TreeNode, FOREST_TREES, SPLIT_FEATURES};
pub use svm::{train_svm, LinearSvmOvr, SvmConfig};

use crate::error::{Error, Result};
use crate::sampling::Patch;
use crate::{NUM_BANDS, PATCH_SIZE};

/// One pixel: its band values and the label of the patch it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRow {
    pub features: [f32; NUM_BANDS],
    pub label: u8,
}

/// The 121 pixels of a patch in row-major order.
pub fn patch_to_rows(patch: &Patch) -> Vec<PixelRow> {
    let mut rows = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for i in 0..PATCH_SIZE {
        for j in 0..PATCH_SIZE {
            let mut features = [0.0; NUM_BANDS];
            features.copy_from_slice(patch.cell(i, j));
            rows.push(PixelRow {
                features,
                label: patch.label,
            });
        }
    }
    rows
}

pub fn rows_from_patches(patches: &[Patch]) -> Vec<PixelRow> {
    patches.iter().flat_map(patch_to_rows).collect()
}

pub(crate) fn check_rows(rows: &[PixelRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    if let Some(r) = rows.iter().find(|r| r.label as usize >= crate::NUM_CLASSES) {
        return Err(Error::InvalidLabel(r.label as u32));
    }
    if rows.iter().any(|r| r.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(())
}

/// A trained per-pixel classifier.
pub trait PixelClassifier: Sync {
    fn classify(&self, features: &[f32; NUM_BANDS]) -> u8;

    /// Class of a single 10-band pixel. Deterministic; dropout is never
    /// applied at inference.
    fn predict_pixel(&self, features: &[f32]) -> Result<u8> {
        let f: &[f32; NUM_BANDS] = features.try_into().map_err(|_| Error::LengthMismatch {
            expected: NUM_BANDS,
            actual: features.len(),
        })?;
        Ok(self.classify(f))
    }
}

/// Any of the three baselines.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum PixelModel {
    Ann(AnnModel),
    Forest(Forest),
    Svm(LinearSvmOvr),
}

impl PixelModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PixelModel::Ann(_) => "ann",
            PixelModel::Forest(_) => "rf",
            PixelModel::Svm(_) => "svm",
        }
    }
}

impl PixelClassifier for PixelModel {
    fn classify(&self, features: &[f32; NUM_BANDS]) -> u8 {
        match self {
            PixelModel::Ann(m) => m.classify(features),
            PixelModel::Forest(m) => m.classify(features),
            PixelModel::Svm(m) => m.classify(features),
        }
    }
}

/// Fraction of rows classified correctly.
pub fn row_accuracy(model: &impl PixelClassifier, rows: &[PixelRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits = rows.iter().filter(|r| model.classify(&r.features) == r.label).count();
    Ok(hits as f64 / rows.len() as f64)
}
