//! Spatial-spectral land-cover classification.
//!
//! The crate covers the full chain from a 10-band raster to an evaluated
//! class map:
//!
//! * [`raster`]: band-sequential rasters, normalization, pansharpening,
//!   synthetic scenes and PNG rendering;
//! * [`sampling`]: point samples, 11x11x10 patches, the stratified 5:2:3
//!   split and rotation augmentation;
//! * [`nn`]: the patch CNN, written from scratch with its gradients;
//! * [`baselines`]: pixel-wise ANN, random forest and linear SVM;
//! * [`spatial`]: sliding majority vote and block aggregation;
//! * [`metrics`]: confusion matrix, overall accuracy, kappa and F1;
//! * [`pipeline`]: full-map inference and the evaluation protocol.
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled and run as doc-tests of this crate.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod sampling;
pub mod spatial;

pub use error::{Error, Result};

/// Classes 0..14 in table order.
pub const NUM_CLASSES: usize = 14;
/// Spectral bands per pixel after pansharpening.
pub const NUM_BANDS: usize = 10;
/// Edge length of a patch.
pub const PATCH_SIZE: usize = 11;
/// Pixels between a patch's center and its edge.
pub const PATCH_RADIUS: usize = PATCH_SIZE / 2;

/// Display names of class ids 0..14.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "LCZ 2", "LCZ 3", "LCZ 4", "LCZ 5", "LCZ 8", "LCZ 9", "LCZ 10", "LCZ A", "LCZ B", "LCZ C", "LCZ D", "LCZ E",
    "LCZ F", "LCZ G",
];

/// Index of the largest element; the first one wins ties.
pub(crate) fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/rasters.md")]
    pub struct Rasters;
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub struct Sampling;
    #[doc = include_str!("../../../book/src/cnn.md")]
    pub struct Cnn;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/majority-vote.md")]
    pub struct MajorityVote;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub struct Pipeline;
}
