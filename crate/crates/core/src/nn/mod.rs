//! A small from-scratch network stack: valid cross-correlation, ReLU,
//! 3x3/stride-2 max pooling, dense layers, inverted dropout and softmax with
//! cross-entropy, plus reverse-mode gradients and first-order optimizers.
//!
//! Everything is generic over [`Real`] so the same code trains in `f32` and
//! is gradient-checked in `f64`.

mod layers;
mod model;
mod optim;
mod tensor;
mod train;

pub(crate) use layers::dropout_mask;
pub use layers::{
    conv_forward, dense_forward, dropout_forward, maxpool_forward, pool_dim, relu, softmax, softmax_cross_entropy,
    ConvLayer, DenseLayer, DropoutMode, POOL_STRIDE, POOL_WINDOW,
};
pub use model::{
    build_model, build_model_with, predict_patch, CnnGrads, CnnModel, ShapeChain, DENSE_UNITS, DROPOUT_AFTER_DENSE,
    DROPOUT_AFTER_POOL, FILTERS_1, FILTERS_2,
};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor3;
pub use train::{accuracy, train_cnn, train_cnn_with, EpochRecord, TrainConfig, TrainHistory};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the network can be instantiated with.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}
