//! Minimal tensor engine and trainer for a two-stream 3D residual CNN.
//!
//! All arithmetic is `f64`. Layers expose explicit forward/backward pairs;
//! [`Network`] wires them into two independent hemisphere streams whose
//! FC1 activations are concatenated before the output head.

mod gradcheck;
mod layers;
mod loss;
mod network;
mod optim;
mod tensor;
mod train;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    dropout, dropout_backward, relu, relu_backward, BatchNorm3d, BnCache, Conv3d, ConvCache, Linear, MaxPool3d, Param,
    PoolCache, ResBlock, ResCache,
};
pub use loss::{sigmoid, sigmoid_ce_loss, softmax, softmax_ce_loss};
pub use network::{extract_features, Batch, Head, InputNorm, NetConfig, Network, Stream, Tape};
pub use optim::{lr_at, sgd_momentum_step, TrainConfig};
pub use tensor::Tensor;
pub use train::{head_loss, train, Augmentation, LossCurve};
