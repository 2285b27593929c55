//! A small CPU CNN stack: tensors, conv/pool/FC/residual layers, backprop,
//! SGD and Adam, and the trainable form of the shrinking engine.

mod check;
mod network;
mod params;
mod rcnn;
mod spec;
mod tensor;
mod train;

pub use check::{gradient_check, GradCheck};
pub use network::{argmax, softmax, BatchGrad, Loss, Network, Target, CHUNK};
pub use params::{load_params, params_from_bytes, params_to_bytes, save_params};
pub use rcnn::{
    train_rcnn_kernels, RcnnConfig, RcnnHistory, RcnnInit, RcnnTrainConfig, TrainableRcnn,
};
pub use spec::{Dims, LayerSpec, NetworkSpec};
pub use tensor::{Scalar, Tensor};
pub use train::{
    evaluate_samples, train, EpochStats, History, Optimizer, OptimizerConfig, SampleTarget,
    Samples, TrainConfig,
};
