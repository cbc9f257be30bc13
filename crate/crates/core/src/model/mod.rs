//! Fused mortality classifier, training and attribution.

pub mod ig;
pub mod net;
pub mod train;

pub use ig::{integrated_gradients, Differentiable, Linear, DEFAULT_IG_STEPS};
pub use net::{
    class_weights, loss_and_grad, sigmoid, xavier_init, xavier_uniform, Activation, EncoderSpec, LossOutput, Mode,
    ModelGrads, ModelParams, ModelSpec, Pooling, STATIC_BLOCK,
};
pub use train::{make_sampler, train, train_staged, Dataset, EpochLog, Monitor, TrainConfig, TrainOutcome};

#[cfg(test)]
mod gradcheck;
