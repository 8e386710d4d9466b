//! Desk-scale segmentation learner: model, loss, optimizer, mean teacher and
//! the baseline target builders.

pub mod baselines;
pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod optim;

pub use baselines::{bootstrap_targets, pixelwise_correct, BaselineConfig};
pub use checkpoint::Checkpoint;
pub use loss::{loss_and_grad, LossParts, LossTerms, Sample};
pub use model::{foreground_prob, forward, Layout, ModelConfig, ParamVector, Tensor};
pub use optim::{adam_step, AdamConfig, AdamState, MeanTeacher};
