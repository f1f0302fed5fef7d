//! Planner network: model, Lagrangian loss, and training.

pub mod adam;
pub mod loss;
pub mod mlp;
pub mod train;

pub use adam::Adam;
pub use loss::{lagrangian_loss, loss_gradient, LossData};
pub use mlp::{load_model, save_model, MlpGradient, MlpModel};
pub use train::{train, EpochLog, TrainConfig, TrainingLog};
