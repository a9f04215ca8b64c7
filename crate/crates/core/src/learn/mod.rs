//! Trainable envelope-gain network with its own reverse-mode tape.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod tape;
pub mod train;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{mse_loss, ConvSpec, GainConfig, GainModel};
pub use tape::{Gradients, NodeId, Tape, Tensor};
pub use train::{
    fit, joint_finetune, joint_forward, joint_forward_with_gain, loss, loss_and_gradients, mean_loss, train,
    Example, JointOutput, Objective, TrainConfig, TrainReport,
};
