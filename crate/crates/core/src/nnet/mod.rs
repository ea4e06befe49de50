//! Toy decoder-style transformer regressor with hand-written reverse-mode
//! gradients.

mod checkpoint;
mod config;
mod loss;
mod model;
mod ops;
mod optim;
mod rope;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use config::{NetConfig, SizeClass, PATCH_LEN};
pub use loss::{
    composite_loss, logit_laplace_grad, logit_laplace_loss, squeeze_window, CompositeLoss, Recon,
    LL_EPSILON,
};
pub use model::{FeatureObjective, ForwardOutput, LossBreakdown, ParamSpec, TinyPpgNet};
pub use optim::{AdamConfig, OptimizerState, Schedule};
pub use rope::{rotary_decode, rotary_encode};
pub use train::{train, EpochSummary, StepLog, TrainConfig, TrainLog};
