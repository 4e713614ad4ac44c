//! Training: Charbonnier loss with a group-lasso term, Adam, a cosine
//! learning-rate schedule, staged condensation and checkpoints.

mod adam;
mod checkpoint;
mod schedule;
mod trainer;

pub use adam::{Adam, AdamState};
pub use checkpoint::{checkpoint_dtype, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use schedule::{cosine_lr, TrainSchedule};
pub use trainer::{charbonnier_loss, EpochStats, TrainConfig, Trainer};
