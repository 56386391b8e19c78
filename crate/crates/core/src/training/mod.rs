//! Losses, schedules, batch sampling, the optimizer and the training loop.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod sampler;
mod schedule;
mod trainer;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use loss::{
    breakdown, fk_on_tape, loss_fk, loss_on_tape, loss_quat, loss_root, total_on_tape, LossBreakdown,
    LossVars, TrainingTargets,
};
pub use sampler::{sample_batch, window_bracket, Dataset, Sample, SampleInfo};
pub use schedule::{alpha_g, lr_schedule, ALPHA_L};
pub use trainer::{
    batch_loss, calibrate_pos_scale, checkpoint_name, read_loss_log, sample_loss, sample_loss_on_tape, train_into_dir, Gradients,
    StepRecord, Trainer, LAST_CHECKPOINT, LOSS_LOG,
};
