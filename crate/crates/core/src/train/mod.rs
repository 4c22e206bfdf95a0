//! Task losses, loss weighting and the training loop.

mod gradcheck;
mod losses;
mod split;
mod trainer;
mod weights;

pub use gradcheck::{gradient_check, relative_error, sample_parameters, GradCheckEntry, GRAD_FLOOR};
pub use losses::{det_loss, det_targets, seg_loss, soiling_loss, DetLoss, DetTargets, SoilLoss};
pub use split::{split_dataset, Splits};
pub use trainer::{
    log_csv, sample_losses, train, train_on, write_log, EpochLog, LossSummary, TrainConfig,
    TrainOutcome, Trainer, LOG_HEADER,
};
pub use weights::{
    gradnorm_update, total_loss, total_loss_var, GradNormConfig, PerTask, TaskWeights, TrainMode,
};
