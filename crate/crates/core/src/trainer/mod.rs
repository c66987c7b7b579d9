//! Bi-encoder scoring, likelihood losses, REPLUG-KL distillation and the
//! training loops.

mod checkpoint;
mod encoder;
mod losses;
mod optim;
mod train;
mod utility;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_meta, save_checkpoint, sidecar_path, CheckpointError, CheckpointMeta,
    CHECKPOINT_VERSION,
};
pub use encoder::{dot, Encoder, EncoderConfig, LinearEncoder, SparseFeatures, TrainableEncoder};
pub use losses::{
    candidate_distribution, joint_grad, log_softmax, log_sum_exp, loss_joint, loss_replug, loss_single,
    loss_summarg, replug_grad, single_grad, summarg_grad, LossError,
};
pub use optim::{AdamW, AdamWConfig, LrSchedule};
pub use train::{
    batch_loss_grad, curriculum_train, evaluate_loss, stage2_subset, train, CurriculumSchedule, FeatureStore,
    InstanceSource, LogRecord, LossConfig, LossKind, TrainError, TrainHyper, TrainingLog, UtilityTable,
};
pub use utility::{build_utility_table, utility_targets, UtilityDistribution, UtilityError};
