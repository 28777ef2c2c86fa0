//! Joint training of the label denoiser and the neural classifier.

mod config;
mod losses;
mod predict;
mod train;

pub use config::{effective_weights, LossWeights, Mode, TrainConfig};
pub use losses::{
    ensemble_update, loss_classifier, loss_denoiser, loss_selftrain, total_loss, weighted_total,
    EnsembleState,
};
pub use predict::{combine, evaluate, predict, Metrics, Origin, Prediction, RuleCountBucket};
pub use train::{
    train, train_log_tsv, train_with_init, training_partition, EpochLog, SeedPlan, TrainedModel,
    TrainingData,
};
