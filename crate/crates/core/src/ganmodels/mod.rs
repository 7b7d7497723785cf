//! Vanilla, conditional and Rumi generators: networks, losses, training,
//! sampling and model files.

mod arch;
mod losses;
mod store;
mod train;

use thiserror::Error;

use crate::tensor::TensorError;

pub use arch::{
    build_critic, build_generator, label_planes, CriticArch, CriticNet, GeneratorArch,
    GeneratorNet, LayerSpec, Mode, ParamSet, RunningStats, BN_EPS, BN_MOMENTUM, INIT_STD,
    LEAKY_SLOPE,
};
pub use losses::{
    generator_loss, loss_cgan, loss_rumi, loss_vanilla, ConditionedScores, LossHead, LossPair,
};
pub use store::{load_model, save_model, save_model_as, sidecar_path, ModelMeta, MODEL_FORMAT};
pub use train::{
    generator_logits, init_models, sample, sample_latents, train, TrainConfig, TrainHistory,
    TrainedModel,
};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("incompatible dimensions: {0}")]
    IncompatibleDims(String),
    #[error("conditional scores need a label per sample")]
    MissingLabel,
    #[error("conditional generator needs a label")]
    LabelRequired,
    #[error("label given to an unconditional network")]
    UnexpectedLabel,
    #[error("empty score batch")]
    EmptyBatch,
    #[error("alpha weights must satisfy alpha+ > 0 and alpha- >= 0, got {0}")]
    NegativeAlpha(f64),
    #[error("batch sizes differ: {0} vs {1}")]
    BatchMismatch(usize, usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("partition does not fit the model kind: {0}")]
    PartitionMismatch(String),
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        history: Box<TrainHistory>,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(TensorError),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<TensorError> for GanError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFiniteInput(_)
            | TensorError::NonFiniteOutput(_)
            | TensorError::LogOfNonPositive => GanError::NonFinite(e.to_string()),
            other => GanError::Tensor(other),
        }
    }
}

#[cfg(test)]
mod tests;
