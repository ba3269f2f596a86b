//! Supervised, fine-tuned, joint and adversarial training.
//!
//! Every method shares one loop: per step it draws one mini-batch per
//! training language, sums the per-language mean cross-entropies and takes an
//! Adam step. The adversarial method additionally trains one clipped critic
//! per (source, target) pair before each step and adds `λ` times the critic
//! objectives to the loss. Each point of the learning-rate × weight-decay
//! grid is trained from the same initial parameters; the parameters with the
//! best macro dev ADR-RES over all grid points and trained epochs are
//! returned. The untrained initialisation is only returned when no epoch is
//! run at all.

mod batches;
mod config;
mod critic;
mod loss;
mod run;
#[cfg(test)]
mod tests;

use std::sync::Arc;

use thiserror::Error;

pub use batches::BatchCycler;
pub use config::{LanguagePaths, Method, TrainConfig};
pub use critic::{critic_objective, critic_probe, objective_on_tape, Critic, CriticTrainer, CriticVars, ProbeConfig};
pub use loss::{ce_loss, joint_loss, sample_loss_on_tape, PROB_FLOOR};
pub use run::{
    fine_tune, fresh_params, joint_objective, joint_train, run_method, train, wgan_train, EpochRecord, TrainOutcome,
};

use crate::corpus::Sample;
use crate::embeddings::EmbeddingTable;
use crate::engine::EngineError;
use crate::evaluation::EvalError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error(
        "method {method} starts from a {prerequisite} checkpoint; train {prerequisite} first and pass its checkpoint as the initialisation"
    )]
    MissingInit { method: Method, prerequisite: Method },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("numeric failure at epoch {epoch}, step {step}: {message}")]
    Numeric { epoch: usize, step: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Training and development samples of one language with its embeddings.
#[derive(Debug, Clone)]
pub struct LanguageData<S> {
    pub lang: String,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub table: Arc<EmbeddingTable<S>>,
}
