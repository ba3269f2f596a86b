//! Multilingual addressee and response selection.
//!
//! A dynamic speaker-state model reads a multi-party conversation context
//! and scores who the responder is talking to and which candidate utterance
//! is the true response. The crate covers corpus construction, frozen
//! multilingual embeddings, a small reverse-mode autodiff engine, the model,
//! five training methods (target-only, source-only with embedding
//! replacement, fine-tuning, joint multilingual and Wasserstein-adversarial),
//! reference baselines and evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix it to `f64`, which training and checkpoints use by default.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod engine;
pub mod evaluation;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod training;

pub use scalar::Scalar;

pub type Tensor = engine::Tensor<f64>;
pub type Tape = engine::Tape<f64>;
pub type ParamSet = engine::ParamSet<f64>;
pub type EmbeddingTable = embeddings::EmbeddingTable<f64>;
pub type DynamicModelParams = model::DynamicModelParams<f64>;
pub type DynamicModel = model::DynamicModel<f64>;
pub type Checkpoint = model::Checkpoint<f64>;
pub type LanguageData = training::LanguageData<f64>;
pub type Critic = training::Critic<f64>;
