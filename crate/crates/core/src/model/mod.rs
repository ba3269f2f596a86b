//! The dynamic speaker-state model and its addressee/response scorers.
//!
//! Every agent of a conversation carries a GRU state. At each context step
//! the speaker's state is updated with the encoding of the utterance and
//! every other agent's state is updated with a zero input. The responder's
//! state `a_res` and a context summary `h_c` form the feature vector
//! `h = [a_res, h_c]`, which is scored bilinearly against agent states
//! (`σ(hᵀ W_a a_i)`) and encoded candidate responses (`σ(hᵀ W_r r_j)`).

mod checkpoint;
mod dynamic;
mod gru;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dynamic::{
    encode_utterance, extract_features, forward_sample, predict, sample_scores, score_addressee,
    score_response, track_agents, AgentStateTable, DynamicModel, FeaturePair, ModelVars, SampleGraph,
    SampleScores,
};
pub use gru::{GateInputs, GruIds, GruVars};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::EmbeddingError;
use crate::engine::{EngineError, ParamId, ParamSet, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const DEFAULT_STATE_DIM: usize = 256;

/// Half-width of the uniform initialisation range.
pub const INIT_BOUND: f64 = 0.08;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("sample has no addressee candidates")]
    NoAgents,
    #[error("incompatible parameters: {0}")]
    Incompatible(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub state_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embed_dim: crate::embeddings::DEFAULT_EMBED_DIM,
            state_dim: DEFAULT_STATE_DIM,
        }
    }
}

impl ModelDims {
    pub fn feature_dim(&self) -> usize {
        2 * self.state_dim
    }
}

/// All trainable parameters `θ = θ_E ∪ {W_a, W_r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicModelParams<S> {
    dims: ModelDims,
    params: ParamSet<S>,
    pub(crate) utterance: GruIds,
    pub(crate) agent: GruIds,
    pub(crate) context: GruIds,
    pub(crate) w_a: ParamId,
    pub(crate) w_r: ParamId,
}

impl<S: Scalar> DynamicModelParams<S> {
    /// Fresh parameters, uniform in `[-INIT_BOUND, INIT_BOUND]`.
    pub fn init(dims: ModelDims, rng: &mut Rng) -> Self {
        let (d, h) = (dims.embed_dim, dims.state_dim);
        let mut params = ParamSet::new();
        let mut build = || -> Result<_, EngineError> {
            let utterance = GruIds::register(&mut params, "utterance_gru", d, h, INIT_BOUND, rng)?;
            let agent = GruIds::register(&mut params, "agent_gru", h, h, INIT_BOUND, rng)?;
            let context = GruIds::register(&mut params, "context_gru", h, h, INIT_BOUND, rng)?;
            let w_a = params.insert("w_a", Tensor::uniform(vec![2 * h, h], INIT_BOUND, rng))?;
            let w_r = params.insert("w_r", Tensor::uniform(vec![2 * h, h], INIT_BOUND, rng))?;
            Ok((utterance, agent, context, w_a, w_r))
        };
        let (utterance, agent, context, w_a, w_r) = build().expect("fresh parameter names are unique");
        Self {
            dims,
            params,
            utterance,
            agent,
            context,
            w_a,
            w_r,
        }
    }

    /// Reassembles model parameters from a named set, checking every shape.
    pub fn from_param_set(params: ParamSet<S>) -> Result<Self, ModelError> {
        let (utterance, d, h) = GruIds::locate(&params, "utterance_gru").map_err(ModelError::Incompatible)?;
        let (agent, ai, ah) = GruIds::locate(&params, "agent_gru").map_err(ModelError::Incompatible)?;
        let (context, ci, ch) = GruIds::locate(&params, "context_gru").map_err(ModelError::Incompatible)?;
        if (ai, ah, ci, ch) != (h, h, h, h) {
            return Err(ModelError::Incompatible("recurrent state sizes disagree".into()));
        }
        let scorer = |name: &str| -> Result<ParamId, ModelError> {
            let id = params
                .id(name)
                .ok_or_else(|| ModelError::Incompatible(format!("missing parameter `{name}`")))?;
            if params.get(id).shape() != [2 * h, h] {
                return Err(ModelError::Incompatible(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    params.get(id).shape(),
                    [2 * h, h]
                )));
            }
            Ok(id)
        };
        let w_a = scorer("w_a")?;
        let w_r = scorer("w_r")?;
        if params.len() != 29 {
            return Err(ModelError::Incompatible(format!(
                "expected 29 parameter tensors, found {}",
                params.len()
            )));
        }
        Ok(Self {
            dims: ModelDims {
                embed_dim: d,
                state_dim: h,
            },
            params,
            utterance,
            agent,
            context,
            w_a,
            w_r,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    pub fn w_a(&self) -> &Tensor<S> {
        self.params.get(self.w_a)
    }

    pub fn w_r(&self) -> &Tensor<S> {
        self.params.get(self.w_r)
    }

    pub fn cast<T: Scalar>(&self) -> DynamicModelParams<T> {
        let mut params = ParamSet::new();
        for (_, name, t) in self.params.iter() {
            params.insert(name, t.cast()).expect("names already unique");
        }
        DynamicModelParams {
            dims: self.dims,
            params,
            utterance: self.utterance,
            agent: self.agent,
            context: self.context,
            w_a: self.w_a,
            w_r: self.w_r,
        }
    }
}
