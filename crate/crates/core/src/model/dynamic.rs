use std::collections::BTreeMap;
use std::sync::Arc;

use super::{DynamicModelParams, GruVars, ModelDims, ModelError};
use crate::corpus::{ContextUtterance, Sample};
use crate::embeddings::{EmbeddingError, EmbeddingTable};
use crate::engine::{Tape, Tensor, Var};
use crate::evaluation::{Prediction, Predictor};
use crate::scalar::{sigmoid, Scalar};

/// Final state of each agent after the context, keyed by agent id.
pub type AgentStateTable<S> = BTreeMap<String, Vec<S>>;

/// Model parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    dims: ModelDims,
    utterance: GruVars,
    agent: GruVars,
    context: GruVars,
    w_a: Var,
    w_r: Var,
}

impl ModelVars {
    /// Registers `params` on `tape`; with `trainable` false they are constants.
    pub fn register<S: Scalar>(tape: &mut Tape<S>, params: &DynamicModelParams<S>, trainable: bool) -> Self {
        let all = tape.params(params.params(), trainable);
        Self::from_vars(params, &all)
    }

    /// Binds tape variables that were registered from `params.params()` in
    /// id order.
    pub fn from_vars<S: Scalar>(params: &DynamicModelParams<S>, all: &[Var]) -> Self {
        Self {
            dims: params.dims(),
            utterance: params.utterance.vars(all),
            agent: params.agent.vars(all),
            context: params.context.vars(all),
            w_a: all[params.w_a.0],
            w_r: all[params.w_r.0],
        }
    }
}

/// Concatenated responder and context states, tagged with a language.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePair<S> {
    pub h: Vec<S>,
    pub lang: String,
}

/// Tape handles produced by the forward pass over one sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleGraph {
    /// `1 × 2h` feature row `[a_res, h_c]`.
    pub features: Var,
    /// `1 × |A(C)|`, in the sample's agent order.
    pub addressee_logits: Var,
    /// `1 × |R|`
    pub response_logits: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleScores<S> {
    pub addressee_logits: Vec<S>,
    pub response_logits: Vec<S>,
    pub addressee_probs: Vec<S>,
    pub response_probs: Vec<S>,
}

fn check_table<S: Scalar>(dims: ModelDims, table: &EmbeddingTable<S>) -> Result<(), ModelError> {
    if table.dim() != dims.embed_dim {
        return Err(EmbeddingError::DimensionMismatch {
            expected: dims.embed_dim,
            found: table.dim(),
        }
        .into());
    }
    Ok(())
}

/// Final state of the utterance GRU run over `tokens` from a zero state.
pub fn encode_on_tape<S: Scalar, T: AsRef<str>>(
    tape: &mut Tape<S>,
    vars: &ModelVars,
    table: &EmbeddingTable<S>,
    tokens: &[T],
) -> Result<Var, ModelError> {
    let x = tape.constant(table.lookup(tokens)?);
    let projected = vars.utterance.project(tape, x)?;
    let mut h = tape.constant(Tensor::zeros(vec![1, vars.dims.state_dim]));
    for t in 0..tokens.len() {
        let step = vars.utterance.slice(tape, projected, t, 1)?;
        h = vars.utterance.step(tape, step, h)?;
    }
    Ok(h)
}

/// Runs the agent and context recurrences over `context`.
///
/// Returns the `m × h` agent-state matrix (rows follow `agents`) and the
/// `1 × h` context summary.
pub fn track_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ModelVars,
    table: &EmbeddingTable<S>,
    context: &[ContextUtterance],
    agents: &[&str],
) -> Result<(Var, Var), ModelError> {
    if context.is_empty() {
        return Err(ModelError::InvalidSample("empty context".into()));
    }
    let h = vars.dims.state_dim;
    let m = agents.len();
    let mut states = tape.constant(Tensor::zeros(vec![m, h]));
    let mut summary = tape.constant(Tensor::zeros(vec![1, h]));
    for utt in context {
        let speaker = agents
            .iter()
            .position(|a| *a == utt.speaker)
            .ok_or_else(|| ModelError::InvalidSample(format!("speaker `{}` has no state", utt.speaker)))?;
        let u = encode_on_tape(tape, vars, table, &utt.tokens)?;

        // Speaker row receives u, all other rows a zero input.
        let mut rows = Vec::with_capacity(3);
        if speaker > 0 {
            rows.push(tape.constant(Tensor::zeros(vec![speaker, h])));
        }
        rows.push(u);
        if speaker + 1 < m {
            rows.push(tape.constant(Tensor::zeros(vec![m - speaker - 1, h])));
        }
        let input = tape.concat(&rows, 0)?;
        let projected = vars.agent.project(tape, input)?;
        states = vars.agent.step(tape, projected, states)?;

        let projected = vars.context.project(tape, u)?;
        summary = vars.context.step(tape, projected, summary)?;
    }
    Ok((states, summary))
}

/// Full forward pass over one sample.
pub fn forward_sample<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &ModelVars,
    table: &EmbeddingTable<S>,
    sample: &Sample,
) -> Result<SampleGraph, ModelError> {
    sample.validate().map_err(ModelError::InvalidSample)?;
    let agents = sample.all_agents();
    let (states, summary) = track_on_tape(tape, vars, table, &sample.context, &agents)?;
    let row_of = |name: &str| agents.iter().position(|a| *a == name).expect("agent tracked");

    let responder = tape.slice_rows(states, row_of(&sample.responder), 1)?;
    let features = tape.concat(&[responder, summary], 1)?;

    let candidate_rows = sample
        .agents
        .iter()
        .map(|a| tape.slice_rows(states, row_of(a), 1))
        .collect::<Result<Vec<_>, _>>()?;
    let candidate_states = tape.concat(&candidate_rows, 0)?;
    let addressee_logits = bilinear(tape, features, vars.w_a, candidate_states)?;

    let encoded = sample
        .candidates
        .iter()
        .map(|c| encode_on_tape(tape, vars, table, c))
        .collect::<Result<Vec<_>, _>>()?;
    let responses = tape.concat(&encoded, 0)?;
    let response_logits = bilinear(tape, features, vars.w_r, responses)?;

    Ok(SampleGraph {
        features,
        addressee_logits,
        response_logits,
    })
}

/// `h W Xᵀ` for a `1 × 2h` row `h` and `k × h` rows `X`, giving `1 × k`.
fn bilinear<S: Scalar>(tape: &mut Tape<S>, h: Var, w: Var, x: Var) -> Result<Var, ModelError> {
    let hw = tape.matmul(h, w)?;
    let xt = tape.transpose(x)?;
    Ok(tape.matmul(hw, xt)?)
}

fn inference_tape<S: Scalar>(params: &DynamicModelParams<S>) -> (Tape<S>, ModelVars) {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, params, false);
    (tape, vars)
}

pub fn encode_utterance<S: Scalar, T: AsRef<str>>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    tokens: &[T],
) -> Result<Vec<S>, ModelError> {
    check_table(params.dims(), table)?;
    let (mut tape, vars) = inference_tape(params);
    let h = encode_on_tape(&mut tape, &vars, table, tokens)?;
    Ok(tape.value(h).data().to_vec())
}

/// Agent states after `context` for each of `agents`, plus `h_c`.
///
/// `agents` must contain every context speaker; agents that never speak are
/// still updated (with zero inputs) at every step.
pub fn track_agents<S: Scalar>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    context: &[ContextUtterance],
    agents: &[&str],
) -> Result<(AgentStateTable<S>, Vec<S>), ModelError> {
    check_table(params.dims(), table)?;
    let (mut tape, vars) = inference_tape(params);
    let (states, summary) = track_on_tape(&mut tape, &vars, table, context, agents)?;
    let table = agents
        .iter()
        .enumerate()
        .map(|(i, a)| (a.to_string(), tape.value(states).row_slice(i).to_vec()))
        .collect();
    Ok((table, tape.value(summary).data().to_vec()))
}

pub fn extract_features<S: Scalar>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    sample: &Sample,
) -> Result<FeaturePair<S>, ModelError> {
    check_table(params.dims(), table)?;
    let (mut tape, vars) = inference_tape(params);
    let graph = forward_sample(&mut tape, &vars, table, sample)?;
    Ok(FeaturePair {
        h: tape.value(graph.features).data().to_vec(),
        lang: sample.lang.clone(),
    })
}

fn bilinear_score<S: Scalar>(features: &FeaturePair<S>, w: &Tensor<S>, x: &[S]) -> Result<S, ModelError> {
    let (rows, cols) = (w.rows(), w.cols());
    if features.h.len() != rows || x.len() != cols {
        return Err(ModelError::Engine(crate::engine::EngineError::ShapeMismatch {
            op: "bilinear score",
            left: vec![features.h.len()],
            right: vec![x.len()],
        }));
    }
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::from_parts(vec![1, rows], features.h.clone()));
    let w = tape.constant(w.clone());
    let x = tape.constant(Tensor::from_parts(vec![1, cols], x.to_vec()));
    let logit = bilinear(&mut tape, h, w, x)?;
    Ok(sigmoid(tape.value(logit).item()))
}

/// `σ(hᵀ W_a a_i)`
pub fn score_addressee<S: Scalar>(
    params: &DynamicModelParams<S>,
    features: &FeaturePair<S>,
    agent_state: &[S],
) -> Result<S, ModelError> {
    bilinear_score(features, params.w_a(), agent_state)
}

/// `σ(hᵀ W_r r_j)`
pub fn score_response<S: Scalar>(
    params: &DynamicModelParams<S>,
    features: &FeaturePair<S>,
    response: &[S],
) -> Result<S, ModelError> {
    bilinear_score(features, params.w_r(), response)
}

pub fn sample_scores<S: Scalar>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    sample: &Sample,
) -> Result<SampleScores<S>, ModelError> {
    check_table(params.dims(), table)?;
    let (mut tape, vars) = inference_tape(params);
    let graph = forward_sample(&mut tape, &vars, table, sample)?;
    let addressee_logits = tape.value(graph.addressee_logits).data().to_vec();
    let response_logits = tape.value(graph.response_logits).data().to_vec();
    Ok(SampleScores {
        addressee_probs: addressee_logits.iter().map(|&x| sigmoid(x)).collect(),
        response_probs: response_logits.iter().map(|&x| sigmoid(x)).collect(),
        addressee_logits,
        response_logits,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Highest-scoring addressee and response. Agents are sorted, so addressee
/// ties resolve to the lexicographically smallest id.
pub fn predict<S: Scalar>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    sample: &Sample,
) -> Result<Prediction, ModelError> {
    if sample.agents.is_empty() {
        return Err(ModelError::NoAgents);
    }
    let scores = sample_scores(params, table, sample)?;
    Ok(Prediction {
        addressee: sample.agents[argmax(&scores.addressee_logits)].clone(),
        response_index: argmax(&scores.response_logits),
    })
}

/// Parameters paired with the embedding table they currently read.
#[derive(Debug, Clone)]
pub struct DynamicModel<S> {
    params: DynamicModelParams<S>,
    table: Arc<EmbeddingTable<S>>,
}

impl<S: Scalar> DynamicModel<S> {
    pub fn new(params: DynamicModelParams<S>, table: Arc<EmbeddingTable<S>>) -> Result<Self, ModelError> {
        check_table(params.dims(), &table)?;
        Ok(Self { params, table })
    }

    pub fn params(&self) -> &DynamicModelParams<S> {
        &self.params
    }

    pub fn table(&self) -> &Arc<EmbeddingTable<S>> {
        &self.table
    }

    pub fn into_params(self) -> DynamicModelParams<S> {
        self.params
    }

    /// Swaps in another language's table, returning the previous one.
    /// No other parameter is touched.
    pub fn replace_table(&mut self, table: Arc<EmbeddingTable<S>>) -> Result<Arc<EmbeddingTable<S>>, ModelError> {
        check_table(self.params.dims(), &table)?;
        Ok(std::mem::replace(&mut self.table, table))
    }

    pub fn predict(&self, sample: &Sample) -> Result<Prediction, ModelError> {
        predict(&self.params, &self.table, sample)
    }
}

impl<S: Scalar> Predictor for DynamicModel<S> {
    fn predict(&self, sample: &Sample) -> Result<Prediction, Box<dyn std::error::Error + Send + Sync>> {
        Ok(DynamicModel::predict(self, sample)?)
    }
}
