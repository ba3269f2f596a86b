use crate::corpus::Sample;
use crate::embeddings::EmbeddingTable;
use crate::engine::{Tape, Var};
use crate::model::{forward_sample, DynamicModelParams, ModelError, ModelVars, SampleGraph};
use crate::scalar::Scalar;

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before the
/// logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Binary cross-entropy of one sample: the true addressee and response are
/// positives, every other agent and candidate a negative.
pub fn sample_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    graph: &SampleGraph,
    sample: &Sample,
) -> Result<Var, ModelError> {
    let truth_agent = sample
        .truth_addressee_index()
        .ok_or_else(|| ModelError::InvalidSample("truth addressee not among agents".into()))?;
    let adr_targets: Vec<S> = (0..sample.agents.len())
        .map(|i| if i == truth_agent { S::one() } else { S::zero() })
        .collect();
    let res_targets: Vec<S> = (0..sample.candidates.len())
        .map(|j| if j == sample.truth_index { S::one() } else { S::zero() })
        .collect();
    let (lo, hi) = (S::of(PROB_FLOOR), S::of(1.0 - PROB_FLOOR));
    let mut term = |logits: Var, targets: &[S]| -> Result<Var, ModelError> {
        let p = tape.sigmoid(logits);
        let p = tape.clamp(p, lo, hi);
        let l = tape.bce(p, targets)?;
        Ok(tape.sum(l))
    };
    let a = term(graph.addressee_logits, &adr_targets)?;
    let r = term(graph.response_logits, &res_targets)?;
    Ok(tape.add(a, r)?)
}

/// Mean per-sample cross-entropy of `batch` at fixed parameters.
pub fn ce_loss<S: Scalar>(
    params: &DynamicModelParams<S>,
    table: &EmbeddingTable<S>,
    batch: &[Sample],
) -> Result<S, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::InvalidSample("empty batch".into()));
    }
    let mut total = S::zero();
    for s in batch {
        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, params, false);
        let graph = forward_sample(&mut tape, &vars, table, s)?;
        let loss = sample_loss_on_tape(&mut tape, &graph, s)?;
        total += tape.value(loss).item();
    }
    Ok(total / S::of(batch.len() as f64))
}

/// `Σ_k ce_loss(batch_k)` with each batch read through its own table.
pub fn joint_loss<S: Scalar>(
    params: &DynamicModelParams<S>,
    batches: &[(&EmbeddingTable<S>, &[Sample])],
) -> Result<S, ModelError> {
    let mut total = S::zero();
    for (table, batch) in batches {
        total += ce_loss(params, table, batch)?;
    }
    Ok(total)
}
