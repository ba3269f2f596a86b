//! Multi-party conversation corpora and addressee/response selection samples.
//!
//! Conversations arrive as JSONL (one document per line) with whitespace
//! tokens already produced upstream. Parsing detects the addressee of each
//! utterance from the leading `name:` mention and removes every agent-name
//! token, so models never see who was addressed.

mod io;
mod samples;
mod split;
mod stats;

pub use io::{
    parse_corpus, parse_corpus_str, read_samples, read_samples_str, write_corpus, write_samples,
};
pub use samples::{extract_samples, ResponsePool, SampleConfig};
pub use split::{split_dataset, SplitSpec};
pub use stats::{corpus_stats, CorpusStats};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of preceding utterances given as context.
pub const DEFAULT_CONTEXT_LEN: usize = 15;

/// Candidate-set sizes supported by the task.
pub const SUPPORTED_R_SIZES: [usize; 2] = [2, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub time_index: u64,
    pub speaker: String,
    pub addressee: Option<String>,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub doc_id: String,
    pub lang: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    /// Distinct speakers, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.utterances.iter().map(|u| u.speaker.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// One context utterance as seen by a model: who spoke and what was said.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextUtterance {
    pub speaker: String,
    pub tokens: Vec<String>,
}

/// One conversational situation `(responder, context, candidates)` with its
/// ground truth `(addressee, response)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub lang: String,
    pub responder: String,
    /// Addressee candidates: agents appearing in the context, minus the
    /// responder, sorted.
    pub agents: Vec<String>,
    pub context: Vec<ContextUtterance>,
    pub candidates: Vec<Vec<String>>,
    pub truth_addressee: String,
    pub truth_index: usize,
}

impl Sample {
    /// Every agent that needs a state: context speakers, addressee
    /// candidates, and the responder. Sorted and unique.
    pub fn all_agents(&self) -> Vec<&str> {
        let mut all: Vec<&str> = self
            .context
            .iter()
            .map(|u| u.speaker.as_str())
            .chain(self.agents.iter().map(String::as_str))
            .chain(std::iter::once(self.responder.as_str()))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn truth_addressee_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| *a == self.truth_addressee)
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self) -> Result<(), String> {
        if self.context.is_empty() {
            return Err("empty context".into());
        }
        if self.agents.is_empty() {
            return Err("no addressee candidates".into());
        }
        if !self.agents.contains(&self.truth_addressee) {
            return Err(format!("truth addressee `{}` not among agents", self.truth_addressee));
        }
        if self.truth_addressee == self.responder {
            return Err("truth addressee equals responder".into());
        }
        if self.agents.contains(&self.responder) {
            return Err("responder listed as addressee candidate".into());
        }
        if self.truth_index >= self.candidates.len() {
            return Err(format!(
                "truth index {} out of range for {} candidates",
                self.truth_index,
                self.candidates.len()
            ));
        }
        if self.candidates.iter().any(Vec::is_empty) || self.context.iter().any(|u| u.tokens.is_empty()) {
            return Err("empty token list".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus is empty")]
    Empty,
    #[error("language `{lang}`: need {needed} distractors but only {available} eligible responses")]
    TooSmall {
        lang: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid sample configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}
