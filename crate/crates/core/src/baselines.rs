//! Reference systems without learned parameters.
//!
//! The TF-IDF ranker picks the candidate whose TF-IDF vector is closest in
//! cosine to the bag of words of the whole context. It has no notion of
//! addressees, so it answers the most recent context speaker other than the
//! responder; that rule is a heuristic of this crate.

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::corpus::Sample;
use crate::evaluation::{PredictError, Prediction, Predictor};
use crate::rng::Rng;

/// Uniform addressee and, independently, uniform response.
pub fn chance_select(sample: &Sample, rng: &mut Rng) -> Prediction {
    let addressee = sample
        .agents
        .choose(rng)
        .cloned()
        .unwrap_or_else(|| sample.truth_addressee.clone());
    Prediction {
        addressee,
        response_index: rng.random_range(0..sample.candidates.len()),
    }
}

/// Most recent context speaker who is not the responder.
pub fn recent_other_speaker(sample: &Sample) -> String {
    sample
        .context
        .iter()
        .rev()
        .map(|u| &u.speaker)
        .find(|s| **s != sample.responder && sample.agents.contains(s))
        .or_else(|| sample.agents.first())
        .cloned()
        .unwrap_or_default()
}

pub type SparseVector = BTreeMap<String, f64>;

/// Document frequencies over a fixed document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfIndex {
    df: HashMap<String, usize>,
    documents: usize,
}

impl TfidfIndex {
    /// Each token list is one document. Tokens are lowercased.
    pub fn from_documents<'a, I, D>(docs: I) -> Self
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut documents = 0;
        for doc in docs {
            documents += 1;
            let mut seen: Vec<String> = doc.into_iter().map(|t| t.to_lowercase()).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        Self { df, documents }
    }

    /// Index over every candidate response of the given (training) samples.
    pub fn from_samples(samples: &[Sample]) -> Self {
        Self::from_documents(samples.iter().flat_map(|s| s.candidates.iter()))
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn df(&self, token: &str) -> usize {
        self.df.get(&token.to_lowercase()).copied().unwrap_or(0)
    }

    /// `ln(N / max(df, 1))`
    pub fn idf(&self, token: &str) -> f64 {
        (self.documents.max(1) as f64 / self.df(token).max(1) as f64).ln()
    }

    /// Raw term counts weighted by IDF.
    pub fn vector<'a, I: IntoIterator<Item = &'a String>>(&self, tokens: I) -> SparseVector {
        let mut tf: SparseVector = BTreeMap::new();
        for t in tokens {
            *tf.entry(t.to_lowercase()).or_default() += 1.0;
        }
        for (t, w) in tf.iter_mut() {
            *w *= self.idf(t);
        }
        tf
    }

    /// Cosine of each candidate to the bag of words of the whole context.
    pub fn scores(&self, sample: &Sample) -> Vec<f64> {
        let ctx = self.vector(sample.context.iter().flat_map(|u| u.tokens.iter()));
        sample.candidates.iter().map(|c| cosine(&ctx, &self.vector(c))).collect()
    }

    /// Candidate indices from most to least similar; ties keep index order.
    pub fn ranking(&self, sample: &Sample) -> Vec<usize> {
        let scores = self.scores(sample);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        order
    }

    /// Candidate index with the highest cosine to the context; ties go to
    /// the lowest index.
    pub fn rank(&self, sample: &Sample) -> usize {
        self.ranking(sample)[0]
    }

    pub fn select(&self, sample: &Sample) -> Prediction {
        Prediction {
            addressee: recent_other_speaker(sample),
            response_index: self.rank(sample),
        }
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl Predictor for TfidfIndex {
    fn predict(&self, sample: &Sample) -> Result<Prediction, PredictError> {
        Ok(self.select(sample))
    }
}
