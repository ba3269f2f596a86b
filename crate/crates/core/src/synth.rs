//! Synthetic multi-party conversations with a known generative structure.
//!
//! Every language shares the same concepts, topics and turn-taking process
//! and differs only in surface word forms (`{lang}{concept}`) and, optionally,
//! in a per-language rotation of the concept vectors in embedding space.
//! A conversation sticks to one topic, so the true response shares the
//! context's topic words while distractors from other conversations mostly
//! do not. Addressees are usually the previous speaker.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_samples, Conversation, CorpusError, ResponsePool, Sample, SampleConfig, Utterance};
use crate::embeddings::EmbeddingTable;
use crate::engine::Tensor;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// All languages map a concept to the same vector.
    Aligned,
    /// Languages after the first see the concept space through their own
    /// random orthogonal rotation.
    Rotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub langs: Vec<String>,
    pub concepts: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub agents_per_doc: usize,
    pub utterances_per_doc: usize,
    pub words_per_utterance: usize,
    /// Share of utterance words drawn from the whole vocabulary instead of
    /// the conversation's topic.
    pub filler_rate: f64,
    /// Probability that an utterance addresses the previous speaker.
    pub reply_to_previous: f64,
    pub embed_dim: usize,
    pub alignment: Alignment,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            langs: vec!["en".into(), "de".into()],
            concepts: 100,
            topics: 20,
            words_per_topic: 6,
            agents_per_doc: 3,
            utterances_per_doc: 10,
            words_per_utterance: 3,
            filler_rate: 0.25,
            reply_to_previous: 0.85,
            embed_dim: 8,
            alignment: Alignment::Aligned,
            seed: 0,
        }
    }
}

pub fn word(lang: &str, concept: usize) -> String {
    format!("{lang}{concept}")
}

fn agent_name(k: usize) -> String {
    format!("user{k}")
}

impl SynthSpec {
    fn topics(&self) -> Vec<Vec<usize>> {
        let mut r = rng::stream(self.seed, "synth/topics");
        let all: Vec<usize> = (0..self.concepts).collect();
        (0..self.topics)
            .map(|_| all.choose_multiple(&mut r, self.words_per_topic).copied().collect())
            .collect()
    }

    /// `docs` conversations in `lang`, with addressees set and tokens clean.
    pub fn conversations(&self, lang: &str, docs: usize) -> Vec<Conversation> {
        let topics = self.topics();
        let mut r = rng::stream(self.seed, &format!("synth/conversations/{lang}"));
        (0..docs).map(|d| self.conversation(lang, d, &topics, &mut r)).collect()
    }

    fn conversation(&self, lang: &str, doc: usize, topics: &[Vec<usize>], r: &mut Rng) -> Conversation {
        let topic = &topics[r.random_range(0..topics.len())];
        let mut utterances: Vec<Utterance> = Vec::with_capacity(self.utterances_per_doc);
        let n_agents = self.agents_per_doc.max(2);
        for t in 0..self.utterances_per_doc {
            let prev = utterances.last().map(|u| u.speaker.clone());
            let speaker = loop {
                let s = agent_name(r.random_range(0..n_agents));
                if Some(&s) != prev.as_ref() {
                    break s;
                }
            };
            let addressee = prev.as_ref().map(|p| {
                if r.random_bool(self.reply_to_previous) {
                    return p.clone();
                }
                let mut others: Vec<&String> = utterances
                    .iter()
                    .map(|u| &u.speaker)
                    .filter(|s| **s != speaker)
                    .collect();
                others.sort();
                others.dedup();
                others.choose(r).map_or_else(|| p.clone(), |s| (*s).clone())
            });
            let tokens = (0..self.words_per_utterance)
                .map(|_| {
                    let concept = if r.random_bool(self.filler_rate) {
                        r.random_range(0..self.concepts)
                    } else {
                        topic[r.random_range(0..topic.len())]
                    };
                    word(lang, concept)
                })
                .collect();
            utterances.push(Utterance {
                time_index: t as u64,
                speaker,
                addressee,
                tokens,
            });
        }
        Conversation {
            doc_id: format!("{lang}-{doc:05}"),
            lang: lang.to_string(),
            utterances,
        }
    }

    /// At least `count` samples built from fresh conversations, truncated to
    /// exactly `count`.
    pub fn samples(&self, lang: &str, count: usize, cfg: SampleConfig) -> Result<Vec<Sample>, CorpusError> {
        let per_doc = self.utterances_per_doc.saturating_sub(1).max(1);
        let mut docs = count.div_ceil(per_doc) + 2;
        loop {
            let convs = self.conversations(lang, docs);
            let pool = ResponsePool::new(lang, &convs);
            let mut r = rng::stream(self.seed, &format!("synth/samples/{lang}"));
            let mut out = Vec::new();
            for c in &convs {
                out.extend(extract_samples(c, &pool, cfg, &mut r)?);
                if out.len() >= count {
                    out.truncate(count);
                    return Ok(out);
                }
            }
            docs *= 2;
        }
    }

    fn concept_vectors(&self) -> Vec<Vec<f64>> {
        let mut r = rng::stream(self.seed, "synth/concepts");
        let scale = 1.0 / (self.embed_dim as f64).sqrt();
        (0..self.concepts)
            .map(|_| (0..self.embed_dim).map(|_| gaussian(&mut r) * scale * 2.0).collect())
            .collect()
    }

    /// Embedding table for `lang` over its `concepts` word forms.
    pub fn table<S: Scalar>(&self, lang: &str) -> EmbeddingTable<S> {
        let rotation = match self.alignment {
            Alignment::Rotated if self.langs.first().map(String::as_str) != Some(lang) => {
                Some(random_rotation(self.embed_dim, &mut rng::stream(self.seed, &format!("synth/rotation/{lang}"))))
            }
            _ => None,
        };
        let words: Vec<String> = (0..self.concepts).map(|c| word(lang, c)).collect();
        let mut data = Vec::with_capacity(self.concepts * self.embed_dim);
        for v in self.concept_vectors() {
            let v = match &rotation {
                Some(q) => (0..self.embed_dim)
                    .map(|i| (0..self.embed_dim).map(|j| q[i][j] * v[j]).sum())
                    .collect(),
                None => v,
            };
            data.extend(v.into_iter().map(S::of));
        }
        let matrix = Tensor::new(vec![self.concepts, self.embed_dim], data).expect("finite synthetic vectors");
        EmbeddingTable::from_rows(lang, &words, matrix).expect("non-empty vocabulary")
    }

    /// Writes `{lang}.corpus.jsonl` (addressees as leading mentions, no
    /// explicit addressee field) and `{lang}.vec` for every language.
    pub fn write_files(&self, dir: impl AsRef<Path>, docs: usize) -> io::Result<BTreeMap<String, (PathBuf, PathBuf)>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut out = BTreeMap::new();
        for lang in &self.langs {
            let corpus = dir.join(format!("{lang}.corpus.jsonl"));
            fs::write(&corpus, raw_corpus_jsonl(&self.conversations(lang, docs)))?;
            let vectors = dir.join(format!("{lang}.vec"));
            let mut f = io::BufWriter::new(fs::File::create(&vectors)?);
            self.table::<f64>(lang).write(&mut f)?;
            io::Write::flush(&mut f)?;
            out.insert(lang.clone(), (corpus, vectors));
        }
        Ok(out)
    }
}

/// Corpus JSONL in which each addressed utterance starts with a mention
/// (`name:` or `name ,`) instead of carrying an explicit addressee.
pub fn raw_corpus_jsonl(convs: &[Conversation]) -> String {
    let mut out = String::new();
    for (d, c) in convs.iter().enumerate() {
        let utterances: Vec<serde_json::Value> = c
            .utterances
            .iter()
            .map(|u| {
                let mut tokens: Vec<String> = Vec::new();
                if let Some(a) = &u.addressee {
                    if d % 2 == 0 {
                        tokens.push(format!("{a}:"));
                    } else {
                        tokens.push(a.clone());
                        tokens.push(",".into());
                    }
                }
                tokens.extend(u.tokens.iter().cloned());
                serde_json::json!({"t": u.time_index, "speaker": u.speaker, "text_tokens": tokens})
            })
            .collect();
        let line = serde_json::json!({"doc_id": c.doc_id, "lang": c.lang, "utterances": utterances});
        writeln!(out, "{line}").expect("string write");
    }
    out
}

fn gaussian(r: &mut Rng) -> f64 {
    r.sample(rand_distr::StandardNormal)
}

/// Orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(d: usize, r: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| gaussian(r)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis.shuffle(r);
    basis
}
