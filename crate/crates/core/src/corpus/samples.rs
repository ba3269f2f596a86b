use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::{ContextUtterance, Conversation, CorpusError, Sample, SUPPORTED_R_SIZES};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub r_size: usize,
    pub context_len: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            r_size: 2,
            context_len: super::DEFAULT_CONTEXT_LEN,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !SUPPORTED_R_SIZES.contains(&self.r_size) {
            return Err(CorpusError::InvalidConfig(format!(
                "candidate set size must be 2 or 10, got {}",
                self.r_size
            )));
        }
        if self.context_len == 0 {
            return Err(CorpusError::InvalidConfig("context length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PoolEntry {
    doc_id: String,
    time_index: u64,
    tokens: Vec<String>,
}

/// Every utterance of one language partition; distractor responses are drawn
/// from here uniformly.
#[derive(Debug, Clone)]
pub struct ResponsePool {
    lang: String,
    entries: Vec<PoolEntry>,
}

impl ResponsePool {
    /// Pools every utterance of `convs` whose language is `lang`.
    pub fn new(lang: &str, convs: &[Conversation]) -> Self {
        let entries = convs
            .iter()
            .filter(|c| c.lang == lang)
            .flat_map(|c| {
                c.utterances.iter().map(|u| PoolEntry {
                    doc_id: c.doc_id.clone(),
                    time_index: u.time_index,
                    tokens: u.tokens.clone(),
                })
            })
            .collect();
        Self {
            lang: lang.to_string(),
            entries,
        }
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Builds one sample per utterance whose addressee spoke within the
/// preceding `context_len` utterances.
///
/// The context may be shorter than `context_len` near the start of a
/// conversation. Distractors are drawn uniformly without replacement from
/// `pool`, excluding the true response itself and any utterance with the same
/// tokens. Tokens naming agents of this conversation are removed from
/// distractors as well.
pub fn extract_samples(
    conv: &Conversation,
    pool: &ResponsePool,
    config: SampleConfig,
    rng: &mut Rng,
) -> Result<Vec<Sample>, CorpusError> {
    config.validate()?;
    let agents_in_doc: BTreeSet<&str> = conv
        .utterances
        .iter()
        .flat_map(|u| std::iter::once(u.speaker.as_str()).chain(u.addressee.as_deref()))
        .collect();

    let mut samples = Vec::new();
    for (i, utt) in conv.utterances.iter().enumerate() {
        let Some(addressee) = utt.addressee.as_deref() else {
            continue;
        };
        if i == 0 || addressee == utt.speaker {
            continue;
        }
        let context = &conv.utterances[i.saturating_sub(config.context_len)..i];
        if !context.iter().any(|u| u.speaker == addressee) {
            continue;
        }
        let agents: Vec<String> = context
            .iter()
            .flat_map(|u| std::iter::once(u.speaker.as_str()).chain(u.addressee.as_deref()))
            .filter(|a| *a != utt.speaker)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();

        let mut candidates = draw_distractors(conv, utt, pool, &agents_in_doc, config.r_size - 1, rng)?;
        let truth_index = rng.random_range(0..config.r_size);
        candidates.insert(truth_index, utt.tokens.clone());

        samples.push(Sample {
            lang: conv.lang.clone(),
            responder: utt.speaker.clone(),
            agents,
            context: context
                .iter()
                .map(|u| ContextUtterance {
                    speaker: u.speaker.clone(),
                    tokens: u.tokens.clone(),
                })
                .collect(),
            candidates,
            truth_addressee: addressee.to_string(),
            truth_index,
        });
    }
    Ok(samples)
}

fn draw_distractors(
    conv: &Conversation,
    truth: &super::Utterance,
    pool: &ResponsePool,
    agents: &BTreeSet<&str>,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<String>>, CorpusError> {
    let eligible = |e: &PoolEntry| -> Option<Vec<String>> {
        if e.doc_id == conv.doc_id && e.time_index == truth.time_index {
            return None;
        }
        let tokens: Vec<String> = e
            .tokens
            .iter()
            .filter(|t| !agents.contains(t.as_str()))
            .cloned()
            .collect();
        (!tokens.is_empty() && tokens != truth.tokens).then_some(tokens)
    };

    let n = pool.entries.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 64 * (count + 1) && n > 0 {
        attempts += 1;
        let idx = rng.random_range(0..n);
        if chosen.contains(&idx) {
            continue;
        }
        if let Some(tokens) = eligible(&pool.entries[idx]) {
            chosen.push(idx);
            out.push(tokens);
        }
    }
    if out.len() < count {
        // Rejection sampling stalled: enumerate what is left.
        let rest: Vec<usize> = (0..n)
            .filter(|i| !chosen.contains(i) && eligible(&pool.entries[*i]).is_some())
            .collect();
        let needed = count - out.len();
        if rest.len() < needed {
            return Err(CorpusError::TooSmall {
                lang: pool.lang.clone(),
                needed: count,
                available: out.len() + rest.len(),
            });
        }
        for &i in rest.choose_multiple(rng, needed) {
            out.push(eligible(&pool.entries[i]).expect("filtered as eligible"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_corpus_str, testutil::conversation_jsonl};
    use super::*;
    use crate::rng;

    fn chain_conversation(doc: &str, n: usize) -> String {
        // Speakers cycle a, b, c; each utterance addresses the previous speaker.
        let names = ["a", "b", "c"];
        let texts: Vec<String> = (0..n).map(|i| format!("word{i} common{doc}")).collect();
        let turns: Vec<(&str, Option<&str>, &str)> = (0..n)
            .map(|i| {
                let prev = (i > 0).then(|| names[(i - 1) % 3]);
                (names[i % 3], prev, texts[i].as_str())
            })
            .collect();
        conversation_jsonl(doc, "en", &turns)
    }

    fn corpus(n_docs: usize, len: usize) -> Vec<Conversation> {
        let text: Vec<String> = (0..n_docs).map(|d| chain_conversation(&format!("d{d}"), len)).collect();
        parse_corpus_str(&text.join("\n")).unwrap()
    }

    /// Independent scan: utterance `i` yields a sample iff it has an addressee
    /// who spoke in the window of (at most) `k` utterances before it.
    fn brute_force_count(conv: &Conversation, k: usize) -> usize {
        let mut count = 0;
        for i in 0..conv.utterances.len() {
            let u = &conv.utterances[i];
            let Some(a) = &u.addressee else { continue };
            let lo = if i >= k { i - k } else { 0 };
            let mut found = false;
            for j in lo..i {
                if conv.utterances[j].speaker == *a {
                    found = true;
                }
            }
            if found && *a != u.speaker {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn chain_conversation_matches_brute_force() {
        let convs = corpus(3, 20);
        let pool = ResponsePool::new("en", &convs);
        for k in [1, 3, 15] {
            let mut r = rng::seeded(1);
            let samples = extract_samples(&convs[0], &pool, SampleConfig { r_size: 2, context_len: k }, &mut r).unwrap();
            assert_eq!(samples.len(), brute_force_count(&convs[0], k));
            assert_eq!(samples.len(), 19);
            for s in &samples {
                assert!(s.agents.contains(&s.truth_addressee));
                assert_ne!(s.truth_addressee, s.responder);
                assert!(s.context.len() <= k);
            }
        }
    }

    #[test]
    fn no_addressee_no_sample() {
        let text = conversation_jsonl("d", "en", &[("a", None, "x"), ("b", None, "y"), ("a", None, "z")]);
        let convs = parse_corpus_str(&text).unwrap();
        let pool = ResponsePool::new("en", &corpus(2, 10));
        let mut r = rng::seeded(0);
        assert!(extract_samples(&convs[0], &pool, SampleConfig::default(), &mut r).unwrap().is_empty());
    }

    #[test]
    fn candidate_sets_have_one_truth() {
        let convs = corpus(5, 20);
        let pool = ResponsePool::new("en", &convs);
        for r_size in [2, 10] {
            let mut r = rng::seeded(r_size as u64);
            for conv in &convs {
                let cfg = SampleConfig { r_size, context_len: 15 };
                for s in extract_samples(conv, &pool, cfg, &mut r).unwrap() {
                    assert_eq!(s.candidates.len(), r_size);
                    let truth = &s.candidates[s.truth_index];
                    assert_eq!(s.candidates.iter().filter(|c| *c == truth).count(), 1);
                    s.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn truth_position_varies() {
        let convs = corpus(5, 20);
        let pool = ResponsePool::new("en", &convs);
        let mut r = rng::seeded(9);
        let positions: BTreeSet<usize> = extract_samples(&convs[0], &pool, SampleConfig { r_size: 10, context_len: 5 }, &mut r)
            .unwrap()
            .iter()
            .map(|s| s.truth_index)
            .collect();
        assert!(positions.len() > 3);
    }

    #[test]
    fn tiny_pool_is_too_small() {
        let convs = corpus(1, 4);
        let pool = ResponsePool::new("en", &convs);
        let mut r = rng::seeded(0);
        let err = extract_samples(&convs[0], &pool, SampleConfig { r_size: 10, context_len: 15 }, &mut r).unwrap_err();
        assert!(matches!(err, CorpusError::TooSmall { needed: 9, .. }), "{err}");
    }

    #[test]
    fn unsupported_sizes_rejected() {
        let convs = corpus(1, 4);
        let pool = ResponsePool::new("en", &convs);
        let mut r = rng::seeded(0);
        assert!(extract_samples(&convs[0], &pool, SampleConfig { r_size: 3, context_len: 15 }, &mut r).is_err());
        assert!(extract_samples(&convs[0], &pool, SampleConfig { r_size: 2, context_len: 0 }, &mut r).is_err());
    }
}
