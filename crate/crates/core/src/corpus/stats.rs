use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Conversation;

/// Corpus size summary: documents, utterances, words, and the two means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub utterances: usize,
    pub words: usize,
    pub words_per_utterance: f64,
    pub agents_per_doc: f64,
}

pub fn corpus_stats(convs: &[Conversation]) -> CorpusStats {
    let docs = convs.len();
    let utterances: usize = convs.iter().map(|c| c.utterances.len()).sum();
    let words: usize = convs
        .iter()
        .flat_map(|c| &c.utterances)
        .map(|u| u.tokens.len())
        .sum();
    let agents: usize = convs
        .iter()
        .map(|c| c.utterances.iter().map(|u| &u.speaker).collect::<BTreeSet<_>>().len())
        .sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    CorpusStats {
        docs,
        utterances,
        words,
        words_per_utterance: ratio(words, utterances),
        agents_per_doc: ratio(agents, docs),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_corpus_str, testutil::conversation_jsonl};
    use super::*;

    #[test]
    fn counts_and_means() {
        let text = conversation_jsonl("d", "en", &[("a", None, "one two three"), ("b", None, "four five six")]);
        let s = corpus_stats(&parse_corpus_str(&text).unwrap());
        assert_eq!((s.docs, s.utterances, s.words), (1, 2, 6));
        assert_eq!(s.words_per_utterance, 3.0);
        assert_eq!(s.agents_per_doc, 2.0);

        let text = conversation_jsonl("d", "en", &[("a", None, "x"), ("b", None, "y"), ("c", None, "z"), ("a", None, "w")]);
        assert_eq!(corpus_stats(&parse_corpus_str(&text).unwrap()).agents_per_doc, 3.0);
    }
}
