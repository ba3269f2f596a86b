use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContextUtterance, Conversation, CorpusError, Sample, Utterance};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConversation {
    doc_id: String,
    lang: String,
    utterances: Vec<RawUtterance>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUtterance {
    t: u64,
    speaker: String,
    text_tokens: Vec<String>,
    /// Present once a corpus has been anonymized; takes precedence over
    /// mention detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    addressee: Option<String>,
}

/// Sample line layout. Each context entry is `[speaker, token, token, ...]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    lang: String,
    responder: String,
    agents: Vec<String>,
    context: Vec<Vec<String>>,
    candidates: Vec<Vec<String>>,
    truth_addressee: String,
    truth_index: usize,
}

fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<Conversation>, CorpusError> {
    parse_corpus_str(&read_to_string(path.as_ref())?)
}

/// Parses corpus JSONL, detecting addressees and anonymizing tokens.
pub fn parse_corpus_str(text: &str) -> Result<Vec<Conversation>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(build_conversation(raw).map_err(|message| CorpusError::Parse {
            line: line_no,
            message,
        })?);
    }
    if out.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(out)
}

/// Strips trailing `:` / `,` so `bob:` and `bob,` count as mentions of `bob`.
fn mention_target(token: &str) -> &str {
    token.trim_end_matches([':', ','])
}

fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

fn build_conversation(raw: RawConversation) -> Result<Conversation, String> {
    if raw.doc_id.is_empty() {
        return Err("field `doc_id` is empty".into());
    }
    if raw.lang.is_empty() {
        return Err("field `lang` is empty".into());
    }
    let agents: BTreeSet<&str> = raw.utterances.iter().map(|u| u.speaker.as_str()).collect();
    if agents.iter().any(|a| a.is_empty()) {
        return Err("field `speaker` is empty".into());
    }
    if agents.len() < 2 {
        return Err(format!("document `{}` needs at least 2 distinct speakers", raw.doc_id));
    }

    let mut utterances = Vec::with_capacity(raw.utterances.len());
    let mut last_t: Option<u64> = None;
    for u in &raw.utterances {
        if last_t.is_some_and(|t| u.t <= t) {
            return Err(format!("field `t`: time index {} does not increase", u.t));
        }
        last_t = Some(u.t);

        let mut tokens: &[String] = &u.text_tokens;
        let addressee = match &u.addressee {
            Some(a) if *a == u.speaker => {
                return Err(format!("field `addressee`: `{a}` is the speaker"));
            }
            Some(a) => Some(a.clone()),
            None => match tokens.first() {
                Some(first)
                    if agents.contains(mention_target(first)) && mention_target(first) != u.speaker =>
                {
                    let name = mention_target(first).to_string();
                    tokens = &tokens[1..];
                    if tokens.first().is_some_and(|t| is_punctuation(t)) {
                        tokens = &tokens[1..];
                    }
                    Some(name)
                }
                _ => None,
            },
        };
        let tokens: Vec<String> = tokens
            .iter()
            .filter(|t| !agents.contains(mention_target(t)))
            .cloned()
            .collect();
        // Utterances that were nothing but a mention carry no content.
        if tokens.is_empty() {
            continue;
        }
        utterances.push(Utterance {
            time_index: u.t,
            speaker: u.speaker.clone(),
            addressee,
            tokens,
        });
    }
    Ok(Conversation {
        doc_id: raw.doc_id,
        lang: raw.lang,
        utterances,
    })
}

/// Writes conversations in the corpus JSONL layout, with explicit addressees.
pub fn write_corpus<W: Write>(convs: &[Conversation], mut w: W) -> std::io::Result<()> {
    for c in convs {
        let raw = RawConversation {
            doc_id: c.doc_id.clone(),
            lang: c.lang.clone(),
            utterances: c
                .utterances
                .iter()
                .map(|u| RawUtterance {
                    t: u.time_index,
                    speaker: u.speaker.clone(),
                    text_tokens: u.tokens.clone(),
                    addressee: u.addressee.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>, CorpusError> {
    read_samples_str(&read_to_string(path.as_ref())?)
}

pub fn read_samples_str(text: &str) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            line: i + 1,
            message,
        };
        let raw: RawSample = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let context = raw
            .context
            .into_iter()
            .map(|mut entry| {
                if entry.len() < 2 {
                    return Err(parse_err("context entry needs a speaker and tokens".into()));
                }
                let tokens = entry.split_off(1);
                Ok(ContextUtterance {
                    speaker: entry.pop().unwrap_or_default(),
                    tokens,
                })
            })
            .collect::<Result<_, _>>()?;
        let sample = Sample {
            lang: raw.lang,
            responder: raw.responder,
            agents: raw.agents,
            context,
            candidates: raw.candidates,
            truth_addressee: raw.truth_addressee,
            truth_index: raw.truth_index,
        };
        sample.validate().map_err(parse_err)?;
        out.push(sample);
    }
    if out.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(out)
}

pub fn write_samples<W: Write>(samples: &[Sample], mut w: W) -> std::io::Result<()> {
    for s in samples {
        let raw = RawSample {
            lang: s.lang.clone(),
            responder: s.responder.clone(),
            agents: s.agents.clone(),
            context: s
                .context
                .iter()
                .map(|u| std::iter::once(u.speaker.clone()).chain(u.tokens.iter().cloned()).collect())
                .collect(),
            candidates: s.candidates.clone(),
            truth_addressee: s.truth_addressee.clone(),
            truth_index: s.truth_index,
        };
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
