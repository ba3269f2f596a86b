//! Frozen per-language word embeddings in a shared multilingual space.
//!
//! Tables are read from the plain-text vector format (`word f1 ... fd` per
//! line, optional `V d` header). They never receive gradients; transferring a
//! model to another language means handing it another table of the same
//! dimensionality.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::Tensor;
use crate::scalar::Scalar;

pub const DEFAULT_EMBED_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("header announces {announced} words, file has {found}")]
    HeaderCount { announced: usize, found: usize },
    #[error("embedding file has no vectors")]
    Empty,
    #[error("cannot look up an empty token sequence")]
    EmptyTokens,
    #[error("embedding dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<S> {
    lang: String,
    vocab: HashMap<String, usize>,
    matrix: Tensor<S>,
    unk: Vec<S>,
}

impl<S: Scalar> EmbeddingTable<S> {
    /// Builds a table from words and their vectors (`words.len()` rows of a
    /// `|V| × d` matrix). Later duplicates replace earlier ones.
    pub fn from_rows(lang: impl Into<String>, words: &[String], matrix: Tensor<S>) -> Result<Self, EmbeddingError> {
        if words.is_empty() || matrix.shape().len() != 2 || matrix.rows() != words.len() {
            return Err(EmbeddingError::Empty);
        }
        let d = matrix.cols();
        let mut vocab: HashMap<String, usize> = HashMap::with_capacity(words.len());
        let mut rows: Vec<&[S]> = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let key = w.to_lowercase();
            match vocab.get(&key) {
                Some(&slot) => {
                    log::warn!("duplicate embedding for `{key}`; keeping the later vector");
                    rows[slot] = matrix.row_slice(i);
                }
                None => {
                    vocab.insert(key, rows.len());
                    rows.push(matrix.row_slice(i));
                }
            }
        }
        let n = rows.len();
        let mut unk = vec![S::zero(); d];
        for row in &rows {
            for (u, &x) in unk.iter_mut().zip(*row) {
                *u += x;
            }
        }
        let inv = S::one() / S::of(n as f64);
        unk.iter_mut().for_each(|u| *u *= inv);
        let data: Vec<S> = rows.concat();
        Ok(Self {
            lang: lang.into(),
            vocab,
            matrix: Tensor::from_parts(vec![n, d], data),
            unk,
        })
    }

    pub fn lang(&self) -> &str {
        &self.lang
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &Tensor<S> {
        &self.matrix
    }

    /// Vocabulary mean, returned for unknown words.
    pub fn unk(&self) -> &[S] {
        &self.unk
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.vocab.get(&word.to_lowercase()).copied()
    }

    /// Vector of `word` after lowercasing, or the unknown vector.
    pub fn vector(&self, word: &str) -> &[S] {
        match self.index(word) {
            Some(i) => self.matrix.row_slice(i),
            None => &self.unk,
        }
    }

    /// `T × d` matrix whose row `i` is the vector of `tokens[i]`.
    pub fn lookup<T: AsRef<str>>(&self, tokens: &[T]) -> Result<Tensor<S>, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyTokens);
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim());
        for t in tokens {
            data.extend_from_slice(self.vector(t.as_ref()));
        }
        Ok(Tensor::from_parts(vec![tokens.len(), self.dim()], data))
    }

    /// Words in row order.
    pub fn words(&self) -> Vec<&str> {
        let mut words = vec![""; self.len()];
        for (w, &i) in &self.vocab {
            words[i] = w;
        }
        words
    }

    /// Writes the table in the text vector format with a `V d` header.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim())?;
        for (i, word) in self.words().into_iter().enumerate() {
            write!(w, "{word}")?;
            for x in self.matrix.row_slice(i) {
                // `{:?}` prints the shortest representation that round-trips.
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn load_embeddings<S: Scalar>(path: impl AsRef<Path>, lang: &str) -> Result<EmbeddingTable<S>, EmbeddingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embeddings(&text, lang)
}

pub fn parse_embeddings<S: Scalar>(text: &str, lang: &str) -> Result<EmbeddingTable<S>, EmbeddingError> {
    let mut words = Vec::new();
    let mut data: Vec<S> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut header: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if words.is_empty() && header.is_none() && rest.len() == 1 {
            if let (Ok(v), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                header = Some(v);
                dim = Some(d);
                continue;
            }
        }
        let expected = *dim.get_or_insert(rest.len());
        if rest.len() != expected || expected == 0 {
            return Err(EmbeddingError::Dimension {
                line: line_no,
                expected,
                found: rest.len(),
            });
        }
        for f in rest {
            let x: f64 = f.parse().map_err(|_| EmbeddingError::Malformed {
                line: line_no,
                message: format!("`{f}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(EmbeddingError::Malformed {
                    line: line_no,
                    message: format!("non-finite component `{f}`"),
                });
            }
            data.push(S::of(x));
        }
        words.push(word.to_string());
    }
    if words.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if let Some(v) = header {
        if v != words.len() {
            return Err(EmbeddingError::HeaderCount {
                announced: v,
                found: words.len(),
            });
        }
    }
    let d = dim.unwrap_or_default();
    let matrix = Tensor::from_parts(vec![words.len(), d], data);
    EmbeddingTable::from_rows(lang, &words, matrix)
}
