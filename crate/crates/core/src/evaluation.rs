//! Accuracy metrics per language and their macro averages.
//!
//! A prediction counts toward ADR when the addressee is right, RES when the
//! response index is right and ADR-RES only when both are. Percentages are
//! stored rounded to two decimals next to the raw counts, and the macro
//! average is the plain mean of the per-language percentages.

use std::collections::BTreeSet;
use std::error::Error;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sample;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub addressee: String,
    pub response_index: usize,
}

pub type PredictError = Box<dyn Error + Send + Sync>;

/// Anything that maps a sample to an addressee and a response index.
pub trait Predictor: Sync {
    fn predict(&self, sample: &Sample) -> Result<Prediction, PredictError>;
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("mixed languages in one evaluation set: `{0}` and `{1}`")]
    MixedLanguages(String, String),
    #[error("{predictions} predictions for {samples} samples")]
    CountMismatch { predictions: usize, samples: usize },
    #[error("sample {index}: response index {response} out of range for {candidates} candidates")]
    ResponseOutOfRange {
        index: usize,
        response: usize,
        candidates: usize,
    },
    #[error("sample {index}: {source}")]
    Predictor {
        index: usize,
        #[source]
        source: PredictError,
    },
    #[error("cannot average zero languages")]
    NoLanguages,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn percent(hits: usize, total: usize) -> f64 {
    round2(100.0 * hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub adr_res: f64,
    pub adr: f64,
    pub res: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub lang: String,
    pub r_size: usize,
    pub samples: usize,
    pub adr_correct: usize,
    pub res_correct: usize,
    pub both_correct: usize,
    pub accuracy: Accuracies,
}

fn single_language(samples: &[Sample]) -> Result<&str, EvalError> {
    let first = samples.first().ok_or(EvalError::Empty)?;
    if let Some(other) = samples.iter().find(|s| s.lang != first.lang) {
        return Err(EvalError::MixedLanguages(first.lang.clone(), other.lang.clone()));
    }
    Ok(&first.lang)
}

/// Scores precomputed predictions against their samples.
pub fn score_predictions(samples: &[Sample], predictions: &[Prediction]) -> Result<LanguageReport, EvalError> {
    let lang = single_language(samples)?;
    if predictions.len() != samples.len() {
        return Err(EvalError::CountMismatch {
            predictions: predictions.len(),
            samples: samples.len(),
        });
    }
    let (mut adr, mut res, mut both) = (0, 0, 0);
    for (index, (s, p)) in samples.iter().zip(predictions).enumerate() {
        if p.response_index >= s.candidates.len() {
            return Err(EvalError::ResponseOutOfRange {
                index,
                response: p.response_index,
                candidates: s.candidates.len(),
            });
        }
        let a = p.addressee == s.truth_addressee;
        let r = p.response_index == s.truth_index;
        adr += usize::from(a);
        res += usize::from(r);
        both += usize::from(a && r);
    }
    let n = samples.len();
    Ok(LanguageReport {
        lang: lang.to_string(),
        r_size: samples[0].candidates.len(),
        samples: n,
        adr_correct: adr,
        res_correct: res,
        both_correct: both,
        accuracy: Accuracies {
            adr_res: percent(both, n),
            adr: percent(adr, n),
            res: percent(res, n),
        },
    })
}

pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, samples: &[Sample]) -> Result<LanguageReport, EvalError> {
    single_language(samples)?;
    let predictions = samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            predictor
                .predict(s)
                .map_err(|source| EvalError::Predictor { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    score_predictions(samples, &predictions)
}

/// Same result as [`evaluate`], with predictions computed on `jobs` threads.
pub fn evaluate_parallel<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[Sample],
    jobs: usize,
) -> Result<LanguageReport, EvalError> {
    if jobs <= 1 {
        return evaluate(predictor, samples);
    }
    single_language(samples)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    let predictions = pool.install(|| {
        samples
            .par_iter()
            .enumerate()
            .map(|(index, s)| {
                predictor
                    .predict(s)
                    .map_err(|source| EvalError::Predictor { index, source })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    score_predictions(samples, &predictions)
}

/// Unweighted mean of each metric, rounded to two decimals.
pub fn macro_average(per_language: &[Accuracies]) -> Result<Accuracies, EvalError> {
    if per_language.is_empty() {
        return Err(EvalError::NoLanguages);
    }
    let n = per_language.len() as f64;
    let mean = |f: fn(&Accuracies) -> f64| round2(per_language.iter().map(f).sum::<f64>() / n);
    Ok(Accuracies {
        adr_res: mean(|a| a.adr_res),
        adr: mean(|a| a.adr),
        res: mean(|a| a.res),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// SHA-256 of the checkpoint file, absent for baselines.
    pub checkpoint: Option<String>,
    pub seed: u64,
    pub languages: Vec<LanguageReport>,
    #[serde(rename = "macro")]
    pub macro_avg: Accuracies,
}

impl EvalReport {
    pub fn new(
        method: impl Into<String>,
        checkpoint: Option<String>,
        seed: u64,
        mut languages: Vec<LanguageReport>,
    ) -> Result<Self, EvalError> {
        languages.sort_by(|a, b| a.lang.cmp(&b.lang));
        let accs: Vec<Accuracies> = languages.iter().map(|l| l.accuracy).collect();
        Ok(Self {
            method: method.into(),
            checkpoint,
            seed,
            macro_avg: macro_average(&accs)?,
            languages,
        })
    }

    pub fn r_size(&self) -> usize {
        self.languages.first().map_or(0, |l| l.r_size)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn cell(report: &EvalReport, metric: fn(&Accuracies) -> f64) -> String {
    let mut s = format!("{:.2}", metric(&report.macro_avg));
    if report.languages.len() > 1 {
        let parts: Vec<String> = report
            .languages
            .iter()
            .map(|l| format!("{:.2}", metric(&l.accuracy)))
            .collect();
        write!(s, " ({})", parts.join(", ")).expect("string write");
    }
    s
}

/// Plain-text table with one row per method and ADR-RES / ADR / RES columns
/// for every candidate-set size present.
pub fn render_table(reports: &[EvalReport]) -> String {
    let sizes: BTreeSet<usize> = reports.iter().map(EvalReport::r_size).collect();
    let mut methods: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let metrics: [(&str, fn(&Accuracies) -> f64); 3] =
        [("ADR-RES", |a| a.adr_res), ("ADR", |a| a.adr), ("RES", |a| a.res)];

    let mut header = vec!["Method".to_string()];
    for size in &sizes {
        for (name, _) in &metrics {
            header.push(format!("{name} |R|={size}"));
        }
    }
    let mut rows = vec![header];
    for m in &methods {
        let mut row = vec![m.to_string()];
        for &size in &sizes {
            let found = reports.iter().rev().find(|r| r.method == *m && r.r_size() == size);
            for (_, f) in &metrics {
                row.push(found.map_or_else(|| "-".to_string(), |r| cell(r, *f)));
            }
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
