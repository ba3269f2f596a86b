use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{BuildDataArgs, Baseline, Cli, CliError, EvalArgs, ReportArgs, RunManifest, Split, TrainArgs};
use super::manifest::{sha256_file, write_atomic};
use crate::baselines::{chance_select, TfidfIndex};
use crate::corpus::{
    corpus_stats, extract_samples, parse_corpus, read_samples, split_dataset, write_samples, Conversation,
    CorpusStats, ResponsePool, Sample, SampleConfig, SplitSpec,
};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::evaluation::{evaluate_parallel, render_table, score_predictions, EvalReport, LanguageReport};
use crate::model::{Checkpoint, DynamicModel};
use crate::rng;
use crate::training::{run_method, train as train_supervised, EpochRecord, LanguageData, LanguagePaths, Method, TrainConfig};

const SPLITS: [&str; 3] = ["train", "dev", "test"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_output(path: &Path, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    manifest.add_output(path);
    Ok(())
}

fn finish(mut manifest: RunManifest, started: Instant, path: &Path) -> Result<(), CliError> {
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    manifest
        .save(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn hash_input(manifest: &mut RunManifest, path: &Path) -> Result<(), CliError> {
    manifest.add_input(path).map_err(|e| io_err(path, e))
}

/// Per-language corpus statistics next to the split sizes.
#[derive(Debug, Serialize)]
struct StatsRow {
    lang: String,
    #[serde(flatten)]
    corpus: CorpusStats,
    split_docs: BTreeMap<String, usize>,
    split_samples: BTreeMap<String, usize>,
}

fn stats_table(rows: &[StatsRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<6} {:>7} {:>9} {:>10} {:>7} {:>7} {:>8} {:>6} {:>6}",
        "lang", "docs", "utters", "words", "W./U.", "A./D.", "train", "dev", "test"
    )
    .expect("string write");
    for r in rows {
        writeln!(
            out,
            "{:<6} {:>7} {:>9} {:>10} {:>7.2} {:>7.2} {:>8} {:>6} {:>6}",
            r.lang,
            r.corpus.docs,
            r.corpus.utterances,
            r.corpus.words,
            r.corpus.words_per_utterance,
            r.corpus.agents_per_doc,
            r.split_samples["train"],
            r.split_samples["dev"],
            r.split_samples["test"],
        )
        .expect("string write");
    }
    out
}

/// Splits each language's conversations 90/5/5 (by default) and extracts
/// samples inside each split, drawing distractors from that split only.
pub fn build_data(cli: &Cli, args: &BuildDataArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let seed = cli.seed.unwrap_or(0);
    let sample_cfg = SampleConfig {
        r_size: args.r_size,
        context_len: args.context_len,
    };
    sample_cfg.validate()?;
    let split = SplitSpec {
        train: args.train_frac,
        dev: args.dev_frac,
        test: args.test_frac,
        seed,
    };
    split.validate()?;
    let mut manifest = RunManifest::new("build-data", argv, seed);
    manifest.config = serde_json::json!({
        "r_size": args.r_size,
        "context_len": args.context_len,
        "split": split,
    });

    let mut by_lang: BTreeMap<String, Vec<Conversation>> = BTreeMap::new();
    for path in &args.corpora {
        hash_input(&mut manifest, path)?;
        let convs = parse_corpus(path).map_err(|e| io_err(path, e))?;
        for c in convs {
            by_lang.entry(c.lang.clone()).or_default().push(c);
        }
    }

    let mut rows = Vec::new();
    for (lang, convs) in &by_lang {
        let (train, dev, test) = split_dataset(convs, &split).map_err(|e| CliError::Data(format!("`{lang}`: {e}")))?;
        let mut row = StatsRow {
            lang: lang.clone(),
            corpus: corpus_stats(convs),
            split_docs: BTreeMap::new(),
            split_samples: BTreeMap::new(),
        };
        for (name, part) in SPLITS.iter().zip([&train, &dev, &test]) {
            let pool = ResponsePool::new(lang, part);
            let mut r = rng::stream(seed, &format!("build-data/{lang}/{name}"));
            let mut samples: Vec<Sample> = Vec::new();
            for c in part.iter() {
                samples.extend(extract_samples(c, &pool, sample_cfg, &mut r).map_err(|e| {
                    CliError::Data(format!("`{lang}` {name} split, document {}: {e}", c.doc_id))
                })?);
            }
            if samples.is_empty() {
                log::warn!("language `{lang}`: the {name} split produced no samples");
            }
            let mut bytes = Vec::new();
            write_samples(&samples, &mut bytes).expect("in-memory write");
            write_output(&args.out.join(format!("{lang}.{name}.jsonl")), &bytes, &mut manifest)?;
            row.split_docs.insert(name.to_string(), part.len());
            row.split_samples.insert(name.to_string(), samples.len());
        }
        rows.push(row);
    }

    let table = stats_table(&rows);
    let json = serde_json::to_string_pretty(&rows).expect("stats serialize");
    write_output(&args.out.join("stats.json"), format!("{json}\n").as_bytes(), &mut manifest)?;
    write_output(&args.out.join("stats.txt"), table.as_bytes(), &mut manifest)?;
    print!("{table}");
    finish(manifest, started, &args.out.join("manifest.json"))
}

/// The config with command-line overrides applied, and the directory that
/// relative paths inside it are resolved against.
fn load_config(cli: &Cli) -> Result<(TrainConfig, PathBuf, PathBuf), CliError> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    let mut cfg = TrainConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, path, base))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Inputs<'a> {
    cfg: &'a TrainConfig,
    base: &'a Path,
    manifest: &'a mut RunManifest,
    tables: BTreeMap<String, Arc<EmbeddingTable<f64>>>,
}

impl Inputs<'_> {
    fn paths(&self, lang: &str) -> Result<&LanguagePaths, CliError> {
        self.cfg
            .languages
            .get(lang)
            .ok_or_else(|| CliError::Config(format!("no [languages.{lang}] entry in the config")))
    }

    fn samples(&mut self, lang: &str, path: &Path) -> Result<Vec<Sample>, CliError> {
        let path = resolve(self.base, path);
        hash_input(self.manifest, &path)?;
        let samples = read_samples(&path).map_err(|e| io_err(&path, e))?;
        if let Some(other) = samples.iter().find(|s| s.lang != lang) {
            log::warn!(
                "{}: sample language `{}` differs from the configured `{lang}`",
                path.display(),
                other.lang
            );
        }
        Ok(samples)
    }

    fn table(&mut self, lang: &str) -> Result<Arc<EmbeddingTable<f64>>, CliError> {
        if let Some(t) = self.tables.get(lang) {
            return Ok(t.clone());
        }
        let path = resolve(self.base, &self.paths(lang)?.embeddings.clone());
        hash_input(self.manifest, &path)?;
        let table = Arc::new(load_embeddings::<f64>(&path, lang).map_err(|e| io_err(&path, e))?);
        if table.dim() != self.cfg.embed_dim {
            return Err(CliError::Config(format!(
                "{}: {}-dimensional vectors, config expects embed_dim = {}",
                path.display(),
                table.dim(),
                self.cfg.embed_dim
            )));
        }
        self.tables.insert(lang.to_string(), table.clone());
        Ok(table)
    }

    fn language_data(&mut self, lang: &str) -> Result<LanguageData<f64>, CliError> {
        let paths = self.paths(lang)?.clone();
        Ok(LanguageData {
            lang: lang.to_string(),
            train: self.samples(lang, &paths.train)?,
            dev: self.samples(lang, &paths.dev)?,
            table: self.table(lang)?,
        })
    }
}

fn log_lines(log: &[EpochRecord]) -> String {
    log.iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

fn load_checkpoint(path: &Path, manifest: &mut RunManifest) -> Result<Checkpoint<f64>, CliError> {
    hash_input(manifest, path)?;
    Checkpoint::load(path).map_err(|e| io_err(path, e))
}

pub fn train(cli: &Cli, args: &TrainArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let (mut cfg, cfg_path, base) = load_config(cli)?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::new("train", argv, cfg.seed);
    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    hash_input(&mut manifest, &cfg_path)?;

    let mut init = match &args.init {
        Some(p) => {
            let ckpt = load_checkpoint(p, &mut manifest)?;
            if let Some(want) = cfg.method.prerequisite() {
                if ckpt.meta.method != want.as_str() {
                    log::warn!(
                        "{}: {} normally starts from a {want} checkpoint, this one is `{}`",
                        p.display(),
                        cfg.method,
                        ckpt.meta.method
                    );
                }
            }
            Some(ckpt)
        }
        None => None,
    };

    let mut inputs = Inputs {
        cfg: &cfg,
        base: &base,
        manifest: &mut manifest,
        tables: BTreeMap::new(),
    };
    let mut data = Vec::new();
    for lang in cfg.training_languages() {
        data.push(inputs.language_data(&lang)?);
    }

    let mut pretrain_log = None;
    if let Some(path) = &args.pretrain_corpus {
        if cfg.method == Method::Enonly {
            return Err(CliError::Config("--pretrain-corpus cannot be combined with enonly".into()));
        }
        let [target] = cfg.targets.as_slice() else {
            return Err(CliError::Config(
                "--pretrain-corpus needs exactly one target language to read the samples through".into(),
            ));
        };
        let pre_data = LanguageData {
            lang: target.clone(),
            train: inputs.samples(target, path)?,
            dev: data
                .iter()
                .find(|d| &d.lang == target)
                .map(|d| d.dev.clone())
                .expect("targets are training languages"),
            table: inputs.table(target)?,
        };
        let pre_cfg = TrainConfig {
            method: Method::Trgonly,
            ..cfg.clone()
        };
        log::info!("pre-training on {} samples from {}", pre_data.train.len(), path.display());
        let outcome = train_supervised(&pre_cfg, &[pre_data], init.as_ref().map(|c| &c.params))?;
        pretrain_log = Some(log_lines(&outcome.log));
        init = Some(outcome.checkpoint);
    }

    let outcome = run_method(&cfg, &data, init.as_ref())?;
    let ckpt_path = args.out.join("model.ckpt");
    write_output(&ckpt_path, &outcome.checkpoint.to_bytes(), &mut manifest)?;
    write_output(&args.out.join("train_log.jsonl"), log_lines(&outcome.log).as_bytes(), &mut manifest)?;
    if let Some(lines) = pretrain_log {
        write_output(&args.out.join("pretrain_log.jsonl"), lines.as_bytes(), &mut manifest)?;
    }
    let meta = &outcome.checkpoint.meta;
    log::info!(
        "{}: best dev ADR-RES {:.2} at epoch {} (lr {}, weight decay {})",
        cfg.method,
        meta.dev_adr_res.unwrap_or(f64::NAN),
        meta.epoch.unwrap_or(0),
        meta.lr.unwrap_or(f64::NAN),
        meta.weight_decay.unwrap_or(f64::NAN),
    );
    if !meta.replacement_targets.is_empty() {
        log::info!(
            "embedding replacement at test time: {}",
            meta.replacement_targets.join(", ")
        );
    }
    finish(manifest, started, &args.out.join("manifest.json"))
}

fn split_path(paths: &LanguagePaths, split: Split, lang: &str) -> Result<PathBuf, CliError> {
    match split {
        Split::Dev => Ok(paths.dev.clone()),
        Split::Test => paths
            .test
            .clone()
            .ok_or_else(|| CliError::Config(format!("no test file configured for `{lang}`"))),
    }
}

/// Languages a checkpoint is scored on when `--langs` is absent: the
/// replacement targets of an embedding-replacement model, otherwise the
/// languages it was trained on.
fn default_languages(ckpt: &Checkpoint<f64>) -> Vec<String> {
    if ckpt.meta.replacement_targets.is_empty() {
        ckpt.meta.languages.clone()
    } else {
        ckpt.meta.replacement_targets.clone()
    }
}

pub fn eval(cli: &Cli, args: &EvalArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, cfg_path, base) = load_config(cli)?;
    let mut manifest = RunManifest::new("eval", argv, cfg.seed);
    manifest.config = serde_json::to_value(&cfg).expect("config serializes");
    hash_input(&mut manifest, &cfg_path)?;

    let ckpt = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p, &mut manifest)?),
        None => None,
    };
    let mut langs: Vec<String> = if !args.langs.is_empty() {
        args.langs.clone()
    } else if let Some(c) = &ckpt {
        default_languages(c)
    } else {
        cfg.languages.keys().cloned().collect()
    };
    langs.sort();
    langs.dedup();
    if langs.is_empty() {
        return Err(CliError::Config("no languages to evaluate".into()));
    }

    let mut inputs = Inputs {
        cfg: &cfg,
        base: &base,
        manifest: &mut manifest,
        tables: BTreeMap::new(),
    };
    let mut model = None;
    if let Some(c) = &ckpt {
        let first = inputs.table(&langs[0])?;
        model = Some(DynamicModel::new(c.params.clone(), first)?);
        let known: BTreeSet<&String> = c.meta.languages.iter().chain(&c.meta.replacement_targets).collect();
        for lang in &langs {
            if !known.contains(lang) {
                log::warn!(
                    "checkpoint ({}) was trained on {:?}; scoring `{lang}` through its own embedding table",
                    c.meta.method,
                    c.meta.languages
                );
            }
        }
    }

    let mut reports: Vec<LanguageReport> = Vec::new();
    for lang in &langs {
        let paths = inputs.paths(lang)?.clone();
        let samples = inputs.samples(lang, &split_path(&paths, args.split, lang)?)?;
        let report = match (&mut model, args.baseline) {
            (Some(m), _) => {
                m.replace_table(inputs.table(lang)?)?;
                evaluate_parallel(&*m, &samples, cfg.jobs)?
            }
            (None, Some(Baseline::Chance)) => {
                let mut r = rng::stream(cfg.seed, &format!("chance/{lang}"));
                let predictions: Vec<_> = samples.iter().map(|s| chance_select(s, &mut r)).collect();
                score_predictions(&samples, &predictions)?
            }
            (None, Some(Baseline::Tfidf)) => {
                let train = inputs.samples(lang, &paths.train)?;
                evaluate_parallel(&TfidfIndex::from_samples(&train), &samples, cfg.jobs)?
            }
            (None, None) => unreachable!("clap requires a checkpoint or a baseline"),
        };
        log::info!(
            "{lang}: ADR-RES {:.2}  ADR {:.2}  RES {:.2}  ({} samples)",
            report.accuracy.adr_res,
            report.accuracy.adr,
            report.accuracy.res,
            report.samples
        );
        reports.push(report);
    }

    let (method, digest) = match (&ckpt, &args.checkpoint, args.baseline) {
        (Some(c), Some(p), _) => (
            c.meta.method.clone(),
            Some(sha256_file(p).map_err(|e| io_err(p, e))?),
        ),
        (_, _, Some(b)) => (b.as_str().to_string(), None),
        _ => unreachable!("clap requires a checkpoint or a baseline"),
    };
    let report = EvalReport::new(method, digest, cfg.seed, reports)?;
    write_output(&args.out, format!("{}\n", report.to_json()).as_bytes(), &mut manifest)?;
    print!("{}", render_table(std::slice::from_ref(&report)));
    finish(manifest, started, &args.out.with_extension("manifest.json"))
}

pub fn report(args: &ReportArgs, argv: Vec<String>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("report", argv, 0);
    let mut reports = Vec::new();
    for path in &args.reports {
        hash_input(&mut manifest, path)?;
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let report: EvalReport = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
        reports.push(report);
    }
    let table = render_table(&reports);
    print!("{table}");
    if let Some(out) = &args.out {
        write_output(out, table.as_bytes(), &mut manifest)?;
        finish(manifest, started, &out.with_extension("manifest.json"))?;
    }
    Ok(())
}
