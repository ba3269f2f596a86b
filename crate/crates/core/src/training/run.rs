use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::critic::{Critic, CriticTrainer};
use super::loss::sample_loss_on_tape;
use super::{BatchCycler, LanguageData, Method, TrainConfig, TrainError};
use crate::corpus::Sample;
use crate::embeddings::EmbeddingTable;
use crate::engine::{AdamConfig, AdamState, EngineError, Gradients, Tape, Tensor};
use crate::evaluation::{evaluate_parallel, macro_average};
use crate::model::{
    extract_features, forward_sample, Checkpoint, CheckpointMeta, DynamicModel, DynamicModelParams, ModelVars,
};
use crate::rng;
use crate::scalar::Scalar;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub method: Method,
    /// Index into the learning-rate × weight-decay grid.
    pub grid_index: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// 0 is the initial model before any update.
    pub epoch: usize,
    pub steps: usize,
    /// Mean over the epoch's steps of the summed per-language loss.
    pub train_loss: Option<f64>,
    /// Mean critic objective summed over pairs, adversarial training only.
    pub critic_objective: Option<f64>,
    pub dev_adr_res: BTreeMap<String, f64>,
    pub dev_macro_adr_res: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub checkpoint: Checkpoint<S>,
    pub log: Vec<EpochRecord>,
}

struct Selected<S> {
    params: DynamicModelParams<S>,
    score: f64,
    lr: f64,
    weight_decay: f64,
    epoch: usize,
}

/// An adversarial pair as indices into the run's language list.
#[derive(Clone, Copy)]
struct Pair {
    source: usize,
    target: usize,
}

struct Run<'a, S> {
    cfg: &'a TrainConfig,
    method: Method,
    langs: Vec<&'a LanguageData<S>>,
    pairs: Vec<Pair>,
    lambda: f64,
    pool: Option<rayon::ThreadPool>,
}

fn pick<'a, S>(data: &'a [LanguageData<S>], langs: &[String]) -> Result<Vec<&'a LanguageData<S>>, TrainError> {
    langs
        .iter()
        .map(|l| {
            let d = data
                .iter()
                .find(|d| &d.lang == l)
                .ok_or_else(|| TrainError::Data(format!("no data for language `{l}`")))?;
            if d.train.is_empty() {
                return Err(TrainError::Data(format!("training set for `{l}` is empty")));
            }
            if d.dev.is_empty() {
                return Err(TrainError::Data(format!("dev set for `{l}` is empty")));
            }
            Ok(d)
        })
        .collect()
}

fn check_compatible<S: Scalar>(params: &DynamicModelParams<S>, langs: &[&LanguageData<S>]) -> Result<(), TrainError> {
    let d = params.dims().embed_dim;
    for l in langs {
        if l.table.dim() != d {
            return Err(TrainError::Incompatible(format!(
                "model reads {d}-dimensional embeddings, `{}` table has {}",
                l.lang,
                l.table.dim()
            )));
        }
    }
    Ok(())
}

impl<'a, S: Scalar> Run<'a, S> {
    fn new(cfg: &'a TrainConfig, method: Method, data: &'a [LanguageData<S>]) -> Result<Self, TrainError> {
        let method_cfg = TrainConfig {
            method,
            ..cfg.clone()
        };
        method_cfg.validate()?;
        let names = method_cfg.training_languages();
        let langs = pick(data, &names)?;
        let (pairs, lambda) = if method == Method::Wgan {
            let index = |l: &str| names.iter().position(|n| n == l).expect("pair languages are trained");
            let pairs = method_cfg
                .critic_pairs()
                .iter()
                .map(|(s, t)| Pair {
                    source: index(s),
                    target: index(t),
                })
                .collect();
            (pairs, cfg.lambda)
        } else {
            (Vec::new(), 0.0)
        };
        let pool = if cfg.jobs > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.jobs)
                    .build()
                    .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            cfg,
            method,
            langs,
            pairs,
            lambda,
            pool,
        })
    }

    /// Maps `f` over `items` in order, on the pool when one is configured.
    fn map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            None => items.iter().map(f).collect(),
        }
    }

    fn dev_scores(&self, params: &DynamicModelParams<S>) -> Result<(BTreeMap<String, f64>, f64), TrainError> {
        let mut per_lang = BTreeMap::new();
        let mut accs = Vec::new();
        for l in &self.langs {
            let model = DynamicModel::new(params.clone(), l.table.clone())?;
            let report = evaluate_parallel(&model, &l.dev, self.cfg.jobs)?;
            per_lang.insert(l.lang.clone(), report.accuracy.adr_res);
            accs.push(report.accuracy);
        }
        Ok((per_lang, macro_average(&accs)?.adr_res))
    }

    fn features(&self, params: &DynamicModelParams<S>, lang: usize, picks: &[usize]) -> Result<Tensor<S>, TrainError> {
        let l = self.langs[lang];
        let rows = self.map(picks, |&i| extract_features(params, &l.table, &l.train[i]));
        let mut data = Vec::with_capacity(picks.len() * params.dims().feature_dim());
        for r in rows {
            data.extend(r?.h);
        }
        Ok(Tensor::new(vec![picks.len(), params.dims().feature_dim()], data)?)
    }

    fn descent(
        &self,
        params: &DynamicModelParams<S>,
        batches: &[Vec<usize>],
        critics: &[CriticTrainer<S>],
    ) -> Result<(S, Gradients<S>), TrainError> {
        let parts: Vec<(&EmbeddingTable<S>, Vec<&Sample>)> = batches
            .iter()
            .enumerate()
            .map(|(k, b)| (self.langs[k].table.as_ref(), b.iter().map(|&i| &self.langs[k].train[i]).collect()))
            .collect();
        let adversarial: Vec<(usize, usize, &Critic<S>)> = self
            .pairs
            .iter()
            .zip(critics)
            .map(|(p, c)| (p.source, p.target, &c.critic))
            .collect();
        descent_objective(params, &parts, &adversarial, self.lambda, self.pool.as_ref())
    }

    fn run(&self, init: &DynamicModelParams<S>) -> Result<(Selected<S>, Vec<EpochRecord>), TrainError> {
        check_compatible(init, &self.langs)?;
        let cfg = self.cfg;
        let mut log = Vec::new();
        let mut best: Option<Selected<S>> = None;
        let grid: Vec<(f64, f64)> = cfg
            .lr_grid
            .iter()
            .flat_map(|&lr| cfg.l2_grid.iter().map(move |&l2| (lr, l2)))
            .collect();

        for (g, &(lr, l2)) in grid.iter().enumerate() {
            let mut params = init.clone();
            let adam_cfg = AdamConfig {
                lr,
                weight_decay: l2,
                ..AdamConfig::default()
            };
            let mut adam = AdamState::new(adam_cfg, params.params());
            let mut cyclers: Vec<BatchCycler> = self
                .langs
                .iter()
                .map(|l| BatchCycler::new(l.train.len(), cfg.batch_size, cfg.seed, &format!("batches/{}/{g}", l.lang)))
                .collect();
            let mut critic_cyclers: Vec<BatchCycler> = self
                .langs
                .iter()
                .map(|l| BatchCycler::new(l.train.len(), cfg.batch_size, cfg.seed, &format!("critic-batches/{}/{g}", l.lang)))
                .collect();
            let mut critics = self
                .pairs
                .iter()
                .map(|p| {
                    let name = format!("critic/{}/{}/{g}", self.langs[p.source].lang, self.langs[p.target].lang);
                    let critic = Critic::init(
                        init.dims().feature_dim(),
                        cfg.critic_hidden,
                        cfg.clip,
                        &mut rng::stream(cfg.seed, &name),
                    );
                    CriticTrainer::new(critic, cfg.critic_lr, cfg.clip)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let steps = cyclers.iter().map(BatchCycler::batches_per_pass).max().unwrap_or(0);

            let mut consider = |params: &DynamicModelParams<S>, epoch: usize, score: f64| {
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Selected {
                        params: params.clone(),
                        score,
                        lr,
                        weight_decay: l2,
                        epoch,
                    });
                }
            };

            // The untrained model competes only when no epoch is run.
            let (dev, dev_macro) = self.dev_scores(&params)?;
            if cfg.max_epochs == 0 {
                consider(&params, 0, dev_macro);
            }
            log.push(EpochRecord {
                method: self.method,
                grid_index: g,
                lr,
                weight_decay: l2,
                epoch: 0,
                steps: 0,
                train_loss: None,
                critic_objective: None,
                dev_adr_res: dev,
                dev_macro_adr_res: dev_macro,
            });

            for epoch in 1..=cfg.max_epochs {
                let mut loss_sum = 0.0;
                let mut critic_sum = 0.0;
                for step in 0..steps {
                    let numeric = |message: String| TrainError::Numeric { epoch, step, message };
                    let batches: Vec<Vec<usize>> = cyclers.iter_mut().map(BatchCycler::next_batch).collect();

                    if !self.pairs.is_empty() {
                        let mut step_obj = 0.0;
                        for _ in 0..cfg.n_critic {
                            let mut feats: BTreeMap<usize, Tensor<S>> = BTreeMap::new();
                            for p in &self.pairs {
                                for k in [p.source, p.target] {
                                    if let std::collections::btree_map::Entry::Vacant(e) = feats.entry(k) {
                                        let picks = critic_cyclers[k].next_batch();
                                        e.insert(self.features(&params, k, &picks)?);
                                    }
                                }
                            }
                            step_obj = 0.0;
                            for (p, critic) in self.pairs.iter().zip(critics.iter_mut()) {
                                let obj = critic
                                    .ascent_step(&feats[&p.source], &feats[&p.target])
                                    .map_err(|e| numeric(format!("critic update: {e}")))?;
                                step_obj += obj.as_f64();
                            }
                        }
                        critic_sum += step_obj;
                    }

                    let (loss, grads) = self.descent(&params, &batches, &critics)?;
                    if !loss.is_finite() {
                        return Err(numeric(format!("non-finite loss {:?}", loss.as_f64())));
                    }
                    adam.step(params.params_mut(), &grads).map_err(|e| match e {
                        EngineError::NonFiniteGradient { .. } => numeric(e.to_string()),
                        other => TrainError::Engine(other),
                    })?;
                    loss_sum += loss.as_f64();
                }
                let (dev, dev_macro) = self.dev_scores(&params)?;
                consider(&params, epoch, dev_macro);
                log::info!(
                    "{} grid {g} epoch {epoch}: loss {:.4}, dev ADR-RES {dev_macro:.2}",
                    self.method,
                    loss_sum / steps.max(1) as f64
                );
                log.push(EpochRecord {
                    method: self.method,
                    grid_index: g,
                    lr,
                    weight_decay: l2,
                    epoch,
                    steps,
                    train_loss: Some(loss_sum / steps.max(1) as f64),
                    critic_objective: (!self.pairs.is_empty()).then(|| critic_sum / steps.max(1) as f64),
                    dev_adr_res: dev,
                    dev_macro_adr_res: dev_macro,
                });
            }
        }
        Ok((best.expect("grid is non-empty"), log))
    }

    fn outcome(
        &self,
        init: &DynamicModelParams<S>,
        replacement_targets: Vec<String>,
    ) -> Result<TrainOutcome<S>, TrainError> {
        let (best, log) = self.run(init)?;
        // The worker count is left out so checkpoints do not depend on it.
        let config = TrainConfig {
            method: self.method,
            jobs: 1,
            ..self.cfg.clone()
        };
        let meta = CheckpointMeta {
            method: self.method.to_string(),
            languages: self.langs.iter().map(|l| l.lang.clone()).collect(),
            replacement_targets,
            seed: self.cfg.seed,
            lr: Some(best.lr),
            weight_decay: Some(best.weight_decay),
            epoch: Some(best.epoch),
            dev_adr_res: Some(best.score),
            config: serde_json::to_value(&config).expect("config serializes"),
        };
        Ok(TrainOutcome {
            checkpoint: Checkpoint::new(meta, best.params),
            log,
        })
    }
}

/// Fresh parameters for `cfg`, drawn from the `init` stream of its seed.
pub fn fresh_params<S: Scalar>(cfg: &TrainConfig) -> DynamicModelParams<S> {
    DynamicModelParams::init(cfg.dims(), &mut rng::stream(cfg.seed, "init"))
}

/// Supervised training for `trgonly` (target languages) or `enonly` (source
/// languages). Starts from `init` when given, else from fresh parameters.
pub fn train<S: Scalar>(
    cfg: &TrainConfig,
    data: &[LanguageData<S>],
    init: Option<&DynamicModelParams<S>>,
) -> Result<TrainOutcome<S>, TrainError> {
    let targets = match cfg.method {
        Method::Trgonly => Vec::new(),
        Method::Enonly => cfg.targets.clone(),
        other => {
            return Err(TrainError::Config(format!(
                "train handles trgonly and enonly, not {other}"
            )))
        }
    };
    let run = Run::new(cfg, cfg.method, data)?;
    let fresh;
    let init = match init {
        Some(p) => p,
        None => {
            fresh = fresh_params(cfg);
            &fresh
        }
    };
    run.outcome(init, targets)
}

/// Continues training `pretrained` on the target languages, each read
/// through its own table.
pub fn fine_tune<S: Scalar>(
    cfg: &TrainConfig,
    data: &[LanguageData<S>],
    pretrained: &Checkpoint<S>,
) -> Result<TrainOutcome<S>, TrainError> {
    Run::new(cfg, Method::Finetune, data)?.outcome(&pretrained.params, Vec::new())
}

/// Summed loss over sources and targets.
pub fn joint_train<S: Scalar>(
    cfg: &TrainConfig,
    data: &[LanguageData<S>],
    init: &Checkpoint<S>,
) -> Result<TrainOutcome<S>, TrainError> {
    Run::new(cfg, Method::Joint, data)?.outcome(&init.params, Vec::new())
}

/// Joint loss plus `λ Σ_(s,t)` critic objectives.
pub fn wgan_train<S: Scalar>(
    cfg: &TrainConfig,
    data: &[LanguageData<S>],
    init: &Checkpoint<S>,
) -> Result<TrainOutcome<S>, TrainError> {
    Run::new(cfg, Method::Wgan, data)?.outcome(&init.params, Vec::new())
}

/// Dispatches on `cfg.method`, enforcing the initialisation chain.
pub fn run_method<S: Scalar>(
    cfg: &TrainConfig,
    data: &[LanguageData<S>],
    init: Option<&Checkpoint<S>>,
) -> Result<TrainOutcome<S>, TrainError> {
    let missing = || TrainError::MissingInit {
        method: cfg.method,
        prerequisite: cfg.method.prerequisite().expect("method needs an init"),
    };
    match cfg.method {
        Method::Trgonly | Method::Enonly => train(cfg, data, init.map(|c| &c.params)),
        Method::Finetune => fine_tune(cfg, data, init.ok_or_else(missing)?),
        Method::Joint => joint_train(cfg, data, init.ok_or_else(missing)?),
        Method::Wgan => wgan_train(cfg, data, init.ok_or_else(missing)?),
    }
}

/// Objective of one descent step and its gradient.
///
/// `batches[k]` holds language `k`'s mini-batch and table. The objective is
/// `Σ_k mean_i CE(x_ki)` plus, for every `(s, t, critic)`,
/// `λ (mean g(h_s) − mean g(h_t))` over the same batches' features, with the
/// critics held fixed. Per-sample gradients are summed in sample order.
fn descent_objective<S: Scalar>(
    params: &DynamicModelParams<S>,
    batches: &[(&EmbeddingTable<S>, Vec<&Sample>)],
    adversarial: &[(usize, usize, &Critic<S>)],
    lambda: f64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(S, Gradients<S>), TrainError> {
    let mut work: Vec<(usize, &Sample)> = Vec::new();
    for (k, (_, batch)) in batches.iter().enumerate() {
        work.extend(batch.iter().map(|&s| (k, s)));
    }
    let lambda = S::of(lambda);
    let per_sample = |&(k, sample): &(usize, &Sample)| -> Result<(S, Gradients<S>), TrainError> {
        let (table, batch) = &batches[k];
        let weight = S::one() / S::of(batch.len() as f64);
        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, params, true);
        let graph = forward_sample(&mut tape, &vars, table, sample)?;
        let ce = sample_loss_on_tape(&mut tape, &graph, sample)?;
        let mut total = tape.scale(ce, weight);
        for &(source, target, critic) in adversarial {
            let sign = if source == k {
                S::one()
            } else if target == k {
                -S::one()
            } else {
                continue;
            };
            let cv = critic.register(&mut tape, false);
            let g = Critic::forward_on_tape(&mut tape, &cv, graph.features)?;
            let g = tape.sum(g);
            let g = tape.scale(g, sign * lambda * weight);
            total = tape.add(total, g)?;
        }
        let value = tape.value(total).item();
        Ok((value, tape.backward(total)?))
    };
    let results: Vec<_> = match pool {
        Some(pool) => pool.install(|| work.par_iter().map(per_sample).collect()),
        None => work.iter().map(per_sample).collect(),
    };
    let mut loss = S::zero();
    let mut grads = Gradients::default();
    for r in results {
        let (v, g) = r?;
        loss += v;
        grads.merge(g);
    }
    Ok((loss, grads))
}

/// The summed per-language training loss exactly as one joint training step
/// computes it, with its gradient.
pub fn joint_objective<S: Scalar>(
    params: &DynamicModelParams<S>,
    batches: &[(&EmbeddingTable<S>, &[Sample])],
) -> Result<(S, Gradients<S>), TrainError> {
    let parts: Vec<(&EmbeddingTable<S>, Vec<&Sample>)> =
        batches.iter().map(|(t, b)| (*t, b.iter().collect())).collect();
    descent_objective(params, &parts, &[], 0.0, None)
}
