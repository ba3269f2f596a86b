//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` doubles as a
//! report.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use mars_core::baselines::{chance_select, TfidfIndex};
use mars_core::corpus::{
    extract_samples, parse_corpus_str, split_dataset, ContextUtterance, ResponsePool, Sample, SampleConfig, SplitSpec,
};
use mars_core::engine::{gradient_check, Var};
use mars_core::evaluation::{evaluate, macro_average, round2, score_predictions, Accuracies, EvalReport};
use mars_core::model::{
    extract_features, forward_sample, predict, sample_scores, ModelDims, ModelError, ModelVars,
};
use mars_core::rng;
use mars_core::synth::{raw_corpus_jsonl, Alignment, SynthSpec};
use mars_core::training::{
    ce_loss, critic_probe, fine_tune, joint_objective, joint_train, sample_loss_on_tape, train, wgan_train, Method,
    ProbeConfig, TrainConfig, TrainOutcome,
};
use mars_core::{Checkpoint, DynamicModel, DynamicModelParams, EmbeddingTable, LanguageData, Tape, Tensor};

#[track_caller]
fn verdict(id: u32, name: &str, ok: bool, detail: impl AsRef<str>) {
    println!("{} criterion {id:>2} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "criterion {id} ({name}) failed: {}", detail.as_ref());
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn language(lang: &str, spec: &SynthSpec, train: usize, dev: usize, sc: SampleConfig) -> LanguageData {
    let all = spec.samples(lang, train + dev, sc).unwrap();
    LanguageData {
        lang: lang.into(),
        train: all[..train].to_vec(),
        dev: all[train..].to_vec(),
        table: Arc::new(spec.table(lang)),
    }
}

fn two_language_config(seed: u64) -> TrainConfig {
    TrainConfig {
        sources: vec!["en".into()],
        targets: vec!["de".into()],
        seed,
        batch_size: 16,
        lr_grid: vec![0.01],
        l2_grid: vec![0.0],
        embed_dim: 8,
        ..TrainConfig::default()
    }
}

fn features(params: &DynamicModelParams, table: &EmbeddingTable, samples: &[Sample]) -> Tensor {
    let mut data = Vec::new();
    for s in samples {
        data.extend(extract_features(params, table, s).unwrap().h);
    }
    let cols = data.len() / samples.len();
    Tensor::new(vec![samples.len(), cols], data).unwrap()
}

#[test]
fn c01_gradient_correctness() {
    let started = Instant::now();
    let dims = ModelDims {
        embed_dim: 8,
        state_dim: 6,
    };
    let mut r = rng::seeded(101);
    // A random point away from the small-weight start, where gate
    // gradients are large enough to sit above finite-difference roundoff.
    let mut params = DynamicModelParams::init(dims, &mut r);
    let ids: Vec<_> = params.params().ids().collect();
    for id in ids {
        let shape = params.params().get(id).shape().to_vec();
        *params.params_mut().get_mut(id) = Tensor::uniform(shape, 0.9, &mut r);
    }
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let table = EmbeddingTable::from_rows("xx", &words, Tensor::uniform(vec![20, 8], 1.0, &mut r)).unwrap();
    let toks = |ids: &[usize]| ids.iter().map(|&i| words[i].clone()).collect::<Vec<_>>();
    let sample = Sample {
        lang: "xx".into(),
        responder: "carol".into(),
        agents: vec!["alice".into(), "bob".into()],
        context: vec![
            ContextUtterance {
                speaker: "alice".into(),
                tokens: toks(&[1, 4, 7]),
            },
            ContextUtterance {
                speaker: "carol".into(),
                tokens: toks(&[2, 19]),
            },
            ContextUtterance {
                speaker: "bob".into(),
                tokens: toks(&[5, 5, 11, 0]),
            },
        ],
        candidates: vec![toks(&[3, 8, 13]), toks(&[16, 9])],
        truth_addressee: "bob".into(),
        truth_index: 1,
    };
    sample.validate().unwrap();
    let loss = |tape: &mut Tape, all: &[Var]| -> Result<Var, ModelError> {
        let vars = ModelVars::from_vars(&params, all);
        let graph = forward_sample(tape, &vars, &table, &sample)?;
        sample_loss_on_tape(tape, &graph, &sample).map_err(|e| ModelError::Incompatible(e.to_string()))
    };
    let report = gradient_check(params.params(), 1e-5, &loss).unwrap();
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let all_flow = report.params.iter().all(|p| p.max_abs_grad > 0.0);
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient correctness",
        worst.max_rel_error < 1e-4 && all_flow && report.params.len() == 29 && elapsed < 30.0,
        format!(
            "{} parameter groups, worst `{}` rel err {:.2e}, all receive gradient: {all_flow}, {elapsed:.1}s",
            report.params.len(),
            worst.name,
            worst.max_rel_error
        ),
    );
}

#[test]
fn c02_chance_fixture() {
    let spec = SynthSpec::default();
    let mut results = Vec::new();
    for (r_size, target, tol) in [(2, 50.0, 1.0), (10, 10.0, 0.6)] {
        let samples = spec
            .samples(
                "en",
                10_000,
                SampleConfig {
                    r_size,
                    context_len: 15,
                },
            )
            .unwrap();
        let mut r = rng::stream(0, &format!("chance/{r_size}"));
        let predictions: Vec<_> = samples.iter().map(|s| chance_select(s, &mut r)).collect();
        let report = score_predictions(&samples, &predictions).unwrap();
        results.push((r_size, report.accuracy.res, (report.accuracy.res - target).abs() <= tol, target, tol));
    }
    let detail = results
        .iter()
        .map(|(k, res, _, t, tol)| format!("|R|={k}: RES {res:.2} (want {t:.2} ± {tol})"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(2, "chance fixture", results.iter().all(|r| r.2), detail);
}

#[test]
fn c03_macro_average_fixtures() {
    let acc = |x: f64| Accuracies {
        adr_res: x,
        adr: x,
        res: x,
    };
    let five: Vec<_> = [53.88, 63.18, 44.19, 52.02, 47.28].into_iter().map(acc).collect();
    let two: Vec<_> = [55.23, 65.17].into_iter().map(acc).collect();
    let m5 = macro_average(&five).unwrap().adr_res;
    let m2 = macro_average(&two).unwrap().adr_res;
    let ok = format!("{m5:.2}") == "52.11" && format!("{m2:.2}") == "60.20" && m5 == round2(m5) && m2 == round2(m2);
    verdict(3, "macro-average fixtures", ok, format!("{m5:.2} and {m2:.2}"));
}

#[test]
fn c04_overfit_sanity() {
    let started = Instant::now();
    let spec = SynthSpec {
        langs: vec!["xx".into()],
        ..SynthSpec::default()
    };
    let sc = SampleConfig {
        r_size: 2,
        context_len: 5,
    };
    let samples = spec.samples("xx", 50, sc).unwrap();
    let table = Arc::new(spec.table("xx"));
    let data = LanguageData {
        lang: "xx".into(),
        train: samples.clone(),
        dev: samples.clone(),
        table: table.clone(),
    };
    let cfg = TrainConfig {
        method: Method::Trgonly,
        sources: vec![],
        targets: vec!["xx".into()],
        batch_size: 10,
        max_epochs: 200,
        lr_grid: vec![0.001],
        l2_grid: vec![0.0],
        embed_dim: 8,
        state_dim: 16,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &[data], None).unwrap();
    let model = DynamicModel::new(out.checkpoint.params.clone(), table).unwrap();
    let acc = evaluate(&model, &samples).unwrap().accuracy;
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        4,
        "overfit sanity",
        acc.adr_res >= 95.0 && elapsed < 120.0,
        format!(
            "train ADR-RES {:.2} (ADR {:.2}, RES {:.2}) after best epoch {:?} of 200, {elapsed:.1}s",
            acc.adr_res,
            acc.adr,
            acc.res,
            out.checkpoint.meta.epoch
        ),
    );
}

#[test]
fn c05_critic_oracle() {
    let started = Instant::now();
    const DIM: usize = 512;
    const N: usize = 256;
    let gaussian = |shift: f64, r: &mut rng::Rng| -> Tensor {
        let mut data = vec![0.0; N * DIM];
        for i in 0..N {
            data[i * DIM] = r.sample::<f64, _>(StandardNormal) + shift;
        }
        Tensor::new(vec![N, DIM], data).unwrap()
    };
    let shifts = [0.0, 1.0, 2.0];
    let mut per_shift = vec![Vec::new(); shifts.len()];
    for seed in 0..5u64 {
        let mut r = rng::stream(seed, "oracle/data");
        for (k, &m) in shifts.iter().enumerate() {
            let target = gaussian(0.0, &mut r);
            let source = gaussian(m, &mut r);
            let cfg = ProbeConfig {
                seed,
                ..ProbeConfig::default()
            };
            per_shift[k].push(critic_probe(&source, &target, &cfg).unwrap());
        }
    }
    let med: Vec<f64> = per_shift.into_iter().map(median).collect();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = med[0] < 0.05 && med[0] < med[1] && med[1] < med[2] && elapsed < 120.0;
    verdict(
        5,
        "W-GAN critic oracle",
        ok,
        format!(
            "median objective m=0: {:.5}, m=1: {:.5}, m=2: {:.5} (hidden 512, clip 0.01), {elapsed:.1}s",
            med[0], med[1], med[2]
        ),
    );
}

#[test]
fn c06_adversarial_alignment() {
    let started = Instant::now();
    let sc = SampleConfig {
        r_size: 2,
        context_len: 5,
    };
    let mut lines = Vec::new();
    let mut reduced = 0;
    for seed in 0..5u64 {
        let spec = SynthSpec {
            alignment: Alignment::Rotated,
            utterances_per_doc: 8,
            seed,
            ..SynthSpec::default()
        };
        let data = vec![language("en", &spec, 600, 100, sc), language("de", &spec, 200, 100, sc)];
        let base = TrainConfig {
            max_epochs: 6,
            state_dim: 8,
            lambda: 3.0,
            clip: 0.1,
            critic_hidden: 64,
            critic_lr: 0.005,
            ..two_language_config(seed)
        };
        let source = train(
            &TrainConfig {
                method: Method::Enonly,
                ..base.clone()
            },
            &data,
            None,
        )
        .unwrap();
        let ft = fine_tune(&base, &data, &source.checkpoint).unwrap().checkpoint;
        let wgan = wgan_train(
            &TrainConfig {
                max_epochs: 4,
                ..base.clone()
            },
            &data,
            &ft,
        )
        .unwrap()
        .checkpoint;
        let probe = ProbeConfig {
            hidden: 64,
            clip: 0.1,
            lr: 0.005,
            steps: 1000,
            batch_size: 128,
            seed: 1000 + seed,
        };
        let distance = |p: &DynamicModelParams| {
            let s = features(p, &data[0].table, &data[0].train);
            let t = features(p, &data[1].table, &data[1].train);
            critic_probe(&s, &t, &probe).unwrap()
        };
        let (before, after) = (distance(&ft.params), distance(&wgan.params));
        if after < before {
            reduced += 1;
        }
        lines.push(format!("seed {seed}: {before:.4} -> {after:.4}"));
    }
    verdict(
        6,
        "adversarial alignment",
        reduced >= 4,
        format!(
            "probed distance reduced in {reduced}/5 seeds [{}], {:.1}s",
            lines.join("; "),
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn c07_transfer_direction() {
    let started = Instant::now();
    let sc = SampleConfig {
        r_size: 2,
        context_len: 5,
    };
    let (mut ft_scores, mut trg_scores) = (Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let spec = SynthSpec {
            seed,
            ..SynthSpec::default()
        };
        let data = vec![language("en", &spec, 10_000, 300, sc), language("de", &spec, 500, 300, sc)];
        let base = TrainConfig {
            batch_size: 32,
            max_epochs: 6,
            state_dim: 16,
            ..two_language_config(seed)
        };
        let source = train(
            &TrainConfig {
                method: Method::Enonly,
                max_epochs: 2,
                ..base.clone()
            },
            &data,
            None,
        )
        .unwrap();
        let ft = fine_tune(&base, &data, &source.checkpoint).unwrap();
        let trg = train(
            &TrainConfig {
                method: Method::Trgonly,
                ..base.clone()
            },
            &data,
            None,
        )
        .unwrap();
        ft_scores.push(ft.checkpoint.meta.dev_adr_res.unwrap());
        trg_scores.push(trg.checkpoint.meta.dev_adr_res.unwrap());
    }
    let detail = format!(
        "median dev ADR-RES fine_tune {:.2} {ft_scores:?} vs trgonly {:.2} {trg_scores:?}, {:.1}s",
        median(ft_scores.clone()),
        median(trg_scores.clone()),
        started.elapsed().as_secs_f64()
    );
    verdict(7, "transfer direction", median(ft_scores) >= median(trg_scores), detail);
}

fn losses(out: &TrainOutcome<f64>) -> Vec<Option<f64>> {
    out.log.iter().map(|r| r.train_loss).collect()
}

#[test]
fn c08_degeneracy_identities() {
    let sc = SampleConfig {
        r_size: 2,
        context_len: 5,
    };
    let spec = SynthSpec {
        alignment: Alignment::Rotated,
        ..SynthSpec::default()
    };
    let data = vec![language("en", &spec, 60, 20, sc), language("de", &spec, 40, 20, sc)];
    let base = TrainConfig {
        max_epochs: 3,
        state_dim: 6,
        n_critic: 2,
        critic_hidden: 16,
        ..two_language_config(5)
    };
    let init = Checkpoint::new(Default::default(), mars_core::training::fresh_params(&base));

    let zero = TrainConfig {
        lambda: 0.0,
        ..base.clone()
    };
    let w = wgan_train(&zero, &data, &init).unwrap();
    let j = joint_train(&zero, &data, &init).unwrap();
    let dev = |o: &TrainOutcome<f64>| o.log.iter().map(|r| r.dev_adr_res.clone()).collect::<Vec<_>>();
    let wgan_is_joint = w.checkpoint.params == j.checkpoint.params && losses(&w) == losses(&j) && dev(&w) == dev(&j);

    let solo = TrainConfig {
        sources: vec![],
        ..base.clone()
    };
    let jt = joint_train(&solo, &data, &init).unwrap();
    let tr = train(
        &TrainConfig {
            method: Method::Trgonly,
            ..base.clone()
        },
        &data,
        Some(&init.params),
    )
    .unwrap();
    let joint_is_train = jt.checkpoint.params == tr.checkpoint.params && losses(&jt) == losses(&tr);

    let table = data[0].table.clone();
    let mut model = DynamicModel::new(w.checkpoint.params.clone(), table.clone()).unwrap();
    let before: Vec<_> = data[0].dev.iter().map(|s| sample_scores(model.params(), &table, s).unwrap()).collect();
    let preds: Vec<_> = data[0].dev.iter().map(|s| model.predict(s).unwrap()).collect();
    model.replace_table(Arc::new((*table).clone())).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let identical = data[0].dev.iter().zip(&before).zip(&preds).all(|((s, b), p)| {
        let a = sample_scores(model.params(), model.table(), s).unwrap();
        bits(&a.addressee_logits) == bits(&b.addressee_logits)
            && bits(&a.response_logits) == bits(&b.response_logits)
            && model.predict(s).unwrap() == *p
            && predict(model.params(), model.table(), s).unwrap() == *p
    }) && model.params() == &w.checkpoint.params;

    verdict(
        8,
        "degeneracy identities",
        wgan_is_joint && joint_is_train && identical,
        format!(
            "λ=0 wgan ≡ joint: {wgan_is_joint}, single-language joint ≡ train: {joint_is_train}, identity replacement bit-identical: {identical}"
        ),
    );
}

#[test]
fn c09_joint_loss_linearity() {
    let sc = SampleConfig {
        r_size: 10,
        context_len: 6,
    };
    let spec = SynthSpec {
        langs: vec!["en".into(), "de".into(), "fr".into()],
        alignment: Alignment::Rotated,
        ..SynthSpec::default()
    };
    let data: Vec<_> = [("en", 30), ("de", 17), ("fr", 8)]
        .into_iter()
        .map(|(l, n)| language(l, &spec, n, 0, sc))
        .collect();
    let params = DynamicModelParams::init(
        ModelDims {
            embed_dim: 8,
            state_dim: 5,
        },
        &mut rng::seeded(9),
    );
    let batches: Vec<(&EmbeddingTable, &[Sample])> = data.iter().map(|d| (&*d.table, &d.train[..])).collect();
    let (joint, _) = joint_objective(&params, &batches).unwrap();
    let sum: f64 = data.iter().map(|d| ce_loss(&params, &d.table, &d.train).unwrap()).sum();
    let diff = (joint - sum).abs();
    verdict(
        9,
        "joint-loss linearity",
        diff <= 1e-12,
        format!("joint {joint:.15} vs summed {sum:.15}, |diff| = {diff:.1e}"),
    );
}

/// Dense, index-based TF-IDF written without the library's data structures.
fn brute_force_ranking(docs: &[Vec<String>], sample: &Sample) -> Vec<usize> {
    let lower = |ts: &[String]| ts.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>();
    let docs: Vec<Vec<String>> = docs.iter().map(|d| lower(d)).collect();
    let context: Vec<String> = sample.context.iter().flat_map(|u| lower(&u.tokens)).collect();
    let candidates: Vec<Vec<String>> = sample.candidates.iter().map(|c| lower(c)).collect();
    let mut vocab: Vec<String> = docs.iter().chain(&candidates).flatten().chain(&context).cloned().collect();
    vocab.sort();
    vocab.dedup();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|w| {
            let df = docs.iter().filter(|d| d.contains(w)).count().max(1) as f64;
            (n / df).ln()
        })
        .collect();
    let dense = |tokens: &[String]| -> Vec<f64> {
        vocab
            .iter()
            .zip(&idf)
            .map(|(w, i)| tokens.iter().filter(|t| *t == w).count() as f64 * i)
            .collect()
    };
    let q = dense(&context);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let v = dense(c);
            let (nq, nv) = (norm(&q), norm(&v));
            if nq == 0.0 || nv == 0.0 {
                0.0
            } else {
                q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / (nq * nv)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Selection sort: highest score first, lowest index among equals.
    let mut out = Vec::new();
    while !order.is_empty() {
        let mut best = 0;
        for k in 1..order.len() {
            if scores[order[k]] > scores[order[best]] {
                best = k;
            }
        }
        out.push(order.remove(best));
    }
    out
}

#[test]
fn c10_tfidf_oracle() {
    let mut r = rng::seeded(42);
    let vocab = ["Alpha", "beta", "GAMMA", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu"];
    let speakers = ["u1", "u2", "u3", "u4"];
    let words = |r: &mut rng::Rng, lo: usize, hi: usize| -> Vec<String> {
        let n = r.random_range(lo..=hi);
        (0..n)
            .map(|_| {
                let w = *vocab.choose(r).unwrap();
                if r.random_bool(0.3) {
                    w.to_uppercase()
                } else {
                    w.to_string()
                }
            })
            .collect()
    };
    let samples: Vec<Sample> = (0..50)
        .map(|_| {
            let r_size = if r.random_bool(0.5) { 2 } else { 10 };
            let context: Vec<ContextUtterance> = (0..r.random_range(1..=4))
                .map(|_| ContextUtterance {
                    speaker: speakers[r.random_range(1..4)].to_string(),
                    tokens: words(&mut r, 1, 5),
                })
                .collect();
            let mut agents: Vec<String> = context.iter().map(|u| u.speaker.clone()).collect();
            agents.sort();
            agents.dedup();
            Sample {
                lang: "xx".into(),
                responder: "u0".into(),
                truth_addressee: agents[0].clone(),
                agents,
                context,
                candidates: (0..r_size).map(|_| words(&mut r, 1, 4)).collect(),
                truth_index: r.random_range(0..r_size),
            }
        })
        .collect();
    let docs: Vec<Vec<String>> = samples.iter().flat_map(|s| s.candidates.clone()).collect();
    let index = TfidfIndex::from_samples(&samples);
    let mismatches = samples
        .iter()
        .filter(|s| index.ranking(s) != brute_force_ranking(&docs, s) || index.rank(s) != brute_force_ranking(&docs, s)[0])
        .count();
    verdict(
        10,
        "TF-IDF oracle equivalence",
        mismatches == 0,
        format!("{} samples, {} documents, {mismatches} ranking mismatches", samples.len(), docs.len()),
    );
}

#[test]
fn c11_pipeline_invariants() {
    let spec = SynthSpec {
        agents_per_doc: 4,
        ..SynthSpec::default()
    };
    let convs = parse_corpus_str(&raw_corpus_jsonl(&spec.conversations("en", 100))).unwrap();
    let pool = ResponsePool::new("en", &convs);
    let mut problems = Vec::new();
    let mut total = 0;
    for r_size in [2, 10] {
        let cfg = SampleConfig { r_size, context_len: 4 };
        let mut r = rng::stream(3, &format!("invariants/{r_size}"));
        for c in &convs {
            let samples = extract_samples(c, &pool, cfg, &mut r).unwrap();
            // Independent count of eligible utterances.
            let expected = (1..c.utterances.len())
                .filter(|&t| {
                    let u = &c.utterances[t];
                    let window = &c.utterances[t.saturating_sub(cfg.context_len)..t];
                    u.addressee.as_ref().is_some_and(|a| *a != u.speaker && window.iter().any(|w| &w.speaker == a))
                })
                .count();
            if samples.len() != expected {
                problems.push(format!("{}: {} samples, expected {expected}", c.doc_id, samples.len()));
            }
            let names: BTreeSet<&str> = c.utterances.iter().map(|u| u.speaker.as_str()).collect();
            for s in &samples {
                total += 1;
                let truth = &s.candidates[s.truth_index];
                let leaked = s
                    .context
                    .iter()
                    .flat_map(|u| &u.tokens)
                    .chain(s.candidates.iter().flatten())
                    .any(|t| names.contains(t.trim_end_matches([':', ','])));
                let context_speakers: BTreeSet<&str> = s.context.iter().map(|u| u.speaker.as_str()).collect();
                let ok = s.agents.contains(&s.truth_addressee)
                    && s.truth_addressee != s.responder
                    && context_speakers.contains(s.truth_addressee.as_str())
                    && s.candidates.len() == r_size
                    && s.candidates.iter().filter(|c| *c == truth).count() == 1
                    && !leaked
                    && s.validate().is_ok();
                if !ok {
                    problems.push(format!("{}: bad sample {s:?}", c.doc_id));
                }
            }
        }
    }
    let (tr, dv, te) = split_dataset(&convs, &SplitSpec::default()).unwrap();
    let split_ok = (tr.len(), dv.len(), te.len()) == (90, 5, 5);
    verdict(
        11,
        "pipeline invariants",
        problems.is_empty() && split_ok && total > 0,
        format!(
            "{total} samples checked, {} violations{}, split {}/{}/{}",
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default(),
            tr.len(),
            dv.len(),
            te.len()
        ),
    );
}

/// enonly → finetune → wgan on a fixed seed, with the wgan checkpoint's
/// test report.
fn pipeline_run() -> (Vec<Vec<u8>>, String, String) {
    let sc = SampleConfig {
        r_size: 10,
        context_len: 5,
    };
    let spec = SynthSpec {
        alignment: Alignment::Rotated,
        seed: 7,
        ..SynthSpec::default()
    };
    let data = vec![language("en", &spec, 80, 20, sc), language("de", &spec, 40, 20, sc)];
    let test = spec.samples("de", 140, sc).unwrap()[60..].to_vec();
    let base = TrainConfig {
        max_epochs: 2,
        state_dim: 6,
        n_critic: 2,
        critic_hidden: 16,
        jobs: 2,
        lr_grid: vec![0.01, 0.001],
        ..two_language_config(11)
    };
    let en = train(
        &TrainConfig {
            method: Method::Enonly,
            ..base.clone()
        },
        &data,
        None,
    )
    .unwrap();
    let ft = fine_tune(&base, &data, &en.checkpoint).unwrap();
    let wgan = wgan_train(&base, &data, &ft.checkpoint).unwrap();
    let logs: String = [&en.log, &ft.log, &wgan.log]
        .iter()
        .flat_map(|l| l.iter())
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let model = DynamicModel::new(wgan.checkpoint.params.clone(), data[1].table.clone()).unwrap();
    let report = EvalReport::new("wgan", None, 11, vec![evaluate(&model, &test).unwrap()]).unwrap();
    let checkpoints = [&en, &ft, &wgan].iter().map(|o| o.checkpoint.to_bytes()).collect();
    (checkpoints, logs, report.to_json())
}

#[test]
fn c12_determinism() {
    let a = pipeline_run();
    let b = pipeline_run();
    let ok = a == b;
    verdict(
        12,
        "determinism",
        ok,
        format!(
            "3 checkpoints ({} bytes), {} log lines and the report identical across two runs: {ok}",
            a.0.iter().map(Vec::len).sum::<usize>(),
            a.1.lines().count()
        ),
    );
}
