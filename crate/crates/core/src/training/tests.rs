use std::sync::Arc;

use super::*;
use crate::corpus::{Sample, SampleConfig};
use crate::engine::Tape;
use crate::model::{forward_sample, Checkpoint, CheckpointMeta, DynamicModelParams, ModelDims, ModelVars};
use crate::rng;
use crate::synth::SynthSpec;

const SC: SampleConfig = SampleConfig {
    r_size: 2,
    context_len: 4,
};

fn spec() -> SynthSpec {
    SynthSpec {
        langs: vec!["en".into(), "de".into()],
        utterances_per_doc: 6,
        ..SynthSpec::default()
    }
}

fn data(lang: &str, n_train: usize, n_dev: usize) -> LanguageData<f64> {
    let all = spec().samples(lang, n_train + n_dev, SC).unwrap();
    LanguageData {
        lang: lang.into(),
        train: all[..n_train].to_vec(),
        dev: all[n_train..].to_vec(),
        table: Arc::new(spec().table(lang)),
    }
}

fn cfg(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        sources: vec!["en".into()],
        targets: vec!["de".into()],
        batch_size: 4,
        max_epochs: 2,
        lr_grid: vec![0.01],
        l2_grid: vec![0.001],
        n_critic: 2,
        critic_hidden: 8,
        critic_lr: 0.01,
        embed_dim: 8,
        state_dim: 4,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn params(seed: u64) -> DynamicModelParams<f64> {
    DynamicModelParams::init(
        ModelDims {
            embed_dim: 8,
            state_dim: 4,
        },
        &mut rng::seeded(seed),
    )
}

fn checkpoint(p: DynamicModelParams<f64>) -> Checkpoint<f64> {
    Checkpoint::new(CheckpointMeta::default(), p)
}

/// Scores every addressee and response logit as zero.
fn zero_scorers(mut p: DynamicModelParams<f64>) -> DynamicModelParams<f64> {
    for name in ["w_a", "w_r"] {
        let id = p.params().id(name).unwrap();
        let shape = p.params().get(id).shape().to_vec();
        *p.params_mut().get_mut(id) = crate::engine::Tensor::zeros(shape);
    }
    p
}

#[test]
fn half_scores_give_four_ln2() {
    let d = data("en", 10, 0);
    let two_agents: Vec<Sample> = d.train.iter().filter(|s| s.agents.len() == 2).take(3).cloned().collect();
    assert!(!two_agents.is_empty());
    let loss = ce_loss(&zero_scorers(params(1)), &d.table, &two_agents).unwrap();
    assert!((loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
}

#[test]
fn perfect_scores_give_near_zero_loss() {
    let d = data("en", 4, 0);
    let s = &d.train[0];
    let p = params(2);
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, &p, false);
    let graph = forward_sample(&mut tape, &vars, &d.table, s).unwrap();
    // Replace the logits by huge values of the right sign.
    let truth = s.truth_addressee_index().unwrap();
    let adr: Vec<f64> = (0..s.agents.len()).map(|i| if i == truth { 80.0 } else { -80.0 }).collect();
    let res: Vec<f64> = (0..s.candidates.len())
        .map(|j| if j == s.truth_index { 80.0 } else { -80.0 })
        .collect();
    let fake = crate::model::SampleGraph {
        features: graph.features,
        addressee_logits: tape.constant(crate::engine::Tensor::row(adr).unwrap()),
        response_logits: tape.constant(crate::engine::Tensor::row(res).unwrap()),
    };
    let loss = sample_loss_on_tape(&mut tape, &fake, s).unwrap();
    assert!(tape.value(loss).item() < 1e-10);
}

#[test]
fn ce_loss_matches_per_term_recomputation() {
    let d = data("en", 6, 0);
    let p = params(3);
    let mut total = 0.0;
    for s in &d.train {
        let scores = crate::model::sample_scores(&p, &d.table, s).unwrap();
        let clamp = |x: f64| x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        for (i, &q) in scores.addressee_probs.iter().enumerate() {
            let is_truth = s.agents[i] == s.truth_addressee;
            total -= if is_truth { clamp(q).ln() } else { (1.0 - clamp(q)).ln() };
        }
        for (j, &q) in scores.response_probs.iter().enumerate() {
            total -= if j == s.truth_index { clamp(q).ln() } else { (1.0 - clamp(q)).ln() };
        }
    }
    let want = total / d.train.len() as f64;
    assert!((ce_loss(&p, &d.table, &d.train).unwrap() - want).abs() < 1e-12);
}

#[test]
fn zero_epochs_return_the_initial_parameters() {
    let de = data("de", 12, 4);
    let init = params(4);
    let c = TrainConfig {
        max_epochs: 0,
        ..cfg(Method::Trgonly)
    };
    let out = train(&c, std::slice::from_ref(&de), Some(&init)).unwrap();
    assert_eq!(out.checkpoint.params, init);
    assert_eq!(out.checkpoint.meta.epoch, Some(0));
    let ft = fine_tune(&c, &[de], &checkpoint(init.clone())).unwrap();
    assert_eq!(ft.checkpoint.params, init);
}

#[test]
fn training_is_deterministic_and_leaves_tables_untouched() {
    let de = data("de", 12, 4);
    let before = (*de.table).clone();
    let c = cfg(Method::Trgonly);
    let a = train(&c, std::slice::from_ref(&de), None).unwrap();
    let b = train(&c, std::slice::from_ref(&de), None).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.log, b.log);
    assert_eq!(*de.table, before);
    assert_ne!(a.checkpoint.params, fresh_params::<f64>(&c));
    assert_eq!(a.log.len(), 3);
}

#[test]
fn worker_count_does_not_change_results() {
    let de = data("de", 12, 4);
    let one = train(&cfg(Method::Trgonly), std::slice::from_ref(&de), None).unwrap();
    let three = train(
        &TrainConfig {
            jobs: 3,
            ..cfg(Method::Trgonly)
        },
        &[de],
        None,
    )
    .unwrap();
    assert_eq!(one.checkpoint.params, three.checkpoint.params);
}

#[test]
fn fine_tune_is_train_from_the_same_state() {
    let de = data("de", 12, 4);
    let init = params(5);
    let ft = fine_tune(&cfg(Method::Finetune), std::slice::from_ref(&de), &checkpoint(init.clone())).unwrap();
    let tr = train(&cfg(Method::Trgonly), &[de], Some(&init)).unwrap();
    assert_eq!(ft.checkpoint.params, tr.checkpoint.params);
    let dev = |o: &TrainOutcome<f64>| o.log.iter().map(|r| r.dev_macro_adr_res).collect::<Vec<_>>();
    assert_eq!(dev(&ft), dev(&tr));
}

#[test]
fn single_language_joint_objective_is_the_plain_loss() {
    let en = data("en", 9, 0);
    let p = params(6);
    let (joint, grads) = joint_objective(&p, &[(&en.table, &en.train[..])]).unwrap();
    let plain = ce_loss(&p, &en.table, &en.train).unwrap();
    assert!((joint - plain).abs() < 1e-12);

    let mut tape = Tape::new();
    let all = tape.params(p.params(), true);
    let vars = ModelVars::from_vars(&p, &all);
    let mut terms = Vec::new();
    for s in &en.train {
        let g = forward_sample(&mut tape, &vars, &en.table, s).unwrap();
        terms.push(sample_loss_on_tape(&mut tape, &g, s).unwrap());
    }
    let total = terms[1..].iter().fold(terms[0], |acc, &t| tape.add(acc, t).unwrap());
    let mean = tape.scale(total, 1.0 / en.train.len() as f64);
    let want = tape.backward(mean).unwrap();
    for (id, name, _) in p.params().iter() {
        let (a, b) = (grads.get(id).unwrap(), want.get(id).unwrap());
        let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{name}: {diff}");
    }
}

#[test]
fn single_language_joint_is_train() {
    let de = data("de", 12, 4);
    let init = params(11);
    let tr = train(&cfg(Method::Trgonly), std::slice::from_ref(&de), Some(&init)).unwrap();
    let solo = TrainConfig {
        sources: vec![],
        ..cfg(Method::Joint)
    };
    let jt = joint_train(&solo, &[de], &checkpoint(init)).unwrap();
    assert_eq!(tr.checkpoint.params, jt.checkpoint.params);
    let losses = |o: &TrainOutcome<f64>| o.log.iter().map(|r| r.train_loss).collect::<Vec<_>>();
    assert_eq!(losses(&tr), losses(&jt));
}

#[test]
fn joint_loss_is_the_sum_of_language_losses() {
    let (en, de) = (data("en", 8, 0), data("de", 5, 0));
    let p = params(7);
    let (joint, _) = joint_objective(&p, &[(&en.table, &en.train[..]), (&de.table, &de.train[..])]).unwrap();
    let sum = ce_loss(&p, &en.table, &en.train).unwrap() + ce_loss(&p, &de.table, &de.train).unwrap();
    assert!((joint - sum).abs() < 1e-12, "{joint} vs {sum}");
    let same = joint_loss(&p, &[(&en.table, &en.train[..]), (&en.table, &en.train[..])]).unwrap();
    assert!((same - 2.0 * ce_loss(&p, &en.table, &en.train).unwrap()).abs() < 1e-12);
}

#[test]
fn wgan_with_zero_lambda_follows_joint() {
    let (en, de) = (data("en", 12, 4), data("de", 8, 4));
    let init = checkpoint(params(8));
    let c = TrainConfig {
        lambda: 0.0,
        ..cfg(Method::Wgan)
    };
    let w = wgan_train(&c, &[en.clone(), de.clone()], &init).unwrap();
    let j = joint_train(&c, &[en, de], &init).unwrap();
    assert_eq!(w.checkpoint.params, j.checkpoint.params);
    let losses = |o: &TrainOutcome<f64>| o.log.iter().map(|r| r.train_loss).collect::<Vec<_>>();
    assert_eq!(losses(&w), losses(&j));
    assert!(w.log[1].critic_objective.is_some());
}

#[test]
fn wgan_with_positive_lambda_differs_from_joint() {
    let (en, de) = (data("en", 12, 4), data("de", 8, 4));
    let init = checkpoint(params(9));
    let c = cfg(Method::Wgan);
    let w = wgan_train(&c, &[en.clone(), de.clone()], &init).unwrap();
    let j = joint_train(&c, &[en, de], &init).unwrap();
    assert_ne!(w.log[1].train_loss, j.log[1].train_loss);
}

#[test]
fn method_chain_is_enforced() {
    let de = data("de", 12, 4);
    for m in [Method::Finetune, Method::Joint, Method::Wgan] {
        let err = run_method(&cfg(m), std::slice::from_ref(&de), None).unwrap_err();
        assert!(matches!(err, TrainError::MissingInit { .. }));
        assert!(err.to_string().contains(m.prerequisite().unwrap().as_str()));
    }
}

#[test]
fn incompatible_or_missing_inputs_are_rejected() {
    let de = data("de", 12, 4);
    let wide = DynamicModelParams::init(
        ModelDims {
            embed_dim: 9,
            state_dim: 4,
        },
        &mut rng::seeded(0),
    );
    let err = fine_tune(&cfg(Method::Finetune), std::slice::from_ref(&de), &checkpoint(wide)).unwrap_err();
    assert!(matches!(err, TrainError::Incompatible(_)));

    let mut empty_dev = de.clone();
    empty_dev.dev.clear();
    assert!(matches!(
        train(&cfg(Method::Trgonly), &[empty_dev], None),
        Err(TrainError::Data(_))
    ));
    assert!(matches!(
        train::<f64>(&cfg(Method::Trgonly), &[], None),
        Err(TrainError::Data(_))
    ));
}

#[test]
fn nan_parameters_abort_with_step_diagnostics() {
    let de = data("de", 12, 4);
    let mut bad = params(10);
    let id = bad.params().id("w_r").unwrap();
    bad.params_mut().get_mut(id).data_mut()[0] = f64::NAN;
    let err = fine_tune(&cfg(Method::Finetune), &[de], &checkpoint(bad)).unwrap_err();
    match err {
        TrainError::Numeric { epoch, step, .. } => assert_eq!((epoch, step), (1, 0)),
        other => panic!("unexpected {other}"),
    }
}
