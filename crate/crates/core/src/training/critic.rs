//! Weight-clipped MLP critics for Wasserstein feature alignment.

use rand::seq::index;

use crate::engine::{clip_params, AdamConfig, AdamState, EngineError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// `g(x) = relu(x W1 + b1) W2 + b2`, one scalar per input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<S> {
    params: ParamSet<S>,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl<S: Scalar> Critic<S> {
    fn from_tensors(w1: Tensor<S>, b1: Tensor<S>, w2: Tensor<S>, b2: Tensor<S>) -> Self {
        let mut params = ParamSet::new();
        let mut add = |name: &str, t| params.insert(name, t).expect("distinct names");
        let (w1, b1, w2, b2) = (add("w1", w1), add("b1", b1), add("w2", w2), add("b2", b2));
        Self { params, w1, b1, w2, b2 }
    }

    /// Uniform weights in `[-clip, clip]`.
    pub fn init(input: usize, hidden: usize, clip: f64, rng: &mut Rng) -> Self {
        Self::from_tensors(
            Tensor::uniform(vec![input, hidden], clip, rng),
            Tensor::uniform(vec![1, hidden], clip, rng),
            Tensor::uniform(vec![hidden, 1], clip, rng),
            Tensor::uniform(vec![1, 1], clip, rng),
        )
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self::from_tensors(
            Tensor::zeros(vec![input, hidden]),
            Tensor::zeros(vec![1, hidden]),
            Tensor::zeros(vec![hidden, 1]),
            Tensor::zeros(vec![1, 1]),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.params.get(self.w1).rows()
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    /// Largest absolute weight, for checking the clip invariant.
    pub fn max_abs(&self) -> S {
        self.params
            .iter()
            .map(|(_, _, t)| t.max_abs())
            .fold(S::zero(), |a, b| a.max(b))
    }

    pub fn register(&self, tape: &mut Tape<S>, trainable: bool) -> CriticVars {
        let all = tape.params(&self.params, trainable);
        CriticVars {
            w1: all[self.w1.0],
            b1: all[self.b1.0],
            w2: all[self.w2.0],
            b2: all[self.b2.0],
        }
    }

    /// Critic outputs for every row of `x` as an `n × 1` column.
    pub fn forward_on_tape(tape: &mut Tape<S>, vars: &CriticVars, x: Var) -> Result<Var, EngineError> {
        let hidden = tape.affine(x, vars.w1, vars.b1)?;
        let hidden = tape.relu(hidden);
        tape.affine(hidden, vars.w2, vars.b2)
    }

    pub fn outputs(&self, x: &Tensor<S>) -> Result<Vec<S>, EngineError> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let x = tape.constant(x.clone());
        let out = Self::forward_on_tape(&mut tape, &vars, x)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// `mean g(h_s) − mean g(h_t)` on the tape.
pub fn objective_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &CriticVars,
    source: Var,
    target: Var,
) -> Result<Var, EngineError> {
    let gs = Critic::forward_on_tape(tape, vars, source)?;
    let gt = Critic::forward_on_tape(tape, vars, target)?;
    let ms = tape.mean(gs);
    let mt = tape.mean(gt);
    tape.sub(ms, mt)
}

/// Estimated Wasserstein distance between two feature batches (rows).
pub fn critic_objective<S: Scalar>(critic: &Critic<S>, source: &Tensor<S>, target: &Tensor<S>) -> Result<S, EngineError> {
    let mut tape = Tape::new();
    let vars = critic.register(&mut tape, false);
    let s = tape.constant(source.clone());
    let t = tape.constant(target.clone());
    let obj = objective_on_tape(&mut tape, &vars, s, t)?;
    Ok(tape.value(obj).item())
}

/// A critic with its optimizer and clip range.
#[derive(Debug, Clone)]
pub struct CriticTrainer<S> {
    pub critic: Critic<S>,
    adam: AdamState<S>,
    clip: f64,
}

impl<S: Scalar> CriticTrainer<S> {
    pub fn new(critic: Critic<S>, lr: f64, clip: f64) -> Result<Self, EngineError> {
        if !(clip > 0.0) {
            return Err(EngineError::InvalidClip(clip));
        }
        let adam = AdamState::new(AdamConfig::with_lr(lr), critic.params());
        Ok(Self { critic, adam, clip })
    }

    /// One ascent step on the objective followed by clipping. Returns the
    /// objective before the update.
    pub fn ascent_step(&mut self, source: &Tensor<S>, target: &Tensor<S>) -> Result<S, EngineError> {
        let mut tape = Tape::new();
        let vars = self.critic.register(&mut tape, true);
        let s = tape.constant(source.clone());
        let t = tape.constant(target.clone());
        let obj = objective_on_tape(&mut tape, &vars, s, t)?;
        let value = tape.value(obj).item();
        let neg = tape.scale(obj, -S::one());
        let grads = tape.backward(neg)?;
        self.adam.step(self.critic.params_mut(), &grads)?;
        clip_params(self.critic.params_mut(), self.clip)?;
        debug_assert!(self.critic.max_abs() <= S::of(self.clip));
        Ok(value)
    }
}

/// Settings for measuring the distance between two fixed feature sets with a
/// freshly trained critic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub clip: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            clip: 0.01,
            lr: 0.0005,
            steps: 300,
            batch_size: 64,
            seed: 0,
        }
    }
}

fn rows<S: Scalar>(x: &Tensor<S>, picks: &[usize]) -> Tensor<S> {
    let mut data = Vec::with_capacity(picks.len() * x.cols());
    for &i in picks {
        data.extend_from_slice(x.row_slice(i));
    }
    Tensor::from_parts(vec![picks.len(), x.cols()], data)
}

/// Trains a new critic on mini-batches of `source` and `target` and returns
/// its objective on the full sets.
pub fn critic_probe<S: Scalar>(source: &Tensor<S>, target: &Tensor<S>, cfg: &ProbeConfig) -> Result<S, EngineError> {
    if source.cols() != target.cols() {
        return Err(EngineError::ShapeMismatch {
            op: "critic probe",
            left: source.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let mut init_rng = rng::stream(cfg.seed, "probe/init");
    let mut batch_rng = rng::stream(cfg.seed, "probe/batches");
    let critic = Critic::init(source.cols(), cfg.hidden, cfg.clip, &mut init_rng);
    let mut trainer = CriticTrainer::new(critic, cfg.lr, cfg.clip)?;
    for _ in 0..cfg.steps {
        let bs = cfg.batch_size.min(source.rows());
        let bt = cfg.batch_size.min(target.rows());
        let s = rows(source, &index::sample(&mut batch_rng, source.rows(), bs).into_vec());
        let t = rows(target, &index::sample(&mut batch_rng, target.rows(), bt).into_vec());
        trainer.ascent_step(&s, &t)?;
    }
    critic_objective(&trainer.critic, source, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
        Tensor::uniform(vec![rows, cols], 1.0, &mut rng::seeded(seed))
    }

    #[test]
    fn identical_batches_give_exactly_zero() {
        let critic = Critic::<f64>::init(6, 8, 0.5, &mut rng::seeded(1));
        let x = random(5, 6, 2);
        assert_eq!(critic_objective(&critic, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn zero_critic_gives_zero() {
        let critic = Critic::<f64>::zeros(6, 8);
        assert_eq!(critic_objective(&critic, &random(4, 6, 1), &random(7, 6, 2)).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_manual_mean_difference() {
        let critic = Critic::<f64>::init(3, 4, 1.0, &mut rng::seeded(3));
        let (s, t) = (random(5, 3, 4), random(2, 3, 5));
        let p = critic.params();
        let g = |x: &[f64]| -> f64 {
            let (w1, b1, w2, b2) = (
                p.by_name("w1").unwrap(),
                p.by_name("b1").unwrap(),
                p.by_name("w2").unwrap(),
                p.by_name("b2").unwrap(),
            );
            let mut out = b2.item();
            for j in 0..4 {
                let mut a = b1.data()[j];
                for (i, xi) in x.iter().enumerate() {
                    a += xi * w1.get(i, j);
                }
                out += a.max(0.0) * w2.get(j, 0);
            }
            out
        };
        let mean = |m: &Tensor<f64>| (0..m.rows()).map(|i| g(m.row_slice(i))).sum::<f64>() / m.rows() as f64;
        let want = mean(&s) - mean(&t);
        assert!((critic_objective(&critic, &s, &t).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn weights_stay_clipped_after_every_step() {
        let mut tr = CriticTrainer::new(Critic::<f64>::init(4, 16, 0.01, &mut rng::seeded(6)), 0.05, 0.01).unwrap();
        let (s, t) = (random(8, 4, 7), random(8, 4, 8));
        for _ in 0..20 {
            tr.ascent_step(&s, &t).unwrap();
            assert!(tr.critic.max_abs() <= 0.01);
        }
    }

    #[test]
    fn probe_separates_shifted_gaussians() {
        let mut r = rng::seeded(9);
        let mut normal = |shift: f64| -> Tensor<f64> {
            let data: Vec<f64> = (0..200)
                .flat_map(|_| [r.sample::<f64, _>(StandardNormal) + shift, 0.0, 0.0])
                .collect();
            Tensor::new(vec![200, 3], data).unwrap()
        };
        let base = normal(0.0);
        let (near, far) = (normal(0.0), normal(2.0));
        let cfg = ProbeConfig {
            hidden: 32,
            clip: 0.1,
            lr: 0.01,
            steps: 150,
            ..ProbeConfig::default()
        };
        let d_near = critic_probe(&far, &base, &cfg).unwrap();
        let d_same = critic_probe(&near, &base, &cfg).unwrap();
        assert!(d_near > d_same.abs() * 3.0, "{d_near} vs {d_same}");
    }
}
