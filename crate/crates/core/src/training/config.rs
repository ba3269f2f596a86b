use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Supervised training on the target languages only.
    Trgonly,
    /// Supervised training on the source languages; the target table is
    /// swapped in at test time.
    Enonly,
    /// Continue from a source-trained checkpoint on the target languages.
    Finetune,
    /// Summed loss over every language, starting from a fine-tuned model.
    Joint,
    /// Joint loss plus Wasserstein critics between source and target features.
    Wgan,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Trgonly,
        Method::Enonly,
        Method::Finetune,
        Method::Joint,
        Method::Wgan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Trgonly => "trgonly",
            Method::Enonly => "enonly",
            Method::Finetune => "finetune",
            Method::Joint => "joint",
            Method::Wgan => "wgan",
        }
    }

    /// Whether the method starts from an existing checkpoint.
    pub fn needs_init(self) -> bool {
        matches!(self, Method::Finetune | Method::Joint | Method::Wgan)
    }

    /// The method whose checkpoint this one expects as initialisation.
    pub fn prerequisite(self) -> Option<Method> {
        match self {
            Method::Finetune => Some(Method::Enonly),
            Method::Joint | Method::Wgan => Some(Method::Finetune),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown method `{s}` (expected trgonly, enonly, finetune, joint or wgan)"))
    }
}

/// Sample files and embedding table for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguagePaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub embeddings: PathBuf,
}

/// Everything a training run needs besides the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_grid: Vec<f64>,
    pub l2_grid: Vec<f64>,
    /// Weight of the adversarial term in the descent objective.
    pub lambda: f64,
    pub n_critic: usize,
    /// Critic weights are clipped to `[-clip, clip]`.
    pub clip: f64,
    pub critic_hidden: usize,
    pub critic_lr: f64,
    pub embed_dim: usize,
    pub state_dim: usize,
    /// Worker threads for per-sample gradients and dev evaluation. Results
    /// do not depend on it.
    pub jobs: usize,
    pub languages: BTreeMap<String, LanguagePaths>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        Self {
            method: Method::Trgonly,
            sources: vec!["en".into()],
            targets: Vec::new(),
            seed: 0,
            batch_size: 32,
            max_epochs: 30,
            lr_grid: vec![0.001, 0.0005, 0.0001],
            l2_grid: vec![0.001, 0.0005, 0.0001],
            lambda: 0.5,
            n_critic: 5,
            clip: 0.01,
            critic_hidden: 512,
            critic_lr: 0.0005,
            embed_dim: dims.embed_dim,
            state_dim: dims.state_dim,
            jobs: 1,
            languages: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            embed_dim: self.embed_dim,
            state_dim: self.state_dim,
        }
    }

    /// Languages whose training data the configured method consumes, sorted.
    pub fn training_languages(&self) -> Vec<String> {
        let mut langs = match self.method {
            Method::Trgonly | Method::Finetune => self.targets.clone(),
            Method::Enonly => self.sources.clone(),
            Method::Joint | Method::Wgan => self.sources.iter().chain(&self.targets).cloned().collect(),
        };
        langs.sort();
        langs.dedup();
        langs
    }

    /// Ordered `(source, target)` pairs, one critic each.
    pub fn critic_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = Vec::new();
        for s in &self.sources {
            for t in &self.targets {
                pairs.push((s.clone(), t.clone()));
            }
        }
        pairs.sort();
        pairs
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.lr_grid.is_empty() || self.l2_grid.is_empty() {
            return bad("lr_grid and l2_grid must not be empty".into());
        }
        if self.lr_grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return bad("learning rates must be positive".into());
        }
        if self.l2_grid.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return bad("weight-decay coefficients must be non-negative".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.n_critic == 0 {
            return bad("n_critic must be at least 1".into());
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.critic_lr > 0.0) || self.critic_hidden == 0 {
            return bad("critic_lr and critic_hidden must be positive".into());
        }
        if self.embed_dim == 0 || self.state_dim == 0 {
            return bad("model dimensions must be positive".into());
        }
        if let Some(x) = self.sources.iter().find(|s| self.targets.contains(s)) {
            return bad(format!("language `{x}` is both a source and a target"));
        }
        let needs_targets = matches!(self.method, Method::Trgonly | Method::Finetune | Method::Wgan);
        if needs_targets && self.targets.is_empty() {
            return bad(format!("method {} needs at least one target language", self.method));
        }
        let needs_sources = matches!(self.method, Method::Enonly | Method::Wgan);
        if needs_sources && self.sources.is_empty() {
            return bad(format!("method {} needs at least one source language", self.method));
        }
        if self.sources.is_empty() && self.targets.is_empty() {
            return bad("no training languages configured".into());
        }
        Ok(())
    }
}
