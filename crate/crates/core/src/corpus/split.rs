use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::rng;

/// Train/dev/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.9,
            dev: 0.05,
            test: 0.05,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(CorpusError::InvalidSplit(format!("fractions must be positive, got {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!("fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Minimum number of items a split accepts.
pub const MIN_SPLIT_ITEMS: usize = 20;

/// Shuffles `items` under the spec's seed and cuts them into train, dev and
/// test. Dev and test sizes are the rounded fractions; train takes the rest.
pub fn split_dataset<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>), CorpusError> {
    spec.validate()?;
    let n = items.len();
    if n < MIN_SPLIT_ITEMS {
        return Err(CorpusError::InvalidSplit(format!(
            "need at least {MIN_SPLIT_ITEMS} items, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, "split"));
    let n_dev = (n as f64 * spec.dev).round() as usize;
    let n_test = (n as f64 * spec.test).round() as usize;
    let n_train = n - n_dev - n_test;
    let pick = |range: &[usize]| -> Vec<T> { range.iter().map(|&i| items[i].clone()).collect() };
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}
