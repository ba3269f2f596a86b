use rand::seq::SliceRandom;

use crate::rng::{self, Rng};

/// Endless stream of mini-batch index lists over `0..len`.
///
/// Indices are drawn from a shuffled permutation; when it runs out the
/// remainder forms a short batch and the next call reshuffles. A batch
/// therefore never repeats an index.
#[derive(Debug, Clone)]
pub struct BatchCycler {
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: Rng,
}

impl BatchCycler {
    pub fn new(len: usize, batch_size: usize, seed: u64, stream: &str) -> Self {
        assert!(len > 0 && batch_size > 0, "batch cycler over an empty set");
        let mut rng = rng::stream(seed, stream);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            batch_size,
            rng,
        }
    }

    /// Batches needed for one pass over the data.
    pub fn batches_per_pass(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pass_covers_every_index_once() {
        let mut c = BatchCycler::new(10, 4, 1, "x");
        assert_eq!(c.batches_per_pass(), 3);
        let mut seen: Vec<usize> = (0..3).flat_map(|_| c.next_batch()).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(c.next_batch().len(), 4);
    }

    #[test]
    fn same_seed_same_schedule() {
        let mut a = BatchCycler::new(7, 3, 5, "en");
        let mut b = BatchCycler::new(7, 3, 5, "en");
        let mut c = BatchCycler::new(7, 3, 5, "de");
        let xs: Vec<_> = (0..6).map(|_| a.next_batch()).collect();
        let ys: Vec<_> = (0..6).map(|_| b.next_batch()).collect();
        let zs: Vec<_> = (0..6).map(|_| c.next_batch()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }
}
