//! Bounded FIFO replay queue of `(state, pi, z)` training triples.

use std::collections::VecDeque;

use rand::Rng;

/// One training triple plus the legality mask the episode used, so the
/// policy can be re-evaluated under identical masking during training.
#[derive(Clone, Debug)]
pub struct ReplayEntry {
    pub state: Vec<usize>,
    pub pi: Vec<f64>,
    pub z: f64,
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ReplayEntry>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends entries, evicting strictly oldest-first beyond capacity.
    pub fn push(&mut self, entries: impl IntoIterator<Item = ReplayEntry>) {
        for e in entries {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(e);
        }
    }

    /// Uniform sample of `batch_size` entries: with replacement while the
    /// buffer is smaller than the batch, without replacement otherwise.
    /// An empty buffer yields an empty batch.
    pub fn sample_batch<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Vec<ReplayEntry> {
        assert!(batch_size >= 1);
        let n = self.entries.len();
        if n == 0 {
            return Vec::new();
        }
        if n < batch_size {
            (0..batch_size)
                .map(|_| self.entries[rng.gen_range(0..n)].clone())
                .collect()
        } else {
            rand::seq::index::sample(rng, n, batch_size)
                .iter()
                .map(|i| self.entries[i].clone())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn entry(tag: usize) -> ReplayEntry {
        ReplayEntry { state: vec![tag], pi: vec![1.0], z: 0.5, mask: vec![true] }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3);
        buf.push((0..4).map(entry));
        assert_eq!(buf.len(), 3);
        let states: Vec<usize> = buf.entries.iter().map(|e| e.state[0]).collect();
        assert_eq!(states, vec![1, 2, 3]);
    }

    #[test]
    fn small_buffer_samples_with_replacement() {
        let mut buf = ReplayBuffer::new(10);
        buf.push((0..2).map(entry));
        let mut rng = substream(0, "replay", 0);
        let batch = buf.sample_batch(5, &mut rng);
        assert_eq!(batch.len(), 5);
    }

    #[test]
    fn large_buffer_samples_without_replacement() {
        let mut buf = ReplayBuffer::new(10);
        buf.push((0..10).map(entry));
        let mut rng = substream(1, "replay", 0);
        let batch = buf.sample_batch(10, &mut rng);
        let mut tags: Vec<usize> = batch.iter().map(|e| e.state[0]).collect();
        tags.sort_unstable();
        assert_eq!(tags, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn empty_buffer_yields_empty_batch() {
        let buf = ReplayBuffer::new(10);
        let mut rng = substream(2, "replay", 0);
        assert!(buf.sample_batch(4, &mut rng).is_empty());
    }
}
