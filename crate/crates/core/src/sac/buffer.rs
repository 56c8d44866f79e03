//! FIFO replay storage with uniform batch sampling.

use std::collections::VecDeque;

use rand::Rng;

/// One stored interaction. Observations are the encoded (scaled, flattened)
/// vectors the networks consume; the action is the raw delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Ring buffer of transitions: oldest evicted first, batches drawn uniformly
/// without replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "capacity must be positive");
        Self { capacity, storage: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
    }

    /// Draws `k` distinct indices uniformly.
    pub fn sample_indices<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        assert!(k <= self.storage.len(), "batch larger than buffer");
        rand::seq::index::sample(rng, self.storage.len(), k).into_vec()
    }
}
