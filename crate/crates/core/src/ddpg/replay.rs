use super::DdpgError;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// One transition as seen by a single agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    /// `(price, demand)` before the step.
    pub state: [f64; 2],
    /// `(price, demand)` observed after the step.
    pub next_state: [f64; 2],
    /// Executed maintenance decision.
    pub maint: bool,
    /// Submitted bid multiplier.
    pub bid: f64,
    pub reward: f64,
}

/// Bounded FIFO replay memory.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
            pushes: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes since creation, including evicted items.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn get(&self, i: usize) -> Option<&Experience> {
        self.items.get(i)
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
        self.pushes += 1;
    }

    /// Uniform indices with replacement; requires `len() >= n`.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>, DdpgError> {
        if self.items.len() < n || n == 0 {
            return Err(DdpgError::InsufficientSamples {
                needed: n.max(1),
                have: self.items.len(),
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<Experience>, DdpgError> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }

    pub(crate) fn restore_counters(&mut self, pushes: u64) {
        self.pushes = pushes;
    }
}
