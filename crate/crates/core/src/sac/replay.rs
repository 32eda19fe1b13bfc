use rand::seq::index;
use rand::Rng;

use crate::env::SlotObservation;

/// One decision with its settled reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: SlotObservation,
    /// Mask the action was drawn under (one-hot for fallbacks).
    pub mask: Vec<bool>,
    /// Actor state when acting.
    pub hidden: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: SlotObservation,
    pub next_mask: Vec<bool>,
    /// Actor state for the next decision; zeros when it opens a new slot.
    pub next_hidden: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `n` distinct indices drawn uniformly; `n` is capped at the length.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        index::sample(rng, self.items.len(), n.min(self.items.len())).into_vec()
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}
