use ndarray::{Array1, Array2};
use rand::Rng;

use crate::env::Action;
use crate::error::{Error, Result};

/// One experience tuple. `action` is stored as executed, in `[0, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only when the episode ended by full coverage.
    pub done: bool,
}

/// Row-stacked minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::Underfilled { len: 0, requested: 1 });
        };
        let dim = first.state.len();
        let n = items.len();
        let mut states = Array2::zeros((n, dim));
        let mut next_states = Array2::zeros((n, dim));
        let mut actions = Array2::zeros((n, 2));
        let mut rewards = Array1::zeros(n);
        let mut dones = Array1::zeros(n);
        for (k, t) in items.iter().enumerate() {
            if t.state.len() != dim || t.next_state.len() != dim {
                return Err(Error::Dimension { expected: dim, got: t.state.len().max(t.next_state.len()) });
            }
            states.row_mut(k).iter_mut().zip(&t.state).for_each(|(d, s)| *d = *s);
            next_states.row_mut(k).iter_mut().zip(&t.next_state).for_each(|(d, s)| *d = *s);
            actions[[k, 0]] = t.action.lin;
            actions[[k, 1]] = t.action.ang;
            rewards[k] = t.reward;
            dones[k] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(Self { states, actions, rewards, next_states, dones })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: Vec::new(), capacity, cursor: 0 }
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

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` storage indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < n || self.items.is_empty() {
            return Err(Error::Underfilled { len: self.items.len(), requested: n });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        let picked: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Batch::from_transitions(&picked)
    }
}
