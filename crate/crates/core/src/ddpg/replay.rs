use ndarray::{Array1, Array2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fixed-capacity ring of `(s, a, r, s', done)` rows. Storage grows on
/// demand up to `capacity`, after which the oldest row is overwritten.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    len: usize,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoredTransition<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || action_dim == 0 {
            return Err(Error::InvalidConfig(
                "replay capacity and dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            state_dim,
            action_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            len: 0,
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
        done: bool,
    ) -> Result<()> {
        if state.len() != self.state_dim
            || next_state.len() != self.state_dim
            || action.len() != self.action_dim
        {
            return Err(Error::Shape(format!(
                "replay rows are ({}, {}), got state {} / action {} / next {}",
                self.state_dim,
                self.action_dim,
                state.len(),
                action.len(),
                next_state.len()
            )));
        }
        if self.len < self.capacity {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.next_states.extend_from_slice(next_state);
            self.dones.push(done);
            self.len += 1;
        } else {
            let i = self.head;
            let (s, a) = (self.state_dim, self.action_dim);
            self.states[i * s..(i + 1) * s].copy_from_slice(state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(action);
            self.rewards[i] = reward;
            self.next_states[i * s..(i + 1) * s].copy_from_slice(next_state);
            self.dones[i] = done;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    fn slot(&self, i: usize) -> StoredTransition<'_> {
        let (s, a) = (self.state_dim, self.action_dim);
        StoredTransition {
            state: &self.states[i * s..(i + 1) * s],
            action: &self.actions[i * a..(i + 1) * a],
            reward: self.rewards[i],
            next_state: &self.next_states[i * s..(i + 1) * s],
            done: self.dones[i],
        }
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = StoredTransition<'_>> + '_ {
        let start = if self.len < self.capacity {
            0
        } else {
            self.head
        };
        (0..self.len).map(move |k| self.slot((start + k) % self.len))
    }

    /// Uniform draw of storage slots, with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch_size == 0 || self.len < batch_size {
            return Err(Error::InsufficientReplay {
                len: self.len,
                batch: batch_size,
            });
        }
        Ok((0..batch_size)
            .map(|_| rng.random_range(0..self.len))
            .collect())
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (s, a) = (self.state_dim, self.action_dim);
        let b = indices.len();
        let mut batch = Batch {
            states: Array2::zeros((b, s)),
            actions: Array2::zeros((b, a)),
            rewards: Array1::zeros(b),
            next_states: Array2::zeros((b, s)),
            dones: Array1::zeros(b),
        };
        for (row, &i) in indices.iter().enumerate() {
            let t = self.slot(i);
            batch
                .states
                .row_mut(row)
                .as_slice_mut()
                .expect("contiguous")
                .copy_from_slice(t.state);
            batch
                .actions
                .row_mut(row)
                .as_slice_mut()
                .expect("contiguous")
                .copy_from_slice(t.action);
            batch
                .next_states
                .row_mut(row)
                .as_slice_mut()
                .expect("contiguous")
                .copy_from_slice(t.next_state);
            batch.rewards[row] = t.reward;
            batch.dones[row] = if t.done { 1.0 } else { 0.0 };
        }
        batch
    }

    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(self.gather(&idx))
    }
}
