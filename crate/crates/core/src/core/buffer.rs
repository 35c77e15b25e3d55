use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Goal, SubTrajectory, Subgoal, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    sub: SubTrajectory,
    goal: Goal,
    // Running count of transitions pushed before this entry.
    start: u64,
}

/// FIFO store of `(sub-trajectory, goal)` pairs, sampled per transition.
///
/// `capacity` bounds the number of stored sub-trajectories, not transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Entry>,
    pushed: u64,
}

/// One transition drawn from the buffer, with the labels the losses need.
#[derive(Debug, Clone, Copy)]
pub struct SampledTransition<'a> {
    pub transition: &'a Transition,
    pub subgoal: &'a Subgoal,
    pub return_bit: f64,
    /// Transitions after this one in its sub-trajectory.
    pub steps_to_end: usize,
    pub goal: &'a Goal,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::new(),
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored sub-trajectories.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        match self.entries.front() {
            Some(front) => (self.pushed - front.start) as usize,
            None => 0,
        }
    }

    pub fn push(&mut self, sub: SubTrajectory, goal: Goal) {
        let start = self.pushed;
        self.pushed += sub.steps.len() as u64;
        self.entries.push_back(Entry { sub, goal, start });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SubTrajectory, &Goal)> {
        self.entries.iter().map(|e| (&e.sub, &e.goal))
    }

    /// Uniform draw with replacement over stored transitions, seeded.
    pub fn sample_batch(&self, batch_size: usize, rng_seed: u64) -> Result<Vec<SampledTransition<'_>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.sample_with(batch_size, &mut rng)
    }

    /// Same as [`sample_batch`](Self::sample_batch) but drawing from a caller-owned stream.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<SampledTransition<'_>>> {
        let total = self.num_transitions();
        if total == 0 {
            return Err(Error::EmptyBuffer);
        }
        let base = self.entries.front().expect("nonempty").start;
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let k = base + rng.random_range(0..total as u64);
            // Last entry whose start is <= k; empty entries are skipped because
            // they share their start with the following entry.
            let idx = self.entries.partition_point(|e| e.start <= k) - 1;
            let e = &self.entries[idx];
            let i = (k - e.start) as usize;
            out.push(SampledTransition {
                transition: &e.sub.steps[i],
                subgoal: &e.sub.subgoal,
                return_bit: e.sub.return_bit,
                steps_to_end: e.sub.steps.len() - 1 - i,
                goal: &e.goal,
            });
        }
        Ok(out)
    }
}
