//! Explicit finite MDPs small enough to enumerate every trajectory.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Trajectory count above which enumeration refuses to run.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-horizon MDP with goal-indexed binary reward tables.
///
/// Reward tables are indexed by *condition*: condition 0 is usually the goal
/// and conditions `1..` the subgoals of a plan, but the MDP itself does not
/// care which is which.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    n_conditions: usize,
    horizon: usize,
    /// `transition[(s * n_actions + a) * n_states + s2]`
    transition: Vec<f64>,
    initial: Vec<f64>,
    /// `reward[(c * n_states + s) * n_actions + a]`, each 0 or 1.
    reward: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        n_conditions: usize,
        horizon: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || n_conditions == 0 || horizon == 0 {
            return Err(Error::InvalidMdp("all sizes must be positive".into()));
        }
        if transition.len() != n_states * n_actions * n_states
            || initial.len() != n_states
            || reward.len() != n_conditions * n_states * n_actions
        {
            return Err(Error::InvalidMdp("table sizes disagree with dimensions".into()));
        }
        if transition.iter().chain(&initial).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidMdp("probabilities must lie in [0, 1]".into()));
        }
        for (row, chunk) in transition.chunks(n_states).enumerate() {
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMdp(format!(
                    "P[{}][{}][.] sums to {total}",
                    row / n_actions,
                    row % n_actions
                )));
            }
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMdp(format!("initial distribution sums to {total}")));
        }
        if reward.iter().any(|&r| r != 0.0 && r != 1.0) {
            return Err(Error::InvalidMdp("rewards must be 0 or 1".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_conditions,
            horizon,
            transition,
            initial,
            reward,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn reward(&self, condition: usize, s: usize, a: usize) -> f64 {
        self.reward[(condition * self.n_states + s) * self.n_actions + a]
    }

    /// Upper bound on the number of length-`steps` trajectories.
    pub fn trajectory_bound(&self, steps: usize) -> u128 {
        let s = self.n_states as u128;
        let sa = (self.n_states * self.n_actions) as u128;
        (0..steps).fold(s, |acc, _| acc.saturating_mul(sa))
    }
}

/// Condition-indexed stochastic policy `π(a | s, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    n_conditions: usize,
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_conditions: usize, n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_conditions * n_states * n_actions {
            return Err(Error::InvalidMdp("policy table size disagrees with dimensions".into()));
        }
        for row in probs.chunks(n_actions) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMdp(format!("policy row sums to {total}")));
            }
        }
        Ok(Self {
            n_conditions,
            n_states,
            n_actions,
            probs,
        })
    }

    /// Row-wise softmax of `logits`, laid out like the probability table.
    pub fn from_logits(n_conditions: usize, n_states: usize, n_actions: usize, logits: &[f64]) -> Result<Self> {
        if logits.len() != n_conditions * n_states * n_actions {
            return Err(Error::InvalidMdp("logit table size disagrees with dimensions".into()));
        }
        let mut probs = vec![0.0; logits.len()];
        for (row, out) in logits.chunks(n_actions).zip(probs.chunks_mut(n_actions)) {
            crate::nn::functional::softmax(row, out);
        }
        Self::new(n_conditions, n_states, n_actions, probs)
    }

    pub fn uniform(n_conditions: usize, n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_conditions,
            n_states,
            n_actions,
            probs: vec![p; n_conditions * n_states * n_actions],
        }
    }

    /// Deterministic policy: `choice[c * n_states + s]` is the action taken.
    pub fn deterministic(n_conditions: usize, n_states: usize, n_actions: usize, choice: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; n_conditions * n_states * n_actions];
        for (row, &a) in choice.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidAction { action: a, n_actions });
            }
            probs[row * n_actions + a] = 1.0;
        }
        Self::new(n_conditions, n_states, n_actions, probs)
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    pub fn prob(&self, condition: usize, s: usize, a: usize) -> f64 {
        self.probs[(condition * self.n_states + s) * self.n_actions + a]
    }

    fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::InvalidMdp("policy and MDP disagree on state/action counts".into()));
        }
        Ok(())
    }
}

/// One enumerated trajectory: `states.len() == actions.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TabularPath {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl TabularPath {
    /// Summed reward when step `t` is scored by table `schedule[t]`.
    pub fn return_under(&self, mdp: &TabularMdp, schedule: &[usize]) -> f64 {
        self.actions
            .iter()
            .zip(&self.states)
            .zip(schedule)
            .map(|((&a, &s), &c)| mdp.reward(c, s, a))
            .sum()
    }
}

/// All horizon-length trajectories of `policy` acting under one fixed
/// `condition`, with their probabilities.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    condition: usize,
) -> Result<Vec<(TabularPath, f64)>> {
    let schedule = vec![condition; mdp.horizon];
    enumerate_scheduled(mdp, policy, mdp.initial(), &schedule)
}

/// Trajectories of `schedule.len()` steps starting from the state distribution
/// `entry`, where step `t` uses the policy's condition `schedule[t]`.
/// Zero-probability branches are pruned.
pub fn enumerate_scheduled(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    entry: &[f64],
    schedule: &[usize],
) -> Result<Vec<(TabularPath, f64)>> {
    policy.check_against(mdp)?;
    if entry.len() != mdp.n_states {
        return Err(Error::InvalidMdp("entry distribution has the wrong length".into()));
    }
    if let Some(&c) = schedule.iter().find(|&&c| c >= policy.n_conditions) {
        return Err(Error::InvalidMdp(format!("condition {c} outside the policy table")));
    }
    let bound = mdp.trajectory_bound(schedule.len());
    if bound > ENUMERATION_LIMIT {
        return Err(Error::EnumerationOverflow {
            count: bound,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(schedule.len() + 1);
    let mut actions = Vec::with_capacity(schedule.len());
    for (s0, &p0) in entry.iter().enumerate() {
        if p0 > 0.0 {
            states.push(s0);
            extend(mdp, policy, schedule, p0, &mut states, &mut actions, &mut out);
            states.pop();
        }
    }
    Ok(out)
}

fn extend(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    schedule: &[usize],
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<(TabularPath, f64)>,
) {
    let t = actions.len();
    if t == schedule.len() {
        out.push((
            TabularPath {
                states: states.clone(),
                actions: actions.clone(),
            },
            prob,
        ));
        return;
    }
    let s = states[t];
    for a in 0..mdp.n_actions {
        let pa = policy.prob(schedule[t], s, a);
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        for s2 in 0..mdp.n_states {
            let ps = mdp.p(s, a, s2);
            if ps > 0.0 {
                states.push(s2);
                extend(mdp, policy, schedule, prob * pa * ps, states, actions, out);
                states.pop();
            }
        }
        actions.pop();
    }
}

/// Distribution of the state reached after running `schedule` from `entry`.
pub fn propagate(mdp: &TabularMdp, policy: &PolicyTable, entry: &[f64], schedule: &[usize]) -> Vec<f64> {
    let mut dist = entry.to_vec();
    for &c in schedule {
        let mut next = vec![0.0; mdp.n_states];
        for (s, &ps) in dist.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                let pa = ps * policy.prob(c, s, a);
                for (s2, slot) in next.iter_mut().enumerate() {
                    *slot += pa * mdp.p(s, a, s2);
                }
            }
        }
        dist = next;
    }
    dist
}
