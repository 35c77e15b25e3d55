//! Exact checks of the variational objectives by full trajectory enumeration
//! on small tabular MDPs.
//!
//! A goal on a [`TabularMdp`] is a policy condition plus a per-step reward
//! schedule. A plan splits the horizon into contiguous segments, each with
//! its own policy condition and reward schedule. Executing a plan means
//! running the policy under segment `i`'s condition for segment `i`'s steps.

mod fuzz;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::envs::tabular::{enumerate_scheduled, propagate, PolicyTable, TabularMdp, TabularPath};
use crate::{Error, Result};

pub use fuzz::{fuzz_prop1, fuzz_prop2, run_suite, Prop1Instance, Prop2Instance, SuiteRow};

/// Tolerance for the proposition checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Tolerance on probability normalization.
pub const MASS_TOL: f64 = 1e-9;
const PREMISE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularGoal {
    /// Policy condition used when acting for the goal directly.
    pub condition: usize,
    /// Reward table scoring step `t`, one entry per horizon step.
    pub rewards: Vec<usize>,
}

impl TabularGoal {
    /// A goal scored by its own condition's table at every step.
    pub fn uniform(condition: usize, horizon: usize) -> Self {
        Self {
            condition,
            rewards: vec![condition; horizon],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub condition: usize,
    /// Reward table per step of the segment; its length is the segment length.
    pub rewards: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPlan {
    pub segments: Vec<Segment>,
}

impl TabularPlan {
    /// The one-segment plan that is the goal itself.
    pub fn identity(goal: &TabularGoal) -> Self {
        Self {
            segments: vec![Segment {
                condition: goal.condition,
                rewards: goal.rewards.clone(),
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Policy condition at every step of the horizon.
    pub fn condition_schedule(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.condition, s.len()))
            .collect()
    }

    fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidPlan("empty plan".into()));
        }
        if let Some(i) = self.segments.iter().position(Segment::is_empty) {
            return Err(Error::InvalidPlan(format!("segment {} is empty", i + 1)));
        }
        let total: usize = self.segments.iter().map(Segment::len).sum();
        if total != mdp.horizon() {
            return Err(Error::InvalidPlan(format!(
                "segments cover {total} steps, horizon is {}",
                mdp.horizon()
            )));
        }
        for s in &self.segments {
            check_conditions(mdp, s.condition, &s.rewards)?;
        }
        Ok(())
    }
}

fn check_conditions(mdp: &TabularMdp, condition: usize, rewards: &[usize]) -> Result<()> {
    let n = mdp.n_conditions();
    if condition >= n || rewards.iter().any(|&c| c >= n) {
        return Err(Error::InvalidMdp(format!("condition outside 0..{n}")));
    }
    Ok(())
}

fn validate_goal(mdp: &TabularMdp, goal: &TabularGoal) -> Result<()> {
    if goal.rewards.len() != mdp.horizon() {
        return Err(Error::InvalidPlan(format!(
            "goal schedules {} steps, horizon is {}",
            goal.rewards.len(),
            mdp.horizon()
        )));
    }
    check_conditions(mdp, goal.condition, &goal.rewards)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    Goal,
    /// 1-based subgoal index.
    Subgoal(usize),
    /// The goal-conditioned reference restricted to segment `i`.
    GoalOnSegment(usize),
}

/// A fully enumerated distribution over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistribution {
    pub support: Vec<(TabularPath, f64)>,
    pub conditioning: Conditioning,
}

impl TrajectoryDistribution {
    /// Enumerates `schedule.len()` steps from `entry`, failing if the mass is
    /// not 1 within [`MASS_TOL`].
    pub fn enumerate(
        mdp: &TabularMdp,
        policy: &PolicyTable,
        entry: &[f64],
        schedule: &[usize],
        conditioning: Conditioning,
    ) -> Result<Self> {
        let support = enumerate_scheduled(mdp, policy, entry, schedule)?;
        let dist = Self { support, conditioning };
        let mass = dist.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMdp(format!("trajectory mass {mass} is not 1")));
        }
        Ok(dist)
    }

    pub fn mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    pub fn expectation(&self, f: impl Fn(&TabularPath) -> f64) -> f64 {
        self.support.iter().map(|(t, p)| p * f(t)).sum()
    }

    /// `KL(self ‖ other)`; `KlInfinite` if `other` misses any of our support.
    pub fn kl(&self, other: &Self) -> Result<f64> {
        let q: HashMap<&TabularPath, f64> = other.support.iter().map(|(t, p)| (t, *p)).collect();
        let mut total = 0.0;
        for (t, p) in &self.support {
            let p = *p;
            if p == 0.0 {
                continue;
            }
            match q.get(t) {
                Some(&qp) if qp > 0.0 => total += p * (p / qp).ln(),
                _ => return Err(Error::KlInfinite),
            }
        }
        Ok(total)
    }
}

/// `𝒥(τ)/α` with step `t` scored by reward table `rewards[t]`.
pub fn log_optimality(mdp: &TabularMdp, traj: &TabularPath, rewards: &[usize], alpha: f64) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    traj.return_under(mdp, rewards) / alpha
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboReport {
    pub return_term: f64,
    pub kl_term: f64,
    pub elbo: f64,
    /// `(return_term_i, kl_term_i)` per segment; one entry for the goal ELBO.
    pub decomposition: Vec<(f64, f64)>,
}

impl ElboReport {
    fn from_parts(decomposition: Vec<(f64, f64)>) -> Self {
        let return_term = decomposition.iter().map(|d| d.0).sum();
        let kl_term = decomposition.iter().map(|d| d.1).sum();
        Self {
            return_term,
            kl_term,
            elbo: return_term - kl_term,
            decomposition,
        }
    }
}

/// Per-segment distributions of a policy executing `conditions` over the
/// segment lengths of `plan`. Each segment starts from the state distribution
/// the same policy reaches at the segment boundary.
fn segment_distributions(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    plan: &TabularPlan,
    conditions: impl Fn(usize, &Segment) -> (usize, Conditioning),
) -> Result<Vec<TrajectoryDistribution>> {
    let mut entry = mdp.initial().to_vec();
    let mut out = Vec::with_capacity(plan.len());
    for (i, seg) in plan.segments.iter().enumerate() {
        let (c, tag) = conditions(i, seg);
        let schedule = vec![c; seg.len()];
        out.push(TrajectoryDistribution::enumerate(mdp, policy, &entry, &schedule, tag)?);
        entry = propagate(mdp, policy, &entry, &schedule);
    }
    Ok(out)
}

fn goal_distribution(mdp: &TabularMdp, policy: &PolicyTable, goal: &TabularGoal) -> Result<TrajectoryDistribution> {
    let schedule = vec![goal.condition; mdp.horizon()];
    TrajectoryDistribution::enumerate(mdp, policy, mdp.initial(), &schedule, Conditioning::Goal)
}

/// Goal-conditioned ELBO: expected `𝒥(τ|g)/α` under the goal-conditioned
/// policy minus its trajectory KL to the goal-conditioned reference.
pub fn gc_elbo(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reference: &PolicyTable,
    goal: &TabularGoal,
    alpha: f64,
) -> Result<ElboReport> {
    sgc_elbo(mdp, policy, reference, &TabularPlan::identity(goal), goal, alpha)
}

/// Subgoal-conditioned ELBO: per segment, expected `𝒥(τ_i|sg_i)/α` under the
/// subgoal-conditioned policy minus the KL to the goal-conditioned reference
/// over the same segment.
pub fn sgc_elbo(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reference: &PolicyTable,
    plan: &TabularPlan,
    goal: &TabularGoal,
    alpha: f64,
) -> Result<ElboReport> {
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    validate_goal(mdp, goal)?;
    plan.validate(mdp)?;
    let ours = segment_distributions(mdp, policy, plan, |i, s| (s.condition, Conditioning::Subgoal(i + 1)))?;
    let theirs = segment_distributions(mdp, reference, plan, |i, _| (goal.condition, Conditioning::GoalOnSegment(i + 1)))?;
    let mut parts = Vec::with_capacity(plan.len());
    for ((seg, p), q) in plan.segments.iter().zip(&ours).zip(&theirs) {
        let ret = p.expectation(|t| log_optimality(mdp, t, &seg.rewards, alpha));
        parts.push((ret, p.kl(q)?));
    }
    Ok(ElboReport::from_parts(parts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Return additivity: the expected goal log-optimality of the executed plan
/// equals the sum of expected per-segment log-optimalities.
///
/// Fails with `AdditivityPremiseFailed` if some trajectory's goal return
/// differs from the sum of its segment returns.
pub fn check_prop1(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    goal: &TabularGoal,
    plan: &TabularPlan,
    alpha: f64,
) -> Result<PropCheck> {
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    validate_goal(mdp, goal)?;
    plan.validate(mdp)?;
    let full = TrajectoryDistribution::enumerate(
        mdp,
        policy,
        mdp.initial(),
        &plan.condition_schedule(),
        Conditioning::Goal,
    )?;
    let bounds = segment_bounds(plan);
    for (t, _) in &full.support {
        let whole = t.return_under(mdp, &goal.rewards);
        let parts: f64 = plan
            .segments
            .iter()
            .zip(&bounds)
            .map(|(seg, &(a, b))| slice(t, a, b).return_under(mdp, &seg.rewards))
            .sum();
        if (whole - parts).abs() > PREMISE_TOL {
            return Err(Error::AdditivityPremiseFailed {
                trajectory: format!("states {:?} actions {:?}", t.states, t.actions),
            });
        }
    }
    let lhs = full.expectation(|t| log_optimality(mdp, t, &goal.rewards, alpha));
    let segs = segment_distributions(mdp, policy, plan, |i, s| (s.condition, Conditioning::Subgoal(i + 1)))?;
    let rhs = plan
        .segments
        .iter()
        .zip(&segs)
        .map(|(seg, d)| d.expectation(|t| log_optimality(mdp, t, &seg.rewards, alpha)))
        .sum();
    Ok(PropCheck {
        lhs,
        rhs,
        pass: (lhs - rhs).abs() <= CHECK_TOL,
    })
}

/// KL bound: the trajectory KL of the executed plan against the
/// goal-conditioned reference is at most the sum of per-segment KLs.
pub fn check_prop2(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reference: &PolicyTable,
    goal: &TabularGoal,
    plan: &TabularPlan,
) -> Result<PropCheck> {
    validate_goal(mdp, goal)?;
    plan.validate(mdp)?;
    // The one-segment plan is computed with the per-segment routine so that
    // the tight case compares identical floating-point sums.
    let lhs = if plan.len() == 1 {
        segment_kls(mdp, policy, reference, goal, plan)?[0]
    } else {
        let ours = TrajectoryDistribution::enumerate(
            mdp,
            policy,
            mdp.initial(),
            &plan.condition_schedule(),
            Conditioning::Goal,
        )?;
        ours.kl(&goal_distribution(mdp, reference, goal)?)?
    };
    let rhs = segment_kls(mdp, policy, reference, goal, plan)?.iter().sum();
    Ok(PropCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + CHECK_TOL,
    })
}

fn segment_kls(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reference: &PolicyTable,
    goal: &TabularGoal,
    plan: &TabularPlan,
) -> Result<Vec<f64>> {
    let ours = segment_distributions(mdp, policy, plan, |i, s| (s.condition, Conditioning::Subgoal(i + 1)))?;
    let theirs = segment_distributions(mdp, reference, plan, |i, _| (goal.condition, Conditioning::GoalOnSegment(i + 1)))?;
    ours.iter().zip(&theirs).map(|(p, q)| p.kl(q)).collect()
}

fn segment_bounds(plan: &TabularPlan) -> Vec<(usize, usize)> {
    let mut start = 0;
    plan.segments
        .iter()
        .map(|s| {
            let b = (start, start + s.len());
            start += s.len();
            b
        })
        .collect()
}

/// Steps `a..b` of a path, keeping the state after the last step.
fn slice(t: &TabularPath, a: usize, b: usize) -> TabularPath {
    TabularPath {
        states: t.states[a..=b].to_vec(),
        actions: t.actions[a..b].to_vec(),
    }
}
