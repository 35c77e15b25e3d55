use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub u32);

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// A task the agent is asked to accomplish within `horizon` steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Goal {
    pub id: GoalId,
    pub text: String,
    pub horizon: usize,
}

impl Goal {
    pub fn new(id: GoalId, text: impl Into<String>, horizon: usize) -> Result<Self> {
        let text = text.into();
        if horizon == 0 {
            return Err(Error::InvalidConfig("goal horizon must be at least 1".into()));
        }
        if text.trim().is_empty() {
            return Err(Error::InvalidConfig("goal text must be nonempty".into()));
        }
        Ok(Self { id, text, horizon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubgoalSource {
    Scripted,
    Remote,
    Identity,
}

/// Step `index` (1-based) of a decomposition of goal `parent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub parent: GoalId,
    pub index: usize,
    pub text: String,
    pub source: SubgoalSource,
}

impl Subgoal {
    /// The trivial decomposition: the goal itself as the single subgoal.
    pub fn identity(goal: &Goal) -> Self {
        Self {
            parent: goal.id,
            index: 1,
            text: goal.text.clone(),
            source: SubgoalSource::Identity,
        }
    }
}

/// Symbolic observation: one small integer code per observation slot. How the
/// codes expand into network features is up to the environment's encoder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Arc<[u16]>);

impl Observation {
    pub fn new(codes: Vec<u16>) -> Self {
        Self(codes.into())
    }

    pub fn codes(&self) -> &[u16] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    /// Sparse binary reward: 1 on goal completion, else 0.
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub goal: GoalId,
    pub steps: Vec<Transition>,
    pub success: bool,
}

impl Trajectory {
    /// Builds a trajectory, deriving `success` from the final reward.
    pub fn new(goal: GoalId, steps: Vec<Transition>) -> Self {
        let success = steps.last().is_some_and(|t| t.reward == 1.0);
        Self {
            goal,
            steps,
            success,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks the structural invariants against the goal it was collected for.
    pub fn validate(&self, goal: &Goal, n_actions: usize) -> Result<()> {
        if self.goal != goal.id {
            return Err(Error::InvalidConfig(format!(
                "trajectory belongs to {}, not {}",
                self.goal, goal.id
            )));
        }
        if self.steps.len() > goal.horizon {
            return Err(Error::InvalidConfig(format!(
                "trajectory of {} steps exceeds horizon {}",
                self.steps.len(),
                goal.horizon
            )));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.reward != 0.0 && step.reward != 1.0 {
                return Err(Error::InvalidConfig(format!("non-binary reward at step {t}")));
            }
            if step.action >= n_actions {
                return Err(Error::InvalidAction {
                    action: step.action,
                    n_actions,
                });
            }
        }
        if self.success != self.steps.last().is_some_and(|t| t.reward == 1.0) {
            return Err(Error::InvalidConfig("success flag disagrees with final reward".into()));
        }
        Ok(())
    }
}

/// A contiguous slice of a parent trajectory attributed to one subgoal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubTrajectory {
    pub subgoal: Subgoal,
    /// Position of the first step within the parent trajectory.
    pub offset: usize,
    pub steps: Vec<Transition>,
    /// 1 if the subgoal's evaluator fired inside the slice, else 0.
    pub return_bit: f64,
}

/// Decides whether a transition accomplishes a subgoal.
///
/// Implementations must be pure: the answer may depend only on the subgoal
/// and the transition.
pub trait SubgoalEvaluator {
    /// Whether this evaluator knows how to judge `subgoal`.
    fn supports(&self, subgoal: &Subgoal) -> bool;

    fn fires(&self, subgoal: &Subgoal, transition: &Transition) -> bool;
}
