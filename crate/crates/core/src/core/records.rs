//! Line-delimited JSON transition records, one object per transition.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{GoalId, Observation, SubTrajectory, Trajectory, Transition};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    pub goal_id: GoalId,
    /// 1-based subgoal the transition was attributed to, if segmented.
    pub subgoal_index: Option<usize>,
}

impl TransitionRecord {
    pub fn transition(&self) -> Transition {
        Transition {
            obs: self.obs.clone(),
            action: self.action,
            reward: self.reward,
            next_obs: self.next_obs.clone(),
            done: self.done,
        }
    }
}

/// Flattens a trajectory into records, labelling each step with its slice
/// when a segmentation is supplied.
pub fn to_records(traj: &Trajectory, segmentation: Option<&[SubTrajectory]>) -> Vec<TransitionRecord> {
    let mut labels = vec![None; traj.steps.len()];
    if let Some(slices) = segmentation {
        for s in slices {
            for l in &mut labels[s.offset..s.offset + s.steps.len()] {
                *l = Some(s.subgoal.index);
            }
        }
    }
    traj.steps
        .iter()
        .zip(labels)
        .map(|(t, subgoal_index)| TransitionRecord {
            obs: t.obs.clone(),
            action: t.action,
            reward: t.reward,
            next_obs: t.next_obs.clone(),
            done: t.done,
            goal_id: traj.goal,
            subgoal_index,
        })
        .collect()
}

/// Regroups records into trajectories: a trajectory ends at a `done` record
/// or where the goal id changes.
pub fn from_records(records: &[TransitionRecord]) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut steps = Vec::new();
    let mut goal = None;
    for r in records {
        if goal.is_some_and(|g| g != r.goal_id) && !steps.is_empty() {
            out.push(Trajectory::new(goal.unwrap(), std::mem::take(&mut steps)));
        }
        goal = Some(r.goal_id);
        steps.push(r.transition());
        if r.done {
            out.push(Trajectory::new(r.goal_id, std::mem::take(&mut steps)));
        }
    }
    if let (Some(g), false) = (goal, steps.is_empty()) {
        out.push(Trajectory::new(g, steps));
    }
    out
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
