use super::{SubTrajectory, Subgoal, SubgoalEvaluator, Trajectory};
use crate::{Error, Result};

/// Checks that `subgoals` are indexed exactly `1..=N` in order.
pub fn check_subgoal_indices(subgoals: &[Subgoal]) -> Result<()> {
    if subgoals.is_empty() {
        return Err(Error::MalformedSubgoals("no subgoals".into()));
    }
    for (k, sg) in subgoals.iter().enumerate() {
        if sg.index != k + 1 {
            return Err(Error::MalformedSubgoals(format!(
                "subgoal at position {} has index {} (indices must run 1..={} without repeats)",
                k + 1,
                sg.index,
                subgoals.len()
            )));
        }
    }
    Ok(())
}

/// Splits `traj` into one slice per subgoal, in order.
///
/// Slice `i` runs from the end of slice `i - 1` up to and including the first
/// step on which subgoal `i` fires. If subgoal `i` never fires, its slice
/// absorbs the rest of the trajectory with `return_bit = 0` and the later
/// subgoals get no slice at all. Steps left over after the last subgoal fired
/// are appended to the last slice, so the slices always concatenate back to
/// `traj`.
pub fn segment(
    traj: &Trajectory,
    subgoals: &[Subgoal],
    evaluator: &dyn SubgoalEvaluator,
) -> Result<Vec<SubTrajectory>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    check_subgoal_indices(subgoals)?;
    if let Some(sg) = subgoals.iter().find(|sg| !evaluator.supports(sg)) {
        return Err(Error::MalformedSubgoals(format!(
            "no evaluator predicate for subgoal {} ({:?})",
            sg.index, sg.text
        )));
    }

    let steps = &traj.steps;
    let mut out: Vec<SubTrajectory> = Vec::with_capacity(subgoals.len());
    let mut start = 0;
    for sg in subgoals {
        if start == steps.len() {
            break;
        }
        let hit = steps[start..]
            .iter()
            .position(|t| evaluator.fires(sg, t))
            .map(|p| start + p);
        let (end, return_bit) = match hit {
            Some(t) => (t + 1, 1.0),
            None => (steps.len(), 0.0),
        };
        out.push(SubTrajectory {
            subgoal: sg.clone(),
            offset: start,
            steps: steps[start..end].to_vec(),
            return_bit,
        });
        start = end;
        if hit.is_none() {
            break;
        }
    }
    if start < steps.len() {
        let last = out.last_mut().expect("at least one slice");
        last.steps.extend_from_slice(&steps[start..]);
    }
    Ok(out)
}
