//! Goals, subgoals, transitions, trajectory segmentation, and the replay
//! buffer shared by every trainer.

mod buffer;
pub mod records;
mod segment;
mod types;

pub use buffer::{ReplayBuffer, SampledTransition};
pub use segment::{check_subgoal_indices, segment};
pub use types::{
    Goal, GoalId, Observation, SubTrajectory, Subgoal, SubgoalEvaluator, SubgoalSource, Trajectory,
    Transition,
};
