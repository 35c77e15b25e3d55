//! Environments: the MultiRoom gridworld and enumerable tabular MDPs.

mod evaluator;
pub mod grid;
pub mod tabular;

pub use evaluator::{parse_predicate, GridEvaluator, GridPredicate};
pub use grid::{GridConfig, GridEncoder, GridMultiRoom, Layout, LayoutSpec, StepOutcome};
pub use tabular::{enumerate_scheduled, enumerate_trajectories, PolicyTable, TabularMdp, TabularPath};

/// Predicates for the scripted door/goal subgoals of `env`'s layout.
pub fn scripted_evaluator(env: &GridMultiRoom) -> GridEvaluator {
    GridEvaluator::new(env.layout())
}
