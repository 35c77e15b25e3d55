use std::sync::OnceLock;

use regex::Regex;

use super::grid::{Layout, CODE_DOOR_CLOSED, CODE_DOOR_OPEN};
use crate::core::{Subgoal, SubgoalEvaluator, SubgoalSource, Transition};

/// Checkable event a subgoal text resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridPredicate {
    /// Door `k` (1-based) goes from closed to open.
    DoorOpened(usize),
    GoalReached,
}

impl GridPredicate {
    /// Slot of this predicate in the condition one-hot vector of an
    /// `n_rooms`-room world: doors take `0..n_rooms - 1`, the goal the last.
    pub fn slot(self, n_rooms: usize) -> usize {
        match self {
            GridPredicate::DoorOpened(k) => k - 1,
            GridPredicate::GoalReached => n_rooms - 1,
        }
    }
}

const ORDINALS: [&str; 9] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];

/// Maps free subgoal text to a predicate, or `None` when nothing in the text
/// names a door or the goal.
pub fn parse_predicate(text: &str) -> Option<GridPredicate> {
    static DOOR_NUM: OnceLock<Regex> = OnceLock::new();
    static DOOR_ORD: OnceLock<Regex> = OnceLock::new();
    let lower = text.to_lowercase();
    let num = DOOR_NUM.get_or_init(|| Regex::new(r"door\s*(?:#|no\.?|number)?\s*(\d+)").unwrap());
    if let Some(c) = num.captures(&lower) {
        return c[1].parse().ok().filter(|&k: &usize| k >= 1).map(GridPredicate::DoorOpened);
    }
    let ord = DOOR_ORD.get_or_init(|| {
        Regex::new(r"\b(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth)\s+door").unwrap()
    });
    if let Some(c) = ord.captures(&lower) {
        let k = ORDINALS.iter().position(|o| *o == &c[1]).unwrap() + 1;
        return Some(GridPredicate::DoorOpened(k));
    }
    lower.contains("goal").then_some(GridPredicate::GoalReached)
}

/// Hand-written predicates for the gridworld: a door subgoal fires on the step
/// that opens that door, the goal subgoal on the step that pays reward 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridEvaluator {
    n_rooms: usize,
    door_cells: Vec<usize>,
}

impl GridEvaluator {
    pub fn new(layout: &Layout) -> Self {
        Self {
            n_rooms: layout.n_rooms(),
            door_cells: layout.doors.clone(),
        }
    }

    pub fn n_rooms(&self) -> usize {
        self.n_rooms
    }

    pub fn resolve(&self, subgoal: &Subgoal) -> Option<GridPredicate> {
        if subgoal.source == SubgoalSource::Identity {
            return Some(GridPredicate::GoalReached);
        }
        match parse_predicate(&subgoal.text)? {
            GridPredicate::DoorOpened(k) if k > self.door_cells.len() => None,
            p => Some(p),
        }
    }

    /// Condition slot the policy is fed for `subgoal`.
    pub fn condition_slot(&self, subgoal: &Subgoal) -> Option<usize> {
        self.resolve(subgoal).map(|p| p.slot(self.n_rooms))
    }

    pub fn predicate_fires(&self, predicate: GridPredicate, t: &Transition) -> bool {
        match predicate {
            GridPredicate::DoorOpened(k) => {
                let cell = self.door_cells[k - 1];
                t.obs.codes()[cell] == CODE_DOOR_CLOSED && t.next_obs.codes()[cell] == CODE_DOOR_OPEN
            }
            GridPredicate::GoalReached => t.reward == 1.0,
        }
    }
}

impl SubgoalEvaluator for GridEvaluator {
    fn supports(&self, subgoal: &Subgoal) -> bool {
        self.resolve(subgoal).is_some()
    }

    fn fires(&self, subgoal: &Subgoal, transition: &Transition) -> bool {
        self.resolve(subgoal)
            .is_some_and(|p| self.predicate_fires(p, transition))
    }
}
