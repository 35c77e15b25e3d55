//! Subgoal plans: where they come from (a script, a remote text model, or the
//! trivial identity decomposition) and the structural checks they must pass.

mod remote;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::core::{Goal, Subgoal, SubgoalSource};
use crate::{Error, Result};

pub use remote::{parse_numbered_lines, RemoteGenerator, WireRequest};

/// Environment families the scripted generator knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    MultiRoom(usize),
    Tabular,
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "tabular" {
            return Ok(EnvKind::Tabular);
        }
        lower
            .strip_prefix("multiroom-n")
            .and_then(|n| n.parse().ok())
            .filter(|&n: &usize| n >= 1)
            .map(EnvKind::MultiRoom)
            .ok_or_else(|| Error::NoScript(s.to_string()))
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::MultiRoom(n) => write!(f, "multiroom-n{n}"),
            EnvKind::Tabular => f.write_str("tabular"),
        }
    }
}

/// One worked decomposition shown to a remote generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub goal_text: String,
    pub subgoals: Vec<String>,
}

/// Reads few-shot examples, one JSON object per line.
pub fn read_few_shot(path: &Path) -> Result<Vec<FewShot>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalRequest {
    pub goal: Goal,
    pub context: Option<String>,
    pub examples: Vec<FewShot>,
}

impl SubgoalRequest {
    pub fn new(goal: Goal) -> Self {
        Self {
            goal,
            context: None,
            examples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalPlan {
    pub subgoals: Vec<Subgoal>,
    pub generator: SubgoalSource,
    pub cached: bool,
}

impl SubgoalPlan {
    fn from_texts(goal: &Goal, texts: &[String], generator: SubgoalSource) -> Self {
        let subgoals = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Subgoal {
                parent: goal.id,
                index: i + 1,
                text: t.clone(),
                source: generator,
            })
            .collect();
        Self {
            subgoals,
            generator,
            cached: false,
        }
    }

    /// The N = 1 plan whose only subgoal is the goal itself.
    pub fn identity(goal: &Goal) -> Self {
        Self {
            subgoals: vec![Subgoal::identity(goal)],
            generator: SubgoalSource::Identity,
            cached: false,
        }
    }

    pub fn len(&self) -> usize {
        self.subgoals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgoals.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.subgoals.iter().map(|s| s.text.as_str()).collect()
    }

    /// Drops every second subgoal counting back from the last, which is
    /// always kept; `N` subgoals become `ceil(N / 2)`.
    pub fn limited(&self) -> Self {
        let n = self.subgoals.len();
        let mut kept: Vec<Subgoal> = self
            .subgoals
            .iter()
            .enumerate()
            .filter(|(i, _)| (n - 1 - i) % 2 == 0)
            .map(|(_, s)| s.clone())
            .collect();
        for (i, s) in kept.iter_mut().enumerate() {
            s.index = i + 1;
        }
        Self {
            subgoals: kept,
            generator: self.generator,
            cached: self.cached,
        }
    }
}

/// The hand-written decomposition for a known environment family.
pub fn generate_scripted(goal: &Goal, env_kind: &str) -> Result<SubgoalPlan> {
    match env_kind.parse::<EnvKind>()? {
        EnvKind::Tabular => Ok(SubgoalPlan::identity(goal)),
        EnvKind::MultiRoom(k) => {
            let mut texts: Vec<String> = (1..k).map(|d| format!("open door {d}")).collect();
            texts.push("reach the goal square".to_string());
            Ok(SubgoalPlan::from_texts(goal, &texts, SubgoalSource::Scripted))
        }
    }
}

/// Structural checks every plan must pass before training uses it.
pub fn validate_plan(plan: SubgoalPlan, goal: &Goal) -> Result<SubgoalPlan> {
    if plan.subgoals.is_empty() {
        return Err(Error::InvalidPlan("empty plan".into()));
    }
    if plan.subgoals.len() > goal.horizon {
        return Err(Error::InvalidPlan(format!(
            "N exceeds horizon ({} > {})",
            plan.subgoals.len(),
            goal.horizon
        )));
    }
    for (i, sg) in plan.subgoals.iter().enumerate() {
        if sg.index != i + 1 {
            return Err(Error::InvalidPlan(format!(
                "non-contiguous (position {} has index {})",
                i + 1,
                sg.index
            )));
        }
        if sg.text.trim().is_empty() {
            return Err(Error::InvalidPlan(format!("empty text for subgoal {}", sg.index)));
        }
        if sg.parent != goal.id {
            return Err(Error::InvalidPlan(format!(
                "subgoal {} belongs to {}, not {}",
                sg.index, sg.parent, goal.id
            )));
        }
    }
    Ok(plan)
}

/// Where a run's plan should come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorMode {
    Scripted,
    Remote,
    Identity,
    /// The scripted plan with every second subgoal dropped.
    Limited,
}

impl FromStr for GeneratorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(Self::Scripted),
            "remote" => Ok(Self::Remote),
            "identity" => Ok(Self::Identity),
            "limited" => Ok(Self::Limited),
            other => Err(Error::InvalidConfig(format!("unknown generator {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Scripted => "scripted",
            Self::Remote => "remote",
            Self::Identity => "identity",
            Self::Limited => "limited",
        })
    }
}

/// A plan plus the failures that were skipped over to get it.
#[derive(Debug)]
pub struct ResolvedPlan {
    pub plan: SubgoalPlan,
    pub fallbacks: Vec<Error>,
}

/// Produces a valid plan for `mode`, never failing: a remote error falls back
/// to the script, and a script error to the identity plan.
pub fn resolve_plan(
    req: &SubgoalRequest,
    env_kind: &str,
    mode: GeneratorMode,
    remote: Option<&RemoteGenerator>,
) -> ResolvedPlan {
    let goal = &req.goal;
    let mut fallbacks = Vec::new();
    if mode == GeneratorMode::Identity {
        return ResolvedPlan {
            plan: SubgoalPlan::identity(goal),
            fallbacks,
        };
    }
    if mode == GeneratorMode::Remote {
        let attempt = match remote {
            Some(gen) => gen.generate(req).and_then(|p| validate_plan(p, goal)),
            None => Err(Error::GeneratorTransport("no remote endpoint configured".into())),
        };
        match attempt {
            Ok(plan) => return ResolvedPlan { plan, fallbacks },
            Err(e) => fallbacks.push(e),
        }
    }
    match generate_scripted(goal, env_kind).and_then(|p| validate_plan(p, goal)) {
        Ok(plan) => {
            let plan = if mode == GeneratorMode::Limited {
                plan.limited()
            } else {
                plan
            };
            ResolvedPlan { plan, fallbacks }
        }
        Err(e) => {
            fallbacks.push(e);
            ResolvedPlan {
                plan: SubgoalPlan::identity(goal),
                fallbacks,
            }
        }
    }
}
