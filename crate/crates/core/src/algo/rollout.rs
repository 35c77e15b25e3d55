use rand::Rng;

use super::nets::{Featurizer, PolicyNet};
use crate::core::{Subgoal, Trajectory, Transition};
use crate::envs::{GridConfig, GridEvaluator, GridMultiRoom, GridPredicate};
use crate::nn::functional::{argmax, sample_categorical};
use crate::subgoal_gen::SubgoalPlan;
use crate::{Error, Result};

/// A subgoal plan resolved against one layout: the predicate each subgoal
/// maps to and the condition slot the policy is fed while it is active.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedPlan {
    pub subgoals: Vec<Subgoal>,
    pub predicates: Vec<GridPredicate>,
    pub slots: Vec<usize>,
}

impl ConditionedPlan {
    pub fn new(plan: &SubgoalPlan, evaluator: &GridEvaluator) -> Result<Self> {
        crate::core::check_subgoal_indices(&plan.subgoals)?;
        let mut predicates = Vec::with_capacity(plan.len());
        let mut slots = Vec::with_capacity(plan.len());
        for sg in &plan.subgoals {
            let p = evaluator.resolve(sg).ok_or_else(|| {
                Error::MalformedSubgoals(format!("no predicate for subgoal {:?}", sg.text))
            })?;
            predicates.push(p);
            slots.push(p.slot(evaluator.n_rooms()));
        }
        Ok(Self {
            subgoals: plan.subgoals.clone(),
            predicates,
            slots,
        })
    }

    pub fn len(&self) -> usize {
        self.subgoals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgoals.is_empty()
    }

    /// Condition slot of the subgoal with 1-based `index`.
    pub fn slot_of(&self, index: usize) -> usize {
        self.slots[index - 1]
    }
}

pub(crate) enum ActionMode<'a, R: Rng> {
    Sample(&'a mut R),
    Greedy,
}

/// Plays one episode, conditioning the policy on the active subgoal and
/// moving to the next one on the step after the active one fires.
pub(crate) fn run_episode<R: Rng>(
    env: &mut GridMultiRoom,
    feat: &Featurizer,
    policy: &PolicyNet,
    plan: &ConditionedPlan,
    evaluator: &GridEvaluator,
    seed: u64,
    mut mode: ActionMode<'_, R>,
) -> Result<Trajectory> {
    let mut obs = env.reset(seed);
    let mut active = 0;
    let mut steps = Vec::with_capacity(env.horizon());
    let mut input = vec![0.0; feat.policy_dim()];
    loop {
        input.iter_mut().for_each(|v| *v = 0.0);
        feat.write_policy(&obs, plan.slots[active], &mut input);
        let probs = policy.probs(&input)?;
        let action = match &mut mode {
            ActionMode::Sample(rng) => sample_categorical(&probs, rng.random::<f64>()),
            ActionMode::Greedy => argmax(&probs),
        };
        let out = env.step(action)?;
        let t = Transition {
            obs,
            action,
            reward: out.reward,
            next_obs: out.obs.clone(),
            done: out.done,
        };
        if active + 1 < plan.len() && evaluator.predicate_fires(plan.predicates[active], &t) {
            active += 1;
        }
        steps.push(t);
        obs = out.obs;
        if out.done {
            break;
        }
    }
    Ok(Trajectory::new(env.goal().id, steps))
}

/// Reset seed of the `i`-th evaluation episode. Evaluation starts are fixed
/// per run so successive checkpoints are scored on the same episodes.
pub(crate) fn eval_seed(run_seed: u64, i: usize) -> u64 {
    run_seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(0x5eed_0000_0000)
        .wrapping_add(i as u64)
}

/// Greedy success rate over `episodes` episodes with the given reset seeds.
pub fn evaluate_policy(
    env_cfg: &GridConfig,
    policy: &PolicyNet,
    plan: &SubgoalPlan,
    episodes: usize,
    run_seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes: must be at least 1".into()));
    }
    let mut env = GridMultiRoom::new(env_cfg.clone())?;
    let feat = Featurizer::for_env(&env);
    if feat.policy_dim() != policy.net().input_dim() {
        return Err(Error::IncompatibleCheckpoint(format!(
            "policy expects {} inputs, environment provides {}",
            policy.net().input_dim(),
            feat.policy_dim()
        )));
    }
    let evaluator = GridEvaluator::new(env.layout());
    let conditioned = ConditionedPlan::new(plan, &evaluator)?;
    let mut wins = 0;
    for i in 0..episodes {
        let traj = run_episode::<rand_chacha::ChaCha8Rng>(
            &mut env,
            &feat,
            policy,
            &conditioned,
            &evaluator,
            eval_seed(run_seed, i),
            ActionMode::Greedy,
        )?;
        wins += traj.success as usize;
    }
    Ok(wins as f64 / episodes as f64)
}
