use rand::seq::SliceRandom;

use super::awr::stream;
use super::losses::imitation_target_loss;
use super::nets::{Featurizer, PolicyNet, ReferencePolicy};
use crate::core::{Trajectory, Transition};
use crate::envs::grid::N_ACTIONS;
use crate::envs::{GridConfig, GridMultiRoom, LayoutSpec};
use crate::nn::{clip_grad_norm, AdamState};
use crate::{Error, Result};

/// Shortest-path demonstrations: `episodes_per_layout` random starts on each
/// of the given layouts, all built like `template` otherwise.
pub fn oracle_demos(
    template: &GridConfig,
    layout_seeds: &[u64],
    episodes_per_layout: usize,
) -> Result<Vec<Trajectory>> {
    let mut demos = Vec::with_capacity(layout_seeds.len() * episodes_per_layout);
    for &layout in layout_seeds {
        let mut cfg = template.clone();
        cfg.layout = LayoutSpec::Fixed { seed: layout };
        let mut env = GridMultiRoom::new(cfg)?;
        for ep in 0..episodes_per_layout {
            let mut obs = env.reset(layout.wrapping_mul(7919).wrapping_add(ep as u64));
            let mut steps = Vec::new();
            for action in env.oracle_actions() {
                let out = env.step(action)?;
                steps.push(Transition {
                    obs,
                    action,
                    reward: out.reward,
                    next_obs: out.obs.clone(),
                    done: out.done,
                });
                obs = out.obs;
                if out.done {
                    break;
                }
            }
            demos.push(Trajectory::new(env.goal().id, steps));
        }
    }
    Ok(demos)
}

/// Settings for behavior cloning the reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

/// Behavior-clones a goal-conditioned policy from `demos`, then freezes it.
/// Zero epochs yields the uniform policy, tagged `"untrained"`.
pub fn pretrain_reference(feat: &Featurizer, demos: &[Trajectory], cfg: &PretrainConfig) -> Result<ReferencePolicy> {
    let pairs: Vec<&Transition> = demos.iter().flat_map(|d| &d.steps).collect();
    if pairs.is_empty() {
        return Err(Error::NoDemos);
    }
    if cfg.epochs == 0 {
        return ReferencePolicy::uniform(feat.policy_dim(), &cfg.hidden, N_ACTIONS);
    }
    let mut rng = stream(cfg.seed, 7);
    let mut policy = PolicyNet::new(feat.policy_dim(), &cfg.hidden, N_ACTIONS, &mut rng)?;
    let mut opt = AdamState::new(policy.net().num_params(), cfg.lr);
    let goal = feat.goal_slot();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let inputs = feat.policy_batch(chunk.iter().map(|&i| (&pairs[i].obs, goal)));
            let actions: Vec<usize> = chunk.iter().map(|&i| pairs[i].action).collect();
            let mut out = imitation_target_loss(&mut policy, &inputs, &actions)?;
            clip_grad_norm(&mut out.grads, 1.0);
            opt.step(policy.net_mut().params_mut(), &out.grads)?;
        }
    }
    Ok(ReferencePolicy::freeze(
        policy,
        format!("bc:{}-demos:{}-epochs", demos.len(), cfg.epochs),
    ))
}
