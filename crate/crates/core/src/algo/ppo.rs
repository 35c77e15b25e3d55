//! Clipped-surrogate PPO on the goal-conditioned task, no subgoals.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::awr::{stream, RunOptions, TrainOutput};
use super::losses::{ppo_actor_loss, ppo_critic_loss};
use super::metrics::MetricsRecord;
use super::nets::{Featurizer, PolicyNet};
use super::rollout::{eval_seed, run_episode, ActionMode, ConditionedPlan};
use super::TrainConfig;
use crate::core::Observation;
use crate::envs::grid::N_ACTIONS;
use crate::envs::{GridConfig, GridEvaluator, GridMultiRoom};
use crate::nn::functional::sample_categorical;
use crate::nn::{clip_grad_norm, Activation, AdamState, MlpNet, Tensor2};
use crate::subgoal_gen::SubgoalPlan;
use crate::{Error, Result};

struct Step {
    obs: Observation,
    action: usize,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
}

/// Generalized advantage estimates and returns for a sequence of steps whose
/// episodes all end inside the sequence.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_adv = 0.0;
            next_value = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

pub fn train_ppo(
    cfg: &TrainConfig,
    env_cfg: &GridConfig,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut env = GridMultiRoom::new(env_cfg.clone())?;
    let goal = env.goal();
    let plan = SubgoalPlan::identity(&goal);
    let feat = Featurizer::for_env(&env);
    let evaluator = GridEvaluator::new(env.layout());
    let conditioned = ConditionedPlan::new(&plan, &evaluator)?;
    let slot = feat.goal_slot();

    let mut init = stream(opts.seed, 0);
    let mut policy = PolicyNet::new(feat.policy_dim(), &cfg.hidden, N_ACTIONS, &mut init)?;
    let mut sizes = vec![feat.policy_dim()];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(1);
    let mut critic = MlpNet::new(&sizes, Activation::Relu, Activation::Identity, &mut init)?;
    let mut actor_opt = AdamState::new(policy.net().num_params(), cfg.lr);
    let mut critic_opt = AdamState::new(critic.num_params(), cfg.lr);
    let mut rollout_rng = stream(opts.seed, 1);
    let mut sample_rng = stream(opts.seed, 2);

    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut env_steps = 0u64;
    let mut epoch = 0;
    let mut input = vec![0.0; feat.policy_dim()];

    while env_steps < cfg.total_steps {
        let before = env_steps;
        let budget = cfg.steps_per_epoch.min(cfg.total_steps - env_steps);
        let mut steps: Vec<Step> = Vec::with_capacity(budget as usize + env.horizon());
        let (mut episodes, mut successes) = (0usize, 0usize);
        while (steps.len() as u64) < budget {
            let mut obs = env.reset(rollout_rng.random::<u64>());
            loop {
                input.iter_mut().for_each(|v| *v = 0.0);
                feat.write_policy(&obs, slot, &mut input);
                let probs = policy.probs(&input)?;
                let action = sample_categorical(&probs, rollout_rng.random::<f64>());
                let x = Tensor2::from_vec(1, input.len(), input.clone())?;
                let value = critic.infer(&x)?.data()[0];
                let out = env.step(action)?;
                steps.push(Step {
                    obs,
                    action,
                    log_prob: probs[action].ln(),
                    value,
                    reward: out.reward,
                    done: out.done,
                });
                obs = out.obs;
                if out.done {
                    episodes += 1;
                    successes += (out.reward == 1.0) as usize;
                    break;
                }
            }
        }
        env_steps += steps.len() as u64;

        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = steps.iter().map(|s| s.done).collect();
        let (mut adv, returns) = gae(&rewards, &values, &dones, cfg.discount, cfg.ppo.gae_lambda);
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64).sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));

        let (mut actor_total, mut critic_total, mut updates) = (0.0, 0.0, 0usize);
        let mut order: Vec<usize> = (0..steps.len()).collect();
        for _ in 0..cfg.ppo.update_epochs {
            order.shuffle(&mut sample_rng);
            for chunk in order.chunks(cfg.batch_size) {
                let inputs = feat.policy_batch(chunk.iter().map(|&i| (&steps[i].obs, slot)));
                let actions: Vec<usize> = chunk.iter().map(|&i| steps[i].action).collect();
                let old: Vec<f64> = chunk.iter().map(|&i| steps[i].log_prob).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let r: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                let (mut actor, _) =
                    ppo_actor_loss(&mut policy, &inputs, &actions, &old, &a, cfg.ppo.clip, cfg.ppo.entropy_coef)
                        .map_err(|e| wrap(epoch, e))?;
                clip_grad_norm(&mut actor.grads, cfg.max_grad_norm);
                actor_opt
                    .step(policy.net_mut().params_mut(), &actor.grads)
                    .map_err(|e| wrap(epoch, e))?;
                let mut c = ppo_critic_loss(&mut critic, &inputs, &r, cfg.ppo.value_coef).map_err(|e| wrap(epoch, e))?;
                clip_grad_norm(&mut c.grads, cfg.max_grad_norm);
                critic_opt.step(critic.params_mut(), &c.grads).map_err(|e| wrap(epoch, e))?;
                actor_total += actor.loss;
                critic_total += c.loss;
                updates += 1;
            }
        }

        let evaluate = env_steps >= cfg.total_steps
            || (cfg.eval_interval > 0 && before / cfg.eval_interval != env_steps / cfg.eval_interval);
        let eval_success = if evaluate && cfg.eval_episodes > 0 {
            let mut wins = 0;
            for i in 0..cfg.eval_episodes {
                let t = run_episode::<rand_chacha::ChaCha8Rng>(
                    &mut env,
                    &feat,
                    &policy,
                    &conditioned,
                    &evaluator,
                    eval_seed(opts.seed, i),
                    ActionMode::Greedy,
                )?;
                wins += t.success as usize;
            }
            Some(wins as f64 / cfg.eval_episodes as f64)
        } else {
            None
        };
        let record = MetricsRecord {
            epoch,
            env_steps,
            train_success: successes as f64 / episodes.max(1) as f64,
            eval_success,
            loss_awr: Some(actor_total / updates.max(1) as f64),
            loss_value: critic_total / updates.max(1) as f64,
            loss_imitation: None,
            mean_awr_weight: None,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        observer(&record);
        metrics.push(record);
        epoch += 1;
    }

    Ok(TrainOutput {
        metrics,
        policy,
        critic,
        plan,
        param_trace: Vec::new(),
        env_steps,
    })
}

fn wrap(epoch: usize, e: Error) -> Error {
    Error::Training {
        epoch,
        source: Box::new(e),
    }
}
