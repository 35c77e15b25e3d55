//! The subgoal-conditioned AWR trainer and its plain goal-conditioned special case.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filter::keep_by_margin;
use super::losses::{awr_policy_loss, imitation_loss, sigmoid_mse, value_loss, Batch};
use super::metrics::MetricsRecord;
use super::nets::{params_checksum, Featurizer, InstructionValueNet, PolicyNet, ReferencePolicy, ValueNet};
use super::rollout::{eval_seed, run_episode, ActionMode, ConditionedPlan};
use super::TrainConfig;
use crate::core::{segment, Goal, ReplayBuffer, SubTrajectory, Subgoal};
use crate::envs::grid::N_ACTIONS;
use crate::envs::{GridConfig, GridEvaluator, GridMultiRoom};
use crate::nn::{clip_grad_norm, AdamState, MlpNet, Tensor2};
use crate::subgoal_gen::SubgoalPlan;
use crate::{Error, Result};

// Independent random streams, so that e.g. turning the imitation update on
// or off does not perturb rollouts or minibatch sampling.
const STREAM_INIT: u64 = 0;
const STREAM_ROLLOUT: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_IMITATION: u64 = 3;
const STREAM_INSTRUCTION: u64 = 4;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-run switches that are not hyperparameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    /// Record a checksum of the policy and critic parameters after every
    /// optimizer step.
    pub trace_params: bool,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            trace_params: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub metrics: Vec<MetricsRecord>,
    pub policy: PolicyNet,
    /// The trained critic's raw network.
    pub critic: MlpNet,
    pub plan: SubgoalPlan,
    /// Present when [`RunOptions::trace_params`] was set.
    pub param_trace: Vec<String>,
    pub env_steps: u64,
}

struct Learner<'a> {
    cfg: &'a TrainConfig,
    feat: Featurizer,
    plan: ConditionedPlan,
    policy: PolicyNet,
    value: ValueNet,
    policy_opt: AdamState,
    value_opt: AdamState,
    buffer: ReplayBuffer,
    sample_rng: ChaCha8Rng,
    imitation_rng: ChaCha8Rng,
    trace: Option<Vec<String>>,
}

struct Sampled {
    batch: Batch,
    /// `[obs | goal]` rows for the reference policy.
    reference_inputs: Tensor2,
}

impl<'a> Learner<'a> {
    fn new(
        cfg: &'a TrainConfig,
        feat: Featurizer,
        plan: ConditionedPlan,
        opts: &RunOptions,
        init: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let policy = PolicyNet::new(feat.policy_dim(), &cfg.hidden, N_ACTIONS, init)?;
        let value = ValueNet::new(&feat, cfg.value_input, &cfg.hidden, init)?;
        Ok(Self {
            policy_opt: AdamState::new(policy.net().num_params(), cfg.lr),
            value_opt: AdamState::new(value.net().num_params(), cfg.lr),
            cfg,
            feat,
            plan,
            policy,
            value,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            sample_rng: stream(opts.seed, STREAM_SAMPLE),
            imitation_rng: stream(opts.seed, STREAM_IMITATION),
            trace: opts.trace_params.then(Vec::new),
        })
    }

    fn record_trace(&mut self) {
        if let Some(trace) = &mut self.trace {
            let mut all = self.policy.net().params().to_vec();
            all.extend_from_slice(self.value.net().params());
            trace.push(params_checksum(&all));
        }
    }

    fn sample(&mut self) -> Result<Sampled> {
        let samples = self.buffer.sample_with(self.cfg.batch_size, &mut self.sample_rng)?;
        let (feat, plan) = (&self.feat, &self.plan);
        let slot = |sg: &Subgoal| plan.slot_of(sg.index);
        let policy_inputs = feat.policy_batch(samples.iter().map(|s| (&s.transition.obs, slot(s.subgoal))));
        let value_inputs = feat.value_batch(
            self.cfg.value_input,
            samples
                .iter()
                .map(|s| (&s.transition.obs, s.transition.action, slot(s.subgoal))),
        );
        let goal = feat.goal_slot();
        let reference_inputs = feat.policy_batch(samples.iter().map(|s| (&s.transition.obs, goal)));
        Ok(Sampled {
            batch: Batch {
                policy_inputs,
                value_inputs,
                actions: samples.iter().map(|s| s.transition.action).collect(),
                returns: samples
                    .iter()
                    .map(|s| discounted_return(self.cfg.return_discount, s.return_bit, s.steps_to_end))
                    .collect(),
            },
            reference_inputs,
        })
    }

    fn value_updates(&mut self, n: usize) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..n {
            let s = self.sample()?;
            let mut out = value_loss(&s.batch, &mut self.value)?;
            clip_grad_norm(&mut out.grads, self.cfg.max_grad_norm);
            self.value_opt.step(self.value.net_mut().params_mut(), &out.grads)?;
            total += out.loss;
            self.record_trace();
        }
        Ok(total / n.max(1) as f64)
    }

    fn awr_updates(&mut self, n: usize) -> Result<(f64, f64)> {
        let (mut total, mut weight) = (0.0, 0.0);
        for _ in 0..n {
            let s = self.sample()?;
            let mut out = awr_policy_loss(&s.batch, &mut self.policy, &self.value, self.cfg.beta, self.cfg.w_max)?;
            clip_grad_norm(&mut out.grads, self.cfg.max_grad_norm);
            self.policy_opt.step(self.policy.net_mut().params_mut(), &out.grads)?;
            total += out.loss;
            weight += out.weights.iter().sum::<f64>() / out.weights.len() as f64;
            self.record_trace();
        }
        let n = n.max(1) as f64;
        Ok((total / n, weight / n))
    }

    fn imitation_updates(&mut self, reference: &ReferencePolicy, n: usize) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..n {
            let s = self.sample()?;
            let mut out = imitation_loss(
                &s.batch.policy_inputs,
                &s.reference_inputs,
                &mut self.policy,
                reference,
                &mut self.imitation_rng,
            )?;
            out.grads.iter_mut().for_each(|g| *g *= self.cfg.imitation_weight);
            clip_grad_norm(&mut out.grads, self.cfg.max_grad_norm);
            self.policy_opt.step(self.policy.net_mut().params_mut(), &out.grads)?;
            total += out.loss;
            self.record_trace();
        }
        Ok(total / n.max(1) as f64)
    }
}

/// Learns `P(sub-trajectory succeeds | first observation, condition)` and
/// uses it to drop uninformative sub-trajectories before replay.
struct InstructionFilter {
    net: InstructionValueNet,
    opt: AdamState,
    rng: ChaCha8Rng,
    threshold: f64,
}

impl InstructionFilter {
    fn apply(
        &mut self,
        cfg: &TrainConfig,
        feat: &Featurizer,
        plan: &ConditionedPlan,
        subs: Vec<SubTrajectory>,
    ) -> Result<Vec<SubTrajectory>> {
        if subs.is_empty() {
            return Ok(subs);
        }
        let inputs = feat.policy_batch(subs.iter().map(|s| (&s.steps[0].obs, plan.slot_of(s.subgoal.index))));
        let predicted = self.net.predict(&inputs)?;
        let targets: Vec<f64> = subs
            .iter()
            .map(|s| cfg.discount.powi(s.steps.len() as i32 - 1) * s.return_bit)
            .collect();
        for _ in 0..cfg.updates_for(cfg.value_epochs, subs.len() as u64) {
            let idx: Vec<usize> = (0..cfg.batch_size.min(subs.len()))
                .map(|_| self.rng.random_range(0..subs.len()))
                .collect();
            let mut x = Tensor2::zeros(idx.len(), inputs.cols());
            for (r, &i) in idx.iter().enumerate() {
                x.row_mut(r).copy_from_slice(inputs.row(i));
            }
            let t: Vec<f64> = idx.iter().map(|&i| targets[i]).collect();
            let mut out = sigmoid_mse(self.net.net_mut(), &x, &t)?;
            clip_grad_norm(&mut out.grads, cfg.max_grad_norm);
            self.opt.step(self.net.net_mut().params_mut(), &out.grads)?;
        }
        Ok(subs
            .into_iter()
            .zip(predicted)
            .filter(|(s, v)| keep_by_margin(s.return_bit == 1.0, *v, self.threshold))
            .map(|(s, _)| s)
            .collect())
    }
}

struct EpochStats {
    episodes: usize,
    successes: usize,
    steps: u64,
}

/// `γ^k · R`: the binary sub-trajectory return seen from `k` steps before
/// the end of the slice. `γ = 1` gives the raw bit.
pub fn discounted_return(discount: f64, return_bit: f64, steps_to_end: usize) -> f64 {
    if discount == 1.0 {
        return return_bit;
    }
    discount.powi(steps_to_end as i32) * return_bit
}

fn should_eval(cfg: &TrainConfig, before: u64, after: u64, done: bool) -> bool {
    done || (cfg.eval_interval > 0 && before / cfg.eval_interval != after / cfg.eval_interval)
}

fn eval_greedy(
    env: &mut GridMultiRoom,
    feat: &Featurizer,
    policy: &PolicyNet,
    plan: &ConditionedPlan,
    evaluator: &GridEvaluator,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let mut wins = 0;
    for i in 0..episodes {
        let t = run_episode::<ChaCha8Rng>(env, feat, policy, plan, evaluator, eval_seed(seed, i), ActionMode::Greedy)?;
        wins += t.success as usize;
    }
    Ok(wins as f64 / episodes.max(1) as f64)
}

/// Variational subgoal-conditioned training: roll out with the policy
/// conditioned on the active subgoal, segment each episode post hoc, filter,
/// replay, then alternate critic, AWR and imitation updates.
pub fn train_vscrl(
    cfg: &TrainConfig,
    env_cfg: &GridConfig,
    plan: &SubgoalPlan,
    reference: &ReferencePolicy,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut env = GridMultiRoom::new(env_cfg.clone())?;
    let goal = env.goal();
    let plan = crate::subgoal_gen::validate_plan(plan.clone(), &goal)?;
    let feat = Featurizer::for_env(&env);
    let evaluator = GridEvaluator::new(env.layout());
    let conditioned = ConditionedPlan::new(&plan, &evaluator)?;
    if reference.policy().net().input_dim() != feat.policy_dim() {
        return Err(Error::IncompatibleCheckpoint(format!(
            "reference expects {} inputs, environment provides {}",
            reference.policy().net().input_dim(),
            feat.policy_dim()
        )));
    }

    let mut init = stream(opts.seed, STREAM_INIT);
    let mut learner = Learner::new(cfg, feat, conditioned.clone(), opts, &mut init)?;
    let mut filter = match cfg.filter_threshold {
        Some(threshold) => {
            let net = InstructionValueNet::new(&feat, &cfg.hidden, &mut init)?;
            Some(InstructionFilter {
                opt: AdamState::new(net.net().num_params(), cfg.lr),
                net,
                rng: stream(opts.seed, STREAM_INSTRUCTION),
                threshold,
            })
        }
        None => None,
    };
    let mut rollout_rng = stream(opts.seed, STREAM_ROLLOUT);
    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut env_steps = 0u64;
    let mut epoch = 0;

    while env_steps < cfg.total_steps {
        let before = env_steps;
        let budget = cfg.steps_per_epoch.min(cfg.total_steps - env_steps);
        let mut stats = EpochStats {
            episodes: 0,
            successes: 0,
            steps: 0,
        };
        let mut fresh: Vec<SubTrajectory> = Vec::new();
        while stats.steps < budget {
            let seed = rollout_rng.random::<u64>();
            let traj = run_episode(
                &mut env,
                &feat,
                &learner.policy,
                &conditioned,
                &evaluator,
                seed,
                ActionMode::Sample(&mut rollout_rng),
            )?;
            stats.steps += traj.len() as u64;
            stats.episodes += 1;
            stats.successes += traj.success as usize;
            fresh.extend(segment(&traj, &plan.subgoals, &evaluator)?);
        }
        env_steps += stats.steps;
        let fresh = match &mut filter {
            Some(f) => f
                .apply(cfg, &feat, &conditioned, fresh)
                .map_err(|e| training_error(epoch, e))?,
            None => fresh,
        };
        for sub in fresh {
            learner.buffer.push(sub, goal.clone());
        }

        let record = update_and_record(
            &mut learner,
            Some(reference),
            &mut env,
            &evaluator,
            epoch,
            &stats,
            should_eval(cfg, before, env_steps, env_steps >= cfg.total_steps),
            env_steps,
            opts.seed,
            &start,
        )
        .map_err(|e| training_error(epoch, e))?;
        observer(&record);
        metrics.push(record);
        epoch += 1;
    }

    Ok(TrainOutput {
        metrics,
        policy: learner.policy,
        critic: learner.value.net().clone(),
        plan,
        param_trace: learner.trace.unwrap_or_default(),
        env_steps,
    })
}

fn training_error(epoch: usize, e: Error) -> Error {
    match e {
        Error::Training { .. } => e,
        other => Error::Training {
            epoch,
            source: Box::new(other),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn update_and_record(
    learner: &mut Learner<'_>,
    reference: Option<&ReferencePolicy>,
    env: &mut GridMultiRoom,
    evaluator: &GridEvaluator,
    epoch: usize,
    stats: &EpochStats,
    evaluate: bool,
    env_steps: u64,
    seed: u64,
    start: &Instant,
) -> Result<MetricsRecord> {
    let cfg = learner.cfg;
    let mut record = MetricsRecord {
        epoch,
        env_steps,
        train_success: stats.successes as f64 / stats.episodes.max(1) as f64,
        eval_success: None,
        loss_awr: None,
        loss_value: 0.0,
        loss_imitation: None,
        mean_awr_weight: None,
        wall_ms: 0,
    };
    if !learner.buffer.is_empty() {
        record.loss_value = learner.value_updates(cfg.updates_for(cfg.value_epochs, stats.steps))?;
        if !cfg.skip_policy_gradient {
            let (loss, weight) = learner.awr_updates(cfg.updates_for(cfg.awr_epochs, stats.steps))?;
            record.loss_awr = Some(loss);
            record.mean_awr_weight = Some(weight);
        }
        if let Some(reference) = reference.filter(|_| cfg.imitation_weight > 0.0) {
            let n = cfg.updates_for(cfg.imitation_epochs, stats.steps);
            record.loss_imitation = Some(learner.imitation_updates(reference, n)?);
        }
    }
    if evaluate && cfg.eval_episodes > 0 {
        record.eval_success = Some(eval_greedy(
            env,
            &learner.feat,
            &learner.policy,
            &learner.plan,
            evaluator,
            cfg.eval_episodes,
            seed,
        )?);
    }
    record.wall_ms = start.elapsed().as_millis() as u64;
    Ok(record)
}

/// Plain goal-conditioned AWR: the policy and critic always see the goal,
/// and every episode is replayed whole with its success bit as the return.
pub fn train_gcawr(
    cfg: &TrainConfig,
    env_cfg: &GridConfig,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut env = GridMultiRoom::new(env_cfg.clone())?;
    let goal: Goal = env.goal();
    let plan = SubgoalPlan::identity(&goal);
    let feat = Featurizer::for_env(&env);
    let evaluator = GridEvaluator::new(env.layout());
    let conditioned = ConditionedPlan::new(&plan, &evaluator)?;
    let mut learner = Learner::new(cfg, feat, conditioned.clone(), opts, &mut stream(opts.seed, STREAM_INIT))?;
    let mut rollout_rng = stream(opts.seed, STREAM_ROLLOUT);
    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut env_steps = 0u64;
    let mut epoch = 0;

    while env_steps < cfg.total_steps {
        let before = env_steps;
        let budget = cfg.steps_per_epoch.min(cfg.total_steps - env_steps);
        let mut stats = EpochStats {
            episodes: 0,
            successes: 0,
            steps: 0,
        };
        while stats.steps < budget {
            let seed = rollout_rng.random::<u64>();
            let traj = run_episode(
                &mut env,
                &feat,
                &learner.policy,
                &conditioned,
                &evaluator,
                seed,
                ActionMode::Sample(&mut rollout_rng),
            )?;
            stats.steps += traj.len() as u64;
            stats.episodes += 1;
            stats.successes += traj.success as usize;
            let return_bit = if traj.success { 1.0 } else { 0.0 };
            learner.buffer.push(
                SubTrajectory {
                    subgoal: plan.subgoals[0].clone(),
                    offset: 0,
                    steps: traj.steps,
                    return_bit,
                },
                goal.clone(),
            );
        }
        env_steps += stats.steps;
        let record = update_and_record(
            &mut learner,
            None,
            &mut env,
            &evaluator,
            epoch,
            &stats,
            should_eval(cfg, before, env_steps, env_steps >= cfg.total_steps),
            env_steps,
            opts.seed,
            &start,
        )
        .map_err(|e| training_error(epoch, e))?;
        observer(&record);
        metrics.push(record);
        epoch += 1;
    }

    Ok(TrainOutput {
        metrics,
        policy: learner.policy,
        critic: learner.value.net().clone(),
        plan,
        param_trace: learner.trace.unwrap_or_default(),
        env_steps,
    })
}

