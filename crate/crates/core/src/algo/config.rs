use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether the critic sees the action (`V(s, a, sg)`) or only the state (`V(s, sg)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueInput {
    StateAction,
    State,
}

/// Hyperparameters shared by the AWR-style trainers and the PPO baseline.
/// Defaults follow the MiniGrid settings: batch 256, lr 1e-3, gamma 0.99,
/// four update epochs per loss, two hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    /// PPO and instruction-value discount.
    pub discount: f64,
    /// Discount applied to the binary sub-trajectory return when it labels
    /// each transition for the critic and the AWR weights. 1 uses the raw bit.
    pub return_discount: f64,
    pub lr: f64,
    pub hidden: Vec<usize>,
    /// Passes over one epoch's worth of fresh data, per loss.
    pub value_epochs: usize,
    pub awr_epochs: usize,
    pub imitation_epochs: usize,
    /// AWR temperature.
    pub beta: f64,
    /// Optimality temperature.
    pub alpha: f64,
    /// Clamp on the AWR weight.
    pub w_max: f64,
    /// Scales the imitation-loss gradient; 0 disables the imitation update.
    pub imitation_weight: f64,
    /// Skip the AWR update entirely.
    pub skip_policy_gradient: bool,
    pub value_input: ValueInput,
    /// Margin for the instruction-level filter; `None` disables filtering.
    pub filter_threshold: Option<f64>,
    /// Environment steps collected between updates.
    pub steps_per_epoch: u64,
    /// Replay capacity in sub-trajectories.
    pub buffer_capacity: usize,
    pub max_grad_norm: f64,
    pub eval_episodes: usize,
    /// Evaluate every this many environment steps (and once at the end).
    pub eval_interval: u64,
    pub ppo: PpoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub update_epochs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            update_epochs: 4,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            total_steps: 200_000,
            discount: 0.99,
            return_discount: 1.0,
            lr: 1e-3,
            hidden: vec![64, 64],
            value_epochs: 4,
            awr_epochs: 4,
            imitation_epochs: 4,
            beta: 1.0,
            alpha: 1.0,
            w_max: 20.0,
            imitation_weight: 1.0,
            skip_policy_gradient: false,
            value_input: ValueInput::StateAction,
            filter_threshold: None,
            steps_per_epoch: 2048,
            buffer_capacity: 2000,
            max_grad_norm: 0.5,
            eval_episodes: 100,
            eval_interval: 10_000,
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The settings the MultiRoom runs are tuned with: a state-only critic,
    /// a sharp AWR temperature, no imitation, a discounted return label and
    /// the instruction filter keeping only sub-trajectories that succeed.
    pub fn multiroom_tuned() -> Self {
        Self {
            beta: 0.2,
            return_discount: 0.9,
            imitation_weight: 0.0,
            value_input: ValueInput::State,
            filter_threshold: Some(0.0),
            max_grad_norm: 5.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::InvalidConfig(format!("{key}: {why}")));
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.beta > 0.0) {
            return bad("beta", "must be positive");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha", "must be positive");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount", "must lie in (0, 1]");
        }
        if !(self.return_discount > 0.0 && self.return_discount <= 1.0) {
            return bad("return_discount", "must lie in (0, 1]");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if !(self.w_max >= 1.0) {
            return bad("w_max", "must be at least 1");
        }
        if !(self.imitation_weight >= 0.0) {
            return bad("imitation_weight", "must be nonnegative");
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch", "must be at least 1");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be at least 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive");
        }
        if !(self.ppo.clip > 0.0) || !(0.0..=1.0).contains(&self.ppo.gae_lambda) {
            return bad("ppo", "clip must be positive and gae_lambda in [0, 1]");
        }
        Ok(())
    }

    /// Gradient steps per loss per epoch: `epochs` passes over the fresh data.
    pub(crate) fn updates_for(&self, epochs: usize, fresh_steps: u64) -> usize {
        let per_pass = (fresh_steps as usize).div_ceil(self.batch_size).max(1);
        epochs * per_pass
    }
}
