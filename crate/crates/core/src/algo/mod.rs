//! Trainers: subgoal-conditioned AWR with imitation of a frozen reference,
//! its plain goal-conditioned special case, and a PPO baseline.

mod awr;
mod config;
mod filter;
pub mod losses;
mod metrics;
mod nets;
mod ppo;
mod reference;
mod rollout;

pub use awr::{discounted_return, train_gcawr, train_vscrl, RunOptions, TrainOutput};
pub use config::{PpoConfig, TrainConfig, ValueInput};
pub use filter::{instruction_filter, keep_by_margin};
pub use losses::{awr_weight, Batch};
pub use metrics::{final_eval, read_metrics_jsonl, steps_to_success, write_metrics_jsonl, MetricsRecord};
pub use nets::{params_checksum, Featurizer, InstructionValueNet, PolicyNet, ReferencePolicy, ValueNet};
pub use ppo::{gae, train_ppo};
pub use reference::{oracle_demos, pretrain_reference, PretrainConfig};
pub use rollout::{evaluate_policy, ConditionedPlan};
