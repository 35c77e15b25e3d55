use rand::Rng;
use sha2::{Digest, Sha256};

use super::ValueInput;
use crate::core::Observation;
use crate::envs::grid::{GridEncoder, N_ACTIONS};
use crate::nn::functional::{log_softmax, sigmoid};
use crate::nn::{Activation, MlpNet, Tensor2};
use crate::{Error, Result};

/// Builds network inputs: encoded observation, optional action one-hot, and
/// a one-hot over the `n_conditions` condition slots (doors, then the goal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    encoder: GridEncoder,
    n_conditions: usize,
}

impl Featurizer {
    pub fn new(encoder: GridEncoder, n_conditions: usize) -> Self {
        Self { encoder, n_conditions }
    }

    pub fn for_env(env: &crate::envs::GridMultiRoom) -> Self {
        Self::new(env.encoder(), env.n_rooms())
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn n_conditions(&self) -> usize {
        self.n_conditions
    }

    /// Slot that stands for the goal itself.
    pub fn goal_slot(&self) -> usize {
        self.n_conditions - 1
    }

    pub fn policy_dim(&self) -> usize {
        self.obs_dim() + self.n_conditions
    }

    pub fn value_dim(&self, input: ValueInput) -> usize {
        match input {
            ValueInput::StateAction => self.obs_dim() + N_ACTIONS + self.n_conditions,
            ValueInput::State => self.policy_dim(),
        }
    }

    /// Writes `[obs | slot one-hot]` into a zeroed row.
    pub fn write_policy(&self, obs: &Observation, slot: usize, out: &mut [f64]) {
        let d = self.obs_dim();
        self.encoder.encode_into(obs, &mut out[..d]);
        out[d + slot] = 1.0;
    }

    /// Writes `[obs | action one-hot | slot one-hot]` (or the policy layout
    /// when `action` is `None`) into a zeroed row.
    pub fn write_value(&self, obs: &Observation, action: Option<usize>, slot: usize, out: &mut [f64]) {
        let d = self.obs_dim();
        self.encoder.encode_into(obs, &mut out[..d]);
        match action {
            Some(a) => {
                out[d + a] = 1.0;
                out[d + N_ACTIONS + slot] = 1.0;
            }
            None => out[d + slot] = 1.0,
        }
    }

    pub fn policy_batch<'a>(&self, rows: impl ExactSizeIterator<Item = (&'a Observation, usize)>) -> Tensor2 {
        let mut t = Tensor2::zeros(rows.len(), self.policy_dim());
        for (r, (obs, slot)) in rows.enumerate() {
            self.write_policy(obs, slot, t.row_mut(r));
        }
        t
    }

    pub fn value_batch<'a>(
        &self,
        input: ValueInput,
        rows: impl ExactSizeIterator<Item = (&'a Observation, usize, usize)>,
    ) -> Tensor2 {
        let mut t = Tensor2::zeros(rows.len(), self.value_dim(input));
        for (r, (obs, action, slot)) in rows.enumerate() {
            let a = (input == ValueInput::StateAction).then_some(action);
            self.write_value(obs, a, slot, t.row_mut(r));
        }
        t
    }
}

fn check_output(net: &MlpNet, width: usize, what: &str) -> Result<()> {
    if net.output_dim() != width || net.output_activation() != Activation::Identity {
        return Err(Error::IncompatibleCheckpoint(format!(
            "{what} needs an identity output layer of width {width}, got {} ({})",
            net.output_dim(),
            net.output_activation().name()
        )));
    }
    Ok(())
}

fn mlp<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<MlpNet> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    let mut net = MlpNet::new(&sizes, Activation::Relu, Activation::Identity, rng)?;
    // Near-uniform initial policy / near-0.5 initial values.
    net.scale_output_layer(0.01);
    Ok(net)
}

/// `π(a | s, c)`: logits over the discrete actions.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    net: MlpNet,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], n_actions: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: mlp(input_dim, hidden, n_actions, rng)?,
        })
    }

    pub fn from_net(net: MlpNet) -> Result<Self> {
        check_output(&net, net.output_dim(), "policy")?;
        Ok(Self { net })
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpNet {
        &mut self.net
    }

    pub fn into_net(self) -> MlpNet {
        self.net
    }

    pub fn n_actions(&self) -> usize {
        self.net.output_dim()
    }

    /// Row-wise log-probabilities.
    pub fn log_probs(&self, inputs: &Tensor2) -> Result<Tensor2> {
        let logits = self.net.infer(inputs)?;
        Ok(log_softmax_rows(&logits))
    }

    /// Action probabilities for a single input row.
    pub fn probs(&self, input: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor2::from_vec(1, input.len(), input.to_vec())?;
        let lp = self.log_probs(&t)?;
        Ok(lp.row(0).iter().map(|v| v.exp()).collect())
    }
}

pub(crate) fn log_softmax_rows(logits: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        log_softmax(logits.row(r), out.row_mut(r));
    }
    out
}

/// Critic trained on binary returns; predictions are squashed into (0, 1).
#[derive(Debug, Clone)]
pub struct ValueNet {
    net: MlpNet,
    input: ValueInput,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(feat: &Featurizer, input: ValueInput, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: mlp(feat.value_dim(input), hidden, 1, rng)?,
            input,
        })
    }

    /// Wraps a raw network; `input_dim` must match the chosen input layout.
    pub fn from_net(net: MlpNet, input: ValueInput) -> Result<Self> {
        check_output(&net, 1, "value network")?;
        Ok(Self { net, input })
    }

    pub fn input(&self) -> ValueInput {
        self.input
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpNet {
        &mut self.net
    }

    pub fn predict(&self, inputs: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.net.infer(inputs)?.data().iter().map(|&z| sigmoid(z)).collect())
    }
}

/// Predicts, from the first observation and a condition slot, the chance
/// that the instruction gets accomplished.
#[derive(Debug, Clone)]
pub struct InstructionValueNet {
    net: MlpNet,
}

impl InstructionValueNet {
    pub fn new<R: Rng + ?Sized>(feat: &Featurizer, hidden: &[usize], rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: mlp(feat.policy_dim(), hidden, 1, rng)?,
        })
    }

    pub fn from_net(net: MlpNet) -> Result<Self> {
        check_output(&net, 1, "instruction value network")?;
        Ok(Self { net })
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpNet {
        &mut self.net
    }

    pub fn predict(&self, inputs: &Tensor2) -> Result<Vec<f64>> {
        Ok(self.net.infer(inputs)?.data().iter().map(|&z| sigmoid(z)).collect())
    }
}

/// A frozen goal-conditioned policy. There is deliberately no way to get
/// mutable access to its parameters.
#[derive(Debug, Clone)]
pub struct ReferencePolicy {
    policy: PolicyNet,
    provenance: String,
}

impl ReferencePolicy {
    pub fn freeze(policy: PolicyNet, provenance: impl Into<String>) -> Self {
        Self {
            policy,
            provenance: provenance.into(),
        }
    }

    /// Uniform over actions: all output weights and biases are zero.
    pub fn uniform(input_dim: usize, hidden: &[usize], n_actions: usize) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        let net = MlpNet::zeros(&sizes, Activation::Relu, Activation::Identity)?;
        Ok(Self::freeze(PolicyNet { net }, "untrained"))
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    /// How the reference was obtained, e.g. `"untrained"` or `"bc:..."`.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn checksum(&self) -> String {
        params_checksum(self.policy.net.params())
    }
}

/// SHA-256 over the little-endian bytes of a parameter vector.
pub fn params_checksum(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}
