//! Batched losses with hand-derived gradients. Each returns the scalar loss
//! and the gradient with respect to the network's flat parameter vector.

use rand::Rng;

use super::nets::{log_softmax_rows, PolicyNet, ReferencePolicy, ValueNet};
use crate::nn::functional::{sample_categorical, sigmoid};
use crate::nn::{MlpNet, Tensor2};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// `min(exp(advantage / beta), w_max)`.
pub fn awr_weight(advantage: f64, beta: f64, w_max: f64) -> f64 {
    (advantage / beta).exp().min(w_max)
}

/// One minibatch for the critic and the AWR actor update.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[obs | condition]` rows.
    pub policy_inputs: Tensor2,
    /// Critic rows, laid out per the critic's `ValueInput`.
    pub value_inputs: Tensor2,
    pub actions: Vec<usize>,
    /// Sub-trajectory returns in [0, 1], discounted to each transition.
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AwrLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `-mean[log π(a|s,sg) · min(exp((R - V)/β), W_max)]`, weights held constant.
pub fn awr_policy_loss(batch: &Batch, policy: &mut PolicyNet, value: &ValueNet, beta: f64, w_max: f64) -> Result<AwrLoss> {
    let v = value.predict(&batch.value_inputs)?;
    let mut weights = Vec::with_capacity(batch.len());
    for (&r, &vi) in batch.returns.iter().zip(&v) {
        let w = awr_weight(r - vi, beta, w_max);
        if !w.is_finite() || (r - vi).is_nan() {
            return Err(Error::nan("awr weight"));
        }
        weights.push(w);
    }
    let (loss, grads) = weighted_nll(policy.net_mut(), &batch.policy_inputs, &batch.actions, &weights)?;
    Ok(AwrLoss { loss, grads, weights })
}

/// `-mean[w_i log π(a_i | x_i)]` and its parameter gradient.
fn weighted_nll(net: &mut MlpNet, inputs: &Tensor2, actions: &[usize], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    let b = actions.len() as f64;
    let logits = net.forward(inputs)?;
    let lp = log_softmax_rows(&logits);
    let mut dlogits = Tensor2::zeros(lp.rows(), lp.cols());
    let mut loss = 0.0;
    for (r, (&a, &w)) in actions.iter().zip(weights).enumerate() {
        loss -= w * lp.get(r, a);
        let d = dlogits.row_mut(r);
        for (j, (dj, &l)) in d.iter_mut().zip(lp.row(r)).enumerate() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            *dj = -w * (onehot - l.exp()) / b;
        }
    }
    let grads = net.backward(&dlogits)?;
    Ok((loss / b, grads))
}

/// Mean squared error between sigmoid outputs and `targets`.
pub fn sigmoid_mse(net: &mut MlpNet, inputs: &Tensor2, targets: &[f64]) -> Result<LossGrad> {
    let b = targets.len() as f64;
    let z = net.forward(inputs)?;
    let mut dz = Tensor2::zeros(z.rows(), 1);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let v = sigmoid(z.get(r, 0));
        let e = v - t;
        loss += e * e;
        dz.data_mut()[r] = 2.0 * e * v * (1.0 - v) / b;
    }
    let grads = net.backward(&dz)?;
    Ok(LossGrad { loss: loss / b, grads })
}

/// `mean[(V(s,a,sg) - R)^2]`.
pub fn value_loss(batch: &Batch, value: &mut ValueNet) -> Result<LossGrad> {
    sigmoid_mse(value.net_mut(), &batch.value_inputs, &batch.returns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    /// The sampled reference actions.
    pub ref_actions: Vec<usize>,
}

/// Samples `a_ref ~ π_ref(·|s, g)` per row and returns `-mean log π(a_ref|s, sg)`.
///
/// `policy_inputs` carry the subgoal condition, `reference_inputs` the goal
/// condition, row for row.
pub fn imitation_loss<R: Rng + ?Sized>(
    policy_inputs: &Tensor2,
    reference_inputs: &Tensor2,
    policy: &mut PolicyNet,
    reference: &ReferencePolicy,
    rng: &mut R,
) -> Result<ImitationLoss> {
    let ref_lp = reference.policy().log_probs(reference_inputs)?;
    let mut probs = vec![0.0; ref_lp.cols()];
    let ref_actions: Vec<usize> = (0..ref_lp.rows())
        .map(|r| {
            for (p, l) in probs.iter_mut().zip(ref_lp.row(r)) {
                *p = l.exp();
            }
            sample_categorical(&probs, rng.random::<f64>())
        })
        .collect();
    let ones = vec![1.0; ref_actions.len()];
    let (loss, grads) = weighted_nll(policy.net_mut(), policy_inputs, &ref_actions, &ones)?;
    Ok(ImitationLoss { loss, grads, ref_actions })
}

/// `-mean log π(a_i | x_i)` for given target actions (behavior cloning).
pub fn imitation_target_loss(policy: &mut PolicyNet, inputs: &Tensor2, actions: &[usize]) -> Result<LossGrad> {
    let ones = vec![1.0; actions.len()];
    let (loss, grads) = weighted_nll(policy.net_mut(), inputs, actions, &ones)?;
    Ok(LossGrad { loss, grads })
}

/// Clipped-surrogate actor loss minus an entropy bonus.
pub fn ppo_actor_loss(
    policy: &mut PolicyNet,
    inputs: &Tensor2,
    actions: &[usize],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> Result<(LossGrad, f64)> {
    let b = actions.len() as f64;
    let logits = policy.net_mut().forward(inputs)?;
    let lp = log_softmax_rows(&logits);
    let mut dlogits = Tensor2::zeros(lp.rows(), lp.cols());
    let (mut loss, mut entropy_sum) = (0.0, 0.0);
    for (r, &a) in actions.iter().enumerate() {
        let row = lp.row(r);
        let ratio = (row[a] - old_log_probs[r]).exp();
        let adv = advantages[r];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
        let surrogate_grad = if unclipped <= clipped { ratio * adv } else { 0.0 };
        let entropy: f64 = -row.iter().map(|l| l.exp() * l).sum::<f64>();
        loss -= unclipped.min(clipped) + entropy_coef * entropy;
        entropy_sum += entropy;
        let d = dlogits.row_mut(r);
        for (j, (dj, &l)) in d.iter_mut().zip(row).enumerate() {
            let p = l.exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            *dj = (-surrogate_grad * (onehot - p) + entropy_coef * p * (l + entropy)) / b;
        }
    }
    let grads = policy.net_mut().backward(&dlogits)?;
    Ok((LossGrad { loss: loss / b, grads }, entropy_sum / b))
}

/// `coef · mean[(V(s) - target)^2]` for an unsquashed critic.
pub fn ppo_critic_loss(critic: &mut MlpNet, inputs: &Tensor2, targets: &[f64], coef: f64) -> Result<LossGrad> {
    let b = targets.len() as f64;
    let v = critic.forward(inputs)?;
    let mut dv = Tensor2::zeros(v.rows(), 1);
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let e = v.get(r, 0) - t;
        loss += coef * e * e;
        dv.data_mut()[r] = 2.0 * coef * e / b;
    }
    let grads = critic.backward(&dv)?;
    Ok(LossGrad { loss: loss / b, grads })
}
