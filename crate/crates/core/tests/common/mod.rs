//! Independent oracles shared by the integration tests: a from-scratch MLP
//! forward pass, per-sample loss loops and central finite differences.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use vscrl::algo::losses::{
    awr_policy_loss, imitation_loss, imitation_target_loss, ppo_actor_loss, ppo_critic_loss, sigmoid_mse,
    value_loss,
};
use vscrl::algo::{Batch, PolicyNet, ReferencePolicy, ValueInput, ValueNet};
use vscrl::nn::{Activation, MlpNet, Tensor2};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ReLU hidden layers, identity output; weights stored input-major.
pub fn mlp_forward(net: &MlpNet, x: &[f64]) -> Vec<f64> {
    let sizes = net.layer_sizes();
    let p = net.params();
    let mut off = 0;
    let mut h = x.to_vec();
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &p[off..off + n_in * n_out];
        let b = &p[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut y: Vec<f64> = b.to_vec();
        for o in 0..n_out {
            for i in 0..n_in {
                y[o] += h[i] * w[i * n_out + o];
            }
        }
        if l + 2 < sizes.len() {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = y;
    }
    h
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Central differences of `f` around `params`.
pub fn fd_grad(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|j| {
            let orig = p[j];
            p[j] = orig + FD_STEP;
            let up = f(&p);
            p[j] = orig - FD_STEP;
            let down = f(&p);
            p[j] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random weights and nonzero biases, so no pre-activation sits exactly on
/// the ReLU kink for an all-zero input row.
pub fn net(sizes: &[usize], rng: &mut ChaCha8Rng) -> MlpNet {
    let mut n = MlpNet::new(sizes, Activation::Relu, Activation::Identity, rng).unwrap();
    for l in 0..n.num_layers() {
        let (_, b) = n.layer_range(l);
        n.params_mut()[b].iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    n
}

/// Rows mixing one-hot style zeros and ones with dense values.
pub fn inputs(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * dim)
        .map(|_| match rng.random_range(0..3) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(-1.0..1.0),
        })
        .collect();
    Tensor2::from_vec(rows, dim, data).unwrap()
}

pub fn with_params(net: &MlpNet, params: &[f64]) -> MlpNet {
    let mut n = net.clone();
    n.params_mut().copy_from_slice(params);
    n
}

/// A random AWR problem: policy, critic and a batch with returns in [0, 1].
pub struct AwrCase {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub batch: Batch,
    pub beta: f64,
    pub w_max: f64,
}

pub fn awr_case(seed: u64, rows: usize, input: ValueInput) -> AwrCase {
    let mut r = rng(seed);
    let obs_dim = r.random_range(3..8);
    let n_cond = r.random_range(1..4);
    let n_actions = 4;
    let policy_dim = obs_dim + n_cond;
    let value_dim = match input {
        ValueInput::State => policy_dim,
        ValueInput::StateAction => obs_dim + n_actions + n_cond,
    };
    let hidden = [r.random_range(3..9), r.random_range(3..9)];
    let policy = PolicyNet::from_net(net(&[policy_dim, hidden[0], hidden[1], n_actions], &mut r)).unwrap();
    let value = ValueNet::from_net(net(&[value_dim, hidden[0], hidden[1], 1], &mut r), input).unwrap();
    let batch = Batch {
        policy_inputs: inputs(rows, policy_dim, &mut r),
        value_inputs: inputs(rows, value_dim, &mut r),
        actions: (0..rows).map(|_| r.random_range(0..n_actions)).collect(),
        returns: (0..rows)
            .map(|_| if r.random_bool(0.5) { 0.9f64.powi(r.random_range(0..6)) } else { 0.0 })
            .collect(),
    };
    AwrCase {
        policy,
        value,
        batch,
        beta: r.random_range(0.2..2.0),
        w_max: r.random_range(1.5..30.0),
    }
}

// Per-sample oracles. Each walks the batch one row at a time through the
// from-scratch forward pass.

pub fn oracle_awr(c: &AwrCase) -> (f64, Vec<f64>) {
    let b = c.batch.len();
    let mut loss = 0.0;
    let mut weights = Vec::new();
    for i in 0..b {
        let v = sigmoid(mlp_forward(c.value.net(), c.batch.value_inputs.row(i))[0]);
        let w = ((c.batch.returns[i] - v) / c.beta).exp().min(c.w_max);
        let lp = log_softmax(&mlp_forward(c.policy.net(), c.batch.policy_inputs.row(i)));
        loss -= w * lp[c.batch.actions[i]];
        weights.push(w);
    }
    (loss / b as f64, weights)
}

pub fn oracle_value(c: &AwrCase) -> f64 {
    let b = c.batch.len();
    (0..b)
        .map(|i| {
            let v = sigmoid(mlp_forward(c.value.net(), c.batch.value_inputs.row(i))[0]);
            (v - c.batch.returns[i]).powi(2)
        })
        .sum::<f64>()
        / b as f64
}

pub fn oracle_nll(net: &MlpNet, x: &Tensor2, actions: &[usize]) -> f64 {
    let b = actions.len();
    (0..b)
        .map(|i| -log_softmax(&mlp_forward(net, x.row(i)))[actions[i]])
        .sum::<f64>()
        / b as f64
}

pub fn oracle_ppo_actor(
    net: &MlpNet,
    x: &Tensor2,
    actions: &[usize],
    old: &[f64],
    adv: &[f64],
    clip: f64,
    ent: f64,
) -> f64 {
    let b = actions.len();
    (0..b)
        .map(|i| {
            let lp = log_softmax(&mlp_forward(net, x.row(i)));
            let ratio = (lp[actions[i]] - old[i]).exp();
            let surrogate = (ratio * adv[i]).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv[i]);
            let entropy: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
            -surrogate - ent * entropy
        })
        .sum::<f64>()
        / b as f64
}

pub fn oracle_sq(net: &MlpNet, x: &Tensor2, targets: &[f64], squash: bool, coef: f64) -> f64 {
    let b = targets.len();
    (0..b)
        .map(|i| {
            let z = mlp_forward(net, x.row(i))[0];
            let v = if squash { sigmoid(z) } else { z };
            coef * (v - targets[i]).powi(2)
        })
        .sum::<f64>()
        / b as f64
}

/// A random PPO minibatch for a policy with `n_actions` outputs; old log
/// probabilities are perturbed so some ratios fall outside the clip range.
pub struct PpoCase {
    pub actor: PolicyNet,
    pub critic: MlpNet,
    pub x: Tensor2,
    pub actions: Vec<usize>,
    pub old: Vec<f64>,
    pub adv: Vec<f64>,
    pub targets: Vec<f64>,
    pub clip: f64,
    pub ent: f64,
    pub coef: f64,
}

pub fn ppo_case(seed: u64, rows: usize) -> PpoCase {
    let mut r = rng(seed);
    let dim = r.random_range(3..10);
    let hidden = [r.random_range(3..9), r.random_range(3..9)];
    let actor = PolicyNet::from_net(net(&[dim, hidden[0], hidden[1], 4], &mut r)).unwrap();
    let critic = net(&[dim, hidden[0], hidden[1], 1], &mut r);
    let x = inputs(rows, dim, &mut r);
    let actions: Vec<usize> = (0..rows).map(|_| r.random_range(0..4)).collect();
    let lp = actor.log_probs(&x).unwrap();
    let old = (0..rows)
        .map(|i| lp.get(i, actions[i]) + r.random_range(-0.5..0.5))
        .collect();
    PpoCase {
        actor,
        critic,
        actions,
        old,
        adv: (0..rows).map(|_| r.random_range(-2.0..2.0)).collect(),
        targets: (0..rows).map(|_| r.random_range(-1.0..2.0)).collect(),
        clip: r.random_range(0.1..0.3),
        ent: r.random_range(0.0..0.05),
        coef: r.random_range(0.25..1.0),
        x,
    }
}

/// Largest relative error between the hand-derived gradient and central
/// differences over one draw of every trainable network/loss pairing.
pub fn fd_check_all(seed: u64) -> Vec<(&'static str, f64)> {
    let rows = 12;
    let mut out = Vec::new();

    for (name, input) in [("awr policy", ValueInput::StateAction), ("awr policy, state critic", ValueInput::State)] {
        let c = awr_case(seed, rows, input);
        let mut p = c.policy.clone();
        let an = awr_policy_loss(&c.batch, &mut p, &c.value, c.beta, c.w_max).unwrap().grads;
        let fd = fd_grad(c.policy.net().params(), |th| {
            let mut p = PolicyNet::from_net(with_params(c.policy.net(), th)).unwrap();
            awr_policy_loss(&c.batch, &mut p, &c.value, c.beta, c.w_max).unwrap().loss
        });
        out.push((name, rel_err(&an, &fd)));
    }

    for (name, input) in [("critic V(s,a,sg)", ValueInput::StateAction), ("critic V(s,sg)", ValueInput::State)] {
        let c = awr_case(seed + 1, rows, input);
        let mut v = c.value.clone();
        let an = value_loss(&c.batch, &mut v).unwrap().grads;
        let fd = fd_grad(c.value.net().params(), |th| {
            let mut v = ValueNet::from_net(with_params(c.value.net(), th), input).unwrap();
            value_loss(&c.batch, &mut v).unwrap().loss
        });
        out.push((name, rel_err(&an, &fd)));
    }

    {
        // Instruction value: sigmoid regression on first-step inputs.
        let c = awr_case(seed + 2, rows, ValueInput::State);
        let mut n = c.value.net().clone();
        let an = sigmoid_mse(&mut n, &c.batch.value_inputs, &c.batch.returns).unwrap().grads;
        let fd = fd_grad(c.value.net().params(), |th| {
            let mut n = with_params(c.value.net(), th);
            sigmoid_mse(&mut n, &c.batch.value_inputs, &c.batch.returns).unwrap().loss
        });
        out.push(("instruction value", rel_err(&an, &fd)));
    }

    {
        let c = awr_case(seed + 3, rows, ValueInput::State);
        let mut r = rng(seed ^ 0xabc);
        let reference = ReferencePolicy::freeze(
            PolicyNet::from_net(net(&c.policy.net().layer_sizes().to_vec(), &mut r)).unwrap(),
            "test",
        );
        let ref_inputs = inputs(rows, c.policy.net().input_dim(), &mut r);
        let draw = rng(seed ^ 0xdef);
        let mut p = c.policy.clone();
        let an = imitation_loss(&c.batch.policy_inputs, &ref_inputs, &mut p, &reference, &mut draw.clone())
            .unwrap()
            .grads;
        let fd = fd_grad(c.policy.net().params(), |th| {
            let mut p = PolicyNet::from_net(with_params(c.policy.net(), th)).unwrap();
            imitation_loss(&c.batch.policy_inputs, &ref_inputs, &mut p, &reference, &mut draw.clone())
                .unwrap()
                .loss
        });
        out.push(("imitation", rel_err(&an, &fd)));

        let mut p = c.policy.clone();
        let an = imitation_target_loss(&mut p, &c.batch.policy_inputs, &c.batch.actions).unwrap().grads;
        let fd = fd_grad(c.policy.net().params(), |th| {
            let mut p = PolicyNet::from_net(with_params(c.policy.net(), th)).unwrap();
            imitation_target_loss(&mut p, &c.batch.policy_inputs, &c.batch.actions).unwrap().loss
        });
        out.push(("reference cloning", rel_err(&an, &fd)));
    }

    {
        let c = ppo_case(seed + 4, rows);
        let mut a = c.actor.clone();
        let (lg, _) = ppo_actor_loss(&mut a, &c.x, &c.actions, &c.old, &c.adv, c.clip, c.ent).unwrap();
        let fd = fd_grad(c.actor.net().params(), |th| {
            let mut a = PolicyNet::from_net(with_params(c.actor.net(), th)).unwrap();
            ppo_actor_loss(&mut a, &c.x, &c.actions, &c.old, &c.adv, c.clip, c.ent).unwrap().0.loss
        });
        out.push(("ppo actor", rel_err(&lg.grads, &fd)));

        let mut n = c.critic.clone();
        let an = ppo_critic_loss(&mut n, &c.x, &c.targets, c.coef).unwrap().grads;
        let fd = fd_grad(c.critic.params(), |th| {
            let mut n = with_params(&c.critic, th);
            ppo_critic_loss(&mut n, &c.x, &c.targets, c.coef).unwrap().loss
        });
        out.push(("ppo critic", rel_err(&an, &fd)));
    }
    out
}

/// Worst discrepancy between each batched loss (value and gradient) and a
/// per-sample loop on one random batch.
pub fn vectorized_vs_loop(seed: u64) -> f64 {
    let mut r = rng(seed);
    let rows = r.random_range(1..40);
    let input = if r.random_bool(0.5) { ValueInput::State } else { ValueInput::StateAction };
    let c = awr_case(seed, rows, input);
    let mut worst: f64 = 0.0;
    let scale = 1.0 / rows as f64;

    // AWR: loss and weights against the oracle, gradient against the mean of
    // single-row gradients.
    let mut p = c.policy.clone();
    let out = awr_policy_loss(&c.batch, &mut p, &c.value, c.beta, c.w_max).unwrap();
    let (loss, weights) = oracle_awr(&c);
    worst = worst.max((out.loss - loss).abs()).max(max_abs_diff(&out.weights, &weights));
    let mut summed = vec![0.0; out.grads.len()];
    for i in 0..rows {
        let row = single_row(&c.batch, i);
        let mut p = c.policy.clone();
        let g = awr_policy_loss(&row, &mut p, &c.value, c.beta, c.w_max).unwrap().grads;
        summed.iter_mut().zip(&g).for_each(|(s, v)| *s += v * scale);
    }
    worst = worst.max(max_abs_diff(&out.grads, &summed));

    let mut v = c.value.clone();
    let out = value_loss(&c.batch, &mut v).unwrap();
    worst = worst.max((out.loss - oracle_value(&c)).abs());
    let mut summed = vec![0.0; out.grads.len()];
    for i in 0..rows {
        let mut v = c.value.clone();
        let g = value_loss(&single_row(&c.batch, i), &mut v).unwrap().grads;
        summed.iter_mut().zip(&g).for_each(|(s, x)| *s += x * scale);
    }
    worst = worst.max(max_abs_diff(&out.grads, &summed));

    let mut p = c.policy.clone();
    let out = imitation_target_loss(&mut p, &c.batch.policy_inputs, &c.batch.actions).unwrap();
    worst = worst.max((out.loss - oracle_nll(c.policy.net(), &c.batch.policy_inputs, &c.batch.actions)).abs());

    let pc = ppo_case(seed, rows);
    let mut a = pc.actor.clone();
    let (out, _) = ppo_actor_loss(&mut a, &pc.x, &pc.actions, &pc.old, &pc.adv, pc.clip, pc.ent).unwrap();
    let want = oracle_ppo_actor(pc.actor.net(), &pc.x, &pc.actions, &pc.old, &pc.adv, pc.clip, pc.ent);
    worst = worst.max((out.loss - want).abs());
    let mut n = pc.critic.clone();
    let out = ppo_critic_loss(&mut n, &pc.x, &pc.targets, pc.coef).unwrap();
    worst = worst.max((out.loss - oracle_sq(&pc.critic, &pc.x, &pc.targets, false, pc.coef)).abs());
    worst
}

pub fn single_row(batch: &Batch, i: usize) -> Batch {
    let pick = |t: &Tensor2| Tensor2::from_vec(1, t.cols(), t.row(i).to_vec()).unwrap();
    Batch {
        policy_inputs: pick(&batch.policy_inputs),
        value_inputs: pick(&batch.value_inputs),
        actions: vec![batch.actions[i]],
        returns: vec![batch.returns[i]],
    }
}
