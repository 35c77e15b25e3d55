//! Seeded random instances for the proposition checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{check_prop1, check_prop2, Segment, TabularGoal, TabularPlan};
use crate::envs::tabular::{PolicyTable, TabularMdp};
use crate::Result;

#[derive(Debug, Clone)]
pub struct Prop1Instance {
    pub mdp: TabularMdp,
    pub policy: PolicyTable,
    pub goal: TabularGoal,
    pub plan: TabularPlan,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct Prop2Instance {
    pub mdp: TabularMdp,
    pub policy: PolicyTable,
    pub reference: PolicyTable,
    pub goal: TabularGoal,
    pub plan: TabularPlan,
}

/// Sizes: 2–4 states, 2–3 actions, 2–3 conditions, horizon 1–4.
fn random_mdp(rng: &mut ChaCha8Rng) -> TabularMdp {
    let s = rng.random_range(2..=4);
    let a = rng.random_range(2..=3);
    let c = rng.random_range(2..=3);
    let h = rng.random_range(1..=4);
    let mut transition = Vec::with_capacity(s * a * s);
    for _ in 0..s * a {
        transition.extend(simplex(rng, s));
    }
    let initial = simplex(rng, s);
    let reward = (0..c * s * a).map(|_| f64::from(rng.random_bool(0.4) as u8)).collect();
    TabularMdp::new(s, a, c, h, transition, initial, reward).expect("fuzzed rows are normalized")
}

/// A random point on the simplex; entries are zeroed at random so some
/// transitions are impossible.
fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() + 1e-3 })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn random_policy(rng: &mut ChaCha8Rng, mdp: &TabularMdp) -> PolicyTable {
    let n = mdp.n_conditions() * mdp.n_states() * mdp.n_actions();
    let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
    PolicyTable::from_logits(mdp.n_conditions(), mdp.n_states(), mdp.n_actions(), &logits)
        .expect("logit table has the right size")
}

/// Segment lengths: a random composition of the horizon.
fn random_lengths(rng: &mut ChaCha8Rng, horizon: usize) -> Vec<usize> {
    let mut lengths = Vec::new();
    let mut left = horizon;
    while left > 0 {
        let l = rng.random_range(1..=left);
        lengths.push(l);
        left -= l;
    }
    lengths
}

fn random_plan(rng: &mut ChaCha8Rng, mdp: &TabularMdp) -> TabularPlan {
    let c = mdp.n_conditions();
    let segments = random_lengths(rng, mdp.horizon())
        .into_iter()
        .map(|len| {
            let condition = rng.random_range(0..c);
            Segment {
                condition,
                rewards: vec![condition; len],
            }
        })
        .collect();
    TabularPlan { segments }
}

/// An instance whose goal reward is the concatenation of the plan's segment
/// rewards, so the additivity premise holds by construction.
pub fn fuzz_prop1(seed: u64) -> Prop1Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = random_mdp(&mut rng);
    let policy = random_policy(&mut rng, &mdp);
    let plan = random_plan(&mut rng, &mdp);
    let goal = TabularGoal {
        condition: rng.random_range(0..mdp.n_conditions()),
        rewards: plan.segments.iter().flat_map(|s| s.rewards.iter().copied()).collect(),
    };
    let alpha = rng.random_range(0.25..=4.0);
    Prop1Instance {
        mdp,
        policy,
        goal,
        plan,
        alpha,
    }
}

/// A strictly positive policy pair with a random plan; every tenth seed gets
/// the one-segment identity plan.
pub fn fuzz_prop2(seed: u64) -> Prop2Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = random_mdp(&mut rng);
    let policy = random_policy(&mut rng, &mdp);
    let reference = random_policy(&mut rng, &mdp);
    let goal = TabularGoal::uniform(rng.random_range(0..mdp.n_conditions()), mdp.horizon());
    let plan = if seed % 10 == 0 {
        TabularPlan::identity(&goal)
    } else {
        random_plan(&mut rng, &mdp)
    };
    Prop2Instance {
        mdp,
        policy,
        reference,
        goal,
        plan,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub proposition: u8,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Runs `prop1` fuzzed return-additivity checks and `prop2` KL-bound checks
/// on consecutive seeds from `base_seed`.
pub fn run_suite(prop1: usize, prop2: usize, base_seed: u64) -> Result<Vec<SuiteRow>> {
    let mut rows = Vec::with_capacity(prop1 + prop2);
    for i in 0..prop1 as u64 {
        let seed = base_seed + i;
        let x = fuzz_prop1(seed);
        let c = check_prop1(&x.mdp, &x.policy, &x.goal, &x.plan, x.alpha)?;
        rows.push(SuiteRow {
            proposition: 1,
            seed,
            lhs: c.lhs,
            rhs: c.rhs,
            pass: c.pass,
        });
    }
    for i in 0..prop2 as u64 {
        let seed = base_seed + i;
        let x = fuzz_prop2(seed);
        let c = check_prop2(&x.mdp, &x.policy, &x.reference, &x.goal, &x.plan)?;
        rows.push(SuiteRow {
            proposition: 2,
            seed,
            lhs: c.lhs,
            rhs: c.rhs,
            pass: c.pass,
        });
    }
    Ok(rows)
}
