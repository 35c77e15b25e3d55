//! The proposition checks against a dynamic-programming oracle that never
//! enumerates trajectories: expected rewards and action KLs are propagated
//! through state marginals instead.

use proptest::prelude::*;
use vscrl::envs::tabular::{PolicyTable, TabularMdp};
use vscrl::envs::{enumerate_scheduled, enumerate_trajectories};
use vscrl::theory::{
    check_prop1, check_prop2, fuzz_prop1, fuzz_prop2, gc_elbo, run_suite, sgc_elbo, TabularPlan,
};

/// State marginal at each step `0..=schedule.len()`.
fn marginals(mdp: &TabularMdp, policy: &PolicyTable, entry: &[f64], schedule: &[usize]) -> Vec<Vec<f64>> {
    let n = mdp.n_states();
    let mut out = vec![entry.to_vec()];
    for &c in schedule {
        let d = out.last().unwrap();
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                for s2 in 0..n {
                    next[s2] += d[s] * policy.prob(c, s, a) * mdp.p(s, a, s2);
                }
            }
        }
        out.push(next);
    }
    out
}

/// `E[Σ_t r_{rewards[t]}(s_t, a_t)]` when acting with `schedule` from `entry`.
fn expected_return(mdp: &TabularMdp, policy: &PolicyTable, entry: &[f64], schedule: &[usize], rewards: &[usize]) -> f64 {
    let d = marginals(mdp, policy, entry, schedule);
    let mut total = 0.0;
    for (t, (&c, &r)) in schedule.iter().zip(rewards).enumerate() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                total += d[t][s] * policy.prob(c, s, a) * mdp.reward(r, s, a);
            }
        }
    }
    total
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Chain rule: the trajectory KL is the expected per-step action KL.
fn trajectory_kl(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reference: &PolicyTable,
    schedule: &[usize],
    ref_condition: usize,
) -> f64 {
    let d = marginals(mdp, policy, mdp.initial(), schedule);
    let n_a = mdp.n_actions();
    let mut total = 0.0;
    for (t, &c) in schedule.iter().enumerate() {
        for s in 0..mdp.n_states() {
            let p: Vec<f64> = (0..n_a).map(|a| policy.prob(c, s, a)).collect();
            let q: Vec<f64> = (0..n_a).map(|a| reference.prob(ref_condition, s, a)).collect();
            total += d[t][s] * kl(&p, &q);
        }
    }
    total
}

fn segment_starts(plan: &TabularPlan) -> Vec<usize> {
    plan.segments
        .iter()
        .scan(0, |t, s| {
            let start = *t;
            *t += s.len();
            Some(start)
        })
        .collect()
}

fn prop1_oracle(seed: u64) -> (f64, f64) {
    let inst = fuzz_prop1(seed);
    let (mdp, pi) = (&inst.mdp, &inst.policy);
    let schedule = inst.plan.condition_schedule();
    let lhs = expected_return(mdp, pi, mdp.initial(), &schedule, &inst.goal.rewards) / inst.alpha;
    let d = marginals(mdp, pi, mdp.initial(), &schedule);
    let rhs = inst
        .plan
        .segments
        .iter()
        .zip(segment_starts(&inst.plan))
        .map(|(seg, start)| {
            let cond = vec![seg.condition; seg.len()];
            expected_return(mdp, pi, &d[start], &cond, &seg.rewards) / inst.alpha
        })
        .sum();
    (lhs, rhs)
}

fn prop2_oracle(seed: u64) -> (f64, f64) {
    let inst = fuzz_prop2(seed);
    let (mdp, pi, pref) = (&inst.mdp, &inst.policy, &inst.reference);
    let schedule = inst.plan.condition_schedule();
    let lhs = trajectory_kl(mdp, pi, pref, &schedule, inst.goal.condition);
    let ours = marginals(mdp, pi, mdp.initial(), &schedule);
    let theirs = marginals(mdp, pref, mdp.initial(), &vec![inst.goal.condition; mdp.horizon()]);
    // Each segment restarts the comparison from both policies' own entry
    // marginals, which adds the entry-state KL on top of the chain rule.
    let entry_gap: f64 = segment_starts(&inst.plan).iter().map(|&t| kl(&ours[t], &theirs[t])).sum();
    (lhs, lhs + entry_gap)
}

#[test]
fn enumerations_are_normalized() {
    for seed in 0..50 {
        let inst = fuzz_prop2(seed);
        let all = enumerate_trajectories(&inst.mdp, &inst.policy, inst.goal.condition).unwrap();
        let mass: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((mass - 1.0).abs() < 1e-12, "seed {seed}: {mass}");
        assert!(all.iter().all(|(t, _)| t.states.len() == t.actions.len() + 1));

        let d = marginals(&inst.mdp, &inst.policy, inst.mdp.initial(), &[inst.goal.condition; 1]);
        let one = enumerate_scheduled(&inst.mdp, &inst.policy, &d[1], &[inst.goal.condition]).unwrap();
        let mass: f64 = one.iter().map(|(_, p)| p).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }
}

#[test]
fn prop1_agrees_with_the_oracle() {
    for seed in 0..100 {
        let inst = fuzz_prop1(seed);
        let got = check_prop1(&inst.mdp, &inst.policy, &inst.goal, &inst.plan, inst.alpha).unwrap();
        let (lhs, rhs) = prop1_oracle(seed);
        assert!(got.pass, "seed {seed}: {got:?}");
        assert!((got.lhs - lhs).abs() <= 1e-12 && (got.rhs - rhs).abs() <= 1e-12, "seed {seed}: {got:?} vs {lhs} {rhs}");
    }
}

#[test]
fn prop2_agrees_with_the_oracle() {
    for seed in 0..300 {
        let inst = fuzz_prop2(seed);
        let got = check_prop2(&inst.mdp, &inst.policy, &inst.reference, &inst.goal, &inst.plan).unwrap();
        let (lhs, rhs) = prop2_oracle(seed);
        assert!(got.pass, "seed {seed}: {got:?}");
        assert!((got.lhs - lhs).abs() <= 1e-10 && (got.rhs - rhs).abs() <= 1e-10, "seed {seed}: {got:?} vs {lhs} {rhs}");
    }
}

#[test]
fn identity_plan_turns_the_bound_into_equality() {
    for seed in (0..200).step_by(10) {
        let inst = fuzz_prop2(seed);
        assert_eq!(inst.plan, TabularPlan::identity(&inst.goal));
        let got = check_prop2(&inst.mdp, &inst.policy, &inst.reference, &inst.goal, &inst.plan).unwrap();
        assert_eq!(got.lhs, got.rhs, "seed {seed}");
    }
}

#[test]
fn identity_plan_elbo_is_the_goal_elbo() {
    for seed in 0..30 {
        let inst = fuzz_prop2(seed);
        let a = gc_elbo(&inst.mdp, &inst.policy, &inst.reference, &inst.goal, 1.5).unwrap();
        let b = sgc_elbo(
            &inst.mdp,
            &inst.policy,
            &inst.reference,
            &TabularPlan::identity(&inst.goal),
            &inst.goal,
            1.5,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!((a.elbo - (a.return_term - a.kl_term)).abs() < 1e-12);
    }
}

#[test]
fn suite_reports_every_instance() {
    let rows = run_suite(10, 20, 500).unwrap();
    assert_eq!(rows.len(), 30);
    assert_eq!(rows.iter().filter(|r| r.proposition == 1).count(), 10);
    assert!(rows.iter().all(|r| r.pass));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop1_holds_for_any_seed(seed in any::<u64>()) {
        let inst = fuzz_prop1(seed);
        let got = check_prop1(&inst.mdp, &inst.policy, &inst.goal, &inst.plan, inst.alpha).unwrap();
        prop_assert!((got.lhs - got.rhs).abs() <= 1e-9);
    }

    #[test]
    fn prop2_holds_for_any_seed(seed in any::<u64>()) {
        let inst = fuzz_prop2(seed);
        let got = check_prop2(&inst.mdp, &inst.policy, &inst.reference, &inst.goal, &inst.plan).unwrap();
        prop_assert!(got.lhs >= -1e-12);
        prop_assert!(got.lhs <= got.rhs + 1e-9);
        let (lhs, rhs) = prop2_oracle(seed);
        prop_assert!((got.lhs - lhs).abs() <= 1e-10 && (got.rhs - rhs).abs() <= 1e-10);
    }
}
