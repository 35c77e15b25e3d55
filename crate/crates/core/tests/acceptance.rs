//! End-to-end acceptance run. Each criterion prints one `PASS`/`FAIL` line;
//! the test fails at the end if any line failed, so every criterion is
//! reported even when an earlier one does not hold.
//!
//! Run alone with `cargo test -p vscrl --test acceptance -- --nocapture`.

mod common;

use common::*;
use vscrl::algo::{
    awr_weight, final_eval, steps_to_success, train_gcawr, train_ppo, train_vscrl, Featurizer, MetricsRecord,
    ReferencePolicy, RunOptions, TrainConfig,
};
use vscrl::envs::grid::N_ACTIONS;
use vscrl::envs::{GridConfig, GridMultiRoom};
use vscrl::subgoal_gen::{resolve_plan, GeneratorMode, SubgoalPlan, SubgoalRequest};
use vscrl::theory::{fuzz_prop2, run_suite, TabularPlan};

const SEEDS: [u64; 3] = [0, 1, 2];
const TOL: f64 = 1e-9;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, criterion: usize, pass: bool, detail: String) {
        println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(criterion);
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Arm {
    Full,
    Limited,
    NoSubgoals,
    Ppo,
}

fn train(arm: Arm, rooms: usize, seed: u64) -> Vec<MetricsRecord> {
    let cfg = TrainConfig::multiroom_tuned();
    let env_cfg = GridConfig::multiroom(rooms, seed);
    let env = GridMultiRoom::new(env_cfg.clone()).unwrap();
    let goal = env.goal();
    // Imitation is off in the tuned preset, so the reference never enters a
    // gradient and a uniform one is enough.
    let reference = ReferencePolicy::uniform(Featurizer::for_env(&env).policy_dim(), &cfg.hidden, N_ACTIONS).unwrap();
    let kind = format!("multiroom-n{rooms}");
    let plan = |mode| resolve_plan(&SubgoalRequest::new(goal.clone()), &kind, mode, None).plan;
    let opts = RunOptions::seeded(seed);
    let out = match arm {
        Arm::Full => train_vscrl(&cfg, &env_cfg, &plan(GeneratorMode::Scripted), &reference, &opts, &mut |_| {}),
        Arm::Limited => train_vscrl(&cfg, &env_cfg, &plan(GeneratorMode::Limited), &reference, &opts, &mut |_| {}),
        Arm::NoSubgoals => train_vscrl(&cfg, &env_cfg, &SubgoalPlan::identity(&goal), &reference, &opts, &mut |_| {}),
        Arm::Ppo => train_ppo(&cfg, &env_cfg, &opts, &mut |_| {}),
    };
    out.unwrap().metrics
}

fn finals(arm: Arm, rooms: usize) -> Vec<(u64, Option<u64>, f64)> {
    SEEDS
        .iter()
        .map(|&s| {
            let m = train(arm, rooms, s);
            let f = final_eval(&m).unwrap_or(0.0);
            let hit = steps_to_success(&m, 0.9);
            println!("  n{rooms} {arm:?} seed {s}: first >= 0.9 at {hit:?}, final {f:.2}");
            (s, hit, f)
        })
        .collect()
}

fn mean(xs: &[(u64, Option<u64>, f64)]) -> f64 {
    xs.iter().map(|x| x.2).sum::<f64>() / xs.len() as f64
}

fn criterion_1(r: &mut Report) {
    let rows = run_suite(100, 0, 0).unwrap();
    let worst = rows.iter().map(|x| (x.lhs - x.rhs).abs()).fold(0.0, f64::max);
    r.line(1, rows.len() == 100 && worst <= TOL, format!("100 MDPs, max |lhs - rhs| = {worst:.1e}"));
}

fn criterion_2(r: &mut Report) {
    let base = 1000;
    let rows = run_suite(0, 1000, base).unwrap();
    let worst = rows.iter().map(|x| x.lhs - x.rhs).fold(f64::NEG_INFINITY, f64::max);
    let mut identity = 0;
    let mut identity_ok = true;
    for row in &rows {
        let inst = fuzz_prop2(row.seed);
        if inst.plan == TabularPlan::identity(&inst.goal) {
            identity += 1;
            identity_ok &= row.lhs == row.rhs;
        }
    }
    r.line(
        2,
        rows.len() == 1000 && worst <= TOL && identity > 0 && identity_ok,
        format!("1000 instances, max lhs - rhs = {worst:.1e}, {identity} single-segment plans all equal: {identity_ok}"),
    );
}

fn criterion_3(r: &mut Report) {
    let mut worst = (String::new(), 0.0f64);
    let mut checks = 0;
    for draw in 0..10 {
        for (name, err) in fd_check_all(1000 + draw * 37) {
            checks += 1;
            if err > worst.1 {
                worst = (name.to_string(), err);
            }
        }
    }
    r.line(3, worst.1 <= 1e-4, format!("{checks} checks over 10 draws, worst {:.1e} ({})", worst.1, worst.0));
}

fn criterion_4(r: &mut Report) {
    let mut rng_state = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let [ret, v, beta, w_max]: [f64; 4] = {
            use rand::Rng;
            [
                rng_state.random_range(0.0..1.0),
                rng_state.random_range(0.0..1.0),
                rng_state.random_range(0.05..2.0),
                rng_state.random_range(1.0..50.0),
            ]
        };
        let want = f64::min(((ret - v) / beta).exp(), w_max);
        worst = worst.max((awr_weight(ret - v, beta, w_max) - want).abs());
    }
    let unit = [0.1, 0.2, 1.0, 5.0].iter().all(|&b| awr_weight(0.0, b, 20.0) == 1.0);
    r.line(4, worst <= 1e-12 && unit, format!("max error {worst:.1e} over 1000 draws, R = V gives 1: {unit}"));
}

fn criterion_5(r: &mut Report) {
    let env_cfg = GridConfig::multiroom(2, 4);
    let env = GridMultiRoom::new(env_cfg.clone()).unwrap();
    let cfg = TrainConfig {
        total_steps: 3072,
        hidden: vec![32, 32],
        steps_per_epoch: 1024,
        eval_interval: 0,
        imitation_weight: 0.0,
        ..TrainConfig::default()
    };
    let reference = ReferencePolicy::uniform(Featurizer::for_env(&env).policy_dim(), &cfg.hidden, N_ACTIONS).unwrap();
    let opts = RunOptions {
        seed: 11,
        trace_params: true,
    };
    let a = train_vscrl(&cfg, &env_cfg, &SubgoalPlan::identity(&env.goal()), &reference, &opts, &mut |_| {}).unwrap();
    let b = train_gcawr(&cfg, &env_cfg, &opts, &mut |_| {}).unwrap();
    let updates = a.param_trace.len();
    let same = a.param_trace == b.param_trace && a.policy.net().params() == b.policy.net().params();
    r.line(5, updates >= 100 && same, format!("{updates} updates, bit-identical: {same}"));
}

fn criterion_6(r: &mut Report) {
    let ours = finals(Arm::Full, 2);
    let ppo = finals(Arm::Ppo, 2);
    let wins = ours
        .iter()
        .zip(&ppo)
        .filter(|(a, b)| match (a.1, b.1) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    r.line(6, wins >= 2, format!("{wins}/3 seeds reach 0.9 within 200k and before PPO"));
}

fn criterion_7_8(r: &mut Report) {
    let full = finals(Arm::Full, 4);
    let ppo = finals(Arm::Ppo, 4);
    let ok = full.iter().zip(&ppo).filter(|(a, b)| a.2 >= 0.7 && b.2 <= 0.1).count();
    r.line(7, ok >= 2, format!("{ok}/3 seeds with ours >= 0.7 and PPO <= 0.1"));

    let limited = finals(Arm::Limited, 4);
    let none = finals(Arm::NoSubgoals, 4);
    let (f, l, n) = (mean(&full), mean(&limited), mean(&none));
    let pass = n <= l && l <= f && n < f && l < f;
    r.line(8, pass, format!("mean final eval: no subgoals {n:.2}, limited {l:.2}, full {f:.2}"));
}

fn criterion_9(r: &mut Report) {
    let worst = (0..100).map(vectorized_vs_loop).fold(0.0, f64::max);
    r.line(9, worst <= 1e-10, format!("100 batches, worst discrepancy {worst:.1e}"));
}

#[test]
fn acceptance() {
    let mut r = Report { failed: Vec::new() };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_9(&mut r);
    criterion_6(&mut r);
    criterion_7_8(&mut r);
    assert!(r.failed.is_empty(), "failed criteria: {:?}", r.failed);
}
