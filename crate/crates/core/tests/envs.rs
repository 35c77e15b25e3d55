use proptest::prelude::*;
use vscrl::core::{segment, Trajectory, Transition};
use vscrl::envs::grid::N_ACTIONS;
use vscrl::envs::{parse_predicate, GridConfig, GridEvaluator, GridMultiRoom, GridPredicate};
use vscrl::subgoal_gen::generate_scripted;

fn play(env: &mut GridMultiRoom, seed: u64, actions: impl IntoIterator<Item = usize>) -> Trajectory {
    let mut obs = env.reset(seed);
    let mut steps = Vec::new();
    for action in actions {
        let out = env.step(action).unwrap();
        steps.push(Transition {
            obs,
            action,
            reward: out.reward,
            next_obs: out.obs.clone(),
            done: out.done,
        });
        obs = out.obs;
        if out.done {
            break;
        }
    }
    Trajectory::new(env.goal().id, steps)
}

#[test]
fn oracle_episode_splits_into_one_successful_slice_per_subgoal() {
    for n in [2, 4, 6] {
        for layout in 0..5 {
            let mut env = GridMultiRoom::new(GridConfig::multiroom(n, layout)).unwrap();
            env.reset(layout + 100);
            let actions = env.oracle_actions();
            let traj = play(&mut env, layout + 100, actions);
            assert!(traj.success);
            let plan = generate_scripted(&env.goal(), &format!("multiroom-n{n}")).unwrap();
            let evaluator = GridEvaluator::new(env.layout());
            let subs = segment(&traj, &plan.subgoals, &evaluator).unwrap();
            assert_eq!(subs.len(), n);
            assert!(subs.iter().all(|s| s.return_bit == 1.0));
            for (k, s) in subs.iter().enumerate().take(n - 1) {
                let last = s.steps.last().unwrap();
                assert!(evaluator.predicate_fires(GridPredicate::DoorOpened(k + 1), last));
            }
            assert_eq!(subs.last().unwrap().steps.last().unwrap().reward, 1.0);
        }
    }
}

#[test]
fn door_predicate_fires_only_on_the_opening_step() {
    let mut env = GridMultiRoom::new(GridConfig::multiroom(2, 3)).unwrap();
    env.reset(9);
    let actions = env.oracle_actions();
    let traj = play(&mut env, 9, actions);
    let evaluator = GridEvaluator::new(env.layout());
    let fired: Vec<usize> = (0..traj.len())
        .filter(|&t| evaluator.predicate_fires(GridPredicate::DoorOpened(1), &traj.steps[t]))
        .collect();
    assert_eq!(fired.len(), 1);
    assert_eq!(traj.steps[fired[0]].action, 3);
    let goal: Vec<usize> = (0..traj.len())
        .filter(|&t| evaluator.predicate_fires(GridPredicate::GoalReached, &traj.steps[t]))
        .collect();
    assert_eq!(goal, [traj.len() - 1]);
}

#[test]
fn subgoal_phrasings_resolve() {
    assert_eq!(parse_predicate("Open door #2"), Some(GridPredicate::DoorOpened(2)));
    assert_eq!(parse_predicate("go through the third door"), Some(GridPredicate::DoorOpened(3)));
    assert_eq!(parse_predicate("reach the goal square"), Some(GridPredicate::GoalReached));
    assert_eq!(parse_predicate("turn left twice"), None);
}

#[test]
fn ascii_task_plays_like_a_generated_one() {
    let map = "#######\n#>..1G#\n#######\n";
    let mut env = GridMultiRoom::new(GridConfig::ascii(map, 12).unwrap()).unwrap();
    env.reset(0);
    assert_eq!(env.n_rooms(), 2);
    let actions = env.oracle_actions();
    let traj = play(&mut env, 0, actions.clone());
    assert!(traj.success, "{actions:?}\n{}", env.render());
    assert!(env.door_is_open(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn segmentation_tiles_the_trajectory(
        layout in 0u64..50,
        n in 2usize..=4,
        reset in any::<u64>(),
        actions in prop::collection::vec(0..N_ACTIONS, 1..200),
    ) {
        let mut env = GridMultiRoom::new(GridConfig::multiroom(n, layout)).unwrap();
        let traj = play(&mut env, reset, actions);
        let plan = generate_scripted(&env.goal(), &format!("multiroom-n{n}")).unwrap();
        let evaluator = GridEvaluator::new(env.layout());
        let subs = segment(&traj, &plan.subgoals, &evaluator).unwrap();

        // Slices are contiguous, non-empty and cover every step once.
        let mut t = 0;
        for s in &subs {
            prop_assert_eq!(s.offset, t);
            prop_assert!(!s.steps.is_empty());
            prop_assert_eq!(&s.steps[..], &traj.steps[t..t + s.steps.len()]);
            t += s.steps.len();
        }
        prop_assert_eq!(t, traj.len());

        // Subgoals appear in plan order, and only the last slice may fail.
        for (i, s) in subs.iter().enumerate() {
            prop_assert_eq!(s.subgoal.index, i + 1);
            if i + 1 < subs.len() {
                prop_assert_eq!(s.return_bit, 1.0);
            }
        }
        prop_assert!(subs.len() <= plan.len());
        let last = subs.last().unwrap();
        prop_assert_eq!(last.return_bit == 1.0 && subs.len() == plan.len(), traj.success);
    }

    #[test]
    fn episodes_end_by_the_horizon(layout in 0u64..50, n in 1usize..=6, reset in any::<u64>(), a in 0..N_ACTIONS) {
        let mut env = GridMultiRoom::new(GridConfig::multiroom(n, layout)).unwrap();
        let horizon = env.horizon();
        let traj = play(&mut env, reset, std::iter::repeat_n(a, horizon + 5));
        prop_assert!(traj.len() <= horizon);
        prop_assert!(traj.steps.last().unwrap().done);
        let reward: f64 = traj.steps.iter().map(|s| s.reward).sum();
        prop_assert_eq!(reward == 1.0, traj.success);
    }
}
