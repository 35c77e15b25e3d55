use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use vscrl::algo::{read_metrics_jsonl, Featurizer, PolicyNet};
use vscrl::envs::grid::N_ACTIONS;
use vscrl::envs::{GridConfig, GridMultiRoom};
use vscrl::nn::checkpoint;

fn vscrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vscrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A freshly initialized policy for `n` rooms saved without training.
fn untrained_checkpoint(dir: &Path, n: usize) -> std::path::PathBuf {
    let env = GridMultiRoom::new(GridConfig::multiroom(n, 0)).unwrap();
    let feat = Featurizer::for_env(&env);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let policy = PolicyNet::new(feat.policy_dim(), &[16], N_ACTIONS, &mut rng).unwrap();
    let path = dir.join(format!("untrained-n{n}.ckpt"));
    let mut meta = BTreeMap::new();
    meta.insert("env".to_string(), format!("multiroom-n{n}"));
    meta.insert("layout_seed".to_string(), "0".to_string());
    checkpoint::save(policy.net(), &path, meta).unwrap();
    path
}

const TINY: [&str; 8] = [
    "--set",
    "total_steps=2500",
    "--set",
    "eval_interval=1000",
    "--set",
    "eval_episodes=3",
    "--set",
    "hidden=[16]",
];

#[test]
fn verify_default_suite_passes() {
    let out = vscrl(&["verify"]);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert!(stdout.contains("1100 checks, 1100 passed, 0 failed"), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.trim_end().ends_with("true")).count(), 1100);
}

#[test]
fn verify_rejects_grid_env() {
    let out = vscrl(&["verify", "--env", "multiroom-n2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_on_empty_directory_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = vscrl(&["plot", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("no-runs-found"));
}

#[test]
fn eval_zero_episodes_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path(), 2);
    let out = vscrl(&["eval", ckpt.to_str().unwrap(), "--episodes", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("episodes"));
}

#[test]
fn eval_on_the_wrong_grid_is_incompatible() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path(), 2);
    let out = vscrl(&["eval", ckpt.to_str().unwrap(), "--env", "multiroom-n4", "--episodes", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).1.contains("incompatible-checkpoint"));
}

#[test]
fn untrained_policy_rarely_solves_six_rooms() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path(), 6);
    let out = vscrl(&["eval", ckpt.to_str().unwrap(), "--episodes", "200"]);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    let rate: f64 = stdout
        .split("success ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("rate printed");
    assert!(rate < 0.05, "{stdout}");
}

#[test]
fn train_three_seeds_writes_metrics_checkpoints_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let mut args = vec!["train-vscrl", "--seed", "0-2", "--env", "multiroom-n2", "--out", out_dir];
    args.extend(TINY);
    let out = vscrl(&args);
    assert!(out.status.success(), "{}", text(&out).1);

    let run = dir.path().join("vscrl-scripted-multiroom-n2");
    for seed in 0..3 {
        let seed_dir = run.join(format!("seed-{seed}"));
        let records = read_metrics_jsonl(&seed_dir.join("metrics.jsonl")).unwrap();
        assert!(!records.is_empty());
        assert!(records.windows(2).all(|w| w[0].env_steps <= w[1].env_steps));
        assert!(records.last().unwrap().eval_success.is_some());
        assert!(seed_dir.join("policy.ckpt").exists());
        assert!(seed_dir.join("policy.ckpt.manifest").exists());
    }
    let svg = std::fs::read_to_string(run.join("curves.svg")).unwrap();
    assert_eq!(svg.matches("<polygon").count(), 1);
    let csv = std::fs::read_to_string(run.join("curves.csv")).unwrap();
    assert!(csv.starts_with("run,point,env_steps,mean,min,max,seeds"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",3")), "{csv}");

    let resolved = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(resolved.contains("total_steps = 2500"));

    // The saved policy evaluates on its own layout with the stored plan.
    let ckpt = run.join("seed-1/policy.ckpt");
    let out = vscrl(&["eval", ckpt.to_str().unwrap(), "--episodes", "4"]);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert!(stdout.contains("multiroom-n2 seed 1: success"), "{stdout}");
}

#[test]
fn parallel_seeds_share_one_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let mut args = vec!["train-ppo", "--seed", "3,4", "--parallel", "--out", out_dir];
    args.extend(TINY);
    let out = vscrl(&args);
    assert!(out.status.success(), "{}", text(&out).1);
    let run = dir.path().join("ppo-multiroom-n2");
    assert!(run.join("seed-3/metrics.jsonl").exists());
    assert!(run.join("seed-4/metrics.jsonl").exists());
    assert!(run.join("curves.svg").exists());
}

#[test]
fn bad_config_key_is_a_usage_error_naming_the_key() {
    let out = vscrl(&["train-vscrl", "--set", "learning_rate=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("learning_rate"));
}

#[test]
fn tabular_env_cannot_be_trained() {
    let out = vscrl(&["train-ppo", "--env", "tabular"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_prints_the_layout() {
    let out = vscrl(&["render", "--env", "multiroom-n4", "--seed", "3"]);
    let (stdout, _) = text(&out);
    assert!(out.status.success());
    assert!(stdout.contains('G') && stdout.contains('4'));
}
