use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use vscrl::algo::{
    final_eval, oracle_demos, pretrain_reference, steps_to_success, train_ppo, train_vscrl, Featurizer,
    MetricsRecord, PretrainConfig, ReferencePolicy, RunOptions, TrainOutput,
};
use vscrl::envs::grid::N_ACTIONS;
use vscrl::envs::{GridConfig, GridMultiRoom};
use vscrl::nn::checkpoint;
use vscrl::subgoal_gen::{read_few_shot, resolve_plan, EnvKind, GeneratorMode, RemoteGenerator, SubgoalPlan, SubgoalRequest};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Vscrl,
    Ppo,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Vscrl => "vscrl",
            Algo::Ppo => "ppo",
        }
    }
}

pub struct TrainArgs {
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub env: EnvKind,
    pub generator: GeneratorMode,
    pub endpoint: Option<String>,
    pub out: PathBuf,
    pub name: Option<String>,
    pub parallel: bool,
    /// Forwarded verbatim to child processes in parallel mode.
    pub raw_args: Vec<String>,
}

pub fn multiroom_rooms(env: EnvKind) -> CliResult<usize> {
    match env {
        EnvKind::MultiRoom(n) => Ok(n),
        EnvKind::Tabular => Err(CliError::Usage(
            "the tabular environment only supports the verify command".into(),
        )),
    }
}

/// The run directory: `<out>/<name>`, defaulting the name to algorithm,
/// generator and environment.
pub fn run_dir(args: &TrainArgs, algo: Algo) -> PathBuf {
    let name = args.name.clone().unwrap_or_else(|| match algo {
        Algo::Vscrl => format!("vscrl-{}-{}", args.generator, args.env),
        Algo::Ppo => format!("ppo-{}", args.env),
    });
    args.out.join(name)
}

pub fn run(algo: Algo, args: &TrainArgs) -> CliResult<()> {
    let n_rooms = multiroom_rooms(args.env)?;
    let dir = run_dir(args, algo);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, args.config.to_toml()).map_err(|e| CliError::io(&cfg_path, e))?;

    if args.parallel && args.seeds.len() > 1 {
        spawn_seeds(args, algo)?;
    } else {
        for &seed in &args.seeds {
            run_seed(algo, args, n_rooms, seed, &dir)?;
        }
    }
    let (svg, _) = plot::render_dirs(&[dir.clone()], &dir)?;
    eprintln!("wrote {}", svg.display());
    Ok(())
}

/// One child process per seed, all writing under the same run directory.
fn spawn_seeds(args: &TrainArgs, algo: Algo) -> CliResult<()> {
    let exe = std::env::current_exe().map_err(|e| CliError::io("current executable", e))?;
    let dir = run_dir(args, algo);
    let name = dir.file_name().expect("run dir has a name").to_string_lossy().into_owned();
    let mut children = Vec::new();
    for &seed in &args.seeds {
        let mut cmd = Command::new(&exe);
        cmd.args(strip_flags(&args.raw_args))
            .args(["--seed", &seed.to_string(), "--name", &name]);
        children.push((seed, cmd.spawn().map_err(|e| CliError::io(&exe, e))?));
    }
    let mut failed = Vec::new();
    for (seed, mut child) in children {
        let status = child.wait().map_err(|e| CliError::io(&exe, e))?;
        if !status.success() {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("seed runs failed: {failed:?}")))
    }
}

/// The original argument list minus the flags a child overrides.
fn strip_flags(raw: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in raw {
        if skip {
            skip = false;
            continue;
        }
        match a.as_str() {
            "--parallel" => {}
            "--seed" | "--name" => skip = true,
            s if s.starts_with("--seed=") || s.starts_with("--name=") => {}
            _ => out.push(a.clone()),
        }
    }
    out
}

fn run_seed(algo: Algo, args: &TrainArgs, n_rooms: usize, seed: u64, dir: &Path) -> CliResult<()> {
    let cfg = &args.config;
    let env_cfg = GridConfig::multiroom(n_rooms, seed);
    let env = GridMultiRoom::new(env_cfg.clone())?;
    let seed_dir = dir.join(format!("seed-{seed}"));
    std::fs::create_dir_all(&seed_dir).map_err(|e| CliError::io(&seed_dir, e))?;
    let metrics_path = seed_dir.join("metrics.jsonl");
    let file = File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    let mut sink = BufWriter::new(file);
    let mut write_err = None;
    let mut observer = |r: &MetricsRecord| {
        if let Some(e) = r.eval_success {
            eprintln!(
                "[{} seed {seed}] steps {:>7} train {:.2} eval {:.2}",
                algo.name(),
                r.env_steps,
                r.train_success,
                e
            );
        }
        let line = serde_json::to_string(r).expect("metrics serialize");
        if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
            write_err.get_or_insert(e);
        }
    };
    let opts = RunOptions::seeded(seed);
    let mut meta = BTreeMap::new();
    meta.insert("algo".to_string(), algo.name().to_string());
    meta.insert("env".to_string(), args.env.to_string());
    meta.insert("layout_seed".to_string(), seed.to_string());

    let out: TrainOutput = match algo {
        Algo::Vscrl => {
            let plan = plan_for(&env, args.env, args.generator, cfg, args.endpoint.as_deref())?;
            let reference = build_reference(&env_cfg, &env, seed, cfg)?;
            eprintln!(
                "[vscrl seed {seed}] plan {:?}, reference {}",
                plan.texts(),
                reference.provenance()
            );
            meta.insert("generator".to_string(), args.generator.to_string());
            meta.insert("reference".to_string(), reference.provenance().to_string());
            meta.insert("reference_checksum".to_string(), reference.checksum());
            train_vscrl(&cfg.defaults, &env_cfg, &plan, &reference, &opts, &mut observer)?
        }
        Algo::Ppo => train_ppo(&cfg.defaults, &env_cfg, &opts, &mut observer)?,
    };
    if let Some(e) = write_err {
        return Err(CliError::io(&metrics_path, e));
    }
    meta.insert("plan".to_string(), serde_json::to_string(&out.plan).expect("plan serializes"));
    meta.insert("env_steps".to_string(), out.env_steps.to_string());
    checkpoint::save(out.policy.net(), &seed_dir.join("policy.ckpt"), meta.clone())?;
    checkpoint::save(&out.critic, &seed_dir.join("critic.ckpt"), meta)?;
    println!(
        "{} seed {seed}: final eval {:.2}, first >= 0.9 at {}",
        algo.name(),
        final_eval(&out.metrics).unwrap_or(f64::NAN),
        steps_to_success(&out.metrics, 0.9).map_or("never".to_string(), |s| format!("{s} steps"))
    );
    Ok(())
}

/// Resolves the subgoal plan, reporting any fallback on stderr.
pub fn plan_for(
    env: &GridMultiRoom,
    kind: EnvKind,
    mode: GeneratorMode,
    cfg: &RunConfig,
    endpoint: Option<&str>,
) -> CliResult<SubgoalPlan> {
    let mut req = SubgoalRequest::new(env.goal());
    let remote = if mode == GeneratorMode::Remote {
        let url = endpoint
            .or(cfg.generator.endpoint.as_deref())
            .ok_or_else(|| CliError::Usage("--generator remote needs --endpoint or generator.endpoint".into()))?;
        let mut g = RemoteGenerator::new(url, cfg.generator.timeout_ms);
        if let Some(var) = &cfg.generator.api_key_env {
            g = g.with_api_key_from_env(var);
        }
        if let Some(path) = &cfg.generator.few_shot {
            req.examples = read_few_shot(path)?;
        }
        req.context = Some(env.render());
        Some(g)
    } else {
        None
    };
    let resolved = resolve_plan(&req, &kind.to_string(), mode, remote.as_ref());
    for f in &resolved.fallbacks {
        eprintln!("warning: subgoal generator fell back: {f}");
    }
    Ok(resolved.plan)
}

/// Behavior-clones the reference from shortest paths on other layouts. A
/// zero imitation weight or zero epochs gives the uniform reference.
fn build_reference(env_cfg: &GridConfig, env: &GridMultiRoom, seed: u64, cfg: &RunConfig) -> CliResult<ReferencePolicy> {
    let feat = Featurizer::for_env(env);
    let r = &cfg.reference;
    if cfg.defaults.imitation_weight == 0.0 || r.epochs == 0 || r.demo_layouts == 0 {
        return Ok(ReferencePolicy::uniform(feat.policy_dim(), &cfg.defaults.hidden, N_ACTIONS)?);
    }
    // Offset far from the run seeds so the training layout is never a demo.
    let layouts: Vec<u64> = (0..r.demo_layouts as u64)
        .map(|j| 1_000_000 + seed * 1_000 + j)
        .collect();
    let demos = oracle_demos(env_cfg, &layouts, r.episodes_per_layout)?;
    let pre = PretrainConfig {
        epochs: r.epochs,
        batch_size: r.batch_size,
        lr: r.lr,
        hidden: cfg.defaults.hidden.clone(),
        seed,
    };
    Ok(pretrain_reference(&feat, &demos, &pre)?)
}
