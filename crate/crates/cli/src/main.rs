mod config;
mod error;
mod plot;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vscrl::algo::{evaluate_policy, PolicyNet};
use vscrl::envs::grid::N_ACTIONS;
use vscrl::envs::{GridConfig, GridMultiRoom};
use vscrl::nn::checkpoint;
use vscrl::subgoal_gen::{EnvKind, GeneratorMode, SubgoalPlan};
use vscrl::theory::run_suite;

use config::{RunConfig, Seeds};
use error::{CliError, CliResult};
use train::{multiroom_rooms, plan_for, Algo, TrainArgs};

#[derive(Parser)]
#[command(name = "vscrl", version, about = "Subgoal-conditioned RL trainers, evaluation and exact checks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the subgoal-conditioned agent.
    TrainVscrl(TrainFlags),
    /// Train the PPO baseline on the goal alone.
    TrainPpo(TrainFlags),
    /// Greedy success rate of a saved policy.
    Eval(EvalFlags),
    /// Check the return-additivity and KL-bound propositions on fuzzed MDPs.
    Verify(VerifyFlags),
    /// Plot eval curves (mean and min-max band over seeds) from metrics files.
    Plot(PlotFlags),
    /// Print a layout as ASCII art.
    Render(RenderFlags),
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, e.g. `0,1,2` or `0-2`. Each seed is also the layout seed.
    #[arg(long, default_value = "0")]
    seed: Seeds,
    #[arg(long, default_value = "multiroom-n2")]
    env: EnvKind,
    #[arg(long, default_value = "scripted")]
    generator: GeneratorMode,
    /// Remote generator URL; overrides `generator.endpoint`.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Run directory name under `--out`.
    #[arg(long)]
    name: Option<String>,
    /// Config override, e.g. `--set total_steps=50000` or `--set reference.epochs=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Train the seeds as parallel child processes.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct EvalFlags {
    checkpoint: PathBuf,
    /// Defaults to the environment recorded in the checkpoint manifest.
    #[arg(long)]
    env: Option<EnvKind>,
    /// Layout seeds; defaults to the training layout.
    #[arg(long)]
    seed: Option<Seeds>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Plan to condition on; defaults to the plan stored with the checkpoint.
    #[arg(long)]
    generator: Option<GeneratorMode>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyFlags {
    /// First instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tabular")]
    env: EnvKind,
    /// Number of return-additivity instances.
    #[arg(long, default_value_t = 100)]
    prop1: usize,
    /// Number of KL-bound instances.
    #[arg(long, default_value_t = 1000)]
    prop2: usize,
    /// Print failing rows only.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct PlotFlags {
    /// Directories searched recursively for `metrics.jsonl`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory for `curves.svg` and `curves.csv`; defaults to the first input.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderFlags {
    #[arg(long, default_value = "multiroom-n2")]
    env: EnvKind,
    #[arg(long, default_value = "0")]
    seed: Seeds,
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, raw) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli, raw: Vec<String>) -> CliResult<()> {
    match cli.command {
        Cmd::TrainVscrl(f) => train::run(Algo::Vscrl, &train_args(f, raw)?),
        Cmd::TrainPpo(f) => train::run(Algo::Ppo, &train_args(f, raw)?),
        Cmd::Eval(f) => eval(f),
        Cmd::Verify(f) => verify(f),
        Cmd::Plot(f) => {
            let out = f.out.clone().unwrap_or_else(|| f.inputs[0].clone());
            let (svg, csv) = plot::render_dirs(&f.inputs, &out)?;
            println!("{}\n{}", svg.display(), csv.display());
            Ok(())
        }
        Cmd::Render(f) => {
            let n = multiroom_rooms(f.env)?;
            for seed in f.seed.0 {
                let mut env = GridMultiRoom::new(GridConfig::multiroom(n, seed))?;
                env.reset(seed);
                println!("{} seed {seed}\n{}", f.env, env.render());
            }
            Ok(())
        }
    }
}

fn train_args(f: TrainFlags, raw: Vec<String>) -> CliResult<TrainArgs> {
    let config = RunConfig::resolve(f.config.as_deref(), &f.set)?;
    Ok(TrainArgs {
        config,
        seeds: f.seed.0,
        env: f.env,
        generator: f.generator,
        endpoint: f.endpoint,
        out: f.out,
        name: f.name,
        parallel: f.parallel,
        raw_args: raw,
    })
}

fn eval(f: EvalFlags) -> CliResult<()> {
    if f.episodes == 0 {
        return Err(CliError::Usage("episodes: must be at least 1".into()));
    }
    let (net, manifest) = checkpoint::load(&f.checkpoint)?;
    if net.output_dim() != N_ACTIONS {
        return Err(vscrl::Error::IncompatibleCheckpoint(format!(
            "expected a policy with {N_ACTIONS} outputs, found {}",
            net.output_dim()
        ))
        .into());
    }
    let meta = manifest.map(|m| m.meta).unwrap_or_default();
    let env = match (f.env, meta.get("env")) {
        (Some(e), _) => e,
        (None, Some(e)) => e.parse()?,
        (None, None) => return Err(CliError::Usage("--env is required for checkpoints without a manifest".into())),
    };
    let n = multiroom_rooms(env)?;
    let trained_seed = meta.get("layout_seed").and_then(|s| s.parse::<u64>().ok());
    let seeds = f.seed.clone().map(|s| s.0).unwrap_or_else(|| vec![trained_seed.unwrap_or(0)]);
    let cfg = RunConfig::resolve(f.config.as_deref(), &[])?;
    let policy = PolicyNet::from_net(net)?;
    for seed in seeds {
        let env_cfg = GridConfig::multiroom(n, seed);
        let grid = GridMultiRoom::new(env_cfg.clone())?;
        let same_task = meta.get("env").is_some_and(|e| *e == env.to_string()) && trained_seed == Some(seed);
        let stored: Option<SubgoalPlan> = meta.get("plan").and_then(|p| serde_json::from_str(p).ok());
        let plan = match (f.generator, stored) {
            (Some(mode), _) => plan_for(&grid, env, mode, &cfg, f.endpoint.as_deref())?,
            (None, Some(plan)) if same_task => plan,
            (None, _) => {
                let mode = match meta.get("algo").map(String::as_str) {
                    Some("ppo") => GeneratorMode::Identity,
                    _ => meta
                        .get("generator")
                        .and_then(|g| g.parse().ok())
                        .unwrap_or(GeneratorMode::Scripted),
                };
                plan_for(&grid, env, mode, &cfg, f.endpoint.as_deref())?
            }
        };
        let rate = evaluate_policy(&env_cfg, &policy, &plan, f.episodes, seed)?;
        let wins = (rate * f.episodes as f64).round() as usize;
        println!("{env} seed {seed}: success {rate:.4} ({wins}/{} episodes)", f.episodes);
    }
    Ok(())
}

fn verify(f: VerifyFlags) -> CliResult<()> {
    if f.env != EnvKind::Tabular {
        return Err(CliError::Usage("verify runs on the tabular environment only".into()));
    }
    let rows = run_suite(f.prop1, f.prop2, f.seed)?;
    println!("{:>4} {:>8} {:>22} {:>22} {:>5}", "prop", "seed", "lhs", "rhs", "pass");
    for r in rows.iter().filter(|r| !f.quiet || !r.pass) {
        println!("{:>4} {:>8} {:>22.15e} {:>22.15e} {:>5}", r.proposition, r.seed, r.lhs, r.rhs, r.pass);
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} checks, {} passed, {} failed", rows.len(), rows.len() - failed, failed);
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
