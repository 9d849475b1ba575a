use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use a7_core::baselines::StrategyKind;
use a7_core::dqn::load_q_network;
use a7_core::env::{EnvSpec, DEFAULT_MAX_STEPS};
use a7_core::harness::{evaluate_agent, run_training, ExperimentConfig, RunMetrics};
use a7_core::{Error, Result};

#[derive(Parser)]
#[command(name = "a7", about = "Budgeted action advising experiments on GridWorld")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    /// Config file; reference defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// a7, na, ea, ra, iaa or ana.
    #[arg(long)]
    strategy: Option<StrategyKind>,
    /// `gridworld`, `open`, `four-rooms`, or a map file.
    #[arg(long)]
    env: Option<EnvSpec>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Write a per-step trace.csv.
    #[arg(long)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved agent greedily on a map file.
    Eval {
        /// Agent manifest written by `run`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: EnvSpec,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// Run a range of seeds concurrently, one directory per seed.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Inclusive range such as `1..5`.
        #[arg(long, value_parser = parse_seed_range)]
        seeds: RangeInclusive<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn parse_seed_range(s: &str) -> std::result::Result<RangeInclusive<u64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|_| format!("bad seed {a:?}"))?;
    let b: u64 = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad seed {b:?}"))?;
    if a > b {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(a..=b)
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    if let Some(env) = &args.env {
        cfg.env = env.clone();
    }
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    if let Some(n) = args.steps {
        cfg.total_steps = n;
    }
    cfg.eval.trace |= args.trace;
    cfg.validate()?;
    Ok(cfg)
}

fn summary(cfg: &ExperimentConfig, m: &RunMetrics) -> String {
    format!(
        "strategy={} seed={} auc={} final_score={} teacher_queries={} reuse_firings={}",
        cfg.strategy,
        cfg.seed,
        m.auc.map_or("n/a".into(), |a| format!("{a:.4}")),
        m.final_score().map_or("n/a".into(), |s| format!("{s:.3}")),
        m.teacher_queries,
        m.reuse_firings
    )
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { args, seed, out } => {
            let mut cfg = build_config(&args)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(out) = out {
                cfg.output_dir = Some(out.display().to_string());
            }
            let m = run_training(&cfg)?;
            println!("{}", summary(&cfg, &m));
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            max_steps,
        } => {
            let net = load_q_network(&checkpoint)?;
            let mut world = env.build(max_steps)?;
            if net.state_dim() != world.state_dim() || net.num_actions() != world.num_actions() {
                return Err(Error::Checkpoint(format!(
                    "network expects {} inputs and {} actions, environment has {} and {}",
                    net.state_dim(),
                    net.num_actions(),
                    world.state_dim(),
                    world.num_actions()
                )));
            }
            println!("score={}", evaluate_agent(&net, &mut world, episodes)?);
        }
        Command::Sweep { args, seeds, out } => {
            let base = build_config(&args)?;
            let results: Vec<(ExperimentConfig, Result<RunMetrics>)> = std::thread::scope(|s| {
                let handles: Vec<_> = seeds
                    .map(|seed| {
                        let mut cfg = base.clone();
                        cfg.seed = seed;
                        cfg.output_dir = Some(
                            out.join(format!("{}-seed{seed}", cfg.strategy))
                                .display()
                                .to_string(),
                        );
                        s.spawn(move || {
                            let r = run_training(&cfg);
                            (cfg, r)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
            });
            let mut failed = None;
            for (cfg, r) in results {
                match r {
                    Ok(m) => println!("{}", summary(&cfg, &m)),
                    Err(e) => {
                        eprintln!("seed {}: {e}", cfg.seed);
                        failed = Some(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
