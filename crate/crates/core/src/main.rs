use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use edgesched::harness::{self, ExperimentConfig, Overrides, SimPolicy};
use edgesched::policy::ActorVariant;
use edgesched::Error;

/// Edge microservice scheduling: simulator, expert, behavior cloning and SAC.
#[derive(Parser, Debug)]
#[command(name = "edgesched", version)]
struct Cli {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the expert or a uniform random policy.
    Simulate {
        #[arg(long)]
        policy: Option<SimPolicy>,
    },
    /// Record expert demonstrations.
    CollectDemos,
    /// Behavior-clone an actor from demonstrations.
    BcTrain {
        /// Demo file; defaults to <out>/demos_seed<s>.txt.
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        variant: Option<ActorVariant>,
    },
    /// Fine-tune (or train from scratch) with SAC.
    SacTrain {
        /// Actor checkpoint to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        variant: Option<ActorVariant>,
    },
    /// Run a frozen actor checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Run a preset experiment matrix.
    Ablate {
        #[arg(long)]
        preset: Option<String>,
    },
}

fn resolve(cli: &Cli) -> edgesched::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let preset = match &cli.command {
        Command::Ablate { preset } => preset.clone(),
        _ => None,
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        nodes: cli.nodes,
        alpha: cli.alpha,
        episodes: cli.episodes,
        out: cli.out.clone(),
        preset,
    });
    match &cli.command {
        Command::Simulate { policy: Some(p) } => cfg.policy = *p,
        Command::BcTrain { variant: Some(v), .. } | Command::SacTrain { variant: Some(v), .. } => cfg.variant = *v,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig, out: &mut dyn Write) -> edgesched::Result<()> {
    match &cli.command {
        Command::Simulate { .. } => {
            for p in harness::simulate(cfg)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
        Command::CollectDemos => {
            for (p, s) in harness::collect(cfg)? {
                writeln!(
                    out,
                    "wrote {} ({} episodes, {} pairs, mean episode reward {:.4})",
                    p.display(),
                    s.episodes,
                    s.pairs,
                    s.mean_episode_reward
                )?;
            }
        }
        Command::BcTrain { demos, .. } => {
            for (p, r) in harness::bc(cfg, demos.as_deref())? {
                let last = r.final_epoch().expect("at least one epoch");
                writeln!(
                    out,
                    "wrote {} (loss {:.4} -> {:.4}, holdout agreement {:.3})",
                    p.display(),
                    r.initial_loss,
                    last.train_loss,
                    last.holdout_agreement
                )?;
            }
        }
        Command::SacTrain { init, .. } => {
            for (p, r) in harness::sac(cfg, init.as_deref())? {
                writeln!(out, "wrote {} (final {}-episode mean reward {:.4})", p.display(), cfg.tail, r.tail_mean(cfg.tail))?;
            }
        }
        Command::Evaluate { checkpoint } => {
            for p in harness::evaluate(cfg, checkpoint)? {
                writeln!(out, "wrote {}", p.display())?;
            }
        }
        Command::Ablate { .. } => {
            let r = harness::ablate(cfg)?;
            writeln!(out, "{:<20} {:>6} {:>12} {:>10}", "group", "seeds", "mean_reward", "on_time")?;
            for g in &r.groups {
                writeln!(out, "{:<20} {:>6} {:>12.4} {:>10.3}", g.group, g.seeds, g.mean_reward, g.on_time_ratio)?;
            }
            writeln!(out, "wrote {}", r.dir.display())?;
        }
    }
    Ok(())
}

fn fail(e: &Error, err: &mut dyn Write) -> u8 {
    let _ = writeln!(err, "error: {e}");
    harness::exit_code(e) as u8
}

/// The whole command line: 0 success, 1 usage, 2 configuration or input,
/// 3 runtime failure.
fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().ansi().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                1
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e, err),
    };
    if cli.print_config {
        return match cfg.to_toml() {
            Ok(t) => {
                let _ = write!(out, "{t}");
                0
            }
            Err(e) => fail(&e, err),
        };
    }
    match run(&cli, &cfg, out) {
        Ok(()) => 0,
        Err(e) => fail(&e, err),
    }
}

fn main() -> ExitCode {
    let code = main_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
