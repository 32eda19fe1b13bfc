use crate::env::WorkloadConfig;
use crate::error::{Error, Result};
use crate::model::RewardConfig;
use crate::policy::ActorVariant;

use super::ExperimentConfig;

/// How the actor is initialized before the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Scratch,
    /// Behavior cloning on this many expert episodes.
    Bc { demo_episodes: usize },
}

/// What happens during the run's episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// SAC fine-tuning; rows come from the training episodes.
    Sac,
    /// The initialized actor is only evaluated.
    Frozen,
    /// The rule-based expert; the actor is unused.
    Expert,
}

/// One line of a preset matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub group: String,
    pub variant: ActorVariant,
    pub init: Init,
    pub phase: Phase,
    pub workload: WorkloadConfig,
    pub reward: RewardConfig,
}

pub const PRESETS: [&str; 7] = [
    "bc_effect",
    "demo_sweep",
    "arch_ablation",
    "bc_only_vs_rl",
    "node_sweep",
    "task_sweep",
    "alpha_sweep",
];

pub const DEMO_COUNTS: [usize; 4] = [5, 10, 15, 20];
pub const NODE_COUNTS: [usize; 3] = [5, 10, 15];
pub const TASK_RANGES: [[usize; 2]; 3] = [[3, 8], [5, 12], [5, 20]];
pub const ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];

/// Expands a preset name into its run groups, built on top of `cfg`.
pub fn preset_runs(name: &str, cfg: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    let demos = cfg.demo_episodes;
    let base = |group: String, variant: ActorVariant, init: Init, phase: Phase| RunSpec {
        group,
        variant,
        init,
        phase,
        workload: cfg.workload.clone(),
        reward: cfg.reward,
    };
    let bc = Init::Bc { demo_episodes: demos };
    let runs = match name {
        "bc_effect" => [ActorVariant::Hybrid, ActorVariant::Fc]
            .into_iter()
            .flat_map(|v| {
                [
                    base(format!("bc_{v}"), v, bc, Phase::Sac),
                    base(format!("scratch_{v}"), v, Init::Scratch, Phase::Sac),
                ]
            })
            .collect(),
        "demo_sweep" => DEMO_COUNTS
            .iter()
            .map(|&d| base(format!("demos_{d}"), cfg.variant, Init::Bc { demo_episodes: d }, Phase::Sac))
            .collect(),
        "arch_ablation" => ActorVariant::ALL
            .into_iter()
            .map(|v| base(format!("bc_{v}"), v, bc, Phase::Sac))
            .collect(),
        "bc_only_vs_rl" => vec![
            base("bc_only".into(), cfg.variant, bc, Phase::Frozen),
            base("bc_sac".into(), cfg.variant, bc, Phase::Sac),
            base("expert".into(), cfg.variant, Init::Scratch, Phase::Expert),
        ],
        "node_sweep" => NODE_COUNTS
            .iter()
            .map(|&n| RunSpec {
                workload: WorkloadConfig {
                    node_count: n,
                    ..cfg.workload.clone()
                },
                ..base(format!("nodes_{n}"), cfg.variant, bc, Phase::Sac)
            })
            .collect(),
        "task_sweep" => TASK_RANGES
            .iter()
            .map(|&[lo, hi]| RunSpec {
                workload: WorkloadConfig {
                    tasks_per_slot: [lo, hi],
                    ..cfg.workload.clone()
                },
                ..base(format!("tasks_{lo}_{hi}"), cfg.variant, bc, Phase::Sac)
            })
            .collect(),
        "alpha_sweep" => ALPHAS
            .iter()
            .map(|&a| RunSpec {
                reward: RewardConfig { alpha: a, ..cfg.reward },
                ..base(format!("alpha_{a}"), cfg.variant, bc, Phase::Sac)
            })
            .collect(),
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
            ))
        }
    };
    Ok(runs)
}
