//! Experiment configuration, seeded runs, presets and CSV output.
//!
//! Every command reads one [`ExperimentConfig`] (TOML, all keys optional)
//! plus a few flag overrides, and writes plain CSV files and checkpoints
//! under `out_dir`.

mod metrics;
mod presets;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{read_rows, write_rows, GroupSummary, MetricsRow, RunSummary};
pub use presets::{preset_runs, Init, Phase, RunSpec, ALPHAS, DEMO_COUNTS, NODE_COUNTS, PRESETS, TASK_RANGES};

use crate::bc::{bc_train, BCConfig, BCReport};
use crate::env::{EdgeEnv, EpisodeMetrics, WorkloadConfig};
use crate::error::{Error, Result};
use crate::expert::{collect_demos, load_demos, run_expert_episode, save_demos, DemoSummary};
use crate::model::RewardConfig;
use crate::ndiff::Checkpoint;
use crate::policy::{make_actor, Actor, ActorVariant, CriticPair, NetDims, ObsDims};
use crate::rng::{SeedStreams, NET_INIT, SAMPLING, SHUFFLE};
use crate::sac::{run_actor_episode, ActMode, RunReport, SACConfig, SacAgent};

/// Rollout policy for `simulate`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPolicy {
    Expert,
    /// Uniform over the feasible nodes.
    Random,
}

impl std::str::FromStr for SimPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(SimPolicy::Expert),
            "random" => Ok(SimPolicy::Random),
            other => Err(Error::config("policy", format!("unknown policy `{other}`; expected expert or random"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub variant: ActorVariant,
    pub policy: SimPolicy,
    /// Episodes per run for simulate, evaluate and SAC training.
    pub episodes: usize,
    pub demo_episodes: usize,
    /// Action choice when a trained actor is evaluated.
    pub eval_mode: ActMode,
    /// Final episodes averaged in summaries.
    pub tail: usize,
    /// Intermediate SAC checkpoint period in episodes; 0 keeps only the last.
    pub checkpoint_every: usize,
    pub workload: WorkloadConfig,
    pub reward: RewardConfig,
    pub net: NetDims,
    pub bc: BCConfig,
    pub sac: SACConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs"),
            variant: ActorVariant::Hybrid,
            policy: SimPolicy::Expert,
            episodes: 200,
            demo_episodes: 10,
            eval_mode: ActMode::Greedy,
            tail: 20,
            checkpoint_every: 0,
            workload: WorkloadConfig::default(),
            reward: RewardConfig::default(),
            net: NetDims::default(),
            bc: BCConfig::default(),
            sac: SACConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub nodes: Option<usize>,
    pub alpha: Option<f64>,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
    pub preset: Option<String>,
}

impl ExperimentConfig {
    /// Default config with the reduced SAC batch and update count used for
    /// desk-scale runs.
    pub fn desk() -> Self {
        ExperimentConfig {
            sac: SACConfig::desk(),
            ..ExperimentConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(n) = o.nodes {
            self.workload.node_count = n;
        }
        if let Some(a) = o.alpha {
            self.reward.alpha = a;
        }
        if let Some(e) = o.episodes {
            self.episodes = e;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(p) = &o.preset {
            self.preset = Some(p.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.demo_episodes == 0 {
            return Err(Error::config("demo_episodes", "must be at least 1"));
        }
        if self.tail == 0 {
            return Err(Error::config("tail", "must be at least 1"));
        }
        if let Some(p) = &self.preset {
            preset_runs(p, self)?;
        }
        self.workload.validate()?;
        self.reward.validate()?;
        self.bc.validate()?;
        self.sac_config().validate()
    }

    pub fn sac_config(&self) -> SACConfig {
        SACConfig {
            episodes: self.episodes,
            ..self.sac.clone()
        }
    }

    /// BC settings for one seed; the shuffle order comes from the seed.
    pub fn bc_config(&self, seed: u64) -> BCConfig {
        BCConfig {
            seed: SeedStreams::new(seed).stream(SHUFFLE).gen(),
            ..self.bc.clone()
        }
    }

    fn env(&self, seed: u64) -> Result<EdgeEnv> {
        EdgeEnv::new(self.workload.clone(), self.reward, seed)
    }
}

/// Exit status for an error: 2 for bad configuration or inputs, 3 for
/// failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch { .. }
        | Error::MissingInput(_)
        | Error::Incompatible { .. } => 2,
        _ => 3,
    }
}

/// Fresh actor and critics for `dims`, drawn from the seed's init stream.
/// The critics use their own substream so a BC-initialized actor leaves
/// them unchanged.
pub fn fresh_nets(variant: ActorVariant, dims: ObsDims, net: &NetDims, seed: u64) -> (Actor, CriticPair) {
    let s = SeedStreams::new(seed);
    let actor = make_actor(variant, dims, net, &mut s.indexed(NET_INIT, 0));
    let critics = CriticPair::new(dims, net, &mut s.indexed(NET_INIT, 1));
    (actor, critics)
}

/// Uniform choice over the feasible nodes, falling back when none is.
pub fn run_random_episode(env: &mut EdgeEnv, episode: u64, rng: &mut impl Rng) -> Result<EpisodeMetrics> {
    env.reset(episode)?;
    while !env.is_done() {
        while !env.slot_complete() {
            let mask = env.current_mask()?.bits;
            let feasible: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            if feasible.is_empty() {
                env.assign_fallback()?;
            } else {
                env.assign(feasible[rng.gen_range(0..feasible.len())])?;
            }
        }
        env.settle_slot()?;
    }
    Ok(env.episode_metrics())
}

fn seed_file(cfg: &ExperimentConfig, stem: &str, seed: u64, ext: &str) -> PathBuf {
    cfg.out_dir.join(format!("{stem}_seed{seed}.{ext}"))
}

/// Rolls out the expert or the random policy; one CSV per seed.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let tag = match cfg.policy {
        SimPolicy::Expert => "expert",
        SimPolicy::Random => "random",
    };
    let preset = format!("simulate_{tag}");
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let mut env = cfg.env(seed)?;
        let mut rng = SeedStreams::new(seed).stream(SAMPLING);
        let mut rows = Vec::with_capacity(cfg.episodes);
        for e in 0..cfg.episodes {
            let m = match cfg.policy {
                SimPolicy::Expert => run_expert_episode(&mut env, e as u64)?,
                SimPolicy::Random => run_random_episode(&mut env, e as u64, &mut rng)?,
            };
            rows.push(MetricsRow::from_metrics(&preset, seed, e, &m));
        }
        let path = seed_file(cfg, &preset, seed, "csv");
        write_rows(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Collects `demo_episodes` expert episodes per seed.
pub fn collect(cfg: &ExperimentConfig) -> Result<Vec<(PathBuf, DemoSummary)>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let (data, summary) = collect_demos(&cfg.workload, &cfg.reward, seed, cfg.demo_episodes)?;
        let path = seed_file(cfg, "demos", seed, "txt");
        std::fs::create_dir_all(&cfg.out_dir)?;
        save_demos(&data, &path)?;
        out.push((path, summary));
    }
    Ok(out)
}

/// Behavior cloning per seed from `demos` (or the seed's collected file).
/// Writes `bc_<variant>_seed<s>.ckpt` and the per-epoch CSV.
pub fn bc(cfg: &ExperimentConfig, demos: Option<&Path>) -> Result<Vec<(PathBuf, BCReport)>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let path = demos.map_or_else(|| seed_file(cfg, "demos", seed, "txt"), Path::to_path_buf);
        let data = load_demos(&path)?;
        let dims = ObsDims::of(&cfg.env(seed)?.reset(0)?);
        let (mut actor, _) = fresh_nets(cfg.variant, dims, &cfg.net, seed);
        let report = bc_train(&mut actor, &data, &cfg.bc_config(seed))?;
        let stem = format!("bc_{}", cfg.variant);
        std::fs::create_dir_all(&cfg.out_dir)?;
        report.write_csv(&seed_file(cfg, &stem, seed, "csv"))?;
        let ck = seed_file(cfg, &stem, seed, "ckpt");
        actor.to_checkpoint().save(&ck)?;
        out.push((ck, report));
    }
    Ok(out)
}

fn load_actor(path: &Path, dims: ObsDims, variant: ActorVariant) -> Result<Actor> {
    let actor = Actor::from_checkpoint(&Checkpoint::load(path)?, Some(dims))?;
    if actor.variant() != variant {
        return Err(Error::config(
            "variant",
            format!("checkpoint {} holds a {} actor, config asks for {variant}", path.display(), actor.variant()),
        ));
    }
    Ok(actor)
}

/// SAC training per seed, optionally from an actor checkpoint.
pub fn sac(cfg: &ExperimentConfig, init: Option<&Path>) -> Result<Vec<(PathBuf, RunReport)>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let mut env = cfg.env(seed)?;
        let dims = ObsDims::of(&env.reset(0)?);
        let (mut actor, critics) = fresh_nets(cfg.variant, dims, &cfg.net, seed);
        if let Some(p) = init {
            actor = load_actor(p, dims, cfg.variant)?;
        }
        let stem = format!("sac_{}", cfg.variant);
        std::fs::create_dir_all(&cfg.out_dir)?;
        let mut agent = SacAgent::new(actor, critics, cfg.sac_config(), &SeedStreams::new(seed))?;
        let every = cfg.checkpoint_every;
        let report = agent.train_with(&mut env, 0, |a, log| {
            if every > 0 && (log.episode + 1) % every == 0 {
                a.to_checkpoint().save(&cfg.out_dir.join(format!("{stem}_seed{seed}_ep{}.ckpt", log.episode + 1)))?;
            }
            Ok(())
        })?;
        report.write_csv(&seed_file(cfg, &stem, seed, "csv"))?;
        let ck = seed_file(cfg, &stem, seed, "ckpt");
        agent.to_checkpoint().save(&ck)?;
        out.push((ck, report));
    }
    Ok(out)
}

/// Runs a frozen actor checkpoint for `episodes` episodes per seed.
pub fn evaluate(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let mut env = cfg.env(seed)?;
        let dims = ObsDims::of(&env.reset(0)?);
        let mut actor = Actor::from_checkpoint(&ck, Some(dims))?;
        let mut rng = SeedStreams::new(seed).stream(SAMPLING);
        let mut rows = Vec::with_capacity(cfg.episodes);
        for e in 0..cfg.episodes {
            let m = run_actor_episode(&mut env, &mut actor, e as u64, cfg.eval_mode, &mut rng)?;
            rows.push(MetricsRow::from_metrics("evaluate", seed, e, &m));
        }
        let path = seed_file(cfg, "evaluate", seed, "csv");
        write_rows(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Everything one seeded preset run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub bc: Option<BCReport>,
    pub sac: Option<RunReport>,
    pub actor: Option<Actor>,
}

/// Runs one preset line for one seed.
pub fn execute(cfg: &ExperimentConfig, spec: &RunSpec, seed: u64, preset: &str) -> Result<RunOutput> {
    let mut env = EdgeEnv::new(spec.workload.clone(), spec.reward, seed)?;
    let mut rows = Vec::with_capacity(cfg.episodes);
    if spec.phase == Phase::Expert {
        for e in 0..cfg.episodes {
            let m = run_expert_episode(&mut env, e as u64)?;
            rows.push(MetricsRow::from_metrics(preset, seed, e, &m));
        }
        return Ok(RunOutput {
            rows,
            bc: None,
            sac: None,
            actor: None,
        });
    }
    let dims = ObsDims::of(&env.reset(0)?);
    let (mut actor, critics) = fresh_nets(spec.variant, dims, &cfg.net, seed);
    let bc = match spec.init {
        Init::Scratch => None,
        Init::Bc { demo_episodes } => {
            let (demos, _) = collect_demos(&spec.workload, &spec.reward, seed, demo_episodes)?;
            Some(bc_train(&mut actor, &demos, &cfg.bc_config(seed))?)
        }
    };
    let sac = match spec.phase {
        Phase::Frozen => {
            let mut rng = SeedStreams::new(seed).stream(SAMPLING);
            for e in 0..cfg.episodes {
                let m = run_actor_episode(&mut env, &mut actor, e as u64, cfg.eval_mode, &mut rng)?;
                rows.push(MetricsRow::from_metrics(preset, seed, e, &m));
            }
            None
        }
        _ => {
            let mut agent = SacAgent::new(actor, critics, cfg.sac_config(), &SeedStreams::new(seed))?;
            let report = agent.train(&mut env, 0)?;
            rows.extend(report.episodes.iter().map(|l| MetricsRow::from_log(preset, seed, l)));
            actor = agent.actor;
            Some(report)
        }
    };
    Ok(RunOutput {
        rows,
        bc,
        sac,
        actor: Some(actor),
    })
}

/// Result of a whole preset matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetReport {
    pub preset: String,
    pub dir: PathBuf,
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
}

/// Runs every group of a preset over every seed. Writes
/// `<out>/<preset>/<group>_seed<s>.csv`, `runs.csv` with per-seed tail
/// means and `summary.csv` with their across-seed means.
pub fn ablate(cfg: &ExperimentConfig) -> Result<PresetReport> {
    cfg.validate()?;
    let preset = cfg
        .preset
        .clone()
        .ok_or_else(|| Error::config("preset", format!("no preset given; expected one of {}", PRESETS.join(", "))))?;
    let specs = preset_runs(&preset, cfg)?;
    let dir = cfg.out_dir.join(&preset);
    let mut runs = Vec::new();
    let mut groups = Vec::new();
    for spec in &specs {
        let mut per_seed = Vec::new();
        for &seed in &cfg.seeds {
            let out = execute(cfg, spec, seed, &preset)?;
            write_rows(&dir.join(format!("{}_seed{seed}.csv", spec.group)), &out.rows)?;
            per_seed.push(RunSummary::of(&preset, &spec.group, seed, &out.rows, cfg.tail));
        }
        groups.push(GroupSummary::of(&per_seed));
        runs.extend(per_seed);
    }
    write_rows(&dir.join("runs.csv"), &runs)?;
    write_rows(&dir.join("summary.csv"), &groups)?;
    Ok(PresetReport {
        preset,
        dir,
        runs,
        groups,
    })
}
