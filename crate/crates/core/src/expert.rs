//! Greedy delay/energy expert and its demonstration datasets.
//!
//! For every feasible node the expert estimates the task's cost as if the
//! node's free CPU were split between the tasks already placed on it this
//! slot plus the new one. Later arrivals in the same slot are ignored, so
//! the estimate is optimistic for early tasks.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::{Assignment, DecisionView, EdgeEnv, EpisodeMetrics, SlotObservation, WorkloadConfig};
use crate::error::{Error, Result};
use crate::mask::effective_mask;
use crate::model::{total_cost, CostBreakdown, CostInputs, RewardConfig};
use crate::textio::{expect_header, push_bools, push_f64s, Lines};

/// Episode indices used for demonstrations start here, so demo workloads
/// never coincide with training or evaluation episodes of the same seed.
pub const DEMO_EPISODE_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertDecision {
    /// `None` when no node is feasible; the caller must use the fallback.
    pub node: Option<usize>,
    pub scores: Vec<Option<f64>>,
    pub margins: Vec<Option<f64>>,
    pub energies: Vec<Option<f64>>,
}

/// Cost of the view's task on `node` under the expert's equal-split
/// assumption.
pub fn estimate_cost(view: &DecisionView<'_>, node: usize) -> Result<CostBreakdown> {
    let spec = &view.nodes[node];
    let ledger = &view.ledgers[node];
    total_cost(&CostInputs {
        data_size: view.task.data_size,
        cycles: view.task.cpu_cycles,
        channel: view.channel(node),
        fetch: ledger.fetch_plan(view.image(), view.now),
        assigned_count: view.assigned[node] + 1,
        free_cpu: ledger.free_cpu,
        total_cpu: spec.total_cpu,
        comm_power: spec.comm_power,
        comp_power: spec.comp_power,
    })
}

/// Scores feasible nodes by `alpha * margin - energy`; ties go to the lowest id.
pub fn expert_act(view: &DecisionView<'_>, alpha: f64) -> Result<ExpertDecision> {
    let n = view.nodes.len();
    let mask = view.mask();
    let mut d = ExpertDecision {
        node: None,
        scores: vec![None; n],
        margins: vec![None; n],
        energies: vec![None; n],
    };
    let mut best = f64::NEG_INFINITY;
    for i in (0..n).filter(|&i| mask.bits[i]) {
        let cost = estimate_cost(view, i)?;
        let margin = view.task.deadline - cost.t_total;
        let score = alpha * margin - cost.e_total;
        d.margins[i] = Some(margin);
        d.energies[i] = Some(cost.e_total);
        d.scores[i] = Some(score);
        if score > best || d.node.is_none() {
            best = score;
            d.node = Some(i);
        }
    }
    Ok(d)
}

/// Lets the expert place the env's current task, using the fallback when
/// nothing is feasible.
pub fn expert_step(env: &mut EdgeEnv) -> Result<Assignment> {
    let alpha = env.reward_config().alpha;
    match expert_act(&env.view()?, alpha)?.node {
        Some(node) => env.assign(node),
        None => env.assign_fallback(),
    }
}

/// Runs one full episode under the expert.
pub fn run_expert_episode(env: &mut EdgeEnv, episode: u64) -> Result<EpisodeMetrics> {
    env.reset(episode)?;
    while !env.is_done() {
        while !env.slot_complete() {
            expert_step(env)?;
        }
        env.settle_slot()?;
    }
    Ok(env.episode_metrics())
}

/// One expert decision.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoRecord {
    pub episode: u64,
    pub obs: SlotObservation,
    pub action: usize,
    pub fallback: bool,
}

impl DemoRecord {
    /// Mask the learner trains against; one-hot at the action for fallbacks.
    pub fn effective_mask(&self) -> Vec<bool> {
        effective_mask(&self.obs.mask, self.action)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemoDataset {
    pub records: Vec<DemoRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoSummary {
    pub episodes: usize,
    pub pairs: usize,
    pub mean_episode_reward: f64,
}

impl DemoDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.records.first().map_or(0, |r| r.obs.mask.len())
    }

    /// Distinct episode ids in order of first appearance.
    pub fn episodes(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.episode) && !out.contains(&r.episode) {
                out.push(r.episode);
            }
        }
        out
    }

    /// Consecutive runs of records from the same episode and slot.
    pub fn slots(&self) -> Vec<&[DemoRecord]> {
        self.records
            .chunk_by(|a, b| a.episode == b.episode && a.obs.slot_index == b.obs.slot_index)
            .collect()
    }

    /// Splits off the last `held_out` episodes.
    pub fn split_episodes(&self, held_out: usize) -> (DemoDataset, DemoDataset) {
        let eps = self.episodes();
        let cut = eps.len().saturating_sub(held_out);
        let test = &eps[cut..];
        let (b, a): (Vec<_>, Vec<_>) = self.records.iter().cloned().partition(|r| test.contains(&r.episode));
        (DemoDataset { records: a }, DemoDataset { records: b })
    }
}

/// Runs the expert on `episodes` workloads of `env` and records every decision.
pub fn collect_demos_in(env: &mut EdgeEnv, episodes: impl IntoIterator<Item = u64>) -> Result<(DemoDataset, DemoSummary)> {
    let alpha = env.reward_config().alpha;
    let mut data = DemoDataset::default();
    let mut rewards = Vec::new();
    for ep in episodes {
        env.reset(ep)?;
        while !env.is_done() {
            while !env.slot_complete() {
                let obs = env.observe()?;
                let (action, fallback) = match expert_act(&env.view()?, alpha)?.node {
                    Some(n) => (n, false),
                    None => (env.fallback_node(), true),
                };
                let a = if fallback { env.assign_fallback()? } else { env.assign(action)? };
                debug_assert_eq!(a.node, action);
                data.records.push(DemoRecord {
                    episode: ep,
                    obs,
                    action,
                    fallback,
                });
            }
            env.settle_slot()?;
        }
        rewards.push(env.episode_metrics().total_reward);
    }
    if rewards.is_empty() {
        return Err(Error::InvalidCount("demonstration episodes must be at least 1"));
    }
    let summary = DemoSummary {
        episodes: rewards.len(),
        pairs: data.len(),
        mean_episode_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
    };
    Ok((data, summary))
}

/// Collects `episodes` expert episodes for `seed`, drawn from the
/// demonstration episode range.
pub fn collect_demos(cfg: &WorkloadConfig, reward: &RewardConfig, seed: u64, episodes: usize) -> Result<(DemoDataset, DemoSummary)> {
    if episodes == 0 {
        return Err(Error::InvalidCount("demonstration episodes must be at least 1"));
    }
    let mut env = EdgeEnv::new(cfg.clone(), *reward, seed)?;
    collect_demos_in(&mut env, (0..episodes as u64).map(|e| DEMO_EPISODE_OFFSET + e))
}

const MAGIC: &str = "edgesched-demos";
const VERSION: u32 = 1;

// edgesched-demos 1
// records <R> nodes <N> node_state <A> ms_state <B>
// rec <episode> <slot> <task> <action> <fallback> <mask bits> <node_state..> <ms_state..>
// end
pub fn demos_to_text(data: &DemoDataset) -> String {
    let (a, b) = data
        .records
        .first()
        .map_or((0, 0), |r| (r.obs.node_state.len(), r.obs.ms_state.len()));
    let mut s = format!("{MAGIC} {VERSION}\n");
    let _ = writeln!(s, "records {} nodes {} node_state {a} ms_state {b}", data.len(), data.node_count());
    for r in &data.records {
        let _ = write!(
            s,
            "rec {} {} {} {} {}",
            r.episode, r.obs.slot_index, r.obs.task_index, r.action, r.fallback as u8
        );
        push_bools(&mut s, &r.obs.mask);
        push_f64s(&mut s, &r.obs.node_state);
        push_f64s(&mut s, &r.obs.ms_state);
        s.push('\n');
    }
    s.push_str("end\n");
    s
}

pub fn demos_from_text(src: &str) -> Result<DemoDataset> {
    let mut lines = Lines::new(src);
    expect_header(&mut lines, MAGIC, VERSION)?;
    let line = lines.expect("`records` line")?;
    let mut f = line.fields();
    f.keyword("records")?;
    let count = f.usize("record count")?;
    f.keyword("nodes")?;
    let n = f.usize("node count")?;
    f.keyword("node_state")?;
    let a = f.usize("node state width")?;
    f.keyword("ms_state")?;
    let b = f.usize("task state width")?;
    f.finish()?;

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines.expect("`rec` line")?;
        let mut f = line.fields();
        f.keyword("rec")?;
        let episode = f.u64("episode")?;
        let slot_index = f.usize("slot index")?;
        let task_index = f.usize("task index")?;
        let action = f.usize("action")?;
        let fallback = match f.word("fallback flag")? {
            "0" => false,
            "1" => true,
            w => return Err(line.error(format!("invalid fallback flag `{w}`"))),
        };
        let mask = f.bools(n, "mask")?;
        let node_state = f.f64s(a, "node state")?;
        let ms_state = f.f64s(b, "task state")?;
        f.finish()?;
        if action >= n {
            return Err(line.error(format!("action {action} out of range 0..{n}")));
        }
        records.push(DemoRecord {
            episode,
            obs: SlotObservation {
                node_state,
                ms_state,
                mask,
                slot_index,
                task_index,
            },
            action,
            fallback,
        });
    }
    let line = lines.expect("`end`")?;
    if line.text.trim() != "end" {
        return Err(line.error("expected `end` after the declared records"));
    }
    Ok(DemoDataset { records })
}

pub fn save_demos(data: &DemoDataset, path: &Path) -> Result<()> {
    std::fs::write(path, demos_to_text(data))?;
    Ok(())
}

pub fn load_demos(path: &Path) -> Result<DemoDataset> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    demos_from_text(&std::fs::read_to_string(path)?)
}
