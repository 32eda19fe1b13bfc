//! Slot-sequential scheduling environment.
//!
//! Each slot delivers `K_t` requests that are assigned one at a time.
//! Memory and storage are committed as each assignment is made; CPU
//! shares, rates and costs are settled jointly once the whole slot has
//! been assigned, then the clock advances by one slot length and finished
//! tasks release their resources.

pub mod config;
pub mod ledger;
pub mod trace;
pub mod workload;

use crate::error::{Error, Result};
use crate::mask::{build_mask, ActionMask};
use crate::model::{
    total_cost, ChannelParams, CostBreakdown, CostInputs, ImageFetch, ImageId, ImageSpec, MicroserviceRequest, RewardConfig,
};
use crate::rng::SeedStreams;

pub use config::{Range, WorkloadConfig};
pub use ledger::{Allocation, NodeLedger};
pub use workload::{generate_episode, EpisodeWorkload, NodeSpec, TaskArrival, Topology};

/// Normalized per-decision state.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotObservation {
    /// `[F(t); M^k(t); D^k(t); P^comm; P^comp; B]`, each block `N` long.
    pub node_state: Vec<f64>,
    /// `[d, c, m, image, l]` plus optional per-node image presence bits.
    pub ms_state: Vec<f64>,
    pub mask: Vec<bool>,
    pub slot_index: usize,
    pub task_index: usize,
}

impl SlotObservation {
    /// `node_state ++ ms_state`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.node_state.len() + self.ms_state.len());
        v.extend_from_slice(&self.node_state);
        v.extend_from_slice(&self.ms_state);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub task_id: u64,
    pub node: usize,
    pub cost: CostBreakdown,
    pub reward: f64,
    pub deadline_met: bool,
    /// Chosen node was masked out at decision time.
    pub violating: bool,
    /// Chosen by the max-free-CPU fallback because nothing was feasible.
    pub fallback: bool,
    /// The node could not physically host the task; it was dropped with the
    /// deadline penalty and no resources were committed.
    pub rejected: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlotOutcome {
    pub slot_index: usize,
    pub tasks: Vec<TaskOutcome>,
    pub total_time: f64,
    pub total_energy: f64,
    pub total_download_time: f64,
    pub on_time_count: usize,
    pub reward_sum: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub tasks: usize,
    pub total_time: f64,
    pub total_energy: f64,
    pub total_download_time: f64,
    pub on_time_count: usize,
    pub on_time_ratio: f64,
    pub total_reward: f64,
    pub mean_reward: f64,
    pub violations: usize,
    pub rejections: usize,
}

impl EpisodeMetrics {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a SlotOutcome>) -> Self {
        let mut m = EpisodeMetrics::default();
        for o in outcomes {
            m.tasks += o.tasks.len();
            m.total_time += o.total_time;
            m.total_energy += o.total_energy;
            m.total_download_time += o.total_download_time;
            m.on_time_count += o.on_time_count;
            m.total_reward += o.reward_sum;
            m.violations += o.tasks.iter().filter(|t| t.violating).count();
            m.rejections += o.tasks.iter().filter(|t| t.rejected).count();
        }
        if m.tasks > 0 {
            m.on_time_ratio = m.on_time_count as f64 / m.tasks as f64;
            m.mean_reward = m.total_reward / m.tasks as f64;
        }
        m
    }
}

/// Receipt returned by [`EdgeEnv::assign`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment {
    pub node: usize,
    pub violating: bool,
    pub fallback: bool,
    pub rejected: bool,
}

#[derive(Clone, Debug)]
struct Pending {
    assignment: Assignment,
    fetch: ImageFetch,
}

/// Read-only snapshot of everything a heuristic needs for one decision.
#[derive(Clone, Copy, Debug)]
pub struct DecisionView<'a> {
    pub nodes: &'a [NodeSpec],
    pub ledgers: &'a [NodeLedger],
    pub images: &'a [ImageSpec],
    pub task: &'a MicroserviceRequest,
    pub gains: &'a [f64],
    /// Tasks already placed (and not rejected) on each node this slot.
    pub assigned: &'a [usize],
    pub now: f64,
    pub noise_power: f64,
}

impl DecisionView<'_> {
    pub fn image(&self) -> &ImageSpec {
        &self.images[self.task.image_id.0]
    }

    pub fn channel(&self, node: usize) -> ChannelParams {
        ChannelParams {
            node_bandwidth: self.nodes[node].bandwidth,
            device_tx_power: self.task.tx_power,
            channel_gain: self.gains[node],
            noise_power: self.noise_power,
        }
    }

    pub fn mask(&self) -> ActionMask {
        build_mask(self.ledgers, self.task, self.image())
    }
}

#[derive(Clone, Debug)]
pub struct EdgeEnv {
    cfg: WorkloadConfig,
    reward: RewardConfig,
    streams: SeedStreams,
    topology: Topology,
    ledgers: Vec<NodeLedger>,
    workload: EpisodeWorkload,
    slot: usize,
    task: usize,
    now: f64,
    pending: Vec<Pending>,
    assigned: Vec<usize>,
    outcomes: Vec<SlotOutcome>,
    active: bool,
}

impl EdgeEnv {
    /// Samples the topology from the seed's topology substream.
    pub fn new(cfg: WorkloadConfig, reward: RewardConfig, seed: u64) -> Result<Self> {
        let streams = SeedStreams::new(seed);
        let topology = Topology::sample(&cfg, &streams)?;
        Self::with_topology(cfg, reward, seed, topology)
    }

    pub fn with_topology(cfg: WorkloadConfig, reward: RewardConfig, seed: u64, topology: Topology) -> Result<Self> {
        cfg.validate()?;
        reward.validate()?;
        topology.validate(&cfg)?;
        let ledgers = topology.nodes.iter().map(NodeLedger::new).collect();
        let n = cfg.node_count;
        Ok(EdgeEnv {
            cfg,
            reward,
            streams: SeedStreams::new(seed),
            topology,
            ledgers,
            workload: EpisodeWorkload { slots: Vec::new() },
            slot: 0,
            task: 0,
            now: 0.0,
            pending: Vec::new(),
            assigned: vec![0; n],
            outcomes: Vec::new(),
            active: false,
        })
    }

    pub fn config(&self) -> &WorkloadConfig {
        &self.cfg
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn ledgers(&self) -> &[NodeLedger] {
        &self.ledgers
    }

    pub fn node_count(&self) -> usize {
        self.cfg.node_count
    }

    pub fn seed(&self) -> u64 {
        self.streams.master()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn slot_index(&self) -> usize {
        self.slot
    }

    pub fn task_index(&self) -> usize {
        self.task
    }

    pub fn workload(&self) -> &EpisodeWorkload {
        &self.workload
    }

    pub fn generate(&self, episode: u64) -> Result<EpisodeWorkload> {
        generate_episode(&self.cfg, &self.topology, &self.streams, episode)
    }

    /// Starts episode `episode` with freshly generated arrivals.
    pub fn reset(&mut self, episode: u64) -> Result<SlotObservation> {
        let w = self.generate(episode)?;
        self.reset_with(w)
    }

    /// Starts an episode from explicit arrivals (e.g. a reloaded trace).
    pub fn reset_with(&mut self, workload: EpisodeWorkload) -> Result<SlotObservation> {
        for (s, slot) in workload.slots.iter().enumerate() {
            if slot.is_empty() {
                return Err(Error::config(format!("workload.slot[{s}]"), "every slot needs at least one task"));
            }
            for t in slot {
                if t.gains.len() != self.cfg.node_count {
                    return Err(Error::DimensionMismatch {
                        what: format!("channel gains of task {}", t.request.id),
                        expected: self.cfg.node_count,
                        found: t.gains.len(),
                    });
                }
                if t.request.image_id.0 >= self.topology.images.len() {
                    return Err(Error::config(format!("task[{}].image_id", t.request.id), "unknown image"));
                }
            }
        }
        if workload.slots.is_empty() {
            return Err(Error::config("workload", "episode has no slots"));
        }
        self.ledgers = self.topology.nodes.iter().map(NodeLedger::new).collect();
        self.workload = workload;
        self.slot = 0;
        self.task = 0;
        self.now = 0.0;
        self.pending.clear();
        self.assigned.iter_mut().for_each(|a| *a = 0);
        self.outcomes.clear();
        self.active = true;
        self.observe()
    }

    pub fn is_done(&self) -> bool {
        !self.active
    }

    pub fn slot_len(&self) -> usize {
        self.workload.slots.get(self.slot).map_or(0, Vec::len)
    }

    /// All tasks of the current slot have been assigned.
    pub fn slot_complete(&self) -> bool {
        self.active && self.task >= self.slot_len()
    }

    fn current(&self) -> Result<&TaskArrival> {
        if !self.active {
            return Err(Error::Sequencing("episode is not active"));
        }
        self.workload.slots[self.slot]
            .get(self.task)
            .ok_or(Error::Sequencing("all tasks of this slot are assigned; settle the slot first"))
    }

    pub fn current_task(&self) -> Result<&MicroserviceRequest> {
        Ok(&self.current()?.request)
    }

    pub fn view(&self) -> Result<DecisionView<'_>> {
        let arrival = self.current()?;
        Ok(DecisionView {
            nodes: &self.topology.nodes,
            ledgers: &self.ledgers,
            images: &self.topology.images,
            task: &arrival.request,
            gains: &arrival.gains,
            assigned: &self.assigned,
            now: self.now,
            noise_power: self.cfg.noise_power,
        })
    }

    pub fn current_mask(&self) -> Result<ActionMask> {
        Ok(self.view()?.mask())
    }

    /// Observation for the current task of the current slot.
    pub fn observe(&self) -> Result<SlotObservation> {
        let view = self.view()?;
        let cfg = &self.cfg;
        let n = cfg.node_count;
        let mut node_state = vec![0.0; 6 * n];
        for (i, (spec, l)) in self.topology.nodes.iter().zip(&self.ledgers).enumerate() {
            node_state[i] = Range::new(0.0, cfg.node_cpu.hi).normalize(l.free_cpu);
            node_state[n + i] = Range::new(0.0, cfg.node_memory.hi).normalize(l.free_memory);
            node_state[2 * n + i] = Range::new(0.0, cfg.node_storage.hi).normalize(l.free_storage);
            node_state[3 * n + i] = cfg.node_comm_power.normalize(spec.comm_power);
            node_state[4 * n + i] = cfg.node_comp_power.normalize(spec.comp_power);
            node_state[5 * n + i] = cfg.node_bandwidth.normalize(spec.bandwidth);
        }
        let t = view.task;
        let mut ms_state = vec![
            cfg.task_data.normalize(t.data_size),
            cfg.task_cycles.normalize(t.cpu_cycles),
            cfg.task_memory.normalize(t.memory),
            Range::new(0.0, (cfg.image_count.max(2) - 1) as f64).normalize(t.image_id.0 as f64),
            cfg.task_deadline.normalize(t.deadline),
        ];
        if cfg.image_presence_bits {
            ms_state.extend(self.ledgers.iter().map(|l| if l.has_image(t.image_id) { 1.0 } else { 0.0 }));
        }
        Ok(SlotObservation {
            node_state,
            ms_state,
            mask: view.mask().bits,
            slot_index: self.slot,
            task_index: self.task,
        })
    }

    /// Places `image` on `node` as already present. Only allowed before the
    /// first decision of an episode.
    pub fn preload(&mut self, node: usize, image: ImageId) -> Result<()> {
        if !self.active || self.slot != 0 || self.task != 0 {
            return Err(Error::Sequencing("images can only be preloaded before the first decision"));
        }
        let spec = *self
            .topology
            .images
            .get(image.0)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown image {}", image.0)))?;
        let ledger = self
            .ledgers
            .get_mut(node)
            .ok_or_else(|| Error::InvalidArgument(format!("node {node} out of range")))?;
        if ledger.has_image(image) {
            return Ok(());
        }
        if spec.size > ledger.free_storage {
            return Err(Error::InvalidArgument(format!("image {} does not fit on node {node}", image.0)));
        }
        ledger.images.insert(image, 0.0);
        ledger.free_storage -= spec.size;
        Ok(())
    }

    /// Node with the most free CPU, lowest id on ties.
    pub fn fallback_node(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.ledgers.iter().enumerate() {
            if l.free_cpu > self.ledgers[best].free_cpu {
                best = i;
            }
        }
        best
    }

    /// Assigns the current task to `node`. Masked-out nodes are accepted
    /// and flagged; a node that cannot physically host the task drops it.
    pub fn assign(&mut self, node: usize) -> Result<Assignment> {
        self.assign_inner(node, false)
    }

    /// Assigns via the max-free-CPU fallback, used when the mask is empty.
    pub fn assign_fallback(&mut self) -> Result<Assignment> {
        self.assign_inner(self.fallback_node(), true)
    }

    fn assign_inner(&mut self, node: usize, fallback: bool) -> Result<Assignment> {
        if node >= self.cfg.node_count {
            return Err(Error::InvalidArgument(format!("node {node} out of range 0..{}", self.cfg.node_count)));
        }
        let arrival = self.current()?;
        let task = arrival.request.clone();
        let image = self.topology.images[task.image_id.0];
        let violating = !build_mask(&self.ledgers, &task, &image).bits[node];
        let ledger = &self.ledgers[node];
        let fits = ledger.free_cpu > 0.0
            && task.memory <= ledger.free_memory
            && (ledger.has_image(task.image_id) || image.size <= ledger.free_storage);
        let assignment = Assignment {
            node,
            violating,
            fallback,
            rejected: !fits,
        };
        let fetch = if fits {
            let now = self.now;
            let bandwidth = self.topology.nodes[node].bandwidth;
            let ledger = &mut self.ledgers[node];
            let fetch = ledger.fetch_plan(&image, now);
            if let ImageFetch::Pull { .. } = fetch {
                ledger.enqueue_pull(&image, bandwidth, now);
            }
            ledger.free_memory -= task.memory;
            ledger.pending_memory += task.memory;
            self.assigned[node] += 1;
            fetch
        } else {
            ImageFetch::Cached
        };
        self.pending.push(Pending { assignment, fetch });
        self.task += 1;
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
        Ok(assignment)
    }

    /// Costs every task of the slot, freezes CPU shares, advances the clock
    /// by one slot and applies due releases.
    pub fn settle_slot(&mut self) -> Result<SlotOutcome> {
        if !self.active {
            return Err(Error::Sequencing("episode is not active"));
        }
        if self.task < self.slot_len() {
            return Err(Error::Sequencing("cannot settle a slot with unassigned tasks"));
        }
        let arrivals = &self.workload.slots[self.slot];
        let mut outcome = SlotOutcome {
            slot_index: self.slot,
            ..SlotOutcome::default()
        };
        let mut allocations: Vec<Vec<Allocation>> = vec![Vec::new(); self.cfg.node_count];
        for (arrival, p) in arrivals.iter().zip(&self.pending) {
            let a = p.assignment;
            let task = &arrival.request;
            let (cost, reward) = if a.rejected {
                (CostBreakdown::default(), self.reward.deadline_penalty)
            } else {
                let spec = &self.topology.nodes[a.node];
                let ledger = &self.ledgers[a.node];
                let count = self.assigned[a.node];
                let inputs = CostInputs {
                    data_size: task.data_size,
                    cycles: task.cpu_cycles,
                    channel: ChannelParams {
                        node_bandwidth: spec.bandwidth,
                        device_tx_power: task.tx_power,
                        channel_gain: arrival.gains[a.node],
                        noise_power: self.cfg.noise_power,
                    },
                    fetch: p.fetch,
                    assigned_count: count,
                    free_cpu: ledger.free_cpu,
                    total_cpu: spec.total_cpu,
                    comm_power: spec.comm_power,
                    comp_power: spec.comp_power,
                };
                let cost = total_cost(&inputs)?;
                allocations[a.node].push(Allocation {
                    release_time: self.now + cost.t_total,
                    cpu_share: ledger.free_cpu / count as f64,
                    memory: task.memory,
                });
                (cost, crate::model::reward(&cost, task.deadline, &self.reward)?)
            };
            let deadline_met = !a.rejected && cost.t_total <= task.deadline;
            outcome.total_time += cost.t_total;
            outcome.total_energy += cost.e_total;
            outcome.total_download_time += cost.t_down;
            outcome.on_time_count += deadline_met as usize;
            outcome.reward_sum += reward;
            outcome.tasks.push(TaskOutcome {
                task_id: task.id,
                node: a.node,
                cost,
                reward,
                deadline_met,
                violating: a.violating,
                fallback: a.fallback,
                rejected: a.rejected,
            });
        }
        for ((ledger, spec), allocs) in self.ledgers.iter_mut().zip(&self.topology.nodes).zip(allocations) {
            ledger.settle_pending(spec, allocs);
        }
        self.pending.clear();
        self.assigned.iter_mut().for_each(|a| *a = 0);
        self.slot += 1;
        self.task = 0;
        self.now = self.slot as f64 * self.cfg.slot_length;
        for (ledger, spec) in self.ledgers.iter_mut().zip(&self.topology.nodes) {
            ledger.release_due(spec, self.now);
        }
        if self.slot >= self.workload.slots.len() {
            self.active = false;
        }
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
        self.outcomes.push(outcome.clone());
        Ok(outcome)
    }

    pub fn outcomes(&self) -> &[SlotOutcome] {
        &self.outcomes
    }

    /// Aggregates over the slots settled so far in this episode.
    pub fn episode_metrics(&self) -> EpisodeMetrics {
        EpisodeMetrics::from_outcomes(&self.outcomes)
    }

    /// Resource conservation on every node.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (l, spec) in self.ledgers.iter().zip(&self.topology.nodes) {
            l.check(spec, &self.topology.images)?;
        }
        Ok(())
    }
}
