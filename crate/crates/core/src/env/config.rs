use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`, written as a two-element array in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Min-max position of `x` within the range, clamped to `[0, 1]`.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.span() <= 0.0 {
            return 0.0;
        }
        ((x - self.lo) / self.span()).clamp(0.0, 1.0)
    }

    fn validate(&self, field: &str, positive: bool) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::config(field, format!("empty or non-finite range [{}, {}]", self.lo, self.hi)));
        }
        if positive && !(self.lo > 0.0) {
            return Err(Error::config(field, format!("lower bound {} must be > 0", self.lo)));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Range {
    fn from(v: [f64; 2]) -> Self {
        Range { lo: v[0], hi: v[1] }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// Workload and topology generation parameters, in canonical units
/// (Mb, Mbps, GHz, gigacycles, GB, W, s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub node_count: usize,
    /// Inclusive `[min, max]` arrivals per slot.
    pub tasks_per_slot: [usize; 2],
    pub slots_per_episode: usize,
    /// Clock step between slots, seconds.
    pub slot_length: f64,
    /// Upper bound on single-upload transfer time, seconds. Generated tasks
    /// violating it on any node are resampled.
    pub comm_bound: f64,
    pub image_count: usize,

    pub node_cpu: Range,
    pub node_memory: Range,
    pub node_storage: Range,
    pub node_bandwidth: Range,
    pub node_comm_power: Range,
    pub node_comp_power: Range,

    pub image_size: Range,
    pub task_data: Range,
    pub task_cycles: Range,
    pub task_memory: Range,
    pub task_deadline: Range,
    pub tx_power: f64,
    /// Sampled log-uniformly per (task, node).
    pub channel_gain: Range,
    pub noise_power: f64,

    /// Append per-node presence bits of the task's image to the task state.
    pub image_presence_bits: bool,
}

impl Default for WorkloadConfig {
    /// Desk-scale defaults: 5 nodes, 3-8 tasks per slot, 40 slots.
    fn default() -> Self {
        WorkloadConfig {
            node_count: 5,
            tasks_per_slot: [3, 8],
            slots_per_episode: 40,
            slot_length: 1.0,
            comm_bound: 1.0,
            image_count: 10,
            node_cpu: Range::new(3.0, 6.5),
            node_memory: Range::new(80.0, 180.0),
            node_storage: Range::new(200.0, 600.0),
            // 2-6 Gbps
            node_bandwidth: Range::new(2000.0, 6000.0),
            node_comm_power: Range::new(1.0, 3.0),
            node_comp_power: Range::new(2.0, 6.0),
            // up to 10 MB
            image_size: Range::new(8.0, 80.0),
            // up to 100 MB
            task_data: Range::new(8.0, 800.0),
            task_cycles: Range::new(0.5, 2.5),
            task_memory: Range::new(1.0, 16.0),
            task_deadline: Range::new(0.5, 2.5),
            tx_power: 0.0001995,
            channel_gain: Range::new(1e3, 1e5),
            noise_power: 1e-3,
            image_presence_bits: true,
        }
    }
}

impl WorkloadConfig {
    /// Full-size setting: 15 nodes, 5-20 tasks per slot, 160 slots
    /// (about 2,000 decisions per episode).
    pub fn full_scale() -> Self {
        WorkloadConfig {
            node_count: 15,
            tasks_per_slot: [5, 20],
            slots_per_episode: 160,
            ..Self::default()
        }
    }

    pub fn node_state_dim(&self) -> usize {
        6 * self.node_count
    }

    pub fn ms_state_dim(&self) -> usize {
        5 + if self.image_presence_bits { self.node_count } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count == 0 {
            return Err(Error::config("workload.node_count", "must be >= 1"));
        }
        let [kmin, kmax] = self.tasks_per_slot;
        if kmin < 1 || kmin > kmax {
            return Err(Error::config("workload.tasks_per_slot", format!("need 1 <= min <= max, got [{kmin}, {kmax}]")));
        }
        if self.slots_per_episode == 0 {
            return Err(Error::config("workload.slots_per_episode", "must be >= 1"));
        }
        if !(self.slot_length > 0.0) {
            return Err(Error::config("workload.slot_length", "must be > 0"));
        }
        if !(self.comm_bound > 0.0) {
            return Err(Error::config("workload.comm_bound", "must be > 0"));
        }
        if self.image_count == 0 {
            return Err(Error::config("workload.image_count", "must be >= 1"));
        }
        let positive = [
            ("workload.node_cpu", &self.node_cpu),
            ("workload.node_memory", &self.node_memory),
            ("workload.node_storage", &self.node_storage),
            ("workload.node_bandwidth", &self.node_bandwidth),
            ("workload.node_comm_power", &self.node_comm_power),
            ("workload.node_comp_power", &self.node_comp_power),
            ("workload.image_size", &self.image_size),
            ("workload.task_data", &self.task_data),
            ("workload.task_cycles", &self.task_cycles),
            ("workload.task_memory", &self.task_memory),
            ("workload.task_deadline", &self.task_deadline),
            ("workload.channel_gain", &self.channel_gain),
        ];
        for (field, r) in positive {
            r.validate(field, true)?;
        }
        if !(self.tx_power > 0.0) {
            return Err(Error::config("workload.tx_power", "must be > 0"));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::config("workload.noise_power", "must be > 0"));
        }
        Ok(())
    }
}
