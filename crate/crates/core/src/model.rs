//! Closed-form latency, energy and reward calculators.
//!
//! Canonical units throughout: megabits for payloads and images, Mbps for
//! bandwidth and rates, gigacycles / GHz for compute, gigabytes for memory,
//! watts, seconds and joules. Every function here is pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into the container image catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageId(pub usize);

/// Wireless uplink parameters for one device/node pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    /// Node bandwidth `B_n`, Mbps.
    pub node_bandwidth: f64,
    /// Device transmit power `p_k`, watts.
    pub device_tx_power: f64,
    /// Channel gain `h_{n,k}`.
    pub channel_gain: f64,
    /// Gaussian noise power, watts.
    pub noise_power: f64,
}

impl ChannelParams {
    pub fn snr(&self) -> f64 {
        self.device_tx_power * self.channel_gain / self.noise_power
    }
}

/// One offloadable microservice request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroserviceRequest {
    pub id: u64,
    /// Megabits.
    pub data_size: f64,
    /// Gigacycles.
    pub cpu_cycles: f64,
    /// Gigabytes.
    pub memory: f64,
    pub image_id: ImageId,
    /// Seconds.
    pub deadline: f64,
    /// Watts.
    pub tx_power: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub id: ImageId,
    /// Megabits.
    pub size: f64,
}

/// Latency (seconds) and energy (joules) of one task on its chosen node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub t_comm: f64,
    pub t_down: f64,
    pub t_comp: f64,
    pub t_total: f64,
    pub e_comm: f64,
    pub e_comp: f64,
    pub e_total: f64,
}

impl CostBreakdown {
    pub fn from_components(t_comm: f64, t_down: f64, t_comp: f64, e_comm: f64, e_comp: f64) -> Self {
        CostBreakdown {
            t_comm,
            t_down,
            t_comp,
            t_total: t_comm + t_down + t_comp,
            e_comm,
            e_comp,
            e_total: e_comm + e_comp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Latency weight.
    pub alpha: f64,
    /// Reward assigned to a task that misses its deadline. Must be negative.
    pub deadline_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 1.0,
            deadline_penalty: -10.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config("reward.alpha", "must be > 0"));
        }
        if !(self.deadline_penalty < 0.0) {
            return Err(Error::config("reward.deadline_penalty", "must be < 0"));
        }
        Ok(())
    }
}

/// Shannon uplink rate shared equally by `concurrent_uploads` devices.
///
/// Returns 0 when the SNR is 0; callers must then treat the node as
/// infeasible because [`comm_latency`] rejects a zero rate.
pub fn uplink_rate(ch: &ChannelParams, concurrent_uploads: usize) -> Result<f64> {
    if concurrent_uploads == 0 {
        return Err(Error::InvalidCount("concurrent uploads must be >= 1"));
    }
    let snr = ch.snr();
    if snr <= 0.0 {
        return Ok(0.0);
    }
    Ok(ch.node_bandwidth / concurrent_uploads as f64 * (1.0 + snr).log2())
}

pub fn comm_latency(data_size: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InfeasibleChannel { rate });
    }
    Ok(data_size / rate)
}

/// Image pull delay: zero when the image is already present, otherwise
/// transfer time at the node bandwidth plus the time spent queued behind
/// earlier pulls.
pub fn download_latency(needs_download: bool, image: &ImageSpec, bandwidth: f64, queue_delay: f64) -> Result<f64> {
    if !needs_download {
        return Ok(0.0);
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {bandwidth} must be positive")));
    }
    if !(queue_delay >= 0.0) {
        return Err(Error::InvalidArgument(format!("queue delay {queue_delay} must be non-negative")));
    }
    Ok(image.size / bandwidth + queue_delay)
}

/// Compute time when the free CPU is split evenly among `assigned_count` tasks.
pub fn comp_latency(cycles: f64, assigned_count: usize, free_cpu: f64) -> Result<f64> {
    if assigned_count == 0 {
        return Err(Error::InfeasibleNode("no tasks assigned to the node"));
    }
    if !(free_cpu > 0.0) {
        return Err(Error::InfeasibleNode("node has no free CPU"));
    }
    if cycles == 0.0 {
        return Ok(0.0);
    }
    Ok(cycles * assigned_count as f64 / free_cpu)
}

pub fn comm_energy(node_comm_power: f64, t_comm: f64, assigned_count: usize) -> Result<f64> {
    if assigned_count == 0 {
        return Err(Error::InvalidCount("assigned count must be >= 1"));
    }
    Ok(node_comm_power * t_comm / assigned_count as f64)
}

pub fn comp_energy(
    node_comp_power: f64,
    t_comp: f64,
    free_cpu: f64,
    assigned_count: usize,
    total_cpu: f64,
) -> Result<f64> {
    if assigned_count == 0 {
        return Err(Error::InvalidCount("assigned count must be >= 1"));
    }
    if !(total_cpu > 0.0) {
        return Err(Error::InfeasibleNode("total CPU must be positive"));
    }
    Ok(node_comp_power * t_comp * free_cpu / (assigned_count as f64 * total_cpu))
}

/// How the task's container image reaches the node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImageFetch {
    /// Already on the node at slot start.
    Cached,
    /// Joins an in-flight pull of the same image; waits `remaining` seconds.
    Shared { remaining: f64 },
    /// New pull behind `queue_delay` seconds of earlier pulls.
    Pull { image: ImageSpec, queue_delay: f64 },
}

/// Everything needed to cost one task on one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostInputs {
    pub data_size: f64,
    pub cycles: f64,
    pub channel: ChannelParams,
    pub fetch: ImageFetch,
    /// Tasks sharing the node this slot, including this one.
    pub assigned_count: usize,
    pub free_cpu: f64,
    pub total_cpu: f64,
    pub comm_power: f64,
    pub comp_power: f64,
}

pub fn total_cost(inp: &CostInputs) -> Result<CostBreakdown> {
    let rate = uplink_rate(&inp.channel, inp.assigned_count)?;
    let t_comm = comm_latency(inp.data_size, rate)?;
    let t_down = match inp.fetch {
        ImageFetch::Cached => 0.0,
        ImageFetch::Shared { remaining } => remaining.max(0.0),
        ImageFetch::Pull { image, queue_delay } => {
            download_latency(true, &image, inp.channel.node_bandwidth, queue_delay)?
        }
    };
    let t_comp = comp_latency(inp.cycles, inp.assigned_count, inp.free_cpu)?;
    let e_comm = comm_energy(inp.comm_power, t_comm, inp.assigned_count)?;
    let e_comp = comp_energy(inp.comp_power, t_comp, inp.free_cpu, inp.assigned_count, inp.total_cpu)?;
    Ok(CostBreakdown::from_components(t_comm, t_down, t_comp, e_comm, e_comp))
}

/// Per-task reward: the penalty on a missed deadline, otherwise the
/// weighted slack minus energy.
pub fn reward(cost: &CostBreakdown, deadline: f64, cfg: &RewardConfig) -> Result<f64> {
    if !(deadline > 0.0) {
        return Err(Error::InvalidArgument(format!("deadline {deadline} must be positive")));
    }
    if cost.t_total > deadline {
        return Ok(cfg.deadline_penalty);
    }
    Ok(cfg.alpha * (deadline - cost.t_total) - cost.e_total)
}
