use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Range, WorkloadConfig};
use crate::error::{Error, Result};
use crate::model::{comm_latency, uplink_rate, ChannelParams, ImageId, ImageSpec, MicroserviceRequest};
use crate::rng::{SeedStreams, ARRIVALS, CHANNEL, TOPOLOGY};

/// Static capacities of one edge node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    /// GHz.
    pub total_cpu: f64,
    /// GB.
    pub total_memory: f64,
    /// Mb.
    pub total_storage: f64,
    /// W.
    pub comm_power: f64,
    /// W.
    pub comp_power: f64,
    /// Mbps.
    pub bandwidth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub images: Vec<ImageSpec>,
}

/// A request together with its frozen channel gain towards every node.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskArrival {
    pub request: MicroserviceRequest,
    pub gains: Vec<f64>,
}

/// All arrivals of one episode, slot by slot.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeWorkload {
    pub slots: Vec<Vec<TaskArrival>>,
}

impl EpisodeWorkload {
    pub fn task_count(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: &Range) -> f64 {
    if r.span() <= 0.0 {
        r.lo
    } else {
        rng.gen_range(r.lo..=r.hi)
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, r: &Range) -> f64 {
    if r.span() <= 0.0 {
        return r.lo;
    }
    (rng.gen_range(r.lo.ln()..=r.hi.ln())).exp()
}

impl Topology {
    pub fn sample(cfg: &WorkloadConfig, streams: &SeedStreams) -> Result<Self> {
        cfg.validate()?;
        let mut rng = streams.stream(TOPOLOGY);
        let nodes = (0..cfg.node_count)
            .map(|id| NodeSpec {
                id,
                total_cpu: uniform(&mut rng, &cfg.node_cpu),
                total_memory: uniform(&mut rng, &cfg.node_memory),
                total_storage: uniform(&mut rng, &cfg.node_storage),
                comm_power: uniform(&mut rng, &cfg.node_comm_power),
                comp_power: uniform(&mut rng, &cfg.node_comp_power),
                bandwidth: uniform(&mut rng, &cfg.node_bandwidth),
            })
            .collect();
        let images = (0..cfg.image_count)
            .map(|i| ImageSpec {
                id: ImageId(i),
                size: uniform(&mut rng, &cfg.image_size),
            })
            .collect();
        Ok(Topology { nodes, images })
    }

    pub fn validate(&self, cfg: &WorkloadConfig) -> Result<()> {
        if self.nodes.len() != cfg.node_count {
            return Err(Error::DimensionMismatch {
                what: "topology node count".into(),
                expected: cfg.node_count,
                found: self.nodes.len(),
            });
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let vals = [n.total_cpu, n.total_memory, n.total_storage, n.comm_power, n.comp_power, n.bandwidth];
            if n.id != i || vals.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config(format!("topology.node[{i}]"), "ids must be dense and capacities > 0"));
            }
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.id.0 != i || !(img.size > 0.0) {
                return Err(Error::config(format!("topology.image[{i}]"), "ids must be dense and sizes > 0"));
            }
        }
        Ok(())
    }
}

const MAX_RESAMPLES: usize = 1000;

/// Generates the arrivals of episode `episode`. Depends only on
/// `(config, topology, master seed, episode)`, never on policy behaviour.
pub fn generate_episode(
    cfg: &WorkloadConfig,
    topology: &Topology,
    streams: &SeedStreams,
    episode: u64,
) -> Result<EpisodeWorkload> {
    let mut arrivals = streams.indexed(ARRIVALS, episode);
    let mut channel = streams.indexed(CHANNEL, episode);
    let [kmin, kmax] = cfg.tasks_per_slot;
    let mut next_id = 0u64;
    let mut slots = Vec::with_capacity(cfg.slots_per_episode);
    for _ in 0..cfg.slots_per_episode {
        let k = arrivals.gen_range(kmin..=kmax);
        let mut slot = Vec::with_capacity(k);
        for _ in 0..k {
            let mut accepted = None;
            for _ in 0..MAX_RESAMPLES {
                let request = MicroserviceRequest {
                    id: next_id,
                    data_size: uniform(&mut arrivals, &cfg.task_data),
                    cpu_cycles: uniform(&mut arrivals, &cfg.task_cycles),
                    memory: uniform(&mut arrivals, &cfg.task_memory),
                    image_id: ImageId(arrivals.gen_range(0..cfg.image_count)),
                    deadline: uniform(&mut arrivals, &cfg.task_deadline),
                    tx_power: cfg.tx_power,
                };
                let gains: Vec<f64> = (0..cfg.node_count).map(|_| log_uniform(&mut channel, &cfg.channel_gain)).collect();
                if within_comm_bound(cfg, topology, &request, &gains) {
                    accepted = Some(TaskArrival { request, gains });
                    break;
                }
            }
            let arrival = accepted.ok_or_else(|| {
                Error::config("workload.comm_bound", "no task satisfying the transfer-time bound after resampling")
            })?;
            next_id += 1;
            slot.push(arrival);
        }
        slots.push(slot);
    }
    Ok(EpisodeWorkload { slots })
}

/// Single-upload transfer time stays within the bound on every node.
fn within_comm_bound(cfg: &WorkloadConfig, topology: &Topology, req: &MicroserviceRequest, gains: &[f64]) -> bool {
    topology.nodes.iter().zip(gains).all(|(node, &g)| {
        let ch = ChannelParams {
            node_bandwidth: node.bandwidth,
            device_tx_power: req.tx_power,
            channel_gain: g,
            noise_power: cfg.noise_power,
        };
        uplink_rate(&ch, 1)
            .and_then(|rate| comm_latency(req.data_size, rate))
            .map(|t| t <= cfg.comm_bound)
            .unwrap_or(false)
    })
}
