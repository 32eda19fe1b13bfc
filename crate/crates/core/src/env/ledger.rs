use std::collections::BTreeMap;

use super::workload::NodeSpec;
use crate::model::{ImageFetch, ImageId, ImageSpec};

/// Resources held by one running task until `release_time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Allocation {
    pub release_time: f64,
    pub cpu_share: f64,
    pub memory: f64,
}

/// Live resource bookkeeping for one node.
///
/// `free_cpu` only moves at slot settlement and releases; memory and
/// storage are committed immediately on assignment. Images never leave a
/// node once their pull has been queued.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeLedger {
    pub free_cpu: f64,
    pub free_memory: f64,
    pub free_storage: f64,
    /// Image -> absolute time its pull completes (or completed).
    pub images: BTreeMap<ImageId, f64>,
    pub download_queue_end: f64,
    pub active: Vec<Allocation>,
    /// Memory committed by this slot's assignments, not yet settled.
    pub pending_memory: f64,
}

impl NodeLedger {
    pub fn new(spec: &NodeSpec) -> Self {
        NodeLedger {
            free_cpu: spec.total_cpu,
            free_memory: spec.total_memory,
            free_storage: spec.total_storage,
            images: BTreeMap::new(),
            download_queue_end: 0.0,
            active: Vec::new(),
            pending_memory: 0.0,
        }
    }

    /// Present or already being pulled.
    pub fn has_image(&self, id: ImageId) -> bool {
        self.images.contains_key(&id)
    }

    pub fn is_cached_at(&self, id: ImageId, now: f64) -> bool {
        self.images.get(&id).is_some_and(|&ready| ready <= now)
    }

    /// How a task needing `image` would obtain it if assigned at `now`.
    pub fn fetch_plan(&self, image: &ImageSpec, now: f64) -> ImageFetch {
        match self.images.get(&image.id) {
            Some(&ready) if ready <= now => ImageFetch::Cached,
            Some(&ready) => ImageFetch::Shared { remaining: ready - now },
            None => ImageFetch::Pull {
                image: *image,
                queue_delay: (self.download_queue_end - now).max(0.0),
            },
        }
    }

    pub(crate) fn enqueue_pull(&mut self, image: &ImageSpec, bandwidth: f64, now: f64) -> f64 {
        let start = self.download_queue_end.max(now);
        let ready = start + image.size / bandwidth;
        self.download_queue_end = ready;
        self.images.insert(image.id, ready);
        self.free_storage -= image.size;
        ready
    }

    pub(crate) fn recompute_free_cpu(&mut self, spec: &NodeSpec) {
        let held: f64 = self.active.iter().map(|a| a.cpu_share).sum();
        self.free_cpu = (spec.total_cpu - held).max(0.0);
    }

    fn recompute_free_memory(&mut self, spec: &NodeSpec) {
        let held: f64 = self.active.iter().map(|a| a.memory).sum();
        self.free_memory = (spec.total_memory - held - self.pending_memory).max(0.0);
    }

    /// Drops allocations due by `now`; returns how many were released.
    pub(crate) fn release_due(&mut self, spec: &NodeSpec, now: f64) -> usize {
        let before = self.active.len();
        self.active.retain(|a| a.release_time > now);
        let released = before - self.active.len();
        if released > 0 {
            self.recompute_free_cpu(spec);
            self.recompute_free_memory(spec);
        }
        released
    }

    pub(crate) fn settle_pending(&mut self, spec: &NodeSpec, allocations: impl IntoIterator<Item = Allocation>) {
        self.active.extend(allocations);
        self.pending_memory = 0.0;
        self.recompute_free_cpu(spec);
        self.recompute_free_memory(spec);
    }

    /// Checks conservation against the static spec; returns a description of
    /// the first violated invariant.
    pub fn check(&self, spec: &NodeSpec, images: &[ImageSpec]) -> Result<(), String> {
        const TOL: f64 = 1e-9;
        let scale = |x: f64| TOL * x.abs().max(1.0);
        let cpu_held: f64 = self.active.iter().map(|a| a.cpu_share).sum();
        if (spec.total_cpu - self.free_cpu - cpu_held).abs() > scale(spec.total_cpu) {
            return Err(format!("node {}: cpu {} free + {} held != {}", spec.id, self.free_cpu, cpu_held, spec.total_cpu));
        }
        if cpu_held > spec.total_cpu + scale(spec.total_cpu) {
            return Err(format!("node {}: cpu over-committed ({cpu_held} > {})", spec.id, spec.total_cpu));
        }
        let mem_held: f64 = self.active.iter().map(|a| a.memory).sum::<f64>() + self.pending_memory;
        if (spec.total_memory - self.free_memory - mem_held).abs() > scale(spec.total_memory) {
            return Err(format!("node {}: memory {} free + {} held != {}", spec.id, self.free_memory, mem_held, spec.total_memory));
        }
        let stored: f64 = self.images.keys().map(|id| images[id.0].size).sum();
        if (spec.total_storage - self.free_storage - stored).abs() > scale(spec.total_storage) {
            return Err(format!("node {}: storage {} free + {} stored != {}", spec.id, self.free_storage, stored, spec.total_storage));
        }
        let bounds = [
            ("cpu", self.free_cpu, spec.total_cpu),
            ("memory", self.free_memory, spec.total_memory),
            ("storage", self.free_storage, spec.total_storage),
        ];
        for (what, free, total) in bounds {
            if free < -scale(total) || free > total + scale(total) {
                return Err(format!("node {}: free {what} {free} outside [0, {total}]", spec.id));
            }
        }
        Ok(())
    }
}
