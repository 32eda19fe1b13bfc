//! Per-task action feasibility.
//!
//! A node is selectable when it has idle CPU, keeps strictly positive
//! memory after hosting the task, and either already holds (or is pulling)
//! the task's image or has room to store it.

use crate::env::ledger::NodeLedger;
use crate::error::{Error, Result};
use crate::model::{ImageSpec, MicroserviceRequest};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    pub bits: Vec<bool>,
    pub cpu_ok: Vec<bool>,
    pub memory_ok: Vec<bool>,
    pub image_ok: Vec<bool>,
}

impl ActionMask {
    pub fn all_ones(n: usize) -> Self {
        ActionMask {
            bits: vec![true; n],
            cpu_ok: vec![true; n],
            memory_ok: vec![true; n],
            image_ok: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn feasible_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn build_mask(ledgers: &[NodeLedger], task: &MicroserviceRequest, image: &ImageSpec) -> ActionMask {
    let n = ledgers.len();
    let mut mask = ActionMask {
        bits: Vec::with_capacity(n),
        cpu_ok: Vec::with_capacity(n),
        memory_ok: Vec::with_capacity(n),
        image_ok: Vec::with_capacity(n),
    };
    for l in ledgers {
        let cpu = l.free_cpu > 0.0;
        let mem = l.free_memory - task.memory > 0.0;
        let img = l.free_storage - image.size >= 0.0 || l.has_image(task.image_id);
        mask.cpu_ok.push(cpu);
        mask.memory_ok.push(mem);
        mask.image_ok.push(img);
        mask.bits.push(cpu && mem && img);
    }
    mask
}

/// Mask used for learning: the real mask, or a one-hot at the fallback
/// node when nothing is feasible.
pub fn effective_mask(bits: &[bool], fallback: usize) -> Vec<bool> {
    if bits.iter().any(|&b| b) {
        bits.to_vec()
    } else {
        (0..bits.len()).map(|i| i == fallback).collect()
    }
}

/// Zeroes infeasible entries of `probs` and renormalizes.
pub fn mask_distribution(probs: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if probs.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            what: "mask length".into(),
            expected: probs.len(),
            found: mask.len(),
        });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 || probs.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!("probabilities must form a simplex (sum {total})")));
    }
    let kept: f64 = probs.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    if !(kept > 0.0) {
        return Err(Error::NoFeasibleAction);
    }
    Ok(probs.iter().zip(mask).map(|(&p, &m)| if m { p / kept } else { 0.0 }).collect())
}
