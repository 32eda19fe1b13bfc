//! Behavior cloning of an actor from expert demonstrations.
//!
//! Demonstrations are grouped by slot so the recurrent state can be rebuilt
//! from zero exactly as it is during deployment. A batch is a run of whole
//! slots holding at least `batch_size` records; the loss is the mean
//! negative log-likelihood of the expert's choices under the masked policy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{DemoDataset, DemoRecord};
use crate::ndiff::{bind, masked_softmax, AdamConfig, Tape, Tensor, Var};
use crate::policy::{greedy, Actor, ObsBatch, ObsDims};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BCConfig {
    pub epochs: usize,
    /// Records per optimizer step, rounded up to whole slots.
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fraction of demonstration episodes held out for evaluation.
    pub holdout_fraction: f64,
}

impl Default for BCConfig {
    fn default() -> Self {
        BCConfig {
            epochs: 20,
            batch_size: 64,
            lr: 1e-4,
            seed: 0,
            holdout_fraction: 0.1,
        }
    }
}

impl BCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("bc.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("bc.batch_size", "must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("bc.lr", "must be a finite non-negative number"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("bc.holdout_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BCEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_agreement: f64,
    pub holdout_agreement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BCReport {
    /// Training loss of the untouched actor.
    pub initial_loss: f64,
    pub epochs: Vec<BCEpoch>,
    pub train_records: usize,
    pub holdout_records: usize,
    pub steps: usize,
}

impl BCReport {
    pub fn final_epoch(&self) -> Option<&BCEpoch> {
        self.epochs.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Slots padded to a common length, stepped in lockstep.
struct SlotBatch {
    steps: Vec<ObsBatch>,
    actions: Vec<Vec<usize>>,
    weights: Vec<Tensor>,
    records: usize,
}

impl SlotBatch {
    fn new(slots: &[&[DemoRecord]]) -> Result<Self> {
        let len = slots.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut steps = Vec::with_capacity(len);
        let mut actions = Vec::with_capacity(len);
        let mut weights = Vec::with_capacity(len);
        let mut records = 0;
        for k in 0..len {
            let mut rows = Vec::with_capacity(slots.len());
            let mut masks = Vec::with_capacity(slots.len());
            let mut act = Vec::with_capacity(slots.len());
            let mut w = Vec::with_capacity(slots.len());
            for s in slots {
                // finished slots repeat their last record with zero weight
                let (r, live) = match s.get(k) {
                    Some(r) => (r, true),
                    None => (s.last().expect("slots are non-empty"), false),
                };
                rows.push(r);
                masks.push(r.effective_mask());
                act.push(r.action);
                w.push(if live { 1.0 } else { 0.0 });
                records += live as usize;
            }
            steps.push(ObsBatch::with_masks(rows.iter().zip(&masks).map(|(r, m)| (&r.obs, m.as_slice())))?);
            actions.push(act);
            weights.push(Tensor::from_vec(slots.len(), 1, w)?);
        }
        Ok(SlotBatch {
            steps,
            actions,
            weights,
            records,
        })
    }

    /// Summed NLL over live records, plus per-record logits.
    fn unroll<'t>(&'t self, actor: &Actor, tape: &mut Tape<'t>, p: &[Var]) -> (Var, Vec<Var>) {
        let rows = self.steps.first().map_or(0, ObsBatch::rows);
        let mut h = tape.constant(Tensor::zeros(rows, actor.hidden_dim()));
        let mut total: Option<Var> = None;
        let mut all_logits = Vec::with_capacity(self.steps.len());
        for ((batch, act), w) in self.steps.iter().zip(&self.actions).zip(&self.weights) {
            let (logits, h2) = actor.forward(tape, p, batch, h);
            h = h2;
            let lp = tape.masked_log_softmax(logits, batch.mask.clone());
            let picked = tape.gather(lp, act.clone());
            let wv = tape.constant_ref(w);
            let weighted = tape.mul(picked, wv);
            let s = tape.sum(weighted);
            total = Some(match total {
                Some(t) => tape.add(t, s),
                None => s,
            });
            all_logits.push(logits);
        }
        let total = total.expect("batch has at least one step");
        (tape.scale(total, -1.0), all_logits)
    }
}

fn batches<'d>(slots: &[&'d [DemoRecord]], size: usize) -> Vec<Vec<&'d [DemoRecord]>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut n = 0;
    for s in slots {
        cur.push(*s);
        n += s.len();
        if n >= size {
            out.push(std::mem::take(&mut cur));
            n = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Mean NLL and expert agreement of `actor` over `demos`.
///
/// Agreement counts records whose greedy action equals the expert's,
/// excluding fallback records, whose effective mask leaves no choice.
pub fn evaluate(actor: &Actor, demos: &DemoDataset) -> Result<(f64, f64)> {
    if demos.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let slots = demos.slots();
    let mut loss = 0.0;
    let mut hits = 0usize;
    let mut counted = 0usize;
    for group in batches(&slots, 512) {
        let batch = SlotBatch::new(&group)?;
        let mut tape = Tape::new();
        let p = bind(&mut tape, &actor.params);
        let (l, logits) = batch.unroll(actor, &mut tape, &p);
        loss += tape.value(l).scalar();
        for (k, lv) in logits.iter().enumerate() {
            let dist = masked_softmax(tape.value(*lv), &batch.steps[k].mask);
            for (r, slot) in group.iter().enumerate() {
                if let Some(rec) = slot.get(k) {
                    if !rec.fallback {
                        counted += 1;
                        hits += (greedy(dist.row_slice(r)) == rec.action) as usize;
                    }
                }
            }
        }
    }
    let agreement = if counted == 0 { f64::NAN } else { hits as f64 / counted as f64 };
    Ok((loss / demos.len() as f64, agreement))
}

/// Fraction of non-fallback records where `predict` (given a whole slot)
/// picks the expert's node.
pub fn agreement_with(demos: &DemoDataset, mut predict: impl FnMut(&[DemoRecord]) -> Vec<usize>) -> f64 {
    let mut hits = 0usize;
    let mut counted = 0usize;
    for slot in demos.slots() {
        for (r, a) in slot.iter().zip(predict(slot)) {
            if !r.fallback {
                counted += 1;
                hits += (r.action == a) as usize;
            }
        }
    }
    hits as f64 / counted.max(1) as f64
}

pub fn agreement(actor: &Actor, demos: &DemoDataset) -> Result<f64> {
    Ok(evaluate(actor, demos)?.1)
}

/// Splits `demos` by episode according to `fraction`, keeping at least one
/// training episode.
pub fn holdout_split(demos: &DemoDataset, fraction: f64) -> (DemoDataset, DemoDataset) {
    let eps = demos.episodes().len();
    let mut held = (fraction * eps as f64).round() as usize;
    if fraction > 0.0 && held == 0 && eps > 1 {
        held = 1;
    }
    demos.split_episodes(held.min(eps.saturating_sub(1)))
}

pub fn bc_train(actor: &mut Actor, demos: &DemoDataset, cfg: &BCConfig) -> Result<BCReport> {
    cfg.validate()?;
    let first = demos
        .records
        .first()
        .ok_or_else(|| Error::config("bc.demos", "demonstration set is empty"))?;
    let found = ObsDims::of(&first.obs);
    if found != actor.obs_dims() {
        let want = actor.obs_dims();
        return Err(Error::config(
            "bc.demos",
            format!(
                "demonstrations have N={} and widths {}+{}, actor expects N={} and {}+{}",
                found.nodes, found.node_state, found.ms_state, want.nodes, want.node_state, want.ms_state
            ),
        ));
    }
    let (train, holdout) = holdout_split(demos, cfg.holdout_fraction);
    let mut slots = train.slots();
    if cfg.batch_size > train.len() {
        return Err(Error::config(
            "bc.batch_size",
            format!("{} exceeds the {} training records", cfg.batch_size, train.len()),
        ));
    }
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial_loss = evaluate(actor, &train)?.0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 1..=cfg.epochs {
        slots.shuffle(&mut rng);
        for group in batches(&slots, cfg.batch_size) {
            let batch = SlotBatch::new(&group)?;
            let grads = {
                let mut tape = Tape::new();
                let p = bind(&mut tape, &actor.params);
                let (sum, _) = batch.unroll(actor, &mut tape, &p);
                let loss = tape.scale(sum, 1.0 / batch.records as f64);
                let mut g = tape.backward(loss);
                p.iter().zip(actor.params.tensors()).map(|(&v, t)| g.take(v, t)).collect::<Vec<_>>()
            };
            actor.params.adam_step(&grads, &adam)?;
            steps += 1;
        }
        let (train_loss, train_agreement) = evaluate(actor, &train)?;
        let holdout_agreement = if holdout.is_empty() { f64::NAN } else { agreement(actor, &holdout)? };
        epochs.push(BCEpoch {
            epoch,
            train_loss,
            train_agreement,
            holdout_agreement,
        });
    }
    actor.reset_hidden();
    Ok(BCReport {
        initial_loss,
        epochs,
        train_records: train.len(),
        holdout_records: holdout.len(),
        steps,
    })
}
