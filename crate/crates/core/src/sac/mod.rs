//! Masked discrete soft actor-critic.
//!
//! Expectations over actions are taken in closed form over the masked
//! distribution. Rewards only become known once a slot settles, so each
//! slot's transitions are written to the buffer after settlement.

mod replay;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use replay::{ReplayBuffer, Transition};

use crate::env::{EdgeEnv, EpisodeMetrics, SlotObservation};
use crate::error::{Error, Result};
use crate::mask::effective_mask;
use crate::ndiff::{bind, masked_log_softmax, masked_softmax, AdamConfig, Checkpoint, ParamSet, Tape, Tensor, Var};
use crate::policy::{greedy, sample, Actor, CriticPair, ObsBatch, ObsDims};
use crate::rng::{SeedStreams, BUFFER, SAMPLING};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SACConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_temp: f64,
    pub init_log_beta: f64,
    pub target_entropy: f64,
    pub batch_size: usize,
    /// Updates start once the buffer holds `max(batch_size, min_buffer)`.
    pub min_buffer: usize,
    pub buffer_capacity: usize,
    /// Update rounds after each episode; `None` means one per slot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub updates_per_episode: Option<usize>,
    /// Set by the experiment config's top-level `episodes`.
    #[serde(skip)]
    pub episodes: usize,
    /// When false, the temperature stays at `exp(init_log_beta)`.
    pub learn_temperature: bool,
}

impl Default for SACConfig {
    fn default() -> Self {
        SACConfig {
            gamma: 0.98,
            tau: 0.005,
            lr_actor: 1e-5,
            lr_critic: 3e-4,
            lr_temp: 1e-4,
            init_log_beta: 0.01f64.ln(),
            target_entropy: -1.0,
            batch_size: 3000,
            min_buffer: 1500,
            buffer_capacity: 22_000,
            updates_per_episode: None,
            episodes: 200,
            learn_temperature: true,
        }
    }
}

impl SACConfig {
    /// Smaller batches and fewer update rounds so a 200-episode run at desk
    /// scale finishes in about a minute on one core.
    pub fn desk() -> Self {
        SACConfig {
            batch_size: 256,
            min_buffer: 1500,
            updates_per_episode: Some(20),
            ..SACConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("sac.gamma", "must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("sac.tau", "must lie in (0, 1]"));
        }
        for (name, lr) in [("sac.lr_actor", self.lr_actor), ("sac.lr_critic", self.lr_critic), ("sac.lr_temp", self.lr_temp)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config(name, "must be a finite non-negative number"));
            }
        }
        if !self.init_log_beta.is_finite() {
            return Err(Error::config("sac.init_log_beta", "must be finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("sac.batch_size", "must be positive"));
        }
        if self.buffer_capacity < self.batch_size.max(self.min_buffer) {
            return Err(Error::config("sac.buffer_capacity", "must hold at least max(batch_size, min_buffer)"));
        }
        if self.episodes == 0 {
            return Err(Error::config("sac.episodes", "must be at least 1"));
        }
        Ok(())
    }

    pub fn update_threshold(&self) -> usize {
        self.batch_size.max(self.min_buffer)
    }
}

/// `sum_a p[a] * (min_q[a] - beta * log_p[a])`, treating `0 * log 0` as 0.
pub fn soft_value(dist: &[f64], log_dist: &[f64], min_q: &[f64], beta: f64) -> f64 {
    dist.iter()
        .zip(log_dist)
        .zip(min_q)
        .filter(|((&p, _), _)| p > 0.0)
        .map(|((&p, &lp), &q)| p * (q - beta * lp))
        .sum()
}

/// Entropy of a distribution with `0 * log 0 = 0`.
pub fn entropy(dist: &[f64], log_dist: &[f64]) -> f64 {
    -dist.iter().zip(log_dist).filter(|(&p, _)| p > 0.0).map(|(p, lp)| p * lp).sum::<f64>()
}

/// A sampled minibatch laid out for batched forward passes.
pub struct Minibatch {
    pub obs: ObsBatch,
    pub hidden: Tensor,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next: ObsBatch,
    pub next_hidden: Tensor,
    pub done: Vec<bool>,
}

impl Minibatch {
    pub fn new(items: &[&Transition]) -> Result<Self> {
        let obs = ObsBatch::with_masks(items.iter().map(|t| (&t.obs, t.mask.as_slice())))?;
        let next = ObsBatch::with_masks(items.iter().map(|t| (&t.next_obs, t.next_mask.as_slice())))?;
        let hidden = Tensor::stack(&items.iter().map(|t| t.hidden.as_slice()).collect::<Vec<_>>())?;
        let next_hidden = Tensor::stack(&items.iter().map(|t| t.next_hidden.as_slice()).collect::<Vec<_>>())?;
        Ok(Minibatch {
            obs,
            hidden,
            actions: items.iter().map(|t| t.action).collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
            next,
            next_hidden,
            done: items.iter().map(|t| t.done).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Masked distribution and log-distribution of `actor` on a batch.
pub fn policy_batch(actor: &Actor, obs: &ObsBatch, hidden: &Tensor) -> (Tensor, Tensor) {
    let mut tape = Tape::new();
    let p: Vec<Var> = actor.params.tensors().iter().map(|t| tape.constant_ref(t)).collect();
    let h = tape.constant_ref(hidden);
    let (logits, _) = actor.forward(&mut tape, &p, obs, h);
    let lv = tape.value(logits);
    (masked_softmax(lv, &obs.mask), masked_log_softmax(lv, &obs.mask))
}

/// Bootstrapped targets `r + gamma * (1 - done) * V(s')`.
pub fn critic_targets(actor: &Actor, critics: &CriticPair, batch: &Minibatch, beta: f64, gamma: f64) -> Vec<f64> {
    let (pn, lpn) = policy_batch(actor, &batch.next, &batch.next_hidden);
    let qn = critics.target_min(&batch.next.flat());
    (0..batch.len())
        .map(|i| {
            let v = soft_value(pn.row_slice(i), lpn.row_slice(i), qn.row_slice(i), beta);
            batch.rewards[i] + if batch.done[i] { 0.0 } else { gamma * v }
        })
        .collect()
}

/// One Adam step of both critics on `0.5 * (Q(s)[a] - y)^2`; returns the
/// two losses before the step.
pub fn critic_update(critics: &mut CriticPair, batch: &Minibatch, targets: &[f64], lr: f64) -> Result<[f64; 2]> {
    let flat = batch.obs.flat();
    let y = Tensor::from_vec(batch.len(), 1, targets.to_vec())?;
    let adam = AdamConfig::with_lr(lr);
    let mut losses = [0.0; 2];
    for (j, loss_out) in losses.iter_mut().enumerate() {
        let critic = &critics.online[j];
        let (loss, grads) = {
            let mut tape = Tape::new();
            let p = bind(&mut tape, &critic.params);
            let x = tape.constant_ref(&flat);
            let q = critic.q(&mut tape, &p, x);
            let qa = tape.gather(q, batch.actions.clone());
            let yv = tape.constant_ref(&y);
            let d = tape.sub(qa, yv);
            let sq = tape.square(d);
            let m = tape.mean(sq);
            let loss = tape.scale(m, 0.5);
            let mut g = tape.backward(loss);
            let grads: Vec<Tensor> = p.iter().zip(critic.params.tensors()).map(|(&v, t)| g.take(v, t)).collect();
            (tape.value(loss).scalar(), grads)
        };
        critics.online[j].params.adam_step(&grads, &adam)?;
        *loss_out = loss;
    }
    Ok(losses)
}

/// Actor objective `mean_s sum_a pi(a|s) (beta log pi(a|s) - min_j Q_j(s)[a])`
/// recorded on `tape`, with the critics' values supplied as constants.
/// `h` and `min_q` are expected to be constants on the tape.
pub fn actor_loss(tape: &mut Tape<'_>, actor: &Actor, p: &[Var], obs: &ObsBatch, h: Var, q: Var, beta: f64) -> (Var, Var, Var) {
    let (logits, _) = actor.forward(tape, p, obs, h);
    let lp = tape.masked_log_softmax(logits, obs.mask.clone());
    let pr = tape.masked_softmax(logits, obs.mask.clone());
    let blp = tape.scale(lp, beta);
    let inner = tape.sub(blp, q);
    let terms = tape.mul(pr, inner);
    let per_row = tape.sum_cols(terms);
    (tape.mean(per_row), pr, lp)
}

/// One Adam step of the actor against frozen critics. Returns the loss and
/// the per-sample entropies of the pre-step policy.
pub fn actor_update(actor: &mut Actor, critics: &CriticPair, batch: &Minibatch, beta: f64, lr: f64) -> Result<(f64, Vec<f64>)> {
    let min_q = critics.online_min(&batch.obs.flat());
    let (loss, grads, ent) = {
        let mut tape = Tape::new();
        let p = bind(&mut tape, &actor.params);
        let h = tape.constant_ref(&batch.hidden);
        let q = tape.constant_ref(&min_q);
        let (loss, pr, lp) = actor_loss(&mut tape, actor, &p, &batch.obs, h, q, beta);
        let (pv, lv) = (tape.value(pr), tape.value(lp));
        let ent: Vec<f64> = (0..batch.len()).map(|i| entropy(pv.row_slice(i), lv.row_slice(i))).collect();
        let mut g = tape.backward(loss);
        let grads: Vec<Tensor> = p.iter().zip(actor.params.tensors()).map(|(&v, t)| g.take(v, t)).collect();
        (tape.value(loss).scalar(), grads, ent)
    };
    actor.params.adam_step(&grads, &AdamConfig::with_lr(lr))?;
    Ok((loss, ent))
}

/// Gradient of `mean(-beta * (log pi + H_target))` with respect to
/// `log beta`, the expectation over actions taken in closed form:
/// `beta * (mean H - H_target)`.
pub fn temperature_grad(log_beta: f64, entropies: &[f64], target_entropy: f64) -> f64 {
    let mean_h = entropies.iter().sum::<f64>() / entropies.len().max(1) as f64;
    log_beta.exp() * (mean_h - target_entropy)
}

pub fn temperature_update(log_beta: &mut ParamSet, entropies: &[f64], target_entropy: f64, lr: f64) -> Result<()> {
    let g = temperature_grad(log_beta.get(0).scalar(), entropies, target_entropy);
    log_beta.adam_step(&[Tensor::row(&[g])], &AdamConfig::with_lr(lr))
}

/// Losses from one update round.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
}

/// Per-episode training record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    pub total_time: f64,
    pub total_energy: f64,
    pub image_download_time: f64,
    pub on_time_ratio: f64,
    pub beta: f64,
    pub buffer_size: usize,
    pub total_reward: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub updates: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub episodes: Vec<EpisodeLog>,
}

impl RunReport {
    /// Mean of `mean_reward` over the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        tail.iter().map(|e| e.mean_reward).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.mean_reward).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.episodes {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How actions are picked from the masked distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// One decision taken by an actor in an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub obs: SlotObservation,
    pub mask: Vec<bool>,
    pub hidden: Vec<f64>,
    pub action: usize,
}

/// Lets `actor` place the env's current task, falling back to the
/// max-free-CPU node when nothing is feasible.
pub fn act(env: &mut EdgeEnv, actor: &mut Actor, mode: ActMode, rng: &mut impl Rng) -> Result<Decision> {
    let obs = env.observe()?;
    let hidden = actor.hidden().to_vec();
    let (action, mask) = match actor.step(&obs) {
        Ok(dist) => {
            let a = match mode {
                ActMode::Sample => sample(&dist, rng),
                ActMode::Greedy => greedy(&dist),
            };
            env.assign(a)?;
            (a, obs.mask.clone())
        }
        Err(Error::NoFeasibleAction) => {
            let a = env.assign_fallback()?.node;
            (a, effective_mask(&obs.mask, a))
        }
        Err(e) => return Err(e),
    };
    Ok(Decision {
        obs,
        mask,
        hidden,
        action,
    })
}

/// Runs one episode with a frozen actor.
pub fn run_actor_episode(env: &mut EdgeEnv, actor: &mut Actor, episode: u64, mode: ActMode, rng: &mut impl Rng) -> Result<EpisodeMetrics> {
    env.reset(episode)?;
    while !env.is_done() {
        actor.reset_hidden();
        while !env.slot_complete() {
            act(env, actor, mode, rng)?;
        }
        env.settle_slot()?;
    }
    actor.reset_hidden();
    Ok(env.episode_metrics())
}

/// Actor, critics, temperature and replay memory of one training run.
#[derive(Clone, Debug)]
pub struct SacAgent {
    pub actor: Actor,
    pub critics: CriticPair,
    pub log_beta: ParamSet,
    pub buffer: ReplayBuffer,
    pub cfg: SACConfig,
    sampling: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(actor: Actor, critics: CriticPair, cfg: SACConfig, streams: &SeedStreams) -> Result<Self> {
        cfg.validate()?;
        if actor.obs_dims() != critics.obs {
            return Err(Error::config("sac.critics", "actor and critics were built for different observations"));
        }
        let mut log_beta = ParamSet::new();
        log_beta.add("log_beta", Tensor::row(&[cfg.init_log_beta]));
        Ok(SacAgent {
            actor,
            critics,
            log_beta,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            sampling: streams.stream(SAMPLING),
            replay_rng: streams.stream(BUFFER),
        })
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.get(0).scalar().exp()
    }

    /// One full update round on a fresh minibatch: critics, actor,
    /// temperature, then the target networks.
    pub fn update(&mut self) -> Result<UpdateStats> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.replay_rng);
        let items: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let batch = Minibatch::new(&items)?;
        let beta = self.beta();
        let y = critic_targets(&self.actor, &self.critics, &batch, beta, self.cfg.gamma);
        let [c1, c2] = critic_update(&mut self.critics, &batch, &y, self.cfg.lr_critic)?;
        let (actor_loss, ent) = actor_update(&mut self.actor, &self.critics, &batch, beta, self.cfg.lr_actor)?;
        if self.cfg.learn_temperature {
            temperature_update(&mut self.log_beta, &ent, self.cfg.target_entropy, self.cfg.lr_temp)?;
        }
        self.critics.ema_update(self.cfg.tau)?;
        Ok(UpdateStats {
            critic_loss: 0.5 * (c1 + c2),
            actor_loss,
            entropy: ent.iter().sum::<f64>() / ent.len().max(1) as f64,
        })
    }

    /// Plays one episode with sampled actions, storing its transitions.
    pub fn collect_episode(&mut self, env: &mut EdgeEnv, episode: u64) -> Result<EpisodeMetrics> {
        env.reset(episode)?;
        // each decision is stored once its successor is known
        let mut pending: Option<(Decision, f64)> = None;
        while !env.is_done() {
            self.actor.reset_hidden();
            let mut slot = Vec::with_capacity(env.slot_len());
            while !env.slot_complete() {
                slot.push(act(env, &mut self.actor, ActMode::Sample, &mut self.sampling)?);
            }
            let outcome = env.settle_slot()?;
            for (d, t) in slot.into_iter().zip(&outcome.tasks) {
                if let Some((prev, r)) = pending.take() {
                    let (o, m, h) = (d.obs.clone(), d.mask.clone(), d.hidden.clone());
                    self.push(prev, r, o, m, h, false);
                }
                pending = Some((d, t.reward));
            }
        }
        if let Some((d, r)) = pending {
            let (o, m, h) = (d.obs.clone(), d.mask.clone(), vec![0.0; d.hidden.len()]);
            self.push(d, r, o, m, h, true);
        }
        self.actor.reset_hidden();
        Ok(env.episode_metrics())
    }

    fn push(&mut self, d: Decision, reward: f64, next_obs: SlotObservation, next_mask: Vec<bool>, next_hidden: Vec<f64>, done: bool) {
        self.buffer.push(Transition {
            obs: d.obs,
            mask: d.mask,
            hidden: d.hidden,
            action: d.action,
            reward,
            next_obs,
            next_mask,
            next_hidden,
            done,
        });
    }

    /// Trains for `cfg.episodes` episodes on workloads `first_episode..`.
    pub fn train(&mut self, env: &mut EdgeEnv, first_episode: u64) -> Result<RunReport> {
        self.train_with(env, first_episode, |_, _| Ok(()))
    }

    /// As [`SacAgent::train`], calling `after_episode` with each log entry.
    pub fn train_with(
        &mut self,
        env: &mut EdgeEnv,
        first_episode: u64,
        mut after_episode: impl FnMut(&SacAgent, &EpisodeLog) -> Result<()>,
    ) -> Result<RunReport> {
        let probe = env.reset(first_episode)?;
        let found = ObsDims::of(&probe);
        if found != self.actor.obs_dims() {
            let want = self.actor.obs_dims();
            return Err(Error::config(
                "sac.actor",
                format!("environment has N={} ({} inputs), actor expects N={} ({} inputs)", found.nodes, found.flat(), want.nodes, want.flat()),
            ));
        }
        let updates = self.cfg.updates_per_episode.unwrap_or(env.config().slots_per_episode);
        let mut report = RunReport::default();
        for e in 0..self.cfg.episodes {
            let m = self.collect_episode(env, first_episode + e as u64)?;
            let mut stats = UpdateStats::default();
            let mut done = 0;
            if self.buffer.len() >= self.cfg.update_threshold() {
                for _ in 0..updates {
                    let s = self.update()?;
                    stats.critic_loss += s.critic_loss;
                    stats.actor_loss += s.actor_loss;
                    done += 1;
                }
            }
            let d = done.max(1) as f64;
            let log = EpisodeLog {
                episode: e,
                mean_reward: m.mean_reward,
                total_time: m.total_time,
                total_energy: m.total_energy,
                image_download_time: m.total_download_time,
                on_time_ratio: m.on_time_ratio,
                beta: self.beta(),
                buffer_size: self.buffer.len(),
                total_reward: m.total_reward,
                critic_loss: if done > 0 { stats.critic_loss / d } else { f64::NAN },
                actor_loss: if done > 0 { stats.actor_loss / d } else { f64::NAN },
                updates: done,
            };
            after_episode(self, &log)?;
            report.episodes.push(log);
        }
        Ok(report)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.actor.to_checkpoint();
        ck.set_meta("log_beta", format!("{:?}", self.log_beta.get(0).scalar()));
        self.critics.write_checkpoint(&mut ck);
        ck
    }
}

#[cfg(test)]
mod tests;
