//! Actor and critic networks.
//!
//! The hybrid actor runs a GRU over the node block of the observation and a
//! linear embedding over the task block, concatenates both and maps them
//! through a ReLU head to one logit per node. The hidden state is carried
//! between tasks of one slot and zeroed at every slot start.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::SlotObservation;
use crate::error::{Error, Result};
use crate::ndiff::{bind, masked_softmax, Checkpoint, GruCell, Linear, Mlp, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorVariant {
    #[default]
    Hybrid,
    Fc,
    GruOnly,
}

impl ActorVariant {
    pub const ALL: [ActorVariant; 3] = [ActorVariant::Hybrid, ActorVariant::GruOnly, ActorVariant::Fc];

    pub fn name(self) -> &'static str {
        match self {
            ActorVariant::Hybrid => "hybrid",
            ActorVariant::Fc => "fc",
            ActorVariant::GruOnly => "gru_only",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != ActorVariant::Fc
    }
}

impl fmt::Display for ActorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActorVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActorVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("actor.variant", format!("unknown variant `{s}` (hybrid, fc, gru_only)")))
    }
}

/// Network widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetDims {
    pub hidden: usize,
    pub embed: usize,
    pub actor_head: Vec<usize>,
    pub critic_head: Vec<usize>,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            hidden: 64,
            embed: 64,
            actor_head: vec![128, 64, 32],
            critic_head: vec![64, 16],
        }
    }
}

/// Observation shape an actor or critic is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsDims {
    pub nodes: usize,
    pub node_state: usize,
    pub ms_state: usize,
}

impl ObsDims {
    pub fn of(obs: &SlotObservation) -> Self {
        ObsDims {
            nodes: obs.mask.len(),
            node_state: obs.node_state.len(),
            ms_state: obs.ms_state.len(),
        }
    }

    pub fn flat(&self) -> usize {
        self.node_state + self.ms_state
    }

    pub fn check(&self, obs: &SlotObservation) -> Result<()> {
        let found = ObsDims::of(obs);
        if found.nodes != self.nodes {
            return Err(Error::DimensionMismatch {
                what: "node count N".into(),
                expected: self.nodes,
                found: found.nodes,
            });
        }
        if found != *self {
            return Err(Error::DimensionMismatch {
                what: "observation width".into(),
                expected: self.flat(),
                found: found.flat(),
            });
        }
        Ok(())
    }
}

/// Batched observation rows ready for a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBatch {
    pub node: Tensor,
    pub ms: Tensor,
    pub mask: Vec<bool>,
}

impl ObsBatch {
    pub fn new<'o>(obs: impl IntoIterator<Item = &'o SlotObservation>) -> Result<Self> {
        Self::with_masks(obs.into_iter().map(|o| (o, o.mask.as_slice())))
    }

    /// Uses the paired masks instead of the observations' own.
    pub fn with_masks<'o>(items: impl IntoIterator<Item = (&'o SlotObservation, &'o [bool])>) -> Result<Self> {
        let mut node = Vec::new();
        let mut ms = Vec::new();
        let mut mask = Vec::new();
        for (o, m) in items {
            node.push(o.node_state.as_slice());
            ms.push(o.ms_state.as_slice());
            mask.extend_from_slice(m);
        }
        Ok(ObsBatch {
            node: Tensor::stack(&node)?,
            ms: Tensor::stack(&ms)?,
            mask,
        })
    }

    pub fn rows(&self) -> usize {
        self.node.rows
    }

    pub fn flat(&self) -> Tensor {
        let cols = self.node.cols + self.ms.cols;
        let mut data = Vec::with_capacity(self.rows() * cols);
        for r in 0..self.rows() {
            data.extend_from_slice(self.node.row_slice(r));
            data.extend_from_slice(self.ms.row_slice(r));
        }
        Tensor {
            rows: self.rows(),
            cols,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    variant: ActorVariant,
    obs: ObsDims,
    dims: NetDims,
    pub params: ParamSet,
    gru: Option<GruCell>,
    embed: Option<Linear>,
    head: Mlp,
    hidden: Vec<f64>,
}

pub fn make_actor(variant: ActorVariant, obs: ObsDims, dims: &NetDims, rng: &mut impl Rng) -> Actor {
    let mut params = ParamSet::new();
    let (gru, embed, head_in) = match variant {
        ActorVariant::Hybrid => {
            let gru = GruCell::new(&mut params, "gru", obs.node_state, dims.hidden, rng);
            let embed = Linear::new(&mut params, "embed", obs.ms_state, dims.embed, rng);
            (Some(gru), Some(embed), dims.hidden + dims.embed)
        }
        ActorVariant::GruOnly => {
            let gru = GruCell::new(&mut params, "gru", obs.flat(), dims.hidden, rng);
            (Some(gru), None, dims.hidden)
        }
        ActorVariant::Fc => (None, None, obs.flat()),
    };
    let mut sizes = vec![head_in];
    sizes.extend(&dims.actor_head);
    sizes.push(obs.nodes);
    let head = Mlp::new(&mut params, "head", &sizes, rng);
    let hidden = vec![0.0; if gru.is_some() { dims.hidden } else { 0 }];
    Actor {
        variant,
        obs,
        dims: dims.clone(),
        params,
        gru,
        embed,
        head,
        hidden,
    }
}

impl Actor {
    pub fn variant(&self) -> ActorVariant {
        self.variant
    }

    pub fn obs_dims(&self) -> ObsDims {
        self.obs
    }

    pub fn net_dims(&self) -> &NetDims {
        &self.dims
    }

    /// Width of the recurrent state; 0 for the feed-forward variant.
    pub fn hidden_dim(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn set_hidden(&mut self, h: &[f64]) {
        self.hidden.copy_from_slice(h);
    }

    pub fn reset_hidden(&mut self) {
        self.hidden.fill(0.0);
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    /// Logits and next hidden state for a batch; `h` is `B x hidden` (any
    /// `B x 0` placeholder for the feed-forward variant).
    pub fn forward(&self, tape: &mut Tape<'_>, p: &[Var], batch: &ObsBatch, h: Var) -> (Var, Var) {
        match self.variant {
            ActorVariant::Hybrid => {
                let x = tape.constant(batch.node.clone());
                let m = tape.constant(batch.ms.clone());
                let h2 = self.gru.as_ref().expect("hybrid actor has a GRU").forward(tape, p, x, h);
                let e = self.embed.as_ref().expect("hybrid actor has an embedding").forward(tape, p, m);
                let cat = tape.concat(h2, e);
                (self.head.forward(tape, p, cat), h2)
            }
            ActorVariant::GruOnly => {
                let x = tape.constant(batch.flat());
                let h2 = self.gru.as_ref().expect("gru actor has a GRU").forward(tape, p, x, h);
                (self.head.forward(tape, p, h2), h2)
            }
            ActorVariant::Fc => {
                let x = tape.constant(batch.flat());
                (self.head.forward(tape, p, x), h)
            }
        }
    }

    /// Masked action distribution and next hidden state, without touching
    /// the actor's own hidden state.
    pub fn actor_forward(&self, obs: &SlotObservation, hidden: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.obs.check(obs)?;
        let batch = ObsBatch::new([obs])?;
        let mut tape = Tape::new();
        let p = bind(&mut tape, &self.params);
        let h = tape.constant(Tensor::row(hidden));
        let (logits, h2) = self.forward(&mut tape, &p, &batch, h);
        let next = tape.value(h2).data.clone();
        if !obs.mask.iter().any(|&m| m) {
            return Err(Error::NoFeasibleAction);
        }
        let dist = masked_softmax(tape.value(logits), &obs.mask).data;
        Ok((dist, next))
    }

    /// Advances the hidden state by one task and returns the masked
    /// distribution. The hidden state advances even when nothing is
    /// feasible, since the GRU has still seen this task.
    pub fn step(&mut self, obs: &SlotObservation) -> Result<Vec<f64>> {
        self.obs.check(obs)?;
        let batch = ObsBatch::new([obs])?;
        let (logits, next) = {
            let mut tape = Tape::new();
            let p = bind(&mut tape, &self.params);
            let h = tape.constant(Tensor::row(&self.hidden));
            let (logits, h2) = self.forward(&mut tape, &p, &batch, h);
            (tape.value(logits).clone(), tape.value(h2).data.clone())
        };
        self.hidden = next;
        if !obs.mask.iter().any(|&m| m) {
            return Err(Error::NoFeasibleAction);
        }
        Ok(masked_softmax(&logits, &obs.mask).data)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "actor");
        ck.set_meta("variant", self.variant);
        ck.set_meta("nodes", self.obs.nodes);
        ck.set_meta("node_state", self.obs.node_state);
        ck.set_meta("ms_state", self.obs.ms_state);
        ck.set_meta("hidden", self.dims.hidden);
        ck.set_meta("embed", self.dims.embed);
        ck.set_meta("actor_head", join(&self.dims.actor_head));
        ck.set_meta("critic_head", join(&self.dims.critic_head));
        ck.set_meta("param_count", self.params.count());
        ck.push_params("actor", &self.params);
        ck
    }

    /// Rebuilds an actor from a checkpoint, checking it against `expected`
    /// observation dimensions when given.
    pub fn from_checkpoint(ck: &Checkpoint, expected: Option<ObsDims>) -> Result<Actor> {
        let variant: ActorVariant = ck.require("variant")?.parse()?;
        let obs = ObsDims {
            nodes: meta_usize(ck, "nodes")?,
            node_state: meta_usize(ck, "node_state")?,
            ms_state: meta_usize(ck, "ms_state")?,
        };
        if let Some(want) = expected {
            if want.nodes != obs.nodes {
                return Err(Error::DimensionMismatch {
                    what: format!("node count N (environment N={}, checkpoint N={})", want.nodes, obs.nodes),
                    expected: want.nodes,
                    found: obs.nodes,
                });
            }
            if want != obs {
                return Err(Error::DimensionMismatch {
                    what: "observation width".into(),
                    expected: want.flat(),
                    found: obs.flat(),
                });
            }
        }
        let dims = NetDims {
            hidden: meta_usize(ck, "hidden")?,
            embed: meta_usize(ck, "embed")?,
            actor_head: meta_list(ck, "actor_head")?,
            critic_head: meta_list(ck, "critic_head")?,
        };
        // parameters are overwritten below; the init draw is irrelevant
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut actor = make_actor(variant, obs, &dims, &mut rng);
        ck.restore_params("actor", &mut actor.params)?;
        Ok(actor)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn meta_usize(ck: &Checkpoint, key: &str) -> Result<usize> {
    let v = ck.require(key)?;
    v.parse()
        .map_err(|_| Error::config(format!("checkpoint.{key}"), format!("`{v}` is not a count")))
}

fn meta_list(ck: &Checkpoint, key: &str) -> Result<Vec<usize>> {
    let v = ck.require(key)?;
    v.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::config(format!("checkpoint.{key}"), format!("`{v}` is not a width list")))
        })
        .collect()
}

/// One Q network over the flattened observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub params: ParamSet,
    pub net: Mlp,
}

impl Critic {
    pub fn new(name: &str, obs: ObsDims, head: &[usize], rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let mut sizes = vec![obs.flat()];
        sizes.extend(head);
        sizes.push(obs.nodes);
        let net = Mlp::new(&mut params, name, &sizes, rng);
        Critic { params, net }
    }

    /// Q values for every row of `x`, evaluated with `params` (the online or
    /// target copy).
    pub fn q(&self, tape: &mut Tape<'_>, p: &[Var], x: Var) -> Var {
        self.net.forward(tape, p, x)
    }

    pub fn q_values(&self, params: &ParamSet, flat: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let p: Vec<Var> = params.tensors().iter().map(|t| tape.constant_ref(t)).collect();
        let x = tape.constant_ref(flat);
        let q = self.q(&mut tape, &p, x);
        tape.value(q).clone()
    }
}

/// Twin critics and their slowly tracking targets.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticPair {
    pub obs: ObsDims,
    pub online: [Critic; 2],
    pub target: [ParamSet; 2],
}

impl CriticPair {
    pub fn new(obs: ObsDims, dims: &NetDims, rng: &mut impl Rng) -> Self {
        let q1 = Critic::new("q1", obs, &dims.critic_head, rng);
        let q2 = Critic::new("q2", obs, &dims.critic_head, rng);
        let target = [q1.params.clone(), q2.params.clone()];
        CriticPair {
            obs,
            online: [q1, q2],
            target,
        }
    }

    /// Both online heads on one observation.
    pub fn critic_forward(&self, obs: &SlotObservation) -> Result<[Vec<f64>; 2]> {
        self.obs.check(obs)?;
        let x = Tensor::row(&obs.flat());
        Ok([0, 1].map(|j| self.online[j].q_values(&self.online[j].params, &x).data))
    }

    /// Elementwise minimum of the two target heads for each row.
    pub fn target_min(&self, flat: &Tensor) -> Tensor {
        let a = self.online[0].q_values(&self.target[0], flat);
        let b = self.online[1].q_values(&self.target[1], flat);
        a.zip_map(&b, f64::min)
    }

    /// Elementwise minimum of the two online heads for each row.
    pub fn online_min(&self, flat: &Tensor) -> Tensor {
        let a = self.online[0].q_values(&self.online[0].params, flat);
        let b = self.online[1].q_values(&self.online[1].params, flat);
        a.zip_map(&b, f64::min)
    }

    pub fn ema_update(&mut self, tau: f64) -> Result<()> {
        for j in 0..2 {
            self.target[j].ema_update(&self.online[j].params, tau)?;
        }
        Ok(())
    }

    pub fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.push_params("q1", &self.online[0].params);
        ck.push_params("q2", &self.online[1].params);
        ck.push_params("q1_target", &self.target[0]);
        ck.push_params("q2_target", &self.target[1]);
    }

    pub fn restore_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore_params("q1", &mut self.online[0].params)?;
        ck.restore_params("q2", &mut self.online[1].params)?;
        ck.restore_params("q1_target", &mut self.target[0])?;
        ck.restore_params("q2_target", &mut self.target[1])
    }
}

/// Index of the largest probability, lowest index on ties.
pub fn greedy(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from `dist` by inverse CDF; never returns a zero-mass entry.
pub fn sample(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(i);
            if u < acc {
                return i;
            }
        }
    }
    last.unwrap_or_else(|| greedy(dist))
}
