use rand::Rng;

use super::params::ParamSet;
use super::tape::{Tape, Var};

/// Records every tensor of `params` as a differentiable leaf.
pub fn bind<'a>(tape: &mut Tape<'a>, params: &'a ParamSet) -> Vec<Var> {
    params.tensors().iter().map(|t| tape.param(t)).collect()
}

/// `y = x W^T + b`, with `W` stored `out x in`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let w = params.add_uniform(format!("{name}.w"), outputs, inputs, inputs, rng);
        let b = params.add_uniform(format!("{name}.b"), 1, outputs, inputs, rng);
        Linear { w, b, inputs, outputs }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &[Var], x: Var) -> Var {
        let y = tape.matmul_t(x, p[self.w]);
        tape.add_row(y, p[self.b])
    }
}

/// Gated recurrent cell:
///
/// ```text
/// g  = sigmoid(W_xr x + W_hr h + b_r)
/// z  = sigmoid(W_xz x + W_hz h + b_z)
/// h~ = tanh(W_xh x + W_hh (g * h) + b_h)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub xr: usize,
    pub hr: usize,
    pub br: usize,
    pub xz: usize,
    pub hz: usize,
    pub bz: usize,
    pub xh: usize,
    pub hh: usize,
    pub bh: usize,
    pub inputs: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(params: &mut ParamSet, name: &str, inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fan = inputs + hidden;
        let mut m = |suffix: &str, rows: usize, cols: usize| params.add_uniform(format!("{name}.{suffix}"), rows, cols, fan, rng);
        GruCell {
            xr: m("w_xr", hidden, inputs),
            hr: m("w_hr", hidden, hidden),
            br: m("b_r", 1, hidden),
            xz: m("w_xz", hidden, inputs),
            hz: m("w_hz", hidden, hidden),
            bz: m("b_z", 1, hidden),
            xh: m("w_xh", hidden, inputs),
            hh: m("w_hh", hidden, hidden),
            bh: m("b_h", 1, hidden),
            inputs,
            hidden,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &[Var], x: Var, h: Var) -> Var {
        let g = self.gate(tape, p, x, h, self.xr, self.hr, self.br);
        let z = self.gate(tape, p, x, h, self.xz, self.hz, self.bz);
        let gh = tape.mul(g, h);
        let a = tape.matmul_t(x, p[self.xh]);
        let b = tape.matmul_t(gh, p[self.hh]);
        let s = tape.add(a, b);
        let s = tape.add_row(s, p[self.bh]);
        let cand = tape.tanh(s);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h);
        let new = tape.mul(z, cand);
        tape.add(old, new)
    }

    #[allow(clippy::too_many_arguments)]
    fn gate(&self, tape: &mut Tape<'_>, p: &[Var], x: Var, h: Var, wx: usize, wh: usize, b: usize) -> Var {
        let a = tape.matmul_t(x, p[wx]);
        let c = tape.matmul_t(h, p[wh]);
        let s = tape.add(a, c);
        let s = tape.add_row(s, p[b]);
        tape.sigmoid(s)
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes` lists the input width followed by every layer's output width.
    pub fn new(params: &mut ParamSet, name: &str, sizes: &[usize], rng: &mut impl Rng) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &[Var], x: Var) -> Var {
        let mut y = x;
        for (i, l) in self.layers.iter().enumerate() {
            y = l.forward(tape, p, y);
            if i + 1 < self.layers.len() {
                y = tape.relu(y);
            }
        }
        y
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }
}
