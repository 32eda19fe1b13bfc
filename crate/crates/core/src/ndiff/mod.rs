//! Small reverse-mode autodiff kernel over dense `f64` matrices.
//!
//! A [`Tape`] records one forward pass; parameters live in a [`ParamSet`]
//! that also carries their Adam state. Layers hold indices into the
//! parameter set and are bound to a tape with [`bind`].

mod checkpoint;
mod layers;
mod params;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use layers::{bind, GruCell, Linear, Mlp};
pub use params::{AdamConfig, ParamSet};
pub use tape::{masked_log_softmax, masked_softmax, sigmoid, Grads, Tape, Var};
pub use tensor::Tensor;

/// Mean negative log-likelihood of `targets` under row-wise `log_probs`.
pub fn nll_loss(tape: &mut Tape<'_>, log_probs: Var, targets: Vec<usize>) -> Var {
    let picked = tape.gather(log_probs, targets);
    let m = tape.mean(picked);
    tape.scale(m, -1.0)
}

/// Central-difference check of `f` at `inputs`; returns the largest
/// elementwise relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<F>(inputs: &[Tensor], eps: f64, floor: f64, f: F) -> f64
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.input(x.clone())).collect();
        let out = f(&mut t, &vars);
        t.value(out).scalar()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.input(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let mut grads = tape.backward(out);
    let analytic: Vec<Tensor> = vars.iter().zip(inputs).map(|(&v, x)| grads.take(v, x)).collect();

    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for (i, a) in analytic.iter().enumerate() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data[j];
            xs[i].data[j] = orig + eps;
            let hi = eval(&xs);
            xs[i].data[j] = orig - eps;
            let lo = eval(&xs);
            xs[i].data[j] = orig;
            let n = (hi - lo) / (2.0 * eps);
            let g = a.data[j];
            worst = worst.max((g - n).abs() / g.abs().max(n.abs()).max(floor));
        }
    }
    worst
}
