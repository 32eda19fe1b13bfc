//! Compares reverse-mode gradients of a GRU step followed by a masked
//! log-softmax and NLL against central finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgesched::ndiff::{gradient_check, nll_loss, GruCell, Linear, ParamSet, Tensor};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ps = ParamSet::new();
    let gru = GruCell::new(&mut ps, "gru", 4, 6, &mut rng);
    let head = Linear::new(&mut ps, "head", 6, 3, &mut rng);
    let n = ps.len();

    let mut inputs = ps.tensors().to_vec();
    inputs.push(Tensor::from_vec(2, 4, vec![0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.0, 0.7]).unwrap());
    inputs.push(Tensor::zeros(2, 6));
    let mask = vec![true, false, true, true, true, false];

    let worst = gradient_check(&inputs, 1e-5, 1e-6, |t, v| {
        let h = gru.forward(t, &v[..n], v[n], v[n + 1]);
        let logits = head.forward(t, &v[..n], h);
        let lp = t.masked_log_softmax(logits, mask.clone());
        nll_loss(t, lp, vec![2, 1])
    });
    println!("{} parameter tensors + 2 inputs, worst relative error {worst:.2e}", n);
    assert!(worst < 1e-4);
}
