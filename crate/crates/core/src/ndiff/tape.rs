use std::borrow::Cow;

use super::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `x * w^T`
    MatMulT(Var, Var),
    /// Adds a `1 x n` row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Var, Var),
    MaskedLogSoftmax(Var, Vec<bool>),
    MaskedSoftmax(Var),
    Gather(Var, Vec<usize>),
    SumCols(Var),
    Sum(Var),
    Square(Var),
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    needs_grad: bool,
}

/// Records one forward pass; [`Tape::backward`] walks it in reverse.
///
/// Leaves may borrow their tensors, so parameters are not copied per pass.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every recorded value.
pub struct Grads {
    g: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.g[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when it does not
    /// influence the output.
    pub fn take(&mut self, v: Var, like: &Tensor) -> Tensor {
        self.g[v.0].take().unwrap_or_else(|| Tensor::zeros(like.rows, like.cols))
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Differentiable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(t),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf owning `t`.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Cow::Borrowed(t),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let mut out = Tensor::zeros(xv.rows, wv.rows);
        gemm(xv, false, wv, true, 0.0, &mut out);
        let ng = self.ng(x) || self.ng(w);
        self.push(Op::MatMulT(x, w), out, ng)
    }

    pub fn add_row(&mut self, y: Var, b: Var) -> Var {
        let (yv, bv) = (self.value(y), self.value(b));
        assert_eq!((bv.rows, bv.cols), (1, yv.cols), "bias shape");
        let mut out = yv.clone();
        for r in 0..out.rows {
            for (o, bb) in out.row_slice_mut(r).iter_mut().zip(&bv.data) {
                *o += bb;
            }
        }
        let ng = self.ng(y) || self.ng(b);
        self.push(Op::AddRow(y, b), out, ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shapes");
        let out = av.zip_map(bv, f);
        let ng = self.ng(a) || self.ng(b);
        self.push(op, out, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(op, out, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, Op::OneMinus(a), |x| 1.0 - x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows, bv.rows, "concat rows");
        let cols = av.cols + bv.cols;
        let mut data = Vec::with_capacity(av.rows * cols);
        for r in 0..av.rows {
            data.extend_from_slice(av.row_slice(r));
            data.extend_from_slice(bv.row_slice(r));
        }
        let out = Tensor {
            rows: av.rows,
            cols,
            data,
        };
        let ng = self.ng(a) || self.ng(b);
        self.push(Op::Concat(a, b), out, ng)
    }

    /// Row-wise log-softmax over the entries where `mask` (row-major, same
    /// shape as `a`) is true; masked entries are 0 and carry no gradient.
    pub fn masked_log_softmax(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let out = masked_log_softmax(self.value(a), &mask);
        let ng = self.ng(a);
        self.push(Op::MaskedLogSoftmax(a, mask), out, ng)
    }

    /// Row-wise softmax restricted to `mask`; masked entries are exactly 0.
    pub fn masked_softmax(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let out = masked_softmax(self.value(a), &mask);
        let ng = self.ng(a);
        self.push(Op::MaskedSoftmax(a), out, ng)
    }

    /// Picks column `idx[r]` of every row; `B x 1`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let av = self.value(a);
        assert_eq!(idx.len(), av.rows, "one index per row");
        let out = Tensor {
            rows: av.rows,
            cols: 1,
            data: idx.iter().enumerate().map(|(r, &c)| av.get(r, c)).collect(),
        };
        let ng = self.ng(a);
        self.push(Op::Gather(a, idx), out, ng)
    }

    /// Sums each row; `B x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor {
            rows: av.rows,
            cols: 1,
            data: (0..av.rows).map(|r| av.row_slice(r).iter().sum()).collect(),
        };
        let ng = self.ng(a);
        self.push(Op::SumCols(a), out, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::row(&[self.value(a).data.iter().sum()]);
        let ng = self.ng(a);
        self.push(Op::Sum(a), out, ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Reverse pass from the `1 x 1` value `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar");
        let mut g: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        g[out.0] = Some(Tensor::filled(1, 1, 1.0));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gi) = g[i].take() else { continue };
            let y = &*node.value;
            match &node.op {
                Op::Leaf => {
                    g[i] = Some(gi);
                    continue;
                }
                Op::MatMulT(x, w) => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if self.ng(*x) {
                        let mut dx = Tensor::zeros(xv.rows, xv.cols);
                        gemm(&gi, false, wv, false, 0.0, &mut dx);
                        accumulate(&mut g, *x, dx);
                    }
                    if self.ng(*w) {
                        let mut dw = Tensor::zeros(wv.rows, wv.cols);
                        gemm(&gi, true, xv, false, 0.0, &mut dw);
                        accumulate(&mut g, *w, dw);
                    }
                }
                Op::AddRow(a, b) => {
                    if self.ng(*b) {
                        let mut db = Tensor::zeros(1, gi.cols);
                        for r in 0..gi.rows {
                            for (d, v) in db.data.iter_mut().zip(gi.row_slice(r)) {
                                *d += v;
                            }
                        }
                        accumulate(&mut g, *b, db);
                    }
                    if self.ng(*a) {
                        accumulate(&mut g, *a, gi);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut g, *b, gi.clone());
                    }
                    if self.ng(*a) {
                        accumulate(&mut g, *a, gi);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        accumulate(&mut g, *b, gi.map(|x| -x));
                    }
                    if self.ng(*a) {
                        accumulate(&mut g, *a, gi);
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut g, *a, gi.zip_map(self.value(*b), |d, v| d * v));
                    }
                    if self.ng(*b) {
                        accumulate(&mut g, *b, gi.zip_map(self.value(*a), |d, v| d * v));
                    }
                }
                Op::Scale(a, c) => accumulate(&mut g, *a, gi.map(|d| d * c)),
                Op::OneMinus(a) => accumulate(&mut g, *a, gi.map(|d| -d)),
                Op::Sigmoid(a) => accumulate(&mut g, *a, gi.zip_map(y, |d, s| d * s * (1.0 - s))),
                Op::Tanh(a) => accumulate(&mut g, *a, gi.zip_map(y, |d, t| d * (1.0 - t * t))),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    accumulate(&mut g, *a, gi.zip_map(x, |d, v| if v > 0.0 { d } else { 0.0 }));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    accumulate(&mut g, *a, gi.zip_map(x, |d, v| 2.0 * d * v));
                }
                Op::Concat(a, b) => {
                    let ca = self.value(*a).cols;
                    let cb = gi.cols - ca;
                    let mut da = Tensor::zeros(gi.rows, ca);
                    let mut db = Tensor::zeros(gi.rows, cb);
                    for r in 0..gi.rows {
                        let row = gi.row_slice(r);
                        da.row_slice_mut(r).copy_from_slice(&row[..ca]);
                        db.row_slice_mut(r).copy_from_slice(&row[ca..]);
                    }
                    if self.ng(*a) {
                        accumulate(&mut g, *a, da);
                    }
                    if self.ng(*b) {
                        accumulate(&mut g, *b, db);
                    }
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let mut dx = Tensor::zeros(gi.rows, gi.cols);
                    for r in 0..gi.rows {
                        let off = r * gi.cols;
                        let m = &mask[off..off + gi.cols];
                        let gr = gi.row_slice(r);
                        let total: f64 = gr.iter().zip(m).filter(|(_, &k)| k).map(|(d, _)| d).sum();
                        let yr = y.row_slice(r);
                        for c in 0..gi.cols {
                            if m[c] {
                                dx.data[off + c] = gr[c] - yr[c].exp() * total;
                            }
                        }
                    }
                    accumulate(&mut g, *a, dx);
                }
                Op::MaskedSoftmax(a) => {
                    let mut dx = Tensor::zeros(gi.rows, gi.cols);
                    for r in 0..gi.rows {
                        let (gr, pr) = (gi.row_slice(r), y.row_slice(r));
                        let dot: f64 = gr.iter().zip(pr).map(|(d, p)| d * p).sum();
                        for (o, (d, p)) in dx.row_slice_mut(r).iter_mut().zip(gr.iter().zip(pr)) {
                            *o = p * (d - dot);
                        }
                    }
                    accumulate(&mut g, *a, dx);
                }
                Op::Gather(a, idx) => {
                    let av = self.value(*a);
                    let mut dx = Tensor::zeros(av.rows, av.cols);
                    for (r, &c) in idx.iter().enumerate() {
                        dx.data[r * av.cols + c] = gi.data[r];
                    }
                    accumulate(&mut g, *a, dx);
                }
                Op::SumCols(a) => {
                    let av = self.value(*a);
                    let mut dx = Tensor::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        dx.row_slice_mut(r).fill(gi.data[r]);
                    }
                    accumulate(&mut g, *a, dx);
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    accumulate(&mut g, *a, Tensor::filled(av.rows, av.cols, gi.data[0]));
                }
            }
        }
        Grads { g }
    }
}

fn accumulate(g: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut g[v.0] {
        Some(t) => t.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax restricted to `mask`; masked entries are 0. A row
/// with no admissible entry is all zeros.
pub fn masked_log_softmax(x: &Tensor, mask: &[bool]) -> Tensor {
    assert_eq!(mask.len(), x.len(), "mask shape");
    let mut out = Tensor::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let off = r * x.cols;
        let m = &mask[off..off + x.cols];
        let xr = x.row_slice(r);
        let max = xr
            .iter()
            .zip(m)
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let lse = max
            + xr.iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(v, _)| (v - max).exp())
                .sum::<f64>()
                .ln();
        for c in 0..x.cols {
            if m[c] {
                out.data[off + c] = xr[c] - lse;
            }
        }
    }
    out
}

pub fn masked_softmax(x: &Tensor, mask: &[bool]) -> Tensor {
    let mut out = masked_log_softmax(x, mask);
    for (o, &m) in out.data.iter_mut().zip(mask) {
        *o = if m { o.exp() } else { 0.0 };
    }
    out
}
