use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter tensors with their Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    /// Adds a tensor and returns its index.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.m.push(Tensor::zeros(t.rows, t.cols));
        self.v.push(Tensor::zeros(t.rows, t.cols));
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    /// Adds a `rows x cols` tensor drawn uniformly from `±1/sqrt(fan_in)`.
    pub fn add_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor { rows, cols, data })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Bias-corrected Adam update; `grads` are aligned with the tensors.
    pub fn adam_step(&mut self, grads: &[Tensor], cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient list".into(),
                expected: self.tensors.len(),
                found: grads.len(),
            });
        }
        for (g, p) in grads.iter().zip(&self.tensors) {
            if g.shape() != p.shape() {
                return Err(Error::DimensionMismatch {
                    what: "gradient shape".into(),
                    expected: p.len(),
                    found: g.len(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in self.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// `self <- (1 - tau) * self + tau * online`, element by element.
    pub fn ema_update(&mut self, online: &ParamSet, tau: f64) -> Result<()> {
        self.check_same_layout(online)?;
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            for (a, &b) in t.data.iter_mut().zip(&o.data) {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
        Ok(())
    }

    /// Copies parameter values (not moments) from `other`.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        self.check_same_layout(other)?;
        for (t, o) in self.tensors.iter_mut().zip(&other.tensors) {
            t.data.copy_from_slice(&o.data);
        }
        Ok(())
    }

    pub fn check_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter count".into(),
                expected: self.tensors.len(),
                found: other.tensors.len(),
            });
        }
        for ((n, a), b) in self.names.iter().zip(&self.tensors).zip(&other.tensors) {
            if a.shape() != b.shape() {
                return Err(Error::DimensionMismatch {
                    what: format!("parameter `{n}`"),
                    expected: a.len(),
                    found: b.len(),
                });
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Resets the optimizer state, keeping the values.
    pub fn reset_moments(&mut self) {
        for t in self.m.iter_mut().chain(&mut self.v) {
            t.data.fill(0.0);
        }
        self.step = 0;
    }
}
