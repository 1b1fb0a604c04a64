//! One-hidden-layer ReLU network with a flat parameter vector.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::data::DIMENSION;

/// Parameters are laid out as `[w1 (hidden × input), b1, w2 (classes ×
/// hidden), b2]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    hidden: usize,
    classes: usize,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: [f64; DIMENSION],
    hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn new<R: Rng>(hidden: usize, classes: usize, rng: &mut R) -> Self {
        let mut params = vec![0.0; Self::param_count(hidden, classes)];
        let he1 = Normal::new(0.0, (2.0 / DIMENSION as f64).sqrt()).expect("valid std");
        let he2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
        let model = Self { hidden, classes, params: Vec::new() };
        for p in &mut params[..hidden * DIMENSION] {
            *p = he1.sample(rng);
        }
        let w2 = model.w2_offset();
        for p in &mut params[w2..w2 + classes * hidden] {
            *p = he2.sample(rng);
        }
        Self { params, ..model }
    }

    pub fn param_count(hidden: usize, classes: usize) -> usize {
        hidden * DIMENSION + hidden + classes * hidden + classes
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn b1_offset(&self) -> usize {
        self.hidden * DIMENSION
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.classes * self.hidden
    }

    pub fn forward(&self, x: &[f64; DIMENSION]) -> ForwardCache {
        let p = &self.params;
        let b1 = self.b1_offset();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &p[j * DIMENSION..(j + 1) * DIMENSION];
                let pre = p[b1 + j] + row[0] * x[0] + row[1] * x[1];
                pre.max(0.0)
            })
            .collect();
        let (w2, b2) = (self.w2_offset(), self.b2_offset());
        let logits = (0..self.classes)
            .map(|c| {
                let row = &p[w2 + c * self.hidden..w2 + (c + 1) * self.hidden];
                p[b2 + c] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        ForwardCache {
            input: *x,
            hidden,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64; DIMENSION]) -> Vec<f64> {
        self.forward(x).logits
    }

    /// Add `∂loss/∂θ` to `grad` given `∂loss/∂logits` for one sample. The
    /// ReLU derivative at exactly 0 is taken as 0.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let (b1, w2, b2) = (self.b1_offset(), self.w2_offset(), self.b2_offset());
        let mut d_hidden = vec![0.0; self.hidden];
        for (c, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad[b2 + c] += dz;
            let row = w2 + c * self.hidden;
            for j in 0..self.hidden {
                grad[row + j] += dz * cache.hidden[j];
                d_hidden[j] += dz * p[row + j];
            }
        }
        for (j, &dh) in d_hidden.iter().enumerate() {
            if cache.hidden[j] <= 0.0 {
                continue;
            }
            grad[b1 + j] += dh;
            grad[j * DIMENSION] += dh * cache.input[0];
            grad[j * DIMENSION + 1] += dh * cache.input[1];
        }
    }
}
