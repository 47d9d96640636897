use std::collections::HashMap;

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A named dense f64 tensor (row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, shape: &[usize]) -> Tensor {
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Uniform(-s, s) init with s = 1/sqrt(fan_in).
    pub fn uniform(name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new(-s, s);
        Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| dist.sample(rng))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Gradient accumulator keyed by tensor name. Buffers are created lazily
/// and zero-initialized.
#[derive(Debug, Default)]
pub struct GradStore {
    map: HashMap<String, Vec<f64>>,
}

impl GradStore {
    pub fn new() -> GradStore {
        GradStore::default()
    }

    pub fn grad_mut(&mut self, tensor: &Tensor) -> &mut [f64] {
        self.map
            .entry(tensor.name.clone())
            .or_insert_with(|| vec![0.0; tensor.len()])
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.map.get(name).map(|v| v.as_slice())
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    /// SGD step: `t.data -= lr * grad` for every tensor with a buffer.
    pub fn apply_sgd(&self, tensors: &mut [&mut Tensor], lr: f64) {
        for t in tensors.iter_mut() {
            if let Some(g) = self.map.get(&t.name) {
                for (w, gi) in t.data.iter_mut().zip(g.iter()) {
                    *w -= lr * gi;
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().flatten().all(|v| v.is_finite())
    }
}
