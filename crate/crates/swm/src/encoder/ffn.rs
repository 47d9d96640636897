//! Lightweight encoder variant: per-character feed-forward layer over a
//! radius-1 embedding context window. Fast, no recurrence; useful for
//! quick experiments and tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    Encoder, EncoderConfig, EncoderError, EncoderTrace, FeatureMatrix, Vocab,
};
use crate::nn::ops::{linear_backward, linear_forward};
use crate::nn::{GradStore, Tensor};

pub struct FfnEncoder {
    vocab: Vocab,
    embed: Tensor,
    w: Tensor,
    b: Tensor,
    out_dim: usize,
}

struct FfnTrace {
    ids: Vec<usize>,
    /// Context-window inputs, one 3E vector per position.
    xs: Vec<Vec<f64>>,
    /// tanh outputs (needed for the activation backward).
    ys: Vec<Vec<f64>>,
}

impl EncoderTrace for FfnTrace {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

impl FfnEncoder {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<FfnEncoder, EncoderError> {
        config.validate()?;
        let e = config.embed_dim;
        let d = config.output_dim();
        let v = config.vocab.table_size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(FfnEncoder {
            vocab: config.vocab.clone(),
            embed: Tensor::uniform("embed", &[v, e], e, &mut rng),
            w: Tensor::uniform("ffn.w", &[d, 3 * e], 3 * e, &mut rng),
            b: Tensor::uniform("ffn.b", &[d], 3 * e, &mut rng),
            out_dim: d,
        })
    }

    fn embed_row(&self, id: usize) -> &[f64] {
        let e = self.embed.shape[1];
        &self.embed.data[id * e..(id + 1) * e]
    }
}

impl Encoder for FfnEncoder {
    fn name(&self) -> &'static str {
        "ffn"
    }

    fn output_dim(&self) -> usize {
        self.out_dim
    }

    fn encode_traced(
        &self,
        chars: &[char],
    ) -> Result<(FeatureMatrix, Box<dyn EncoderTrace>), EncoderError> {
        if chars.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let n = chars.len();
        let e = self.embed.shape[1];
        let ids: Vec<usize> = chars.iter().map(|c| self.vocab.id(*c)).collect();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut features = FeatureMatrix::zeros(n, self.out_dim);
        for t in 0..n {
            let mut x = vec![0.0; 3 * e];
            if t > 0 {
                x[..e].copy_from_slice(self.embed_row(ids[t - 1]));
            }
            x[e..2 * e].copy_from_slice(self.embed_row(ids[t]));
            if t + 1 < n {
                x[2 * e..].copy_from_slice(self.embed_row(ids[t + 1]));
            }
            let mut y = vec![0.0; self.out_dim];
            linear_forward(&self.w, &self.b, &x, &mut y);
            for v in y.iter_mut() {
                *v = v.tanh();
            }
            features.row_mut(t).copy_from_slice(&y);
            xs.push(x);
            ys.push(y);
        }
        Ok((features, Box::new(FfnTrace { ids, xs, ys })))
    }

    fn backward(
        &self,
        _chars: &[char],
        trace: &dyn EncoderTrace,
        grad_out: &FeatureMatrix,
        grads: &mut GradStore,
    ) {
        let trace = trace
            .as_any()
            .downcast_ref::<FfnTrace>()
            .expect("trace type mismatch");
        let n = trace.ids.len();
        let e = self.embed.shape[1];
        let mut d_embed_rows: Vec<Vec<f64>> = vec![vec![0.0; e]; n];
        for t in 0..n {
            let y = &trace.ys[t];
            let dy: Vec<f64> = grad_out
                .row(t)
                .iter()
                .zip(y.iter())
                .map(|(g, v)| g * (1.0 - v * v))
                .collect();
            let mut dx = vec![0.0; 3 * e];
            linear_backward(&self.w, &self.b, &trace.xs[t], &dy, grads, Some(&mut dx));
            if t > 0 {
                for (acc, v) in d_embed_rows[t - 1].iter_mut().zip(&dx[..e]) {
                    *acc += v;
                }
            }
            for (acc, v) in d_embed_rows[t].iter_mut().zip(&dx[e..2 * e]) {
                *acc += v;
            }
            if t + 1 < n {
                for (acc, v) in d_embed_rows[t + 1].iter_mut().zip(&dx[2 * e..]) {
                    *acc += v;
                }
            }
        }
        let d_embed = grads.grad_mut(&self.embed);
        for (t, &id) in trace.ids.iter().enumerate() {
            for (acc, v) in d_embed[id * e..(id + 1) * e]
                .iter_mut()
                .zip(&d_embed_rows[t])
            {
                *acc += v;
            }
        }
    }

    fn visit_tensors(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.embed);
        f(&self.w);
        f(&self.b);
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.embed);
        f(&mut self.w);
        f(&mut self.b);
    }
}
