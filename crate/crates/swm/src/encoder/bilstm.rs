//! Reference encoder: embeddings plus a two-layer bidirectional
//! recurrent net with gated (LSTM-style) cells, D = 2H output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    Encoder, EncoderConfig, EncoderError, EncoderTrace, FeatureMatrix, Vocab,
};
use crate::nn::ops::{lstm_step_backward, lstm_step_forward, LstmStepCache};
use crate::nn::{GradStore, Tensor};

const LAYERS: usize = 2;

pub struct BiLstmEncoder {
    vocab: Vocab,
    embed: Tensor,
    /// Indexed [layer][direction]; direction 0 = forward, 1 = backward.
    cells: Vec<Vec<CellParams>>,
    hidden: usize,
}

struct CellParams {
    wx: Tensor,
    wh: Tensor,
    b: Tensor,
}

struct DirTrace {
    caches: Vec<LstmStepCache>,
}

struct BiLstmTrace {
    ids: Vec<usize>,
    /// Per-layer inputs, in sentence order: layer 0 sees embeddings,
    /// layer 1 sees the concatenated layer-0 states.
    layer_inputs: Vec<Vec<Vec<f64>>>,
    /// Indexed [layer][direction], caches in processing order.
    dirs: Vec<Vec<DirTrace>>,
}

impl EncoderTrace for BiLstmTrace {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

impl BiLstmEncoder {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<BiLstmEncoder, EncoderError> {
        config.validate()?;
        let e = config.embed_dim;
        let h = config.hidden_dim;
        let v = config.vocab.table_size();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = Tensor::uniform("embed", &[v, e], e, &mut rng);
        let mut cells = Vec::new();
        for layer in 0..LAYERS {
            let input = if layer == 0 { e } else { 2 * h };
            let mut dirs = Vec::new();
            for dir in ["fwd", "bwd"] {
                let prefix = format!("l{layer}.{dir}");
                dirs.push(CellParams {
                    wx: Tensor::uniform(&format!("{prefix}.wx"), &[4 * h, input], input, &mut rng),
                    wh: Tensor::uniform(&format!("{prefix}.wh"), &[4 * h, h], h, &mut rng),
                    b: Tensor::uniform(&format!("{prefix}.b"), &[4 * h], input, &mut rng),
                });
            }
            cells.push(dirs);
        }
        Ok(BiLstmEncoder {
            vocab: config.vocab.clone(),
            embed,
            cells,
            hidden: h,
        })
    }

    fn embed_row(&self, id: usize) -> &[f64] {
        let e = self.embed.shape[1];
        &self.embed.data[id * e..(id + 1) * e]
    }

    /// Run one direction over `xs` (sentence order); `reverse` flips the
    /// processing order. Caches come back in processing order.
    fn run_direction(&self, params: &CellParams, xs: &[Vec<f64>], reverse: bool) -> DirTrace {
        let h = self.hidden;
        let n = xs.len();
        let mut caches: Vec<LstmStepCache> = Vec::with_capacity(n);
        let zeros = vec![0.0; h];
        for step in 0..n {
            let t = if reverse { n - 1 - step } else { step };
            let (h_prev, c_prev) = match caches.last() {
                Some(prev) => (prev.h.as_slice(), prev.c.as_slice()),
                None => (zeros.as_slice(), zeros.as_slice()),
            };
            caches.push(lstm_step_forward(
                &params.wx, &params.wh, &params.b, &xs[t], h_prev, c_prev,
            ));
        }
        DirTrace { caches }
    }

    /// Backprop one direction. `dh_ext[t]` is the gradient arriving at the
    /// hidden state of sentence position t; `dxs` accumulates input grads.
    fn backprop_direction(
        &self,
        params: &CellParams,
        xs: &[Vec<f64>],
        trace: &DirTrace,
        reverse: bool,
        dh_ext: &[Vec<f64>],
        grads: &mut GradStore,
        dxs: &mut [Vec<f64>],
    ) {
        let h = self.hidden;
        let n = xs.len();
        let zeros = vec![0.0; h];
        let mut dh_carry = vec![0.0; h];
        let mut dc_carry = vec![0.0; h];
        for step in (0..n).rev() {
            let t = if reverse { n - 1 - step } else { step };
            let cache = &trace.caches[step];
            let h_prev = if step == 0 {
                zeros.as_slice()
            } else {
                trace.caches[step - 1].h.as_slice()
            };
            let mut dh = dh_ext[t].clone();
            for (a, b) in dh.iter_mut().zip(dh_carry.iter()) {
                *a += b;
            }
            let mut dh_prev = vec![0.0; h];
            let mut dc_prev = vec![0.0; h];
            lstm_step_backward(
                &params.wx,
                &params.wh,
                &params.b,
                &xs[t],
                h_prev,
                cache,
                &dh,
                &dc_carry,
                grads,
                &mut dxs[t],
                &mut dh_prev,
                &mut dc_prev,
            );
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
    }
}

impl Encoder for BiLstmEncoder {
    fn name(&self) -> &'static str {
        "bilstm"
    }

    fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    fn encode_traced(
        &self,
        chars: &[char],
    ) -> Result<(FeatureMatrix, Box<dyn EncoderTrace>), EncoderError> {
        if chars.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let n = chars.len();
        let h = self.hidden;
        let ids: Vec<usize> = chars.iter().map(|c| self.vocab.id(*c)).collect();
        let embeds: Vec<Vec<f64>> = ids.iter().map(|&id| self.embed_row(id).to_vec()).collect();

        let mut layer_inputs: Vec<Vec<Vec<f64>>> = vec![embeds];
        let mut dirs: Vec<Vec<DirTrace>> = Vec::new();
        for layer in 0..LAYERS {
            let xs = &layer_inputs[layer];
            let fwd = self.run_direction(&self.cells[layer][0], xs, false);
            let bwd = self.run_direction(&self.cells[layer][1], xs, true);
            // Concatenate per sentence position; backward caches are in
            // processing order, so position t sits at cache n-1-t.
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
            for t in 0..n {
                let mut row = Vec::with_capacity(2 * h);
                row.extend_from_slice(&fwd.caches[t].h);
                row.extend_from_slice(&bwd.caches[n - 1 - t].h);
                out.push(row);
            }
            dirs.push(vec![fwd, bwd]);
            layer_inputs.push(out);
        }

        let mut features = FeatureMatrix::zeros(n, 2 * h);
        for t in 0..n {
            features.row_mut(t).copy_from_slice(&layer_inputs[LAYERS][t]);
        }
        let trace = BiLstmTrace {
            ids,
            layer_inputs,
            dirs,
        };
        Ok((features, Box::new(trace)))
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
            .downcast_ref::<BiLstmTrace>()
            .expect("trace type mismatch");
        let n = trace.ids.len();
        let h = self.hidden;

        // Gradient flowing into each layer's output rows, top-down.
        let mut d_out: Vec<Vec<f64>> = (0..n).map(|t| grad_out.row(t).to_vec()).collect();
        for layer in (0..LAYERS).rev() {
            let xs = &trace.layer_inputs[layer];
            let input_dim = xs[0].len();
            let mut dxs: Vec<Vec<f64>> = vec![vec![0.0; input_dim]; n];
            for (dir_idx, reverse) in [(0usize, false), (1usize, true)] {
                let dh_ext: Vec<Vec<f64>> = d_out
                    .iter()
                    .map(|row| row[dir_idx * h..(dir_idx + 1) * h].to_vec())
                    .collect();
                self.backprop_direction(
                    &self.cells[layer][dir_idx],
                    xs,
                    &trace.dirs[layer][dir_idx],
                    reverse,
                    &dh_ext,
                    grads,
                    &mut dxs,
                );
            }
            d_out = dxs;
        }

        // d_out now carries embedding-row gradients.
        let e = self.embed.shape[1];
        let d_embed = grads.grad_mut(&self.embed);
        for (t, &id) in trace.ids.iter().enumerate() {
            for (acc, v) in d_embed[id * e..(id + 1) * e].iter_mut().zip(&d_out[t]) {
                *acc += v;
            }
        }
    }

    fn visit_tensors(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.embed);
        for layer in &self.cells {
            for cell in layer {
                f(&cell.wx);
                f(&cell.wh);
                f(&cell.b);
            }
        }
    }

    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.embed);
        for layer in &mut self.cells {
            for cell in layer {
                f(&mut cell.wx);
                f(&mut cell.wh);
                f(&mut cell.b);
            }
        }
    }
}
