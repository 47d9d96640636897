//! Forward/backward primitives: dense matvec, softmax, and an LSTM cell.

use crate::nn::{GradStore, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y = W x + b, with W stored row-major as [rows, cols].
pub fn linear_forward(w: &Tensor, b: &Tensor, x: &[f64], out: &mut [f64]) {
    let rows = w.shape[0];
    let cols = w.shape[1];
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &w.data[r * cols..(r + 1) * cols];
        let mut acc = b.data[r];
        for (wi, xi) in row.iter().zip(x.iter()) {
            acc += wi * xi;
        }
        out[r] = acc;
    }
}

/// Accumulates dW, db and (optionally) dx for `y = W x + b`.
pub fn linear_backward(
    w: &Tensor,
    b: &Tensor,
    x: &[f64],
    dy: &[f64],
    grads: &mut GradStore,
    dx: Option<&mut [f64]>,
) {
    let rows = w.shape[0];
    let cols = w.shape[1];
    {
        let dw = grads.grad_mut(w);
        for r in 0..rows {
            let dyr = dy[r];
            if dyr == 0.0 {
                continue;
            }
            let row = &mut dw[r * cols..(r + 1) * cols];
            for (di, xi) in row.iter_mut().zip(x.iter()) {
                *di += dyr * xi;
            }
        }
    }
    {
        let db = grads.grad_mut(b);
        for (di, dyr) in db.iter_mut().zip(dy.iter()) {
            *di += dyr;
        }
    }
    if let Some(dx) = dx {
        for r in 0..rows {
            let dyr = dy[r];
            if dyr == 0.0 {
                continue;
            }
            let row = &w.data[r * cols..(r + 1) * cols];
            for (dxi, wi) in dx.iter_mut().zip(row.iter()) {
                *dxi += dyr * wi;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|v| v / sum).collect()
}

/// One LSTM step's saved activations, needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub h: Vec<f64>,
}

/// LSTM cell forward. Gate order in the stacked weight matrices: i, f, g, o.
/// `wx`: [4H, in], `wh`: [4H, H], `b`: [4H].
pub fn lstm_step_forward(
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> LstmStepCache {
    let hh = wh.shape[1];
    let mut z = vec![0.0; 4 * hh];
    linear_forward(wx, b, x, &mut z);
    // Add the recurrent contribution (b was already added once).
    let cols = hh;
    for r in 0..4 * hh {
        let row = &wh.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wi, hi) in row.iter().zip(h_prev.iter()) {
            acc += wi * hi;
        }
        z[r] += acc;
    }
    let mut cache = LstmStepCache {
        i: vec![0.0; hh],
        f: vec![0.0; hh],
        g: vec![0.0; hh],
        o: vec![0.0; hh],
        c: vec![0.0; hh],
        c_prev: c_prev.to_vec(),
        h: vec![0.0; hh],
    };
    for k in 0..hh {
        cache.i[k] = sigmoid(z[k]);
        cache.f[k] = sigmoid(z[hh + k]);
        cache.g[k] = z[2 * hh + k].tanh();
        cache.o[k] = sigmoid(z[3 * hh + k]);
        cache.c[k] = cache.f[k] * c_prev[k] + cache.i[k] * cache.g[k];
        cache.h[k] = cache.o[k] * cache.c[k].tanh();
    }
    cache
}

/// LSTM cell backward. Consumes dh (gradient on this step's h) plus the
/// carried dc, produces dx, dh_prev, and the carried dc_prev, and
/// accumulates parameter gradients.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
    x: &[f64],
    h_prev: &[f64],
    cache: &LstmStepCache,
    dh: &[f64],
    dc_carry: &[f64],
    grads: &mut GradStore,
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let hh = cache.h.len();
    let mut dz = vec![0.0; 4 * hh];
    for k in 0..hh {
        let tanh_c = cache.c[k].tanh();
        let do_ = dh[k] * tanh_c;
        let dc = dh[k] * cache.o[k] * (1.0 - tanh_c * tanh_c) + dc_carry[k];
        let di = dc * cache.g[k];
        let df = dc * cache.c_prev[k];
        let dg = dc * cache.i[k];
        dc_prev[k] = dc * cache.f[k];
        dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
        dz[hh + k] = df * cache.f[k] * (1.0 - cache.f[k]);
        dz[2 * hh + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
        dz[3 * hh + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
    }
    linear_backward(wx, b, x, &dz, grads, Some(dx));
    // Recurrent weights: dWh += dz * h_prev^T, dh_prev += Wh^T dz.
    let cols = hh;
    {
        let dwh = grads.grad_mut(wh);
        for r in 0..4 * hh {
            let dzr = dz[r];
            if dzr == 0.0 {
                continue;
            }
            let row = &mut dwh[r * cols..(r + 1) * cols];
            for (di, hi) in row.iter_mut().zip(h_prev.iter()) {
                *di += dzr * hi;
            }
        }
    }
    for r in 0..4 * hh {
        let dzr = dz[r];
        if dzr == 0.0 {
            continue;
        }
        let row = &wh.data[r * cols..(r + 1) * cols];
        for (dhi, wi) in dh_prev.iter_mut().zip(row.iter()) {
            *dhi += dzr * wi;
        }
    }
}
