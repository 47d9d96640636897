//! Proposal head (phrase/background + boundary offsets), type head
//! (7-way + refined offsets), and the two losses: cross-entropy for
//! classification, RMSE for offset regression.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::annotation::PhraseType;
use crate::nn::ops::{linear_backward, linear_forward, softmax};
use crate::nn::{GradStore, Tensor};

pub const NUM_TYPES: usize = 7;
/// Class index of "phrase" in the 2-way proposal softmax.
pub const PHRASE_CLASS: usize = 0;
pub const BACKGROUND_CLASS: usize = 1;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LossError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Cross-entropy against a one-hot gold: -log p[gold].
pub fn classification_loss(p: &[f64], gold_class: usize) -> Result<f64, LossError> {
    if gold_class >= p.len() {
        return Err(LossError::DimensionMismatch {
            expected: p.len(),
            got: gold_class,
        });
    }
    Ok(-p[gold_class].max(PROB_FLOOR).ln())
}

/// Root-mean-square error between prediction and target.
pub fn offset_loss(y_hat: &[f64], y: &[f64]) -> Result<f64, LossError> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(LossError::DimensionMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    let m = y.len() as f64;
    let sq: f64 = y_hat.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / m).sqrt())
}

/// Gradient of [`offset_loss`] with respect to `y_hat`. Zero at the
/// (non-differentiable) exact-match point.
pub fn offset_loss_grad(y_hat: &[f64], y: &[f64]) -> Vec<f64> {
    let m = y.len() as f64;
    let sq: f64 = y_hat.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let loss = (sq / m).sqrt();
    if loss <= 0.0 {
        return vec![0.0; y.len()];
    }
    y_hat
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) / (m * loss))
        .collect()
}

/// One anchor's proposal-head output: 2-way objectness plus raw offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalOutput {
    pub p_phrase: f64,
    pub p_background: f64,
    pub dx_hat: f64,
    pub dy_hat: f64,
}

/// Type-head output: 7-way distribution plus a second offset refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeOutput {
    pub probs: Vec<f64>,
    pub dx2_hat: f64,
    pub dy2_hat: f64,
}

impl TypeOutput {
    pub fn best(&self) -> (PhraseType, f64) {
        let (idx, p) = self
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        (PhraseType::from_code(idx).unwrap(), *p)
    }
}

/// Parameters of both heads over a 3D-wide pooled window vector.
pub struct Heads {
    pub prop_w_cls: Tensor,
    pub prop_b_cls: Tensor,
    pub prop_w_off: Tensor,
    pub prop_b_off: Tensor,
    pub type_w_cls: Tensor,
    pub type_b_cls: Tensor,
    pub type_w_off: Tensor,
    pub type_b_off: Tensor,
    input_dim: usize,
}

impl Heads {
    pub fn new(feature_dim: usize, seed: u64) -> Heads {
        let input = 3 * feature_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Heads {
            prop_w_cls: Tensor::uniform("prop.w_cls", &[2, input], input, &mut rng),
            prop_b_cls: Tensor::uniform("prop.b_cls", &[2], input, &mut rng),
            prop_w_off: Tensor::uniform("prop.w_off", &[2, input], input, &mut rng),
            prop_b_off: Tensor::uniform("prop.b_off", &[2], input, &mut rng),
            type_w_cls: Tensor::uniform("type.w_cls", &[NUM_TYPES, input], input, &mut rng),
            type_b_cls: Tensor::uniform("type.b_cls", &[NUM_TYPES], input, &mut rng),
            type_w_off: Tensor::uniform("type.w_off", &[2, input], input, &mut rng),
            type_b_off: Tensor::uniform("type.b_off", &[2], input, &mut rng),
            input_dim: input,
        }
    }

    /// Zero-weight heads (softmax of zeros everywhere); test helper.
    pub fn zeros(feature_dim: usize) -> Heads {
        let input = 3 * feature_dim;
        Heads {
            prop_w_cls: Tensor::zeros("prop.w_cls", &[2, input]),
            prop_b_cls: Tensor::zeros("prop.b_cls", &[2]),
            prop_w_off: Tensor::zeros("prop.w_off", &[2, input]),
            prop_b_off: Tensor::zeros("prop.b_off", &[2]),
            type_w_cls: Tensor::zeros("type.w_cls", &[NUM_TYPES, input]),
            type_b_cls: Tensor::zeros("type.b_cls", &[NUM_TYPES]),
            type_w_off: Tensor::zeros("type.w_off", &[2, input]),
            type_b_off: Tensor::zeros("type.b_off", &[2]),
            input_dim: input,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn check_input(&self, x: &[f64]) -> Result<(), LossError> {
        if x.len() != self.input_dim {
            return Err(LossError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn proposal_forward(&self, x: &[f64]) -> Result<ProposalOutput, LossError> {
        self.check_input(x)?;
        let mut logits = vec![0.0; 2];
        linear_forward(&self.prop_w_cls, &self.prop_b_cls, x, &mut logits);
        let p = softmax(&logits);
        let mut off = vec![0.0; 2];
        linear_forward(&self.prop_w_off, &self.prop_b_off, x, &mut off);
        Ok(ProposalOutput {
            p_phrase: p[PHRASE_CLASS],
            p_background: p[BACKGROUND_CLASS],
            dx_hat: off[0],
            dy_hat: off[1],
        })
    }

    pub fn type_forward(&self, x: &[f64]) -> Result<TypeOutput, LossError> {
        self.check_input(x)?;
        let mut logits = vec![0.0; NUM_TYPES];
        linear_forward(&self.type_w_cls, &self.type_b_cls, x, &mut logits);
        let probs = softmax(&logits);
        let mut off = vec![0.0; 2];
        linear_forward(&self.type_w_off, &self.type_b_off, x, &mut off);
        Ok(TypeOutput {
            probs,
            dx2_hat: off[0],
            dy2_hat: off[1],
        })
    }

    /// Proposal-head loss and gradients for one anchor.
    ///
    /// Returns (classification loss, offset loss). The offset branch only
    /// contributes when `off_target` is given (positive anchors), scaled
    /// by `lambda`. `dx` accumulates the window-vector gradient.
    pub fn proposal_backward(
        &self,
        x: &[f64],
        gold_class: usize,
        off_target: Option<[f64; 2]>,
        lambda: f64,
        grads: &mut GradStore,
        dx: &mut [f64],
    ) -> Result<(f64, f64), LossError> {
        self.check_input(x)?;
        let out = self.proposal_forward(x)?;
        let p = [out.p_phrase, out.p_background];
        let cls_loss = classification_loss(&p, gold_class)?;
        // Softmax + CE: d logits = p - onehot.
        let mut dlogits = [p[0], p[1]];
        dlogits[gold_class] -= 1.0;
        linear_backward(&self.prop_w_cls, &self.prop_b_cls, x, &dlogits, grads, Some(dx));

        let mut off_l = 0.0;
        if let Some(target) = off_target {
            let pred = [out.dx_hat, out.dy_hat];
            off_l = offset_loss(&pred, &target)?;
            let mut doff = offset_loss_grad(&pred, &target);
            for g in doff.iter_mut() {
                *g *= lambda;
            }
            linear_backward(&self.prop_w_off, &self.prop_b_off, x, &doff, grads, Some(dx));
        }
        Ok((cls_loss, off_l))
    }

    /// Type-head loss and gradients for one positive window.
    pub fn type_backward(
        &self,
        x: &[f64],
        gold_type: PhraseType,
        off_target: [f64; 2],
        lambda: f64,
        grads: &mut GradStore,
        dx: &mut [f64],
    ) -> Result<(f64, f64), LossError> {
        self.check_input(x)?;
        let out = self.type_forward(x)?;
        let cls_loss = classification_loss(&out.probs, gold_type.code())?;
        let mut dlogits = out.probs.clone();
        dlogits[gold_type.code()] -= 1.0;
        linear_backward(&self.type_w_cls, &self.type_b_cls, x, &dlogits, grads, Some(dx));

        let pred = [out.dx2_hat, out.dy2_hat];
        let off_l = offset_loss(&pred, &off_target)?;
        let mut doff = offset_loss_grad(&pred, &off_target);
        for g in doff.iter_mut() {
            *g *= lambda;
        }
        linear_backward(&self.type_w_off, &self.type_b_off, x, &doff, grads, Some(dx));
        Ok((cls_loss, off_l))
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(&Tensor)) {
        f(&self.prop_w_cls);
        f(&self.prop_b_cls);
        f(&self.prop_w_off);
        f(&self.prop_b_off);
        f(&self.type_w_cls);
        f(&self.type_b_cls);
        f(&self.type_w_off);
        f(&self.type_b_off);
    }

    pub fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        f(&mut self.prop_w_cls);
        f(&mut self.prop_b_cls);
        f(&mut self.prop_w_off);
        f(&mut self.prop_b_off);
        f(&mut self.type_w_cls);
        f(&mut self.type_b_cls);
        f(&mut self.type_w_off);
        f(&mut self.type_b_off);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ce_perfect_prediction() {
        assert_eq!(classification_loss(&[1.0, 0.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn ce_analytic_values() {
        let l = classification_loss(&[0.8, 0.2], 0).unwrap();
        assert!((l - 0.22314355131420976).abs() < 1e-12);
        let uniform = vec![1.0 / 7.0; 7];
        for gold in 0..7 {
            let l = classification_loss(&uniform, gold).unwrap();
            assert!((l - (7.0f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ce_dimension_mismatch() {
        assert!(classification_loss(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn rmse_analytic_values() {
        assert_eq!(offset_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        let l = offset_loss(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((l - (0.5f64).sqrt()).abs() < 1e-12);
        let l = offset_loss(&[1.0, -1.0], &[-1.0, 1.0]).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        assert!(offset_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rmse_sign_flip_symmetry() {
        let a = offset_loss(&[0.3, -0.7], &[1.0, 0.0]).unwrap();
        let b = offset_loss(&[-0.3, 0.7], &[-1.0, 0.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_heads_give_uniform_outputs() {
        let heads = Heads::zeros(4);
        let x = vec![0.7; 12];
        let p = heads.proposal_forward(&x).unwrap();
        assert!((p.p_phrase - 0.5).abs() < 1e-12);
        assert!((p.p_background - 0.5).abs() < 1e-12);
        assert_eq!(p.dx_hat, 0.0);
        assert_eq!(p.dy_hat, 0.0);
        let t = heads.type_forward(&x).unwrap();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for pr in &t.probs {
            assert!((pr - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probs_sum_to_one() {
        let heads = Heads::new(4, 9);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.31).cos()).collect();
        let p = heads.proposal_forward(&x).unwrap();
        assert!((p.p_phrase + p.p_background - 1.0).abs() < 1e-9);
        let t = heads.type_forward(&x).unwrap();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let heads = Heads::new(4, 9);
        assert!(heads.proposal_forward(&[0.0; 5]).is_err());
        assert!(heads.type_forward(&[0.0; 5]).is_err());
    }

    /// Finite-difference check over every head tensor and the input.
    #[test]
    fn head_gradcheck() {
        let d = 4;
        let mut heads = Heads::new(d, 21);
        let x: Vec<f64> = (0..3 * d).map(|i| ((i as f64) * 0.43).sin()).collect();
        let lambda = 0.7;
        let gold_class = PHRASE_CLASS;
        let off_target = [1.0, 0.0];
        let gold_type = PhraseType::Quantity;
        let type_target = [0.0, -1.0];

        let loss_of = |heads: &Heads| -> f64 {
            let p = heads.proposal_forward(&x).unwrap();
            let probs = [p.p_phrase, p.p_background];
            let mut l = classification_loss(&probs, gold_class).unwrap()
                + lambda * offset_loss(&[p.dx_hat, p.dy_hat], &off_target).unwrap();
            let t = heads.type_forward(&x).unwrap();
            l += classification_loss(&t.probs, gold_type.code()).unwrap()
                + lambda * offset_loss(&[t.dx2_hat, t.dy2_hat], &type_target).unwrap();
            l
        };

        let mut grads = GradStore::new();
        let mut dx = vec![0.0; 3 * d];
        heads
            .proposal_backward(&x, gold_class, Some(off_target), lambda, &mut grads, &mut dx)
            .unwrap();
        heads
            .type_backward(&x, gold_type, type_target, lambda, &mut grads, &mut dx)
            .unwrap();

        let mut names = Vec::new();
        heads.visit_tensors(&mut |t| names.push((t.name.clone(), t.len())));
        let h = 1e-4;
        for (tname, len) in names {
            let analytic = grads.grad(&tname).unwrap().to_vec();
            for idx in 0..len {
                let mut saved = 0.0;
                heads.visit_tensors_mut(&mut |t| {
                    if t.name == tname {
                        saved = t.data[idx];
                        t.data[idx] = saved + h;
                    }
                });
                let up = loss_of(&heads);
                heads.visit_tensors_mut(&mut |t| {
                    if t.name == tname {
                        t.data[idx] = saved - h;
                    }
                });
                let down = loss_of(&heads);
                heads.visit_tensors_mut(&mut |t| {
                    if t.name == tname {
                        t.data[idx] = saved;
                    }
                });
                let numeric = (up - down) / (2.0 * h);
                let denom = numeric.abs().max(analytic[idx].abs()).max(1e-6);
                assert!(
                    (numeric - analytic[idx]).abs() / denom < 1e-3,
                    "{tname}[{idx}]: numeric {numeric} vs analytic {}",
                    analytic[idx]
                );
            }
        }

        // Input gradient too.
        let mut x_var = x.clone();
        for idx in 0..x_var.len() {
            let orig = x_var[idx];
            let eval = |heads: &Heads, xv: &[f64]| -> f64 {
                let p = heads.proposal_forward(xv).unwrap();
                let probs = [p.p_phrase, p.p_background];
                let mut l = classification_loss(&probs, gold_class).unwrap()
                    + lambda * offset_loss(&[p.dx_hat, p.dy_hat], &off_target).unwrap();
                let t = heads.type_forward(xv).unwrap();
                l += classification_loss(&t.probs, gold_type.code()).unwrap()
                    + lambda * offset_loss(&[t.dx2_hat, t.dy2_hat], &type_target).unwrap();
                l
            };
            x_var[idx] = orig + h;
            let up = eval(&heads, &x_var);
            x_var[idx] = orig - h;
            let down = eval(&heads, &x_var);
            x_var[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(dx[idx].abs()).max(1e-6);
            assert!(
                (numeric - dx[idx]).abs() / denom < 1e-3,
                "dx[{idx}]: numeric {numeric} vs analytic {}",
                dx[idx]
            );
        }
    }
}
