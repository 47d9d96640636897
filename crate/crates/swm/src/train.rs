//! Training loop and inference for the window model: per-sentence SGD
//! over the joint proposal/type loss, and anchor-to-phrase prediction
//! with two offset-correction stages.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{flatten_phrases, AnnotatedSentence, Span};
use crate::decoder::{decode_forest, DecodeError, ScoredPhrase};
use crate::encoder::{pool_window, pool_window_backward, EncoderError, FeatureMatrix};
use crate::heads::{LossError, BACKGROUND_CLASS, PHRASE_CLASS};
use crate::model::SwmModel;
use crate::nn::GradStore;
use crate::windowing::{
    apply_offset, index_to_span, label_anchors, sample_training_anchors, Offset,
};

fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    20
}
fn default_neg_ratio() -> f64 {
    2.0
}
fn default_lambda() -> f64 {
    1.0
}
fn default_threshold() -> f64 {
    0.5
}
fn default_embed_dim() -> usize {
    32
}
fn default_hidden_dim() -> usize {
    64
}
fn default_encoder() -> String {
    "bilstm".to_string()
}

/// Hyperparameters; JSON-loadable, every field has a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub neg_ratio: f64,
    pub lambda_offset: f64,
    pub threshold: f64,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder: String,
    /// Stop early once dev F1 reaches this value (requires a dev set).
    pub early_stop_f1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            lr: default_lr(),
            epochs: default_epochs(),
            neg_ratio: default_neg_ratio(),
            lambda_offset: default_lambda(),
            threshold: default_threshold(),
            seed: 0,
            embed_dim: default_embed_dim(),
            hidden_dim: default_hidden_dim(),
            encoder: default_encoder(),
            early_stop_f1: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("non-finite loss at sentence {sentence}")]
    NonFiniteLoss { sentence: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Per-epoch mean losses and timing.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub mean_total: f64,
    pub mean_proposal_cls: f64,
    pub mean_proposal_off: f64,
    pub mean_type_cls: f64,
    pub mean_type_off: f64,
    pub sentences: usize,
    pub seconds: f64,
}

fn sentence_seed(base: u64, epoch: usize, index: usize) -> u64 {
    base ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (index as u64).wrapping_mul(0x85eb_ca6b_b2ae_35ed)
}

/// One pass over the corpus: per sentence, encode, label anchors, sample
/// per `neg_ratio`, accumulate the joint loss gradient, and apply one SGD
/// update. Deterministic given the config seed.
pub fn train_epoch(
    corpus: &[AnnotatedSentence],
    model: &mut SwmModel,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let start = Instant::now();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sentence_seed(config.seed, epoch, usize::MAX));
    order.shuffle(&mut rng);

    let mut sums = [0.0f64; 4];
    let mut grads = GradStore::new();
    for &idx in &order {
        let sentence = &corpus[idx];
        if sentence.is_empty() {
            continue;
        }
        let n = sentence.len();
        let (features, trace) = model.encoder.encode_traced(&sentence.chars)?;
        let gold = flatten_phrases(sentence);
        let labels = label_anchors(&gold, n);
        let sampled = sample_training_anchors(
            &labels,
            n,
            config.neg_ratio,
            sentence_seed(config.seed, epoch, idx),
        );

        grads.clear();
        let mut d_features = FeatureMatrix::zeros(features.rows, features.dim);
        let mut total = 0.0;
        for &anchor_idx in &sampled {
            let anchor = index_to_span(anchor_idx, n).expect("sampled index in range");
            let x = pool_window(&features, &anchor)?;
            let mut dx = vec![0.0; x.len()];
            let (gold_class, off_target, label) = match labels.get(&anchor_idx) {
                Some(label) => (
                    PHRASE_CLASS,
                    Some([
                        label.target_offset.dx as f64,
                        label.target_offset.dy as f64,
                    ]),
                    Some(label),
                ),
                None => (BACKGROUND_CLASS, None, None),
            };
            let (cls_l, off_l) = model.heads.proposal_backward(
                &x,
                gold_class,
                off_target,
                config.lambda_offset,
                &mut grads,
                &mut dx,
            )?;
            pool_window_backward(&anchor, &dx, &mut d_features);
            sums[0] += cls_l;
            sums[1] += off_l;
            total += cls_l + config.lambda_offset * off_l;

            // Type head trains on positives, pooled at the corrected
            // (gold) span; its residual offset target is zero.
            if let Some(label) = label {
                let corrected = apply_offset(&anchor, &label.target_offset, n)
                    .expect("target offset recovers a valid span");
                let x2 = pool_window(&features, &corrected)?;
                let mut dx2 = vec![0.0; x2.len()];
                let (tcls, toff) = model.heads.type_backward(
                    &x2,
                    label.gold_type,
                    [0.0, 0.0],
                    config.lambda_offset,
                    &mut grads,
                    &mut dx2,
                )?;
                pool_window_backward(&corrected, &dx2, &mut d_features);
                sums[2] += tcls;
                sums[3] += toff;
                total += tcls + config.lambda_offset * toff;
            }
        }
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { sentence: idx });
        }
        model
            .encoder
            .backward(&sentence.chars, trace.as_ref(), &d_features, &mut grads);

        let lr = config.lr;
        model.visit_tensors_mut(&mut |t| {
            if let Some(g) = grads.grad(&t.name) {
                for (w, gi) in t.data.iter_mut().zip(g.iter()) {
                    *w -= lr * gi;
                }
            }
        });
    }

    let count = corpus.len() as f64;
    Ok(EpochStats {
        mean_total: (sums[0] + config.lambda_offset * sums[1] + sums[2]
            + config.lambda_offset * sums[3])
            / count,
        mean_proposal_cls: sums[0] / count,
        mean_proposal_off: sums[1] / count,
        mean_type_cls: sums[2] / count,
        mean_type_off: sums[3] / count,
        sentences: corpus.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Round half away from zero, then clamp to {-1, 0, 1}.
pub fn round_offset(dx_hat: f64, dy_hat: f64) -> Offset {
    let clamp = |v: f64| -> i32 { (v.round() as i64).clamp(-1, 1) as i32 };
    Offset::new(clamp(dx_hat), clamp(dy_hat))
}

/// Score every anchor; survivors of the objectness threshold get a first
/// boundary correction, a type from the corrected window, and a second
/// bounded refinement. Invalid corrections are dropped.
pub fn predict_sentence(
    chars: &[char],
    model: &SwmModel,
    threshold: f64,
) -> Result<Vec<ScoredPhrase>, TrainError> {
    if chars.is_empty() {
        return Err(TrainError::Encoder(EncoderError::EmptyInput));
    }
    let n = chars.len();
    let features = model.encoder.encode(chars)?;
    let mut out = Vec::new();
    for x in 1..=n {
        for y in x..=n {
            let anchor = Span::new(x, y);
            let pooled = pool_window(&features, &anchor)?;
            let prop = model.heads.proposal_forward(&pooled)?;
            if prop.p_phrase < threshold {
                continue;
            }
            let corrected = match apply_offset(&anchor, &round_offset(prop.dx_hat, prop.dy_hat), n)
            {
                Some(s) => s,
                None => continue,
            };
            let pooled2 = pool_window(&features, &corrected)?;
            let typed = model.heads.type_forward(&pooled2)?;
            let (kind, p_type) = typed.best();
            let refined =
                match apply_offset(&corrected, &round_offset(typed.dx2_hat, typed.dy2_hat), n) {
                    Some(s) => s,
                    None => continue,
                };
            out.push(ScoredPhrase {
                span: refined,
                kind,
                score: prop.p_phrase * p_type,
            });
        }
    }
    Ok(out)
}

/// Full pipeline: proposals, dedup, greedy forest selection, tree build.
pub fn predict_forest(
    chars: &[char],
    model: &SwmModel,
    threshold: f64,
) -> Result<AnnotatedSentence, TrainError> {
    let props = predict_sentence(chars, model, threshold)?;
    let (sentence, _warnings) = decode_forest(&props, chars)?;
    Ok(sentence)
}

/// Micro phrase-level exact-match F1 of the model over a corpus.
pub fn corpus_f1(
    corpus: &[AnnotatedSentence],
    model: &SwmModel,
    threshold: f64,
) -> Result<f64, TrainError> {
    let mut pred = Vec::with_capacity(corpus.len());
    let mut gold = Vec::with_capacity(corpus.len());
    for s in corpus {
        pred.push(flatten_phrases(&predict_forest(&s.chars, model, threshold)?));
        gold.push(flatten_phrases(s));
    }
    Ok(crate::metrics::evaluate(&pred, &gold)
        .expect("parallel lists")
        .micro
        .f1)
}
