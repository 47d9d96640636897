//! End-to-end baseline: the same encoder contract with a per-character
//! softmax over BIO tags. Flat by construction; it exists so the window
//! model can be compared against a conventional tagger on identical data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::{AnnotatedSentence, PhraseType, Span};
use crate::encoder::{build_encoder, Encoder, EncoderConfig, FeatureMatrix};
use crate::heads::classification_loss;
use crate::metrics::{bio_to_spans, project_bio, BioLevel, BioTag};
use crate::nn::ops::{linear_backward, linear_forward, softmax};
use crate::nn::{GradStore, Tensor};
use crate::train::TrainError;

/// O + B/I per phrase type.
pub const NUM_TAGS: usize = 1 + 2 * 7;

pub fn tag_index(tag: BioTag) -> usize {
    match tag {
        BioTag::Outside => 0,
        BioTag::Begin(t) => 1 + 2 * t.code(),
        BioTag::Inside(t) => 2 + 2 * t.code(),
    }
}

pub fn index_tag(idx: usize) -> BioTag {
    if idx == 0 {
        BioTag::Outside
    } else {
        let t = PhraseType::from_code((idx - 1) / 2).unwrap();
        if (idx - 1) % 2 == 0 {
            BioTag::Begin(t)
        } else {
            BioTag::Inside(t)
        }
    }
}

pub struct BioTagger {
    pub encoder: Box<dyn Encoder>,
    pub w: Tensor,
    pub b: Tensor,
}

impl BioTagger {
    pub fn init(
        encoder_name: &str,
        config: &EncoderConfig,
        seed: u64,
    ) -> Result<BioTagger, TrainError> {
        let encoder = build_encoder(encoder_name, config, seed)?;
        let d = config.output_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xb10_7a99));
        Ok(BioTagger {
            encoder,
            w: Tensor::uniform("bio.w", &[NUM_TAGS, d], d, &mut rng),
            b: Tensor::uniform("bio.b", &[NUM_TAGS], d, &mut rng),
        })
    }

    /// One epoch of per-character cross-entropy SGD against the
    /// outermost BIO projection of the gold trees.
    pub fn train_epoch(
        &mut self,
        corpus: &[AnnotatedSentence],
        lr: f64,
        seed: u64,
        epoch: usize,
    ) -> Result<f64, TrainError> {
        if corpus.is_empty() {
            return Err(TrainError::EmptyCorpus);
        }
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        order.shuffle(&mut rng);

        let mut grads = GradStore::new();
        let mut total = 0.0;
        for &idx in &order {
            let sentence = &corpus[idx];
            if sentence.is_empty() {
                continue;
            }
            let gold_tags = project_bio(sentence, BioLevel::Outermost);
            let (features, trace) = self.encoder.encode_traced(&sentence.chars)?;
            grads.clear();
            let mut d_features = FeatureMatrix::zeros(features.rows, features.dim);
            let mut loss = 0.0;
            for (t, tag) in gold_tags.iter().enumerate() {
                let x = features.row(t);
                let mut logits = vec![0.0; NUM_TAGS];
                linear_forward(&self.w, &self.b, x, &mut logits);
                let probs = softmax(&logits);
                let gold = tag_index(*tag);
                loss += classification_loss(&probs, gold)?;
                let mut dlogits = probs;
                dlogits[gold] -= 1.0;
                linear_backward(
                    &self.w,
                    &self.b,
                    x,
                    &dlogits,
                    &mut grads,
                    Some(d_features.row_mut(t)),
                );
            }
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { sentence: idx });
            }
            total += loss / sentence.len() as f64;
            self.encoder
                .backward(&sentence.chars, trace.as_ref(), &d_features, &mut grads);
            let apply = |t: &mut Tensor, grads: &GradStore| {
                if let Some(g) = grads.grad(&t.name) {
                    for (w, gi) in t.data.iter_mut().zip(g.iter()) {
                        *w -= lr * gi;
                    }
                }
            };
            self.encoder.visit_tensors_mut(&mut |t| apply(t, &grads));
            apply(&mut self.w, &grads);
            apply(&mut self.b, &grads);
        }
        Ok(total / corpus.len() as f64)
    }

    /// Argmax tag per character (illegal I runs repaired downstream).
    pub fn predict_tags(&self, chars: &[char]) -> Result<Vec<BioTag>, TrainError> {
        let features = self.encoder.encode(chars)?;
        let mut tags = Vec::with_capacity(chars.len());
        for t in 0..chars.len() {
            let mut logits = vec![0.0; NUM_TAGS];
            linear_forward(&self.w, &self.b, features.row(t), &mut logits);
            let best = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            tags.push(index_tag(best));
        }
        Ok(tags)
    }

    /// Flat typed spans decoded from the predicted tag sequence.
    pub fn predict_spans(&self, chars: &[char]) -> Result<Vec<(Span, PhraseType)>, TrainError> {
        Ok(bio_to_spans(&self.predict_tags(chars)?))
    }
}
