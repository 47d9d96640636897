//! Character-level feature extraction behind a pluggable contract.
//!
//! Every encoder maps a character sequence to an N x D feature matrix and
//! supports exact backpropagation through a trace captured on the forward
//! pass. Variants register by name; the reference implementation is the
//! two-layer bidirectional recurrent net (`"bilstm"`).

mod bilstm;
mod ffn;

use std::any::Any;
use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::Span;
use crate::nn::{GradStore, Tensor};

pub use bilstm::BiLstmEncoder;
pub use ffn::FfnEncoder;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
    #[error("span ({0},{1}) out of range for {2} rows")]
    OutOfRange(usize, usize, usize),
    #[error("unknown encoder '{0}'")]
    UnknownEncoder(String),
}

/// Character vocabulary. Unknown characters map to a dedicated OOV id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    map: BTreeMap<char, usize>,
}

impl Vocab {
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Vocab {
        let mut uniq: Vec<char> = chars.into_iter().collect();
        uniq.sort_unstable();
        uniq.dedup();
        Vocab {
            map: uniq.into_iter().enumerate().map(|(i, c)| (c, i)).collect(),
        }
    }

    pub fn id(&self, c: char) -> usize {
        *self.map.get(&c).unwrap_or(&self.map.len())
    }

    pub fn oov_id(&self) -> usize {
        self.map.len()
    }

    /// Table size including the OOV row.
    pub fn table_size(&self) -> usize {
        self.map.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab: Vocab,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.embed_dim < 1 || self.hidden_dim < 1 {
            return Err(EncoderError::InvalidConfig(
                "embed_dim and hidden_dim must be >= 1".into(),
            ));
        }
        if self.vocab.is_empty() {
            return Err(EncoderError::InvalidConfig("empty vocab".into()));
        }
        Ok(())
    }

    /// Output feature dimension shared by all encoders: D = 2H.
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// Row-major N x D feature matrix; row i holds the features of character i.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, dim: usize) -> FeatureMatrix {
        FeatureMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    /// 0-based row access.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Window feature vector: [f(start); f(end); mean(f(start..=end))], 3D wide.
pub fn pool_window(f: &FeatureMatrix, span: &Span) -> Result<Vec<f64>, EncoderError> {
    if !span.valid_for(f.rows) {
        return Err(EncoderError::OutOfRange(span.start, span.end, f.rows));
    }
    let d = f.dim;
    let mut out = vec![0.0; 3 * d];
    out[..d].copy_from_slice(f.row(span.start - 1));
    out[d..2 * d].copy_from_slice(f.row(span.end - 1));
    let count = span.len() as f64;
    for i in span.start - 1..span.end {
        let row = f.row(i);
        for (acc, v) in out[2 * d..].iter_mut().zip(row.iter()) {
            *acc += v / count;
        }
    }
    Ok(out)
}

/// Distributes a pooled-vector gradient back onto the feature rows.
pub fn pool_window_backward(span: &Span, d_pooled: &[f64], d_f: &mut FeatureMatrix) {
    let d = d_f.dim;
    let count = span.len() as f64;
    for (acc, v) in d_f.row_mut(span.start - 1).iter_mut().zip(&d_pooled[..d]) {
        *acc += v;
    }
    for (acc, v) in d_f.row_mut(span.end - 1).iter_mut().zip(&d_pooled[d..2 * d]) {
        *acc += v;
    }
    for i in span.start - 1..span.end {
        for (acc, v) in d_f.row_mut(i).iter_mut().zip(&d_pooled[2 * d..]) {
            *acc += v / count;
        }
    }
}

/// Opaque forward-pass trace handed back to [`Encoder::backward`].
pub trait EncoderTrace: Any {
    fn as_any(&self) -> &dyn Any;
}

/// The encoder contract: any map chars -> N x D with gradient support.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &'static str;
    fn output_dim(&self) -> usize;

    /// Inference-only forward.
    fn encode(&self, chars: &[char]) -> Result<FeatureMatrix, EncoderError> {
        self.encode_traced(chars).map(|(f, _)| f)
    }

    /// Forward pass that also captures everything backward needs.
    fn encode_traced(
        &self,
        chars: &[char],
    ) -> Result<(FeatureMatrix, Box<dyn EncoderTrace>), EncoderError>;

    /// Accumulate parameter gradients given the output-side gradient.
    fn backward(
        &self,
        chars: &[char],
        trace: &dyn EncoderTrace,
        grad_out: &FeatureMatrix,
        grads: &mut GradStore,
    );

    fn visit_tensors(&self, f: &mut dyn FnMut(&Tensor));
    fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&mut Tensor));
}

type EncoderFactory = fn(&EncoderConfig, u64) -> Result<Box<dyn Encoder>, EncoderError>;

static REGISTRY: Lazy<BTreeMap<&'static str, EncoderFactory>> = Lazy::new(|| {
    let mut m: BTreeMap<&'static str, EncoderFactory> = BTreeMap::new();
    m.insert("bilstm", |cfg, seed| {
        BiLstmEncoder::new(cfg, seed).map(|e| Box::new(e) as Box<dyn Encoder>)
    });
    m.insert("ffn", |cfg, seed| {
        FfnEncoder::new(cfg, seed).map(|e| Box::new(e) as Box<dyn Encoder>)
    });
    m
});

/// Construct a registered encoder by name with seeded parameters.
pub fn build_encoder(
    name: &str,
    config: &EncoderConfig,
    seed: u64,
) -> Result<Box<dyn Encoder>, EncoderError> {
    match REGISTRY.get(name) {
        Some(factory) => factory(config, seed),
        None => Err(EncoderError::UnknownEncoder(name.to_string())),
    }
}

pub fn encoder_names() -> Vec<&'static str> {
    REGISTRY.keys().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 4,
            hidden_dim: 4,
            vocab: Vocab::from_chars("我爱祖国".chars()),
        }
    }

    #[test]
    fn registry_lists_variants() {
        let names = encoder_names();
        assert!(names.contains(&"bilstm"));
        assert!(names.contains(&"ffn"));
        assert!(build_encoder("nope", &toy_config(), 0).is_err());
    }

    #[test]
    fn empty_vocab_rejected() {
        let cfg = EncoderConfig {
            embed_dim: 4,
            hidden_dim: 4,
            vocab: Vocab::from_chars("".chars()),
        };
        assert!(matches!(
            build_encoder("bilstm", &cfg, 0),
            Err(EncoderError::InvalidConfig(_))
        ));
    }

    #[test]
    fn output_shape_and_determinism() {
        for name in ["bilstm", "ffn"] {
            let cfg = toy_config();
            let enc = build_encoder(name, &cfg, 11).unwrap();
            let chars: Vec<char> = "我爱祖国".chars().collect();
            let f = enc.encode(&chars).unwrap();
            assert_eq!(f.rows, 4);
            assert_eq!(f.dim, cfg.output_dim());
            assert!(f.all_finite());
            let single = enc.encode(&['我']).unwrap();
            assert_eq!(single.rows, 1);

            let enc2 = build_encoder(name, &cfg, 11).unwrap();
            assert_eq!(enc2.encode(&chars).unwrap(), f);
        }
    }

    #[test]
    fn same_seed_bit_identical_params() {
        let cfg = toy_config();
        let a = build_encoder("bilstm", &cfg, 7).unwrap();
        let b = build_encoder("bilstm", &cfg, 7).unwrap();
        let mut ta = Vec::new();
        a.visit_tensors(&mut |t| ta.push(t.data.clone()));
        let mut tb = Vec::new();
        b.visit_tensors(&mut |t| tb.push(t.data.clone()));
        assert_eq!(ta, tb);
    }

    #[test]
    fn oov_maps_to_oov_embedding() {
        let cfg = toy_config();
        let enc = build_encoder("bilstm", &cfg, 3).unwrap();
        // Both unknown characters share the OOV embedding.
        let a = enc.encode(&['星']).unwrap();
        let b = enc.encode(&['海']).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_rejected() {
        let enc = build_encoder("bilstm", &toy_config(), 3).unwrap();
        assert!(matches!(enc.encode(&[]), Err(EncoderError::EmptyInput)));
    }

    #[test]
    fn bilstm_is_direction_sensitive() {
        let cfg = toy_config();
        let enc = build_encoder("bilstm", &cfg, 5).unwrap();
        let fwd: Vec<char> = "我爱祖国".chars().collect();
        let rev: Vec<char> = fwd.iter().rev().copied().collect();
        let a = enc.encode(&fwd).unwrap();
        let b = enc.encode(&rev).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn pool_window_singleton_and_pair() {
        let mut f = FeatureMatrix::zeros(2, 2);
        f.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        f.row_mut(1).copy_from_slice(&[3.0, 4.0]);
        let p = pool_window(&f, &Span::new(1, 1)).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let p = pool_window(&f, &Span::new(1, 2)).unwrap();
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 2.0, 3.0]);
        assert!(pool_window(&f, &Span::new(1, 3)).is_err());
    }

    #[test]
    fn pool_window_constant_mean() {
        let mut f = FeatureMatrix::zeros(3, 2);
        for i in 0..3 {
            f.row_mut(i).copy_from_slice(&[0.5, -0.5]);
        }
        let p = pool_window(&f, &Span::new(1, 3)).unwrap();
        assert!((p[4] - 0.5).abs() < 1e-12);
        assert!((p[5] + 0.5).abs() < 1e-12);
    }

    /// Central finite differences over every parameter tensor of both
    /// encoders, through loss = weighted sum of all output entries.
    #[test]
    fn encoder_gradcheck_all_params() {
        let chars: Vec<char> = "我爱祖国星".chars().collect();
        for name in ["bilstm", "ffn"] {
            let cfg = toy_config();
            let mut enc = build_encoder(name, &cfg, 17).unwrap();
            let weights: Vec<f64> = (0..5 * cfg.output_dim())
                .map(|i| ((i as f64) * 0.37).sin())
                .collect();

            let loss_of = |enc: &Box<dyn Encoder>| -> f64 {
                let f = enc.encode(&chars).unwrap();
                f.data.iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
            };

            let (f, trace) = enc.encode_traced(&chars).unwrap();
            let mut grad_out = FeatureMatrix::zeros(f.rows, f.dim);
            grad_out.data.copy_from_slice(&weights[..f.data.len()]);
            let mut grads = GradStore::new();
            enc.backward(&chars, trace.as_ref(), &grad_out, &mut grads);

            let mut names = Vec::new();
            enc.visit_tensors(&mut |t| names.push((t.name.clone(), t.len())));
            let h = 1e-4;
            for (tname, len) in names {
                let analytic = grads.grad(&tname).unwrap().to_vec();
                // Check a deterministic subset to keep the test quick.
                let step = (len / 25).max(1);
                fn bump(enc: &mut Box<dyn Encoder>, tname: &str, idx: usize, delta: f64) {
                    enc.visit_tensors_mut(&mut |t| {
                        if t.name == tname {
                            t.data[idx] += delta;
                        }
                    });
                }
                for idx in (0..len).step_by(step) {
                    bump(&mut enc, &tname, idx, h);
                    let up = loss_of(&enc);
                    bump(&mut enc, &tname, idx, -2.0 * h);
                    let down = loss_of(&enc);
                    bump(&mut enc, &tname, idx, h);
                    let numeric = (up - down) / (2.0 * h);
                    let denom = numeric.abs().max(analytic[idx].abs()).max(1e-6);
                    assert!(
                        (numeric - analytic[idx]).abs() / denom < 1e-3,
                        "{name} {tname}[{idx}]: numeric {numeric} vs analytic {}",
                        analytic[idx]
                    );
                }
            }
        }
    }
}
