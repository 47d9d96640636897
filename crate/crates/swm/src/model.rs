//! The full model: a registered encoder plus the two heads, with a
//! versioned JSON on-disk format (named flat float arrays with shapes).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{build_encoder, Encoder, EncoderConfig, EncoderError};
use crate::heads::Heads;
use crate::nn::Tensor;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("missing tensor '{0}' in model file")]
    MissingTensor(String),
    #[error("shape mismatch for tensor '{0}'")]
    ShapeMismatch(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    encoder: String,
    config: EncoderConfig,
    tensors: BTreeMap<String, StoredTensor>,
}

pub struct SwmModel {
    pub encoder_name: String,
    pub encoder_config: EncoderConfig,
    pub encoder: Box<dyn Encoder>,
    pub heads: Heads,
}

impl SwmModel {
    /// Fresh model with seeded parameters. Encoder and heads draw from
    /// decorrelated streams of the same seed.
    pub fn init(
        encoder_name: &str,
        config: &EncoderConfig,
        seed: u64,
    ) -> Result<SwmModel, ModelError> {
        let encoder = build_encoder(encoder_name, config, seed)?;
        let heads = Heads::new(config.output_dim(), seed.wrapping_add(0x9e3779b97f4a7c15));
        Ok(SwmModel {
            encoder_name: encoder_name.to_string(),
            encoder_config: config.clone(),
            encoder,
            heads,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder_config.output_dim()
    }

    pub fn visit_tensors(&self, f: &mut dyn FnMut(&Tensor)) {
        self.encoder.visit_tensors(f);
        self.heads.visit_tensors(f);
    }

    pub fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.encoder.visit_tensors_mut(f);
        self.heads.visit_tensors_mut(f);
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit_tensors(&mut |t| ok &= t.all_finite());
        ok
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let mut tensors = BTreeMap::new();
        self.visit_tensors(&mut |t| {
            tensors.insert(
                t.name.clone(),
                StoredTensor {
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                },
            );
        });
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            encoder: self.encoder_name.clone(),
            config: self.encoder_config.clone(),
            tensors,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<SwmModel, ModelError> {
        let file: ModelFile = serde_json::from_str(json)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(file.version));
        }
        let mut model = SwmModel::init(&file.encoder, &file.config, 0)?;
        let mut err: Option<ModelError> = None;
        model.visit_tensors_mut(&mut |t| {
            if err.is_some() {
                return;
            }
            match file.tensors.get(&t.name) {
                None => err = Some(ModelError::MissingTensor(t.name.clone())),
                Some(stored) if stored.shape != t.shape => {
                    err = Some(ModelError::ShapeMismatch(t.name.clone()))
                }
                Some(stored) => t.data.copy_from_slice(&stored.data),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(model),
        }
    }

    pub fn load(path: &Path) -> Result<SwmModel, ModelError> {
        SwmModel::from_json(&fs::read_to_string(path)?)
    }
}
