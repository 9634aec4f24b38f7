//! `model.bin`: the bundle container with magic `EMOM`, one f32 payload per
//! parameter array in [`FusionModel::tensors`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainResult;
use crate::dataio::container::{self, Container};
use crate::dataio::{DataError, PayloadRef};
use crate::fusion::{FusionModel, ModelConfig};
use crate::numkit::{Matrix, Real};

pub const MODEL_MAGIC: [u8; 4] = *b"EMOM";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    #[serde(flatten)]
    payload: PayloadRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelManifest {
    format: String,
    version: u16,
    config: ModelConfig,
    n_params: usize,
    tensors: Vec<TensorEntry>,
}

fn tensor_names(n_blocks: usize, n_heads: usize) -> Vec<String> {
    let mut names = Vec::new();
    for b in 0..n_blocks {
        for w in ["w_q", "w_k", "w_v", "w_o"] {
            names.push(format!("attention{b}.{w}"));
        }
    }
    for h in 0..n_heads {
        names.push(format!("head{h}.weight"));
        names.push(format!("head{h}.bias"));
    }
    names
}

/// Encodes the parameters as f32 regardless of the training precision.
pub fn encode_model<T: Real>(model: &FusionModel<T>) -> TrainResult<Vec<u8>> {
    let tensors: Vec<Matrix<f32>> = model.tensors().into_iter().map(Matrix::cast).collect();
    let (offsets, _) = container::layout(tensors.iter().map(Matrix::len));
    let names = tensor_names(model.attention().len(), model.heads().len());
    let manifest = ModelManifest {
        format: "EMOM".into(),
        version: MODEL_VERSION,
        config: *model.config(),
        n_params: model.n_params(),
        tensors: names
            .into_iter()
            .zip(&tensors)
            .zip(&offsets)
            .map(|((name, t), &offset)| TensorEntry {
                name,
                payload: PayloadRef {
                    offset,
                    rows: t.rows(),
                    cols: t.cols(),
                },
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).map_err(DataError::from)?;
    let payloads: Vec<(u64, &[f32])> = offsets.iter().copied().zip(tensors.iter().map(Matrix::data)).collect();
    Ok(container::encode(MODEL_MAGIC, MODEL_VERSION, &json, &payloads))
}

pub fn save_model<T: Real>(model: &FusionModel<T>, path: impl AsRef<Path>) -> TrainResult<()> {
    let bytes = encode_model(model)?;
    container::write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn decode_model(bytes: Vec<u8>) -> TrainResult<FusionModel<f32>> {
    let c = Container::parse(bytes, MODEL_MAGIC, MODEL_VERSION)?;
    let manifest: ModelManifest = serde_json::from_slice(&c.manifest).map_err(DataError::from)?;
    let tensors = manifest
        .tensors
        .iter()
        .map(|t| {
            let p = &t.payload;
            let data = c.payload(&t.name, p.offset, p.rows * p.cols)?;
            Matrix::from_vec(p.rows, p.cols, data)
                .map_err(|e| DataError::ShapeMismatch(format!("{}: {e}", t.name)))
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    Ok(FusionModel::from_tensors(&manifest.config, tensors)?)
}

pub fn load_model(path: impl AsRef<Path>) -> TrainResult<FusionModel<f32>> {
    let bytes = std::fs::read(path.as_ref()).map_err(DataError::from)?;
    decode_model(bytes)
}
