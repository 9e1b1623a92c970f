use std::path::Path;

use autograd::{Float, ParamKind, Tensor};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::net::Model;
use crate::container;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    trainable: bool,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes the config and every named tensor (little-endian f32, in the
/// order listed in the header).
pub fn save_checkpoint<F: Float>(model: &Model<F>, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, kind, t) in model.store().iter() {
        tensors.push(TensorEntry { name: name.into(), trainable: kind == ParamKind::Trainable, shape: t.shape().to_vec() });
        let values: Vec<f32> = t.data().iter().map(|v| v.as_f64() as f32).collect();
        payload.extend_from_slice(&container::f32_to_bytes(&values));
    }
    let header = Header { kind: "checkpoint".into(), dtype: "f32".into(), config: model.config().clone(), tensors };
    container::write(path, &header, &payload)
}

pub fn load_checkpoint<F: Float>(path: &Path) -> Result<Model<F>> {
    let (header, payload): (Header, _) = container::read(path)?;
    let what = path.display().to_string();
    if header.kind != "checkpoint" || header.dtype != "f32" {
        return Err(Error::format(what, "not a model checkpoint"));
    }
    let values = container::bytes_to_f32(&payload)?;
    let mut model = Model::<F>::build(&header.config, 0)?;
    if header.tensors.len() != model.store().len() {
        return Err(Error::format(what, "tensor count does not match the model"));
    }
    let mut offset = 0;
    for entry in &header.tensors {
        let id = model.store().find(&entry.name).ok_or_else(|| Error::format(&what, format!("unknown tensor {}", entry.name)))?;
        if model.store().get(id).shape() != entry.shape.as_slice() {
            return Err(Error::format(&what, format!("tensor {} has shape {:?}", entry.name, entry.shape)));
        }
        let n: usize = entry.shape.iter().product();
        let chunk = values.get(offset..offset + n).ok_or_else(|| Error::format(&what, "payload is truncated"))?;
        model.store_mut().set(id, Tensor::from_vec(&entry.shape, chunk.iter().map(|&v| F::of(v as f64)).collect()));
        offset += n;
    }
    if offset != values.len() {
        return Err(Error::format(what, "payload has trailing data"));
    }
    Ok(model)
}
