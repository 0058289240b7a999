use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::tensor::{Float, Tensor};
use crate::error::{Error, Result};
use crate::io::{read_header_and_f32, write_header_and_f32};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsHeader {
    pub format_version: u32,
    pub dtype: String,
    /// Free-form model description (architecture, training summary).
    pub meta: serde_json::Value,
    pub params: Vec<ParamEntry>,
}

/// Stores parameters as f32 in header order.
pub fn save_weights<T: Float>(path: &Path, params: &[&Param<T>], meta: serde_json::Value) -> Result<()> {
    let header = WeightsHeader {
        format_version: WEIGHTS_FORMAT_VERSION,
        dtype: "f32".into(),
        meta,
        params: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
            })
            .collect(),
    };
    let data: Vec<Vec<f32>> = params
        .iter()
        .map(|p| p.value.data.iter().map(|v| v.to_f32().unwrap_or(f32::NAN)).collect())
        .collect();
    let slices: Vec<&[f32]> = data.iter().map(Vec::as_slice).collect();
    write_header_and_f32(path, &header, &slices)
}

pub fn load_weights(path: &Path) -> Result<(WeightsHeader, Vec<Tensor<f32>>)> {
    let (header, data): (WeightsHeader, Vec<f32>) = read_header_and_f32(path)?;
    if header.format_version != WEIGHTS_FORMAT_VERSION || header.dtype != "f32" {
        return Err(Error::InvalidInput(format!("{}: unsupported weights file", path.display())));
    }
    let total: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if total != data.len() {
        return Err(Error::shape("weights payload", total, data.len()));
    }
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(header.params.len());
    for p in &header.params {
        let n: usize = p.shape.iter().product();
        tensors.push(Tensor::from_vec(&p.shape, data[offset..offset + n].to_vec())?);
        offset += n;
    }
    Ok((header, tensors))
}

/// Copies loaded tensors into parameters, checking names and shapes.
pub fn assign_weights<T: Float>(params: &mut [&mut Param<T>], header: &WeightsHeader, tensors: &[Tensor<f32>]) -> Result<()> {
    if params.len() != tensors.len() {
        return Err(Error::shape("weights", params.len(), tensors.len()));
    }
    for ((p, entry), t) in params.iter_mut().zip(&header.params).zip(tensors) {
        if p.name != entry.name || p.value.shape != t.shape {
            return Err(Error::shape(
                "weights",
                format!("{} {:?}", p.name, p.value.shape),
                format!("{} {:?}", entry.name, t.shape),
            ));
        }
        p.value = t.cast();
        p.zero_grad();
    }
    Ok(())
}
