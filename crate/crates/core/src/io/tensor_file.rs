use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_header_and_f32, write_header_and_f32};
use crate::error::{Error, Result};
use crate::nn::TensorF32;

pub const TENSOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub version: u32,
    pub dtype: String,
    pub shape: Vec<usize>,
}

pub fn write_tensor(path: &Path, tensor: &TensorF32) -> Result<()> {
    let header = TensorHeader {
        version: TENSOR_FORMAT_VERSION,
        dtype: "f32".into(),
        shape: tensor.shape.clone(),
    };
    write_header_and_f32(path, &header, &[&tensor.data])
}

pub fn read_tensor(path: &Path) -> Result<TensorF32> {
    let (header, data): (TensorHeader, _) = read_header_and_f32(path)?;
    if header.version != TENSOR_FORMAT_VERSION || header.dtype != "f32" {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported tensor file version {} dtype {}",
            path.display(),
            header.version,
            header.dtype
        )));
    }
    TensorF32::from_vec(&header.shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let data = vec![0.1_f32, -0.0, f32::MIN_POSITIVE, 1e30, 3.25, -7.5];
        let t = TensorF32::from_vec(&[1, 2, 3], data).unwrap();
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back.shape, t.shape);
        assert!(back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        let text = std::fs::read(&p).unwrap();
        assert!(text.starts_with(br#"{"version":1,"dtype":"f32","shape":[1,2,3]}"#));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        write_tensor(&p, &TensorF32::zeros(&[4])).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&p, bytes).unwrap();
        assert!(read_tensor(&p).is_err());
    }
}
