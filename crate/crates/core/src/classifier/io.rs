//! Model files.
//!
//! Layout: magic `ASCM`, version (u32 LE), header length (u32 LE), JSON
//! header, parameter count (u64 LE), parameters as f32 LE, then a SHA-256
//! of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassifierError, FeatureNorm, Model, ModelConfig};

pub const MODEL_MAGIC: &[u8; 4] = b"ASCM";
pub const MODEL_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    labels: Vec<String>,
    feature_norm: FeatureNorm,
    crop_frames: usize,
}

fn encode(model: &Model) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        labels: model.labels.clone(),
        feature_norm: model.feature_norm.clone(),
        crop_frames: model.crop_frames,
    })
    .expect("serialisable header");
    let mut out = Vec::with_capacity(24 + header.len() + 4 * model.parameter_count() + DIGEST_LEN);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.parameter_count() as u64).to_le_bytes());
    for v in model.params().iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ClassifierError> {
    std::fs::write(path, encode(model)).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn decode(bytes: &[u8], path: &Path) -> Result<Model, ClassifierError> {
    let format = |reason: &str| ClassifierError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() >= 4 && &bytes[..4] != MODEL_MAGIC {
        return Err(format("bad magic"));
    }
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(ClassifierError::Checksum {
            path: path.to_path_buf(),
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ClassifierError::Checksum {
            path: path.to_path_buf(),
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes(body[at..at + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != MODEL_VERSION {
        return Err(ClassifierError::Version {
            path: path.to_path_buf(),
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let header_len = u32_at(8) as usize;
    let rest = body.get(12..).ok_or_else(|| format("short header"))?;
    if rest.len() < header_len + 8 {
        return Err(format("short header"));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| format(&format!("header: {e}")))?;
    let count = u64::from_le_bytes(
        rest[header_len..header_len + 8]
            .try_into()
            .expect("8 bytes"),
    ) as usize;
    let blob = &rest[header_len + 8..];
    if blob.len() != count.saturating_mul(4) {
        return Err(format("parameter blob length does not match its count"));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    header.config.validate()?;
    let params: Vec<Vec<f32>> = header
        .config
        .shape()
        .tensors()
        .iter()
        .map(|&(len, _)| values.by_ref().take(len).collect())
        .collect();
    if values.next().is_some() {
        return Err(format(
            "parameter blob is longer than the configuration needs",
        ));
    }
    Model::from_parts(
        header.config,
        header.labels,
        header.feature_norm,
        header.crop_frames,
        params,
    )
}

/// Loads a model; `expected_outputs` rejects models of the wrong head size.
pub fn load_model(path: &Path, expected_outputs: Option<usize>) -> Result<Model, ClassifierError> {
    let bytes = std::fs::read(path).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let model = decode(&bytes, path)?;
    if let Some(expected) = expected_outputs {
        if model.config.n_outputs != expected {
            return Err(ClassifierError::Shape {
                expected,
                found: model.config.n_outputs,
            });
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_model, predict};
    use crate::features::{FeatureParams, LogMel};

    fn model(n_outputs: usize) -> Model {
        init_model(&ModelConfig {
            input_bands: 16,
            conv_channels: vec![4, 8],
            hidden_units: 8,
            n_outputs,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ascm");
        let m = model(10);
        save_model(&m, &path).unwrap();
        let back = load_model(&path, Some(10)).unwrap();
        assert_eq!(back, m);
        let params = FeatureParams {
            n_mels: 16,
            ..FeatureParams::default()
        };
        let lm = LogMel::from_values((0..16 * 30).map(|i| (i % 7) as f32).collect(), 30, params)
            .unwrap();
        assert_eq!(predict(&m, &lm).unwrap(), predict(&back, &lm).unwrap());
    }

    #[test]
    fn truncation_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ascm");
        save_model(&model(10), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            assert!(
                matches!(
                    load_model(&path, None),
                    Err(ClassifierError::Checksum { .. })
                ),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn wrong_head_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m3.ascm");
        save_model(&model(3), &path).unwrap();
        assert!(matches!(
            load_model(&path, Some(10)),
            Err(ClassifierError::Shape {
                expected: 10,
                found: 3
            })
        ));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ascm");
        let mut bytes = encode(&model(10));
        bytes[4] = 9;
        let n = bytes.len() - DIGEST_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path, None),
            Err(ClassifierError::Version { found: 9, .. })
        ));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path, None),
            Err(ClassifierError::Format { .. })
        ));
    }
}
