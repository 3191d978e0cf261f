//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "SWATCKPT"
//! version    u32 LE
//! header_len u32 LE
//! header     header_len bytes of UTF-8 JSON (CheckpointHeader)
//! payload    f32 LE values, parameters concatenated in manifest order
//! ```
//!
//! Manifest offsets and lengths count f32 elements from the payload start.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SWATCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    /// Per-head distance-bias slopes, if the model uses them.
    pub slopes: Option<Vec<f64>>,
    pub param_count: usize,
    /// `false` for ablation configurations outside the published variants.
    pub published_variant: bool,
    pub manifest: Vec<ManifestEntry>,
    /// Free-form description of the run that produced the weights (for
    /// example the full experiment configuration). Not interpreted on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl CheckpointHeader {
    fn of<T: Scalar>(model: &Model<T>) -> Self {
        let mut offset = 0;
        let manifest = model
            .param_names()
            .iter()
            .zip(model.params())
            .map(|(name, p)| {
                let e = ManifestEntry {
                    name: name.clone(),
                    shape: p.shape().to_vec(),
                    offset,
                    len: p.numel(),
                };
                offset += p.numel();
                e
            })
            .collect();
        let config = model.config().clone();
        CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            seed: config.seed,
            slopes: model.slopes().map(|s| s.slopes.clone()),
            param_count: model.param_count(),
            published_variant: config.is_published_variant(),
            config,
            manifest,
            provenance: None,
        }
    }
}

/// Serializes `model` (parameters rounded to f32).
pub fn model_to_bytes<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    model_to_bytes_with(model, None)
}

/// As [`model_to_bytes`], recording `provenance` in the header.
pub fn model_to_bytes_with<T: Scalar>(
    model: &Model<T>,
    provenance: Option<serde_json::Value>,
) -> Result<Vec<u8>> {
    let mut header = CheckpointHeader::of(model);
    header.provenance = provenance;
    let header = serde_json::to_vec(&header)?;
    let header_len =
        u32::try_from(header.len()).map_err(|_| Error::Integrity("header too large".into()))?;
    let mut out = Vec::with_capacity(16 + header.len() + 4 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.params() {
        for &x in p.data() {
            let v = x.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::Integrity(format!("file truncated at byte {at}")))?;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

/// Parses a checkpoint; never returns a partially populated model.
pub fn model_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(Model<T>, CheckpointHeader)> {
    ensure!(
        bytes.len() >= 8 && &bytes[..8] == CHECKPOINT_MAGIC,
        Integrity,
        "missing checkpoint magic"
    );
    let version = read_u32(bytes, 8)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header_len = read_u32(bytes, 12)? as usize;
    let header_bytes = bytes
        .get(16..16 + header_len)
        .ok_or_else(|| Error::Integrity("file truncated inside header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Integrity(format!("unreadable header: {e}")))?;
    if header.format_version != version {
        return Err(Error::Version {
            found: header.format_version,
            expected: version,
        });
    }
    let payload = &bytes[16 + header_len..];
    ensure!(
        payload.len() % 4 == 0,
        Integrity,
        "payload is not a whole number of f32 values"
    );
    let total = payload.len() / 4;

    let mut expect = 0;
    for e in &header.manifest {
        ensure!(
            e.offset == expect,
            Integrity,
            "manifest entry {} starts at {} (expected {expect})",
            e.name,
            e.offset
        );
        ensure!(
            e.shape.iter().product::<usize>() == e.len,
            Integrity,
            "manifest entry {} has shape {:?} but length {}",
            e.name,
            e.shape,
            e.len
        );
        expect += e.len;
    }
    ensure!(
        expect == total,
        Integrity,
        "manifest covers {expect} values, payload holds {total}"
    );
    ensure!(
        header.param_count == total,
        Integrity,
        "header param_count {} disagrees with payload {total}",
        header.param_count
    );

    let params = header
        .manifest
        .iter()
        .map(|e| {
            let data = payload[4 * e.offset..4 * (e.offset + e.len)]
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect();
            Tensor::new(&e.shape, data)
                .map_err(|err| Error::Integrity(format!("{}: {err}", e.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let model = Model::from_parts(header.config.clone(), params)?;
    let names_match = model
        .param_names()
        .iter()
        .zip(&header.manifest)
        .all(|(n, e)| *n == e.name);
    ensure!(
        names_match,
        Integrity,
        "manifest parameter names do not match the configuration"
    );
    Ok((model, header))
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let bytes = std::fs::read(path)?;
    model_from_bytes(&bytes).map(|(m, _)| m)
}

/// Loads a checkpoint and requires its configuration to equal `expected`.
pub fn load_checkpoint_expecting<T: Scalar>(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<Model<T>> {
    let model = load_checkpoint(path)?;
    ensure!(
        model.config() == expected,
        Config,
        "checkpoint configuration {:?} does not match expected {:?}",
        model.config(),
        expected
    );
    Ok(model)
}
