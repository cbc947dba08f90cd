//! Bit-exact checkpoint serialization.
//!
//! Layout: magic `GPTK`, `u32` format version, `u64` header length, UTF-8
//! JSON header (spec, iteration, dataset id, seed, parameter manifest with
//! byte offsets), raw little-endian `f32` payload in lexicographic parameter
//! order, and a 32-byte SHA-256 trailer over everything before it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::spec::ArchitectureSpec;

pub const MAGIC: &[u8; 4] = b"GPTK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub format_version: u32,
    pub iteration: u64,
    pub dataset_id: String,
    pub seed: u64,
    pub param_store: ParamStore,
}

impl Checkpoint {
    pub fn new(param_store: ParamStore, iteration: u64, dataset_id: impl Into<String>, seed: u64) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            iteration,
            dataset_id: dataset_id.into(),
            seed,
            param_store,
        }
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.param_store.spec
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ArchitectureSpec,
    iteration: u64,
    dataset_id: String,
    seed: u64,
    manifest: Vec<ManifestEntry>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut manifest = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (name, value) in ckpt.param_store.iter() {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: value.shape().to_vec(),
            offset: payload.len() as u64,
        });
        let std = value.as_standard_layout();
        for &v in std.as_slice().unwrap() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        spec: ckpt.param_store.spec.clone(),
        iteration: ckpt.iteration,
        dataset_id: ckpt.dataset_id.clone(),
        seed: ckpt.seed,
        manifest,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut buf: Vec<u8> = Vec::with_capacity(16 + header_json.len() + payload.len() + 32);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&ckpt.format_version.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&payload);
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let pstr = path.display().to_string();
    let truncated = |detail: &str| Error::Truncated {
        path: pstr.clone(),
        detail: detail.to_string(),
    };

    if bytes.len() < 16 + 32 {
        return Err(truncated("file shorter than fixed header + trailer"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::validation(format!("{}: bad magic bytes", pstr)));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_end = bytes.len() - 32;
    if 16 + header_len > body_end {
        return Err(truncated("declared header extends past payload"));
    }

    let digest: [u8; 32] = Sha256::digest(&bytes[..body_end]).into();
    if digest != bytes[body_end..] {
        return Err(Error::ChecksumMismatch { path: pstr });
    }

    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;
    let payload = &bytes[16 + header_len..body_end];

    let mut params = BTreeMap::new();
    for entry in &header.manifest {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + 4 * n;
        if end > payload.len() {
            return Err(truncated(&format!(
                "parameter {} extends past payload",
                entry.name
            )));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(
            entry.name.clone(),
            ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
                .map_err(|e| Error::validation(format!("{}: bad shape: {}", entry.name, e)))?,
        );
    }

    Ok(Checkpoint {
        format_version: version,
        iteration: header.iteration,
        dataset_id: header.dataset_id,
        seed: header.seed,
        param_store: ParamStore::new(header.spec, params),
    })
}
