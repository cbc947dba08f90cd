//! Dataset resolution from the `[data]` (or sibling) config sections.
//!
//! `kind` is a synthetic dataset name or `folder`; folder paths resolve
//! relative to the data root, overridable through the `GPTK_DATA_ROOT`
//! environment variable.

use std::path::PathBuf;

use gptk_core::data::{load_image_folder, make_synthetic, DatasetHandle, SyntheticKind};
use gptk_core::{Error, Result};

use crate::config::ConfigFile;

/// Environment variable overriding the root for relative folder datasets.
pub const DATA_ROOT_ENV: &str = "GPTK_DATA_ROOT";

#[derive(Debug, Clone, serde::Serialize)]
pub struct DataSpec {
    pub kind: String,
    pub path: Option<PathBuf>,
    pub n: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl DataSpec {
    /// Reads a dataset description from the named config section.
    pub fn from_config(cfg: &ConfigFile, section: &str) -> Result<DataSpec> {
        let mut s = cfg.section(section);
        let kind = s
            .get_str("kind")
            .ok_or_else(|| Error::validation(format!("[{}] needs `kind`", section)))?;
        let path = s.get_str("path").map(PathBuf::from);
        let spec = DataSpec {
            kind,
            path,
            n: s.get("n", 1000)?,
            image_size: s.get("image_size", 8)?,
            seed: s.get("seed", 0)?,
        };
        s.finish()?;
        Ok(spec)
    }

    pub fn load(&self) -> Result<DatasetHandle> {
        if self.kind == "folder" {
            let rel = self
                .path
                .as_ref()
                .ok_or_else(|| Error::validation("folder dataset needs `path`"))?;
            let root = std::env::var_os(DATA_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            let full = if rel.is_absolute() {
                rel.clone()
            } else {
                root.join(rel)
            };
            let loaded = load_image_folder(&full, self.image_size, None)?;
            for err in &loaded.file_errors {
                eprintln!("warning: {:?}", err);
            }
            Ok(loaded.handle)
        } else {
            let kind = SyntheticKind::parse(&self.kind)?;
            make_synthetic(kind, self.n, self.image_size, self.seed)
        }
    }
}
