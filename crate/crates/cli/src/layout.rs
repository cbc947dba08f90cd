//! Run directory layout and lifecycle:
//! `<out>/runs/<run_id>/{manifest.json, metrics.csv, checkpoints/, plots/}`
//! with `run_id = hash(resolved spec, seed)`.
//!
//! A run directory is created with its manifest first; `report.json` marks
//! completion. Re-running a completed run in the same directory is refused
//! without `--force`; an incomplete run resumes, skipping grid cells that
//! left a done marker.

use std::path::{Path, PathBuf};

use gptk_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Hash of the fully resolved experiment spec and the seed.
pub fn run_id(canonical_spec: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(canonical_spec.as_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{:02x}", b)).collect()
}

/// How an existing run directory was encountered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Fresh,
    Resumed,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub run_id: String,
    pub state: RunState,
}

impl RunDir {
    /// Creates (or re-opens) `<out>/runs/<run_id>/`. A completed run (one
    /// with a `report.json`) is refused unless `force`, which wipes it. An
    /// incomplete run is reopened for resumption.
    pub fn open(out: &Path, run_id: &str, force: bool) -> Result<RunDir> {
        let root = out.join("runs").join(run_id);
        let mut state = RunState::Fresh;
        if root.exists() {
            if root.join("report.json").exists() && !force {
                return Err(Error::validation(format!(
                    "run {} already completed in {}; pass --force to overwrite",
                    run_id,
                    root.display()
                )));
            }
            if force {
                std::fs::remove_dir_all(&root)?;
            } else {
                state = RunState::Resumed;
            }
        }
        std::fs::create_dir_all(root.join("checkpoints"))?;
        std::fs::create_dir_all(root.join("plots"))?;
        Ok(RunDir {
            root,
            run_id: run_id.to_string(),
            state,
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn plot_path(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(name)
    }

    pub fn write_manifest(&self, manifest: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest)
            .map_err(|e| Error::validation(format!("manifest serialization: {}", e)))?;
        std::fs::write(self.manifest_path(), text)?;
        Ok(())
    }

    pub fn write_report(&self, report: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| Error::validation(format!("report serialization: {}", e)))?;
        std::fs::write(self.report_path(), text)?;
        Ok(())
    }

    /// Cell done marker carrying the cell's persisted result.
    pub fn cell_marker(&self, index: usize) -> PathBuf {
        self.root.join(format!("cell_{}.done.json", index))
    }

    pub fn load_cell<T: serde::de::DeserializeOwned>(&self, index: usize) -> Option<T> {
        let path = self.cell_marker(index);
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save_cell<T: serde::Serialize>(&self, index: usize, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::validation(format!("cell serialization: {}", e)))?;
        // Write-then-rename so a crash never leaves a truncated done marker.
        let tmp = self.root.join(format!("cell_{}.tmp", index));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, self.cell_marker(index))?;
        Ok(())
    }

    /// Verifies the requested artifacts exist; the process exit status is
    /// nonzero iff this fails.
    pub fn check_artifacts(&self, names: &[&str]) -> Result<()> {
        let mut missing = Vec::new();
        for name in names {
            if !self.root.join(name).exists() {
                missing.push(name.to_string());
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "run {} is missing artifacts: {}",
                self.run_id,
                missing.join(", ")
            )))
        }
    }
}

/// Appends CSV lines, writing `header` first when the file does not exist.
pub fn append_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    use std::io::Write;
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    if fresh {
        writeln!(f, "{}", header)?;
    }
    for row in rows {
        writeln!(f, "{}", row)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_id_depends_on_spec_and_seed() {
        let a = run_id("[x]\nk = 1\n", 0);
        let b = run_id("[x]\nk = 1\n", 1);
        let c = run_id("[x]\nk = 2\n", 0);
        assert_eq!(a.len(), 16);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, run_id("[x]\nk = 1\n", 0));
    }

    #[test]
    fn completed_run_refused_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::open(dir.path(), "abc", false).unwrap();
        assert_eq!(rd.state, RunState::Fresh);
        rd.write_report(&serde_json::json!({"done": true})).unwrap();
        assert!(RunDir::open(dir.path(), "abc", false).is_err());
        let rd = RunDir::open(dir.path(), "abc", true).unwrap();
        assert_eq!(rd.state, RunState::Fresh);
        assert!(!rd.report_path().exists());
    }

    #[test]
    fn incomplete_run_resumes_with_cell_markers() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::open(dir.path(), "abc", false).unwrap();
        rd.save_cell(0, &serde_json::json!({"v": 7})).unwrap();
        let rd = RunDir::open(dir.path(), "abc", false).unwrap();
        assert_eq!(rd.state, RunState::Resumed);
        let got: serde_json::Value = rd.load_cell(0).unwrap();
        assert_eq!(got["v"], 7);
        assert!(rd.load_cell::<serde_json::Value>(1).is_none());
    }

    #[test]
    fn artifact_check_names_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::open(dir.path(), "abc", false).unwrap();
        std::fs::write(rd.metrics_path(), "x").unwrap();
        rd.check_artifacts(&["metrics.csv"]).unwrap();
        let err = rd
            .check_artifacts(&["metrics.csv", "report.json"])
            .unwrap_err()
            .to_string();
        assert!(err.contains("report.json") && !err.contains("metrics.csv,"));
    }
}
