//! Source-model selection: ranks a zoo of pre-trained generators for a
//! target dataset by the Fréchet distance between source-generated samples
//! and target reals. Each row also reports the model-quality term (FID of a
//! model against its own training data) and the real-vs-real domain distance,
//! all under one embedding checksum. No composite score is computed; the
//! generated-vs-target distance is only a rough suitability indicator and is
//! presented alongside the other two distances.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetHandle;
use crate::error::{Error, Result};
use crate::metrics::{fid, gaussian_stats, EmbeddingNet, GaussianStats};
use crate::model_zoo::{load_checkpoint, ParamStore, Role};
use crate::transfer::sample_images;

/// One candidate source model: a generator checkpoint and the identifier of
/// the dataset it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub checkpoint: PathBuf,
    pub dataset_id: String,
}

/// Reads a zoo manifest: a JSON list of `{checkpoint, dataset_id}` objects.
pub fn load_zoo_manifest(path: &Path) -> Result<Vec<ZooEntry>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("zoo manifest {}: {}", path.display(), e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Generated images per zoo entry.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            n_samples: 10_000,
            seed: 0,
        }
    }
}

fn embed_stats(embedder: &EmbeddingNet, images: &ndarray::Array4<f32>) -> Result<GaussianStats> {
    gaussian_stats(&embedder.embed(images)?)
}

fn load_generator(path: &Path, context: &str) -> Result<ParamStore> {
    let store = load_checkpoint(path)
        .map_err(|e| Error::validation(format!("zoo entry {}: {}", context, e)))?
        .param_store;
    if store.spec.role != Role::Generator {
        return Err(Error::validation(format!(
            "zoo entry {}: checkpoint is not a generator",
            context
        )));
    }
    Ok(store)
}

fn check_n_samples(n_samples: usize, embed_dim: usize) -> Result<()> {
    if n_samples < embed_dim + 1 {
        return Err(Error::validation(format!(
            "n_samples {} too small for a full-rank {}-dimensional covariance (need >= {})",
            n_samples,
            embed_dim,
            embed_dim + 1
        )));
    }
    Ok(())
}

/// Seed for one entry's generator sampling, stable under zoo reordering.
fn entry_seed(seed: u64, dataset_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(dataset_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Distance between samples generated by a zoo entry and the target reals.
pub fn gen_vs_target_fid(
    entry: &ZooEntry,
    target: &DatasetHandle,
    n_samples: usize,
    embedder: &EmbeddingNet,
    seed: u64,
) -> Result<f64> {
    check_n_samples(n_samples, embedder.embed_dim)?;
    let g = load_generator(&entry.checkpoint, &entry.dataset_id)?;
    let images = sample_images(&g, n_samples, entry_seed(seed, &entry.dataset_id))?;
    let gen_stats = embed_stats(embedder, &images)?;
    let target_stats = embed_stats(embedder, target.images())?;
    fid(&gen_stats, &target_stats)
}

/// Distance between two real datasets in the shared embedding.
pub fn real_vs_real_fid(
    source_data: &DatasetHandle,
    target_data: &DatasetHandle,
    embedder: &EmbeddingNet,
) -> Result<f64> {
    let s = embed_stats(embedder, source_data.images())?;
    let t = embed_stats(embedder, target_data.images())?;
    fid(&s, &t)
}

/// One row of the ranking report.
#[derive(Debug, Clone, Serialize)]
pub struct RankedEntry {
    pub dataset_id: String,
    pub checkpoint: PathBuf,
    /// The ranking key: FID(generated by this source model, target reals).
    pub gen_vs_target_fid: f64,
    /// FID(generated, own training reals); `None` when the source dataset
    /// was not provided.
    pub self_fid: Option<f64>,
    /// FID(source reals, target reals); `None` without the source dataset.
    pub real_vs_real_fid: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub embedding_checksum: String,
    /// Successful entries, ascending by `gen_vs_target_fid`.
    pub ranked: Vec<RankedEntry>,
    /// `(dataset_id, error)` for entries that could not be evaluated.
    pub failures: Vec<(String, String)>,
}

impl SelectionReport {
    /// Human-readable fixed-width table of the ranking.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("embedding checksum: {}\n", self.embedding_checksum));
        out.push_str(&format!(
            "{:<4} {:<24} {:>16} {:>12} {:>16}\n",
            "rank", "source", "gen_vs_target", "self_fid", "real_vs_real"
        ));
        let opt = |v: Option<f64>| v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "-".into());
        for (i, r) in self.ranked.iter().enumerate() {
            out.push_str(&format!(
                "{:<4} {:<24} {:>16.4} {:>12} {:>16}\n",
                i + 1,
                r.dataset_id,
                r.gen_vs_target_fid,
                opt(r.self_fid),
                opt(r.real_vs_real_fid)
            ));
        }
        for (id, err) in &self.failures {
            out.push_str(&format!("FAILED {:<24} {}\n", id, err));
        }
        out
    }
}

/// Evaluates every zoo entry against the target and sorts ascending by the
/// generated-vs-target distance. Per-entry failures are reported inline and
/// excluded from the ranking; datasets in `sources` (keyed by `dataset_id`)
/// enable the per-row self-FID and real-vs-real distances.
pub fn rank_sources(
    zoo: &[ZooEntry],
    sources: &BTreeMap<String, DatasetHandle>,
    target: &DatasetHandle,
    embedder: &EmbeddingNet,
    cfg: &SelectionConfig,
) -> Result<SelectionReport> {
    if zoo.is_empty() {
        return Err(Error::validation("zoo is empty"));
    }
    check_n_samples(cfg.n_samples, embedder.embed_dim)?;
    let target_stats = embed_stats(embedder, target.images())?;

    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for entry in zoo {
        match evaluate_entry(entry, sources, &target_stats, embedder, cfg) {
            Ok(row) => ranked.push(row),
            Err(e) => failures.push((entry.dataset_id.clone(), e.to_string())),
        }
    }
    // Ascending by the ranking key; ties broken by dataset id so that the
    // report is invariant to zoo input order.
    ranked.sort_by(|a, b| {
        a.gen_vs_target_fid
            .partial_cmp(&b.gen_vs_target_fid)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.dataset_id.cmp(&b.dataset_id))
    });
    failures.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SelectionReport {
        embedding_checksum: embedder.checksum.clone(),
        ranked,
        failures,
    })
}

fn evaluate_entry(
    entry: &ZooEntry,
    sources: &BTreeMap<String, DatasetHandle>,
    target_stats: &GaussianStats,
    embedder: &EmbeddingNet,
    cfg: &SelectionConfig,
) -> Result<RankedEntry> {
    let g = load_generator(&entry.checkpoint, &entry.dataset_id)?;
    let images = sample_images(&g, cfg.n_samples, entry_seed(cfg.seed, &entry.dataset_id))?;
    let gen_stats = embed_stats(embedder, &images)?;
    let gen_vs_target = fid(&gen_stats, target_stats)?;
    let (self_fid, real_vs_real) = match sources.get(&entry.dataset_id) {
        Some(src) => {
            let src_stats = embed_stats(embedder, src.images())?;
            (
                Some(fid(&gen_stats, &src_stats)?),
                Some(fid(&src_stats, target_stats)?),
            )
        }
        None => (None, None),
    };
    Ok(RankedEntry {
        dataset_id: entry.dataset_id.clone(),
        checkpoint: entry.checkpoint.clone(),
        gen_vs_target_fid: gen_vs_target,
        self_fid,
        real_vs_real_fid: real_vs_real,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, split, SyntheticKind};
    use crate::metrics::fit_embedding_with;
    use crate::model_zoo::{build_network, save_checkpoint, ArchitectureSpec, Checkpoint};

    fn save_generator(dir: &Path, name: &str, seed: u64) -> PathBuf {
        let g = build_network(&ArchitectureSpec::generator(8, 8).with_noise_dim(8), seed).unwrap();
        let path = dir.join(name);
        save_checkpoint(&Checkpoint::new(g, 0, name, seed), &path).unwrap();
        path
    }

    fn toy_embedder() -> (DatasetHandle, EmbeddingNet) {
        let data = make_synthetic(SyntheticKind::ShapesA, 120, 8, 0).unwrap();
        let emb = fit_embedding_with(&data, 0, 8, 400).unwrap();
        (data, emb)
    }

    #[test]
    fn gen_vs_target_equals_self_fid_when_target_is_source() {
        let dir = tempfile::tempdir().unwrap();
        let (data, emb) = toy_embedder();
        let entry = ZooEntry {
            checkpoint: save_generator(dir.path(), "a.gptk", 1),
            dataset_id: "shapes_a".into(),
        };
        // Self-FID is gen-vs-target with the source as target by construction.
        let v1 = gen_vs_target_fid(&entry, &data, 64, &emb, 7).unwrap();
        let v2 = gen_vs_target_fid(&entry, &data, 64, &emb, 7).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert!(v1.is_finite() && v1 >= 0.0);

        // Too few samples for the covariance.
        assert!(gen_vs_target_fid(&entry, &data, 1, &emb, 7).is_err());
    }

    #[test]
    fn real_vs_real_resampling_noise_is_small() {
        let data = make_synthetic(SyntheticKind::ShapesA, 4000, 8, 3).unwrap();
        let (_, emb) = toy_embedder();
        let (a, b) = split(&data, 2000, 0).unwrap();
        let v = real_vs_real_fid(&a, &b, &emb).unwrap();
        assert!(v < 1.0, "resampling FID {}", v);

        // Unrelated domain is farther than a resample of the same domain.
        let faces = make_synthetic(SyntheticKind::FacesToy, 2000, 8, 4).unwrap();
        let far = real_vs_real_fid(&a, &faces, &emb).unwrap();
        assert!(far > 10.0 * v, "same {} vs unrelated {}", v, far);
    }

    #[test]
    fn ranking_sorts_ascending_and_is_order_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let (target, emb) = toy_embedder();
        let zoo: Vec<ZooEntry> = (0..3)
            .map(|i| ZooEntry {
                checkpoint: save_generator(dir.path(), &format!("g{}.gptk", i), 10 + i),
                dataset_id: format!("src{}", i),
            })
            .collect();
        let cfg = SelectionConfig {
            n_samples: 64,
            seed: 5,
        };
        let sources = BTreeMap::new();
        let report = rank_sources(&zoo, &sources, &target, &emb, &cfg).unwrap();
        assert_eq!(report.ranked.len(), 3);
        assert!(report.failures.is_empty());
        assert_eq!(report.embedding_checksum, emb.checksum);
        // Sorted ascending and consistent with per-entry evaluation.
        for w in report.ranked.windows(2) {
            assert!(w[0].gen_vs_target_fid <= w[1].gen_vs_target_fid);
        }
        for row in &report.ranked {
            let entry = zoo.iter().find(|e| e.dataset_id == row.dataset_id).unwrap();
            let direct = gen_vs_target_fid(entry, &target, 64, &emb, 5).unwrap();
            assert!((row.gen_vs_target_fid - direct).abs() < 1e-9);
        }
        // Reversed input produces the identical ranking.
        let mut reversed = zoo.clone();
        reversed.reverse();
        let report2 = rank_sources(&reversed, &sources, &target, &emb, &cfg).unwrap();
        let ids: Vec<_> = report.ranked.iter().map(|r| &r.dataset_id).collect();
        let ids2: Vec<_> = report2.ranked.iter().map(|r| &r.dataset_id).collect();
        assert_eq!(ids, ids2);
        for (a, b) in report.ranked.iter().zip(&report2.ranked) {
            assert_eq!(a.gen_vs_target_fid.to_bits(), b.gen_vs_target_fid.to_bits());
        }
    }

    #[test]
    fn per_entry_failures_are_isolated_and_all_failed_gives_empty_ranking() {
        let dir = tempfile::tempdir().unwrap();
        let (target, emb) = toy_embedder();
        let cfg = SelectionConfig {
            n_samples: 64,
            seed: 0,
        };
        let good = ZooEntry {
            checkpoint: save_generator(dir.path(), "ok.gptk", 2),
            dataset_id: "ok".into(),
        };
        let bad = ZooEntry {
            checkpoint: dir.path().join("missing.gptk"),
            dataset_id: "bad".into(),
        };
        let sources = BTreeMap::new();
        let report =
            rank_sources(&[good.clone(), bad.clone()], &sources, &target, &emb, &cfg).unwrap();
        assert_eq!(report.ranked.len(), 1);
        assert_eq!(report.ranked[0].dataset_id, "ok");
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].0, "bad");

        let report = rank_sources(&[bad.clone()], &sources, &target, &emb, &cfg).unwrap();
        assert!(report.ranked.is_empty());
        assert_eq!(report.failures.len(), 1);

        assert!(rank_sources(&[], &sources, &target, &emb, &cfg).is_err());
    }

    #[test]
    fn source_datasets_fill_in_self_and_domain_distances() {
        let dir = tempfile::tempdir().unwrap();
        let (target, emb) = toy_embedder();
        let src_data = make_synthetic(SyntheticKind::ShapesB, 120, 8, 1).unwrap();
        let zoo = vec![ZooEntry {
            checkpoint: save_generator(dir.path(), "b.gptk", 3),
            dataset_id: "shapes_b".into(),
        }];
        let mut sources = BTreeMap::new();
        sources.insert("shapes_b".to_string(), src_data.clone());
        let cfg = SelectionConfig {
            n_samples: 64,
            seed: 1,
        };
        let report = rank_sources(&zoo, &sources, &target, &emb, &cfg).unwrap();
        let row = &report.ranked[0];
        assert!(row.self_fid.is_some() && row.real_vs_real_fid.is_some());
        let rr = real_vs_real_fid(&src_data, &target, &emb).unwrap();
        assert!((row.real_vs_real_fid.unwrap() - rr).abs() < 1e-9);
        let table = report.to_table();
        assert!(table.contains("shapes_b") && table.contains(&emb.checksum));
    }

    #[test]
    fn zoo_manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zoo.json");
        std::fs::write(
            &path,
            r#"[{"checkpoint": "/tmp/a.gptk", "dataset_id": "a"},
                {"checkpoint": "/tmp/b.gptk", "dataset_id": "b"}]"#,
        )
        .unwrap();
        let zoo = load_zoo_manifest(&path).unwrap();
        assert_eq!(zoo.len(), 2);
        assert_eq!(zoo[1].dataset_id, "b");
        std::fs::write(&path, "not json").unwrap();
        assert!(load_zoo_manifest(&path).is_err());
    }
}
