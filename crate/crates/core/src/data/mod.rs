//! Dataset ingestion, deterministic subsetting, and synthetic desk-scale
//! datasets with known class structure.

mod folder;
mod synthetic;

pub use folder::{load_image_folder, FileError, LoadedFolder};
pub use synthetic::{make_synthetic, SyntheticKind};

use ndarray::{Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    ImageFolder,
    Synthetic,
}

/// In-memory dataset: images normalized to `[-1, 1]`, optional labels.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub dataset_id: String,
    pub kind: DatasetKind,
    pub image_size: usize,
    pub seed: u64,
    images: Array4<f32>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
}

impl DatasetHandle {
    pub fn new(
        dataset_id: impl Into<String>,
        kind: DatasetKind,
        images: Array4<f32>,
        labels: Option<Vec<usize>>,
        seed: u64,
    ) -> Result<Self> {
        let dataset_id = dataset_id.into();
        if images.shape()[0] == 0 {
            return Err(Error::Dataset(format!("dataset {} is empty", dataset_id)));
        }
        if let Some(ls) = &labels {
            if ls.len() != images.shape()[0] {
                return Err(Error::Dataset(format!(
                    "dataset {}: {} labels for {} images",
                    dataset_id,
                    ls.len(),
                    images.shape()[0]
                )));
            }
        }
        let n_classes = labels
            .as_ref()
            .map(|ls| ls.iter().max().map(|m| m + 1).unwrap_or(0))
            .unwrap_or(0);
        let image_size = images.shape()[2];
        Ok(DatasetHandle {
            dataset_id,
            kind,
            image_size,
            seed,
            images,
            labels,
            n_classes,
        })
    }

    pub fn size(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn images(&self) -> &Array4<f32> {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Images at `indices`, stacked in that order.
    pub fn select(&self, indices: &[usize]) -> Array4<f32> {
        self.images.select(Axis(0), indices)
    }

    pub fn select_labels(&self, indices: &[usize]) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .map(|ls| indices.iter().map(|&i| ls[i]).collect())
    }

    /// Classes with no example, if any.
    pub fn missing_classes(&self, expected: usize) -> Vec<usize> {
        let mut present = vec![false; expected];
        if let Some(ls) = &self.labels {
            for &l in ls {
                if l < expected {
                    present[l] = true;
                }
            }
        }
        (0..expected).filter(|&c| !present[c]).collect()
    }
}

fn epoch_rng(dataset_id: &str, seed: u64, epoch: u64) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(dataset_id.as_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.update(epoch.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Infinite deterministic batch stream: per-epoch shuffles derived from
/// `(dataset_id, seed, epoch)`, incomplete trailing batches dropped.
pub struct BatchStream<'a> {
    ds: &'a DatasetHandle,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> BatchStream<'a> {
    pub fn new(ds: &'a DatasetHandle, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > ds.size() {
            return Err(Error::validation(format!(
                "batch_size {} invalid for dataset of {} images",
                batch_size,
                ds.size()
            )));
        }
        let mut s = BatchStream {
            ds,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        s.reshuffle();
        Ok(s)
    }

    fn reshuffle(&mut self) {
        let mut rng = epoch_rng(&self.ds.dataset_id, self.seed, self.epoch);
        self.order = (0..self.ds.size()).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    /// Next batch of (images, labels if labeled).
    pub fn next_batch(&mut self) -> (Array4<f32>, Option<Vec<usize>>) {
        if self.cursor + self.batch_size > self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let idx = &self.order[self.cursor..self.cursor + self.batch_size];
        self.cursor += self.batch_size;
        (self.ds.select(idx), self.ds.select_labels(idx))
    }
}

/// Uniform (or, for labeled sets, class-stratified) subsample without
/// replacement; deterministic given `seed`.
pub fn subset(ds: &DatasetHandle, n: usize, seed: u64) -> Result<DatasetHandle> {
    if n < 1 || n > ds.size() {
        return Err(Error::validation(format!(
            "subset size {} out of range [1, {}]",
            n,
            ds.size()
        )));
    }
    let mut rng = epoch_rng(&ds.dataset_id, seed, u64::MAX);
    let indices: Vec<usize> = match ds.labels() {
        Some(labels) if ds.n_classes >= 2 => {
            // Stratified: n/k per class, remainder spread over the first
            // classes in index order.
            let k = ds.n_classes;
            let base = n / k;
            let rem = n % k;
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let mut chosen = Vec::with_capacity(n);
            for (c, mut pool) in by_class.into_iter().enumerate() {
                let want = base + usize::from(c < rem);
                if want > pool.len() {
                    return Err(Error::validation(format!(
                        "class {} has {} images, need {} for a stratified subset of {}",
                        c,
                        pool.len(),
                        want,
                        n
                    )));
                }
                pool.shuffle(&mut rng);
                chosen.extend_from_slice(&pool[..want]);
            }
            chosen
        }
        _ => {
            let mut all: Vec<usize> = (0..ds.size()).collect();
            all.shuffle(&mut rng);
            all.truncate(n);
            all
        }
    };
    DatasetHandle::new(
        format!("{}@{}s{}", ds.dataset_id, n, seed),
        ds.kind,
        ds.select(&indices),
        ds.select_labels(&indices),
        ds.seed,
    )
}

/// Deterministic split into two disjoint parts of sizes `(n, size - n)`.
pub fn split(ds: &DatasetHandle, n: usize, seed: u64) -> Result<(DatasetHandle, DatasetHandle)> {
    if n < 1 || n >= ds.size() {
        return Err(Error::validation(format!(
            "split point {} out of range (0, {})",
            n,
            ds.size()
        )));
    }
    let mut rng = epoch_rng(&ds.dataset_id, seed, u64::MAX - 1);
    let mut all: Vec<usize> = (0..ds.size()).collect();
    all.shuffle(&mut rng);
    let (a, b) = all.split_at(n);
    let mk = |tag: &str, idx: &[usize]| {
        DatasetHandle::new(
            format!("{}-{}", ds.dataset_id, tag),
            ds.kind,
            ds.select(idx),
            ds.select_labels(idx),
            ds.seed,
        )
    };
    Ok((mk("a", a)?, mk("b", b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, labeled: bool) -> DatasetHandle {
        let images = Array4::from_shape_fn((n, 3, 4, 4), |(i, c, y, x)| {
            ((i * 7 + c * 3 + y + x) % 11) as f32 / 11.0
        });
        let labels = labeled.then(|| (0..n).map(|i| i % 5).collect());
        DatasetHandle::new("toy", DatasetKind::Synthetic, images, labels, 0).unwrap()
    }

    #[test]
    fn subset_identity_and_determinism() {
        let ds = toy(20, false);
        let s = subset(&ds, 20, 3).unwrap();
        assert_eq!(s.size(), 20);
        let a = subset(&ds, 7, 3).unwrap();
        let b = subset(&ds, 7, 3).unwrap();
        assert_eq!(a.images(), b.images());
        let c = subset(&ds, 7, 4).unwrap();
        assert_ne!(a.images(), c.images());
    }

    #[test]
    fn subset_stratified() {
        let ds = toy(100, true);
        let s = subset(&ds, 50, 1).unwrap();
        let mut counts = [0usize; 5];
        for &l in s.labels().unwrap() {
            counts[l] += 1;
        }
        assert_eq!(counts, [10, 10, 10, 10, 10]);
    }

    #[test]
    fn subset_bounds() {
        let ds = toy(10, false);
        assert!(subset(&ds, 0, 0).is_err());
        assert!(subset(&ds, 11, 0).is_err());
    }

    #[test]
    fn subset_of_subset_is_contained() {
        let ds = toy(30, false);
        let s1 = subset(&ds, 20, 5).unwrap();
        let s2 = subset(&s1, 10, 6).unwrap();
        // Every image of s2 appears in s1 (compare by content).
        for img in s2.images().outer_iter() {
            let found = s1.images().outer_iter().any(|other| img == other);
            assert!(found);
        }
    }

    #[test]
    fn batch_stream_deterministic() {
        let ds = toy(10, true);
        let collect = |seed| {
            let mut s = BatchStream::new(&ds, 4, seed).unwrap();
            (0..6).map(|_| s.next_batch()).collect::<Vec<_>>()
        };
        let a = collect(1);
        let b = collect(1);
        for ((ia, la), (ib, lb)) in a.iter().zip(b.iter()) {
            assert_eq!(ia, ib);
            assert_eq!(la, lb);
        }
        let c = collect(2);
        assert!(a.iter().zip(c.iter()).any(|((ia, _), (ic, _))| ia != ic));
    }

    #[test]
    fn split_disjoint() {
        let ds = toy(10, false);
        let (a, b) = split(&ds, 4, 0).unwrap();
        assert_eq!(a.size(), 4);
        assert_eq!(b.size(), 6);
    }
}
