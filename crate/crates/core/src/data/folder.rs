//! Image-folder ingestion: flat or one-subfolder-per-class layouts, plus an
//! optional `relative_path,label_index` manifest.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use ndarray::Array4;

use crate::error::{Error, Result};

use super::{DatasetHandle, DatasetKind};

#[derive(Debug, Clone)]
pub struct FileError {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug)]
pub struct LoadedFolder {
    pub handle: DatasetHandle,
    /// Files that could not be decoded or were missing; loading succeeds as
    /// long as at least one image was valid.
    pub file_errors: Vec<FileError>,
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
    )
}

fn decode(path: &Path, image_size: usize) -> std::result::Result<Vec<f32>, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let img = img
        .resize_exact(image_size as u32, image_size as u32, FilterType::Triangle)
        .to_rgb8();
    let mut chw = vec![0.0f32; 3 * image_size * image_size];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            // Affine map 2x/255 - 1: 0 -> -1, 255 -> 1 exactly.
            chw[c * image_size * image_size + (y as usize) * image_size + x as usize] =
                2.0 * px.0[c] as f32 / 255.0 - 1.0;
        }
    }
    Ok(chw)
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a folder of PNG/JPEG images, bilinearly resized to
/// `image_size x image_size` and normalized to `[-1, 1]`.
///
/// Labeling, in priority order: an explicit manifest CSV
/// (`relative_path,label_index`), else one-subfolder-per-class (subfolder
/// name = label, indexed in sorted order), else unlabeled.
pub fn load_image_folder(
    path: impl AsRef<Path>,
    image_size: usize,
    manifest: Option<&Path>,
) -> Result<LoadedFolder> {
    let root = path.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "{} is not a directory",
            root.display()
        )));
    }

    let mut entries: Vec<(PathBuf, Option<usize>)> = Vec::new();
    let mut file_errors = Vec::new();

    if let Some(manifest_path) = manifest {
        let text = std::fs::read_to_string(manifest_path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (rel, label) = line.rsplit_once(',').ok_or_else(|| {
                Error::Dataset(format!(
                    "{}:{}: expected `relative_path,label_index`",
                    manifest_path.display(),
                    lineno + 1
                ))
            })?;
            let label: usize = label.trim().parse().map_err(|_| {
                Error::Dataset(format!(
                    "{}:{}: bad label index `{}`",
                    manifest_path.display(),
                    lineno + 1,
                    label
                ))
            })?;
            let full = root.join(rel.trim());
            if full.is_file() {
                entries.push((full, Some(label)));
            } else {
                file_errors.push(FileError {
                    path: full,
                    reason: "missing file referenced by manifest".to_string(),
                });
            }
        }
    } else {
        let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        class_dirs.sort();
        if class_dirs.is_empty() {
            for f in sorted_files(root)? {
                entries.push((f, None));
            }
        } else {
            for (label, dir) in class_dirs.iter().enumerate() {
                for f in sorted_files(dir)? {
                    entries.push((f, Some(label)));
                }
            }
        }
    }

    let mut pixels: Vec<f32> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut labeled = true;
    let mut count = 0usize;
    for (file, label) in &entries {
        match decode(file, image_size) {
            Ok(chw) => {
                pixels.extend_from_slice(&chw);
                match label {
                    Some(l) => labels.push(*l),
                    None => labeled = false,
                }
                count += 1;
            }
            Err(reason) => file_errors.push(FileError {
                path: file.clone(),
                reason,
            }),
        }
    }
    if count == 0 {
        return Err(Error::Dataset(format!(
            "{}: no decodable images ({} errors)",
            root.display(),
            file_errors.len()
        )));
    }

    let images =
        Array4::from_shape_vec((count, 3, image_size, image_size), pixels).expect("shape");
    let handle = DatasetHandle::new(
        root.display().to_string(),
        DatasetKind::ImageFolder,
        images,
        labeled.then_some(labels),
        0,
    )?;
    Ok(LoadedFolder {
        handle,
        file_errors,
    })
}
