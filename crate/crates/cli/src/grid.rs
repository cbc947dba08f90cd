//! Sample-grid images: a deterministic rows x cols montage of generated
//! samples saved as PNG. For conditional generators, row r is conditioned on
//! class r.

use std::path::Path;

use gptk_core::model_zoo::{forward_generator, sample_noise, ParamStore};
use gptk_core::transfer::sample_images;
use gptk_core::{Error, Result};
use ndarray::Array4;

const PAD: u32 = 2;

/// Renders a grid of generated samples. With `per_class_rows`, the generator
/// must be conditional and row r is conditioned on class r (requires
/// `n_rows <= n_classes`).
pub fn sample_grid(
    g: &ParamStore,
    n_rows: usize,
    n_cols: usize,
    seed: u64,
    per_class_rows: bool,
    out: &Path,
) -> Result<()> {
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::validation("grid needs at least one row and column"));
    }
    let images: Array4<f32> = if per_class_rows {
        if !g.spec.is_conditional() {
            return Err(Error::validation(
                "per-class rows requested for an unconditional generator",
            ));
        }
        if n_rows > g.spec.n_classes {
            return Err(Error::validation(format!(
                "{} rows requested but generator has {} classes",
                n_rows, g.spec.n_classes
            )));
        }
        let mut rng = rand_chacha_rng(seed);
        let mut chunks = Vec::new();
        for class in 0..n_rows {
            let z = sample_noise(&mut rng, n_cols, g.spec.noise_dim);
            chunks.push(forward_generator(g, &z, Some(&vec![class; n_cols]))?);
        }
        let views: Vec<_> = chunks.iter().map(|a| a.view()).collect();
        ndarray::concatenate(ndarray::Axis(0), &views).expect("grid concat")
    } else if g.spec.is_conditional() {
        sample_images_cycling(g, n_rows * n_cols, seed)?
    } else {
        sample_images(g, n_rows * n_cols, seed)?
    };
    write_montage(&images, n_rows, n_cols, out)
}

fn sample_images_cycling(g: &ParamStore, n: usize, seed: u64) -> Result<Array4<f32>> {
    // Conditional generator without per-class layout: cycle classes.
    let mut rng = rand_chacha_rng(seed);
    let z = sample_noise(&mut rng, n, g.spec.noise_dim);
    let labels: Vec<usize> = (0..n).map(|i| i % g.spec.n_classes).collect();
    forward_generator(g, &z, Some(&labels))
}

fn rand_chacha_rng(seed: u64) -> rand_chacha::ChaCha20Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha20Rng::seed_from_u64(seed)
}

/// Lays `n_rows * n_cols` images (values in [-1, 1]) out on a padded canvas.
fn write_montage(images: &Array4<f32>, n_rows: usize, n_cols: usize, out: &Path) -> Result<()> {
    let n = n_rows * n_cols;
    if images.shape()[0] < n {
        return Err(Error::validation(format!(
            "{} images for a {}x{} grid",
            images.shape()[0],
            n_rows,
            n_cols
        )));
    }
    let s = images.shape()[2] as u32;
    let width = n_cols as u32 * (s + PAD) + PAD;
    let height = n_rows as u32 * (s + PAD) + PAD;
    let mut canvas = image::RgbImage::from_pixel(width, height, image::Rgb([32, 32, 32]));
    for r in 0..n_rows {
        for c in 0..n_cols {
            let idx = r * n_cols + c;
            let (x0, y0) = (c as u32 * (s + PAD) + PAD, r as u32 * (s + PAD) + PAD);
            for y in 0..s {
                for x in 0..s {
                    let px = |ch: usize| {
                        let v = images[[idx, ch, y as usize, x as usize]];
                        (((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * 255.0).round() as u8
                    };
                    canvas.put_pixel(x0 + x, y0 + y, image::Rgb([px(0), px(1), px(2)]));
                }
            }
        }
    }
    canvas
        .save(out)
        .map_err(|e| Error::validation(format!("writing {}: {}", out.display(), e)))?;
    Ok(())
}
