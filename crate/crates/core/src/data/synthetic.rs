//! Procedurally rendered toy datasets with known class structure.
//!
//! `ShapesA` and `ShapesB` share strokes and palette but differ in layout —
//! a controlled related-domain pair for transfer experiments. `FacesToy` is
//! deliberately unrelated (different palette and structure).

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{DatasetHandle, DatasetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    EightGaussiansRgb,
    ShapesA,
    ShapesB,
    FacesToy,
}

impl SyntheticKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eight_gaussians_rgb" => Ok(Self::EightGaussiansRgb),
            "shapes_a" => Ok(Self::ShapesA),
            "shapes_b" => Ok(Self::ShapesB),
            "faces_toy" => Ok(Self::FacesToy),
            other => Err(Error::validation(format!(
                "unknown synthetic dataset kind `{}`",
                other
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::EightGaussiansRgb => "eight_gaussians_rgb",
            Self::ShapesA => "shapes_a",
            Self::ShapesB => "shapes_b",
            Self::FacesToy => "faces_toy",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Self::EightGaussiansRgb => 8,
            Self::ShapesA | Self::ShapesB => 3,
            Self::FacesToy => 3,
        }
    }
}

/// Per-pixel canvas in unit coordinates `[-1, 1]^2`.
struct Canvas {
    size: usize,
    data: Vec<f32>, // [3, S, S]
    soft: f32,
}

impl Canvas {
    fn new(size: usize, bg: [f32; 3]) -> Self {
        let mut data = vec![0.0; 3 * size * size];
        for c in 0..3 {
            data[c * size * size..(c + 1) * size * size].fill(bg[c]);
        }
        Canvas {
            size,
            data,
            soft: 2.0 / size as f32,
        }
    }

    fn coord(&self, i: usize) -> f32 {
        (2.0 * (i as f32 + 0.5) / self.size as f32) - 1.0
    }

    /// Alpha-blend `color` wherever the signed distance `sdf(u,v) < 0`,
    /// with a soft edge for learnable gradients.
    fn paint(&mut self, color: [f32; 3], sdf: impl Fn(f32, f32) -> f32) {
        let s = self.size;
        for y in 0..s {
            let v = self.coord(y);
            for x in 0..s {
                let u = self.coord(x);
                let d = sdf(u, v);
                let a = (0.5 - d / (2.0 * self.soft)).clamp(0.0, 1.0);
                if a > 0.0 {
                    for c in 0..3 {
                        let px = &mut self.data[c * s * s + y * s + x];
                        *px = *px * (1.0 - a) + color[c] * a;
                    }
                }
            }
        }
    }
}

fn disc_sdf(cx: f32, cy: f32, r: f32) -> impl Fn(f32, f32) -> f32 {
    move |u, v| ((u - cx).powi(2) + (v - cy).powi(2)).sqrt() - r
}

fn box_sdf(cx: f32, cy: f32, hw: f32, hh: f32) -> impl Fn(f32, f32) -> f32 {
    move |u, v| {
        let dx = (u - cx).abs() - hw;
        let dy = (v - cy).abs() - hh;
        dx.max(dy)
    }
}

/// Shared stroke palette of the shapes domains.
const SHAPE_PALETTE: [[f32; 3]; 3] = [
    [0.9, 0.2, -0.6],
    [-0.2, 0.8, 0.0],
    [0.1, 0.3, 0.9],
];
const SHAPE_BG: [f32; 3] = [-0.85, -0.85, -0.8];

fn draw_shape(canvas: &mut Canvas, class: usize, color: [f32; 3], cx: f32, cy: f32, size: f32) {
    match class {
        0 => canvas.paint(color, disc_sdf(cx, cy, size)),
        1 => canvas.paint(color, box_sdf(cx, cy, size, size)),
        _ => {
            // Cross: two overlapping bars.
            let t = size * 0.4;
            canvas.paint(color, box_sdf(cx, cy, size, t));
            canvas.paint(color, box_sdf(cx, cy, t, size));
        }
    }
}

fn normal(rng: &mut ChaCha20Rng, std: f32) -> f32 {
    let v: f64 = StandardNormal.sample(rng);
    v as f32 * std
}

fn render(kind: SyntheticKind, class: usize, rng: &mut ChaCha20Rng, size: usize) -> Vec<f32> {
    match kind {
        SyntheticKind::EightGaussiansRgb => {
            let mut canvas = Canvas::new(size, [-0.9, -0.9, -0.9]);
            let angle = std::f32::consts::TAU * class as f32 / 8.0;
            let cx = 0.55 * angle.cos() + normal(rng, 0.07);
            let cy = 0.55 * angle.sin() + normal(rng, 0.07);
            let hue = std::f32::consts::TAU * class as f32 / 8.0;
            let color = [
                0.8 * hue.cos(),
                0.8 * (hue + 2.1).cos(),
                0.8 * (hue + 4.2).cos(),
            ];
            canvas.paint(color, disc_sdf(cx, cy, 0.35));
            canvas.data
        }
        SyntheticKind::ShapesA => {
            // Large, centered shape.
            let mut canvas = Canvas::new(size, SHAPE_BG);
            let color = SHAPE_PALETTE[rng.gen_range(0..SHAPE_PALETTE.len())];
            let cx = normal(rng, 0.08);
            let cy = normal(rng, 0.08);
            let s = 0.45 + normal(rng, 0.04);
            draw_shape(&mut canvas, class, color, cx, cy, s.clamp(0.3, 0.6));
            canvas.data
        }
        SyntheticKind::ShapesB => {
            // Same strokes and palette, smaller and pushed to a corner.
            let mut canvas = Canvas::new(size, SHAPE_BG);
            let color = SHAPE_PALETTE[rng.gen_range(0..SHAPE_PALETTE.len())];
            let corner = rng.gen_range(0..4usize);
            let (sx, sy) = ([-1.0, 1.0][corner % 2], [-1.0, 1.0f32][corner / 2]);
            let cx = 0.42 * sx + normal(rng, 0.06);
            let cy = 0.42 * sy + normal(rng, 0.06);
            let s = 0.24 + normal(rng, 0.03);
            draw_shape(&mut canvas, class, color, cx, cy, s.clamp(0.15, 0.35));
            canvas.data
        }
        SyntheticKind::FacesToy => {
            // Bright cartoon face; palette disjoint from the shapes domains.
            let mut canvas = Canvas::new(size, [0.85, 0.8, 0.55]);
            let cx = normal(rng, 0.05);
            let cy = normal(rng, 0.05);
            canvas.paint([0.9, 0.45, 0.15], disc_sdf(cx, cy, 0.62));
            let eye_dx = 0.25 + normal(rng, 0.02);
            canvas.paint([-0.9, -0.9, -0.9], disc_sdf(cx - eye_dx, cy - 0.18, 0.09));
            canvas.paint([-0.9, -0.9, -0.9], disc_sdf(cx + eye_dx, cy - 0.18, 0.09));
            match class {
                0 => canvas.paint([-0.8, -0.8, -0.8], box_sdf(cx, cy + 0.28, 0.26, 0.05)),
                1 => canvas.paint([-0.8, -0.8, -0.8], box_sdf(cx, cy + 0.28, 0.10, 0.05)),
                _ => canvas.paint([-0.8, -0.8, -0.8], disc_sdf(cx, cy + 0.3, 0.13)),
            }
            canvas.data
        }
    }
}

/// Procedurally rendered labeled dataset; bit-identical for equal
/// `(kind, n, image_size, seed)`.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    image_size: usize,
    seed: u64,
) -> Result<DatasetHandle> {
    if n < 1 {
        return Err(Error::validation("synthetic dataset needs n >= 1"));
    }
    let k = kind.n_classes();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5944_7447_u64);
    let mut pixels = Vec::with_capacity(n * 3 * image_size * image_size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        pixels.extend_from_slice(&render(kind, class, &mut rng, image_size));
        labels.push(class);
    }
    let images = Array4::from_shape_vec((n, 3, image_size, image_size), pixels).expect("shape");
    DatasetHandle::new(
        format!("{}-{}x{}-s{}", kind.id(), n, image_size, seed),
        DatasetKind::Synthetic,
        images,
        Some(labels),
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = make_synthetic(SyntheticKind::ShapesA, 12, 8, 3).unwrap();
        let b = make_synthetic(SyntheticKind::ShapesA, 12, 8, 3).unwrap();
        assert_eq!(a.images(), b.images());
        let c = make_synthetic(SyntheticKind::ShapesA, 12, 8, 4).unwrap();
        assert_ne!(a.images(), c.images());
    }

    #[test]
    fn eight_gaussians_uniform_classes() {
        let ds = make_synthetic(SyntheticKind::EightGaussiansRgb, 64, 8, 0).unwrap();
        assert_eq!(ds.n_classes(), 8);
        let mut counts = [0usize; 8];
        for &l in ds.labels().unwrap() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 8));
    }

    #[test]
    fn values_in_range() {
        for kind in [
            SyntheticKind::EightGaussiansRgb,
            SyntheticKind::ShapesA,
            SyntheticKind::ShapesB,
            SyntheticKind::FacesToy,
        ] {
            let ds = make_synthetic(kind, 6, 16, 1).unwrap();
            assert!(ds.images().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!(SyntheticKind::parse("mystery").is_err());
    }
}
