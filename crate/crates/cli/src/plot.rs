//! Metric-curve plotting: one curve per run, smoothed by a trailing moving
//! average (window 1 = raw values), emitted as a self-contained SVG.

use std::path::Path;

use gptk_core::{Error, Result};

/// Trailing moving average: element `i` averages the last `min(i+1, window)`
/// raw values. `window = 1` is the identity.
pub fn moving_average(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::validation("smoothing window must be >= 1"));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i.min(window - 1) + 1) as f64);
    }
    Ok(out)
}

/// One named curve of `(x, y)` points.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Renders labeled curves to an SVG file with axes and a legend.
pub fn render_svg(
    curves: &[Curve],
    title: &str,
    x_label: &str,
    y_label: &str,
    out: &Path,
) -> Result<()> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(Error::validation("nothing to plot: all curves are empty"));
    }
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.points.iter().copied()).collect();
    let (mut x0, mut x1) = min_max(all.iter().map(|p| p.0));
    let (mut y0, mut y1) = min_max(all.iter().map(|p| p.1));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        w / 2.0,
        escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            sx(xv),
            h - mb + 18.0,
            xv
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        (ml + w - mr) / 2.0,
        h - 10.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        escape(y_label)
    ));
    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
            color,
            pts.join(" ")
        ));
        let ly = mt + 16.0 * i as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"/>\n<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            w - mr - 140.0,
            w - mr - 120.0,
            color,
            w - mr - 114.0,
            ly + 4.0,
            escape(&curve.label)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(out, svg)?;
    Ok(())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_is_identity() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(moving_average(&v, 1).unwrap(), v.to_vec());
        assert!(moving_average(&v, 0).is_err());
    }

    #[test]
    fn constant_series_stays_constant() {
        let v = [2.5; 40];
        for avg in moving_average(&v, 20).unwrap() {
            assert!((avg - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn trailing_window_matches_hand_computation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let got = moving_average(&v, 2).unwrap();
        assert_eq!(got, vec![1.0, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn svg_has_one_polyline_per_curve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let curves = vec![
            Curve {
                label: "a".into(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            },
            Curve {
                label: "b".into(),
                points: vec![(0.0, 2.0), (1.0, 1.0)],
            },
        ];
        render_svg(&curves, "t", "x", "y", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains(">a</text>") && text.contains(">b</text>"));
        assert!(render_svg(&[], "t", "x", "y", &path).is_err());
    }
}
