//! Data-movement kernels backing the convolution and pooling tape ops.
//!
//! Convolution is expressed as `matmul(W, im2col(x))`; `im2col`/`col2im`
//! are exact adjoints, as are `upsample2x`/`sum_pool2x`, so double backprop
//! through them needs no special cases.

use ndarray::{ArrayD, IxDyn};

use super::Scalar;

/// Geometry of a patch-unfold: kernel size, stride, zero padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(input_shape: &[usize], kernel: usize, stride: usize, pad: usize) -> Self {
        assert_eq!(input_shape.len(), 4, "conv input must be [B,C,H,W]");
        ConvGeom {
            batch: input_shape[0],
            channels: input_shape[1],
            height: input_shape[2],
            width: input_shape[3],
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

/// `[B,C,H,W] -> [C*k*k, B*Ho*Wo]`, column index `(b*Ho + i)*Wo + j`.
pub fn im2col<T: Scalar>(x: &ArrayD<T>, geom: &ConvGeom) -> ArrayD<T> {
    let (b, c, h, w) = (geom.batch, geom.channels, geom.height, geom.width);
    let (k, s, p) = (geom.kernel, geom.stride, geom.pad);
    let (ho, wo) = (geom.out_height(), geom.out_width());
    debug_assert_eq!(x.shape(), &[b, c, h, w]);

    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let cols_n = b * ho * wo;
    let mut out = vec![T::zero(); c * k * k * cols_n];

    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let orow = &mut out[row * cols_n..(row + 1) * cols_n];
                for bi in 0..b {
                    let xbase = (bi * c + ci) * h * w;
                    for i in 0..ho {
                        let yi = (i * s + ki) as isize - p as isize;
                        let obase = (bi * ho + i) * wo;
                        if yi < 0 || yi >= h as isize {
                            continue;
                        }
                        let xrow = xbase + (yi as usize) * w;
                        for j in 0..wo {
                            let xj = (j * s + kj) as isize - p as isize;
                            if xj < 0 || xj >= w as isize {
                                continue;
                            }
                            orow[obase + j] = xv[xrow + xj as usize];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[c * k * k, cols_n]), out).unwrap()
}

/// Adjoint of [`im2col`]: scatter-add patch columns back onto `[B,C,H,W]`.
pub fn col2im<T: Scalar>(cols: &ArrayD<T>, geom: &ConvGeom) -> ArrayD<T> {
    let (b, c, h, w) = (geom.batch, geom.channels, geom.height, geom.width);
    let (k, s, p) = (geom.kernel, geom.stride, geom.pad);
    let (ho, wo) = (geom.out_height(), geom.out_width());
    let cols_n = b * ho * wo;
    debug_assert_eq!(cols.shape(), &[c * k * k, cols_n]);

    let cs = cols.as_standard_layout();
    let cv = cs.as_slice().unwrap();
    let mut out = vec![T::zero(); b * c * h * w];

    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let crow = &cv[row * cols_n..(row + 1) * cols_n];
                for bi in 0..b {
                    let xbase = (bi * c + ci) * h * w;
                    for i in 0..ho {
                        let yi = (i * s + ki) as isize - p as isize;
                        let cbase = (bi * ho + i) * wo;
                        if yi < 0 || yi >= h as isize {
                            continue;
                        }
                        let xrow = xbase + (yi as usize) * w;
                        for j in 0..wo {
                            let xj = (j * s + kj) as isize - p as isize;
                            if xj < 0 || xj >= w as isize {
                                continue;
                            }
                            out[xrow + xj as usize] += crow[cbase + j];
                        }
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[b, c, h, w]), out).unwrap()
}

pub fn upsample2x<T: Scalar>(x: &ArrayD<T>) -> ArrayD<T> {
    let sh = x.shape();
    let (b, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let mut out = vec![T::zero(); b * c * 4 * h * w];
    let (h2, w2) = (2 * h, 2 * w);
    for bc in 0..b * c {
        let src = &xv[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * h2 * w2..(bc + 1) * h2 * w2];
        for i in 0..h {
            for j in 0..w {
                let v = src[i * w + j];
                let d = 2 * i * w2 + 2 * j;
                dst[d] = v;
                dst[d + 1] = v;
                dst[d + w2] = v;
                dst[d + w2 + 1] = v;
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[b, c, h2, w2]), out).unwrap()
}

pub fn sum_pool2x<T: Scalar>(x: &ArrayD<T>) -> ArrayD<T> {
    let sh = x.shape();
    let (b, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "sum_pool2x: odd spatial size");
    let (h2, w2) = (h / 2, w / 2);
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let mut out = vec![T::zero(); b * c * h2 * w2];
    for bc in 0..b * c {
        let src = &xv[bc * h * w..(bc + 1) * h * w];
        let dst = &mut out[bc * h2 * w2..(bc + 1) * h2 * w2];
        for i in 0..h2 {
            for j in 0..w2 {
                let s = 2 * i * w + 2 * j;
                dst[i * w2 + j] = src[s] + src[s + 1] + src[s + w] + src[s + w + 1];
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[b, c, h2, w2]), out).unwrap()
}

/// `bank[K, ...] -> out[B, ...]` with `out[i] = bank[labels[i]]`.
pub fn index_rows<T: Scalar>(bank: &ArrayD<T>, labels: &[usize]) -> ArrayD<T> {
    let rows = bank.shape()[0];
    let row_len: usize = bank.shape()[1..].iter().product();
    let bs = bank.as_standard_layout();
    let bv = bs.as_slice().unwrap();
    let mut out = vec![T::zero(); labels.len() * row_len];
    for (i, &l) in labels.iter().enumerate() {
        assert!(l < rows, "index_rows: label {} out of {} rows", l, rows);
        out[i * row_len..(i + 1) * row_len].copy_from_slice(&bv[l * row_len..(l + 1) * row_len]);
    }
    let mut shape = vec![labels.len()];
    shape.extend_from_slice(&bank.shape()[1..]);
    ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap()
}

/// Adjoint of [`index_rows`]: scatter-add `[B, ...]` rows into `rows` bank rows.
pub fn scatter_rows<T: Scalar>(x: &ArrayD<T>, labels: &[usize], rows: usize) -> ArrayD<T> {
    let row_len: usize = x.shape()[1..].iter().product();
    debug_assert_eq!(x.shape()[0], labels.len());
    let xs = x.as_standard_layout();
    let xv = xs.as_slice().unwrap();
    let mut out = vec![T::zero(); rows * row_len];
    for (i, &l) in labels.iter().enumerate() {
        let dst = &mut out[l * row_len..(l + 1) * row_len];
        for (d, s) in dst.iter_mut().zip(&xv[i * row_len..(i + 1) * row_len]) {
            *d += *s;
        }
    }
    let mut shape = vec![rows];
    shape.extend_from_slice(&x.shape()[1..]);
    ArrayD::from_shape_vec(IxDyn(&shape), out).unwrap()
}
