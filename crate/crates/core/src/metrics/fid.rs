//! Gaussian sufficient statistics, PSD matrix square root, and the Fréchet
//! distance `||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2})`, evaluated via
//! the symmetric product form `Tr(sqrtm(S1^{1/2} S2 S1^{1/2}))`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Mean, unbiased covariance, and sample count of an embedded sample set.
#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub n: usize,
    /// Estimate is ill-conditioned when `n < dim + 1`; computation proceeds
    /// but downstream consumers may want to surface this.
    pub under_sampled: bool,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Exact streaming combination of two disjoint sample sets' statistics
    /// (Chan et al. pairwise update); order-independent up to floating-point
    /// reassociation.
    pub fn merge(&self, other: &GaussianStats) -> Result<GaussianStats> {
        if self.dim() != other.dim() {
            return Err(Error::validation(format!(
                "stats dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = &other.mu - &self.mu;
        let mu = &self.mu + &(&delta * (nb / n));
        // Back out scatter matrices (divisor n-1 covariance -> M2).
        let m2a = self.sigma.mapv(|v| v * (na - 1.0));
        let m2b = other.sigma.mapv(|v| v * (nb - 1.0));
        let outer = outer_product(&delta, &delta).mapv(|v| v * (na * nb / n));
        let m2 = m2a + m2b + outer;
        let sigma = symmetrize(&m2.mapv(|v| v / (n - 1.0)));
        let n = self.n + other.n;
        Ok(GaussianStats {
            under_sampled: n < self.dim() + 1,
            mu,
            sigma,
            n,
        })
    }
}

fn outer_product(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j])
}

fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    let mt = m.t();
    (m + &mt) / 2.0
}

/// Sample mean and unbiased (divisor `N-1`) covariance of `[N, d]` samples.
pub fn gaussian_stats(samples: &Array2<f64>) -> Result<GaussianStats> {
    let (n, d) = (samples.nrows(), samples.ncols());
    if n < 2 {
        return Err(Error::validation(format!(
            "covariance needs at least 2 samples, got {}",
            n
        )));
    }
    let mu = samples.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = samples - &mu.view().insert_axis(ndarray::Axis(0));
    let sigma = centered.t().dot(&centered) / (n as f64 - 1.0);
    Ok(GaussianStats {
        mu,
        sigma: symmetrize(&sigma),
        n,
        under_sampled: n < d + 1,
    })
}

/// Symmetric PSD square root via eigendecomposition. Eigenvalues below
/// `-tau` (`tau = 1e-6 * trace`) are rejected as indefinite; values in
/// `[-tau, 0)` are treated as rounding noise and clamped to zero.
pub fn sqrtm_psd(m: &Array2<f64>) -> Result<Array2<f64>> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::validation("sqrtm_psd needs a square matrix"));
    }
    let scale = 1.0 + m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let asym = (m - &m.t()).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if asym > 1e-6 * scale {
        return Err(Error::NumericDomain(format!(
            "matrix asymmetric beyond tolerance: max |M - M^T| = {:.3e}",
            asym
        )));
    }
    let trace: f64 = (0..d).map(|i| m[[i, i]]).sum();
    let tau = 1e-6 * trace.abs().max(1e-300);
    let nm = DMatrix::from_fn(d, d, |i, j| (m[[i, j]] + m[[j, i]]) / 2.0);
    let eig = SymmetricEigen::new(nm);
    let mut roots = Vec::with_capacity(d);
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -tau {
            return Err(Error::NumericDomain(format!(
                "matrix indefinite: eigenvalue {:.6e} below -{:.3e}",
                lambda, tau
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    let q = &eig.eigenvectors;
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    let r = q * lam * q.transpose();
    let out = Array2::from_shape_fn((d, d), |(i, j)| (r[(i, j)] + r[(j, i)]) / 2.0);
    Ok(out)
}

/// Fréchet distance between two Gaussians given their statistics, clamped
/// to zero when rounding drives it slightly (within 1e-6) negative.
pub fn fid(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::validation(format!(
            "stats dimension mismatch: {} vs {}",
            s1.dim(),
            s2.dim()
        )));
    }
    let diff = &s1.mu - &s2.mu;
    let mean_term: f64 = diff.iter().map(|v| v * v).sum();
    let s1_root = sqrtm_psd(&s1.sigma)?;
    let inner = s1_root.dot(&s2.sigma).dot(&s1_root);
    let cross = sqrtm_psd(&symmetrize(&inner))?;
    let tr = |m: &Array2<f64>| (0..m.nrows()).map(|i| m[[i, i]]).sum::<f64>();
    let value = mean_term + tr(&s1.sigma) + tr(&s2.sigma) - 2.0 * tr(&cross);
    if value < -1e-6 {
        return Err(Error::NumericDomain(format!(
            "Fréchet distance {:.3e} more negative than rounding tolerance",
            value
        )));
    }
    Ok(value.max(0.0))
}

/// Per-class, averaged, and class-agnostic Fréchet distances.
#[derive(Debug, Clone)]
pub struct PerClassFid {
    /// One entry per class in the union vocabulary; `Err` carries the reason
    /// (class missing on one side, too few samples, ...).
    pub per_class: BTreeMap<usize, std::result::Result<f64, String>>,
    /// Unweighted mean over the successfully computed classes.
    pub avg: f64,
    /// Distance on pooled (label-ignoring) embeddings.
    pub all: f64,
}

/// Class-wise Fréchet distances over matched-label subsets plus the pooled
/// ("All") value. A class present on only one side yields an error entry for
/// that class; the rest are still computed.
pub fn fid_per_class(
    real: &Array2<f64>,
    real_labels: &[usize],
    gen: &Array2<f64>,
    gen_labels: &[usize],
) -> Result<PerClassFid> {
    if real.nrows() != real_labels.len() || gen.nrows() != gen_labels.len() {
        return Err(Error::validation("label count does not match sample count"));
    }
    if real.ncols() != gen.ncols() {
        return Err(Error::validation("embedding dimension mismatch"));
    }
    let classes: BTreeSet<usize> = real_labels.iter().chain(gen_labels).copied().collect();
    let rows_of = |emb: &Array2<f64>, labels: &[usize], class: usize| -> Array2<f64> {
        let idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        emb.select(ndarray::Axis(0), &idx)
    };
    let class_fid = |class: usize| -> std::result::Result<f64, String> {
        let r = rows_of(real, real_labels, class);
        let g = rows_of(gen, gen_labels, class);
        if r.nrows() == 0 || g.nrows() == 0 {
            return Err(format!(
                "class {} present on {} side only",
                class,
                if r.nrows() == 0 { "generated" } else { "real" }
            ));
        }
        let sr = gaussian_stats(&r).map_err(|e| e.to_string())?;
        let sg = gaussian_stats(&g).map_err(|e| e.to_string())?;
        fid(&sr, &sg).map_err(|e| e.to_string())
    };
    let per_class: BTreeMap<usize, std::result::Result<f64, String>> =
        classes.iter().map(|&c| (c, class_fid(c))).collect();
    let ok: Vec<f64> = per_class.values().filter_map(|r| r.as_ref().ok().copied()).collect();
    if ok.is_empty() {
        return Err(Error::validation(
            "no class could be evaluated on both sides",
        ));
    }
    let avg = ok.iter().sum::<f64>() / ok.len() as f64;
    let all = fid(&gaussian_stats(real)?, &gaussian_stats(gen)?)?;
    Ok(PerClassFid {
        per_class,
        avg,
        all,
    })
}
