//! Evaluation metrics: Fréchet distance between embedded-sample Gaussians,
//! per-class and class-agnostic variants, an independently trained
//! Wasserstein critic, and reference-classifier accuracy for conditional
//! generators.
//!
//! All Fréchet distances are computed in the feature space of a locally
//! trained, frozen embedding network. Values are therefore comparable only
//! across runs sharing an embedding checksum, which every report carries.

mod embed;
mod fid;
mod iw;

pub use embed::{
    classifier_accuracy_eval, classify, fit_embedding, fit_embedding_with, load_embeddings,
    save_embeddings, train_classifier, AccuracyReport, ClassifierConfig, EmbeddingNet,
    EMBED_DIM_DEFAULT,
};
pub use fid::{fid, fid_per_class, gaussian_stats, sqrtm_psd, GaussianStats, PerClassFid};
pub use iw::{iw, train_iw_critic, IwCriticConfig};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Fid,
    FidPerClass,
    FidAll,
    Iw,
    Accuracy,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Fid => "fid",
            MetricKind::FidPerClass => "fid_per_class",
            MetricKind::FidAll => "fid_all",
            MetricKind::Iw => "iw",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

/// One appended line of the metrics log. `label` disambiguates multi-valued
/// metrics (class index for per-class entries, empty otherwise).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub iteration: u64,
    pub metric: MetricKind,
    pub label: String,
    pub value: f64,
    pub embedding_checksum: String,
    pub n1: usize,
    pub n2: usize,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "run_id,iteration,metric,label,value,embedding_checksum,n1,n2"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            self.iteration,
            self.metric.as_str(),
            self.label,
            self.value,
            self.embedding_checksum,
            self.n1,
            self.n2
        )
    }
}
