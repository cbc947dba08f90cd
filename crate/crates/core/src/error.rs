//! Common error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or configuration was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// Checkpoint layouts do not line up for a transfer.
    #[error("transfer error: parameter `{parameter}` {reason}")]
    Transfer { parameter: String, reason: String },

    /// Checkpoint file carries an unsupported format version.
    #[error("checkpoint version mismatch: file has {found}, supported {supported}")]
    Version { found: u32, supported: u32 },

    /// Stored content hash does not match the payload.
    #[error("checkpoint checksum mismatch for {path}")]
    ChecksumMismatch { path: String },

    /// File ended before the declared payload/trailer.
    #[error("truncated checkpoint file {path}: {detail}")]
    Truncated { path: String, detail: String },

    /// A numeric routine left its domain (asymmetric/indefinite matrix, ...).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// Training produced a non-finite loss; carries a diagnostic snapshot.
    #[error("non-finite loss at iteration {iteration}: loss_d={loss_d} loss_g={loss_g} grad_norm_d={grad_norm_d}")]
    NonFiniteLoss {
        iteration: u64,
        loss_d: f64,
        loss_g: f64,
        grad_norm_d: f64,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
