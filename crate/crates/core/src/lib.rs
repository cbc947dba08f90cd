//! Desk-scale laboratory for transferring pre-trained GANs to new image
//! domains: source training, fine-tuning under controlled transfer
//! configurations, conditional variants initialized from unconditional
//! weights, and evaluation with FID and an independent Wasserstein critic.

pub mod conditional;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model_zoo;
pub mod selection;
pub mod tensor;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
