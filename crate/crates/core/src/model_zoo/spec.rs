//! Declarative network descriptions from which parameter layouts derive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
    Critic,
    Classifier,
    Embedder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    None,
    Concat,
    CondBnorm,
}

/// Generator-side normalization. The lineage this family follows uses batch
/// normalization in the generator only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormG {
    Batch,
}

/// Discriminator-side normalization; layer norm keeps samples independent,
/// which the gradient penalty relies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormD {
    Layer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub role: Role,
    /// Output/input resolution; must equal `4 * 2^n_res_blocks`.
    pub image_size: usize,
    pub channels: usize,
    /// Filter count per layer; half-capacity models use 32.
    pub base_width: usize,
    pub n_res_blocks: usize,
    pub noise_dim: usize,
    /// 0 = unconditional.
    pub n_classes: usize,
    pub conditioning: Conditioning,
    pub norm_g: NormG,
    pub norm_d: NormD,
}

impl ArchitectureSpec {
    pub fn generator(image_size: usize, base_width: usize) -> Self {
        ArchitectureSpec {
            role: Role::Generator,
            image_size,
            channels: 3,
            base_width,
            n_res_blocks: res_blocks_for(image_size),
            noise_dim: 128,
            n_classes: 0,
            conditioning: Conditioning::None,
            norm_g: NormG::Batch,
            norm_d: NormD::Layer,
        }
    }

    pub fn discriminator(image_size: usize, base_width: usize) -> Self {
        ArchitectureSpec {
            role: Role::Discriminator,
            ..Self::generator(image_size, base_width)
        }
    }

    pub fn critic(image_size: usize, base_width: usize) -> Self {
        ArchitectureSpec {
            role: Role::Critic,
            ..Self::generator(image_size, base_width)
        }
    }

    pub fn classifier(image_size: usize, base_width: usize, n_classes: usize) -> Self {
        ArchitectureSpec {
            role: Role::Classifier,
            n_classes,
            ..Self::generator(image_size, base_width)
        }
    }

    pub fn embedder(image_size: usize, base_width: usize, n_classes: usize) -> Self {
        ArchitectureSpec {
            role: Role::Embedder,
            n_classes,
            ..Self::generator(image_size, base_width)
        }
    }

    pub fn with_noise_dim(mut self, noise_dim: usize) -> Self {
        self.noise_dim = noise_dim;
        self
    }

    pub fn with_conditioning(mut self, conditioning: Conditioning, n_classes: usize) -> Self {
        self.conditioning = conditioning;
        self.n_classes = n_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size != 4 * (1 << self.n_res_blocks) {
            return Err(Error::validation(format!(
                "image_size {} incompatible with n_res_blocks {} (need 4*2^{} = {})",
                self.image_size,
                self.n_res_blocks,
                self.n_res_blocks,
                4 * (1usize << self.n_res_blocks)
            )));
        }
        if self.channels == 0 || self.base_width == 0 {
            return Err(Error::validation("channels and base_width must be positive"));
        }
        if self.noise_dim == 0 && self.role == Role::Generator {
            return Err(Error::validation("generator needs noise_dim >= 1"));
        }
        if self.conditioning != Conditioning::None && self.n_classes < 2 {
            return Err(Error::validation(format!(
                "conditioning requires n_classes >= 2, got {}",
                self.n_classes
            )));
        }
        if matches!(self.role, Role::Classifier | Role::Embedder) && self.n_classes < 2 {
            return Err(Error::validation("classifier/embedder needs n_classes >= 2"));
        }
        Ok(())
    }

    /// Two specs can exchange parameters iff everything except the
    /// conditioning fields matches. This predicate gates transfer.
    pub fn layout_compatible(&self, other: &ArchitectureSpec) -> bool {
        self.role == other.role
            && self.image_size == other.image_size
            && self.channels == other.channels
            && self.base_width == other.base_width
            && self.n_res_blocks == other.n_res_blocks
            && self.noise_dim == other.noise_dim
            && self.norm_g == other.norm_g
            && self.norm_d == other.norm_d
    }

    pub fn is_conditional(&self) -> bool {
        self.conditioning != Conditioning::None
    }
}

/// Residual block count matching a resolution (`size = 4 * 2^n`).
pub fn res_blocks_for(image_size: usize) -> usize {
    let mut n = 0;
    let mut s = 4;
    while s < image_size {
        s *= 2;
        n += 1;
    }
    n
}
