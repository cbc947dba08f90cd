//! Parameter stores: named, ordered tensors with a content checksum.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::spec::{ArchitectureSpec, Conditioning, Role};

/// How a parameter is initialized when built fresh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// He/Kaiming normal with the given fan-in.
    HeNormal { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Optimizers skip non-trainable entries (normalization statistics).
    pub trainable: bool,
}

/// Ordered parameter collection for one network.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub spec: ArchitectureSpec,
    params: BTreeMap<String, ArrayD<f32>>,
}

impl ParamStore {
    pub fn new(spec: ArchitectureSpec, params: BTreeMap<String, ArrayD<f32>>) -> Self {
        ParamStore { spec, params }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f32>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f32>> {
        self.params.get_mut(name)
    }

    pub fn insert(&mut self, name: String, value: ArrayD<f32>) {
        self.params.insert(name, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f32>)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|a| a.len()).sum()
    }

    /// Content hash over (name, shape, little-endian f32 payload) in
    /// lexicographic name order. Changes iff any parameter bit changes.
    pub fn checksum(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (name, value) in &self.params {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update((value.ndim() as u64).to_le_bytes());
            for &d in value.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            let std = value.as_standard_layout();
            for &v in std.as_slice().unwrap() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    pub fn checksum_hex(&self) -> String {
        hex_string(&self.checksum())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

/// Layer manifest for a spec: a pure function of the spec.
pub fn manifest(spec: &ArchitectureSpec) -> Result<Vec<ParamDef>> {
    spec.validate()?;
    let w = spec.base_width;
    let c = spec.channels;
    let k = spec.n_classes;
    let mut defs: Vec<ParamDef> = Vec::new();

    let weight = |name: &str, shape: Vec<usize>, fan_in: usize| ParamDef {
        name: name.to_string(),
        shape,
        init: Init::HeNormal { fan_in },
        trainable: true,
    };
    let bias = |name: &str, n: usize| ParamDef {
        name: name.to_string(),
        shape: vec![n],
        init: Init::Zeros,
        trainable: true,
    };

    match spec.role {
        Role::Generator => {
            let in_dim = spec.noise_dim
                + if spec.conditioning == Conditioning::Concat {
                    k
                } else {
                    0
                };
            defs.push(weight("fc.w", vec![w * 16, in_dim], in_dim));
            defs.push(bias("fc.b", w * 16));
            for i in 0..spec.n_res_blocks {
                for bn in ["bn1", "bn2"] {
                    push_bn_defs(&mut defs, &format!("block{}.{}", i, bn), w, spec, k);
                }
                defs.push(weight(&format!("block{}.conv1.w", i), vec![w, w, 3, 3], w * 9));
                defs.push(bias(&format!("block{}.conv1.b", i), w));
                defs.push(weight(&format!("block{}.conv2.w", i), vec![w, w, 3, 3], w * 9));
                defs.push(bias(&format!("block{}.conv2.b", i), w));
                defs.push(weight(&format!("block{}.skip.w", i), vec![w, w, 1, 1], w));
                defs.push(bias(&format!("block{}.skip.b", i), w));
            }
            push_bn_defs(&mut defs, "out.bn", w, spec, k);
            defs.push(weight("out.conv.w", vec![c, w, 3, 3], w * 9));
            defs.push(bias("out.conv.b", c));
        }
        Role::Discriminator | Role::Critic => {
            defs.push(weight("stem.w", vec![w, c, 3, 3], c * 9));
            defs.push(bias("stem.b", w));
            for i in 0..spec.n_res_blocks {
                for ln in ["ln1", "ln2"] {
                    defs.push(ParamDef {
                        name: format!("block{}.{}.gamma", i, ln),
                        shape: vec![w],
                        init: Init::Ones,
                        trainable: true,
                    });
                    defs.push(ParamDef {
                        name: format!("block{}.{}.beta", i, ln),
                        shape: vec![w],
                        init: Init::Zeros,
                        trainable: true,
                    });
                }
                defs.push(weight(&format!("block{}.conv1.w", i), vec![w, w, 3, 3], w * 9));
                defs.push(bias(&format!("block{}.conv1.b", i), w));
                defs.push(weight(&format!("block{}.conv2.w", i), vec![w, w, 3, 3], w * 9));
                defs.push(bias(&format!("block{}.conv2.b", i), w));
                defs.push(weight(&format!("block{}.skip.w", i), vec![w, w, 1, 1], w));
                defs.push(bias(&format!("block{}.skip.b", i), w));
            }
            defs.push(weight("head.w", vec![1, w], w));
            defs.push(bias("head.b", 1));
            if spec.role == Role::Discriminator && spec.is_conditional() && k >= 2 {
                defs.push(weight("aux.w", vec![k, w], w));
                defs.push(bias("aux.b", k));
            }
        }
        Role::Classifier | Role::Embedder => {
            defs.push(weight("stem.w", vec![w, c, 3, 3], c * 9));
            defs.push(bias("stem.b", w));
            for i in 0..spec.n_res_blocks {
                defs.push(weight(&format!("block{}.conv.w", i), vec![w, w, 3, 3], w * 9));
                defs.push(bias(&format!("block{}.conv.b", i), w));
            }
            defs.push(weight("embed.w", vec![w, w], w));
            defs.push(bias("embed.b", w));
            defs.push(weight("head.w", vec![k, w], w));
            defs.push(bias("head.b", k));
        }
    }
    Ok(defs)
}

fn push_bn_defs(
    defs: &mut Vec<ParamDef>,
    prefix: &str,
    width: usize,
    spec: &ArchitectureSpec,
    n_classes: usize,
) {
    if spec.conditioning == Conditioning::CondBnorm && spec.role == Role::Generator {
        defs.push(ParamDef {
            name: format!("{}.gamma_bank", prefix),
            shape: vec![n_classes, width],
            init: Init::Ones,
            trainable: true,
        });
        defs.push(ParamDef {
            name: format!("{}.beta_bank", prefix),
            shape: vec![n_classes, width],
            init: Init::Zeros,
            trainable: true,
        });
    } else {
        defs.push(ParamDef {
            name: format!("{}.gamma", prefix),
            shape: vec![width],
            init: Init::Ones,
            trainable: true,
        });
        defs.push(ParamDef {
            name: format!("{}.beta", prefix),
            shape: vec![width],
            init: Init::Zeros,
            trainable: true,
        });
    }
    defs.push(ParamDef {
        name: format!("{}.running_mean", prefix),
        shape: vec![width],
        init: Init::Zeros,
        trainable: false,
    });
    defs.push(ParamDef {
        name: format!("{}.running_var", prefix),
        shape: vec![width],
        init: Init::Ones,
        trainable: false,
    });
}

/// RNG for one named parameter: stable under manifest reordering.
pub fn param_rng(seed: u64, name: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Sample an initial tensor for a definition.
pub fn init_tensor(def: &ParamDef, seed: u64) -> ArrayD<f32> {
    let n: usize = def.shape.iter().product();
    let data = match def.init {
        Init::Zeros => vec![0.0f32; n],
        Init::Ones => vec![1.0f32; n],
        Init::HeNormal { fan_in } => {
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            let mut rng = param_rng(seed, &def.name);
            (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
        }
    };
    ArrayD::from_shape_vec(IxDyn(&def.shape), data).unwrap()
}

/// Freshly initialized parameters for `spec`; deterministic in `(spec, seed)`.
pub fn build_network(spec: &ArchitectureSpec, seed: u64) -> Result<ParamStore> {
    let defs = manifest(spec)?;
    let mut params = BTreeMap::new();
    for def in &defs {
        params.insert(def.name.clone(), init_tensor(def, seed));
    }
    Ok(ParamStore::new(spec.clone(), params))
}

/// Whether a parameter participates in gradient updates.
pub fn is_trainable(name: &str) -> bool {
    !name.ends_with("running_mean") && !name.ends_with("running_var")
}

/// Names of trainable parameters in store order.
pub fn trainable_names(store: &ParamStore) -> Vec<String> {
    store
        .names()
        .filter(|n| is_trainable(n))
        .cloned()
        .collect()
}

impl ParamStore {
    /// Validates that stored tensors exactly match the spec manifest.
    pub fn check_manifest(&self) -> Result<()> {
        let defs = manifest(&self.spec)?;
        if defs.len() != self.len() {
            return Err(Error::validation(format!(
                "param count {} != manifest count {}",
                self.len(),
                defs.len()
            )));
        }
        for def in &defs {
            match self.get(&def.name) {
                None => {
                    return Err(Error::validation(format!("missing parameter {}", def.name)))
                }
                Some(v) if v.shape() != def.shape.as_slice() => {
                    return Err(Error::validation(format!(
                        "parameter {} has shape {:?}, manifest says {:?}",
                        def.name,
                        v.shape(),
                        def.shape
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
