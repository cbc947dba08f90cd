//! The frozen embedding network behind every Fréchet distance, the
//! reference classifier, and the embedded-sample cache files.
//!
//! A small convolutional classifier is trained on labeled data, frozen, and
//! its penultimate (tanh) layer used as the embedding. The network's
//! checksum tags every metric computed with it: distances are comparable
//! only within one checksum.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{BatchStream, DatasetHandle};
use crate::error::{Error, Result};
use crate::model_zoo::{
    build_network, forward_classifier, forward_classifier_taped, forward_generator, load_onto_tape,
    sample_noise, trainable_vars, ArchitectureSpec, ParamStore, Role,
};
use crate::tensor::Tape;
use crate::train::{Adam, TrainConfig};

/// Embedding width used when the caller does not size it explicitly.
pub const EMBED_DIM_DEFAULT: usize = 64;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            iterations: 500,
            batch_size: 32,
            lr: 3e-3,
            seed: 0,
        }
    }
}

/// Frozen feature extractor; `embed_dim` equals the network's base width.
#[derive(Debug, Clone)]
pub struct EmbeddingNet {
    pub params: ParamStore,
    pub embed_dim: usize,
    pub checksum: String,
}

impl EmbeddingNet {
    pub fn new(params: ParamStore) -> Result<Self> {
        if !matches!(params.spec.role, Role::Classifier | Role::Embedder) {
            return Err(Error::validation(
                "embedding network must have a classifier or embedder role",
            ));
        }
        let checksum = params.checksum_hex();
        Ok(EmbeddingNet {
            embed_dim: params.spec.base_width,
            checksum,
            params,
        })
    }

    /// Embeds `[N, C, S, S]` images to `[N, embed_dim]`, batched to bound
    /// peak memory.
    pub fn embed(&self, images: &Array4<f32>) -> Result<Array2<f64>> {
        let n = images.shape()[0];
        let mut out = Array2::zeros((n, self.embed_dim));
        let chunk = 256;
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            let batch = images
                .slice(ndarray::s![start..end, .., .., ..])
                .to_owned();
            let (emb, _) = forward_classifier(&self.params, &batch)?;
            for (i, row) in emb.rows().into_iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    out[[start + i, j]] = v as f64;
                }
            }
            start = end;
        }
        Ok(out)
    }
}

/// Supervised training of a classifier/embedder network with softmax
/// cross-entropy; deterministic given the config seed.
pub fn train_classifier(
    data: &DatasetHandle,
    spec: &ArchitectureSpec,
    cfg: &ClassifierConfig,
) -> Result<ParamStore> {
    if !data.is_labeled() || data.n_classes() < 2 {
        return Err(Error::validation(
            "classifier training needs labeled data with at least 2 classes",
        ));
    }
    if !matches!(spec.role, Role::Classifier | Role::Embedder) {
        return Err(Error::validation("spec role must be classifier or embedder"));
    }
    if spec.n_classes != data.n_classes() {
        return Err(Error::validation(format!(
            "spec expects {} classes, data has {}",
            spec.n_classes,
            data.n_classes()
        )));
    }
    if spec.image_size != data.image_size {
        return Err(Error::validation(format!(
            "spec image size {} != data image size {}",
            spec.image_size, data.image_size
        )));
    }
    let mut net = build_network(spec, cfg.seed)?;
    let adam_cfg = TrainConfig {
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        beta1: 0.9,
        beta2: 0.999,
        iterations: cfg.iterations,
        n_critic: 1,
        gp_lambda: 0.0,
        seed: cfg.seed,
    };
    let mut adam = Adam::new(&adam_cfg);
    let batch = cfg.batch_size.min(data.size());
    let mut stream = BatchStream::new(data, batch, cfg.seed)?;
    let k = spec.n_classes;

    for iter in 0..cfg.iterations {
        let (x, labels) = stream.next_batch();
        let labels = labels.expect("labeled dataset");
        let b = x.shape()[0];
        let tape = Tape::<f32>::new();
        let vars = load_onto_tape(&tape, &net);
        let xv = tape.constant(x.into_dyn());
        let (_, logits) = forward_classifier_taped(&tape, spec, &vars, xv)?;
        let probs = crate::model_zoo::softmax(&tape, logits);
        let probs = tape.clamp_min(probs, 1e-7);
        let logp = tape.ln(probs);
        let mut hot = ArrayD::zeros(IxDyn(&[b, k]));
        for (i, &l) in labels.iter().enumerate() {
            hot[[i, l]] = 1.0f32;
        }
        let hot = tape.constant(hot);
        let picked = tape.mul(logp, hot);
        let loss = tape.scale(tape.sum_all(picked), -1.0 / b as f32);
        let loss_val = tape.scalar(loss) as f64;
        if !loss_val.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                loss_d: loss_val,
                loss_g: f64::NAN,
                grad_norm_d: f64::NAN,
            });
        }
        let tv = trainable_vars(&net, &vars);
        let wrt: Vec<_> = tv.iter().map(|(_, v)| *v).collect();
        let gs = tape.grad(loss, &wrt);
        let grads: Vec<(String, ArrayD<f32>)> = tv
            .iter()
            .zip(gs)
            .filter_map(|((n, _), gv)| gv.map(|v| (n.clone(), tape.value(v))))
            .collect();
        adam.step(&mut net, &grads);
    }
    Ok(net)
}

/// Trains and freezes the embedding network at the default width.
pub fn fit_embedding(data: &DatasetHandle, seed: u64) -> Result<EmbeddingNet> {
    fit_embedding_with(data, seed, EMBED_DIM_DEFAULT, ClassifierConfig::default().iterations)
}

/// Trains and freezes an embedding network of width `embed_dim`.
pub fn fit_embedding_with(
    data: &DatasetHandle,
    seed: u64,
    embed_dim: usize,
    iterations: u64,
) -> Result<EmbeddingNet> {
    let spec = ArchitectureSpec::embedder(data.image_size, embed_dim, data.n_classes());
    let cfg = ClassifierConfig {
        iterations,
        seed,
        ..ClassifierConfig::default()
    };
    let net = train_classifier(data, &spec, &cfg)?;
    EmbeddingNet::new(net)
}

/// Argmax class predictions of a classifier on an image batch.
pub fn classify(classifier: &ParamStore, images: &Array4<f32>) -> Result<Vec<usize>> {
    let (_, logits) = forward_classifier(classifier, images)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect())
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AccuracyReport {
    /// Fraction of generated samples classified as their conditioning class.
    pub per_class: BTreeMap<usize, f64>,
    pub average: f64,
    pub n_per_class: usize,
}

/// Generates `n_per_class` samples per class from a conditional generator
/// and reports how often the reference classifier recovers the conditioning
/// class.
pub fn classifier_accuracy_eval(
    ref_classifier: &ParamStore,
    g: &ParamStore,
    n_per_class: usize,
    seed: u64,
) -> Result<AccuracyReport> {
    if !g.spec.is_conditional() {
        return Err(Error::validation(
            "classifier accuracy evaluation needs a conditional generator",
        ));
    }
    if n_per_class == 0 {
        return Err(Error::validation("n_per_class must be positive"));
    }
    let k = g.spec.n_classes;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut per_class = BTreeMap::new();
    for class in 0..k {
        let mut correct = 0usize;
        let mut produced = 0usize;
        while produced < n_per_class {
            let b = (n_per_class - produced).min(64);
            let z = sample_noise(&mut rng, b, g.spec.noise_dim);
            let labels = vec![class; b];
            let images = forward_generator(g, &z, Some(&labels))?;
            let preds = classify(ref_classifier, &images)?;
            correct += preds.iter().filter(|&&p| p == class).count();
            produced += b;
        }
        per_class.insert(class, correct as f64 / n_per_class as f64);
    }
    let average = per_class.values().sum::<f64>() / k as f64;
    Ok(AccuracyReport {
        per_class,
        average,
        n_per_class,
    })
}

/// Writes an embedded-sample cache: checksum header, counts, then the
/// little-endian `f32` payload in row-major order.
pub fn save_embeddings(path: &Path, checksum: &str, embeddings: &Array2<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let cs = checksum.as_bytes();
    f.write_all(&(cs.len() as u32).to_le_bytes())?;
    f.write_all(cs)?;
    f.write_all(&(embeddings.nrows() as u64).to_le_bytes())?;
    f.write_all(&(embeddings.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(embeddings.len() * 4);
    for &v in embeddings.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Reads an embedded-sample cache back as `(checksum, embeddings)`.
pub fn load_embeddings(path: &Path) -> Result<(String, Array2<f64>)> {
    let truncated = |detail: &str| Error::Truncated {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    let mut f = std::fs::File::open(path)?;
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)
        .map_err(|_| truncated("missing checksum length"))?;
    let cs_len = u32::from_le_bytes(u32buf) as usize;
    if cs_len > 1024 {
        return Err(Error::validation("implausible checksum length"));
    }
    let mut cs = vec![0u8; cs_len];
    f.read_exact(&mut cs)
        .map_err(|_| truncated("missing checksum"))?;
    let checksum = String::from_utf8(cs)
        .map_err(|_| Error::validation("checksum is not valid UTF-8"))?;
    let mut u64buf = [0u8; 8];
    f.read_exact(&mut u64buf)
        .map_err(|_| truncated("missing count"))?;
    let count = u64::from_le_bytes(u64buf) as usize;
    f.read_exact(&mut u64buf)
        .map_err(|_| truncated("missing dim"))?;
    let dim = u64::from_le_bytes(u64buf) as usize;
    let mut payload = vec![0u8; count * dim * 4];
    f.read_exact(&mut payload)
        .map_err(|_| truncated("payload shorter than declared"))?;
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let arr = Array2::from_shape_vec((count, dim), values)
        .map_err(|_| Error::validation("embedding cache shape mismatch"))?;
    Ok((checksum, arr))
}
