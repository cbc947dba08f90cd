//! Network architectures, parameter stores, and checkpoint I/O.

mod checkpoint;
mod net;
mod params;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use net::{
    forward_classifier_taped, forward_discriminator_taped, forward_generator_taped,
    generator_input, load_onto_tape, softmax, trainable_vars, BnUpdate, Mode, BN_MOMENTUM,
};
pub use params::{
    build_network, hex_string, init_tensor, is_trainable, manifest, param_rng, trainable_names,
    Init, ParamDef, ParamStore,
};
pub use spec::{res_blocks_for, ArchitectureSpec, Conditioning, NormD, NormG, Role};

use ndarray::{Array1, Array2, Array4, ArrayD, IxDyn};

use crate::error::Result;
use crate::tensor::Tape;

/// Commit batch-norm running-statistic updates to a store.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate<f32>]) {
    for u in updates {
        if let Some(rm) = store.get_mut(&u.mean_name) {
            *rm = rm.mapv(|x| x * (1.0 - BN_MOMENTUM as f32)) + &u.mean.mapv(|x| x * BN_MOMENTUM as f32);
        }
        if let Some(rv) = store.get_mut(&u.var_name) {
            *rv = rv.mapv(|x| x * (1.0 - BN_MOMENTUM as f32)) + &u.var.mapv(|x| x * BN_MOMENTUM as f32);
        }
    }
}

/// Generator evaluation pass: noise batch to images in `[-1, 1]`.
pub fn forward_generator(
    g: &ParamStore,
    z: &Array2<f32>,
    labels: Option<&[usize]>,
) -> Result<Array4<f32>> {
    let tape = Tape::<f32>::new();
    let vars = load_onto_tape(&tape, g);
    let zv = tape.constant(z.clone().into_dyn());
    let mut updates = Vec::new();
    let out = forward_generator_taped(&tape, &g.spec, &vars, zv, labels, Mode::Eval, &mut updates)?;
    Ok(tape
        .value(out)
        .into_dimensionality::<ndarray::Ix4>()
        .unwrap())
}

/// Discriminator/critic evaluation pass: per-image score and, for a
/// conditional discriminator, auxiliary class logits.
pub fn forward_discriminator(
    d: &ParamStore,
    x: &Array4<f32>,
) -> Result<(Array1<f32>, Option<Array2<f32>>)> {
    let tape = Tape::<f32>::new();
    let vars = load_onto_tape(&tape, d);
    let xv = tape.constant(x.clone().into_dyn());
    let (score, logits) = forward_discriminator_taped(&tape, &d.spec, &vars, xv)?;
    let score = tape
        .value(score)
        .into_dimensionality::<ndarray::Ix1>()
        .unwrap();
    let logits = logits.map(|l| {
        tape.value(l)
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap()
    });
    Ok((score, logits))
}

/// Classifier/embedder evaluation pass: (embeddings, logits).
pub fn forward_classifier(
    c: &ParamStore,
    x: &Array4<f32>,
) -> Result<(Array2<f32>, Array2<f32>)> {
    let tape = Tape::<f32>::new();
    let vars = load_onto_tape(&tape, c);
    let xv = tape.constant(x.clone().into_dyn());
    let (embed, logits) = forward_classifier_taped(&tape, &c.spec, &vars, xv)?;
    let to2 = |v| {
        tape.value(v)
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap()
    };
    Ok((to2(embed), to2(logits)))
}

/// Standard-normal noise batch (the assumed p_z).
pub fn sample_noise(rng: &mut impl rand::Rng, batch: usize, dim: usize) -> Array2<f32> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_fn((batch, dim), |_| {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}

/// All-zero parameter store with the spec's layout (test/diagnostic helper).
pub fn zero_network(spec: &ArchitectureSpec) -> Result<ParamStore> {
    let defs = manifest(spec)?;
    let mut params = std::collections::BTreeMap::new();
    for def in &defs {
        params.insert(def.name.clone(), ArrayD::zeros(IxDyn(&def.shape)));
    }
    Ok(ParamStore::new(spec.clone(), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn build_is_deterministic() {
        let spec = ArchitectureSpec::generator(16, 16);
        let a = build_network(&spec, 7).unwrap();
        let b = build_network(&spec, 7).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        let c = build_network(&spec, 8).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn wide_model_at_least_3x_narrow() {
        // Oracle: count parameters from the manifests directly.
        for role in [Role::Generator, Role::Discriminator] {
            let mut wide = ArchitectureSpec::generator(64, 64);
            wide.role = role;
            let mut narrow = wide.clone();
            narrow.base_width = 32;
            let count = |s: &ArchitectureSpec| -> usize {
                manifest(s)
                    .unwrap()
                    .iter()
                    .map(|d| d.shape.iter().product::<usize>())
                    .sum()
            };
            assert!(count(&wide) >= 3 * count(&narrow));
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut spec = ArchitectureSpec::generator(32, 64);
        spec.n_res_blocks = 4;
        assert!(build_network(&spec, 0).is_err());
    }

    #[test]
    fn generator_shape_range_determinism() {
        let spec = ArchitectureSpec::generator(8, 8).with_noise_dim(16);
        let g = build_network(&spec, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let z = sample_noise(&mut rng, 16, 16);
        let out = forward_generator(&g, &z, None).unwrap();
        assert_eq!(out.shape(), &[16, 3, 8, 8]);
        assert!(out.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let out2 = forward_generator(&g, &z, None).unwrap();
        assert_eq!(out, out2);
    }

    #[test]
    fn discriminator_heads() {
        let spec = ArchitectureSpec::discriminator(8, 8);
        let d = build_network(&spec, 3).unwrap();
        let x = Array4::<f32>::zeros((8, 3, 8, 8));
        let (score, logits) = forward_discriminator(&d, &x).unwrap();
        assert_eq!(score.len(), 8);
        assert!(logits.is_none());
        assert!(score.iter().all(|v| v.is_finite()));

        let cspec =
            ArchitectureSpec::discriminator(8, 8).with_conditioning(Conditioning::Concat, 10);
        let d = build_network(&cspec, 3).unwrap();
        let (_, logits) = forward_discriminator(&d, &x).unwrap();
        let logits = logits.expect("conditional discriminator must emit logits");
        assert_eq!(logits.shape(), &[8, 10]);

        // softmax rows sum to 1.
        let tape = Tape::<f32>::new();
        let l = tape.constant(logits.into_dyn());
        let p = softmax(&tape, l);
        let p = tape.value(p);
        for row in p.view().into_dimensionality::<ndarray::Ix2>().unwrap().rows() {
            let s: f32 = row.sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn discriminator_shape_mismatch_rejected() {
        let spec = ArchitectureSpec::discriminator(8, 8);
        let d = build_network(&spec, 3).unwrap();
        let x = Array4::<f32>::zeros((2, 3, 16, 16));
        assert!(forward_discriminator(&d, &x).is_err());
    }

    #[test]
    fn generator_label_validation() {
        let spec =
            ArchitectureSpec::generator(8, 8).with_noise_dim(8).with_conditioning(Conditioning::Concat, 4);
        let g = build_network(&spec, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let z = sample_noise(&mut rng, 4, 8);
        assert!(forward_generator(&g, &z, Some(&[0, 1, 2, 9])).is_err());
        assert!(forward_generator(&g, &z, Some(&[0, 1])).is_err());
        assert!(forward_generator(&g, &z, None).is_err());
        assert!(forward_generator(&g, &z, Some(&[0, 1, 2, 3])).is_ok());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let spec = ArchitectureSpec::generator(8, 8).with_noise_dim(8);
        let store = build_network(&spec, 42).unwrap();
        let sum = store.checksum();
        let ckpt = Checkpoint::new(store, 123, "toy", 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.gptk");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.param_store.checksum(), sum);
        assert_eq!(loaded.iteration, 123);
        assert_eq!(loaded.dataset_id, "toy");
        assert_eq!(loaded.seed, 42);
        assert_eq!(loaded.spec(), &spec);
    }

    #[test]
    fn checkpoint_corruption_detected() {
        let spec = ArchitectureSpec::generator(8, 8).with_noise_dim(8);
        let ckpt = Checkpoint::new(build_network(&spec, 1).unwrap(), 0, "toy", 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.gptk");
        save_checkpoint(&ckpt, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        match load_checkpoint(&path) {
            Err(crate::Error::ChecksumMismatch { .. }) => {}
            other => panic!("expected checksum mismatch, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn checkpoint_version_and_truncation() {
        let spec = ArchitectureSpec::generator(8, 8).with_noise_dim(8);
        let ckpt = Checkpoint::new(build_network(&spec, 1).unwrap(), 0, "toy", 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.gptk");
        save_checkpoint(&ckpt, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let mut versioned = bytes.clone();
        versioned[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        std::fs::write(&path, &versioned).unwrap();
        match load_checkpoint(&path) {
            Err(crate::Error::Version { found, .. }) => assert_eq!(found, FORMAT_VERSION + 1),
            other => panic!("expected version error, got {:?}", other.map(|_| ())),
        }

        std::fs::write(&path, &bytes[..10]).unwrap();
        match load_checkpoint(&path) {
            Err(crate::Error::Truncated { .. }) => {}
            other => panic!("expected truncation error, got {:?}", other.map(|_| ())),
        }
    }
}
