//! Auxiliary-classifier GAN on top of the gradient-penalty objective, with
//! two ways of conditioning a generator initialized from unconditional
//! weights: appending a one-hot label to the noise input ("concat") and
//! per-class batch-norm parameter banks ("cond. bnorm").

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BatchStream, DatasetHandle};
use crate::error::{Error, Result};
use crate::model_zoo::{
    apply_bn_updates, build_network, forward_generator,
    forward_discriminator_taped, forward_generator_taped, init_tensor, load_checkpoint,
    load_onto_tape, manifest, sample_noise, softmax, trainable_vars, ArchitectureSpec,
    Conditioning, Mode, ParamStore, Role,
};
use crate::tensor::{Scalar, Tape, V};
use crate::train::{
    constants_onto_tape, gradient_penalty_taped, interpolate, Adam, IterationRecord, TrainConfig,
    TrainHooks, LOG_CLAMP_EPS,
};
use crate::transfer::surgery_expand_input;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcGanConfig {
    /// Weight of the generator's class log-likelihood term.
    pub alpha_g: f64,
    /// Weight of the discriminator's class log-likelihood term (real pairs).
    pub alpha_d: f64,
    pub conditioning: Conditioning,
    pub n_classes: usize,
    pub base: TrainConfig,
}

impl AcGanConfig {
    pub fn new(conditioning: Conditioning, n_classes: usize, base: TrainConfig) -> Self {
        AcGanConfig {
            alpha_g: 1.0,
            alpha_d: 1.0,
            conditioning,
            n_classes,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_g < 0.0 || self.alpha_d < 0.0 {
            return Err(Error::validation("class-loss weights must be >= 0"));
        }
        if self.n_classes < 2 {
            return Err(Error::validation("conditional training needs >= 2 classes"));
        }
        if self.conditioning == Conditioning::None {
            return Err(Error::validation(
                "conditional training needs a conditioning mode",
            ));
        }
        self.base.validate()
    }
}

/// Mean negative log-likelihood of `labels` under the head's softmax,
/// probabilities clamped at the shared `1e-7`.
fn nll_taped<T: Scalar>(tape: &Tape<T>, logits: V, labels: &[usize]) -> Result<V> {
    let shape = tape.shape(logits);
    let (b, k) = (shape[0], shape[1]);
    if labels.len() != b {
        return Err(Error::validation(format!(
            "label batch {} != logits batch {}",
            labels.len(),
            b
        )));
    }
    let mut hot = ArrayD::zeros(IxDyn(&[b, k]));
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::validation(format!(
                "label {} out of range [0, {})",
                l, k
            )));
        }
        hot[[i, l]] = T::one();
    }
    let probs = softmax(tape, logits);
    let probs = tape.clamp_min(probs, T::from_f64(LOG_CLAMP_EPS));
    let logp = tape.ln(probs);
    let picked = tape.mul(logp, tape.constant(hot));
    Ok(tape.scale(tape.sum_all(picked), T::from_f64(-1.0 / b as f64)))
}

/// Generator loss: `-E[D(G(z,y'))] + alpha_g * NLL(y' | aux)`.
pub fn acgan_g_loss(
    d: &ParamStore,
    g: &ParamStore,
    z: &Array2<f32>,
    y_prime: &[usize],
    alpha_g: f64,
) -> Result<f64> {
    let x_fake = forward_generator(g, z, Some(y_prime))?;
    let tape = Tape::<f64>::new();
    let vars = constants_onto_tape(&tape, d);
    let xf = tape.constant(x_fake.mapv(|v| v as f64).into_dyn());
    let (scores, logits) = forward_discriminator_taped(&tape, &d.spec, &vars, xf)?;
    let logits = logits.ok_or_else(|| {
        Error::validation("AC-GAN generator loss needs a discriminator with an auxiliary head")
    })?;
    let gan = tape.neg(tape.mean_all(scores));
    if alpha_g == 0.0 {
        return Ok(tape.scalar(gan));
    }
    let class = nll_taped(&tape, logits, y_prime)?;
    let total = tape.add(gan, tape.scale(class, alpha_g));
    Ok(tape.scalar(total))
}

/// Discriminator loss: the gradient-penalty critic loss plus
/// `alpha_d * NLL(y | aux(x_real))`. At `alpha_d = 0` the value is
/// bit-identical to the unconditional critic loss on the same batches.
#[allow(clippy::too_many_arguments)]
pub fn acgan_d_loss(
    d: &ParamStore,
    g: &ParamStore,
    x_real: &Array4<f32>,
    y_real: &[usize],
    z: &Array2<f32>,
    y_prime: &[usize],
    alpha_d: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let x_fake = forward_generator(g, z, Some(y_prime))?;
    let (x_hat, _) = interpolate(x_real, &x_fake, rng)?;
    let tape = Tape::<f64>::new();
    let vars = load_onto_tape(&tape, d);
    let xr = tape.constant(x_real.mapv(|v| v as f64).into_dyn());
    let xf = tape.constant(x_fake.mapv(|v| v as f64).into_dyn());
    let xh = tape.var(x_hat.mapv(|v| v as f64).into_dyn());
    let parts = acgan_d_parts_taped(
        &tape, &d.spec, &vars, xr, y_real, xf, xh, alpha_d, cfg.gp_lambda,
    )?;
    Ok(tape.scalar(parts.total))
}

/// Taped discriminator-loss terms shared by the public wrapper and the
/// training loop.
pub struct AcGanDParts {
    pub total: V,
    pub wasserstein: V,
    pub penalty: V,
    /// Present only when `alpha_d > 0`.
    pub class_term: Option<V>,
}

#[allow(clippy::too_many_arguments)]
fn acgan_d_parts_taped<T: Scalar>(
    tape: &Tape<T>,
    d_spec: &ArchitectureSpec,
    d_vars: &BTreeMap<String, V>,
    x_real: V,
    y_real: &[usize],
    x_fake: V,
    x_hat: V,
    alpha_d: f64,
    lambda: f64,
) -> Result<AcGanDParts> {
    // Same op sequence as the unconditional critic loss so that alpha_d = 0
    // reduces to it bit-identically.
    let (real_scores, real_logits) = forward_discriminator_taped(tape, d_spec, d_vars, x_real)?;
    let (fake_scores, _) = forward_discriminator_taped(tape, d_spec, d_vars, x_fake)?;
    let wasserstein = tape.sub(tape.mean_all(fake_scores), tape.mean_all(real_scores));
    let penalty = gradient_penalty_taped(tape, d_spec, d_vars, x_hat, lambda)?;
    let gan_total = tape.add(wasserstein, penalty);
    if alpha_d == 0.0 {
        return Ok(AcGanDParts {
            total: gan_total,
            wasserstein,
            penalty,
            class_term: None,
        });
    }
    let logits = real_logits.ok_or_else(|| {
        Error::validation("AC-GAN discriminator loss needs an auxiliary head")
    })?;
    let class = nll_taped(tape, logits, y_real)?;
    let class = tape.scale(class, T::from_f64(alpha_d));
    Ok(AcGanDParts {
        total: tape.add(gan_total, class),
        wasserstein,
        penalty,
        class_term: Some(class),
    })
}

/// Conditions an unconditional generator by input concatenation: the first
/// fully-connected layer is widened for the one-hot label block (original
/// columns bit-exact, new columns freshly drawn), everything else copied.
pub fn condition_concat_init(
    uncond_g: &ParamStore,
    n_classes: usize,
    seed: u64,
) -> Result<ParamStore> {
    check_uncond_generator(uncond_g, n_classes)?;
    let spec = uncond_g
        .spec
        .clone()
        .with_conditioning(Conditioning::Concat, n_classes);
    let new_in = spec.noise_dim + n_classes;
    let mut params = BTreeMap::new();
    for (name, value) in uncond_g.iter() {
        let v = if name == "fc.w" {
            surgery_expand_input(value, new_in, seed, "fc.w")?
        } else {
            value.clone()
        };
        params.insert(name.clone(), v);
    }
    Ok(ParamStore::new(spec, params))
}

/// Conditions an unconditional generator through its batch-norm sites: every
/// per-channel scale/shift becomes an `n_classes`-row bank initialized by
/// copying the unconditional values to all classes, so the conditional
/// generator initially computes exactly the unconditional function for every
/// class.
pub fn condition_bnorm_init(uncond_g: &ParamStore, n_classes: usize) -> Result<ParamStore> {
    check_uncond_generator(uncond_g, n_classes)?;
    let spec = uncond_g
        .spec
        .clone()
        .with_conditioning(Conditioning::CondBnorm, n_classes);
    let defs = manifest(&spec)?;
    let mut banks = 0usize;
    let mut params = BTreeMap::new();
    for def in &defs {
        let value = if let Some(site) = def
            .name
            .strip_suffix(".gamma_bank")
            .or_else(|| def.name.strip_suffix(".beta_bank"))
        {
            banks += 1;
            let which = if def.name.ends_with("gamma_bank") {
                "gamma"
            } else {
                "beta"
            };
            let src = uncond_g
                .get(&format!("{}.{}", site, which))
                .ok_or_else(|| Error::Transfer {
                    parameter: def.name.clone(),
                    reason: "no matching batch-norm parameter in source".to_string(),
                })?;
            let width = src.len();
            ArrayD::from_shape_fn(IxDyn(&[n_classes, width]), |idx| src[[idx[1]]])
        } else {
            uncond_g
                .get(&def.name)
                .ok_or_else(|| Error::Transfer {
                    parameter: def.name.clone(),
                    reason: "missing from source generator".to_string(),
                })?
                .clone()
        };
        params.insert(def.name.clone(), value);
    }
    if banks == 0 {
        return Err(Error::validation(
            "generator has no batch-norm sites to condition",
        ));
    }
    Ok(ParamStore::new(spec, params))
}

fn check_uncond_generator(g: &ParamStore, n_classes: usize) -> Result<()> {
    if g.spec.role != Role::Generator {
        return Err(Error::validation("conditioning applies to generators"));
    }
    if g.spec.is_conditional() {
        return Err(Error::validation("generator is already conditional"));
    }
    if n_classes < 2 {
        return Err(Error::validation("conditioning needs >= 2 classes"));
    }
    Ok(())
}

/// Conditions an unconditional discriminator for AC-GAN: the trunk is copied
/// bit-exactly and a fresh auxiliary classification head is added (the head
/// has no source counterpart; its fresh initialization is recorded in
/// provenance by the caller).
pub fn acgan_discriminator_init(
    uncond_d: &ParamStore,
    conditioning: Conditioning,
    n_classes: usize,
    seed: u64,
) -> Result<ParamStore> {
    if !matches!(uncond_d.spec.role, Role::Discriminator | Role::Critic) {
        return Err(Error::validation("expected a discriminator network"));
    }
    if uncond_d.spec.is_conditional() {
        return Err(Error::validation("discriminator is already conditional"));
    }
    let mut spec = uncond_d
        .spec
        .clone()
        .with_conditioning(conditioning, n_classes);
    spec.role = Role::Discriminator;
    let defs = manifest(&spec)?;
    let mut params = BTreeMap::new();
    for def in &defs {
        let value = match uncond_d.get(&def.name) {
            Some(v) if v.shape() == def.shape.as_slice() => v.clone(),
            Some(v) => {
                return Err(Error::Transfer {
                    parameter: def.name.clone(),
                    reason: format!("shape {:?} in source, {:?} required", v.shape(), def.shape),
                })
            }
            // Auxiliary head parameters exist only in the conditional layout.
            None => init_tensor(def, seed),
        };
        params.insert(def.name.clone(), value);
    }
    Ok(ParamStore::new(spec, params))
}

/// Where AC-GAN networks start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AcGanInit {
    /// Fresh conditional networks with the given unconditional base layouts.
    Scratch {
        g_spec: ArchitectureSpec,
        d_spec: ArchitectureSpec,
    },
    /// Unconditional checkpoints, conditioned via the configured variant.
    FromCheckpoint {
        generator: PathBuf,
        discriminator: PathBuf,
    },
}

/// Uniform class labels for generated samples.
pub fn uniform_labels(rng: &mut impl Rng, n: usize, n_classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n_classes)).collect()
}

fn build_acgan_networks(
    cfg: &AcGanConfig,
    init: &AcGanInit,
    seed: u64,
) -> Result<(ParamStore, ParamStore)> {
    match init {
        AcGanInit::Scratch { g_spec, d_spec } => {
            if g_spec.is_conditional() || d_spec.is_conditional() {
                return Err(Error::validation("scratch base specs must be unconditional"));
            }
            let gs = g_spec
                .clone()
                .with_conditioning(cfg.conditioning, cfg.n_classes);
            let mut ds = d_spec
                .clone()
                .with_conditioning(cfg.conditioning, cfg.n_classes);
            ds.role = Role::Discriminator;
            Ok((build_network(&gs, seed)?, build_network(&ds, seed.wrapping_add(1))?))
        }
        AcGanInit::FromCheckpoint {
            generator,
            discriminator,
        } => {
            let g_src = load_checkpoint(generator)?.param_store;
            let d_src = load_checkpoint(discriminator)?.param_store;
            let g = match cfg.conditioning {
                Conditioning::Concat => condition_concat_init(&g_src, cfg.n_classes, seed)?,
                Conditioning::CondBnorm => condition_bnorm_init(&g_src, cfg.n_classes)?,
                Conditioning::None => unreachable!("validated"),
            };
            let d = acgan_discriminator_init(
                &d_src,
                cfg.conditioning,
                cfg.n_classes,
                seed.wrapping_add(1),
            )?;
            Ok((g, d))
        }
    }
}

/// AC-GAN training: alternating critic/generator updates with uniformly
/// sampled generation labels and the class log-likelihood terms of the
/// configured weights. Deterministic given `cfg.base.seed`.
pub fn train_acgan(
    cfg: &AcGanConfig,
    init: &AcGanInit,
    data: &DatasetHandle,
    hooks: &mut TrainHooks,
) -> Result<(ParamStore, ParamStore, Vec<IterationRecord>)> {
    cfg.validate()?;
    if !data.is_labeled() {
        return Err(Error::validation("AC-GAN training needs labeled data"));
    }
    if data.n_classes() != cfg.n_classes {
        return Err(Error::validation(format!(
            "config expects {} classes, data has {}",
            cfg.n_classes,
            data.n_classes()
        )));
    }
    let missing = data.missing_classes(cfg.n_classes);
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "classes with no training example: {:?}",
            missing
        )));
    }
    let base = &cfg.base;
    let (mut g, mut d) = build_acgan_networks(cfg, init, base.seed)?;
    let mut adam_g = Adam::new(base);
    let mut adam_d = Adam::new(base);
    let mut rng = ChaCha20Rng::seed_from_u64(base.seed);
    let mut stream = BatchStream::new(data, base.batch_size.min(data.size()), base.seed)?;
    let mut log = Vec::new();

    for iter in 0..base.iterations {
        let t0 = Instant::now();
        let mut loss_d = 0.0;
        let mut grad_norm_d = 0.0;

        for _ in 0..base.n_critic {
            let (x_real, y_real) = stream.next_batch();
            let y_real = y_real.expect("labeled dataset");
            let b = x_real.shape()[0];
            let z = sample_noise(&mut rng, b, g.spec.noise_dim);
            let y_prime = uniform_labels(&mut rng, b, cfg.n_classes);

            let tape = Tape::<f32>::new();
            let g_vars = constants_onto_tape(&tape, &g);
            let zc = tape.constant(z.into_dyn());
            let mut updates = Vec::new();
            let xf = forward_generator_taped(
                &tape,
                &g.spec,
                &g_vars,
                zc,
                Some(&y_prime),
                Mode::Train,
                &mut updates,
            )?;
            let x_fake4 = tape
                .value(xf)
                .into_dimensionality::<ndarray::Ix4>()
                .unwrap();
            let (x_hat, _) = interpolate(&x_real, &x_fake4, &mut rng)?;

            let d_vars = load_onto_tape(&tape, &d);
            let xr = tape.constant(x_real.into_dyn());
            let xh = tape.var(x_hat.into_dyn());
            let parts = acgan_d_parts_taped(
                &tape,
                &d.spec,
                &d_vars,
                xr,
                &y_real,
                xf,
                xh,
                cfg.alpha_d,
                base.gp_lambda,
            )?;
            loss_d = tape.scalar(parts.total) as f64;
            let tv = trainable_vars(&d, &d_vars);
            let wrt: Vec<V> = tv.iter().map(|(_, v)| *v).collect();
            let gs = tape.grad(parts.total, &wrt);
            let grads: Vec<(String, ArrayD<f32>)> = tv
                .iter()
                .zip(gs)
                .map(|((n, p), gv)| {
                    let arr = gv
                        .map(|v| tape.value(v))
                        .unwrap_or_else(|| ArrayD::zeros(IxDyn(&tape.shape(*p))));
                    (n.clone(), arr)
                })
                .collect();
            grad_norm_d = grads
                .iter()
                .map(|(_, gr)| gr.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            if !loss_d.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: iter,
                    loss_d,
                    loss_g: f64::NAN,
                    grad_norm_d,
                });
            }
            adam_d.step(&mut d, &grads);
        }

        // Generator step.
        let z = sample_noise(&mut rng, base.batch_size, g.spec.noise_dim);
        let y_prime = uniform_labels(&mut rng, base.batch_size, cfg.n_classes);
        let tape = Tape::<f32>::new();
        let g_vars = load_onto_tape(&tape, &g);
        let d_vars = constants_onto_tape(&tape, &d);
        let zc = tape.constant(z.into_dyn());
        let mut updates = Vec::new();
        let xf = forward_generator_taped(
            &tape,
            &g.spec,
            &g_vars,
            zc,
            Some(&y_prime),
            Mode::Train,
            &mut updates,
        )?;
        let (scores, logits) = forward_discriminator_taped(&tape, &d.spec, &d_vars, xf)?;
        let mut loss_g_v = tape.neg(tape.mean_all(scores));
        if cfg.alpha_g > 0.0 {
            let logits = logits.ok_or_else(|| {
                Error::validation("AC-GAN discriminator lost its auxiliary head")
            })?;
            let class = nll_taped(&tape, logits, &y_prime)?;
            loss_g_v = tape.add(loss_g_v, tape.scale(class, cfg.alpha_g as f32));
        }
        let loss_g = tape.scalar(loss_g_v) as f64;
        if !loss_g.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                loss_d,
                loss_g,
                grad_norm_d,
            });
        }
        let tv = trainable_vars(&g, &g_vars);
        let wrt: Vec<V> = tv.iter().map(|(_, v)| *v).collect();
        let gs = tape.grad(loss_g_v, &wrt);
        let grads: Vec<(String, ArrayD<f32>)> = tv
            .iter()
            .zip(gs)
            .filter_map(|((n, _), gv)| gv.map(|v| (n.clone(), tape.value(v))))
            .collect();
        adam_g.step(&mut g, &grads);
        apply_bn_updates(&mut g, &updates);

        log.push(IterationRecord {
            iteration: iter,
            loss_d,
            loss_g,
            grad_norm_d,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if hooks.interval > 0 && (iter + 1) % hooks.interval == 0 {
            hooks_fire(hooks, iter + 1, &g, &d)?;
        }
    }
    if hooks.interval > 0 && base.iterations % hooks.interval != 0 {
        hooks_fire(hooks, base.iterations, &g, &d)?;
    }
    Ok((g, d, log))
}

fn hooks_fire(hooks: &mut TrainHooks, iter: u64, g: &ParamStore, d: &ParamStore) -> Result<()> {
    if let Some(cb) = &mut hooks.on_snapshot {
        cb(iter, g, d)?;
    }
    Ok(())
}

/// Samples `n` images per class from a conditional generator, returned as
/// `(images, labels)` with labels grouped class by class.
pub fn sample_images_conditional(
    g: &ParamStore,
    n_per_class: usize,
    seed: u64,
) -> Result<(Array4<f32>, Vec<usize>)> {
    if !g.spec.is_conditional() {
        return Err(Error::validation("generator is not conditional"));
    }
    let k = g.spec.n_classes;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chunks = Vec::new();
    let mut labels = Vec::with_capacity(k * n_per_class);
    for class in 0..k {
        let mut produced = 0;
        while produced < n_per_class {
            let b = (n_per_class - produced).min(64);
            let z = sample_noise(&mut rng, b, g.spec.noise_dim);
            let ls = vec![class; b];
            chunks.push(forward_generator(g, &z, Some(&ls))?);
            labels.extend(ls);
            produced += b;
        }
    }
    let views: Vec<_> = chunks.iter().map(|a| a.view()).collect();
    let images = ndarray::concatenate(ndarray::Axis(0), &views).expect("sample concat");
    Ok((images, labels))
}
