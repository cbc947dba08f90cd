//! Adversarial objectives and the alternating optimization loop.
//!
//! The critic loss is `-E[D(x)] + E[D(G(z))]` plus a gradient penalty
//! `lambda * E[(||grad_xhat D(xhat)||_2 - 1)^2]` on per-sample convex
//! combinations `xhat = alpha*x_real + (1-alpha)*x_fake`; the generator
//! minimizes `-E[D(G(z))]`.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::{BatchStream, DatasetHandle};
use crate::error::{Error, Result};
use crate::model_zoo::{
    apply_bn_updates, forward_discriminator_taped, forward_generator_taped, is_trainable,
    load_onto_tape, sample_noise, trainable_vars, Mode, ParamStore,
};
use crate::tensor::{Scalar, Tape, V};

/// Probabilities are clamped to `[eps, 1-eps]` before taking logs.
pub const LOG_CLAMP_EPS: f64 = 1e-7;

/// Keeps the gradient-norm sqrt differentiable at zero; small enough to be
/// invisible at the tested tolerances.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    /// Adam second-moment decay.
    pub beta2: f64,
    pub iterations: u64,
    /// Critic steps per generator step.
    pub n_critic: usize,
    /// Gradient-penalty weight.
    pub gp_lambda: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Source-training defaults (batch 128, lr 1e-4, Adam(0, 0.9)).
    pub fn source() -> Self {
        TrainConfig {
            batch_size: 128,
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            iterations: 50_000,
            n_critic: 5,
            gp_lambda: 10.0,
            seed: 0,
        }
    }

    /// Fine-tuning defaults (batch 64; callers drop lr to 1e-5 when the
    /// target set has <= 1000 images).
    pub fn finetune(target_size: usize) -> Self {
        TrainConfig {
            batch_size: 64,
            lr: if target_size <= 1000 { 1e-5 } else { 1e-4 },
            iterations: 40_000,
            ..Self::source()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::validation(
                "batch_size must be >= 2 (interpolation pairs and batch statistics)",
            ));
        }
        if self.lr <= 0.0 {
            return Err(Error::validation("lr must be positive"));
        }
        if self.n_critic < 1 {
            return Err(Error::validation("n_critic must be >= 1"));
        }
        if self.gp_lambda < 0.0 {
            return Err(Error::validation("gp_lambda must be >= 0"));
        }
        Ok(())
    }
}

/// Classic minimax GAN objective on sigmoid probabilities:
/// `E[log D(x)] + E[log(1 - D(G(z)))]`, probabilities clamped at
/// [`LOG_CLAMP_EPS`].
pub fn gan_loss(d_real_probs: &[f64], d_fake_probs: &[f64]) -> Result<f64> {
    if d_real_probs.is_empty() || d_fake_probs.is_empty() {
        return Err(Error::validation("gan_loss needs non-empty batches"));
    }
    let clamp = |p: f64| p.clamp(LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS);
    let real: f64 = d_real_probs.iter().map(|&p| clamp(p).ln()).sum::<f64>()
        / d_real_probs.len() as f64;
    let fake: f64 = d_fake_probs
        .iter()
        .map(|&p| (1.0 - clamp(p)).ln())
        .sum::<f64>()
        / d_fake_probs.len() as f64;
    Ok(real + fake)
}

/// One interpolation batch: per-sample `alpha ~ U(0,1)`,
/// `xhat = alpha*x_real + (1-alpha)*x_fake`.
pub fn interpolate(
    x_real: &Array4<f32>,
    x_fake: &Array4<f32>,
    rng: &mut impl Rng,
) -> Result<(Array4<f32>, Vec<f32>)> {
    if x_real.shape() != x_fake.shape() {
        return Err(Error::validation(format!(
            "interpolate: shape mismatch {:?} vs {:?}",
            x_real.shape(),
            x_fake.shape()
        )));
    }
    let batch = x_real.shape()[0];
    let alphas: Vec<f32> = (0..batch).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut x_hat = x_real.clone();
    for (i, mut img) in x_hat.outer_iter_mut().enumerate() {
        let a = alphas[i];
        img.zip_mut_with(&x_fake.index_axis(ndarray::Axis(0), i), |r, &f| {
            *r = a * *r + (1.0 - a) * f;
        });
    }
    Ok((x_hat, alphas))
}

/// Taped gradient penalty: `lambda * mean((||grad_xhat D(xhat)|| - 1)^2)`.
/// `x_hat` must be a differentiable leaf on the tape.
pub fn gradient_penalty_taped<T: Scalar>(
    tape: &Tape<T>,
    d_spec: &crate::model_zoo::ArchitectureSpec,
    d_vars: &BTreeMap<String, V>,
    x_hat: V,
    lambda: f64,
) -> Result<V> {
    if lambda < 0.0 {
        return Err(Error::validation("gradient penalty weight must be >= 0"));
    }
    let (scores, _) = forward_discriminator_taped(tape, d_spec, d_vars, x_hat)?;
    // Layer norm keeps samples independent, so the gradient of the summed
    // scores is the per-sample input gradient.
    let total = tape.sum_all(scores);
    let gx = tape.grad(total, &[x_hat])[0]
        .ok_or_else(|| Error::validation("critic output does not depend on its input"))?;
    let sq = tape.mul(gx, gx);
    let sums = tape.sum_axes(sq, &[1, 2, 3]);
    let batch = tape.shape(x_hat)[0];
    let sums = tape.reshape(sums, &[batch]);
    let norms = tape.sqrt(tape.add_scalar(sums, T::from_f64(NORM_EPS)));
    let dev = tape.add_scalar(norms, T::from_f64(-1.0));
    let pen = tape.mean_all(tape.mul(dev, dev));
    Ok(tape.scale(pen, T::from_f64(lambda)))
}

/// Critic loss terms on the tape.
pub struct DLossParts {
    pub total: V,
    pub wasserstein: V,
    pub penalty: V,
}

pub fn wgan_gp_d_loss_taped<T: Scalar>(
    tape: &Tape<T>,
    d_spec: &crate::model_zoo::ArchitectureSpec,
    d_vars: &BTreeMap<String, V>,
    x_real: V,
    x_fake: V,
    x_hat: V,
    lambda: f64,
) -> Result<DLossParts> {
    if tape.shape(x_real) != tape.shape(x_fake) {
        return Err(Error::validation("real/fake batch shape mismatch"));
    }
    let (real_scores, _) = forward_discriminator_taped(tape, d_spec, d_vars, x_real)?;
    let (fake_scores, _) = forward_discriminator_taped(tape, d_spec, d_vars, x_fake)?;
    let wasserstein = tape.sub(tape.mean_all(fake_scores), tape.mean_all(real_scores));
    let penalty = gradient_penalty_taped(tape, d_spec, d_vars, x_hat, lambda)?;
    let total = tape.add(wasserstein, penalty);
    Ok(DLossParts {
        total,
        wasserstein,
        penalty,
    })
}

/// Generator loss on the tape: `-mean(D(x_fake))`.
pub fn wgan_gp_g_loss_taped<T: Scalar>(
    tape: &Tape<T>,
    d_spec: &crate::model_zoo::ArchitectureSpec,
    d_vars: &BTreeMap<String, V>,
    x_fake: V,
) -> Result<V> {
    let (scores, _) = forward_discriminator_taped(tape, d_spec, d_vars, x_fake)?;
    Ok(tape.neg(tape.mean_all(scores)))
}

/// Gradient penalty value for given batches (evaluation wrapper).
pub fn gradient_penalty(
    d: &ParamStore,
    x_real: &Array4<f32>,
    x_fake: &Array4<f32>,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (x_hat, _) = interpolate(x_real, x_fake, rng)?;
    let tape = Tape::<f64>::new();
    let vars = load_onto_tape(&tape, d);
    let xh = tape.var(x_hat.mapv(|x| x as f64).into_dyn());
    let pen = gradient_penalty_taped(&tape, &d.spec, &vars, xh, lambda)?;
    Ok(tape.scalar(pen))
}

/// Critic loss value on explicit batches.
pub fn wgan_gp_d_loss_batches(
    d: &ParamStore,
    x_real: &Array4<f32>,
    x_fake: &Array4<f32>,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (x_hat, _) = interpolate(x_real, x_fake, rng)?;
    let tape = Tape::<f64>::new();
    let vars = load_onto_tape(&tape, d);
    let xr = tape.constant(x_real.mapv(|x| x as f64).into_dyn());
    let xf = tape.constant(x_fake.mapv(|x| x as f64).into_dyn());
    let xh = tape.var(x_hat.mapv(|x| x as f64).into_dyn());
    let parts = wgan_gp_d_loss_taped(&tape, &d.spec, &vars, xr, xf, xh, lambda)?;
    Ok(tape.scalar(parts.total))
}

/// Critic loss value with fakes drawn from the generator (evaluation mode).
pub fn wgan_gp_d_loss(
    d: &ParamStore,
    g: &ParamStore,
    x_real: &Array4<f32>,
    z: &Array2<f32>,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let x_fake = crate::model_zoo::forward_generator(g, z, None)?;
    wgan_gp_d_loss_batches(d, x_real, &x_fake, cfg.gp_lambda, rng)
}

/// Generator loss value: `-mean(D(G(z)))` in evaluation mode.
pub fn wgan_gp_g_loss(d: &ParamStore, g: &ParamStore, z: &Array2<f32>) -> Result<f64> {
    let x_fake = crate::model_zoo::forward_generator(g, z, None)?;
    let (scores, _) = crate::model_zoo::forward_discriminator(d, &x_fake)?;
    Ok(-scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len() as f64)
}

/// Adam with per-parameter moments; skips non-trainable entries.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: BTreeMap<String, ArrayD<f32>>,
    v: BTreeMap<String, ArrayD<f32>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.lr as f32,
            beta1: cfg.beta1 as f32,
            beta2: cfg.beta2 as f32,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(String, ArrayD<f32>)]) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t);
        let b2c = 1.0 - self.beta2.powi(self.t);
        for (name, grad) in grads {
            if !is_trainable(name) {
                continue;
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(IxDyn(grad.shape())));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(IxDyn(grad.shape())));
            m.zip_mut_with(grad, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(grad, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let p = store.get_mut(name).expect("gradient for unknown parameter");
            ndarray::Zip::from(&mut *p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    *p -= self.lr * (m / b1c) / ((v / b2c).sqrt() + self.eps);
                });
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub grad_norm_d: f64,
    pub wall_ms: f64,
}

/// Observers invoked on immutable parameter snapshots every `interval`
/// iterations (0 = never) and once after the final iteration.
pub struct TrainHooks<'a> {
    pub interval: u64,
    #[allow(clippy::type_complexity)]
    pub on_snapshot: Option<Box<dyn FnMut(u64, &ParamStore, &ParamStore) -> Result<()> + 'a>>,
}

impl<'a> TrainHooks<'a> {
    pub fn none() -> Self {
        TrainHooks {
            interval: 0,
            on_snapshot: None,
        }
    }

    fn fire(&mut self, iter: u64, g: &ParamStore, d: &ParamStore) -> Result<()> {
        if let Some(cb) = &mut self.on_snapshot {
            cb(iter, g, d)?;
        }
        Ok(())
    }
}

fn l2_norm(grads: &[(String, ArrayD<f32>)]) -> f64 {
    grads
        .iter()
        .map(|(_, g)| g.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Alternating WGAN-GP optimization: `n_critic` critic updates per
/// generator update. Deterministic given `(cfg.seed, data)`.
pub fn train_gan(
    g0: &ParamStore,
    d0: &ParamStore,
    data: &DatasetHandle,
    cfg: &TrainConfig,
    hooks: &mut TrainHooks,
) -> Result<(ParamStore, ParamStore, Vec<IterationRecord>)> {
    cfg.validate()?;
    if g0.spec.image_size != d0.spec.image_size {
        return Err(Error::validation(
            "generator/discriminator image sizes differ",
        ));
    }
    if data.size() == 0 {
        return Err(Error::Dataset("empty training dataset".into()));
    }
    let mut g = g0.clone();
    let mut d = d0.clone();
    let mut adam_g = Adam::new(cfg);
    let mut adam_d = Adam::new(cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut stream = BatchStream::new(data, cfg.batch_size.min(data.size()), cfg.seed)?;
    let mut log = Vec::new();

    for iter in 0..cfg.iterations {
        let t0 = Instant::now();
        let mut loss_d = 0.0;
        let mut grad_norm_d = 0.0;

        for _ in 0..cfg.n_critic {
            let (x_real, _) = stream.next_batch();
            let z = sample_noise(&mut rng, x_real.shape()[0], g.spec.noise_dim);

            let tape = Tape::<f32>::new();
            // Generator participates as a constant: its parameters are not
            // updated during critic steps.
            let g_vars = constants_onto_tape(&tape, &g);
            let zc = tape.constant(z.into_dyn());
            let mut updates = Vec::new();
            let xf = forward_generator_taped(
                &tape, &g.spec, &g_vars, zc, None, Mode::Train, &mut updates,
            )?;
            let x_fake4 = tape
                .value(xf)
                .into_dimensionality::<ndarray::Ix4>()
                .unwrap();
            let (x_hat, _) = interpolate(&x_real, &x_fake4, &mut rng)?;

            let d_vars = load_onto_tape(&tape, &d);
            let xr = tape.constant(x_real.into_dyn());
            let xh = tape.var(x_hat.into_dyn());
            let parts =
                wgan_gp_d_loss_taped(&tape, &d.spec, &d_vars, xr, xf, xh, cfg.gp_lambda)?;
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
            grad_norm_d = l2_norm(&grads);
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

        // Generator step: the critic participates as constants.
        let z = sample_noise(&mut rng, cfg.batch_size, g.spec.noise_dim);
        let tape = Tape::<f32>::new();
        let g_vars = load_onto_tape(&tape, &g);
        let d_vars = constants_onto_tape(&tape, &d);
        let zc = tape.constant(z.into_dyn());
        let mut updates = Vec::new();
        let xf =
            forward_generator_taped(&tape, &g.spec, &g_vars, zc, None, Mode::Train, &mut updates)?;
        let loss_g_v = wgan_gp_g_loss_taped(&tape, &d.spec, &d_vars, xf)?;
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
            hooks.fire(iter + 1, &g, &d)?;
        }
    }
    if hooks.interval > 0 && cfg.iterations % hooks.interval != 0 {
        hooks.fire(cfg.iterations, &g, &d)?;
    }
    Ok((g, d, log))
}

/// Parameters on the tape as constants (no gradients flow into them).
pub fn constants_onto_tape<T: Scalar>(
    tape: &Tape<T>,
    store: &ParamStore,
) -> BTreeMap<String, V> {
    let mut vars = BTreeMap::new();
    for (name, value) in store.iter() {
        let arr = value.mapv(|x| T::from_f64(x as f64));
        vars.insert(name.clone(), tape.constant(arr));
    }
    vars
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind};
    use crate::model_zoo::{build_network, zero_network, ArchitectureSpec};
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn tiny_cfg(iterations: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            lr: 1e-3,
            beta1: 0.0,
            beta2: 0.9,
            iterations,
            n_critic: 1,
            gp_lambda: 10.0,
            seed: 7,
        }
    }

    #[test]
    fn gan_loss_at_half_is_minus_two_ln_two() {
        let p = vec![0.5; 8];
        let loss = gan_loss(&p, &p).unwrap();
        assert!((loss - (-2.0 * std::f64::consts::LN_2)).abs() < 1e-9);
        assert!((loss + 1.3862943611).abs() < 1e-6);
    }

    #[test]
    fn gan_loss_maximized_at_half() {
        // Calculus oracle: log p + log(1-p) peaks at p = 1/2.
        let at = |p: f64| gan_loss(&[p], &[p]).unwrap();
        let peak = at(0.5);
        for i in 1..50 {
            let p = i as f64 / 50.0;
            if (p - 0.5).abs() > 1e-9 {
                assert!(at(p) < peak, "p={}", p);
            }
        }
    }

    #[test]
    fn gan_loss_clamps_extreme_probabilities() {
        // log(eps) + log(1 - (1 - eps)) = 2 log(eps), instead of -inf.
        let loss = gan_loss(&[0.0], &[1.0]).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 2.0 * LOG_CLAMP_EPS.ln()).abs() < 1e-9);
    }

    #[test]
    fn interpolate_fixed_point_and_range() {
        let x = Array4::from_shape_fn((4, 3, 4, 4), |(b, c, y, z)| {
            ((b + c + y + z) % 5) as f32 / 5.0
        });
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        // x_hat of identical endpoints is the endpoint for every alpha.
        let (xh, alphas) = interpolate(&x, &x, &mut rng).unwrap();
        assert_eq!(xh, x);
        assert_eq!(alphas.len(), 4);
        assert!(alphas.iter().all(|&a| (0.0..1.0).contains(&a)));
        // Convex combination stays within elementwise bounds.
        let y = x.mapv(|v| v + 1.0);
        let (xh, _) = interpolate(&x, &y, &mut rng).unwrap();
        ndarray::Zip::from(&xh).and(&x).and(&y).for_each(|&h, &a, &b| {
            assert!(h >= a.min(b) - 1e-6 && h <= a.max(b) + 1e-6);
        });
    }

    /// Critic whose score is exactly linear in channel 0 of the input:
    /// stem center tap 1 with a large bias keeping the relu active, head
    /// weight `w0`. The input-gradient norm is then `|w0| / sqrt(H*W)`
    /// everywhere (image 4x4 => norm = w0/4).
    fn linear_critic(w0: f32) -> ParamStore {
        let spec = ArchitectureSpec::critic(4, 4);
        let mut d = zero_network(&spec).unwrap();
        d.get_mut("stem.b").unwrap().fill(10.0);
        d.get_mut("stem.w").unwrap()[[0, 0, 1, 1]] = 1.0;
        d.get_mut("head.w").unwrap()[[0, 0]] = w0;
        d
    }

    fn unit_batch(seed: u64) -> Array4<f32> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Array4::from_shape_fn((4, 3, 4, 4), |_| rng.gen_range(-1.0f32..1.0))
    }

    #[test]
    fn penalty_zero_for_unit_gradient_norm() {
        // w0 = 4 => ||grad|| = 1 everywhere => penalty 0.
        let d = linear_critic(4.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let pen = gradient_penalty(&d, &unit_batch(2), &unit_batch(3), 10.0, &mut rng).unwrap();
        assert!(pen.abs() < 1e-6, "penalty {}", pen);
    }

    #[test]
    fn penalty_matches_closed_form_for_norm_five() {
        // w0 = 20 => ||grad|| = 5 => penalty = lambda*(5-1)^2 = 160.
        let d = linear_critic(20.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let pen = gradient_penalty(&d, &unit_batch(2), &unit_batch(3), 10.0, &mut rng).unwrap();
        assert!((pen - 160.0).abs() < 1e-3, "penalty {}", pen);
    }

    #[test]
    fn penalty_scales_linearly_in_lambda() {
        let d = linear_critic(20.0);
        let (xr, xf) = (unit_batch(2), unit_batch(3));
        let mut r1 = ChaCha20Rng::seed_from_u64(1);
        let mut r2 = ChaCha20Rng::seed_from_u64(1);
        let p1 = gradient_penalty(&d, &xr, &xf, 1.0, &mut r1).unwrap();
        let p3 = gradient_penalty(&d, &xr, &xf, 3.0, &mut r2).unwrap();
        assert!((p3 - 3.0 * p1).abs() < 1e-6);
    }

    #[test]
    fn penalty_for_zero_critic_is_lambda() {
        // D == 0 => zero input-gradient => penalty = lambda*(0-1)^2 = lambda.
        let d = zero_network(&ArchitectureSpec::critic(4, 4)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pen = gradient_penalty(&d, &unit_batch(0), &unit_batch(1), 10.0, &mut rng).unwrap();
        assert!((pen - 10.0).abs() < 1e-4, "penalty {}", pen);
    }

    #[test]
    fn d_loss_identical_batches_without_penalty_is_zero() {
        let d = build_network(&ArchitectureSpec::critic(4, 4), 11).unwrap();
        let x = unit_batch(9);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let loss = wgan_gp_d_loss_batches(&d, &x, &x, 0.0, &mut rng).unwrap();
        assert!(loss.abs() < 1e-9, "loss {}", loss);
    }

    #[test]
    fn g_loss_is_negated_mean_score() {
        let g = build_network(&ArchitectureSpec::generator(4, 4).with_noise_dim(6), 1).unwrap();
        let d = build_network(&ArchitectureSpec::critic(4, 4), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let z = sample_noise(&mut rng, 5, 6);
        let loss = wgan_gp_g_loss(&d, &g, &z).unwrap();
        let x = crate::model_zoo::forward_generator(&g, &z, None).unwrap();
        let (scores, _) = crate::model_zoo::forward_discriminator(&d, &x).unwrap();
        let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / 5.0;
        assert!((loss + mean).abs() < 1e-6);
    }

    #[test]
    fn adam_first_step_is_lr_signed() {
        // Bias correction makes the very first update exactly
        // lr * g / (|g| + eps'), i.e. ~lr in magnitude for any g != 0.
        let spec = ArchitectureSpec::generator(4, 4).with_noise_dim(4);
        let mut store = zero_network(&spec).unwrap();
        let cfg = tiny_cfg(1);
        let mut adam = Adam::new(&cfg);
        let shape = store.get("fc.b").unwrap().shape().to_vec();
        let grad = ArrayD::from_elem(IxDyn(&shape), 2.5f32);
        adam.step(&mut store, &[("fc.b".to_string(), grad)]);
        for &v in store.get("fc.b").unwrap().iter() {
            assert!((v + cfg.lr as f32).abs() < 1e-6, "step {}", v);
        }
        // Non-trainable running statistics must be skipped.
        let rm_shape = store.get("out.bn.running_mean").unwrap().shape().to_vec();
        let grad = ArrayD::from_elem(IxDyn(&rm_shape), 1.0f32);
        adam.step(&mut store, &[("out.bn.running_mean".to_string(), grad)]);
        assert!(store
            .get("out.bn.running_mean")
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(tiny_cfg(1).validate().is_ok());
        assert!(TrainConfig { batch_size: 1, ..tiny_cfg(1) }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..tiny_cfg(1) }.validate().is_err());
        assert!(TrainConfig { n_critic: 0, ..tiny_cfg(1) }.validate().is_err());
        assert!(TrainConfig { gp_lambda: -1.0, ..tiny_cfg(1) }.validate().is_err());
        assert!((TrainConfig::finetune(500).lr - 1e-5).abs() < 1e-12);
        assert!((TrainConfig::finetune(5000).lr - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_leave_parameters_unchanged() {
        let g = build_network(&ArchitectureSpec::generator(4, 4).with_noise_dim(4), 1).unwrap();
        let d = build_network(&ArchitectureSpec::critic(4, 4), 2).unwrap();
        let data = make_synthetic(SyntheticKind::ShapesA, 8, 4, 0).unwrap();
        let (g2, d2, log) = train_gan(&g, &d, &data, &tiny_cfg(0), &mut TrainHooks::none()).unwrap();
        assert_eq!(g2.checksum(), g.checksum());
        assert_eq!(d2.checksum(), d.checksum());
        assert!(log.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_changes_parameters() {
        let g = build_network(&ArchitectureSpec::generator(4, 4).with_noise_dim(4), 1).unwrap();
        let d = build_network(&ArchitectureSpec::critic(4, 4), 2).unwrap();
        let data = make_synthetic(SyntheticKind::ShapesA, 8, 4, 0).unwrap();
        let run = || train_gan(&g, &d, &data, &tiny_cfg(3), &mut TrainHooks::none()).unwrap();
        let (g1, d1, log1) = run();
        let (g2, d2, log2) = run();
        assert_eq!(g1.checksum(), g2.checksum());
        assert_eq!(d1.checksum(), d2.checksum());
        assert_ne!(g1.checksum(), g.checksum());
        assert_ne!(d1.checksum(), d.checksum());
        assert_eq!(log1.len(), 3);
        for (a, b) in log1.iter().zip(&log2) {
            assert_eq!(a.loss_d.to_bits(), b.loss_d.to_bits());
            assert_eq!(a.loss_g.to_bits(), b.loss_g.to_bits());
            assert!(a.loss_d.is_finite() && a.loss_g.is_finite());
            assert!(a.grad_norm_d > 0.0);
        }
        // Different seed, different trajectory.
        let mut other = tiny_cfg(3);
        other.seed = 99;
        let (g3, _, _) = train_gan(&g, &d, &data, &other, &mut TrainHooks::none()).unwrap();
        assert_ne!(g3.checksum(), g1.checksum());
    }

    #[test]
    fn snapshot_hooks_fire_on_interval() {
        let g = build_network(&ArchitectureSpec::generator(4, 4).with_noise_dim(4), 1).unwrap();
        let d = build_network(&ArchitectureSpec::critic(4, 4), 2).unwrap();
        let data = make_synthetic(SyntheticKind::ShapesA, 8, 4, 0).unwrap();
        let mut seen = Vec::new();
        {
            let mut hooks = TrainHooks {
                interval: 2,
                on_snapshot: Some(Box::new(|iter, _, _| {
                    seen.push(iter);
                    Ok(())
                })),
            };
            train_gan(&g, &d, &data, &tiny_cfg(5), &mut hooks).unwrap();
        }
        assert_eq!(seen, vec![2, 4, 5]);
    }

    #[test]
    fn non_finite_loss_reports_diagnostics() {
        let g = build_network(&ArchitectureSpec::generator(4, 4).with_noise_dim(4), 1).unwrap();
        let mut d = build_network(&ArchitectureSpec::critic(4, 4), 2).unwrap();
        d.get_mut("head.w").unwrap().fill(f32::NAN);
        let data = make_synthetic(SyntheticKind::ShapesA, 8, 4, 0).unwrap();
        match train_gan(&g, &d, &data, &tiny_cfg(2), &mut TrainHooks::none()) {
            Err(Error::NonFiniteLoss { iteration, loss_d, .. }) => {
                assert_eq!(iteration, 0);
                assert!(!loss_d.is_finite());
            }
            other => panic!("expected non-finite loss error, got {:?}", other.map(|_| ())),
        }
    }
}
