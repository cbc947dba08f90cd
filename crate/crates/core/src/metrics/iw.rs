//! Independent Wasserstein critic: a critic trained only for evaluation,
//! reporting `IW(X1, X2) = E[D(x1)] - E[D(x2)]` exactly as defined (signed;
//! the validation set goes first).

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::{BatchStream, DatasetHandle};
use crate::error::{Error, Result};
use crate::model_zoo::{
    build_network, forward_discriminator, load_onto_tape, trainable_vars, ArchitectureSpec,
    ParamStore, Role,
};
use crate::tensor::Tape;
use crate::train::{interpolate, wgan_gp_d_loss_taped, Adam, TrainConfig};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IwCriticConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub gp_lambda: f64,
    pub seed: u64,
}

impl Default for IwCriticConfig {
    fn default() -> Self {
        IwCriticConfig {
            iterations: 2000,
            batch_size: 32,
            lr: 1e-4,
            gp_lambda: 10.0,
            seed: 0,
        }
    }
}

/// Trains a fresh critic with the gradient-penalty objective to separate
/// `x_val` (validation reals, never seen by the evaluated model) from
/// `x_other` (typically generated samples). The returned critic is meant to
/// be frozen; only [`iw`] should consume it.
pub fn train_iw_critic(
    x_val: &DatasetHandle,
    x_other: &Array4<f32>,
    spec: &ArchitectureSpec,
    cfg: &IwCriticConfig,
) -> Result<ParamStore> {
    if x_other.shape()[0] == 0 {
        return Err(Error::validation("empty comparison sample set"));
    }
    if !matches!(spec.role, Role::Critic | Role::Discriminator) {
        return Err(Error::validation("IW critic spec must have a critic role"));
    }
    if x_other.shape()[2] != x_val.image_size {
        return Err(Error::validation(format!(
            "sample image size {} != validation image size {}",
            x_other.shape()[2],
            x_val.image_size
        )));
    }
    let mut critic = build_network(spec, cfg.seed)?;
    let adam_cfg = TrainConfig {
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        beta1: 0.0,
        beta2: 0.9,
        iterations: cfg.iterations,
        n_critic: 1,
        gp_lambda: cfg.gp_lambda,
        seed: cfg.seed,
    };
    adam_cfg.validate()?;
    let mut adam = Adam::new(&adam_cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let batch = cfg.batch_size.min(x_val.size()).min(x_other.shape()[0]);
    let mut stream = BatchStream::new(x_val, batch, cfg.seed)?;
    let n_other = x_other.shape()[0];

    for iter in 0..cfg.iterations {
        let (x_real, _) = stream.next_batch();
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n_other)).collect();
        let x_fake = x_other.select(ndarray::Axis(0), &idx);
        let (x_hat, _) = interpolate(&x_real, &x_fake, &mut rng)?;

        let tape = Tape::<f32>::new();
        let vars = load_onto_tape(&tape, &critic);
        let xr = tape.constant(x_real.into_dyn());
        let xf = tape.constant(x_fake.into_dyn());
        let xh = tape.var(x_hat.into_dyn());
        let parts = wgan_gp_d_loss_taped(&tape, spec, &vars, xr, xf, xh, cfg.gp_lambda)?;
        let loss = tape.scalar(parts.total) as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: iter,
                loss_d: loss,
                loss_g: f64::NAN,
                grad_norm_d: f64::NAN,
            });
        }
        let tv = trainable_vars(&critic, &vars);
        let wrt: Vec<_> = tv.iter().map(|(_, v)| *v).collect();
        let gs = tape.grad(parts.total, &wrt);
        let grads: Vec<(String, ndarray::ArrayD<f32>)> = tv
            .iter()
            .zip(gs)
            .filter_map(|((n, _), gv)| gv.map(|v| (n.clone(), tape.value(v))))
            .collect();
        adam.step(&mut critic, &grads);
    }
    Ok(critic)
}

fn mean_score(critic: &ParamStore, x: &Array4<f32>) -> Result<f64> {
    let n = x.shape()[0];
    let mut total = 0.0f64;
    let chunk = 256;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let batch = x.slice(ndarray::s![start..end, .., .., ..]).to_owned();
        let (scores, _) = forward_discriminator(critic, &batch)?;
        total += scores.iter().map(|&s| s as f64).sum::<f64>();
        start = end;
    }
    Ok(total / n as f64)
}

/// Signed independent-Wasserstein estimate `E[D(x1)] - E[D(x2)]`.
pub fn iw(critic: &ParamStore, x1: &Array4<f32>, x2: &Array4<f32>) -> Result<f64> {
    if x1.shape()[0] == 0 || x2.shape()[0] == 0 {
        return Err(Error::validation("IW needs non-empty sample sets"));
    }
    Ok(mean_score(critic, x1)? - mean_score(critic, x2)?)
}
