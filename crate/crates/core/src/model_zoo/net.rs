//! Taped forward passes for every network role.
//!
//! These run on the autodiff tape so that training, the gradient penalty,
//! and finite-difference verification all share one code path. The `f32`
//! convenience wrappers in `mod.rs` evaluate in inference mode.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};
use crate::tensor::{ConvGeom, Scalar, Tape, V};

use super::params::{is_trainable, ParamStore};
use super::spec::{ArchitectureSpec, Conditioning, Role};

const BN_EPS: f64 = 1e-5;
const LN_EPS: f64 = 1e-5;
/// Momentum of the running-statistics update in training mode.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// New values for a batch-norm site's running statistics, produced while
/// running in training mode. The caller commits them to the `ParamStore`.
pub struct BnUpdate<T> {
    pub mean_name: String,
    pub var_name: String,
    pub mean: ArrayD<T>,
    pub var: ArrayD<T>,
}

/// Parameters placed on a tape: trainable entries as differentiable vars,
/// running statistics as constants.
pub fn load_onto_tape<T: Scalar>(tape: &Tape<T>, store: &ParamStore) -> BTreeMap<String, V> {
    let mut vars = BTreeMap::new();
    for (name, value) in store.iter() {
        let arr = value.mapv(|x| T::from_f64(x as f64));
        let v = if is_trainable(name) {
            tape.var(arr)
        } else {
            tape.constant(arr)
        };
        vars.insert(name.clone(), v);
    }
    vars
}

/// Trainable tape vars in name order, paired with their names.
pub fn trainable_vars(store: &ParamStore, vars: &BTreeMap<String, V>) -> Vec<(String, V)> {
    store
        .names()
        .filter(|n| is_trainable(n))
        .map(|n| (n.clone(), vars[n]))
        .collect()
}

fn conv2d<T: Scalar>(
    tape: &Tape<T>,
    x: V,
    w: V,
    b: V,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> V {
    let xshape = tape.shape(x);
    let wshape = tape.shape(w);
    let (out_ch, in_ch) = (wshape[0], wshape[1]);
    debug_assert_eq!(in_ch, xshape[1], "conv2d channel mismatch");
    let geom = ConvGeom::new(&xshape, kernel, stride, pad);
    let (ho, wo) = (geom.out_height(), geom.out_width());
    let batch = xshape[0];
    let cols = tape.im2col(x, geom);
    let w2 = tape.reshape(w, &[out_ch, in_ch * kernel * kernel]);
    let out = tape.matmul(w2, cols); // [O, B*Ho*Wo]
    let out = tape.reshape(out, &[out_ch, batch, ho, wo]);
    let out = tape.permute(out, &[1, 0, 2, 3]);
    let b4 = tape.reshape(b, &[1, out_ch, 1, 1]);
    let b4 = tape.broadcast(b4, &[batch, out_ch, ho, wo]);
    tape.add(out, b4)
}

fn linear<T: Scalar>(tape: &Tape<T>, x: V, w: V, b: V) -> V {
    let wt = tape.permute(w, &[1, 0]);
    let y = tape.matmul(x, wt);
    let yshape = tape.shape(y);
    let b2 = tape.reshape(b, &[1, yshape[1]]);
    let b2 = tape.broadcast(b2, &yshape);
    tape.add(y, b2)
}

/// Per-channel affine from a `[C]` (or selected `[B,C]`) tensor onto `[B,C,H,W]`.
fn channel_affine<T: Scalar>(tape: &Tape<T>, xhat: V, gamma: V, beta: V, per_sample: bool) -> V {
    let shape = tape.shape(xhat);
    let c = shape[1];
    let (g4, b4) = if per_sample {
        let b = shape[0];
        (
            tape.reshape(gamma, &[b, c, 1, 1]),
            tape.reshape(beta, &[b, c, 1, 1]),
        )
    } else {
        (
            tape.reshape(gamma, &[1, c, 1, 1]),
            tape.reshape(beta, &[1, c, 1, 1]),
        )
    };
    let g4 = tape.broadcast(g4, &shape);
    let b4 = tape.broadcast(b4, &shape);
    tape.add(tape.mul(xhat, g4), b4)
}

#[allow(clippy::too_many_arguments)]
fn batch_norm<T: Scalar>(
    tape: &Tape<T>,
    x: V,
    prefix: &str,
    spec: &ArchitectureSpec,
    vars: &BTreeMap<String, V>,
    labels: Option<&Rc<Vec<usize>>>,
    mode: Mode,
    updates: &mut Vec<BnUpdate<T>>,
) -> V {
    let shape = tape.shape(x);
    let (b, _c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let count = (b * h * w) as f64;

    let xhat = match mode {
        Mode::Train => {
            let mu = tape.scale(tape.sum_axes(x, &[0, 2, 3]), T::from_f64(1.0 / count));
            let mu_b = tape.broadcast(mu, &shape);
            let xc = tape.sub(x, mu_b);
            let var = tape.scale(
                tape.sum_axes(tape.mul(xc, xc), &[0, 2, 3]),
                T::from_f64(1.0 / count),
            );
            updates.push(BnUpdate {
                mean_name: format!("{}.running_mean", prefix),
                var_name: format!("{}.running_var", prefix),
                mean: tape.value(mu).into_shape(IxDyn(&[shape[1]])).unwrap(),
                var: tape.value(var).into_shape(IxDyn(&[shape[1]])).unwrap(),
            });
            let inv = tape.powf(tape.add_scalar(var, T::from_f64(BN_EPS)), T::from_f64(-0.5));
            let inv_b = tape.broadcast(inv, &shape);
            tape.mul(xc, inv_b)
        }
        Mode::Eval => {
            let rm = vars[&format!("{}.running_mean", prefix)];
            let rv = vars[&format!("{}.running_var", prefix)];
            let rm = tape.reshape(rm, &[1, shape[1], 1, 1]);
            let rv = tape.reshape(rv, &[1, shape[1], 1, 1]);
            let inv = tape.powf(tape.add_scalar(rv, T::from_f64(BN_EPS)), T::from_f64(-0.5));
            let xc = tape.sub(x, tape.broadcast(rm, &shape));
            tape.mul(xc, tape.broadcast(inv, &shape))
        }
    };

    let conditional = spec.conditioning == Conditioning::CondBnorm && spec.role == Role::Generator;
    if conditional {
        let labels = labels.expect("cond_bnorm generator requires labels");
        let gbank = vars[&format!("{}.gamma_bank", prefix)];
        let bbank = vars[&format!("{}.beta_bank", prefix)];
        let gamma = tape.index_rows(gbank, labels.clone());
        let beta = tape.index_rows(bbank, labels.clone());
        channel_affine(tape, xhat, gamma, beta, true)
    } else {
        let gamma = vars[&format!("{}.gamma", prefix)];
        let beta = vars[&format!("{}.beta", prefix)];
        channel_affine(tape, xhat, gamma, beta, false)
    }
}

/// Layer normalization over (C,H,W) per sample with per-channel affine.
/// Keeps samples independent, which the gradient penalty relies on.
fn layer_norm<T: Scalar>(tape: &Tape<T>, x: V, gamma: V, beta: V) -> V {
    let shape = tape.shape(x);
    let count = (shape[1] * shape[2] * shape[3]) as f64;
    let mu = tape.scale(tape.sum_axes(x, &[1, 2, 3]), T::from_f64(1.0 / count));
    let xc = tape.sub(x, tape.broadcast(mu, &shape));
    let var = tape.scale(
        tape.sum_axes(tape.mul(xc, xc), &[1, 2, 3]),
        T::from_f64(1.0 / count),
    );
    let inv = tape.powf(tape.add_scalar(var, T::from_f64(LN_EPS)), T::from_f64(-0.5));
    let xhat = tape.mul(xc, tape.broadcast(inv, &shape));
    channel_affine(tape, xhat, gamma, beta, false)
}

/// Generator input: noise, with a one-hot class block appended when the
/// generator conditions by concatenation.
pub fn generator_input<T: Scalar>(
    tape: &Tape<T>,
    spec: &ArchitectureSpec,
    z: V,
    labels: Option<&[usize]>,
) -> Result<V> {
    let zshape = tape.shape(z);
    let batch = zshape[0];
    if zshape[1] != spec.noise_dim {
        return Err(Error::validation(format!(
            "noise dim {} != spec noise_dim {}",
            zshape[1], spec.noise_dim
        )));
    }
    match (spec.conditioning, labels) {
        (Conditioning::None | Conditioning::CondBnorm, _) => Ok(z),
        (Conditioning::Concat, Some(labels)) => {
            if labels.len() != batch {
                return Err(Error::validation(format!(
                    "label batch {} != noise batch {}",
                    labels.len(),
                    batch
                )));
            }
            let in_dim = spec.noise_dim + spec.n_classes;
            // z * [I | 0] + one-hot block: concat expressed with linear ops.
            let mut proj = ArrayD::zeros(IxDyn(&[spec.noise_dim, in_dim]));
            for i in 0..spec.noise_dim {
                proj[[i, i]] = T::one();
            }
            let mut hot = ArrayD::zeros(IxDyn(&[batch, in_dim]));
            for (i, &l) in labels.iter().enumerate() {
                if l >= spec.n_classes {
                    return Err(Error::validation(format!(
                        "label {} out of range [0, {})",
                        l, spec.n_classes
                    )));
                }
                hot[[i, spec.noise_dim + l]] = T::one();
            }
            let proj = tape.constant(proj);
            let hot = tape.constant(hot);
            Ok(tape.add(tape.matmul(z, proj), hot))
        }
        (Conditioning::Concat, None) => {
            Err(Error::validation("concat-conditioned generator needs labels"))
        }
    }
}

/// Generator forward pass on the tape.
pub fn forward_generator_taped<T: Scalar>(
    tape: &Tape<T>,
    spec: &ArchitectureSpec,
    vars: &BTreeMap<String, V>,
    z: V,
    labels: Option<&[usize]>,
    mode: Mode,
    updates: &mut Vec<BnUpdate<T>>,
) -> Result<V> {
    if spec.role != Role::Generator {
        return Err(Error::validation("forward_generator needs role=generator"));
    }
    match (spec.is_conditional(), labels) {
        (true, None) => return Err(Error::validation("conditional generator needs labels")),
        (false, Some(_)) => {
            return Err(Error::validation("unconditional generator takes no labels"))
        }
        _ => {}
    }
    if let Some(ls) = labels {
        let batch = tape.shape(z)[0];
        if ls.len() != batch {
            return Err(Error::validation(format!(
                "label batch {} != noise batch {}",
                ls.len(),
                batch
            )));
        }
        if let Some(&bad) = ls.iter().find(|&&l| l >= spec.n_classes) {
            return Err(Error::validation(format!(
                "label {} out of range [0, {})",
                bad, spec.n_classes
            )));
        }
    }
    let labels_rc = labels.map(|l| Rc::new(l.to_vec()));
    let zc = generator_input(tape, spec, z, labels)?;
    let w = spec.base_width;
    let batch = tape.shape(z)[0];

    let mut h = linear(tape, zc, vars["fc.w"], vars["fc.b"]);
    h = tape.reshape(h, &[batch, w, 4, 4]);

    for i in 0..spec.n_res_blocks {
        let p = |s: &str| format!("block{}.{}", i, s);
        let mut t = batch_norm(
            tape,
            h,
            &p("bn1"),
            spec,
            vars,
            labels_rc.as_ref(),
            mode,
            updates,
        );
        t = tape.relu(t);
        t = tape.upsample2x(t);
        t = conv2d(tape, t, vars[&p("conv1.w")], vars[&p("conv1.b")], 3, 1, 1);
        t = batch_norm(
            tape,
            t,
            &p("bn2"),
            spec,
            vars,
            labels_rc.as_ref(),
            mode,
            updates,
        );
        t = tape.relu(t);
        t = conv2d(tape, t, vars[&p("conv2.w")], vars[&p("conv2.b")], 3, 1, 1);

        let mut s = tape.upsample2x(h);
        s = conv2d(tape, s, vars[&p("skip.w")], vars[&p("skip.b")], 1, 1, 0);
        h = tape.add(t, s);
    }

    let mut out = batch_norm(
        tape,
        h,
        "out.bn",
        spec,
        vars,
        labels_rc.as_ref(),
        mode,
        updates,
    );
    out = tape.relu(out);
    out = conv2d(tape, out, vars["out.conv.w"], vars["out.conv.b"], 3, 1, 1);
    Ok(tape.tanh(out))
}

/// Discriminator/critic forward pass: per-image score plus optional
/// auxiliary class logits.
pub fn forward_discriminator_taped<T: Scalar>(
    tape: &Tape<T>,
    spec: &ArchitectureSpec,
    vars: &BTreeMap<String, V>,
    x: V,
) -> Result<(V, Option<V>)> {
    if !matches!(spec.role, Role::Discriminator | Role::Critic) {
        return Err(Error::validation(
            "forward_discriminator needs role=discriminator or critic",
        ));
    }
    let shape = tape.shape(x);
    if shape.len() != 4
        || shape[1] != spec.channels
        || shape[2] != spec.image_size
        || shape[3] != spec.image_size
    {
        return Err(Error::validation(format!(
            "input shape {:?} does not match spec [B,{},{},{}]",
            shape, spec.channels, spec.image_size, spec.image_size
        )));
    }
    let batch = shape[0];
    let w = spec.base_width;

    let mut h = conv2d(tape, x, vars["stem.w"], vars["stem.b"], 3, 1, 1);
    for i in 0..spec.n_res_blocks {
        let p = |s: &str| format!("block{}.{}", i, s);
        let mut t = layer_norm(tape, h, vars[&p("ln1.gamma")], vars[&p("ln1.beta")]);
        t = tape.relu(t);
        t = conv2d(tape, t, vars[&p("conv1.w")], vars[&p("conv1.b")], 3, 1, 1);
        t = layer_norm(tape, t, vars[&p("ln2.gamma")], vars[&p("ln2.beta")]);
        t = tape.relu(t);
        t = conv2d(tape, t, vars[&p("conv2.w")], vars[&p("conv2.b")], 3, 1, 1);
        t = tape.mean_pool2x(t);

        let mut s = tape.mean_pool2x(h);
        s = conv2d(tape, s, vars[&p("skip.w")], vars[&p("skip.b")], 1, 1, 0);
        h = tape.add(t, s);
    }
    h = tape.relu(h);
    // Global mean pool to [B, W].
    let hw = {
        let sh = tape.shape(h);
        (sh[2] * sh[3]) as f64
    };
    let pooled = tape.scale(tape.sum_axes(h, &[2, 3]), T::from_f64(1.0 / hw));
    let feat = tape.reshape(pooled, &[batch, w]);

    let score = linear(tape, feat, vars["head.w"], vars["head.b"]);
    let score = tape.reshape(score, &[batch]);

    let logits = if spec.role == Role::Discriminator && spec.is_conditional() && spec.n_classes >= 2
    {
        Some(linear(tape, feat, vars["aux.w"], vars["aux.b"]))
    } else {
        None
    };
    Ok((score, logits))
}

/// Classifier/embedder forward: (embedding `[B,E]`, class logits `[B,K]`).
pub fn forward_classifier_taped<T: Scalar>(
    tape: &Tape<T>,
    spec: &ArchitectureSpec,
    vars: &BTreeMap<String, V>,
    x: V,
) -> Result<(V, V)> {
    if !matches!(spec.role, Role::Classifier | Role::Embedder) {
        return Err(Error::validation(
            "forward_classifier needs role=classifier or embedder",
        ));
    }
    let shape = tape.shape(x);
    if shape.len() != 4 || shape[2] != spec.image_size || shape[3] != spec.image_size {
        return Err(Error::validation(format!(
            "input shape {:?} does not match spec image_size {}",
            shape, spec.image_size
        )));
    }
    let batch = shape[0];
    let w = spec.base_width;

    let mut h = conv2d(tape, x, vars["stem.w"], vars["stem.b"], 3, 1, 1);
    h = tape.relu(h);
    for i in 0..spec.n_res_blocks {
        let p = |s: &str| format!("block{}.{}", i, s);
        h = conv2d(tape, h, vars[&p("conv.w")], vars[&p("conv.b")], 3, 1, 1);
        h = tape.relu(h);
        h = tape.mean_pool2x(h);
    }
    let hw = {
        let sh = tape.shape(h);
        (sh[2] * sh[3]) as f64
    };
    let pooled = tape.scale(tape.sum_axes(h, &[2, 3]), T::from_f64(1.0 / hw));
    let feat = tape.reshape(pooled, &[batch, w]);
    let embed = linear(tape, feat, vars["embed.w"], vars["embed.b"]);
    let embed = tape.tanh(embed);
    let logits = linear(tape, embed, vars["head.w"], vars["head.b"]);
    Ok((embed, logits))
}

/// Row-wise softmax built from tape ops (max-shifted for stability; the
/// shift is detached, which leaves gradients unchanged).
pub fn softmax<T: Scalar>(tape: &Tape<T>, logits: V) -> V {
    let shape = tape.shape(logits);
    let vals = tape.value(logits);
    let mut maxes = ArrayD::zeros(IxDyn(&[shape[0], 1]));
    for (i, row) in vals
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .unwrap()
        .rows()
        .into_iter()
        .enumerate()
    {
        maxes[[i, 0]] = row.iter().cloned().fold(T::neg_infinity(), T::max);
    }
    let m = tape.constant(maxes);
    let m = tape.broadcast(m, &shape);
    let e = tape.exp(tape.sub(logits, m));
    let denom = tape.sum_axes(e, &[1]);
    let denom = tape.broadcast(denom, &shape);
    tape.mul(e, tape.recip(denom))
}
