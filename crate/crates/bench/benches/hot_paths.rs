//! Benchmarks for the hot paths of the training and evaluation pipeline:
//! convolution forward/backward, FID statistics with the matrix square
//! root, and a full WGAN-GP training iteration.

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use gptk_core::data::{make_synthetic, SyntheticKind};
use gptk_core::metrics::{fid, gaussian_stats, sqrtm_psd};
use gptk_core::model_zoo::{build_network, load_onto_tape, trainable_vars, ArchitectureSpec};
use gptk_core::tensor::{ConvGeom, Tape};
use gptk_core::train::{train_gan, TrainConfig, TrainHooks};

fn bench_conv(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let x = ArrayD::from_shape_fn(IxDyn(&[16, 8, 16, 16]), |_| rng.gen_range(-1.0f32..1.0));
    let w = ArrayD::from_shape_fn(IxDyn(&[8, 8, 3, 3]), |_| rng.gen_range(-0.1f32..0.1));
    let geom = ConvGeom::new(x.shape(), 3, 1, 1);

    c.bench_function("conv_forward_16x8x16x16", |b| {
        b.iter(|| {
            let tape = Tape::<f32>::new();
            let xv = tape.constant(x.clone());
            let wv = tape.constant(w.clone());
            let cols = tape.im2col(xv, geom.clone());
            let wm = tape.reshape(wv, &[8, 8 * 3 * 3]);
            let out = tape.matmul(cols, tape.permute(wm, &[1, 0]));
            tape.value(out)
        })
    });

    c.bench_function("conv_forward_backward_16x8x16x16", |b| {
        b.iter(|| {
            let tape = Tape::<f32>::new();
            let xv = tape.constant(x.clone());
            let wv = tape.var(w.clone());
            let cols = tape.im2col(xv, geom.clone());
            let wm = tape.reshape(wv, &[8, 8 * 3 * 3]);
            let out = tape.matmul(cols, tape.permute(wm, &[1, 0]));
            let loss = tape.mean_all(tape.mul(out, out));
            let g = tape.grad(loss, &[wv])[0].unwrap();
            tape.value(g)
        })
    });
}

fn bench_fid(c: &mut Criterion) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let d = 64usize;
    let x1 = Array2::from_shape_fn((2000, d), |_| rng.gen_range(-1.0f64..1.0));
    let x2 = Array2::from_shape_fn((2000, d), |_| rng.gen_range(-0.5f64..1.5));
    let s1 = gaussian_stats(&x1).unwrap();
    let s2 = gaussian_stats(&x2).unwrap();

    c.bench_function("gaussian_stats_2000x64", |b| b.iter(|| gaussian_stats(&x1).unwrap()));
    c.bench_function("sqrtm_psd_64", |b| b.iter(|| sqrtm_psd(&s1.sigma).unwrap()));
    c.bench_function("fid_64", |b| b.iter(|| fid(&s1, &s2).unwrap()));
}

fn bench_training_iteration(c: &mut Criterion) {
    let data = make_synthetic(SyntheticKind::ShapesA, 64, 8, 0).unwrap();
    let g0 = build_network(&ArchitectureSpec::generator(8, 8).with_noise_dim(16), 1).unwrap();
    let d0 = build_network(&ArchitectureSpec::critic(8, 8), 2).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        lr: 1e-4,
        beta1: 0.0,
        beta2: 0.9,
        iterations: 1,
        n_critic: 5,
        gp_lambda: 10.0,
        seed: 0,
    };
    c.bench_function("wgan_gp_iteration_8x8_w8_b16", |b| {
        b.iter(|| train_gan(&g0, &d0, &data, &cfg, &mut TrainHooks::none()).unwrap())
    });

    // The backward pass in isolation: one critic loss gradient.
    c.bench_function("critic_grad_8x8_w8_b16", |b| {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = data.select(&(0..16).collect::<Vec<_>>());
        b.iter(|| {
            let tape = Tape::<f32>::new();
            let vars = load_onto_tape(&tape, &d0);
            let xv = tape.var(x.clone().into_dyn());
            let (scores, _) =
                gptk_core::model_zoo::forward_discriminator_taped(&tape, &d0.spec, &vars, xv)
                    .unwrap();
            let loss = tape.mean_all(scores);
            let tv = trainable_vars(&d0, &vars);
            let wrt: Vec<_> = tv.iter().map(|(_, v)| *v).collect();
            let _ = tape.grad(loss, &wrt);
            rng.gen::<u64>()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_conv, bench_fid, bench_training_iteration
}
criterion_main!(benches);
