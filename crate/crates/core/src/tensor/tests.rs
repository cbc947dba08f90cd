use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{ConvGeom, Tape, V};

fn randn(rng: &mut ChaCha20Rng, shape: &[usize]) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.gen_range(1e-9..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// Central finite differences of `f` at `x0`, checked against tape gradients.
fn check_grad(shape: &[usize], f: impl Fn(&Tape<f64>, V) -> V, seed: u64, tol: f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x0 = randn(&mut rng, shape);

    let tape = Tape::<f64>::new();
    let x = tape.var(x0.clone());
    let y = f(&tape, x);
    let g = tape.grad(y, &[x])[0].expect("gradient missing");
    let g = tape.value(g);

    let h = 1e-5;
    for idx in 0..x0.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp.as_slice_mut().unwrap()[idx] += h;
        xm.as_slice_mut().unwrap()[idx] -= h;
        let fp = {
            let t = Tape::<f64>::new();
            let v = t.var(xp);
            t.scalar(f(&t, v))
        };
        let fm = {
            let t = Tape::<f64>::new();
            let v = t.var(xm);
            t.scalar(f(&t, v))
        };
        let fd = (fp - fm) / (2.0 * h);
        let an = g.as_slice().unwrap()[idx];
        assert!(
            (fd - an).abs() <= tol * (1.0 + fd.abs().max(an.abs())),
            "grad mismatch at {}: fd={} analytic={}",
            idx,
            fd,
            an
        );
    }
}

#[test]
fn grad_elementwise_chain() {
    check_grad(
        &[3, 4],
        |t, x| {
            let y = t.tanh(x);
            let y = t.mul(y, x);
            let y = t.add_scalar(y, 0.3);
            t.mean_all(y)
        },
        1,
        1e-6,
    );
}

#[test]
fn grad_sigmoid_exp_ln() {
    check_grad(
        &[5],
        |t, x| {
            let s = t.sigmoid(x);
            let e = t.exp(t.scale(x, 0.1));
            let l = t.ln(t.add_scalar(t.mul(x, x), 1.0));
            let y = t.add(t.add(s, e), l);
            t.sum_all(y)
        },
        2,
        1e-6,
    );
}

#[test]
fn grad_matmul_and_broadcast() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let w0 = randn(&mut rng, &[4, 3]);
    check_grad(
        &[2, 4],
        move |t, x| {
            let w = t.constant(w0.clone());
            let y = t.matmul(x, w);
            let b = t.constant(ArrayD::from_elem(IxDyn(&[1, 3]), 0.7));
            let b = t.broadcast(b, &[2, 3]);
            let y = t.add(y, b);
            let y = t.relu(y);
            t.mean_all(y)
        },
        4,
        1e-5,
    );
}

#[test]
fn grad_sum_axes_powf() {
    check_grad(
        &[2, 3, 2],
        |t, x| {
            let sq = t.mul(x, x);
            let s = t.sum_axes(sq, &[0, 2]);
            let r = t.powf(t.add_scalar(s, 1.0), 0.5);
            t.sum_all(r)
        },
        5,
        1e-6,
    );
}

#[test]
fn grad_conv_pool_chain() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let w0 = randn(&mut rng, &[2, 3 * 9]);
    check_grad(
        &[2, 3, 4, 4],
        move |t, x| {
            let geom = ConvGeom::new(&t.shape(x), 3, 1, 1);
            let cols = t.im2col(x, geom);
            let w = t.constant(w0.clone());
            let y = t.matmul(w, cols); // [2, B*16]
            let y = t.reshape(y, &[2, 2, 4, 4]);
            let y = t.permute(y, &[1, 0, 2, 3]);
            let y = t.mean_pool2x(y);
            let y = t.upsample2x(y);
            let y = t.tanh(y);
            t.mean_all(y)
        },
        7,
        1e-5,
    );
}

#[test]
fn grad_index_scatter_rows() {
    use std::rc::Rc;
    let labels = Rc::new(vec![1usize, 0, 1]);
    check_grad(
        &[2, 3],
        move |t, bank| {
            let sel = t.index_rows(bank, labels.clone());
            let sel = t.mul(sel, sel);
            t.sum_all(sel)
        },
        8,
        1e-6,
    );
}

#[test]
fn double_backprop_cubic() {
    // y = sum(x^3); dy/dx = 3x^2; d(sum dy/dx)/dx = 6x.
    let tape = Tape::<f64>::new();
    let x0 = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0, -2.0, 0.5]).unwrap();
    let x = tape.var(x0.clone());
    let y = tape.sum_all(tape.mul(tape.mul(x, x), x));
    let g = tape.grad(y, &[x])[0].unwrap();
    let gsum = tape.sum_all(g);
    let gg = tape.grad(gsum, &[x])[0].unwrap();
    let gg = tape.value(gg);
    for (a, b) in gg.iter().zip(x0.iter()) {
        assert!((a - 6.0 * b).abs() < 1e-12, "{} vs {}", a, 6.0 * b);
    }
}

#[test]
fn double_backprop_through_tanh_grad() {
    // p = (dy/dx)^2 with y = sum(tanh(x)); dp/dx must match finite differences.
    let f = |x0: &ArrayD<f64>| -> (f64, ArrayD<f64>) {
        let t = Tape::<f64>::new();
        let x = t.var(x0.clone());
        let y = t.sum_all(t.tanh(x));
        let g = t.grad(y, &[x])[0].unwrap();
        let p = t.sum_all(t.mul(g, g));
        let gp = t.grad(p, &[x])[0].unwrap();
        (t.scalar(p), t.value(gp))
    };
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let x0 = randn(&mut rng, &[4]);
    let (_, analytic) = f(&x0);
    let h = 1e-5;
    for i in 0..4 {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (f(&xp).0 - f(&xm).0) / (2.0 * h);
        assert!(
            (fd - analytic[i]).abs() < 1e-6 * (1.0 + fd.abs()),
            "fd={} analytic={}",
            fd,
            analytic[i]
        );
    }
}

#[test]
fn im2col_col2im_adjoint() {
    // <im2col(x), y> == <x, col2im(y)> for random x, y.
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let x = randn(&mut rng, &[2, 3, 5, 5]);
    let geom = ConvGeom::new(x.shape(), 3, 1, 1);
    let y = randn(&mut rng, &[3 * 9, 2 * 25]);
    let ax = super::conv::im2col(&x, &geom);
    let aty = super::conv::col2im(&y, &geom);
    let lhs: f64 = ax.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(aty.iter()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
}

#[test]
fn pooling_adjoint() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let x = randn(&mut rng, &[1, 2, 4, 4]);
    let y = randn(&mut rng, &[1, 2, 8, 8]);
    let ax = super::conv::upsample2x(&x);
    let aty = super::conv::sum_pool2x(&y);
    let lhs: f64 = ax.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(aty.iter()).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
}

#[test]
fn conv_matches_naive() {
    // conv3x3 pad 1 via im2col+matmul vs direct summation.
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let x = randn(&mut rng, &[2, 3, 4, 4]);
    let w = randn(&mut rng, &[2, 3, 3, 3]);

    let t = Tape::<f64>::new();
    let xv = t.constant(x.clone());
    let geom = ConvGeom::new(x.shape(), 3, 1, 1);
    let cols = t.im2col(xv, geom);
    let w2 = t.constant(w.clone().into_shape(IxDyn(&[2, 27])).unwrap());
    let out = t.matmul(w2, cols);
    let out = t.reshape(out, &[2, 2, 4, 4]);
    let out = t.permute(out, &[1, 0, 2, 3]);
    let got = t.value(out);

    for b in 0..2 {
        for o in 0..2 {
            for i in 0..4i64 {
                for j in 0..4i64 {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        for ki in -1..=1i64 {
                            for kj in -1..=1i64 {
                                let (yi, xj) = (i + ki, j + kj);
                                if yi < 0 || yi >= 4 || xj < 0 || xj >= 4 {
                                    continue;
                                }
                                acc += x[[b, c, yi as usize, xj as usize]]
                                    * w[[o, c, (ki + 1) as usize, (kj + 1) as usize]];
                            }
                        }
                    }
                    let g = got[[b, o, i as usize, j as usize]];
                    assert!((g - acc).abs() < 1e-10, "{} vs {}", g, acc);
                }
            }
        }
    }
}

#[test]
fn f32_tape_basic() {
    let t = Tape::<f32>::new();
    let x = t.var(ArrayD::from_elem(IxDyn(&[2, 2]), 2.0f32));
    let y = t.mean_all(t.mul(x, x));
    assert!((t.scalar(y) - 4.0).abs() < 1e-6);
    let g = t.grad(y, &[x])[0].unwrap();
    assert!((t.value(g)[[0, 0]] - 1.0).abs() < 1e-6);
}
