//! Minimal reverse-mode autodiff tape over `ndarray`.
//!
//! Every operation records a node; backward passes emit their vector-Jacobian
//! products as *new tape nodes*, so gradients are themselves differentiable.
//! That is what makes the WGAN-GP gradient penalty trainable: the penalty is
//! built from the input-gradient of the critic, and a second `grad` call
//! differentiates it with respect to the critic parameters.
//!
//! The element type is generic: training runs in `f32`, numeric verification
//! (finite-difference gradient checks) in `f64`.

mod conv;

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{ArrayD, Axis, IxDyn};

pub use conv::ConvGeom;

/// Floating-point element type usable on the tape.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::AddAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Handle to a tape node.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct V(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(T),
    AddScalar(T),
    Powf(T),
    ClampMin(T),
    Broadcast,
    // `axes`/`rows` are carried for debuggability; the backward pass
    // reconstructs shapes from parent values instead.
    SumAxes {
        #[allow(dead_code)]
        axes: Vec<usize>,
    },
    SumAll,
    Reshape,
    Permute { axes: Vec<usize> },
    Matmul,
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Ln,
    Recip,
    Im2col(ConvGeom),
    Col2im(ConvGeom),
    Upsample2x,
    SumPool2x,
    IndexRows { labels: Rc<Vec<usize>>, rows: usize },
    ScatterRows {
        labels: Rc<Vec<usize>>,
        #[allow(dead_code)]
        rows: usize,
    },
}

struct Node<T> {
    value: ArrayD<T>,
    parents: Vec<V>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation tape. One tape per training step; dropped afterwards.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: ArrayD<T>, parents: Vec<V>, op: Op<T>, needs_grad: bool) -> V {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            op,
            needs_grad,
        });
        V(nodes.len() - 1)
    }

    fn push_derived(&self, value: ArrayD<T>, parents: Vec<V>, op: Op<T>) -> V {
        let needs = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.0].needs_grad)
        };
        self.push(value, parents, op, needs)
    }

    /// Clone of a node's current value.
    pub fn value(&self, v: V) -> ArrayD<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: V) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Scalar value of a 0-d (or single-element) node.
    pub fn scalar(&self, v: V) -> T {
        let nodes = self.nodes.borrow();
        let a = &nodes[v.0].value;
        debug_assert_eq!(a.len(), 1);
        *a.iter().next().unwrap()
    }

    // ---- node constructors ----

    /// Differentiable input (parameter or input requiring gradients).
    pub fn var(&self, value: ArrayD<T>) -> V {
        self.push(value, vec![], Op::Leaf, true)
    }

    /// Constant input; gradients do not flow into it.
    pub fn constant(&self, value: ArrayD<T>) -> V {
        self.push(value, vec![], Op::Leaf, false)
    }

    pub fn scalar_const(&self, v: T) -> V {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn add(&self, a: V, b: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            assert_eq!(
                nodes[a.0].value.shape(),
                nodes[b.0].value.shape(),
                "add: shape mismatch"
            );
            &nodes[a.0].value + &nodes[b.0].value
        };
        self.push_derived(value, vec![a, b], Op::Add)
    }

    pub fn sub(&self, a: V, b: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            assert_eq!(
                nodes[a.0].value.shape(),
                nodes[b.0].value.shape(),
                "sub: shape mismatch"
            );
            &nodes[a.0].value - &nodes[b.0].value
        };
        self.push_derived(value, vec![a, b], Op::Sub)
    }

    pub fn mul(&self, a: V, b: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            assert_eq!(
                nodes[a.0].value.shape(),
                nodes[b.0].value.shape(),
                "mul: shape mismatch"
            );
            &nodes[a.0].value * &nodes[b.0].value
        };
        self.push_derived(value, vec![a, b], Op::Mul)
    }

    pub fn neg(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| -x)
        };
        self.push_derived(value, vec![a], Op::Neg)
    }

    pub fn scale(&self, a: V, c: T) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x * c)
        };
        self.push_derived(value, vec![a], Op::Scale(c))
    }

    pub fn add_scalar(&self, a: V, c: T) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x + c)
        };
        self.push_derived(value, vec![a], Op::AddScalar(c))
    }

    pub fn powf(&self, a: V, p: T) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x.powf(p))
        };
        self.push_derived(value, vec![a], Op::Powf(p))
    }

    pub fn sqrt(&self, a: V) -> V {
        self.powf(a, T::from_f64(0.5))
    }

    pub fn recip(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x.recip())
        };
        self.push_derived(value, vec![a], Op::Recip)
    }

    pub fn clamp_min(&self, a: V, c: T) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| if x < c { c } else { x })
        };
        self.push_derived(value, vec![a], Op::ClampMin(c))
    }

    /// Broadcast `a` to `shape` (ndarray broadcasting rules).
    pub fn broadcast(&self, a: V, shape: &[usize]) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0]
                .value
                .broadcast(IxDyn(shape))
                .unwrap_or_else(|| {
                    panic!(
                        "broadcast: {:?} -> {:?} not broadcastable",
                        nodes[a.0].value.shape(),
                        shape
                    )
                })
                .to_owned()
        };
        self.push_derived(value, vec![a], Op::Broadcast)
    }

    /// Sum over `axes`, keeping the summed dimensions with size 1.
    pub fn sum_axes(&self, a: V, axes: &[usize]) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            let mut v = nodes[a.0].value.clone();
            let mut sorted = axes.to_vec();
            sorted.sort_unstable();
            for &ax in sorted.iter().rev() {
                v = v.sum_axis(Axis(ax)).insert_axis(Axis(ax));
            }
            v
        };
        self.push_derived(value, vec![a], Op::SumAxes { axes: axes.to_vec() })
    }

    /// Sum of all elements; 0-d result.
    pub fn sum_all(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            ArrayD::from_elem(IxDyn(&[]), nodes[a.0].value.sum())
        };
        self.push_derived(value, vec![a], Op::SumAll)
    }

    /// Mean of all elements; 0-d result.
    pub fn mean_all(&self, a: V) -> V {
        let n = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.len()
        };
        let s = self.sum_all(a);
        self.scale(s, T::from_f64(1.0 / n as f64))
    }

    pub fn reshape(&self, a: V, shape: &[usize]) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0]
                .value
                .clone()
                .into_shape(IxDyn(shape))
                .expect("reshape: element count mismatch")
        };
        self.push_derived(value, vec![a], Op::Reshape)
    }

    pub fn permute(&self, a: V, axes: &[usize]) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0]
                .value
                .clone()
                .permuted_axes(IxDyn(axes))
                .as_standard_layout()
                .to_owned()
        };
        self.push_derived(value, vec![a], Op::Permute { axes: axes.to_vec() })
    }

    /// 2-d matrix product.
    pub fn matmul(&self, a: V, b: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            let av = nodes[a.0]
                .value
                .view()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("matmul: lhs not 2-d");
            let bv = nodes[b.0]
                .value
                .view()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("matmul: rhs not 2-d");
            av.dot(&bv).into_dyn()
        };
        self.push_derived(value, vec![a, b], Op::Matmul)
    }

    pub fn relu(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| if x > T::zero() { x } else { T::zero() })
        };
        self.push_derived(value, vec![a], Op::Relu)
    }

    pub fn tanh(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x.tanh())
        };
        self.push_derived(value, vec![a], Op::Tanh)
    }

    pub fn sigmoid(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0]
                .value
                .mapv(|x| T::one() / (T::one() + (-x).exp()))
        };
        self.push_derived(value, vec![a], Op::Sigmoid)
    }

    pub fn exp(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x.exp())
        };
        self.push_derived(value, vec![a], Op::Exp)
    }

    pub fn ln(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|x| x.ln())
        };
        self.push_derived(value, vec![a], Op::Ln)
    }

    /// Unfold `[B,C,H,W]` into `[C*k*k, B*Ho*Wo]` patch columns.
    pub fn im2col(&self, a: V, geom: ConvGeom) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            conv::im2col(&nodes[a.0].value, &geom)
        };
        self.push_derived(value, vec![a], Op::Im2col(geom))
    }

    /// Adjoint of [`Tape::im2col`]: scatter-add columns back to `[B,C,H,W]`.
    pub fn col2im(&self, a: V, geom: ConvGeom) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            conv::col2im(&nodes[a.0].value, &geom)
        };
        self.push_derived(value, vec![a], Op::Col2im(geom))
    }

    /// Nearest-neighbor 2x upsampling of `[B,C,H,W]`.
    pub fn upsample2x(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            conv::upsample2x(&nodes[a.0].value)
        };
        self.push_derived(value, vec![a], Op::Upsample2x)
    }

    /// 2x2 sum pooling; adjoint of [`Tape::upsample2x`].
    pub fn sum_pool2x(&self, a: V) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            conv::sum_pool2x(&nodes[a.0].value)
        };
        self.push_derived(value, vec![a], Op::SumPool2x)
    }

    pub fn mean_pool2x(&self, a: V) -> V {
        let s = self.sum_pool2x(a);
        self.scale(s, T::from_f64(0.25))
    }

    /// Select `bank[labels[i]]` per sample: `[K, ...] -> [B, ...]`.
    pub fn index_rows(&self, bank: V, labels: Rc<Vec<usize>>) -> V {
        let (value, rows) = {
            let nodes = self.nodes.borrow();
            let b = &nodes[bank.0].value;
            (conv::index_rows(b, &labels), b.shape()[0])
        };
        self.push_derived(value, vec![bank], Op::IndexRows { labels, rows })
    }

    /// Scatter-add rows of `[B, ...]` into `rows` bank rows by label.
    pub fn scatter_rows(&self, a: V, labels: Rc<Vec<usize>>, rows: usize) -> V {
        let value = {
            let nodes = self.nodes.borrow();
            conv::scatter_rows(&nodes[a.0].value, &labels, rows)
        };
        self.push_derived(value, vec![a], Op::ScatterRows { labels, rows })
    }

    // ---- backward ----

    /// Gradients of scalar `y` with respect to each of `wrt`.
    ///
    /// Returned gradients are tape nodes themselves, so they can be
    /// differentiated again (double backprop).
    pub fn grad(&self, y: V, wrt: &[V]) -> Vec<Option<V>> {
        {
            let nodes = self.nodes.borrow();
            assert_eq!(nodes[y.0].value.len(), 1, "grad: output must be scalar");
        }
        let mut grads: Vec<Option<V>> = vec![None; y.0 + 1];
        let seed = {
            let shape = self.shape(y);
            self.constant(ArrayD::from_elem(IxDyn(&shape), T::one()))
        };
        grads[y.0] = Some(seed);

        for id in (0..=y.0).rev() {
            let g = match grads[id] {
                Some(g) => g,
                None => continue,
            };
            let (op, parents, needs) = {
                let nodes = self.nodes.borrow();
                if !nodes[id].needs_grad {
                    continue;
                }
                (
                    nodes[id].op.clone(),
                    nodes[id].parents.clone(),
                    nodes[id].needs_grad,
                )
            };
            let _ = needs;
            for (pid, gv) in self.vjp(V(id), &op, &parents, g) {
                let parent_needs = self.nodes.borrow()[pid.0].needs_grad;
                if !parent_needs {
                    continue;
                }
                grads[pid.0] = Some(match grads[pid.0] {
                    Some(acc) => self.add(acc, gv),
                    None => gv,
                });
            }
        }

        wrt.iter()
            .map(|v| if v.0 <= y.0 { grads[v.0] } else { None })
            .collect()
    }

    fn vjp(&self, node: V, op: &Op<T>, parents: &[V], g: V) -> Vec<(V, V)> {
        match op {
            Op::Leaf => vec![],
            Op::Add => vec![(parents[0], g), (parents[1], g)],
            Op::Sub => vec![(parents[0], g), (parents[1], self.neg(g))],
            Op::Mul => vec![
                (parents[0], self.mul(g, parents[1])),
                (parents[1], self.mul(g, parents[0])),
            ],
            Op::Neg => vec![(parents[0], self.neg(g))],
            Op::Scale(c) => vec![(parents[0], self.scale(g, *c))],
            Op::AddScalar(_) => vec![(parents[0], g)],
            Op::Powf(p) => {
                let d = self.powf(parents[0], *p - T::one());
                let d = self.scale(d, *p);
                vec![(parents[0], self.mul(g, d))]
            }
            Op::ClampMin(c) => {
                let mask = {
                    let nodes = self.nodes.borrow();
                    nodes[parents[0].0]
                        .value
                        .mapv(|x| if x > *c { T::one() } else { T::zero() })
                };
                let mask = self.constant(mask);
                vec![(parents[0], self.mul(g, mask))]
            }
            Op::Broadcast => {
                let from = self.shape(parents[0]);
                vec![(parents[0], self.sum_to(g, &from))]
            }
            Op::SumAxes { axes: _ } => {
                let from = self.shape(parents[0]);
                vec![(parents[0], self.broadcast(g, &from))]
            }
            Op::SumAll => {
                let from = self.shape(parents[0]);
                vec![(parents[0], self.broadcast(g, &from))]
            }
            Op::Reshape => {
                let from = self.shape(parents[0]);
                vec![(parents[0], self.reshape(g, &from))]
            }
            Op::Permute { axes } => {
                let mut inv = vec![0usize; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inv[a] = i;
                }
                vec![(parents[0], self.permute(g, &inv))]
            }
            Op::Matmul => {
                let bt = self.permute(parents[1], &[1, 0]);
                let at = self.permute(parents[0], &[1, 0]);
                vec![
                    (parents[0], self.matmul(g, bt)),
                    (parents[1], self.matmul(at, g)),
                ]
            }
            Op::Relu => {
                let mask = {
                    let nodes = self.nodes.borrow();
                    nodes[parents[0].0]
                        .value
                        .mapv(|x| if x > T::zero() { T::one() } else { T::zero() })
                };
                let mask = self.constant(mask);
                vec![(parents[0], self.mul(g, mask))]
            }
            Op::Tanh => {
                // d tanh = 1 - y^2, expressed through the node itself so the
                // derivative stays differentiable.
                let y2 = self.mul(node, node);
                let d = self.add_scalar(self.neg(y2), T::one());
                vec![(parents[0], self.mul(g, d))]
            }
            Op::Sigmoid => {
                let one_minus = self.add_scalar(self.neg(node), T::one());
                let d = self.mul(node, one_minus);
                vec![(parents[0], self.mul(g, d))]
            }
            Op::Exp => vec![(parents[0], self.mul(g, node))],
            Op::Ln => {
                let d = self.recip(parents[0]);
                vec![(parents[0], self.mul(g, d))]
            }
            Op::Recip => {
                let y2 = self.mul(node, node);
                vec![(parents[0], self.neg(self.mul(g, y2)))]
            }
            Op::Im2col(geom) => vec![(parents[0], self.col2im(g, geom.clone()))],
            Op::Col2im(geom) => vec![(parents[0], self.im2col(g, geom.clone()))],
            Op::Upsample2x => vec![(parents[0], self.sum_pool2x(g))],
            Op::SumPool2x => vec![(parents[0], self.upsample2x(g))],
            Op::IndexRows { labels, rows } => {
                vec![(parents[0], self.scatter_rows(g, labels.clone(), *rows))]
            }
            Op::ScatterRows { labels, rows: _ } => {
                vec![(parents[0], self.index_rows(g, labels.clone()))]
            }
        }
    }

    /// Reduce `g` back to `shape` by summing broadcasted axes.
    fn sum_to(&self, g: V, shape: &[usize]) -> V {
        let gshape = self.shape(g);
        if gshape == shape {
            return g;
        }
        let lead = gshape.len() - shape.len();
        let mut axes: Vec<usize> = (0..lead).collect();
        for (i, &d) in shape.iter().enumerate() {
            if d == 1 && gshape[lead + i] != 1 {
                axes.push(lead + i);
            }
        }
        let summed = if axes.is_empty() { g } else { self.sum_axes(g, &axes) };
        self.reshape(summed, shape)
    }
}

#[cfg(test)]
mod tests;
