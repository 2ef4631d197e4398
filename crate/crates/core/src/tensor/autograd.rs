//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to tracked [`Var`]s in creation
//! order, which is already a topological order; [`Tape::backward`] replays it
//! in reverse. Vars built from constants, or on an inference tape, carry no
//! node and cost nothing beyond their value.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::fft;
use super::ops::{self, Activation, ConvGeometry};
use super::{Dims, Scalar, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct NodeRef {
    tape: u64,
    index: usize,
}

/// A value flowing through a tape.
#[derive(Clone)]
pub struct Var<T: Scalar = f32> {
    value: Arc<Tensor<T>>,
    node: Option<NodeRef>,
}

impl<T: Scalar> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("dims", &self.value.dims())
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl<T: Scalar> Var<T> {
    /// An untracked value; gradients never flow into it.
    pub fn constant(value: impl Into<Arc<Tensor<T>>>) -> Self {
        Var {
            value: value.into(),
            node: None,
        }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shared(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    pub fn into_shared(self) -> Arc<Tensor<T>> {
        self.value
    }

    pub fn dims(&self) -> Dims {
        self.value.dims()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }
}

#[derive(Clone)]
struct Slot<T: Scalar> {
    node: Option<usize>,
    value: Arc<Tensor<T>>,
}

enum OpKind {
    Leaf,
    Conv2d { geometry: ConvGeometry, bias: bool },
    ConvTranspose2d { stride: usize, padding: usize, output_padding: usize, bias: bool },
    PixelShuffle(usize),
    Activation(Activation),
    Prelu,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat,
    SliceChannels { start: usize },
    RepeatChannels(usize),
    AdaptiveMaxPool { argmax: Vec<usize> },
    UpsampleNearest,
    Grn,
    Fft2Stack,
    Ifft2Real,
    Abs,
    Sum,
    Mean,
    Charbonnier { eps: f64 },
    WeightedL1 { rows: Vec<f64> },
}

struct Node<T: Scalar> {
    kind: OpKind,
    inputs: Vec<Slot<T>>,
}

pub struct Tape<T: Scalar = f32> {
    id: u64,
    recording: bool,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, keyed by the leaves of the tape.
pub struct Gradients<T: Scalar = f32> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Result<&Tensor<T>> {
        let node = var
            .node
            .ok_or_else(|| Error::Autograd("variable is not on the tape".into()))?;
        if node.tape != self.tape {
            return Err(Error::Autograd("variable belongs to another tape".into()));
        }
        self.grads[node.index].as_ref().ok_or_else(|| {
            Error::Autograd("no gradient recorded for this variable (not a leaf)".into())
        })
    }

    /// Gradient of a leaf that did not influence the loss is all zeros.
    pub fn get_or_zeros(&self, var: &Var<T>) -> Result<Tensor<T>> {
        match self.get(var) {
            Ok(g) => Ok(g.clone()),
            Err(_) if var.node.is_some_and(|n| n.tape == self.tape) => Tensor::zeros(var.dims()),
            Err(e) => Err(e),
        }
    }
}

fn check_same_dims<T: Scalar>(a: &Var<T>, b: &Var<T>, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    /// A recording tape for training and gradient checks.
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            recording: true,
            nodes: Vec::new(),
        }
    }

    /// A tape that records nothing; intermediate values are freed as soon as
    /// their last `Var` is dropped.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Tape::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf (parameter or input).
    pub fn leaf(&mut self, value: impl Into<Arc<Tensor<T>>>) -> Var<T> {
        let value = value.into();
        if !self.recording {
            return Var::constant(value);
        }
        self.nodes.push(Node {
            kind: OpKind::Leaf,
            inputs: Vec::new(),
        });
        Var {
            value,
            node: Some(NodeRef {
                tape: self.id,
                index: self.nodes.len() - 1,
            }),
        }
    }

    fn slot(&self, v: &Var<T>) -> Result<Slot<T>> {
        let node = match v.node {
            Some(r) if r.tape != self.id => {
                return Err(Error::Autograd("variable belongs to another tape".into()))
            }
            Some(r) => Some(r.index),
            None => None,
        };
        Ok(Slot {
            node,
            value: Arc::clone(&v.value),
        })
    }

    fn record(&mut self, kind: OpKind, inputs: &[&Var<T>], value: Tensor<T>) -> Result<Var<T>> {
        let value = Arc::new(value);
        if !self.recording || inputs.iter().all(|v| v.node.is_none()) {
            return Ok(Var::constant(value));
        }
        let inputs = inputs
            .iter()
            .map(|v| self.slot(v))
            .collect::<Result<Vec<_>>>()?;
        self.nodes.push(Node { kind, inputs });
        Ok(Var {
            value,
            node: Some(NodeRef {
                tape: self.id,
                index: self.nodes.len() - 1,
            }),
        })
    }

    pub fn conv2d(
        &mut self,
        x: &Var<T>,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        geometry: ConvGeometry,
    ) -> Result<Var<T>> {
        let out = ops::conv2d_raw(x.value(), weight.value(), bias.map(|b| b.value()), geometry)?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.record(
            OpKind::Conv2d {
                geometry,
                bias: bias.is_some(),
            },
            &inputs,
            out,
        )
    }

    pub fn conv_transpose2d(
        &mut self,
        x: &Var<T>,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var<T>> {
        let out = ops::conv_transpose2d(
            x.value(),
            weight.value(),
            bias.map(|b| b.value()),
            stride,
            padding,
            output_padding,
        )?;
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        self.record(
            OpKind::ConvTranspose2d {
                stride,
                padding,
                output_padding,
                bias: bias.is_some(),
            },
            &inputs,
            out,
        )
    }

    pub fn pixel_shuffle(&mut self, x: &Var<T>, r: usize) -> Result<Var<T>> {
        let out = ops::pixel_shuffle(x.value(), r)?;
        self.record(OpKind::PixelShuffle(r), &[x], out)
    }

    pub fn activation(&mut self, x: &Var<T>, act: Activation) -> Result<Var<T>> {
        let out = act.apply(x.value());
        self.record(OpKind::Activation(act), &[x], out)
    }

    pub fn gelu(&mut self, x: &Var<T>) -> Result<Var<T>> {
        self.activation(x, Activation::Gelu)
    }

    pub fn relu(&mut self, x: &Var<T>) -> Result<Var<T>> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: &Var<T>, slope: f64) -> Result<Var<T>> {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn prelu(&mut self, x: &Var<T>, alpha: &Var<T>) -> Result<Var<T>> {
        let out = ops::prelu(x.value(), alpha.value())?;
        self.record(OpKind::Prelu, &[x, alpha], out)
    }

    pub fn add(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        check_same_dims(a, b, "add")?;
        let out = a.value().add(b.value())?;
        self.record(OpKind::Add, &[a, b], out)
    }

    pub fn sub(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        check_same_dims(a, b, "sub")?;
        let out = a.value().sub(b.value())?;
        self.record(OpKind::Sub, &[a, b], out)
    }

    pub fn mul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        check_same_dims(a, b, "mul")?;
        let out = a.value().mul(b.value())?;
        self.record(OpKind::Mul, &[a, b], out)
    }

    pub fn scale(&mut self, x: &Var<T>, k: f64) -> Result<Var<T>> {
        let out = x.value().scale(T::lit(k));
        self.record(OpKind::Scale(k), &[x], out)
    }

    pub fn concat_channels(&mut self, xs: &[&Var<T>]) -> Result<Var<T>> {
        let values: Vec<&Tensor<T>> = xs.iter().map(|v| v.value()).collect();
        let out = ops::concat_channels(&values)?;
        self.record(OpKind::Concat, xs, out)
    }

    pub fn slice_channels(&mut self, x: &Var<T>, start: usize, len: usize) -> Result<Var<T>> {
        let out = x.value().slice_channels(start, len)?;
        self.record(OpKind::SliceChannels { start }, &[x], out)
    }

    pub fn repeat_channels(&mut self, x: &Var<T>, times: usize) -> Result<Var<T>> {
        let out = ops::repeat_channels(x.value(), times)?;
        self.record(OpKind::RepeatChannels(times), &[x], out)
    }

    pub fn adaptive_max_pool(&mut self, x: &Var<T>, oh: usize, ow: usize) -> Result<Var<T>> {
        let (out, argmax) = ops::adaptive_max_pool_with_indices(x.value(), oh, ow)?;
        let argmax = if self.recording && x.is_tracked() {
            argmax
        } else {
            Vec::new()
        };
        self.record(OpKind::AdaptiveMaxPool { argmax }, &[x], out)
    }

    pub fn upsample_nearest(&mut self, x: &Var<T>, th: usize, tw: usize) -> Result<Var<T>> {
        let out = ops::upsample_nearest(x.value(), th, tw)?;
        self.record(OpKind::UpsampleNearest, &[x], out)
    }

    pub fn grn(&mut self, x: &Var<T>, gamma: &Var<T>, beta: &Var<T>) -> Result<Var<T>> {
        let out = ops::grn(x.value(), gamma.value(), beta.value())?;
        self.record(OpKind::Grn, &[x, gamma, beta], out)
    }

    pub fn fft2_stack(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let out = fft::fft2_stack(x.value());
        self.record(OpKind::Fft2Stack, &[x], out)
    }

    pub fn ifft2_real(&mut self, z: &Var<T>) -> Result<Var<T>> {
        let out = fft::ifft2_real(z.value())?;
        self.record(OpKind::Ifft2Real, &[z], out)
    }

    pub fn abs(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let out = x.value().map(|v| v.abs());
        self.record(OpKind::Abs, &[x], out)
    }

    pub fn sum(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let out = Tensor::scalar(x.value().sum());
        self.record(OpKind::Sum, &[x], out)
    }

    pub fn mean(&mut self, x: &Var<T>) -> Result<Var<T>> {
        let out = Tensor::scalar(x.value().mean());
        self.record(OpKind::Mean, &[x], out)
    }

    /// Mean of `sqrt((x - y)^2 + eps^2)`.
    pub fn charbonnier(&mut self, x: &Var<T>, y: &Var<T>, eps: f64) -> Result<Var<T>> {
        check_same_dims(x, y, "charbonnier")?;
        let e2 = T::lit(eps * eps);
        let total: T = x
            .value()
            .data()
            .iter()
            .zip(y.value().data())
            .map(|(&a, &b)| ((a - b) * (a - b) + e2).sqrt())
            .sum();
        let out = Tensor::scalar(total / T::lit(x.value().len() as f64));
        self.record(OpKind::Charbonnier { eps }, &[x, y], out)
    }

    /// Row-weighted L1, `sum(w_row * |x - y|) / sum(w)` over every element.
    pub fn weighted_l1(&mut self, x: &Var<T>, y: &Var<T>, rows: &[f64]) -> Result<Var<T>> {
        check_same_dims(x, y, "weighted_l1")?;
        let [n, c, h, w] = x.dims();
        if rows.len() != h {
            return Err(Error::shape(format!(
                "weighted_l1: {} row weights for height {h}",
                rows.len()
            )));
        }
        let denom = rows.iter().sum::<f64>() * (n * c * w) as f64;
        let mut acc = 0.0f64;
        for (i, (&a, &b)) in x.value().data().iter().zip(y.value().data()).enumerate() {
            let row = (i / w) % h;
            acc += rows[row] * (a - b).abs().to_f64().unwrap_or(f64::NAN);
        }
        let out = Tensor::scalar(T::lit(acc / denom));
        self.record(
            OpKind::WeightedL1 {
                rows: rows.to_vec(),
            },
            &[x, y],
            out,
        )
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every leaf
    /// that influences it; fan-out contributions are summed.
    pub fn backward(&self, loss: &Var<T>) -> Result<Gradients<T>> {
        if loss.dims() != [1, 1, 1, 1] {
            return Err(Error::Autograd(format!(
                "loss must be a scalar, got {:?}",
                loss.dims()
            )));
        }
        let root = match loss.node {
            Some(r) if r.tape == self.id => r.index,
            Some(_) => return Err(Error::Autograd("loss belongs to another tape".into())),
            None => return Err(Error::Autograd("loss is not on the tape".into())),
        };
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(T::one()));
        for idx in (0..=root).rev() {
            let node = &self.nodes[idx];
            if matches!(node.kind, OpKind::Leaf) {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let input_grads = backward_op(node, &gout)?;
            for (slot, g) in node.inputs.iter().zip(input_grads) {
                let (Some(p), Some(g)) = (slot.node, g) else {
                    continue;
                };
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    empty => *empty = Some(g),
                }
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

fn wants(slot: &Slot<impl Scalar>) -> bool {
    slot.node.is_some()
}

fn backward_op<T: Scalar>(node: &Node<T>, gout: &Tensor<T>) -> Result<Vec<Option<Tensor<T>>>> {
    let ins = &node.inputs;
    let v = |i: usize| -> &Tensor<T> { &ins[i].value };
    Ok(match &node.kind {
        OpKind::Leaf => Vec::new(),
        OpKind::Conv2d { geometry, bias } => {
            let (gx, gw, gb) = ops::conv2d_backward(v(0), v(1), *bias, *geometry, gout)?;
            let mut out = vec![Some(gx), Some(gw)];
            if *bias {
                out.push(gb);
            }
            out
        }
        OpKind::ConvTranspose2d {
            stride,
            padding,
            output_padding,
            bias,
        } => {
            let (gx, gw, gb) = ops::conv_transpose2d_backward(
                v(0),
                v(1),
                *bias,
                *stride,
                *padding,
                *output_padding,
                gout,
            )?;
            let mut out = vec![Some(gx), Some(gw)];
            if *bias {
                out.push(gb);
            }
            out
        }
        OpKind::PixelShuffle(r) => vec![Some(ops::pixel_unshuffle(gout, *r)?)],
        OpKind::Activation(act) => vec![Some(act.backward(v(0), gout))],
        OpKind::Prelu => {
            let (gx, ga) = ops::prelu_backward(v(0), v(1), gout);
            vec![Some(gx), Some(ga)]
        }
        OpKind::Add => vec![Some(gout.clone()), Some(gout.clone())],
        OpKind::Sub => vec![Some(gout.clone()), Some(gout.scale(-T::one()))],
        OpKind::Mul => vec![
            wants(&ins[0]).then(|| gout.mul(v(1))).transpose()?,
            wants(&ins[1]).then(|| gout.mul(v(0))).transpose()?,
        ],
        OpKind::Scale(k) => vec![Some(gout.scale(T::lit(*k)))],
        OpKind::Concat => {
            let mut start = 0;
            let mut out = Vec::with_capacity(ins.len());
            for slot in ins {
                let c = slot.value.c();
                out.push(wants(slot).then(|| gout.slice_channels(start, c)).transpose()?);
                start += c;
            }
            out
        }
        OpKind::SliceChannels { start } => {
            let [n, c, h, w] = v(0).dims();
            let len = gout.c();
            let hw = h * w;
            let mut gx = vec![T::zero(); n * c * hw];
            for s in 0..n {
                gx[(s * c + start) * hw..][..len * hw]
                    .copy_from_slice(&gout.data()[s * len * hw..][..len * hw]);
            }
            vec![Some(Tensor::from_parts([n, c, h, w], gx))]
        }
        OpKind::RepeatChannels(times) => {
            vec![Some(ops::repeat_channels_backward(v(0).dims(), *times, gout))]
        }
        OpKind::AdaptiveMaxPool { argmax } => {
            let mut gx = vec![T::zero(); v(0).len()];
            for (&src, &g) in argmax.iter().zip(gout.data()) {
                gx[src] = gx[src] + g;
            }
            vec![Some(Tensor::from_parts(v(0).dims(), gx))]
        }
        OpKind::UpsampleNearest => {
            vec![Some(ops::upsample_nearest_backward(v(0).dims(), gout))]
        }
        OpKind::Grn => {
            let (gx, gg, gb) = ops::grn_backward(v(0), v(1), gout);
            vec![Some(gx), Some(gg), Some(gb)]
        }
        OpKind::Fft2Stack => vec![Some(fft::fft2_stack_backward(gout))],
        OpKind::Ifft2Real => vec![Some(fft::ifft2_real_backward(gout))],
        OpKind::Abs => {
            let gx = v(0).zip_map(gout, |x, g| {
                if x > T::zero() {
                    g
                } else if x < T::zero() {
                    -g
                } else {
                    T::zero()
                }
            })?;
            vec![Some(gx)]
        }
        OpKind::Sum => vec![Some(Tensor::full(v(0).dims(), gout.data()[0])?)],
        OpKind::Mean => {
            let n = T::lit(v(0).len() as f64);
            vec![Some(Tensor::full(v(0).dims(), gout.data()[0] / n)?)]
        }
        OpKind::Charbonnier { eps } => {
            let e2 = T::lit(eps * eps);
            let k = gout.data()[0] / T::lit(v(0).len() as f64);
            let gx = v(0).zip_map(v(1), |a, b| {
                let d = a - b;
                k * d / (d * d + e2).sqrt()
            })?;
            let gy = wants(&ins[1]).then(|| gx.scale(-T::one()));
            vec![Some(gx), gy]
        }
        OpKind::WeightedL1 { rows } => {
            let [n, c, h, w] = v(0).dims();
            let denom = rows.iter().sum::<f64>() * (n * c * w) as f64;
            let k = gout.data()[0];
            let data = v(0)
                .data()
                .iter()
                .zip(v(1).data())
                .enumerate()
                .map(|(i, (&a, &b))| {
                    let d = a - b;
                    let s = if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    k * s * T::lit(rows[(i / w) % h] / denom)
                })
                .collect();
            let gx = Tensor::from_parts([n, c, h, w], data);
            let gy = wants(&ins[1]).then(|| gx.scale(-T::one()));
            vec![Some(gx), gy]
        }
    })
}
