use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::blocks;
use super::spec::{Init, NetworkSpec, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Pixel values enter the graph shifted by `-PIXEL_MEAN` and leave it shifted
/// back, so `[0, 1]` images look zero-centred to the first layer and the
/// output bias does not have to learn the mean grey level.
pub const PIXEL_MEAN: f64 = 0.5;

/// A [`NetworkSpec`] together with its parameter tensors.
#[derive(Clone)]
pub struct Network<T: Scalar = f32> {
    spec: NetworkSpec,
    param_specs: Vec<ParamSpec>,
    params: Vec<Arc<Tensor<T>>>,
    /// Parameter index range of every node.
    layout: Vec<Range<usize>>,
    /// For every node, the last node that reads it.
    last_use: Vec<usize>,
}

impl<T: Scalar> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("name", &self.spec.name)
            .field("scale", &self.spec.scale)
            .field("params", &self.num_params())
            .finish()
    }
}

fn layout(spec: &NetworkSpec) -> Vec<Range<usize>> {
    let mut start = 0;
    spec.nodes()
        .iter()
        .map(|n| {
            let len = n.kind.params(&n.name).len();
            start += len;
            start - len..start
        })
        .collect()
}

fn last_use(spec: &NetworkSpec) -> Vec<usize> {
    let nodes = spec.nodes();
    let mut last: Vec<usize> = (0..nodes.len()).collect();
    for (i, n) in nodes.iter().enumerate() {
        for &j in &n.inputs {
            last[j] = last[j].max(i);
        }
    }
    last
}

impl<T: Scalar> Network<T> {
    /// Fresh weights: Kaiming-uniform convolutions, zero biases, constant
    /// slopes and zero GRN affine terms, drawn from a seeded generator.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let param_specs = spec.param_specs();
        let params = param_specs
            .iter()
            .map(|p| {
                let t = match p.init {
                    Init::KaimingUniform { fan_in } => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        Tensor::from_fn(p.dims, |_| T::lit(rng.random_range(-bound..bound)))?
                    }
                    Init::Constant(v) => Tensor::full(p.dims, T::lit(v))?,
                };
                Ok(Arc::new(t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            layout: layout(&spec),
            last_use: last_use(&spec),
            spec,
            param_specs,
            params,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let param_specs = spec.param_specs();
        check_shapes(&param_specs, &params)?;
        Ok(Network {
            layout: layout(&spec),
            last_use: last_use(&spec),
            spec,
            param_specs,
            params: params.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn scale(&self) -> usize {
        self.spec.scale
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.param_specs
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.params.iter().map(|p| p.as_ref())
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Mutable parameter access. Copies a tensor only if a tape still holds it.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params.iter_mut().map(Arc::make_mut).collect()
    }

    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        check_shapes(&self.param_specs, &params)?;
        self.params = params.into_iter().map(Arc::new).collect();
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            param_specs: self.param_specs.clone(),
            params: self.params.iter().map(|p| Arc::new(p.cast())).collect(),
            layout: self.layout.clone(),
            last_use: self.last_use.clone(),
        }
    }

    /// Parameters as differentiable leaves of `tape`.
    pub fn leaves(&self, tape: &mut Tape<T>) -> Vec<Var<T>> {
        self.params.iter().map(|p| tape.leaf(Arc::clone(p))).collect()
    }

    /// Runs the graph on `tape` with the given parameter variables (one per
    /// [`param_specs`](Self::param_specs) entry). Node outputs are released
    /// right after their last consumer, so on an inference tape peak memory
    /// stays near the widest cut of the graph. Inputs and outputs are in the
    /// `[0, 1]` pixel domain; see [`PIXEL_MEAN`].
    pub fn forward_with(&self, tape: &mut Tape<T>, params: &[Var<T>], x: &Var<T>) -> Result<Var<T>> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "{} parameter variables for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        let [_, c, h, w] = x.dims();
        if c != self.spec.in_channels() {
            return Err(Error::shape(format!(
                "{} expects {} input channels, got {c}",
                self.spec.name,
                self.spec.in_channels()
            )));
        }
        self.spec.infer_dims(h, w)?;
        let nodes = self.spec.nodes();
        let mut values: Vec<Option<Var<T>>> = vec![None; nodes.len()];
        values[0] = Some(shift(tape, x, -PIXEL_MEAN)?);
        for (i, node) in nodes.iter().enumerate().skip(1) {
            let out = {
                let ins: Vec<&Var<T>> = node
                    .inputs
                    .iter()
                    .map(|&j| values[j].as_ref().expect("inputs are computed before use"))
                    .collect();
                blocks::forward(&node.kind, tape, &params[self.layout[i].clone()], &ins)?
            };
            for &j in &node.inputs {
                if self.last_use[j] == i {
                    values[j] = None;
                }
            }
            values[i] = Some(out);
        }
        let y = values.pop().flatten().expect("output node is computed");
        shift(tape, &y, PIXEL_MEAN)
    }

    /// Inference on a `[n, 3, h, w]` batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let params: Vec<Var<T>> = self.params.iter().map(|p| Var::constant(Arc::clone(p))).collect();
        let y = self.forward_with(&mut tape, &params, &Var::constant(x.clone()))?;
        Ok(Arc::try_unwrap(y.into_shared()).unwrap_or_else(|shared| (*shared).clone()))
    }
}

fn shift<T: Scalar>(tape: &mut Tape<T>, x: &Var<T>, by: f64) -> Result<Var<T>> {
    let offset = Var::constant(Tensor::full(x.dims(), T::lit(by))?);
    tape.add(x, &offset)
}

fn check_shapes<T: Scalar>(specs: &[ParamSpec], params: &[Tensor<T>]) -> Result<()> {
    if specs.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors for {} parameters",
            params.len(),
            specs.len()
        )));
    }
    for (s, p) in specs.iter().zip(params) {
        if s.dims != p.dims() {
            return Err(Error::Checkpoint(format!(
                "{}: expected {:?}, got {:?}",
                s.name,
                s.dims,
                p.dims()
            )));
        }
    }
    Ok(())
}
