//! Declarative layer graphs.
//!
//! A [`NetworkSpec`] is a list of nodes in evaluation order. Node 0 is the
//! input image; every other node names the earlier nodes it consumes, which
//! makes the graph acyclic by construction. The last node is the output.

use crate::error::{Error, Result};
use crate::tensor::ops::Activation;
use crate::tensor::Dims;

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Kaiming-uniform with negative slope `sqrt(5)`, i.e. uniform in
    /// `[-b, b]` with `b = 1 / sqrt(fan_in)`.
    KaimingUniform { fan_in: usize },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Dims,
    pub init: Init,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockKind {
    Input {
        channels: usize,
    },
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
    },
    ConvTranspose {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
    Activation(Activation),
    /// Per-channel learned negative slope.
    Prelu {
        channels: usize,
    },
    Grn {
        channels: usize,
    },
    /// Multi-level pooled modulation: `levels` channel chunks, chunk `i`
    /// pooled by `2^i`, depthwise 3x3, restored, fused by 1x1 + GELU and
    /// multiplied with the input.
    Safm {
        channels: usize,
        levels: usize,
    },
    /// 3x3 conv C -> 2C, GELU, 1x1 conv 2C -> C.
    Ccm {
        channels: usize,
    },
    /// Spatial 3x3 branch plus a spectral branch (fft2, 1x1 conv over the
    /// stacked real/imaginary channels, GELU, inverse fft). With `half_split`
    /// the local branch sees the first half of the channels, the spectral one
    /// the second half, and the outputs are concatenated; otherwise both see
    /// all channels and are summed.
    Ffc {
        channels: usize,
        half_split: bool,
    },
    /// Cross-stage partial block: second channel half through `depth`
    /// 3x3 conv + leaky-ReLU layers, re-joined with the untouched half, 1x1
    /// transition.
    Csp {
        channels: usize,
        depth: usize,
        slope: f64,
    },
    /// Parallel stride-2 convolutions (padding `k / 2`) concatenated.
    Downscale {
        in_ch: usize,
        out_per_path: usize,
        kernels: Vec<usize>,
    },
    /// Every channel repeated `times` times consecutively.
    Repeat {
        times: usize,
    },
    Shuffle {
        factor: usize,
    },
    UpsampleNearest {
        factor: usize,
    },
    Add,
    Concat,
}

impl BlockKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BlockKind::Input { .. } => "input",
            BlockKind::Conv { .. } => "conv",
            BlockKind::ConvTranspose { .. } => "conv_transpose",
            BlockKind::Activation(_) => "activation",
            BlockKind::Prelu { .. } => "prelu",
            BlockKind::Grn { .. } => "grn",
            BlockKind::Safm { .. } => "safm",
            BlockKind::Ccm { .. } => "ccm",
            BlockKind::Ffc { .. } => "ffc",
            BlockKind::Csp { .. } => "csp",
            BlockKind::Downscale { .. } => "downscale",
            BlockKind::Repeat { .. } => "repeat",
            BlockKind::Shuffle { .. } => "shuffle",
            BlockKind::UpsampleNearest { .. } => "upsample",
            BlockKind::Add => "add",
            BlockKind::Concat => "concat",
        }
    }

    pub fn is_normalization(&self) -> bool {
        matches!(self, BlockKind::Grn { .. })
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            BlockKind::Input { .. } => n == 0,
            BlockKind::Add => n == 2,
            BlockKind::Concat => n >= 1,
            _ => n == 1,
        }
    }

    fn check_ranges(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("{}: {msg}", self.tag())));
        match *self {
            BlockKind::Input { channels } if channels == 0 => bad("zero channels".into()),
            BlockKind::Conv {
                in_ch,
                out_ch,
                kernel,
                stride,
                groups,
                ..
            } => {
                if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 || groups == 0 {
                    return bad("zero-sized parameter".into());
                }
                if in_ch % groups != 0 || out_ch % groups != 0 {
                    return bad(format!("{in_ch}->{out_ch} not divisible by {groups} groups"));
                }
                Ok(())
            }
            BlockKind::ConvTranspose {
                in_ch,
                out_ch,
                kernel,
                stride,
                output_padding,
                ..
            } => {
                if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
                    return bad("zero-sized parameter".into());
                }
                if output_padding >= stride {
                    return bad("output padding must be smaller than the stride".into());
                }
                Ok(())
            }
            BlockKind::Activation(Activation::LeakyRelu(s)) if !s.is_finite() => {
                bad("non-finite slope".into())
            }
            BlockKind::Prelu { channels }
            | BlockKind::Grn { channels }
            | BlockKind::Ccm { channels }
                if channels == 0 =>
            {
                bad("zero channels".into())
            }
            BlockKind::Safm { channels, levels } => {
                if levels == 0 || channels == 0 || channels % levels != 0 {
                    return bad(format!("{channels} channels not divisible by {levels} levels"));
                }
                Ok(())
            }
            BlockKind::Ffc {
                channels,
                half_split,
            } => {
                if channels == 0 || (half_split && channels % 2 != 0) {
                    return bad(format!("{channels} channels cannot be split in half"));
                }
                Ok(())
            }
            BlockKind::Csp { channels, depth, .. } => {
                if channels < 2 || channels % 2 != 0 || depth == 0 {
                    return bad(format!("{channels} channels / depth {depth}"));
                }
                Ok(())
            }
            BlockKind::Downscale {
                in_ch,
                out_per_path,
                ref kernels,
            } => {
                if in_ch == 0 || out_per_path == 0 || kernels.is_empty() || kernels.contains(&0) {
                    return bad("empty path".into());
                }
                Ok(())
            }
            BlockKind::Repeat { times } if times == 0 => bad("zero repetitions".into()),
            BlockKind::Shuffle { factor } | BlockKind::UpsampleNearest { factor } if factor == 0 => {
                bad("zero factor".into())
            }
            _ => Ok(()),
        }
    }

    /// Output channel count from the input channel counts.
    pub fn out_channels(&self, inputs: &[usize]) -> Result<usize> {
        let mismatch = |want: usize, got: usize| {
            Err(Error::shape(format!(
                "{} expects {want} input channels, got {got}",
                self.tag()
            )))
        };
        let c = inputs.first().copied().unwrap_or(0);
        match *self {
            BlockKind::Input { channels } => Ok(channels),
            BlockKind::Conv { in_ch, out_ch, .. }
            | BlockKind::ConvTranspose { in_ch, out_ch, .. } => {
                if c != in_ch {
                    return mismatch(in_ch, c);
                }
                Ok(out_ch)
            }
            BlockKind::Activation(_) | BlockKind::UpsampleNearest { .. } => Ok(c),
            BlockKind::Prelu { channels }
            | BlockKind::Grn { channels }
            | BlockKind::Safm { channels, .. }
            | BlockKind::Ccm { channels }
            | BlockKind::Ffc { channels, .. }
            | BlockKind::Csp { channels, .. } => {
                if c != channels {
                    return mismatch(channels, c);
                }
                Ok(c)
            }
            BlockKind::Downscale {
                in_ch,
                out_per_path,
                ref kernels,
            } => {
                if c != in_ch {
                    return mismatch(in_ch, c);
                }
                Ok(out_per_path * kernels.len())
            }
            BlockKind::Repeat { times } => Ok(c * times),
            BlockKind::Shuffle { factor } => {
                let r2 = factor * factor;
                if c % r2 != 0 {
                    return Err(Error::shape(format!(
                        "shuffle by {factor} needs channels divisible by {r2}, got {c}"
                    )));
                }
                Ok(c / r2)
            }
            BlockKind::Add => {
                if inputs[0] != inputs[1] {
                    return Err(Error::shape(format!(
                        "add of {} and {} channels",
                        inputs[0], inputs[1]
                    )));
                }
                Ok(c)
            }
            BlockKind::Concat => Ok(inputs.iter().sum()),
        }
    }

    /// Output spatial size from the input dims (`n = 1`).
    pub fn out_spatial(&self, inputs: &[Dims]) -> Result<(usize, usize)> {
        let [_, _, h, w] = inputs.first().copied().unwrap_or([1, 1, 1, 1]);
        let conv_out = |k: usize, s: usize, p: usize| -> Result<(usize, usize)> {
            if h + 2 * p < k || w + 2 * p < k {
                return Err(Error::shape(format!(
                    "{h}x{w} input too small for a {k}x{k} kernel"
                )));
            }
            Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
        };
        match *self {
            BlockKind::Input { .. } => Ok((h, w)),
            BlockKind::Conv {
                kernel,
                stride,
                padding,
                ..
            } => conv_out(kernel, stride, padding),
            BlockKind::ConvTranspose {
                kernel,
                stride,
                padding,
                output_padding,
                ..
            } => {
                let oh = (h - 1) * stride + kernel + output_padding;
                let ow = (w - 1) * stride + kernel + output_padding;
                if oh <= 2 * padding || ow <= 2 * padding {
                    return Err(Error::shape("transposed conv output would be empty"));
                }
                Ok((oh - 2 * padding, ow - 2 * padding))
            }
            BlockKind::Downscale { ref kernels, .. } => {
                // the tail shuffles by twice the scale, so only even sizes round-trip
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(format!(
                        "downscale block needs even spatial dims, got {h}x{w}"
                    )));
                }
                let mut out = None;
                for &k in kernels {
                    let o = conv_out(k, 2, k / 2)?;
                    if out.is_some_and(|prev| prev != o) {
                        return Err(Error::shape("downscale paths disagree on output size"));
                    }
                    out = Some(o);
                }
                Ok(out.unwrap_or((h, w)))
            }
            BlockKind::Shuffle { factor } | BlockKind::UpsampleNearest { factor } => {
                Ok((h * factor, w * factor))
            }
            BlockKind::Add | BlockKind::Concat => {
                if inputs.iter().any(|d| (d[2], d[3]) != (h, w)) {
                    return Err(Error::shape(format!(
                        "{} of differently sized inputs",
                        self.tag()
                    )));
                }
                Ok((h, w))
            }
            _ => Ok((h, w)),
        }
    }

    /// Learnable tensors, in the order the forward pass consumes them.
    pub fn params(&self, prefix: &str) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let conv = |out: &mut Vec<ParamSpec>, name: &str, o: usize, i: usize, k: usize| {
            out.push(ParamSpec {
                name: format!("{prefix}.{name}weight"),
                dims: [o, i, k, k],
                init: Init::KaimingUniform { fan_in: i * k * k },
            });
            out.push(ParamSpec {
                name: format!("{prefix}.{name}bias"),
                dims: [1, o, 1, 1],
                init: Init::Constant(0.0),
            });
        };
        match *self {
            BlockKind::Conv {
                in_ch,
                out_ch,
                kernel,
                groups,
                ..
            } => conv(&mut out, "", out_ch, in_ch / groups, kernel),
            BlockKind::ConvTranspose {
                in_ch,
                out_ch,
                kernel,
                ..
            } => {
                out.push(ParamSpec {
                    name: format!("{prefix}.weight"),
                    dims: [in_ch, out_ch, kernel, kernel],
                    init: Init::KaimingUniform {
                        fan_in: out_ch * kernel * kernel,
                    },
                });
                out.push(ParamSpec {
                    name: format!("{prefix}.bias"),
                    dims: [1, out_ch, 1, 1],
                    init: Init::Constant(0.0),
                });
            }
            BlockKind::Prelu { channels } => out.push(ParamSpec {
                name: format!("{prefix}.alpha"),
                dims: [1, channels, 1, 1],
                init: Init::Constant(0.25),
            }),
            BlockKind::Grn { channels } => {
                for p in ["gamma", "beta"] {
                    out.push(ParamSpec {
                        name: format!("{prefix}.{p}"),
                        dims: [1, channels, 1, 1],
                        init: Init::Constant(0.0),
                    });
                }
            }
            BlockKind::Safm { channels, levels } => {
                let chunk = channels / levels;
                for i in 0..levels {
                    conv(&mut out, &format!("dw{i}."), chunk, 1, 3);
                }
                conv(&mut out, "aggr.", channels, channels, 1);
            }
            BlockKind::Ccm { channels } => {
                conv(&mut out, "expand.", 2 * channels, channels, 3);
                conv(&mut out, "reduce.", channels, 2 * channels, 1);
            }
            BlockKind::Ffc {
                channels,
                half_split,
            } => {
                let part = if half_split { channels / 2 } else { channels };
                conv(&mut out, "local.", part, part, 3);
                conv(&mut out, "spectral.", 2 * part, 2 * part, 1);
            }
            BlockKind::Csp {
                channels, depth, ..
            } => {
                let half = channels / 2;
                for i in 0..depth {
                    conv(&mut out, &format!("conv{i}."), half, half, 3);
                }
                conv(&mut out, "transition.", channels, channels, 1);
            }
            BlockKind::Downscale {
                in_ch,
                out_per_path,
                ref kernels,
            } => {
                for &k in kernels {
                    conv(&mut out, &format!("k{k}."), out_per_path, in_ch, k);
                }
            }
            _ => {}
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: BlockKind,
    pub inputs: Vec<usize>,
}

/// Declarative description of one SR network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub scale: usize,
    /// Base feature width.
    pub channels: usize,
    /// Number of deep feature-extraction blocks.
    pub n_blocks: usize,
    nodes: Vec<Node>,
}

/// Incremental builder that validates every node as it is added.
pub struct GraphBuilder {
    spec: NetworkSpec,
    channels: Vec<usize>,
}

impl GraphBuilder {
    pub fn new(name: &str, scale: usize, channels: usize, n_blocks: usize, in_channels: usize) -> Self {
        let spec = NetworkSpec {
            name: name.to_string(),
            scale,
            channels,
            n_blocks,
            nodes: vec![Node {
                name: "input".into(),
                kind: BlockKind::Input {
                    channels: in_channels,
                },
                inputs: Vec::new(),
            }],
        };
        GraphBuilder {
            spec,
            channels: vec![in_channels],
        }
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn channels_of(&self, node: usize) -> usize {
        self.channels[node]
    }

    pub fn push(&mut self, name: impl Into<String>, kind: BlockKind, inputs: &[usize]) -> Result<usize> {
        let node = Node {
            name: name.into(),
            kind,
            inputs: inputs.to_vec(),
        };
        let c = self.spec.check_node(self.spec.nodes.len(), &node, &self.channels)?;
        self.spec.nodes.push(node);
        self.channels.push(c);
        Ok(self.spec.nodes.len() - 1)
    }

    pub fn finish(self) -> Result<NetworkSpec> {
        self.spec.validate()?;
        Ok(self.spec)
    }
}

impl NetworkSpec {
    /// A spec with no layers beyond the input; forward is the identity.
    pub fn empty(name: &str, channels: usize) -> Self {
        NetworkSpec {
            name: name.into(),
            scale: 1,
            channels,
            n_blocks: 0,
            nodes: vec![Node {
                name: "input".into(),
                kind: BlockKind::Input { channels },
                inputs: Vec::new(),
            }],
        }
    }

    pub fn from_nodes(name: &str, scale: usize, channels: usize, n_blocks: usize, nodes: Vec<Node>) -> Result<Self> {
        let spec = NetworkSpec {
            name: name.into(),
            scale,
            channels,
            n_blocks,
            nodes,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn in_channels(&self) -> usize {
        match self.nodes[0].kind {
            BlockKind::Input { channels } => channels,
            _ => unreachable!("validated spec starts with its input"),
        }
    }

    fn check_node(&self, index: usize, node: &Node, channels: &[usize]) -> Result<usize> {
        let ctx = |e: Error| match e {
            Error::Shape(m) => Error::Shape(format!("node {index} ({}): {m}", node.name)),
            Error::InvalidArgument(m) => {
                Error::InvalidArgument(format!("node {index} ({}): {m}", node.name))
            }
            other => other,
        };
        if !node.kind.arity_ok(node.inputs.len()) {
            return Err(Error::invalid(format!(
                "node {index} ({}): {} cannot take {} inputs",
                node.name,
                node.kind.tag(),
                node.inputs.len()
            )));
        }
        if let Some(&bad) = node.inputs.iter().find(|&&i| i >= index) {
            return Err(Error::invalid(format!(
                "node {index} ({}) consumes node {bad}, which is not earlier in the graph",
                node.name
            )));
        }
        node.kind.check_ranges().map_err(ctx)?;
        let ins: Vec<usize> = node.inputs.iter().map(|&i| channels[i]).collect();
        node.kind.out_channels(&ins).map_err(ctx)
    }

    /// Checks acyclicity, arities, parameter ranges and channel agreement,
    /// returning the channel count of every node.
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.nodes.is_empty() || !matches!(self.nodes[0].kind, BlockKind::Input { .. }) {
            return Err(Error::invalid("a spec starts with exactly one input node"));
        }
        let mut channels = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            if i > 0 && matches!(node.kind, BlockKind::Input { .. }) {
                return Err(Error::invalid("only node 0 may be an input"));
            }
            let c = self.check_node(i, node, &channels)?;
            channels.push(c);
        }
        Ok(channels)
    }

    /// Per-node output dims for a `[1, c, h, w]` input.
    pub fn infer_dims(&self, h: usize, w: usize) -> Result<Vec<Dims>> {
        let channels = self.validate()?;
        if h == 0 || w == 0 {
            return Err(Error::shape("input must be at least 1x1"));
        }
        let mut dims: Vec<Dims> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let ins: Vec<Dims> = if i == 0 {
                vec![[1, channels[0], h, w]]
            } else {
                node.inputs.iter().map(|&j| dims[j]).collect()
            };
            let (oh, ow) = node.kind.out_spatial(&ins).map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("node {i} ({}): {m}", node.name)),
                other => other,
            })?;
            dims.push([1, channels[i], oh, ow]);
        }
        Ok(dims)
    }

    pub fn output_channels(&self) -> usize {
        self.validate().map(|c| *c.last().unwrap()).unwrap_or(0)
    }

    /// All learnable tensors in node order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        self.nodes
            .iter()
            .flat_map(|n| n.kind.params(&n.name))
            .collect()
    }
}

/// Sum of weight and bias element counts.
pub fn count_params(spec: &NetworkSpec) -> usize {
    spec.param_specs().iter().map(ParamSpec::len).sum()
}
