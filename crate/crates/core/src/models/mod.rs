//! SR architectures as declarative graphs, their weights, and the classical
//! resampling baselines.

mod blocks;
pub mod checkpoint;
pub mod constants;
mod network;
pub mod resample;
mod spec;
mod zoo;

pub use network::{Network, PIXEL_MEAN};
pub use resample::{bicubic_downscale, bicubic_upscale, lanczos_upscale, resize, Filter};
pub use spec::{count_params, BlockKind, GraphBuilder, Init, NetworkSpec, Node, ParamSpec};
pub use zoo::{build, build_athena, build_cspsr, build_ffcir, build_fsrcnn, build_vacv, ARCHITECTURES};

use crate::error::Result;

/// Forward FLOPs for one `[1, c, in_h, in_w]` input, in units of 10^9.
pub fn count_flops(spec: &NetworkSpec, in_h: usize, in_w: usize) -> Result<f64> {
    Ok(count_flops_exact(spec, in_h, in_w)? as f64 / 1e9)
}

pub fn count_flops_exact(spec: &NetworkSpec, in_h: usize, in_w: usize) -> Result<u64> {
    let dims = spec.infer_dims(in_h, in_w)?;
    Ok(spec
        .nodes()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, n)| {
            let ins: Vec<_> = n.inputs.iter().map(|&j| dims[j]).collect();
            blocks::flops(&n.kind, &ins, dims[i])
        })
        .sum())
}

/// Run one block kind on its own, e.g. to probe a SAFM or FFC block in
/// isolation. `params` follow [`BlockKind::params`] order.
pub fn block_forward<T: crate::tensor::Scalar>(
    kind: &BlockKind,
    tape: &mut crate::tensor::Tape<T>,
    params: &[crate::tensor::Var<T>],
    inputs: &[&crate::tensor::Var<T>],
) -> Result<crate::tensor::Var<T>> {
    blocks::forward(kind, tape, params, inputs)
}
