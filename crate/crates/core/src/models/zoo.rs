//! Builders for the challenge architectures and the FSRCNN baseline.

use super::constants::*;
use super::spec::{BlockKind, GraphBuilder, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::ops::Activation;

fn check_scale(scale: usize) -> Result<()> {
    if scale == 2 || scale == 4 {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported scale {scale} (2 or 4)")))
    }
}

fn conv(in_ch: usize, out_ch: usize, kernel: usize) -> BlockKind {
    BlockKind::Conv {
        in_ch,
        out_ch,
        kernel,
        stride: 1,
        padding: kernel / 2,
        groups: 1,
    }
}

/// Pixel-shuffle tail shared by most networks: 3x3 conv to `3 r^2`, shuffle.
fn shuffle_tail(g: &mut GraphBuilder, from: usize, r: usize) -> Result<usize> {
    let c = g.channels_of(from);
    let t = g.push("tail.conv", conv(c, 3 * r * r, 3), &[from])?;
    g.push("tail.shuffle", BlockKind::Shuffle { factor: r }, &[t])
}

/// Multi-kernel stride-2 head, two residual 3x3 layers at half resolution,
/// and a shuffle by `2 * scale` that also undoes the head's downscale.
pub fn build_athena(scale: usize) -> Result<NetworkSpec> {
    check_scale(scale)?;
    let width = ATHENA_PATH_CHANNELS * ATHENA_KERNELS.len();
    let mut g = GraphBuilder::new("athena", scale, width, ATHENA_BODY_CONVS, 3);
    let mut x = g.push(
        "head",
        BlockKind::Downscale {
            in_ch: 3,
            out_per_path: ATHENA_PATH_CHANNELS,
            kernels: ATHENA_KERNELS.to_vec(),
        },
        &[g.input()],
    )?;
    for i in 0..ATHENA_BODY_CONVS {
        let c = g.push(format!("body.{i}.conv"), conv(width, width, 3), &[x])?;
        let a = g.push(
            format!("body.{i}.act"),
            BlockKind::Activation(Activation::LeakyRelu(LEAKY_SLOPE)),
            &[c],
        )?;
        x = g.push(format!("body.{i}.add"), BlockKind::Add, &[a, x])?;
    }
    shuffle_tail(&mut g, x, 2 * scale)?;
    g.finish()
}

pub fn build_cspsr(scale: usize, n_blocks: usize) -> Result<NetworkSpec> {
    check_scale(scale)?;
    if n_blocks == 0 {
        return Err(Error::invalid("cspsr needs at least one block"));
    }
    let c = CSPSR_CHANNELS;
    let mut g = GraphBuilder::new("cspsr", scale, c, n_blocks, 3);
    let shallow = g.push("head", conv(3, c, 3), &[g.input()])?;
    let mut x = shallow;
    for i in 0..n_blocks {
        x = g.push(
            format!("body.{i}"),
            BlockKind::Csp {
                channels: c,
                depth: CSPSR_DEPTH,
                slope: LEAKY_SLOPE,
            },
            &[x],
        )?;
    }
    let x = g.push("skip", BlockKind::Add, &[x, shallow])?;
    shuffle_tail(&mut g, x, scale)?;
    g.finish()
}

/// `x + fuse(cat(safm(x), ffc(x)))`, then a residual channel mixer.
pub fn build_ffcir(scale: usize, n_blocks: usize, channels: usize) -> Result<NetworkSpec> {
    check_scale(scale)?;
    let c = channels;
    let mut g = GraphBuilder::new("ffcir", scale, c, n_blocks, 3);
    let head = g.push("head", conv(3, c, 3), &[g.input()])?;
    let head = g.push("head.grn", BlockKind::Grn { channels: c }, &[head])?;
    let mut x = head;
    for i in 0..n_blocks {
        let p = format!("body.{i}");
        let s = g.push(
            format!("{p}.safm"),
            BlockKind::Safm {
                channels: c,
                levels: SAFM_LEVELS,
            },
            &[x],
        )?;
        let f = g.push(
            format!("{p}.ffc"),
            BlockKind::Ffc {
                channels: c,
                half_split: false,
            },
            &[x],
        )?;
        let cat = g.push(format!("{p}.cat"), BlockKind::Concat, &[s, f])?;
        let fused = g.push(format!("{p}.fuse"), conv(2 * c, c, 1), &[cat])?;
        let y = g.push(format!("{p}.add0"), BlockKind::Add, &[fused, x])?;
        let m = g.push(format!("{p}.ccm"), BlockKind::Ccm { channels: c }, &[y])?;
        x = g.push(format!("{p}.add1"), BlockKind::Add, &[m, y])?;
    }
    let x = g.push("skip", BlockKind::Add, &[x, head])?;
    shuffle_tail(&mut g, x, scale)?;
    g.finish()
}

/// SAFM + CCM blocks, then channel repetition and shuffle for feature
/// upsampling, a 3x3 output conv, and a nearest-upsampled input residual.
pub fn build_vacv(scale: usize) -> Result<NetworkSpec> {
    check_scale(scale)?;
    let c = VACV_CHANNELS;
    let mut g = GraphBuilder::new("vacv", scale, c, VACV_BLOCKS, 3);
    let head = g.push("head", conv(3, c, 3), &[g.input()])?;
    let mut x = head;
    for i in 0..VACV_BLOCKS {
        let p = format!("body.{i}");
        let s = g.push(
            format!("{p}.safm"),
            BlockKind::Safm {
                channels: c,
                levels: SAFM_LEVELS,
            },
            &[x],
        )?;
        let y = g.push(format!("{p}.add0"), BlockKind::Add, &[s, x])?;
        let m = g.push(format!("{p}.ccm"), BlockKind::Ccm { channels: c }, &[y])?;
        x = g.push(format!("{p}.add1"), BlockKind::Add, &[m, y])?;
    }
    let x = g.push("skip", BlockKind::Add, &[x, head])?;
    let r = g.push(
        "up.repeat",
        BlockKind::Repeat {
            times: scale * scale,
        },
        &[x],
    )?;
    let up = g.push("up.shuffle", BlockKind::Shuffle { factor: scale }, &[r])?;
    let out = g.push("tail.conv", conv(c, 3, 3), &[up])?;
    let base = g.push(
        "residual.upsample",
        BlockKind::UpsampleNearest { factor: scale },
        &[g.input()],
    )?;
    g.push("residual.add", BlockKind::Add, &[out, base])?;
    g.finish()
}

pub fn build_fsrcnn(scale: usize) -> Result<NetworkSpec> {
    check_scale(scale)?;
    let (d, s) = (FSRCNN_D, FSRCNN_S);
    let mut g = GraphBuilder::new("fsrcnn", scale, d, FSRCNN_M, 3);
    let mut x = g.push("extract", conv(3, d, 5), &[g.input()])?;
    x = g.push("extract.prelu", BlockKind::Prelu { channels: d }, &[x])?;
    x = g.push("shrink", conv(d, s, 1), &[x])?;
    x = g.push("shrink.prelu", BlockKind::Prelu { channels: s }, &[x])?;
    for i in 0..FSRCNN_M {
        x = g.push(format!("map.{i}"), conv(s, s, 3), &[x])?;
        x = g.push(format!("map.{i}.prelu"), BlockKind::Prelu { channels: s }, &[x])?;
    }
    x = g.push("expand", conv(s, d, 1), &[x])?;
    x = g.push("expand.prelu", BlockKind::Prelu { channels: d }, &[x])?;
    g.push(
        "deconv",
        BlockKind::ConvTranspose {
            in_ch: d,
            out_ch: 3,
            kernel: 9,
            stride: scale,
            padding: 4,
            output_padding: scale - 1,
        },
        &[x],
    )?;
    g.finish()
}

/// Architectures reachable by name from the CLI and configuration files.
pub const ARCHITECTURES: [&str; 5] = ["ffcir", "cspsr", "vacv", "athena", "fsrcnn"];

pub fn build(name: &str, scale: usize) -> Result<NetworkSpec> {
    match name.to_ascii_lowercase().as_str() {
        "ffcir" => build_ffcir(scale, FFCIR_BLOCKS, FFCIR_CHANNELS),
        "cspsr" | "ivcl" => build_cspsr(scale, CSPSR_BLOCKS),
        "vacv" => build_vacv(scale),
        "athena" => build_athena(scale),
        "fsrcnn" => build_fsrcnn(scale),
        other => Err(Error::invalid(format!(
            "unknown architecture {other:?} (expected one of {})",
            ARCHITECTURES.join(", ")
        ))),
    }
}
