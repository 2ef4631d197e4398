//! Forward passes and operation counts of the block kinds.

use super::spec::BlockKind;
use crate::error::Result;
use crate::tensor::ops::Activation;
use crate::tensor::{ConvGeometry, Dims, Scalar, Tape, Var};

type V<T> = Var<T>;

fn conv<T: Scalar>(
    tape: &mut Tape<T>,
    x: &V<T>,
    p: &[V<T>],
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<V<T>> {
    tape.conv2d(x, &p[0], Some(&p[1]), ConvGeometry::new(stride, padding, groups))
}

pub(crate) fn forward<T: Scalar>(
    kind: &BlockKind,
    tape: &mut Tape<T>,
    p: &[V<T>],
    xs: &[&V<T>],
) -> Result<V<T>> {
    let x = xs[0];
    match *kind {
        BlockKind::Input { .. } => Ok(x.clone()),
        BlockKind::Conv {
            stride,
            padding,
            groups,
            ..
        } => conv(tape, x, p, stride, padding, groups),
        BlockKind::ConvTranspose {
            stride,
            padding,
            output_padding,
            ..
        } => tape.conv_transpose2d(x, &p[0], Some(&p[1]), stride, padding, output_padding),
        BlockKind::Activation(act) => tape.activation(x, act),
        BlockKind::Prelu { .. } => tape.prelu(x, &p[0]),
        BlockKind::Grn { .. } => tape.grn(x, &p[0], &p[1]),
        BlockKind::Safm { channels, levels } => safm(tape, x, p, channels, levels),
        BlockKind::Ccm { .. } => {
            let e = conv(tape, x, &p[0..2], 1, 1, 1)?;
            let e = tape.gelu(&e)?;
            conv(tape, &e, &p[2..4], 1, 0, 1)
        }
        BlockKind::Ffc {
            channels,
            half_split,
        } => {
            if half_split {
                let half = channels / 2;
                let a = tape.slice_channels(x, 0, half)?;
                let b = tape.slice_channels(x, half, half)?;
                let local = conv(tape, &a, &p[0..2], 1, 1, 1)?;
                let global = spectral(tape, &b, &p[2..4])?;
                tape.concat_channels(&[&local, &global])
            } else {
                let local = conv(tape, x, &p[0..2], 1, 1, 1)?;
                let global = spectral(tape, x, &p[2..4])?;
                tape.add(&local, &global)
            }
        }
        BlockKind::Csp {
            channels,
            depth,
            slope,
        } => {
            let half = channels / 2;
            let keep = tape.slice_channels(x, 0, half)?;
            let mut y = tape.slice_channels(x, half, half)?;
            for i in 0..depth {
                y = conv(tape, &y, &p[2 * i..2 * i + 2], 1, 1, 1)?;
                y = tape.leaky_relu(&y, slope)?;
            }
            let joined = tape.concat_channels(&[&keep, &y])?;
            conv(tape, &joined, &p[2 * depth..2 * depth + 2], 1, 0, 1)
        }
        BlockKind::Downscale { ref kernels, .. } => {
            let mut paths = Vec::with_capacity(kernels.len());
            for (i, &k) in kernels.iter().enumerate() {
                paths.push(conv(tape, x, &p[2 * i..2 * i + 2], 2, k / 2, 1)?);
            }
            let refs: Vec<&V<T>> = paths.iter().collect();
            tape.concat_channels(&refs)
        }
        BlockKind::Repeat { times } => tape.repeat_channels(x, times),
        BlockKind::Shuffle { factor } => tape.pixel_shuffle(x, factor),
        BlockKind::UpsampleNearest { factor } => {
            let [_, _, h, w] = x.dims();
            tape.upsample_nearest(x, h * factor, w * factor)
        }
        BlockKind::Add => tape.add(xs[0], xs[1]),
        BlockKind::Concat => tape.concat_channels(xs),
    }
}

/// Orthonormal scaling (`1/sqrt(hw)` forward, `sqrt(hw)` inverse) keeps the
/// spectral coefficients on the same scale as the features at any resolution.
fn spectral<T: Scalar>(tape: &mut Tape<T>, x: &V<T>, p: &[V<T>]) -> Result<V<T>> {
    let [_, _, h, w] = x.dims();
    let norm = ((h * w) as f64).sqrt();
    let f = tape.fft2_stack(x)?;
    let f = tape.scale(&f, 1.0 / norm)?;
    let f = conv(tape, &f, p, 1, 0, 1)?;
    let f = tape.gelu(&f)?;
    let y = tape.ifft2_real(&f)?;
    tape.scale(&y, norm)
}

/// Level `i` of the modulation pyramid is pooled to `max(1, h >> i)` rows.
pub(crate) fn safm_level_size(h: usize, w: usize, level: usize) -> (usize, usize) {
    ((h >> level).max(1), (w >> level).max(1))
}

fn safm<T: Scalar>(
    tape: &mut Tape<T>,
    x: &V<T>,
    p: &[V<T>],
    channels: usize,
    levels: usize,
) -> Result<V<T>> {
    let chunk = channels / levels;
    let [_, _, h, w] = x.dims();
    let mut parts = Vec::with_capacity(levels);
    for i in 0..levels {
        let xi = tape.slice_channels(x, i * chunk, chunk)?;
        let dw = &p[2 * i..2 * i + 2];
        let s = if i == 0 {
            conv(tape, &xi, dw, 1, 1, chunk)?
        } else {
            let (ph, pw) = safm_level_size(h, w, i);
            let pooled = tape.adaptive_max_pool(&xi, ph, pw)?;
            let s = conv(tape, &pooled, dw, 1, 1, chunk)?;
            tape.upsample_nearest(&s, h, w)?
        };
        parts.push(s);
    }
    let refs: Vec<&V<T>> = parts.iter().collect();
    let cat = tape.concat_channels(&refs)?;
    let mask = conv(tape, &cat, &p[2 * levels..2 * levels + 2], 1, 0, 1)?;
    let mask = tape.gelu(&mask)?;
    tape.mul(&mask, x)
}

fn elems(d: Dims) -> u64 {
    d.iter().map(|&v| v as u64).product()
}

fn conv_flops(out: Dims, in_per_group: usize, kernel: usize) -> u64 {
    2 * elems(out) * (in_per_group * kernel * kernel) as u64
}

/// Nominal `5 N log2 N` for one complex 2-D transform of `N = h * w` points.
fn fft_flops(h: usize, w: usize) -> u64 {
    let n = (h * w) as f64;
    if n <= 1.0 {
        return 0;
    }
    (5.0 * n * n.log2()).round() as u64
}

/// FLOPs of one node: 2 per multiply-accumulate in convolutions, one per
/// element for activations, additions and products, nothing for pure data
/// movement (shuffle, repeat, concat, slicing, nearest upsampling).
pub(crate) fn flops(kind: &BlockKind, ins: &[Dims], out: Dims) -> u64 {
    let [_, _, h, w] = out;
    let hw = (h * w) as u64;
    match *kind {
        BlockKind::Conv {
            in_ch,
            kernel,
            groups,
            ..
        } => conv_flops(out, in_ch / groups, kernel),
        BlockKind::ConvTranspose {
            out_ch, kernel, ..
        } => 2 * elems(ins[0]) * (out_ch * kernel * kernel) as u64,
        BlockKind::Activation(Activation::Gelu) => elems(out),
        BlockKind::Activation(_) | BlockKind::Prelu { .. } | BlockKind::Add => elems(out),
        // norm (square + accumulate), scale, shift, residual
        BlockKind::Grn { .. } => 5 * elems(out),
        BlockKind::Safm { channels, levels } => {
            let chunk = channels / levels;
            let mut total = 0;
            for i in 0..levels {
                let (ph, pw) = safm_level_size(h, w, i);
                total += conv_flops([1, chunk, ph, pw], 1, 3);
                if i > 0 {
                    total += (chunk as u64) * hw;
                }
            }
            total + conv_flops([1, channels, h, w], channels, 1) + 2 * elems(out)
        }
        BlockKind::Ccm { channels } => {
            conv_flops([1, 2 * channels, h, w], channels, 3)
                + 2 * channels as u64 * hw
                + conv_flops([1, channels, h, w], 2 * channels, 1)
        }
        BlockKind::Ffc {
            channels,
            half_split,
        } => {
            let part = if half_split { channels / 2 } else { channels };
            let local = conv_flops([1, part, h, w], part, 3);
            let spectral = 2 * part as u64 * fft_flops(h, w)
                + conv_flops([1, 2 * part, h, w], 2 * part, 1)
                + 4 * part as u64 * hw
                + part as u64 * hw;
            local + spectral + if half_split { 0 } else { elems(out) }
        }
        BlockKind::Csp {
            channels, depth, ..
        } => {
            let half = channels / 2;
            depth as u64 * (conv_flops([1, half, h, w], half, 3) + half as u64 * hw)
                + conv_flops(out, channels, 1)
        }
        BlockKind::Downscale {
            in_ch,
            out_per_path,
            ref kernels,
        } => kernels
            .iter()
            .map(|&k| conv_flops([1, out_per_path, h, w], in_ch, k))
            .sum(),
        _ => 0,
    }
}
