//! Forward kernels and their adjoints.
//!
//! Convolutions use the cross-correlation convention (no kernel flip) with
//! zero padding, the same convention as mainstream deep-learning frameworks,
//! so exported weights load unchanged.

use super::{Dims, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        ConvGeometry {
            stride,
            padding,
            groups,
        }
    }

    /// Stride 1 with "same" padding for an odd square kernel.
    pub fn same(kernel: usize) -> Self {
        ConvGeometry::new(1, kernel / 2, 1)
    }
}

/// Weights `[out_ch, in_ch / groups, kh, kw]`, optional bias `[1, out_ch, 1, 1]`.
#[derive(Clone, Debug)]
pub struct ConvParams<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub geometry: ConvGeometry,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>, geometry: ConvGeometry) -> Result<Self> {
        let [out_ch, _, kh, kw] = weight.dims();
        if geometry.stride == 0 || geometry.groups == 0 || kh * kw == 0 {
            return Err(Error::invalid(format!("bad conv geometry {geometry:?}")));
        }
        if out_ch % geometry.groups != 0 {
            return Err(Error::invalid(format!(
                "out_ch {out_ch} not divisible by groups {}",
                geometry.groups
            )));
        }
        if let Some(b) = &bias {
            if b.dims() != [1, out_ch, 1, 1] {
                return Err(Error::shape(format!(
                    "bias {:?} for {out_ch} output channels",
                    b.dims()
                )));
            }
        }
        Ok(ConvParams {
            weight,
            bias,
            geometry,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1] * self.geometry.groups
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    conv2d_raw(x, &p.weight, p.bias.as_ref(), p.geometry)
}

fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub(crate) fn conv2d_out_dims(x: Dims, w: Dims, g: ConvGeometry) -> Result<Dims> {
    let [n, c, h, wd] = x;
    let [oc, icg, kh, kw] = w;
    if g.stride == 0 || g.groups == 0 {
        return Err(Error::invalid(format!("bad conv geometry {g:?}")));
    }
    if c % g.groups != 0 || oc % g.groups != 0 {
        return Err(Error::invalid(format!(
            "channels {c}->{oc} not divisible by groups {}",
            g.groups
        )));
    }
    if c / g.groups != icg {
        return Err(Error::shape(format!(
            "conv2d input has {c} channels, weight expects {} ({icg} per group x {} groups)",
            icg * g.groups,
            g.groups
        )));
    }
    match (
        out_extent(h, kh, g.stride, g.padding),
        out_extent(wd, kw, g.stride, g.padding),
    ) {
        (Some(oh), Some(ow)) => Ok([n, oc, oh, ow]),
        _ => Err(Error::shape(format!(
            "conv2d output would be empty: input {h}x{wd}, kernel {kh}x{kw}, padding {}",
            g.padding
        ))),
    }
}

/// Plane geometry shared by im2col and col2im.
#[derive(Clone, Copy)]
struct Patch {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl Patch {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Range of output positions `o` along one axis whose tap `k` lands inside
    /// `[0, extent)`.
    #[inline]
    fn valid_range(&self, k: usize, extent: usize, out: usize) -> (usize, usize) {
        // o * stride + k - padding in [0, extent)
        let lo = if self.padding > k {
            (self.padding - k).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if extent + self.padding > k {
            ((extent + self.padding - k - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

fn im2col<T: Scalar>(src: &[T], p: Patch, col: &mut [T]) {
    let cols = p.cols();
    for ci in 0..p.channels {
        let plane = &src[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ky in 0..p.kh {
            let (ylo, yhi) = p.valid_range(ky, p.h, p.oh);
            for kx in 0..p.kw {
                let (xlo, xhi) = p.valid_range(kx, p.w, p.ow);
                let row = &mut col[((ci * p.kh + ky) * p.kw + kx) * cols..][..cols];
                row.fill(T::zero());
                for oy in ylo..yhi {
                    let iy = oy * p.stride + ky - p.padding;
                    let dst = &mut row[oy * p.ow..(oy + 1) * p.ow];
                    let src_row = &plane[iy * p.w..(iy + 1) * p.w];
                    if p.stride == 1 {
                        let ix0 = xlo + kx - p.padding;
                        dst[xlo..xhi].copy_from_slice(&src_row[ix0..ix0 + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            dst[ox] = src_row[ox * p.stride + kx - p.padding];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], p: Patch, dst: &mut [T]) {
    let cols = p.cols();
    for ci in 0..p.channels {
        let plane = &mut dst[ci * p.h * p.w..(ci + 1) * p.h * p.w];
        for ky in 0..p.kh {
            let (ylo, yhi) = p.valid_range(ky, p.h, p.oh);
            for kx in 0..p.kw {
                let (xlo, xhi) = p.valid_range(kx, p.w, p.ow);
                let row = &col[((ci * p.kh + ky) * p.kw + kx) * cols..][..cols];
                for oy in ylo..yhi {
                    let iy = oy * p.stride + ky - p.padding;
                    let src = &row[oy * p.ow..(oy + 1) * p.ow];
                    let out_row = &mut plane[iy * p.w..(iy + 1) * p.w];
                    for ox in xlo..xhi {
                        let ix = ox * p.stride + kx - p.padding;
                        out_row[ix] = out_row[ix] + src[ox];
                    }
                }
            }
        }
    }
}

fn is_pointwise(kh: usize, kw: usize, g: ConvGeometry) -> bool {
    kh == 1 && kw == 1 && g.stride == 1 && g.padding == 0
}

fn add_bias<T: Scalar>(out: &mut Tensor<T>, bias: Option<&Tensor<T>>) -> Result<()> {
    let Some(b) = bias else { return Ok(()) };
    let [n, c, h, w] = out.dims();
    if b.dims() != [1, c, 1, 1] {
        return Err(Error::shape(format!("bias {:?} for {c} channels", b.dims())));
    }
    let hw = h * w;
    let data = out.data_mut();
    for s in 0..n {
        for (ch, &bv) in b.data().iter().enumerate() {
            for v in &mut data[(s * c + ch) * hw..][..hw] {
                *v = *v + bv;
            }
        }
    }
    Ok(())
}

/// 2-D cross-correlation with zero padding.
pub fn conv2d_raw<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: ConvGeometry,
) -> Result<Tensor<T>> {
    let out_dims = conv2d_out_dims(x.dims(), weight.dims(), g)?;
    let [n, c, h, w] = x.dims();
    let [oc, icg, kh, kw] = weight.dims();
    let [_, _, oh, ow] = out_dims;
    let ocg = oc / g.groups;
    let patch = Patch {
        channels: icg,
        h,
        w,
        kh,
        kw,
        stride: g.stride,
        padding: g.padding,
        oh,
        ow,
    };
    let k = patch.rows();
    let cols = patch.cols();
    let mut out = Tensor::from_parts(out_dims, vec![T::zero(); out_dims.iter().product()]);

    if icg == 1 && ocg == 1 {
        depthwise_forward(x.data(), weight.data(), patch, n * c, out.data_mut());
    } else {
        let pointwise = is_pointwise(kh, kw, g);
        let mut col = if pointwise {
            Vec::new()
        } else {
            vec![T::zero(); k * cols]
        };
        for s in 0..n {
            for grp in 0..g.groups {
                let src = &x.data()[(s * c + grp * icg) * h * w..][..icg * h * w];
                if !pointwise {
                    im2col(src, patch, &mut col);
                }
                let rhs: &[T] = if pointwise { src } else { &col };
                let wg = &weight.data()[grp * ocg * k..][..ocg * k];
                let dst = &mut out.data_mut()[(s * oc + grp * ocg) * cols..][..ocg * cols];
                T::gemm(
                    ocg,
                    k,
                    cols,
                    T::one(),
                    wg,
                    (k as isize, 1),
                    rhs,
                    (cols as isize, 1),
                    T::zero(),
                    dst,
                    (cols as isize, 1),
                );
            }
        }
    }
    add_bias(&mut out, bias)?;
    Ok(out)
}

fn depthwise_forward<T: Scalar>(x: &[T], w: &[T], p: Patch, planes: usize, out: &mut [T]) {
    let channels = w.len() / (p.kh * p.kw);
    for plane_idx in 0..planes {
        let ch = plane_idx % channels;
        let src = &x[plane_idx * p.h * p.w..][..p.h * p.w];
        let kern = &w[ch * p.kh * p.kw..][..p.kh * p.kw];
        let dst = &mut out[plane_idx * p.oh * p.ow..][..p.oh * p.ow];
        for ky in 0..p.kh {
            let (ylo, yhi) = p.valid_range(ky, p.h, p.oh);
            for kx in 0..p.kw {
                let (xlo, xhi) = p.valid_range(kx, p.w, p.ow);
                let kv = kern[ky * p.kw + kx];
                for oy in ylo..yhi {
                    let iy = oy * p.stride + ky - p.padding;
                    let src_row = &src[iy * p.w..][..p.w];
                    let dst_row = &mut dst[oy * p.ow..][..p.ow];
                    for ox in xlo..xhi {
                        dst_row[ox] =
                            dst_row[ox] + kv * src_row[ox * p.stride + kx - p.padding];
                    }
                }
            }
        }
    }
}

fn depthwise_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    p: Patch,
    planes: usize,
    gout: &[T],
    gx: &mut [T],
    gw: &mut [T],
) {
    let channels = w.len() / (p.kh * p.kw);
    for plane_idx in 0..planes {
        let ch = plane_idx % channels;
        let src = &x[plane_idx * p.h * p.w..][..p.h * p.w];
        let g = &gout[plane_idx * p.oh * p.ow..][..p.oh * p.ow];
        let gsrc = &mut gx[plane_idx * p.h * p.w..][..p.h * p.w];
        for ky in 0..p.kh {
            let (ylo, yhi) = p.valid_range(ky, p.h, p.oh);
            for kx in 0..p.kw {
                let (xlo, xhi) = p.valid_range(kx, p.w, p.ow);
                let widx = ch * p.kh * p.kw + ky * p.kw + kx;
                let kv = w[widx];
                let mut acc = T::zero();
                for oy in ylo..yhi {
                    let iy = oy * p.stride + ky - p.padding;
                    for ox in xlo..xhi {
                        let ix = ox * p.stride + kx - p.padding;
                        let gv = g[oy * p.ow + ox];
                        acc = acc + gv * src[iy * p.w + ix];
                        gsrc[iy * p.w + ix] = gsrc[iy * p.w + ix] + gv * kv;
                    }
                }
                gw[widx] = gw[widx] + acc;
            }
        }
    }
}

fn bias_grad<T: Scalar>(gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = gout.dims();
    let hw = h * w;
    let mut gb = vec![T::zero(); c];
    for s in 0..n {
        for (ch, acc) in gb.iter_mut().enumerate() {
            *acc = *acc + gout.data()[(s * c + ch) * hw..][..hw].iter().copied().sum();
        }
    }
    Tensor::from_parts([1, c, 1, 1], gb)
}

/// Gradients of [`conv2d_raw`] with respect to input, weight and (when
/// `with_bias`) bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    with_bias: bool,
    g: ConvGeometry,
    gout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
    let out_dims = conv2d_out_dims(x.dims(), weight.dims(), g)?;
    if gout.dims() != out_dims {
        return Err(Error::shape(format!(
            "conv2d gradient {:?} vs output {out_dims:?}",
            gout.dims()
        )));
    }
    let [n, c, h, w] = x.dims();
    let [oc, icg, kh, kw] = weight.dims();
    let [_, _, oh, ow] = out_dims;
    let ocg = oc / g.groups;
    let patch = Patch {
        channels: icg,
        h,
        w,
        kh,
        kw,
        stride: g.stride,
        padding: g.padding,
        oh,
        ow,
    };
    let k = patch.rows();
    let cols = patch.cols();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); weight.len()];

    if icg == 1 && ocg == 1 {
        depthwise_backward(
            x.data(),
            weight.data(),
            patch,
            n * c,
            gout.data(),
            &mut gx,
            &mut gw,
        );
    } else {
        let pointwise = is_pointwise(kh, kw, g);
        let mut col = vec![T::zero(); if pointwise { 0 } else { k * cols }];
        let mut gcol = vec![T::zero(); if pointwise { 0 } else { k * cols }];
        for s in 0..n {
            for grp in 0..g.groups {
                let xoff = (s * c + grp * icg) * h * w;
                let src = &x.data()[xoff..][..icg * h * w];
                if !pointwise {
                    im2col(src, patch, &mut col);
                }
                let colv: &[T] = if pointwise { src } else { &col };
                let go = &gout.data()[(s * oc + grp * ocg) * cols..][..ocg * cols];
                let wg = &weight.data()[grp * ocg * k..][..ocg * k];
                // dW_g += dY_g [ocg x P] * col^T [P x K]
                T::gemm(
                    ocg,
                    cols,
                    k,
                    T::one(),
                    go,
                    (cols as isize, 1),
                    colv,
                    (1, cols as isize),
                    T::one(),
                    &mut gw[grp * ocg * k..][..ocg * k],
                    (k as isize, 1),
                );
                // dcol = W_g^T [K x ocg] * dY_g [ocg x P]
                if pointwise {
                    T::gemm(
                        k,
                        ocg,
                        cols,
                        T::one(),
                        wg,
                        (1, k as isize),
                        go,
                        (cols as isize, 1),
                        T::one(),
                        &mut gx[xoff..][..icg * h * w],
                        (cols as isize, 1),
                    );
                } else {
                    T::gemm(
                        k,
                        ocg,
                        cols,
                        T::one(),
                        wg,
                        (1, k as isize),
                        go,
                        (cols as isize, 1),
                        T::zero(),
                        &mut gcol,
                        (cols as isize, 1),
                    );
                    col2im(&gcol, patch, &mut gx[xoff..][..icg * h * w]);
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(x.dims(), gx),
        Tensor::from_parts(weight.dims(), gw),
        with_bias.then(|| bias_grad(gout)),
    ))
}

pub(crate) fn conv_transpose2d_out_dims(
    x: Dims,
    w: Dims,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Dims> {
    let [n, c, h, wd] = x;
    let [ic, oc, kh, kw] = w;
    if c != ic {
        return Err(Error::shape(format!(
            "conv_transpose2d input has {c} channels, weight expects {ic}"
        )));
    }
    if stride == 0 || output_padding >= stride {
        return Err(Error::invalid(format!(
            "conv_transpose2d stride {stride} with output padding {output_padding}"
        )));
    }
    let full_h = (h - 1) * stride + kh + output_padding;
    let full_w = (wd - 1) * stride + kw + output_padding;
    if full_h <= 2 * padding || full_w <= 2 * padding {
        return Err(Error::shape("conv_transpose2d output would be empty"));
    }
    Ok([n, oc, full_h - 2 * padding, full_w - 2 * padding])
}

/// Transposed convolution (the adjoint of a strided convolution), weight
/// layout `[in_ch, out_ch, kh, kw]`, single group.
pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor<T>> {
    let out_dims = conv_transpose2d_out_dims(x.dims(), weight.dims(), stride, padding, output_padding)?;
    let [n, ic, h, w] = x.dims();
    let [_, oc, kh, kw] = weight.dims();
    let [_, _, oh, ow] = out_dims;
    let patch = Patch {
        channels: oc,
        h: oh,
        w: ow,
        kh,
        kw,
        stride,
        padding,
        oh: h,
        ow: w,
    };
    let k = patch.rows();
    let hw = h * w;
    let mut out = Tensor::from_parts(out_dims, vec![T::zero(); out_dims.iter().product()]);
    let mut col = vec![T::zero(); k * hw];
    for s in 0..n {
        // col [K x hw] = W^T [K x ic] * x_s [ic x hw]
        T::gemm(
            k,
            ic,
            hw,
            T::one(),
            weight.data(),
            (1, k as isize),
            &x.data()[s * ic * hw..][..ic * hw],
            (hw as isize, 1),
            T::zero(),
            &mut col,
            (hw as isize, 1),
        );
        col2im(&col, patch, &mut out.data_mut()[s * oc * oh * ow..][..oc * oh * ow]);
    }
    add_bias(&mut out, bias)?;
    Ok(out)
}

pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    with_bias: bool,
    stride: usize,
    padding: usize,
    output_padding: usize,
    gout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
    let out_dims = conv_transpose2d_out_dims(x.dims(), weight.dims(), stride, padding, output_padding)?;
    if gout.dims() != out_dims {
        return Err(Error::shape("conv_transpose2d gradient shape mismatch"));
    }
    let [n, ic, h, w] = x.dims();
    let [_, oc, kh, kw] = weight.dims();
    let [_, _, oh, ow] = out_dims;
    let patch = Patch {
        channels: oc,
        h: oh,
        w: ow,
        kh,
        kw,
        stride,
        padding,
        oh: h,
        ow: w,
    };
    let k = patch.rows();
    let hw = h * w;
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gcol = vec![T::zero(); k * hw];
    for s in 0..n {
        im2col(&gout.data()[s * oc * oh * ow..][..oc * oh * ow], patch, &mut gcol);
        // dx_s [ic x hw] = W [ic x K] * gcol [K x hw]
        T::gemm(
            ic,
            k,
            hw,
            T::one(),
            weight.data(),
            (k as isize, 1),
            &gcol,
            (hw as isize, 1),
            T::zero(),
            &mut gx[s * ic * hw..][..ic * hw],
            (hw as isize, 1),
        );
        // dW [ic x K] += x_s [ic x hw] * gcol^T [hw x K]
        T::gemm(
            ic,
            hw,
            k,
            T::one(),
            &x.data()[s * ic * hw..][..ic * hw],
            (hw as isize, 1),
            &gcol,
            (1, hw as isize),
            T::one(),
            &mut gw,
            (k as isize, 1),
        );
    }
    Ok((
        Tensor::from_parts(x.dims(), gx),
        Tensor::from_parts(weight.dims(), gw),
        with_bias.then(|| bias_grad(gout)),
    ))
}

pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims();
    if r == 0 || c % (r * r) != 0 {
        return Err(Error::shape(format!(
            "pixel_shuffle: {c} channels not divisible by {r}^2"
        )));
    }
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for co in 0..oc {
            for y in 0..oh {
                for xx in 0..ow {
                    let ci = co * r * r + (y % r) * r + (xx % r);
                    out[((s * oc + co) * oh + y) * ow + xx] =
                        x.data()[((s * c + ci) * h + y / r) * w + xx / r];
                }
            }
        }
    }
    Ok(Tensor::from_parts([n, oc, oh, ow], out))
}

pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims();
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::shape(format!(
            "pixel_unshuffle: {h}x{w} not divisible by {r}"
        )));
    }
    let oc = c * r * r;
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let co = ci * r * r + (y % r) * r + (xx % r);
                    out[((s * oc + co) * oh + y / r) * ow + xx / r] =
                        x.data()[((s * c + ci) * h + y) * w + xx];
                }
            }
        }
    }
    Ok(Tensor::from_parts([n, oc, oh, ow], out))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Gelu,
}

impl Activation {
    #[inline]
    fn value<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu(slope) => {
                if v > T::zero() {
                    v
                } else {
                    v * T::lit(slope)
                }
            }
            Activation::Gelu => {
                T::lit(0.5) * v * (T::one() + (v * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
            }
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(slope) => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::lit(slope)
                }
            }
            Activation::Gelu => {
                let cdf =
                    T::lit(0.5) * (T::one() + (v * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
                let pdf = (-(v * v) * T::lit(0.5)).exp()
                    * T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                cdf + v * pdf
            }
        }
    }

    pub fn apply<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| self.value(v))
    }

    pub fn backward<T: Scalar>(self, x: &Tensor<T>, gout: &Tensor<T>) -> Tensor<T> {
        Tensor::from_parts(
            x.dims(),
            x.data()
                .iter()
                .zip(gout.data())
                .map(|(&v, &g)| g * self.derivative(v))
                .collect(),
        )
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Activation::Relu.apply(x)
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    Activation::LeakyRelu(slope).apply(x)
}

/// Exact GELU, `x * Phi(x)` with the error-function form of the normal CDF.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Activation::Gelu.apply(x)
}

/// Channel-wise parametric ReLU, `alpha` shaped `[1, c, 1, 1]`.
pub fn prelu<T: Scalar>(x: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims();
    if alpha.dims() != [1, c, 1, 1] {
        return Err(Error::shape(format!(
            "prelu slope {:?} for {c} channels",
            alpha.dims()
        )));
    }
    let hw = h * w;
    let mut out = x.data().to_vec();
    for s in 0..n {
        for ch in 0..c {
            let a = alpha.data()[ch];
            for v in &mut out[(s * c + ch) * hw..][..hw] {
                if *v <= T::zero() {
                    *v = *v * a;
                }
            }
        }
    }
    Ok(Tensor::from_parts(x.dims(), out))
}

pub fn prelu_backward<T: Scalar>(
    x: &Tensor<T>,
    alpha: &Tensor<T>,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = x.dims();
    let hw = h * w;
    let mut gx = gout.data().to_vec();
    let mut ga = vec![T::zero(); c];
    for s in 0..n {
        for ch in 0..c {
            let a = alpha.data()[ch];
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                let v = x.data()[i];
                if v <= T::zero() {
                    ga[ch] = ga[ch] + gx[i] * v;
                    gx[i] = gx[i] * a;
                }
            }
        }
    }
    (
        Tensor::from_parts(x.dims(), gx),
        Tensor::from_parts([1, c, 1, 1], ga),
    )
}

fn pool_window(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

/// Adaptive max pooling. Output cell `i` covers input rows
/// `[floor(i*h/oh), ceil((i+1)*h/oh))`, likewise for columns.
pub fn adaptive_max_pool<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize) -> Result<Tensor<T>> {
    adaptive_max_pool_with_indices(x, oh, ow).map(|(t, _)| t)
}

pub(crate) fn adaptive_max_pool_with_indices<T: Scalar>(
    x: &Tensor<T>,
    oh: usize,
    ow: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.dims();
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return Err(Error::shape(format!(
            "adaptive_max_pool target {oh}x{ow} for input {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let (y0, y1) = pool_window(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_window(j, w, ow);
                let mut best = base + y0 * w + x0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        let idx = base + y * w + xx;
                        if x.data()[idx] > x.data()[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x.data()[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_parts([n, c, oh, ow], out), arg))
}

/// Nearest-neighbour enlargement: `out(y, x) = in(floor(y*h/th), floor(x*w/tw))`.
pub fn upsample_nearest<T: Scalar>(x: &Tensor<T>, th: usize, tw: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims();
    if th < h || tw < w {
        return Err(Error::shape(format!(
            "upsample_nearest target {th}x{tw} smaller than {h}x{w}"
        )));
    }
    let mut out = Vec::with_capacity(n * c * th * tw);
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..][..h * w];
        for y in 0..th {
            let sy = y * h / th;
            for xx in 0..tw {
                out.push(src[sy * w + xx * w / tw]);
            }
        }
    }
    Ok(Tensor::from_parts([n, c, th, tw], out))
}

pub fn upsample_nearest_backward<T: Scalar>(src_dims: Dims, gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = src_dims;
    let [_, _, th, tw] = gout.dims();
    let mut gx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let g = &gout.data()[plane * th * tw..][..th * tw];
        let dst = &mut gx[plane * h * w..][..h * w];
        for y in 0..th {
            let sy = y * h / th;
            for xx in 0..tw {
                let i = sy * w + xx * w / tw;
                dst[i] = dst[i] + g[y * tw + xx];
            }
        }
    }
    Tensor::from_parts(src_dims, gx)
}

/// Concatenate along channels; all inputs share `n`, `h`, `w`.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid("concat_channels of an empty list"))?;
    let [n, _, h, w] = first.dims();
    let mut total = 0;
    for x in xs {
        let [xn, xc, xh, xw] = x.dims();
        if (xn, xh, xw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat_channels: {:?} vs {:?}",
                x.dims(),
                first.dims()
            )));
        }
        total += xc;
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n * total * hw);
    for s in 0..n {
        for x in xs {
            let c = x.c();
            out.extend_from_slice(&x.data()[s * c * hw..][..c * hw]);
        }
    }
    Ok(Tensor::from_parts([n, total, h, w], out))
}

/// Repeat every channel `times` times consecutively, `[a, b] -> [a, a, b, b]`.
/// Followed by a pixel shuffle of factor `sqrt(times)` this is nearest-neighbour
/// feature upsampling.
pub fn repeat_channels<T: Scalar>(x: &Tensor<T>, times: usize) -> Result<Tensor<T>> {
    if times == 0 {
        return Err(Error::invalid("repeat_channels by zero"));
    }
    let [n, c, h, w] = x.dims();
    let hw = h * w;
    let mut out = Vec::with_capacity(x.len() * times);
    for plane in 0..n * c {
        let src = &x.data()[plane * hw..][..hw];
        for _ in 0..times {
            out.extend_from_slice(src);
        }
    }
    Ok(Tensor::from_parts([n, c * times, h, w], out))
}

pub fn repeat_channels_backward<T: Scalar>(src_dims: Dims, times: usize, gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = src_dims;
    let hw = h * w;
    let mut gx = vec![T::zero(); n * c * hw];
    for plane in 0..n * c {
        let dst = &mut gx[plane * hw..][..hw];
        for k in 0..times {
            let g = &gout.data()[(plane * times + k) * hw..][..hw];
            for (d, &v) in dst.iter_mut().zip(g) {
                *d = *d + v;
            }
        }
    }
    Tensor::from_parts(src_dims, gx)
}

pub(crate) const GRN_EPS: f64 = 1e-6;

fn grn_stats<T: Scalar>(x: &Tensor<T>, s: usize) -> (Vec<T>, T) {
    let [_, c, h, w] = x.dims();
    let hw = h * w;
    let norms: Vec<T> = (0..c)
        .map(|ch| {
            x.data()[(s * c + ch) * hw..][..hw]
                .iter()
                .map(|&v| v * v)
                .sum::<T>()
                .sqrt()
        })
        .collect();
    let mean = norms.iter().copied().sum::<T>() / T::lit(c as f64) + T::lit(GRN_EPS);
    (norms, mean)
}

/// Global response normalization: `gamma * (x * N) + beta + x` with
/// `N_c = |x_c|_2 / (mean_c |x_c|_2 + 1e-6)`, statistics per sample.
pub fn grn<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims();
    if gamma.dims() != [1, c, 1, 1] || beta.dims() != [1, c, 1, 1] {
        return Err(Error::shape(format!("grn parameters for {c} channels")));
    }
    let hw = h * w;
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        let (norms, mean) = grn_stats(x, s);
        for ch in 0..c {
            let scale = gamma.data()[ch] * norms[ch] / mean + T::one();
            let b = beta.data()[ch];
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                out[i] = x.data()[i] * scale + b;
            }
        }
    }
    Ok(Tensor::from_parts(x.dims(), out))
}

pub fn grn_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = x.dims();
    let hw = h * w;
    let inv_c = T::lit(1.0 / c as f64);
    let mut gx = vec![T::zero(); x.len()];
    let mut ggamma = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];
    for s in 0..n {
        let (norms, mean) = grn_stats(x, s);
        // a_c = dL/dN_c
        let mut a = vec![T::zero(); c];
        for ch in 0..c {
            let base = (s * c + ch) * hw;
            let mut gx_dot = T::zero();
            let mut gsum = T::zero();
            for i in base..base + hw {
                gx_dot = gx_dot + gout.data()[i] * x.data()[i];
                gsum = gsum + gout.data()[i];
            }
            let nc = norms[ch] / mean;
            ggamma[ch] = ggamma[ch] + gx_dot * nc;
            gbeta[ch] = gbeta[ch] + gsum;
            a[ch] = gx_dot * gamma.data()[ch];
        }
        let weighted: T = a.iter().zip(&norms).map(|(&ai, &gi)| ai * gi).sum();
        for ch in 0..c {
            let nc = norms[ch] / mean;
            let dnorm = a[ch] / mean - inv_c * weighted / (mean * mean);
            let through_norm = if norms[ch] > T::zero() {
                dnorm / norms[ch]
            } else {
                T::zero()
            };
            let direct = gamma.data()[ch] * nc + T::one();
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                gx[i] = gout.data()[i] * direct + through_norm * x.data()[i];
            }
        }
    }
    (
        Tensor::from_parts(x.dims(), gx),
        Tensor::from_parts([1, c, 1, 1], ggamma),
        Tensor::from_parts([1, c, 1, 1], gbeta),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: Dims, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    /// Direct six-loop correlation, the independent reference for the GEMM path.
    fn conv_reference(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, g: ConvGeometry) -> Tensor<f64> {
        let [n, c, h, wd] = x.dims();
        let [oc, icg, kh, kw] = w.dims();
        let oh = (h + 2 * g.padding - kh) / g.stride + 1;
        let ow = (wd + 2 * g.padding - kw) / g.stride + 1;
        let ocg = oc / g.groups;
        let _ = c;
        Tensor::from_fn([n, oc, oh, ow], |[s, o, y, xx]| {
            let grp = o / ocg;
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for i in 0..icg {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (y * g.stride + ky) as isize - g.padding as isize;
                        let ix = (xx * g.stride + kx) as isize - g.padding as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                            continue;
                        }
                        acc += w.at([o, i, ky, kx]) * x.at([s, grp * icg + i, iy as usize, ix as usize]);
                    }
                }
            }
            acc
        })
        .unwrap()
    }

    fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) {
        assert_eq!(a.dims(), b.dims());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = random([1, 1, 3, 3], 1);
        let w = Tensor::ones([1, 1, 1, 1]).unwrap();
        let y = conv2d_raw(&x, &w, None, ConvGeometry::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_counts_receptive_field() {
        let x = Tensor::<f32>::ones([1, 1, 3, 3]).unwrap();
        let w = Tensor::ones([1, 1, 3, 3]).unwrap();
        let y = conv2d_raw(&x, &w, None, ConvGeometry::new(1, 1, 1)).unwrap();
        assert_eq!(y.at([0, 0, 1, 1]), 9.0);
        assert_eq!(y.at([0, 0, 0, 0]), 4.0);
        assert_eq!(y.at([0, 0, 0, 1]), 6.0);
    }

    #[test]
    fn strided_output_shape() {
        let x = Tensor::<f32>::zeros([1, 1, 5, 5]).unwrap();
        let w = Tensor::zeros([2, 1, 3, 3]).unwrap();
        let y = conv2d_raw(&x, &w, None, ConvGeometry::new(2, 1, 1)).unwrap();
        assert_eq!(y.dims(), [1, 2, 3, 3]);
    }

    #[test]
    fn conv_errors() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]).unwrap();
        let w = Tensor::zeros([1, 3, 3, 3]).unwrap();
        assert!(matches!(
            conv2d_raw(&x, &w, None, ConvGeometry::default()),
            Err(Error::Shape(_))
        ));
        let w = Tensor::zeros([1, 2, 7, 7]).unwrap();
        assert!(conv2d_raw(&x, &w, None, ConvGeometry::default()).is_err());
        assert!(ConvParams::new(Tensor::<f32>::zeros([3, 1, 3, 3]).unwrap(), None, ConvGeometry::new(1, 1, 2)).is_err());
    }

    #[test]
    fn gemm_paths_match_direct_loops() {
        let cases = [
            ([2, 4, 7, 6], [6, 4, 3, 3], ConvGeometry::new(1, 1, 1)),
            ([1, 4, 7, 6], [6, 2, 3, 3], ConvGeometry::new(2, 1, 2)),
            ([1, 3, 9, 8], [5, 3, 7, 7], ConvGeometry::new(2, 3, 1)),
            ([2, 5, 4, 4], [3, 5, 1, 1], ConvGeometry::default()),
            ([1, 6, 5, 7], [6, 1, 3, 3], ConvGeometry::new(1, 1, 6)),
            ([1, 6, 5, 7], [6, 1, 3, 3], ConvGeometry::new(2, 1, 6)),
        ];
        for (i, (xd, wd, g)) in cases.into_iter().enumerate() {
            let x = random(xd, i as u64);
            let w = random(wd, 100 + i as u64);
            let b = random([1, wd[0], 1, 1], 200 + i as u64);
            let got = conv2d_raw(&x, &w, Some(&b), g).unwrap();
            assert_close(&got, &conv_reference(&x, &w, Some(&b), g), 1e-12);
        }
    }

    #[test]
    fn grouped_conv_equals_per_group_convs() {
        let x = random([1, 4, 6, 6], 7);
        let w = random([4, 2, 3, 3], 8);
        let g = ConvGeometry::new(1, 1, 2);
        let grouped = conv2d_raw(&x, &w, None, g).unwrap();
        let mut parts = Vec::new();
        for grp in 0..2 {
            let xg = x.slice_channels(grp * 2, 2).unwrap();
            let wg = Tensor::from_vec([2, 2, 3, 3], w.data()[grp * 36..(grp + 1) * 36].to_vec()).unwrap();
            parts.push(conv2d_raw(&xg, &wg, None, ConvGeometry::new(1, 1, 1)).unwrap());
        }
        let joined = concat_channels(&[&parts[0], &parts[1]]).unwrap();
        assert_close(&grouped, &joined, 1e-12);
    }

    #[test]
    fn conv_is_linear_in_input_and_weight() {
        let x = random([1, 3, 6, 5], 11).cast::<f32>();
        let w = random([4, 3, 3, 3], 12).cast::<f32>();
        let g = ConvGeometry::same(3);
        let base = conv2d_raw(&x, &w, None, g).unwrap();
        let scaled_x = conv2d_raw(&x.scale(2.5), &w, None, g).unwrap();
        let scaled_w = conv2d_raw(&x, &w.scale(-0.75), None, g).unwrap();
        for ((b, sx), sw) in base.data().iter().zip(scaled_x.data()).zip(scaled_w.data()) {
            assert!((sx - 2.5 * b).abs() < 1e-5);
            assert!((sw + 0.75 * b).abs() < 1e-5);
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_transpose(y)> for shared weights.
        let x = random([1, 3, 8, 8], 21);
        let w = random([5, 3, 4, 4], 22);
        let y = random([1, 5, 4, 4], 23);
        let cx = conv2d_raw(&x, &w, None, ConvGeometry::new(2, 1, 1)).unwrap();
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        // conv weight [5,3,k,k] viewed as transposed weight [in=5, out=3, k, k]
        let ty = conv_transpose2d(&y, &w, None, 2, 1, 0).unwrap();
        let rhs: f64 = ty.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        assert_eq!(ty.dims(), [1, 3, 8, 8]);
    }

    #[test]
    fn transposed_conv_output_size_with_output_padding() {
        let x = Tensor::<f32>::zeros([1, 2, 5, 7]).unwrap();
        let w = Tensor::zeros([2, 3, 9, 9]).unwrap();
        for s in [2usize, 4] {
            let y = conv_transpose2d(&x, &w, None, s, 4, s - 1).unwrap();
            assert_eq!(y.dims(), [1, 3, 5 * s, 7 * s]);
        }
    }

    #[test]
    fn pixel_shuffle_index_mapping() {
        let x = Tensor::<f32>::from_vec([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let back = pixel_unshuffle(&y, 2).unwrap();
        assert_eq!(back, x);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert!(pixel_shuffle(&x, 3).is_err());
        assert!(pixel_unshuffle(&Tensor::<f32>::zeros([1, 1, 3, 2]).unwrap(), 2).is_err());
    }

    #[test]
    fn activations() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, 1.0, -2.0]).unwrap();
        let g = gelu(&x);
        assert_eq!(g.data()[0], 0.0);
        assert!((g.data()[1] - 0.841_344_746_068_543).abs() < 1e-12);
        assert!((leaky_relu(&x, 0.1).data()[2] + 0.2).abs() < 1e-15);
        assert_eq!(relu(&x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn adaptive_max_pool_windows() {
        let x = Tensor::<f32>::from_vec([1, 1, 4, 1], vec![1.0, 5.0, 2.0, 3.0]).unwrap();
        assert_eq!(adaptive_max_pool(&x, 2, 1).unwrap().data(), &[5.0, 3.0]);
        assert_eq!(adaptive_max_pool(&x, 1, 1).unwrap().data(), &[5.0]);
        assert_eq!(adaptive_max_pool(&x, 4, 1).unwrap(), x);
        assert!(adaptive_max_pool(&x, 5, 1).is_err());
        // 5 -> 3 windows overlap: [0,2) [1,4) [3,5)
        let y = Tensor::<f32>::from_vec([1, 1, 1, 5], vec![9.0, 1.0, 2.0, 7.0, 3.0]).unwrap();
        assert_eq!(adaptive_max_pool(&y, 1, 3).unwrap().data(), &[9.0, 7.0, 7.0]);
    }

    #[test]
    fn nearest_upsampling() {
        let x = Tensor::<f32>::from_vec([1, 1, 1, 1], vec![3.0]).unwrap();
        assert_eq!(upsample_nearest(&x, 2, 2).unwrap().data(), &[3.0; 4]);
        let x = Tensor::<f32>::from_vec([1, 1, 2, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(upsample_nearest(&x, 4, 1).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(upsample_nearest(&x, 2, 1).unwrap(), x);
        assert!(upsample_nearest(&x, 1, 1).is_err());
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = random([2, 2, 3, 4], 1);
        let b = random([2, 3, 3, 4], 2);
        let ab = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(ab.dims(), [2, 5, 3, 4]);
        assert_eq!(ab.slice_channels(0, 2).unwrap(), a);
        assert_eq!(ab.slice_channels(2, 3).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        let bad = random([2, 1, 3, 5], 3);
        assert!(concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn repeat_then_shuffle_is_nearest_upsampling() {
        let x = random([1, 3, 4, 5], 5);
        for r in [2usize, 4] {
            let up = pixel_shuffle(&repeat_channels(&x, r * r).unwrap(), r).unwrap();
            assert_eq!(up.dims(), [1, 3, 4 * r, 5 * r]);
            assert_eq!(up, upsample_nearest(&x, 4 * r, 5 * r).unwrap());
        }
    }

    #[test]
    fn grn_with_zero_affine_is_identity() {
        let x = random([2, 4, 3, 3], 9);
        let z = Tensor::zeros([1, 4, 1, 1]).unwrap();
        assert_eq!(grn(&x, &z, &z).unwrap(), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn shuffle_unshuffle_inverse(r in prop::sample::select(vec![1usize, 2, 3, 4, 8]), c in 1usize..3, h in 1usize..3, w in 1usize..3, seed in any::<u64>()) {
            let x = random([1, c * r * r, h, w], seed);
            prop_assert_eq!(&pixel_unshuffle(&pixel_shuffle(&x, r).unwrap(), r).unwrap(), &x);
            let y = random([1, c, h * r, w * r], seed ^ 1);
            prop_assert_eq!(&pixel_shuffle(&pixel_unshuffle(&y, r).unwrap(), r).unwrap(), &y);
        }
    }
}
