//! Separable bicubic and Lanczos resampling.
//!
//! Pixel centers sit at half-integer positions, out-of-range taps clamp to the
//! border, and each output pixel's weights are normalized to sum to one, so a
//! constant image stays constant. When shrinking, the kernel is stretched by
//! the reduction factor to low-pass before decimation.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Filter {
    /// Keys cubic with `a = -0.5` over a 4x4 neighbourhood.
    Bicubic,
    /// Windowed sinc with `a = 4` lobes.
    Lanczos,
}

impl Filter {
    fn radius(self) -> f64 {
        match self {
            Filter::Bicubic => 2.0,
            Filter::Lanczos => LANCZOS_A,
        }
    }

    fn eval(self, t: f64) -> f64 {
        match self {
            Filter::Bicubic => cubic(t, -0.5),
            Filter::Lanczos => lanczos(t, LANCZOS_A),
        }
    }
}

const LANCZOS_A: f64 = 4.0;

fn cubic(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn lanczos(t: f64, a: f64) -> f64 {
    if t.abs() >= a {
        0.0
    } else {
        sinc(t) * sinc(t / a)
    }
}

struct Taps {
    /// First source index (may be negative before clamping).
    start: isize,
    weights: Vec<f64>,
}

fn taps(filter: Filter, input: usize, output: usize) -> Vec<Taps> {
    let ratio = input as f64 / output as f64;
    let stretch = ratio.max(1.0);
    let support = filter.radius() * stretch;
    (0..output)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let start = (center - support).ceil() as isize;
            let end = (center + support).floor() as isize;
            let mut weights: Vec<f64> = (start..=end)
                .map(|i| filter.eval((i as f64 - center) / stretch))
                .collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            Taps { start, weights }
        })
        .collect()
}

fn clamp(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Resize every plane of `x` to `oh x ow`.
pub fn resize<T: Scalar>(x: &Tensor<T>, oh: usize, ow: usize, filter: Filter) -> Result<Tensor<T>> {
    if oh == 0 || ow == 0 {
        return Err(Error::shape("resize target must be at least 1x1"));
    }
    let [n, c, h, w] = x.dims();
    let tx = taps(filter, w, ow);
    let ty = taps(filter, h, oh);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut rows = vec![0.0f64; h * ow];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..][..h * w];
        for y in 0..h {
            let line = &src[y * w..][..w];
            for (ox, t) in tx.iter().enumerate() {
                let mut acc = 0.0;
                for (k, &wt) in t.weights.iter().enumerate() {
                    let v = line[clamp(t.start + k as isize, w)];
                    acc += wt * v.to_f64().unwrap_or(0.0);
                }
                rows[y * ow + ox] = acc;
            }
        }
        for t in &ty {
            for ox in 0..ow {
                let mut acc = 0.0;
                for (k, &wt) in t.weights.iter().enumerate() {
                    acc += wt * rows[clamp(t.start + k as isize, h) * ow + ox];
                }
                out.push(T::lit(acc));
            }
        }
    }
    Tensor::from_vec([n, c, oh, ow], out)
}

pub fn bicubic_upscale<T: Scalar>(x: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    resize(x, x.h() * scale, x.w() * scale, Filter::Bicubic)
}

pub fn lanczos_upscale<T: Scalar>(x: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    resize(x, x.h() * scale, x.w() * scale, Filter::Lanczos)
}

/// Antialiased bicubic reduction by an integer factor.
pub fn bicubic_downscale<T: Scalar>(x: &Tensor<T>, scale: usize) -> Result<Tensor<T>> {
    if scale == 0 || x.h() % scale != 0 || x.w() % scale != 0 {
        return Err(Error::shape(format!(
            "{}x{} is not divisible by {scale}",
            x.h(),
            x.w()
        )));
    }
    resize(x, x.h() / scale, x.w() / scale, Filter::Bicubic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_interpolate() {
        for f in [Filter::Bicubic, Filter::Lanczos] {
            assert!((f.eval(0.0) - 1.0).abs() < 1e-15);
            for k in 1..4 {
                assert!(f.eval(k as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full([1, 2, 5, 7], 0.37).unwrap();
        for f in [Filter::Bicubic, Filter::Lanczos] {
            for (oh, ow) in [(10, 14), (20, 28), (2, 3)] {
                let y = resize(&x, oh, ow, f).unwrap();
                assert!(y.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::<f64>::from_fn([1, 1, 4, 6], |[_, _, y, x]| (y * 6 + x) as f64).unwrap();
        let y = resize(&x, 4, 6, Filter::Bicubic).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upscale_dims() {
        let x = Tensor::<f32>::ones([1, 3, 2, 2]).unwrap();
        assert_eq!(bicubic_upscale(&x, 2).unwrap().dims(), [1, 3, 4, 4]);
        assert_eq!(lanczos_upscale(&x, 4).unwrap().dims(), [1, 3, 8, 8]);
    }

    #[test]
    fn linear_ramp_is_reproduced_away_from_borders() {
        let x = Tensor::<f64>::from_fn([1, 1, 1, 16], |[_, _, _, x]| x as f64).unwrap();
        let y = resize(&x, 1, 32, Filter::Bicubic).unwrap();
        for ox in 6..26 {
            let expect = (ox as f64 + 0.5) / 2.0 - 0.5;
            assert!((y.data()[ox] - expect).abs() < 1e-12);
        }
    }
}
