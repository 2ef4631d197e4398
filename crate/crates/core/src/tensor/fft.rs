//! Complex FFT of arbitrary length and the 2-D transforms built on it.
//!
//! Power-of-two lengths use an iterative radix-2 transform; every other length
//! goes through Bluestein's chirp-z reformulation, which re-expresses the DFT
//! as a circular convolution of power-of-two size.

use num_complex::Complex;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn radix2<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        let twiddles: Vec<Complex<T>> = (0..half)
            .map(|k| {
                let a = step * k as f64;
                Complex::new(T::lit(a.cos()), T::lit(a.sin()))
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn bluestein<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    let m = (2 * n - 1).next_power_of_two();
    let sign = if inverse { 1.0 } else { -1.0 };
    // chirp_k = exp(sign * i * pi * k^2 / n); k^2 reduced mod 2n keeps the angle small.
    let chirp: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
            let a = sign * std::f64::consts::PI * k2 / n as f64;
            Complex::new(T::lit(a.cos()), T::lit(a.sin()))
        })
        .collect();
    let zero = Complex::new(T::zero(), T::zero());
    let mut a = vec![zero; m];
    for k in 0..n {
        a[k] = buf[k] * chirp[k];
    }
    let mut b = vec![zero; m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2(&mut a, false);
    radix2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = *x * *y;
    }
    radix2(&mut a, true);
    let scale = T::lit(1.0 / m as f64);
    for k in 0..n {
        buf[k] = a[k] * chirp[k] * scale;
    }
}

/// Unnormalized in-place DFT (`inverse` flips the exponent sign only).
pub fn fft_in_place<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    if buf.len() <= 1 {
        return;
    }
    if buf.len().is_power_of_two() {
        radix2(buf, inverse);
    } else {
        bluestein(buf, inverse);
    }
}

fn transform2<T: Scalar>(data: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    for row in data.chunks_mut(w) {
        fft_in_place(row, inverse);
    }
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        fft_in_place(&mut col, inverse);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Unnormalized forward 2-D DFT of a real `h x w` plane.
pub fn fft2<T: Scalar>(plane: &[T], h: usize, w: usize) -> Vec<Complex<T>> {
    assert_eq!(plane.len(), h * w, "fft2: plane size");
    let mut data: Vec<Complex<T>> = plane.iter().map(|&v| Complex::new(v, T::zero())).collect();
    transform2(&mut data, h, w, false);
    data
}

/// Forward 2-D DFT of a complex plane.
pub fn fft2_complex<T: Scalar>(plane: &[Complex<T>], h: usize, w: usize) -> Vec<Complex<T>> {
    assert_eq!(plane.len(), h * w, "fft2: plane size");
    let mut data = plane.to_vec();
    transform2(&mut data, h, w, false);
    data
}

/// Inverse 2-D DFT, normalized by `1 / (h * w)` so `ifft2(fft2(x)) == x`.
pub fn ifft2<T: Scalar>(spectrum: &[Complex<T>], h: usize, w: usize) -> Vec<Complex<T>> {
    assert_eq!(spectrum.len(), h * w, "ifft2: plane size");
    let mut data = spectrum.to_vec();
    transform2(&mut data, h, w, true);
    let scale = T::lit(1.0 / (h * w) as f64);
    for v in &mut data {
        *v = *v * scale;
    }
    data
}

/// Per-plane `fft2`, real parts in channels `[0, c)` and imaginary parts in
/// `[c, 2c)`.
pub fn fft2_stack<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.dims();
    let hw = h * w;
    let mut out = vec![T::zero(); 2 * x.len()];
    for s in 0..n {
        for ch in 0..c {
            let spec = fft2(x.plane(s, ch), h, w);
            let re = &mut out[(s * 2 * c + ch) * hw..][..hw];
            for (d, v) in re.iter_mut().zip(&spec) {
                *d = v.re;
            }
            let im = &mut out[(s * 2 * c + c + ch) * hw..][..hw];
            for (d, v) in im.iter_mut().zip(&spec) {
                *d = v.im;
            }
        }
    }
    Tensor::from_parts([n, 2 * c, h, w], out)
}

fn unstack<T: Scalar>(z: &Tensor<T>, s: usize, ch: usize) -> Vec<Complex<T>> {
    let c = z.c() / 2;
    z.plane(s, ch)
        .iter()
        .zip(z.plane(s, c + ch))
        .map(|(&re, &im)| Complex::new(re, im))
        .collect()
}

pub fn fft2_stack_backward<T: Scalar>(gout: &Tensor<T>) -> Tensor<T> {
    let [n, c2, h, w] = gout.dims();
    let c = c2 / 2;
    let hw = h * w;
    let scale = T::lit(hw as f64);
    let mut gx = vec![T::zero(); n * c * hw];
    for s in 0..n {
        for ch in 0..c {
            let back = ifft2(&unstack(gout, s, ch), h, w);
            for (d, v) in gx[(s * c + ch) * hw..][..hw].iter_mut().zip(&back) {
                *d = v.re * scale;
            }
        }
    }
    Tensor::from_parts([n, c, h, w], gx)
}

/// Real part of `ifft2(re + i*im)` for a stacked `[n, 2c, h, w]` spectrum.
pub fn ifft2_real<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c2, h, w] = z.dims();
    if c2 % 2 != 0 {
        return Err(Error::shape(format!(
            "ifft2_real expects an even channel count, got {c2}"
        )));
    }
    let c = c2 / 2;
    let hw = h * w;
    let mut out = vec![T::zero(); n * c * hw];
    for s in 0..n {
        for ch in 0..c {
            let back = ifft2(&unstack(z, s, ch), h, w);
            for (d, v) in out[(s * c + ch) * hw..][..hw].iter_mut().zip(&back) {
                *d = v.re;
            }
        }
    }
    Ok(Tensor::from_parts([n, c, h, w], out))
}

pub fn ifft2_real_backward<T: Scalar>(gout: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = gout.dims();
    let hw = h * w;
    let scale = T::lit(1.0 / hw as f64);
    let mut gz = vec![T::zero(); 2 * gout.len()];
    for s in 0..n {
        for ch in 0..c {
            let spec = fft2(gout.plane(s, ch), h, w);
            for (i, v) in spec.iter().enumerate() {
                gz[(s * 2 * c + ch) * hw + i] = v.re * scale;
                gz[(s * 2 * c + c + ch) * hw + i] = v.im * scale;
            }
        }
    }
    Tensor::from_parts([n, 2 * c, h, w], gz)
}
