//! Training losses, as plain functions on tensors and as tape operations.

use super::WeightMap;
use crate::error::{Error, Result};
use crate::tensor::{fft, Scalar, Tape, Tensor, Var};

fn same<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::shape(format!("{:?} vs {:?}", x.dims(), y.dims())));
    }
    Ok(())
}

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Mean of `sqrt((x - y)^2 + eps^2)`.
pub fn charbonnier_loss<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, eps: f64) -> Result<f64> {
    same(x, y)?;
    let s: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = f(a) - f(b);
            (d * d + eps * eps).sqrt()
        })
        .sum();
    Ok(s / x.len() as f64)
}

/// `sum(|Re dX| + |Im dX|)` over all 2-D DFT coefficients of every plane,
/// divided by the number of coefficients. A constant offset `d` gives `d`.
pub fn fft_loss<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    same(x, y)?;
    let d = x.sub(y)?;
    let spec = fft::fft2_stack(&d);
    Ok(spec.data().iter().map(|&v| f(v).abs()).sum::<f64>() / x.len() as f64)
}

/// `sum(w * |x - y|) / sum(w)` with the row weights of `map`, over every
/// sample and channel.
pub fn ws_weighted_l1<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, map: &WeightMap) -> Result<f64> {
    same(x, y)?;
    let [n, c, h, w] = x.dims();
    if (map.height(), map.width()) != (h, w) {
        return Err(Error::shape(format!(
            "weight map {}x{} for {h}x{w} tensors",
            map.width(),
            map.height()
        )));
    }
    let mut acc = 0.0;
    for (i, (&a, &b)) in x.data().iter().zip(y.data()).enumerate() {
        acc += map.rows()[(i / w) % h] * (f(a) - f(b)).abs();
    }
    Ok(acc / (map.total() * (n * c) as f64))
}

pub fn tape_charbonnier<T: Scalar>(tape: &mut Tape<T>, x: &Var<T>, y: &Var<T>, eps: f64) -> Result<Var<T>> {
    tape.charbonnier(x, y, eps)
}

pub fn tape_fft_loss<T: Scalar>(tape: &mut Tape<T>, x: &Var<T>, y: &Var<T>) -> Result<Var<T>> {
    let d = tape.sub(x, y)?;
    let s = tape.fft2_stack(&d)?;
    let a = tape.abs(&s)?;
    let m = tape.mean(&a)?;
    // mean over 2N stacked entries -> per complex coefficient
    tape.scale(&m, 2.0)
}

pub fn tape_ws_weighted_l1<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Var<T>,
    y: &Var<T>,
    map: &WeightMap,
) -> Result<Var<T>> {
    if map.width() != x.dims()[3] {
        return Err(Error::shape("weight map width differs from the tensors"));
    }
    tape.weighted_l1(x, y, map.rows())
}
