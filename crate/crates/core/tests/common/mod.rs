#![allow(dead_code)]

pub mod cases;

use odvsr::tensor::{Tape, Tensor, Var};
use odvsr::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative error; keeps near-zero gradients from
/// turning round-off into huge ratios.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(dims, |_| r.random_range(-1.0..1.0)).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares tape gradients of `f` against central differences for every
/// element of every input (or `sample` random elements per input) and returns
/// the maximum relative error.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], sample: Option<usize>, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    check_impl(inputs, sample, false, f)
}

/// As [`gradcheck`], for piecewise-smooth functions (networks with (P)ReLU):
/// when a step straddles a kink the central difference averages two slopes,
/// so the analytic value may instead match the left or right difference.
pub fn gradcheck_piecewise<F>(inputs: &[Tensor<f64>], sample: Option<usize>, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    check_impl(inputs, sample, true, f)
}

fn check_impl<F>(inputs: &[Tensor<f64>], sample: Option<usize>, one_sided: bool, f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var<f64>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(&loss).unwrap();

    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut t = Tape::inference();
        let vs: Vec<Var<f64>> = values.iter().map(|v| Var::constant(v.clone())).collect();
        f(&mut t, &vs).unwrap().value().data()[0]
    };

    let f0 = if one_sided { eval(inputs) } else { 0.0 };
    let mut pick = rng(0x5eed);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let g = grads.get_or_zeros(&vars[i]).unwrap();
        let indices: Vec<usize> = match sample {
            Some(k) if k < input.len() => (0..k).map(|_| pick.random_range(0..input.len())).collect(),
            _ => (0..input.len()).collect(),
        };
        for idx in indices {
            let mut plus: Vec<Tensor<f64>> = inputs.to_vec();
            let mut minus: Vec<Tensor<f64>> = inputs.to_vec();
            plus[i] = bump(&inputs[i], idx, FD_STEP);
            minus[i] = bump(&inputs[i], idx, -FD_STEP);
            let (fp, fm) = (eval(&plus), eval(&minus));
            let a = g.data()[idx];
            let mut err = rel_err(a, (fp - fm) / (2.0 * FD_STEP));
            if one_sided {
                err = err.min(rel_err(a, (fp - f0) / FD_STEP)).min(rel_err(a, (f0 - fm) / FD_STEP));
            }
            worst = worst.max(err);
        }
    }
    worst
}

fn bump(t: &Tensor<f64>, idx: usize, delta: f64) -> Tensor<f64> {
    let mut data = t.data().to_vec();
    data[idx] += delta;
    Tensor::from_vec(t.dims(), data).unwrap()
}

/// `sum(y * r)` for a fixed random `r`, turning any tensor into a scalar
/// whose gradient exercises every output element.
pub fn project(tape: &mut Tape<f64>, y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
    let r = Var::constant(random(y.dims(), seed));
    let m = tape.mul(y, &r)?;
    tape.sum(&m)
}
