use std::time::Instant;

use super::Upscaler;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Timed forward passes of one model on one frame size.
#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeStats {
    /// Seconds per pass, in measurement order.
    pub samples: Vec<f64>,
    pub median: f64,
    /// Standard deviation over mean; 0 when the mean is 0.
    pub cv: f64,
    /// Output frame size `(width, height)` the samples refer to.
    pub output_dims: (usize, usize),
}

impl RuntimeStats {
    pub fn from_samples(samples: Vec<f64>, output_dims: (usize, usize)) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no runtime samples"));
        }
        if let Some(bad) = samples.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("runtime sample {bad} is not a finite non-negative time")));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        let mean = samples.iter().sum::<f64>() / k as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / k as f64;
        let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
        Ok(RuntimeStats {
            samples,
            median,
            cv,
            output_dims,
        })
    }
}

/// `warmup` untimed passes, then `reps` passes timed on the monotonic clock.
/// Only the `upscale` call is inside the timed region.
pub fn measure_runtime(model: &dyn Upscaler, frame: &Tensor<f32>, warmup: usize, reps: usize) -> Result<RuntimeStats> {
    if reps < 3 {
        return Err(Error::invalid(format!("need at least 3 timed repetitions, got {reps}")));
    }
    let mut dims = (0, 0);
    for _ in 0..warmup {
        std::hint::black_box(model.upscale(frame)?);
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let y = std::hint::black_box(model.upscale(frame)?);
        samples.push(start.elapsed().as_secs_f64());
        dims = (y.w(), y.h());
    }
    RuntimeStats::from_samples(samples, dims)
}
