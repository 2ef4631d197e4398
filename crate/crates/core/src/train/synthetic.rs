use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { cx: f64, cy: f64, r: f64 },
    Stripes { ux: f64, uy: f64, period: f64, phase: f64 },
}

impl Shape {
    fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::Stripes {
                ux,
                uy,
                period,
                phase,
            } => ((x * ux + y * uy) / period + phase).rem_euclid(1.0) < 0.5,
        }
    }
}

/// A `[1, 3, h, w]` test image in `[0, 1]`: a smooth colour gradient under
/// hard-edged rectangles, discs and stripe patches, so that both flat areas
/// and high-frequency detail are present.
pub fn synthetic_frame(h: usize, w: usize, seed: u64) -> Result<Tensor<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (h as f64, w as f64);
    let base: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.2..0.8)));
    let mut layers: Vec<(Shape, [f64; 3], f64)> = Vec::new();
    for _ in 0..12 {
        let colour = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let alpha = rng.random_range(0.5..1.0);
        let shape = match rng.random_range(0..3) {
            0 => {
                let (x0, y0) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(span(4.0, wf / 2.0)),
                    y1: y0 + rng.random_range(span(4.0, hf / 2.0)),
                }
            }
            1 => Shape::Disc {
                cx: rng.random_range(0.0..wf),
                cy: rng.random_range(0.0..hf),
                r: rng.random_range(span(3.0, hf.min(wf) / 3.0)),
            },
            _ => {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                Shape::Stripes {
                    ux: angle.cos(),
                    uy: angle.sin(),
                    period: rng.random_range(3.0..12.0),
                    phase: rng.random_range(0.0..1.0),
                }
            }
        };
        layers.push((shape, colour, alpha));
    }
    // stripes only inside a random window
    let windows: Vec<(f64, f64, f64)> = (0..layers.len())
        .map(|_| {
            (
                rng.random_range(0.0..wf),
                rng.random_range(0.0..hf),
                rng.random_range(span(8.0, hf.min(wf) / 2.0)),
            )
        })
        .collect();
    let mut rgb = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 / wf, y as f64 / hf);
            let mut px: [f64; 3] =
                std::array::from_fn(|c| base[0][c] * (1.0 - u) * (1.0 - v) + base[1][c] * u + base[2][c] * v * (1.0 - u));
            for ((shape, colour, alpha), &(wx, wy, wr)) in layers.iter().zip(&windows) {
                let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside_window = !matches!(shape, Shape::Stripes { .. })
                    || ((xf - wx).abs() < wr && (yf - wy).abs() < wr);
                if inside_window && shape.covers(xf, yf) {
                    for c in 0..3 {
                        px[c] = alpha * colour[c] + (1.0 - alpha) * px[c];
                    }
                }
            }
            rgb[y * w + x] = px;
        }
    }
    Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| rgb[y * w + x][c].clamp(0.0, 1.0) as f32)
}

/// `lo..hi`, widened to `lo..lo + 1` on frames too small for the range.
fn span(lo: f64, hi: f64) -> std::ops::Range<f64> {
    lo..hi.max(lo + 1.0)
}
