use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::score::{q_score, ScoreParams};

/// Evenly spaced WS-PSNR and runtime axes, both ends included.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceGrid {
    pub psnr_range: (f64, f64),
    pub psnr_steps: usize,
    pub runtime_range: (f64, f64),
    pub runtime_steps: usize,
}

impl Default for SurfaceGrid {
    /// 28.8 to 31 dB against 0.001 to 0.1 s, 23 by 100 points.
    fn default() -> Self {
        SurfaceGrid {
            psnr_range: (28.8, 31.0),
            psnr_steps: 23,
            runtime_range: (0.001, 0.1),
            runtime_steps: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub ws_psnr: f64,
    pub runtime: f64,
    pub q: f64,
}

fn axis(range: (f64, f64), steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![range.0];
    }
    (0..steps)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Q over the grid, runtime varying fastest.
pub fn score_surface(params: &ScoreParams, grid: &SurfaceGrid) -> Result<Vec<SurfacePoint>> {
    if grid.psnr_steps == 0 || grid.runtime_steps == 0 {
        return Err(Error::invalid("surface grid needs at least one point per axis"));
    }
    let (p0, p1) = grid.psnr_range;
    let (r0, r1) = grid.runtime_range;
    if !(p0.is_finite() && p1.is_finite() && p1 >= p0) {
        return Err(Error::invalid(format!("bad WS-PSNR range {p0}..{p1}")));
    }
    if !(r0 >= 0.0 && r1.is_finite() && r1 >= r0) {
        return Err(Error::invalid(format!("bad runtime range {r0}..{r1}")));
    }
    params.validate()?;
    let runtimes = axis(grid.runtime_range, grid.runtime_steps);
    let mut out = Vec::with_capacity(grid.psnr_steps * grid.runtime_steps);
    for ws_psnr in axis(grid.psnr_range, grid.psnr_steps) {
        for &runtime in &runtimes {
            out.push(SurfacePoint {
                ws_psnr,
                runtime,
                q: q_score(ws_psnr, runtime, params)?,
            });
        }
    }
    Ok(out)
}

pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut s = String::from("ws_psnr,runtime_s,q\n");
    for p in points {
        let _ = writeln!(s, "{:.6},{:.6},{:.6}", p.ws_psnr, p.runtime, p.q);
    }
    s
}
