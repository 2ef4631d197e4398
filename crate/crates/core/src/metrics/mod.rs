//! Latitude-weighted quality metrics for equirectangular frames and the
//! training losses.

mod losses;
mod ssim;

pub use losses::{charbonnier_loss, fft_loss, tape_charbonnier, tape_fft_loss, tape_ws_weighted_l1, ws_weighted_l1};
pub use ssim::{ssim, ws_ssim, ws_ssim_with, SsimParams};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Highest finite WS-PSNR used when averaging a sequence that contains some
/// identical frames.
pub const PSNR_CAP_DB: f64 = 100.0;

/// A single image plane of `f64` samples, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape(format!(
                "plane {width}x{height} with {} samples",
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Plane::new(width, height, bytes.iter().map(|&b| b as f64).collect())
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane::new(width, height, data)
    }

    /// Channel `c` of sample `n`, multiplied by `gain`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, n: usize, c: usize, gain: f64) -> Result<Self> {
        if n >= t.n() || c >= t.c() {
            return Err(Error::shape(format!("plane ({n}, {c}) of {:?}", t.dims())));
        }
        Plane::new(
            t.w(),
            t.h(),
            t.plane(n, c)
                .iter()
                .map(|v| v.to_f64().unwrap_or(f64::NAN) * gain)
                .collect(),
        )
    }

    /// BT.709 luma `0.2126 R + 0.7152 G + 0.0722 B` of an RGB tensor sample.
    pub fn luma_from_tensor<T: Scalar>(t: &Tensor<T>, n: usize, gain: f64) -> Result<Self> {
        if t.c() != 3 || n >= t.n() {
            return Err(Error::shape(format!("luma of {:?}", t.dims())));
        }
        let (r, g, b) = (t.plane(n, 0), t.plane(n, 1), t.plane(n, 2));
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        Plane::new(
            t.w(),
            t.h(),
            (0..r.len())
                .map(|i| gain * (0.2126 * f(r[i]) + 0.7152 * f(g[i]) + 0.0722 * f(b[i])))
                .collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn flip_horizontal(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |x, y| self.at(self.width - 1 - x, y)).unwrap()
    }

    pub fn flip_vertical(&self) -> Plane {
        Plane::from_fn(self.width, self.height, |x, y| self.at(x, self.height - 1 - y)).unwrap()
    }
}

fn same_dims(a: &Plane, b: &Plane) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Equirectangular area weights, `w(i) = cos((i + 0.5 - h/2) * pi / h)` for
/// row `i`, constant along each row.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    width: usize,
    rows: Vec<f64>,
}

impl WeightMap {
    pub fn new(width: usize, height: usize) -> Self {
        WeightMap::for_rows(width, height, 0, height).expect("full frame rows are in range")
    }

    /// Weights of rows `[top, top + rows)` of a frame `frame_height` tall, for
    /// crops that keep their source latitude.
    pub fn for_rows(width: usize, frame_height: usize, top: usize, rows: usize) -> Result<Self> {
        if rows == 0 || top + rows > frame_height {
            return Err(Error::shape(format!(
                "rows {top}..{} of a {frame_height}-row frame",
                top + rows
            )));
        }
        let h = frame_height as f64;
        Ok(WeightMap {
            width,
            rows: (top..top + rows)
                .map(|i| ((i as f64 + 0.5 - h / 2.0) * std::f64::consts::PI / h).cos())
                .collect(),
        })
    }

    /// Arbitrary per-row weights (all must be positive and finite).
    pub fn from_rows(width: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("row weights must be positive and finite"));
        }
        Ok(WeightMap { width, rows })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    #[inline]
    pub fn weight(&self, row: usize, _col: usize) -> f64 {
        self.rows[row]
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().sum::<f64>() * self.width as f64
    }

    fn check(&self, p: &Plane) -> Result<()> {
        if (self.width, self.rows.len()) != (p.width, p.height) {
            return Err(Error::shape(format!(
                "weight map {}x{} for a {}x{} plane",
                self.width,
                self.rows.len(),
                p.width,
                p.height
            )));
        }
        Ok(())
    }
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// WS-PSNR in dB; identical planes give `f64::INFINITY`.
pub fn ws_psnr(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    ws_psnr_with(reference, test, peak, &WeightMap::new(reference.width, reference.height))
}

pub fn ws_psnr_with(reference: &Plane, test: &Plane, peak: f64, map: &WeightMap) -> Result<f64> {
    same_dims(reference, test)?;
    map.check(reference)?;
    let w = reference.width;
    let mut num = 0.0;
    for (row, wt) in map.rows.iter().enumerate() {
        let a = &reference.data[row * w..][..w];
        let b = &test.data[row * w..][..w];
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        num += wt * sq;
    }
    Ok(psnr_from_mse(num / map.total(), peak))
}

pub fn psnr(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    same_dims(reference, test)?;
    let sq: f64 = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(psnr_from_mse(sq / reference.data.len() as f64, peak))
}

/// Sequence mean of per-frame PSNR values: infinite only when every frame is,
/// otherwise infinite frames count as [`PSNR_CAP_DB`].
pub fn mean_psnr(per_frame: &[f64]) -> f64 {
    if per_frame.is_empty() {
        return f64::NAN;
    }
    if per_frame.iter().all(|v| v.is_infinite() && *v > 0.0) {
        return f64::INFINITY;
    }
    per_frame.iter().map(|v| v.min(PSNR_CAP_DB)).sum::<f64>() / per_frame.len() as f64
}

/// Which plane the metrics see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MetricPlane {
    /// BT.709 luma (the stored Y plane for YUV input).
    #[default]
    Y,
    /// Metric computed on R, G and B separately and averaged.
    RgbMean,
}

impl std::str::FromStr for MetricPlane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" | "Y" => Ok(MetricPlane::Y),
            "rgb-mean" => Ok(MetricPlane::RgbMean),
            other => Err(Error::invalid(format!(
                "metric plane {other:?} (expected y or rgb-mean)"
            ))),
        }
    }
}

impl std::fmt::Display for MetricPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricPlane::Y => "y",
            MetricPlane::RgbMean => "rgb-mean",
        })
    }
}

/// Metrics of one frame pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub ws_psnr: f64,
    pub ws_ssim: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl FrameMetrics {
    /// All four metrics of `planes` (pairs of reference/test), averaged over
    /// the pairs.
    pub fn of_planes(planes: &[(Plane, Plane)], peak: f64) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::invalid("no planes to compare"));
        }
        let mut acc = [0.0f64; 4];
        let k = planes.len() as f64;
        let params = SsimParams::with_range(peak);
        for (r, t) in planes {
            let map = WeightMap::new(r.width, r.height);
            acc[0] += ws_psnr_with(r, t, peak, &map)?;
            acc[1] += ws_ssim_with(r, t, &map, params)?;
            acc[2] += psnr(r, t, peak)?;
            acc[3] += ssim::ssim_with(r, t, params)?;
        }
        Ok(FrameMetrics {
            ws_psnr: acc[0] / k,
            ws_ssim: acc[1] / k,
            psnr: acc[2] / k,
            ssim: acc[3] / k,
        })
    }
}

/// Per-frame series and sequence means.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub plane: MetricPlane,
    pub frames: Vec<FrameMetrics>,
    pub ws_psnr: f64,
    pub ws_ssim: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    pub fn from_frames(plane: MetricPlane, frames: Vec<FrameMetrics>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("a report needs at least one frame"));
        }
        let n = frames.len() as f64;
        let ws: Vec<f64> = frames.iter().map(|f| f.ws_psnr).collect();
        let ps: Vec<f64> = frames.iter().map(|f| f.psnr).collect();
        Ok(MetricReport {
            plane,
            ws_psnr: mean_psnr(&ws),
            psnr: mean_psnr(&ps),
            ws_ssim: frames.iter().map(|f| f.ws_ssim).sum::<f64>() / n,
            ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
            frames,
        })
    }
}
