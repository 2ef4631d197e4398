use crate::error::{Error, Result};
use crate::media::{yuv_to_rgb, FrameBuffer, Layout, VideoSequence};
use crate::metrics::{FrameMetrics, MetricPlane, MetricReport, Plane};

const PEAK: f64 = 255.0;

fn rgb_planes(f: &FrameBuffer) -> Result<[Plane; 3]> {
    let rgb;
    let f = if f.layout() == Layout::Yuv420 {
        rgb = yuv_to_rgb(f)?;
        &rgb
    } else {
        f
    };
    let d = f.data();
    let (w, h) = (f.width(), f.height());
    let plane = |c: usize| Plane::from_fn(w, h, |x, y| d[(y * w + x) * 3 + c] as f64);
    Ok([plane(0)?, plane(1)?, plane(2)?])
}

/// Stored Y for 4:2:0 and Y8 frames (no range conversion), BT.709 luma for RGB.
fn luma_plane(f: &FrameBuffer) -> Result<Plane> {
    match f.layout() {
        Layout::Yuv420 | Layout::Y8 => Plane::from_u8(f.width(), f.height(), f.y_plane()?),
        Layout::Rgb8 => {
            let d = f.data();
            let w = f.width();
            Plane::from_fn(w, f.height(), |x, y| {
                let i = (y * w + x) * 3;
                0.2126 * d[i] as f64 + 0.7152 * d[i + 1] as f64 + 0.0722 * d[i + 2] as f64
            })
        }
    }
}

fn frame_metrics(reference: &FrameBuffer, test: &FrameBuffer, plane: MetricPlane) -> Result<FrameMetrics> {
    if (reference.width(), reference.height(), reference.layout()) != (test.width(), test.height(), test.layout()) {
        return Err(Error::invalid(format!(
            "reference is {:?} {}x{}, test is {:?} {}x{}",
            reference.layout(),
            reference.width(),
            reference.height(),
            test.layout(),
            test.width(),
            test.height()
        )));
    }
    let pairs = match plane {
        MetricPlane::Y => vec![(luma_plane(reference)?, luma_plane(test)?)],
        MetricPlane::RgbMean => {
            if reference.layout() == Layout::Y8 {
                return Err(Error::invalid("rgb-mean needs colour frames"));
            }
            rgb_planes(reference)?.into_iter().zip(rgb_planes(test)?).collect()
        }
    };
    FrameMetrics::of_planes(&pairs, PEAK)
}

/// Metrics for each frame pair, spread over a bounded set of worker threads.
pub fn evaluate_frames(reference: &[FrameBuffer], test: &[FrameBuffer], plane: MetricPlane) -> Result<Vec<FrameMetrics>> {
    if reference.len() != test.len() {
        return Err(Error::invalid(format!(
            "reference has {} frames, test has {}",
            reference.len(),
            test.len()
        )));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(reference.len().max(1));
    let chunk = reference.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = reference
            .chunks(chunk)
            .zip(test.chunks(chunk))
            .map(|(r, t)| {
                s.spawn(move || {
                    r.iter()
                        .zip(t)
                        .map(|(a, b)| frame_metrics(a, b, plane))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(reference.len());
        for h in handles {
            out.extend(h.join().expect("metric worker panicked")?);
        }
        Ok(out)
    })
}

/// Per-frame and mean WS-PSNR, WS-SSIM, PSNR and SSIM of `test` against
/// `reference`, peak 255.
pub fn evaluate_pair(reference: &VideoSequence, test: &VideoSequence, plane: MetricPlane) -> Result<MetricReport> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference sequence"));
    }
    MetricReport::from_frames(plane, evaluate_frames(reference.frames(), test.frames(), plane)?)
}
