//! Benchmark runner: upscalers, sequence processing, runtime measurement,
//! metric evaluation, leaderboards and the score surface.

mod config;
mod evaluate;
mod leaderboard;
mod runtime;
mod surface;

pub use config::{host_label, BenchConfig, BenchReport, RdFiles, ScoreOverrides, SequenceResult};
pub use evaluate::{evaluate_frames, evaluate_pair};
pub use leaderboard::{emit_leaderboard, parse_leaderboard_csv, LeaderboardEntry, LeaderboardFormat};
pub use runtime::{measure_runtime, RuntimeStats};
pub use surface::{score_surface, surface_csv, SurfaceGrid, SurfacePoint};

use std::time::Duration;

use crate::error::{Error, Result};
use crate::media::{rgb_to_yuv420, FrameBuffer, Layout, VideoSequence};
use crate::models::{resize, Filter, Network};
use crate::tensor::Tensor;

/// Anything that maps a `[1, 3, h, w]` frame in `[0, 1]` to
/// `[1, 3, scale * h, scale * w]`.
pub trait Upscaler {
    fn name(&self) -> &str;
    fn scale(&self) -> usize;
    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>>;
}

pub struct ModelUpscaler {
    net: Network<f32>,
}

impl ModelUpscaler {
    pub fn new(net: Network<f32>) -> Self {
        ModelUpscaler { net }
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }
}

impl Upscaler for ModelUpscaler {
    fn name(&self) -> &str {
        &self.net.spec().name
    }

    fn scale(&self) -> usize {
        self.net.scale()
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.net.forward(lr)
    }
}

/// Bicubic or Lanczos interpolation baseline.
pub struct Interpolator {
    pub filter: Filter,
    pub scale: usize,
}

impl Upscaler for Interpolator {
    fn name(&self) -> &str {
        match self.filter {
            Filter::Bicubic => "Bicubic",
            Filter::Lanczos => "Lanczos",
        }
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        let [_, _, h, w] = lr.dims();
        resize(lr, self.scale * h, self.scale * w, self.filter)
    }
}

/// Sleeps for a fixed time and returns a black frame of the right size.
/// Used to check that the harness measures exactly the forward pass.
pub struct SleepStub {
    pub scale: usize,
    pub delay: Duration,
}

impl Upscaler for SleepStub {
    fn name(&self) -> &str {
        "sleep-stub"
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, lr: &Tensor<f32>) -> Result<Tensor<f32>> {
        std::thread::sleep(self.delay);
        let [n, c, h, w] = lr.dims();
        Tensor::zeros([n, c, self.scale * h, self.scale * w])
    }
}

/// Upscales one frame. RGB in gives RGB out; 4:2:0 in gives 4:2:0 out.
pub fn upscale_frame(model: &dyn Upscaler, frame: &FrameBuffer) -> Result<FrameBuffer> {
    if frame.layout() == Layout::Y8 {
        return Err(Error::invalid("models need colour input; got a luma-only frame"));
    }
    let x = frame.to_tensor()?;
    let y = model.upscale(&x)?;
    let [_, c, h, w] = y.dims();
    let s = model.scale();
    if c != 3 || h != s * frame.height() || w != s * frame.width() {
        return Err(Error::shape(format!(
            "{} returned {:?} for a {}x{} frame at x{s}",
            model.name(),
            y.dims(),
            frame.width(),
            frame.height()
        )));
    }
    let rgb = FrameBuffer::from_tensor(&y, 0)?;
    match frame.layout() {
        Layout::Yuv420 => rgb_to_yuv420(&rgb),
        _ => Ok(rgb),
    }
}

/// Frame-by-frame upscaling of a stream; only the current frame is held.
pub fn run_stream<I, F>(model: &dyn Upscaler, frames: I, mut sink: F) -> Result<usize>
where
    I: IntoIterator<Item = Result<FrameBuffer>>,
    F: FnMut(FrameBuffer) -> Result<()>,
{
    let mut count = 0;
    for frame in frames {
        sink(upscale_frame(model, &frame?)?)?;
        count += 1;
    }
    Ok(count)
}

/// Single-frame restoration of every frame of `lr`.
pub fn run_sequence(model: &dyn Upscaler, lr: &VideoSequence) -> Result<VideoSequence> {
    let mut out = Vec::with_capacity(lr.len());
    run_stream(model, lr.frames().iter().cloned().map(Ok), |f| {
        out.push(f);
        Ok(())
    })?;
    let mut seq = VideoSequence::new(out, lr.fps)?;
    seq.y4m_params = lr.y4m_params.clone();
    Ok(seq)
}
