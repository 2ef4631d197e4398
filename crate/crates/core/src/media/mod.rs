//! Frame buffers, PPM and Y4M readers/writers, and BT.709 colour conversion.

mod color;
mod ppm;
mod y4m;

pub use color::{rgb_to_y, rgb_to_yuv420, yuv_to_rgb};
pub use ppm::{read_ppm, read_ppm_dir, write_ppm, write_ppm_dir};
pub use y4m::{read_y4m, write_y4m, Y4mHeader, Y4mReader, Y4mWriter};

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    /// Interleaved R, G, B bytes.
    Rgb8,
    /// Planar Y, then U and V at half resolution in both directions.
    Yuv420,
    /// Luma only.
    Y8,
}

impl Layout {
    pub fn payload_len(self, width: usize, height: usize) -> usize {
        match self {
            Layout::Rgb8 => 3 * width * height,
            Layout::Y8 => width * height,
            Layout::Yuv420 => width * height + 2 * (width / 2) * (height / 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameBuffer {
    layout: Layout,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl FrameBuffer {
    pub fn new(layout: Layout, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if layout == Layout::Yuv420 && (width % 2 != 0 || height % 2 != 0) {
            return Err(Error::invalid(format!(
                "4:2:0 frames need even dimensions, got {width}x{height}"
            )));
        }
        let expected = layout.payload_len(width, height);
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "{layout:?} {width}x{height} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(FrameBuffer {
            layout,
            width,
            height,
            data,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// The stored luma plane of a Y8 or 4:2:0 frame.
    pub fn y_plane(&self) -> Result<&[u8]> {
        match self.layout {
            Layout::Y8 | Layout::Yuv420 => Ok(&self.data[..self.width * self.height]),
            Layout::Rgb8 => Err(Error::invalid("RGB frames have no stored luma plane")),
        }
    }

    /// `[1, 3, h, w]` (RGB8) or `[1, 1, h, w]` (Y8) with values in `[0, 1]`.
    /// 4:2:0 frames are converted to RGB first.
    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        let (w, h) = (self.width, self.height);
        match self.layout {
            Layout::Rgb8 => Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| self.data[(y * w + x) * 3 + c] as f32 / 255.0),
            Layout::Y8 => Tensor::from_fn([1, 1, h, w], |[_, _, y, x]| self.data[y * w + x] as f32 / 255.0),
            Layout::Yuv420 => yuv_to_rgb(self)?.to_tensor(),
        }
    }

    /// Sample `n` of a 3- or 1-channel tensor in `[0, 1]`, rounded and
    /// clamped to bytes.
    pub fn from_tensor(t: &Tensor<f32>, n: usize) -> Result<Self> {
        let [batch, c, h, w] = t.dims();
        if n >= batch {
            return Err(Error::shape(format!("sample {n} of a batch of {batch}")));
        }
        let q = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        match c {
            3 => {
                let mut data = Vec::with_capacity(3 * w * h);
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..3 {
                            data.push(q(t.at([n, ch, y, x])));
                        }
                    }
                }
                FrameBuffer::new(Layout::Rgb8, w, h, data)
            }
            1 => FrameBuffer::new(Layout::Y8, w, h, t.plane(n, 0).iter().map(|&v| q(v)).collect()),
            _ => Err(Error::shape(format!("{c}-channel tensors do not map to a frame"))),
        }
    }
}

/// Ordered frames sharing dimensions and layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoSequence {
    frames: Vec<FrameBuffer>,
    /// Frame rate as numerator and denominator.
    pub fps: (u32, u32),
    /// Y4M header parameters other than W, H and F, kept verbatim for writing.
    pub y4m_params: Vec<String>,
}

impl VideoSequence {
    pub fn new(frames: Vec<FrameBuffer>, fps: (u32, u32)) -> Result<Self> {
        if fps.0 == 0 || fps.1 == 0 {
            return Err(Error::invalid("frame rate terms must be positive"));
        }
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate() {
                if (f.width, f.height, f.layout) != (first.width, first.height, first.layout) {
                    return Err(Error::invalid(format!(
                        "frame {i} is {:?} {}x{}, sequence is {:?} {}x{}",
                        f.layout, f.width, f.height, first.layout, first.width, first.height
                    )));
                }
            }
        }
        Ok(VideoSequence {
            frames,
            fps,
            y4m_params: Vec::new(),
        })
    }

    pub fn frames(&self) -> &[FrameBuffer] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the frames, if any.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height))
    }

    pub fn layout(&self) -> Option<Layout> {
        self.frames.first().map(|f| f.layout)
    }

    pub fn push(&mut self, frame: FrameBuffer) -> Result<()> {
        if let Some(first) = self.frames.first() {
            if (frame.width, frame.height, frame.layout) != (first.width, first.height, first.layout) {
                return Err(Error::invalid("frame does not match the sequence dimensions or layout"));
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn fps_f64(&self) -> f64 {
        self.fps.0 as f64 / self.fps.1 as f64
    }
}

/// A `.y4m` file or a directory of numbered PPM frames.
pub fn load_sequence(path: &Path) -> Result<VideoSequence> {
    if path.is_dir() {
        read_ppm_dir(path)
    } else {
        let bytes = std::fs::read(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("y4m") => read_y4m(&bytes),
            Some("ppm" | "pgm") => VideoSequence::new(vec![read_ppm(&bytes)?], (30, 1)),
            _ => Err(Error::invalid(format!(
                "{}: expected a .y4m file, a .ppm file or a directory of PPM frames",
                path.display()
            ))),
        }
    }
}

/// Writes `seq` as Y4M when `path` ends in `.y4m`, otherwise as numbered PPM
/// frames in the directory `path`.
pub fn save_sequence(seq: &VideoSequence, path: &Path) -> Result<()> {
    if path.extension().and_then(|e| e.to_str()) == Some("y4m") {
        std::fs::write(path, write_y4m(seq)?)?;
        Ok(())
    } else {
        write_ppm_dir(seq, path)
    }
}
