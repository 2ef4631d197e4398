use std::path::Path;

use super::{FrameBuffer, Layout, VideoSequence};
use crate::error::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("ppm", start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are ASCII")
            .parse()
            .map_err(|_| Error::format("ppm", start, format!("{what} out of range")))
    }
}

/// Binary P6 (RGB) or P5 (grey) with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<FrameBuffer> {
    let layout = match bytes.get(..2) {
        Some(b"P6") => Layout::Rgb8,
        Some(b"P5") => Layout::Y8,
        _ => return Err(Error::format("ppm", 0, "expected magic P6 or P5")),
    };
    let mut c = Cursor { bytes, pos: 2 };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            "ppm",
            maxval_at,
            format!("maxval {maxval} is not supported (only 255)"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("ppm", 2, "zero width or height"));
    }
    match bytes.get(c.pos) {
        Some(b) if b.is_ascii_whitespace() => c.pos += 1,
        _ => return Err(Error::format("ppm", c.pos, "expected whitespace after maxval")),
    }
    let need = layout.payload_len(width, height);
    let have = bytes.len() - c.pos;
    if have < need {
        return Err(Error::format(
            "ppm",
            bytes.len(),
            format!("truncated payload: {have} of {need} bytes"),
        ));
    }
    FrameBuffer::new(layout, width, height, bytes[c.pos..c.pos + need].to_vec())
}

pub fn write_ppm(frame: &FrameBuffer) -> Result<Vec<u8>> {
    let magic = match frame.layout() {
        Layout::Rgb8 => "P6",
        Layout::Y8 => "P5",
        Layout::Yuv420 => return Err(Error::invalid("PPM holds RGB or grey frames, not 4:2:0")),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    Ok(out)
}

fn frame_number(name: &str) -> Option<u64> {
    let stem = name.strip_suffix(".ppm").or_else(|| name.strip_suffix(".pgm"))?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// All `*<number>.ppm` / `*.pgm` files of `dir`, in numeric order, as a
/// 30 fps sequence.
pub fn read_ppm_dir(dir: &Path) -> Result<VideoSequence> {
    let mut numbered = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(n) = frame_number(&name) {
            numbered.push((n, entry.path()));
        }
    }
    if numbered.is_empty() {
        return Err(Error::invalid(format!("{}: no numbered PPM frames", dir.display())));
    }
    numbered.sort();
    let mut frames = Vec::with_capacity(numbered.len());
    for (_, path) in numbered {
        let bytes = std::fs::read(&path)?;
        frames.push(read_ppm(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?);
    }
    VideoSequence::new(frames, (30, 1))
}

/// Writes `frame_00000.ppm`, `frame_00001.ppm`, ... into `dir`, creating it
/// if needed.
pub fn write_ppm_dir(seq: &VideoSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in seq.frames().iter().enumerate() {
        let ext = if f.layout() == Layout::Y8 { "pgm" } else { "ppm" };
        std::fs::write(dir.join(format!("frame_{i:05}.{ext}")), write_ppm(f)?)?;
    }
    Ok(())
}
