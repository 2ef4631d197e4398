use std::io::{BufRead, Read, Write};

use super::{FrameBuffer, Layout, VideoSequence};
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME: &[u8] = b"FRAME";

/// Stream parameters from a Y4M header line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps: (u32, u32),
    /// Parameters other than W, H and F, verbatim and in order.
    pub params: Vec<String>,
}

impl Y4mHeader {
    pub fn frame_len(&self) -> usize {
        Layout::Yuv420.payload_len(self.width, self.height)
    }

    fn parse(line: &[u8]) -> Result<Self> {
        if !line.starts_with(MAGIC) {
            return Err(Error::format("y4m", 0, "expected YUV4MPEG2 signature"));
        }
        let text = std::str::from_utf8(&line[MAGIC.len()..])
            .map_err(|_| Error::format("y4m", 0, "header is not ASCII"))?;
        let (mut width, mut height, mut fps) = (None, None, (30, 1));
        let mut params = Vec::new();
        let mut at = MAGIC.len();
        for token in text.split(' ') {
            let here = at;
            at += token.len() + 1;
            let Some(tag) = token.chars().next() else {
                continue;
            };
            let value = &token[1..];
            let number = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::format("y4m", here, format!("bad {tag} value {value:?}")))
            };
            match tag {
                'W' => width = Some(number()?),
                'H' => height = Some(number()?),
                'F' => fps = parse_rate(value, here)?,
                'C' => {
                    if !value.starts_with("420") || value.contains("p10") || value.contains("p12") {
                        return Err(Error::format(
                            "y4m",
                            here,
                            format!("colorspace C{value} is not supported (8-bit 4:2:0 only)"),
                        ));
                    }
                    params.push(token.to_string());
                }
                _ => params.push(token.to_string()),
            }
        }
        let width = width.ok_or_else(|| Error::format("y4m", 0, "missing W parameter"))?;
        let height = height.ok_or_else(|| Error::format("y4m", 0, "missing H parameter"))?;
        if width == 0 || height == 0 {
            return Err(Error::format("y4m", 0, "zero width or height"));
        }
        if width % 2 != 0 || height % 2 != 0 {
            return Err(Error::format(
                "y4m",
                0,
                format!("4:2:0 needs even dimensions, got {width}x{height}"),
            ));
        }
        Ok(Y4mHeader {
            width,
            height,
            fps,
            params,
        })
    }

    fn line(&self) -> String {
        let mut s = format!("YUV4MPEG2 W{} H{} F{}:{}", self.width, self.height, self.fps.0, self.fps.1);
        for p in &self.params {
            s.push(' ');
            s.push_str(p);
        }
        s.push('\n');
        s
    }
}

fn parse_rate(s: &str, at: usize) -> Result<(u32, u32)> {
    let (n, d) = s
        .split_once(':')
        .ok_or_else(|| Error::format("y4m", at, format!("frame rate {s:?} is not n:d")))?;
    match (n.parse::<u32>(), d.parse::<u32>()) {
        (Ok(n), Ok(d)) if n > 0 && d > 0 => Ok((n, d)),
        _ => Err(Error::format("y4m", at, format!("bad frame rate {s:?}"))),
    }
}

/// Frame-at-a-time Y4M reader; memory use is one frame.
pub struct Y4mReader<R> {
    inner: R,
    header: Y4mHeader,
    pos: usize,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut line = Vec::new();
        let n = inner.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            let header = Y4mHeader::parse(&line);
            return Err(header.err().unwrap_or_else(|| Error::format("y4m", n, "unterminated header line")));
        }
        line.pop();
        let header = Y4mHeader::parse(&line)?;
        Ok(Y4mReader {
            inner,
            header,
            pos: n,
            done: false,
        })
    }

    pub fn header(&self) -> &Y4mHeader {
        &self.header
    }

    fn next_frame(&mut self) -> Result<Option<FrameBuffer>> {
        let mut line = Vec::new();
        let n = self.inner.read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(None);
        }
        if !line.starts_with(FRAME) {
            return Err(Error::format("y4m", self.pos, "expected FRAME marker"));
        }
        if line.last() != Some(&b'\n') {
            return Err(Error::format("y4m", self.pos + n, "unterminated FRAME line"));
        }
        self.pos += n;
        let need = self.header.frame_len();
        let mut data = Vec::with_capacity(need);
        (&mut self.inner).take(need as u64).read_to_end(&mut data)?;
        self.pos += data.len();
        if data.len() < need {
            return Err(Error::format(
                "y4m",
                self.pos,
                format!("frame truncated: {} of {need} bytes", data.len()),
            ));
        }
        FrameBuffer::new(Layout::Yuv420, self.header.width, self.header.height, data).map(Some)
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<FrameBuffer>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_frame().transpose();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

/// Frame-at-a-time Y4M writer.
pub struct Y4mWriter<W> {
    inner: W,
    header: Y4mHeader,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut inner: W, header: Y4mHeader) -> Result<Self> {
        if header.width % 2 != 0 || header.height % 2 != 0 || header.width == 0 || header.height == 0 {
            return Err(Error::invalid(format!(
                "4:2:0 needs even positive dimensions, got {}x{}",
                header.width, header.height
            )));
        }
        inner.write_all(header.line().as_bytes())?;
        Ok(Y4mWriter { inner, header })
    }

    pub fn write_frame(&mut self, frame: &FrameBuffer) -> Result<()> {
        if frame.layout() != Layout::Yuv420 {
            return Err(Error::invalid("Y4M output needs 4:2:0 frames; convert RGB first"));
        }
        if (frame.width(), frame.height()) != (self.header.width, self.header.height) {
            return Err(Error::invalid(format!(
                "{}x{} frame in a {}x{} stream",
                frame.width(),
                frame.height(),
                self.header.width,
                self.header.height
            )));
        }
        self.inner.write_all(b"FRAME\n")?;
        self.inner.write_all(frame.data())?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// A whole 8-bit 4:2:0 Y4M stream held in memory.
pub fn read_y4m(bytes: &[u8]) -> Result<VideoSequence> {
    let reader = Y4mReader::new(bytes)?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    if frames.is_empty() {
        return Err(Error::format(
            "y4m",
            bytes.len(),
            "expected FRAME marker, stream has no frames",
        ));
    }
    let mut seq = VideoSequence::new(frames, header.fps)?;
    seq.y4m_params = header.params;
    Ok(seq)
}

/// Header `YUV4MPEG2 W.. H.. F..` plus the sequence's stored parameters, then
/// one `FRAME` chunk per frame.
pub fn write_y4m(seq: &VideoSequence) -> Result<Vec<u8>> {
    let (width, height) = seq
        .dims()
        .ok_or_else(|| Error::invalid("cannot write an empty sequence"))?;
    if seq.layout() != Some(Layout::Yuv420) {
        return Err(Error::invalid("Y4M output needs 4:2:0 frames; convert RGB first"));
    }
    let header = Y4mHeader {
        width,
        height,
        fps: seq.fps,
        params: seq.y4m_params.clone(),
    };
    let mut w = Y4mWriter::new(Vec::new(), header)?;
    for f in seq.frames() {
        w.write_frame(f)?;
    }
    Ok(w.into_inner())
}
