//! BT.709 limited range: Y in 16..=235, U/V in 16..=240 around 128.

use super::{FrameBuffer, Layout};
use crate::error::{Error, Result};

const KR: f64 = 0.2126;
const KB: f64 = 0.0722;
const KG: f64 = 1.0 - KR - KB;
const Y_SPAN: f64 = 219.0;
const C_SPAN: f64 = 224.0;

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Full-range luma in 0..=255 of one RGB pixel.
fn luma(r: f64, g: f64, b: f64) -> f64 {
    KR * r + KG * g + KB * b
}

pub fn yuv_to_rgb(frame: &FrameBuffer) -> Result<FrameBuffer> {
    if frame.layout() != Layout::Yuv420 {
        return Err(Error::invalid(format!(
            "yuv_to_rgb needs a 4:2:0 frame, got {:?}",
            frame.layout()
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    let (cw, ch) = (w / 2, h / 2);
    let d = frame.data();
    let (ys, rest) = d.split_at(w * h);
    let (us, vs) = rest.split_at(cw * ch);
    let mut out = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let l = (ys[y * w + x] as f64 - 16.0) * 255.0 / Y_SPAN;
            let ci = (y / 2) * cw + x / 2;
            let pb = (us[ci] as f64 - 128.0) * 255.0 / C_SPAN;
            let pr = (vs[ci] as f64 - 128.0) * 255.0 / C_SPAN;
            let r = l + 2.0 * (1.0 - KR) * pr;
            let b = l + 2.0 * (1.0 - KB) * pb;
            let g = (l - KR * r - KB * b) / KG;
            out.extend([to_byte(r), to_byte(g), to_byte(b)]);
        }
    }
    FrameBuffer::new(Layout::Rgb8, w, h, out)
}

/// 8-bit limited-range luma of an RGB frame.
pub fn rgb_to_y(frame: &FrameBuffer) -> Result<FrameBuffer> {
    if frame.layout() != Layout::Rgb8 {
        return Err(Error::invalid(format!("rgb_to_y needs an RGB frame, got {:?}", frame.layout())));
    }
    let data = frame
        .data()
        .chunks_exact(3)
        .map(|p| to_byte(16.0 + Y_SPAN / 255.0 * luma(p[0] as f64, p[1] as f64, p[2] as f64)))
        .collect();
    FrameBuffer::new(Layout::Y8, frame.width(), frame.height(), data)
}

/// Chroma is averaged over each 2x2 block before quantization.
pub fn rgb_to_yuv420(frame: &FrameBuffer) -> Result<FrameBuffer> {
    if frame.layout() != Layout::Rgb8 {
        return Err(Error::invalid(format!(
            "rgb_to_yuv420 needs an RGB frame, got {:?}",
            frame.layout()
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::invalid(format!("4:2:0 needs even dimensions, got {w}x{h}")));
    }
    let d = frame.data();
    let px = |x: usize, y: usize| {
        let i = (y * w + x) * 3;
        (d[i] as f64, d[i + 1] as f64, d[i + 2] as f64)
    };
    let mut out = rgb_to_y(frame)?.into_data();
    let (cw, ch) = (w / 2, h / 2);
    let mut us = Vec::with_capacity(cw * ch);
    let mut vs = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let (mut pb, mut pr) = (0.0, 0.0);
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let (r, g, b) = px(2 * cx + dx, 2 * cy + dy);
                let l = luma(r, g, b);
                pb += (b - l) / (2.0 * (1.0 - KB));
                pr += (r - l) / (2.0 * (1.0 - KR));
            }
            us.push(to_byte(128.0 + C_SPAN / 255.0 * pb / 4.0));
            vs.push(to_byte(128.0 + C_SPAN / 255.0 * pr / 4.0));
        }
    }
    out.extend(us);
    out.extend(vs);
    FrameBuffer::new(Layout::Yuv420, w, h, out)
}
