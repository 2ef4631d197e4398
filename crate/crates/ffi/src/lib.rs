//! C ABI for the odvsr toolkit.
//!
//! Every fallible call returns an [`OdvsrStatus`]; results come back through
//! out-pointers. On failure a message is kept per thread and can be read with
//! [`odvsr_last_error`]. Panics never cross the boundary: they are caught and
//! reported as `ODVSR_STATUS_PANIC`.
//!
//! Models are opaque [`OdvsrModel`] handles owned by the caller and released
//! with [`odvsr_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::time::Duration;

use odvsr::bench::{measure_runtime, upscale_frame, Interpolator, ModelUpscaler, SleepStub, Upscaler};
use odvsr::bdrate::{bd_quality, bd_rate, RdCurve, RdPoint};
use odvsr::media::{FrameBuffer, Layout};
use odvsr::metrics::{ws_psnr, ws_ssim, Plane};
use odvsr::models::{build, checkpoint, Filter, Network};
use odvsr::score::{q_score, runtime_score, ScoreParams};
use odvsr::{Error, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdvsrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Checkpoint = 5,
    Io = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

impl From<&Error> for OdvsrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => OdvsrStatus::Shape,
            Error::InvalidArgument(_) | Error::Config(_) => OdvsrStatus::InvalidArgument,
            Error::Format { .. } | Error::Csv(_) => OdvsrStatus::Format,
            Error::Checkpoint(_) => OdvsrStatus::Checkpoint,
            Error::Io(_) => OdvsrStatus::Io,
            _ => OdvsrStatus::Internal,
        }
    }
}

/// Opaque upscaler: a network or an interpolation baseline.
pub struct OdvsrModel {
    inner: Box<dyn Upscaler + Send>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    let msg = CString::new(bytes).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(OdvsrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(OdvsrStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(OdvsrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(OdvsrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records its error message and converts panics to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OdvsrStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OdvsrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            OdvsrStatus::Panic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn plane_len(width: usize, height: usize) -> Result<usize, Fail> {
    width
        .checked_mul(height)
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("bad plane size {width}x{height}")))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next odvsr call on the same thread.
#[no_mangle]
pub extern "C" fn odvsr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn odvsr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a freshly initialized network (`ffcir`, `cspsr`, `vacv`, `athena`,
/// `fsrcnn`) or an interpolator (`bicubic`, `lanczos`).
///
/// # Safety
/// `arch` must be a NUL-terminated string; `model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_new(
    arch: *const c_char,
    scale: u32,
    seed: u64,
    model: *mut *mut OdvsrModel,
) -> OdvsrStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let name = c_str(arch, "arch")?;
        let scale = scale as usize;
        let inner: Box<dyn Upscaler + Send> = match name.to_ascii_lowercase().as_str() {
            "bicubic" | "lanczos" => {
                if !matches!(scale, 2 | 4) {
                    return Err(invalid(format!("unsupported scale {scale}")));
                }
                let filter = if name.eq_ignore_ascii_case("bicubic") {
                    Filter::Bicubic
                } else {
                    Filter::Lanczos
                };
                Box::new(Interpolator { filter, scale })
            }
            _ => Box::new(ModelUpscaler::new(Network::new(build(name, scale)?, seed)?)),
        };
        *slot = Box::into_raw(Box::new(OdvsrModel { inner }));
        Ok(())
    })
}

/// Loads a network checkpoint from `len` bytes at `data`.
///
/// # Safety
/// `data` must point to `len` readable bytes; `model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_load(
    data: *const u8,
    len: usize,
    model: *mut *mut OdvsrModel,
) -> OdvsrStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let bytes = input(data, len, "data")?;
        let net = checkpoint::load(bytes)?;
        *slot = Box::into_raw(Box::new(OdvsrModel {
            inner: Box::new(ModelUpscaler::new(net)),
        }));
        Ok(())
    })
}

/// Loads a network checkpoint from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_load_file(path: *const c_char, model: *mut *mut OdvsrModel) -> OdvsrStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let bytes = std::fs::read(c_str(path, "path")?).map_err(Error::from)?;
        let net = checkpoint::load(&bytes)?;
        *slot = Box::into_raw(Box::new(OdvsrModel {
            inner: Box::new(ModelUpscaler::new(net)),
        }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from one of the constructors and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_free(model: *mut OdvsrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Upscaling factor of the handle, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_scale(model: *const OdvsrModel) -> u32 {
    model.as_ref().map_or(0, |m| m.inner.scale() as u32)
}

/// Upscales an interleaved RGB8 frame. `dst` must hold
/// `3 * scale * width * scale * height` bytes.
///
/// # Safety
/// `src` must point to `3 * width * height` readable bytes and `dst` to
/// `dst_len` writable bytes that do not overlap `src`.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_upscale_rgb8(
    model: *const OdvsrModel,
    src: *const u8,
    width: u32,
    height: u32,
    dst: *mut u8,
    dst_len: usize,
) -> OdvsrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let (w, h) = (width as usize, height as usize);
        let n = 3 * plane_len(w, h)?;
        let s = m.inner.scale();
        let need = n * s * s;
        if dst.is_null() {
            return Err(null("dst"));
        }
        if dst_len < need {
            return Err(Fail(
                OdvsrStatus::BufferTooSmall,
                format!("dst holds {dst_len} bytes, {need} needed"),
            ));
        }
        let frame = FrameBuffer::new(Layout::Rgb8, w, h, input(src, n, "src")?.to_vec())?;
        let up = upscale_frame(m.inner.as_ref(), &frame)?;
        slice::from_raw_parts_mut(dst, need).copy_from_slice(up.data());
        Ok(())
    })
}

/// Median seconds per forward pass on a mid-grey `width x height` input.
///
/// # Safety
/// `model` must be a live handle; `median_s` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_measure_runtime(
    model: *const OdvsrModel,
    width: u32,
    height: u32,
    warmup: u32,
    repetitions: u32,
    median_s: *mut f64,
) -> OdvsrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let slot = out(median_s, "median_s")?;
        plane_len(width as usize, height as usize)?;
        let frame = Tensor::full([1, 3, height as usize, width as usize], 0.5f32)?;
        let stats = measure_runtime(m.inner.as_ref(), &frame, warmup as usize, repetitions as usize)?;
        *slot = stats.median;
        Ok(())
    })
}

unsafe fn planes(
    reference: *const u8,
    test: *const u8,
    width: u32,
    height: u32,
) -> Result<(Plane, Plane), Fail> {
    let (w, h) = (width as usize, height as usize);
    let n = plane_len(w, h)?;
    Ok((
        Plane::from_u8(w, h, input(reference, n, "reference")?)?,
        Plane::from_u8(w, h, input(test, n, "test")?)?,
    ))
}

/// WS-PSNR in dB between two 8-bit equirectangular planes (peak 255).
/// Identical planes give +infinity.
///
/// # Safety
/// Both planes must point to `width * height` readable bytes; `out_db` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_ws_psnr_u8(
    reference: *const u8,
    test: *const u8,
    width: u32,
    height: u32,
    out_db: *mut f64,
) -> OdvsrStatus {
    guard(|| {
        let slot = out(out_db, "out_db")?;
        let (r, t) = planes(reference, test, width, height)?;
        *slot = ws_psnr(&r, &t, 255.0)?;
        Ok(())
    })
}

/// Latitude-weighted SSIM between two 8-bit equirectangular planes.
///
/// # Safety
/// As for [`odvsr_ws_psnr_u8`].
#[no_mangle]
pub unsafe extern "C" fn odvsr_ws_ssim_u8(
    reference: *const u8,
    test: *const u8,
    width: u32,
    height: u32,
    out_ssim: *mut f64,
) -> OdvsrStatus {
    guard(|| {
        let slot = out(out_ssim, "out_ssim")?;
        let (r, t) = planes(reference, test, width, height)?;
        *slot = ws_ssim(&r, &t)?;
        Ok(())
    })
}

/// Challenge score Q in `[0, 100]` with the published constants of the
/// given track (2 or 4).
///
/// # Safety
/// `out_q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_q_score(ws_psnr_db: f64, runtime_s: f64, track: u32, out_q: *mut f64) -> OdvsrStatus {
    guard(|| {
        let slot = out(out_q, "out_q")?;
        let params = ScoreParams::for_scale(track as usize)?;
        *slot = q_score(ws_psnr_db, runtime_s, &params)?;
        Ok(())
    })
}

/// Runtime factor of the given track: 1 up to the threshold,
/// `exp(B * (threshold - runtime))` beyond it.
///
/// # Safety
/// `out_factor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_runtime_score(runtime_s: f64, track: u32, out_factor: *mut f64) -> OdvsrStatus {
    guard(|| {
        let slot = out(out_factor, "out_factor")?;
        let params = ScoreParams::for_scale(track as usize)?;
        *slot = runtime_score(runtime_s, &params)?;
        Ok(())
    })
}

unsafe fn curve(rates: *const f64, quality: *const f64, n: usize, what: &str) -> Result<RdCurve, Fail> {
    let r = input(rates, n, what)?;
    let q = input(quality, n, what)?;
    let points: Vec<RdPoint> = r.iter().zip(q).map(|(&r, &q)| RdPoint::new(r, q)).collect();
    Ok(RdCurve::new(&points)?)
}

/// Bjøntegaard delta bitrate (percent) and delta quality (dB) of `test`
/// against `anchor`, four rate points each. Either output may be NULL.
///
/// # Safety
/// Each array must hold `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn odvsr_bd_rate(
    anchor_rates: *const f64,
    anchor_quality: *const f64,
    test_rates: *const f64,
    test_quality: *const f64,
    n: usize,
    out_bd_rate_pct: *mut f64,
    out_bd_quality_db: *mut f64,
) -> OdvsrStatus {
    guard(|| {
        let anchor = curve(anchor_rates, anchor_quality, n, "anchor")?;
        let test = curve(test_rates, test_quality, n, "test")?;
        if let Some(slot) = out_bd_rate_pct.as_mut() {
            *slot = bd_rate(&anchor, &test)?;
        }
        if let Some(slot) = out_bd_quality_db.as_mut() {
            *slot = bd_quality(&anchor, &test)?;
        }
        Ok(())
    })
}

/// Creates a handle that sleeps `delay_ms` per frame and returns black.
///
/// # Safety
/// `model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn odvsr_model_new_sleep_stub(scale: u32, delay_ms: u32, model: *mut *mut OdvsrModel) -> OdvsrStatus {
    guard(|| {
        let slot = out(model, "model")?;
        if scale == 0 {
            return Err(invalid("scale must be positive"));
        }
        let inner = Box::new(SleepStub {
            scale: scale as usize,
            delay: Duration::from_millis(delay_ms as u64),
        });
        *slot = Box::into_raw(Box::new(OdvsrModel { inner }));
        Ok(())
    })
}
