//! C interface to the framecorr correlator, SSIM and metric helpers.
//!
//! Every function returns an `FcStatus`; on failure a message for the calling
//! thread is available from [`fc_last_error_message`]. Panics never cross the
//! boundary: they are caught and reported as `FC_PANIC`.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use framecorr::metrics::EvalReport;
use framecorr::{
    BoundingBox, Correlator, Error, FilteredFrame, FrameDetections, FrameMeta, GrayFrame, IscuConfig, Origin,
    ScoredBox, SsimMode, SsimParams,
};

pub type FcStatus = i32;

pub const FC_OK: FcStatus = 0;
/// A required pointer was null.
pub const FC_NULL: FcStatus = 1;
/// Arguments or configuration rejected.
pub const FC_INPUT: FcStatus = 2;
/// Frame indices not strictly increasing.
pub const FC_SEQUENCE: FcStatus = 3;
/// Output buffer shorter than needed; the required count is written back.
pub const FC_BUFFER_TOO_SMALL: FcStatus = 4;
pub const FC_PANIC: FcStatus = 5;
/// Internal consistency check failed.
pub const FC_INTERNAL: FcStatus = 6;
/// No filtered frame is waiting.
pub const FC_EMPTY: FcStatus = 7;

pub const FC_ORIGIN_DETECTOR: u32 = 0;
pub const FC_ORIGIN_INTERPOLATED: u32 = 1;

/// Corner box with a score. `origin` is one of the `FC_ORIGIN_*` values and
/// is ignored on input.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
    pub origin: u32,
}

/// Flat correlator settings. `window_size == 0` selects global SSIM.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcConfig {
    pub half_window: u32,
    pub confidence_gate: f64,
    pub fc_quorum: u32,
    pub fill_quorum: u32,
    pub fill_iou: f64,
    pub similarity_threshold: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub downsample_w: u32,
    pub downsample_h: u32,
    pub window_size: u32,
    pub window_stride: u32,
}

/// Summary of one emitted frame. Boxes are written kept first, then added.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcFrameInfo {
    pub frame_index: u64,
    pub n_kept: u32,
    pub n_added: u32,
    pub removed_count: u32,
    pub similar_neighbors: u32,
    pub used_fc: bool,
}

/// Metrics from raw counts. Percentages are NaN when undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FcReport {
    pub sen: f64,
    pub pre: f64,
    pub spe: f64,
    pub f1: f64,
    pub f2: f64,
    pub mnfp: f64,
}

/// Opaque streaming correlator.
pub struct FcCorrelator {
    inner: Correlator,
    ready: VecDeque<FilteredFrame>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Sequencing { .. } => FC_SEQUENCE,
        Error::Invariant(_) => FC_INTERNAL,
        _ => FC_INPUT,
    }
}

struct Fail(FcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FC_NULL, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FC_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FC_PANIC
        }
    }
}

impl Default for FcConfig {
    fn default() -> Self {
        to_fc(&IscuConfig::default())
    }
}

fn to_fc(c: &IscuConfig) -> FcConfig {
    let (window_size, window_stride) = match c.ssim.mode {
        SsimMode::Global => (0, 0),
        SsimMode::Windowed { window_size, stride } => (window_size, stride),
    };
    FcConfig {
        half_window: c.half_window as u32,
        confidence_gate: c.confidence_gate,
        fc_quorum: c.fc_quorum as u32,
        fill_quorum: c.fill_quorum as u32,
        fill_iou: c.fill_iou,
        similarity_threshold: c.ssim.similarity_threshold,
        k1: c.ssim.k1,
        k2: c.ssim.k2,
        dynamic_range: c.ssim.dynamic_range,
        downsample_w: c.ssim.downsample_w,
        downsample_h: c.ssim.downsample_h,
        window_size,
        window_stride,
    }
}

fn from_fc(c: &FcConfig) -> Result<IscuConfig, Fail> {
    let mode = match c.window_size {
        0 => SsimMode::Global,
        w => SsimMode::Windowed {
            window_size: w,
            stride: c.window_stride,
        },
    };
    let cfg = IscuConfig {
        half_window: c.half_window as usize,
        confidence_gate: c.confidence_gate,
        fc_quorum: c.fc_quorum as usize,
        fill_quorum: c.fill_quorum as usize,
        fill_iou: c.fill_iou,
        ssim: SsimParams {
            k1: c.k1,
            k2: c.k2,
            dynamic_range: c.dynamic_range,
            mode,
            downsample_w: c.downsample_w,
            downsample_h: c.downsample_h,
            similarity_threshold: c.similarity_threshold,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn gray(samples: *const u8, width: u32, height: u32) -> Result<GrayFrame, Fail> {
    let n = width as usize * height as usize;
    if samples.is_null() {
        return Err(null("samples"));
    }
    let s = std::slice::from_raw_parts(samples, n);
    Ok(GrayFrame::new(width, height, s.to_vec())?)
}

fn to_box(b: &FcBox) -> Result<BoundingBox, Fail> {
    Ok(BoundingBox::new(b.x_min, b.y_min, b.x_max, b.y_max)?)
}

fn from_scored(b: &ScoredBox) -> FcBox {
    FcBox {
        x_min: b.bbox.x_min(),
        y_min: b.bbox.y_min(),
        x_max: b.bbox.x_max(),
        y_max: b.bbox.y_max(),
        confidence: b.confidence(),
        origin: match b.origin {
            Origin::Detector => FC_ORIGIN_DETECTOR,
            Origin::Interpolated => FC_ORIGIN_INTERPOLATED,
        },
    }
}

/// Writes the library defaults into `out`.
#[no_mangle]
pub unsafe extern "C" fn fc_default_config(out: *mut FcConfig) -> FcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FcConfig::default();
        Ok(())
    })
}

/// Creates a correlator. `config` may be null for defaults. Release with
/// [`fc_correlator_free`].
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_new(config: *const FcConfig, out: *mut *mut FcCorrelator) -> FcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let cfg = match config.as_ref() {
            Some(c) => from_fc(c)?,
            None => IscuConfig::default(),
        };
        let c = FcCorrelator {
            inner: Correlator::new(cfg)?,
            ready: VecDeque::new(),
        };
        *out = Box::into_raw(Box::new(c));
        Ok(())
    })
}

/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_free(handle: *mut FcCorrelator) {
    if !handle.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(handle))));
    }
}

/// Pushes one grayscale frame (`width * height` bytes, row-major) with its
/// detections. Filtered frames become available through [`fc_correlator_pop`].
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_push(
    handle: *mut FcCorrelator,
    samples: *const u8,
    width: u32,
    height: u32,
    frame_index: u64,
    boxes: *const FcBox,
    n_boxes: usize,
) -> FcStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        let frame = gray(samples, width, height)?;
        let meta = FrameMeta::new(width, height, frame_index)?;
        let mut scored = Vec::with_capacity(n_boxes);
        for b in slice(boxes, n_boxes, "boxes")? {
            scored.push(ScoredBox::new(to_box(b)?, b.confidence)?);
        }
        let dets = FrameDetections::new(meta, scored);
        if let Some(f) = h.inner.push_frame(&frame, &dets)? {
            h.ready.push_back(f);
        }
        Ok(())
    })
}

/// Emits every frame still held back and readies the handle for a new
/// sequence.
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_flush(handle: *mut FcCorrelator) -> FcStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        h.ready.extend(h.inner.flush()?);
        Ok(())
    })
}

/// Frames pushed but not yet filtered, and frames filtered but not popped.
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_pending(
    handle: *const FcCorrelator,
    held: *mut usize,
    ready: *mut usize,
) -> FcStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        if let Some(p) = held.as_mut() {
            *p = h.inner.pending();
        }
        if let Some(p) = ready.as_mut() {
            *p = h.ready.len();
        }
        Ok(())
    })
}

/// Takes the oldest filtered frame. `*n_boxes` is set to the box count; when
/// it exceeds `capacity` nothing is consumed and `FC_BUFFER_TOO_SMALL` is
/// returned. Returns `FC_EMPTY` when no frame is ready.
#[no_mangle]
pub unsafe extern "C" fn fc_correlator_pop(
    handle: *mut FcCorrelator,
    info: *mut FcFrameInfo,
    boxes: *mut FcBox,
    capacity: usize,
    n_boxes: *mut usize,
) -> FcStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        let n_out = n_boxes.as_mut().ok_or_else(|| null("n_boxes"))?;
        let Some(f) = h.ready.front() else {
            *n_out = 0;
            return Err(Fail(FC_EMPTY, "no filtered frame is ready".into()));
        };
        let n = f.kept.len() + f.added.len();
        *n_out = n;
        if n > capacity {
            return Err(Fail(FC_BUFFER_TOO_SMALL, format!("{n} boxes, capacity {capacity}")));
        }
        if n > 0 && boxes.is_null() {
            return Err(null("boxes"));
        }
        for (i, b) in f.boxes().enumerate() {
            *boxes.add(i) = from_scored(b);
        }
        if let Some(info) = info.as_mut() {
            *info = FcFrameInfo {
                frame_index: f.meta.frame_index,
                n_kept: f.kept.len() as u32,
                n_added: f.added.len() as u32,
                removed_count: f.removed_count as u32,
                similar_neighbors: f.similar_neighbors as u32,
                used_fc: f.used_fc,
            };
        }
        h.ready.pop_front();
        Ok(())
    })
}

/// SSIM of two equally sized grayscale frames under `config`'s similarity
/// settings (defaults when null).
#[no_mangle]
pub unsafe extern "C" fn fc_ssim(
    a: *const u8,
    b: *const u8,
    width: u32,
    height: u32,
    config: *const FcConfig,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = match config.as_ref() {
            Some(c) => from_fc(c)?.ssim,
            None => SsimParams::default(),
        };
        let (x, y) = (gray(a, width, height)?, gray(b, width, height)?);
        *out = framecorr::ssim(&x, &y, &p)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fc_iou(a: *const FcBox, b: *const FcBox, out: *mut f64) -> FcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = to_box(a.as_ref().ok_or_else(|| null("a"))?)?;
        let b = to_box(b.as_ref().ok_or_else(|| null("b"))?)?;
        *out = framecorr::iou(&a, &b);
        Ok(())
    })
}

/// Percent metrics from raw counts.
#[no_mangle]
pub unsafe extern "C" fn fc_eval_counts(
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
    negative_frames: u64,
    frames: u64,
    out: *mut FcReport,
) -> FcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if tn > negative_frames {
            return Err(Fail(FC_INPUT, format!("tn {tn} exceeds negative frames {negative_frames}")));
        }
        let r = EvalReport::from_counts(tp, fp, fn_, tn, negative_frames, frames)?;
        let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
        *out = FcReport {
            sen: v(r.sen),
            pre: v(r.pre),
            spe: v(r.spe),
            f1: v(r.f1),
            f2: v(r.f2),
            mnfp: r.mnfp,
        };
        Ok(())
    })
}

/// Message for the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
