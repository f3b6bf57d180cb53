//! C ABI for `photoscore`.
//!
//! Every fallible function returns a [`PsStatus`]; on failure a message for
//! the calling thread is available from [`ps_last_error`]. Models are opaque
//! [`PsModel`] handles created by [`ps_model_load`] and released with
//! [`ps_model_free`]. Pointers passed in are borrowed for the duration of the
//! call only.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use photoscore::data::{RgbImage, INPUT_SIZE};
use photoscore::linalg::Matrix;
use photoscore::measures::{self, MeasureError, Selection};
use photoscore::nn::{self, NetworkModel, NnError};
use photoscore::score::NUM_CLASSES;

/// Number of score classes (scores 2 through 9).
pub const PS_NUM_CLASSES: usize = 8;
/// Required input edge length in pixels.
pub const PS_INPUT_SIZE: usize = 227;

const _: () = assert!(PS_NUM_CLASSES == NUM_CLASSES && PS_INPUT_SIZE == INPUT_SIZE);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    Panic = 6,
}

/// Outcome of FD model selection. `converged` is 1 when the F_all-best model
/// clears the threshold, in which case `index` names it; otherwise `index`
/// is -1 and `fd` is the FD of the F_all-best model.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsSelection {
    pub converged: u8,
    pub index: i64,
    pub fd: f64,
    pub by_f: u64,
    pub by_d: u64,
    pub by_fd: u64,
}

/// Opaque trained network.
pub struct PsModel {
    inner: NetworkModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

struct Failure(PsStatus, String);

impl From<NnError> for Failure {
    fn from(e: NnError) -> Self {
        let status = match e {
            NnError::Io(_) => PsStatus::Io,
            NnError::FormatVersionMismatch(_) | NnError::CorruptFile(_) => PsStatus::Format,
            NnError::NonFiniteLoss(_) => PsStatus::Numeric,
            _ => PsStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        let status = match e {
            MeasureError::LengthMismatch(..) | MeasureError::InvalidInput(_) | MeasureError::EmptyLedger => {
                PsStatus::InvalidArgument
            }
            _ => PsStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(PsStatus::InvalidArgument, msg.into())
}

fn null(name: &str) -> Failure {
    Failure(PsStatus::NullPointer, format!("{name} is null"))
}

/// Runs `f`, converting errors and panics into a status plus a thread-local
/// message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn model_arg<'a>(p: *const PsModel) -> Result<&'a NetworkModel, Failure> {
    p.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

/// Message describing the last failure on this thread, or an empty string.
/// The pointer stays valid until the next `ps_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file. On success `*out` receives a handle owned by the
/// caller.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_model_load(path: *const c_char, out: *mut *mut PsModel) -> PsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let model = nn::load_model(Path::new(path)).map_err(|e| {
            let Failure(status, msg) = e.into();
            Failure(status, format!("{path}: {msg}"))
        })?;
        *out = Box::into_raw(Box::new(PsModel { inner: model }));
        Ok(())
    })
}

/// Releases a handle from [`ps_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_model_free(model: *mut PsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Class probabilities for one `PS_INPUT_SIZE` square RGB image given as
/// `height * width * 3` bytes, row-major. Writes `PS_NUM_CLASSES` values
/// (scores 2..9 in order) to `probs`.
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes and `probs` room for
/// `PS_NUM_CLASSES` doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_model_predict(
    model: *const PsModel,
    rgb: *const u8,
    width: usize,
    height: usize,
    probs: *mut f64,
) -> PsStatus {
    guard(|| {
        let model = model_arg(model)?;
        let len = width.checked_mul(height).and_then(|n| n.checked_mul(3)).ok_or_else(|| invalid("image too large"))?;
        let pixels = slice_arg(rgb, len, "rgb")?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let image = RgbImage::from_raw(width, height, pixels.to_vec()).ok_or_else(|| invalid("bad image size"))?;
        let p = model.predict(&image)?;
        slice::from_raw_parts_mut(probs, NUM_CLASSES).copy_from_slice(&p);
        Ok(())
    })
}

/// D-measure of the model's final fully connected layer.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_model_d_measure(model: *const PsModel, out: *mut f64) -> PsStatus {
    guard(|| {
        let model = model_arg(model)?;
        let out = out_arg(out, "out")?;
        *out = measures::d_measure(&model.final_fc_weights())?.d_measure;
        Ok(())
    })
}

/// D-measure of a `rows x cols` weight matrix stored row-major, where
/// columns are output nodes.
///
/// # Safety
/// `weights` must hold `rows * cols` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_d_measure(weights: *const f64, rows: usize, cols: usize, out: *mut f64) -> PsStatus {
    guard(|| {
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("matrix too large"))?;
        let data = slice_arg(weights, len, "weights")?;
        let out = out_arg(out, "out")?;
        let w = Matrix::new(rows, cols, data.to_vec()).map_err(|e| invalid(e.to_string()))?;
        *out = measures::d_measure(&w)?.d_measure;
        Ok(())
    })
}

/// Score (2..9) at the maximum of the equal-weight blend of two
/// `PS_NUM_CLASSES`-long probability vectors.
///
/// # Safety
/// `p_f` and `p_d` must hold `len` doubles and `score` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_ensemble_predict(p_f: *const f64, p_d: *const f64, len: usize, score: *mut u8) -> PsStatus {
    guard(|| {
        let a = slice_arg(p_f, len, "p_f")?;
        let b = slice_arg(p_d, len, "p_d")?;
        let score = out_arg(score, "score")?;
        *score = measures::ensemble_predict(a, b)?.score();
        Ok(())
    })
}

/// FD selection over a family of `len` models given raw F_all and
/// D-measure values.
///
/// # Safety
/// `f_all` and `d` must hold `len` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_select_optimal(
    f_all: *const f64,
    d: *const f64,
    len: usize,
    threshold: f64,
    out: *mut PsSelection,
) -> PsStatus {
    guard(|| {
        let f = slice_arg(f_all, len, "f_all")?;
        let d = slice_arg(d, len, "d")?;
        let out = out_arg(out, "out")?;
        if !threshold.is_finite() {
            return Err(invalid("threshold must be finite"));
        }
        let scores = measures::fd_scores(f, d)?;
        *out = match measures::select_from_scores(&scores, threshold)? {
            Selection::Optimal { index, fd, by_f, by_d, by_fd } => PsSelection {
                converged: 1,
                index: index as i64,
                fd,
                by_f: by_f as u64,
                by_d: by_d as u64,
                by_fd: by_fd as u64,
            },
            Selection::NotConverged { by_f, by_d, by_fd, fd_at_by_f } => PsSelection {
                converged: 0,
                index: -1,
                fd: fd_at_by_f,
                by_f: by_f as u64,
                by_d: by_d as u64,
                by_fd: by_fd as u64,
            },
        };
        Ok(())
    })
}
