//! C ABI over the `clseg` library.
//!
//! Every fallible function returns a [`ClsegStatus`]; on failure the message
//! is available from [`clseg_last_error`] on the same thread until the next
//! call. Models are opaque handles created by `clseg_model_new` or
//! `clseg_model_load` and released with `clseg_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clseg::autodiff::Tensor;
use clseg::continual::{compute_bwt, lr_schedule, ResultMatrix};
use clseg::objectives::{dice_loss_value, dice_score};
use clseg::segnet::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use clseg::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClsegStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    Config = 3,
    Domain = 4,
    Contract = 5,
    State = 6,
    Training = 7,
    Usage = 8,
    Format = 9,
    Mismatch = 10,
    Io = 11,
    InvalidUtf8 = 12,
    Panic = 13,
}

impl From<ErrorKind> for ClsegStatus {
    fn from(k: ErrorKind) -> Self {
        match k {
            ErrorKind::Shape => ClsegStatus::Shape,
            ErrorKind::Config => ClsegStatus::Config,
            ErrorKind::Domain => ClsegStatus::Domain,
            ErrorKind::Contract => ClsegStatus::Contract,
            ErrorKind::State => ClsegStatus::State,
            ErrorKind::Training => ClsegStatus::Training,
            ErrorKind::Usage => ClsegStatus::Usage,
            ErrorKind::Format => ClsegStatus::Format,
            ErrorKind::Mismatch => ClsegStatus::Mismatch,
            ErrorKind::Io => ClsegStatus::Io,
        }
    }
}

/// Opaque model handle.
pub struct ClsegModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(ClsegStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.kind().into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ClsegStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ClsegStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClsegStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ClsegStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure(ClsegStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next `clseg_*` call on the same thread.
#[no_mangle]
pub extern "C" fn clseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn clseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a freshly initialized model. `residual` is 0 or 1.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_new(
    levels: usize,
    base_features: usize,
    spatial_rank: usize,
    in_channels: usize,
    residual: i32,
    patch_extent: usize,
    seed: u64,
    out: *mut *mut ClsegModel,
) -> ClsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = ModelConfig {
            levels,
            base_features,
            spatial_rank,
            in_channels,
            residual: residual != 0,
            patch_extent,
        };
        let inner = Model::build(config, seed)?;
        *out = Box::into_raw(Box::new(ClsegModel { inner }));
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_free(model: *mut ClsegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_parameter_count(
    model: *const ClsegModel,
    out: *mut usize,
) -> ClsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.parameter_count();
        Ok(())
    })
}

/// Runs inference on a `[N, C, spatial..]` batch given by `shape[0..rank]`.
/// Writes the soft mask `[N, 1, spatial..]` into `out`, which must hold
/// `out_len` values.
///
/// # Safety
/// `input` must hold the product of `shape` values; `out` must hold
/// `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_predict(
    model: *const ClsegModel,
    input: *const f64,
    shape: *const usize,
    rank: usize,
    out: *mut f64,
    out_len: usize,
) -> ClsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let shape = std::slice::from_raw_parts(shape, rank).to_vec();
        let n: usize = shape.iter().product();
        let x = Tensor::new(shape, slice(input, n, "input")?.to_vec())?;
        let y = m.inner.predict(&x)?;
        if y.len() != out_len {
            return Err(Failure(
                ClsegStatus::Shape,
                format!("output needs {} values, buffer holds {out_len}", y.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(y.data());
        Ok(())
    })
}

/// # Safety
/// `model` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_save(
    model: *const ClsegModel,
    path: *const c_char,
) -> ClsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(&m.inner, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clseg_model_load(
    path: *const c_char,
    out: *mut *mut ClsegModel,
) -> ClsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(ClsegModel { inner }));
        Ok(())
    })
}

/// Hard Dice between `pred` and `target` binarized at `threshold`.
///
/// # Safety
/// `pred` and `target` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clseg_dice_score(
    pred: *const f64,
    target: *const f64,
    len: usize,
    threshold: f64,
    out: *mut f64,
) -> ClsegStatus {
    guard(|| {
        let (p, t) = vectors(pred, target, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = dice_score(&p, &t, threshold)?;
        Ok(())
    })
}

/// Soft Dice loss `1 - (2Σpg + ε) / (Σp² + Σg² + ε)`.
///
/// # Safety
/// `pred` and `target` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn clseg_dice_loss(
    pred: *const f64,
    target: *const f64,
    len: usize,
    eps: f64,
    out: *mut f64,
) -> ClsegStatus {
    guard(|| {
        let (p, t) = vectors(pred, target, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = dice_loss_value(&p, &t, eps)?;
        Ok(())
    })
}

unsafe fn vectors(
    pred: *const f64,
    target: *const f64,
    len: usize,
) -> Result<(Tensor, Tensor), Failure> {
    let p = Tensor::new(vec![len], slice(pred, len, "pred")?.to_vec())?;
    let t = Tensor::new(vec![len], slice(target, len, "target")?.to_vec())?;
    Ok((p, t))
}

/// Backward transfer of a row-major `k`×`k` result matrix. Writes the
/// average to `average` and `k - 1` per-domain values to `per_domain`
/// (which may be NULL when `k == 1`).
///
/// # Safety
/// `r` must hold `k * k` values and `per_domain` `k - 1` values.
#[no_mangle]
pub unsafe extern "C" fn clseg_compute_bwt(
    r: *const f64,
    k: usize,
    average: *mut f64,
    per_domain: *mut f64,
) -> ClsegStatus {
    guard(|| {
        if average.is_null() {
            return Err(null("average"));
        }
        let values = slice(r, k * k, "r")?;
        let names = (0..k).map(|i| format!("d{i}")).collect();
        let rows = values.chunks(k.max(1)).map(<[f64]>::to_vec).collect();
        let bwt = compute_bwt(&ResultMatrix::from_rows(names, rows)?)?;
        *average = bwt.average;
        if !bwt.per_domain.is_empty() {
            if per_domain.is_null() {
                return Err(null("per_domain"));
            }
            std::slice::from_raw_parts_mut(per_domain, bwt.per_domain.len())
                .copy_from_slice(&bwt.per_domain);
        }
        Ok(())
    })
}

/// `base_lr · gamma^floor(epoch / step)`.
#[no_mangle]
pub extern "C" fn clseg_lr_schedule(epoch: usize, base_lr: f64, step: usize, gamma: f64) -> f64 {
    lr_schedule(epoch, base_lr, step, gamma)
}
