//! C ABI over the synperf prediction pipeline.
//!
//! The surface follows one set of conventions throughout:
//!
//! - Objects cross the boundary as opaque handles (`SynperfHwSpec`,
//!   `SynperfTiling`, `SynperfEstimator`). Constructors return a
//!   [`SynperfStatus`] and write the handle through an out-pointer; every
//!   handle is released with its matching `*_free`, and `free(NULL)` is a
//!   no-op.
//! - Strings returned through out-pointers are NUL-terminated UTF-8 owned by
//!   the caller, released with [`synperf_string_free`]. String arguments are
//!   borrowed for the duration of the call only.
//! - On failure the call leaves all out-pointers untouched and stores a
//!   message retrievable with [`synperf_last_error`].
//!
//! The generated header lands in `include/synperf.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::path::Path;

use synperf::datagen::default_precision;
use synperf::decompose::{KernelCategory, KernelParams};
use synperf::error::Error;
use synperf::estimator::{build_features, Estimator};
use synperf::features::FeatureVector;
use synperf::hwspec::{HardwareSpec, Precision};
use synperf::tiling::TilingTable;

/// Result code of every fallible call. Anything but `Ok` leaves a
/// thread-local message behind [`synperf_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynperfStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The operating system refused a file operation.
    IoError = 3,
    /// A file or JSON argument did not have the expected shape.
    ParseError = 4,
    /// Inputs were well-formed but semantically invalid.
    ValidationError = 5,
    /// The combination of kernel, precision, and hardware is not modeled.
    Unsupported = 6,
    /// A failure inside the library itself.
    InternalError = 7,
}

/// A loaded hardware description (opaque).
pub struct SynperfHwSpec {
    inner: HardwareSpec,
}

/// A kernel tile-geometry table (opaque).
pub struct SynperfTiling {
    inner: TilingTable,
}

/// A trained per-category efficiency model (opaque).
pub struct SynperfEstimator {
    inner: Estimator,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Display) {
    let text = msg.to_string();
    // NULs cannot survive a C string; replace rather than lose the message.
    let sanitized = text.replace('\0', "?");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SynperfStatus {
    match err {
        Error::Io { .. } => SynperfStatus::IoError,
        Error::Parse { .. } => SynperfStatus::ParseError,
        Error::Validation(_) => SynperfStatus::ValidationError,
        Error::Unsupported(_) => SynperfStatus::Unsupported,
        Error::Training(_) | Error::Internal(_) => SynperfStatus::InternalError,
    }
}

fn fail(err: Error) -> SynperfStatus {
    let status = status_of(&err);
    set_last_error(err);
    status
}

fn fail_with(status: SynperfStatus, msg: impl Display) -> SynperfStatus {
    set_last_error(msg);
    status
}

/// Borrow a required C-string argument as UTF-8.
///
/// # Safety
/// `ptr` must be NULL or point to a NUL-terminated string valid for the call.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, SynperfStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            SynperfStatus::NullArgument,
            format!("{name} must not be NULL"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail_with(
            SynperfStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

fn out_string(out: *mut *mut c_char, text: String) -> SynperfStatus {
    match CString::new(text) {
        Ok(s) => {
            // SAFETY: the caller guaranteed `out` is writable (checked non-NULL
            // before any work was done).
            unsafe { *out = s.into_raw() };
            SynperfStatus::Ok
        }
        Err(_) => fail_with(
            SynperfStatus::InternalError,
            "output contained an interior NUL byte",
        ),
    }
}

/// Parse the optional precision argument, falling back to the category default.
///
/// # Safety
/// `ptr` must be NULL or a valid NUL-terminated string.
unsafe fn precision_arg(
    ptr: *const c_char,
    category: KernelCategory,
) -> Result<Precision, SynperfStatus> {
    if ptr.is_null() {
        return Ok(default_precision(category));
    }
    let text = utf8_arg(ptr, "precision")?;
    text.parse::<Precision>().map_err(fail)
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn synperf_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the most recent failure on the calling thread, or an empty
/// string when nothing failed yet. The pointer stays valid until the next
/// failing synperf call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn synperf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string previously returned through an out-pointer.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from a synperf out-string, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn synperf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a hardware spec from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// writable pointer. On success `*out` owns the spec until
/// [`synperf_hwspec_free`].
#[no_mangle]
pub unsafe extern "C" fn synperf_hwspec_load(
    path: *const c_char,
    out: *mut *mut SynperfHwSpec,
) -> SynperfStatus {
    if out.is_null() {
        return fail_with(SynperfStatus::NullArgument, "out must not be NULL");
    }
    let path = match utf8_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match HardwareSpec::from_path(Path::new(path)) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(SynperfHwSpec { inner: spec }));
            SynperfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Name of a loaded hardware spec, as a new string owned by the caller.
///
/// # Safety
/// `spec` must be a live handle from [`synperf_hwspec_load`]; `out` must be a
/// valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn synperf_hwspec_name(
    spec: *const SynperfHwSpec,
    out: *mut *mut c_char,
) -> SynperfStatus {
    if spec.is_null() || out.is_null() {
        return fail_with(SynperfStatus::NullArgument, "spec and out must not be NULL");
    }
    out_string(out, (*spec).inner.name.clone())
}

/// Release a hardware spec handle. NULL is a no-op.
///
/// # Safety
/// `spec` must be NULL or a live handle from [`synperf_hwspec_load`], not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn synperf_hwspec_free(spec: *mut SynperfHwSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Load a tiling table from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// writable pointer. On success `*out` owns the table until
/// [`synperf_tiling_free`].
#[no_mangle]
pub unsafe extern "C" fn synperf_tiling_load(
    path: *const c_char,
    out: *mut *mut SynperfTiling,
) -> SynperfStatus {
    if out.is_null() {
        return fail_with(SynperfStatus::NullArgument, "out must not be NULL");
    }
    let path = match utf8_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match TilingTable::from_path(Path::new(path)) {
        Ok(t) => {
            *out = Box::into_raw(Box::new(SynperfTiling { inner: t }));
            SynperfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// The compiled-in default tiling table.
///
/// # Safety
/// `out` must be a valid writable pointer. On success `*out` owns the table
/// until [`synperf_tiling_free`].
#[no_mangle]
pub unsafe extern "C" fn synperf_tiling_builtin(out: *mut *mut SynperfTiling) -> SynperfStatus {
    if out.is_null() {
        return fail_with(SynperfStatus::NullArgument, "out must not be NULL");
    }
    *out = Box::into_raw(Box::new(SynperfTiling {
        inner: TilingTable::builtin(),
    }));
    SynperfStatus::Ok
}

/// Release a tiling table handle. NULL is a no-op.
///
/// # Safety
/// `tiling` must be NULL or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn synperf_tiling_free(tiling: *mut SynperfTiling) {
    if !tiling.is_null() {
        drop(Box::from_raw(tiling));
    }
}

/// Load a trained estimator from a JSON model file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// writable pointer. On success `*out` owns the estimator until
/// [`synperf_estimator_free`].
#[no_mangle]
pub unsafe extern "C" fn synperf_estimator_load(
    path: *const c_char,
    out: *mut *mut SynperfEstimator,
) -> SynperfStatus {
    if out.is_null() {
        return fail_with(SynperfStatus::NullArgument, "out must not be NULL");
    }
    let path = match utf8_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Estimator::load(Path::new(path)) {
        Ok(est) => {
            *out = Box::into_raw(Box::new(SynperfEstimator { inner: est }));
            SynperfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release an estimator handle. NULL is a no-op.
///
/// # Safety
/// `est` must be NULL or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn synperf_estimator_free(est: *mut SynperfEstimator) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Analyze one kernel invocation and return its feature vector as JSON:
/// `{"category", "hardware", "precision", "names", "values",
/// "theoretical_time_us", "imbalance_ratio"}` — the same shape the CLI's
/// `features --json` prints.
///
/// `category` is a kernel token such as `"gemm"`; `params_json` holds the
/// category's shape parameters as a JSON object; `precision` may be NULL for
/// the category default.
///
/// # Safety
/// Handles must be live; string arguments NUL-terminated; `out_json` a valid
/// writable pointer. On success `*out_json` is owned by the caller.
#[no_mangle]
pub unsafe extern "C" fn synperf_features_json(
    spec: *const SynperfHwSpec,
    tiling: *const SynperfTiling,
    category: *const c_char,
    precision: *const c_char,
    params_json: *const c_char,
    out_json: *mut *mut c_char,
) -> SynperfStatus {
    if spec.is_null() || tiling.is_null() || out_json.is_null() {
        return fail_with(
            SynperfStatus::NullArgument,
            "spec, tiling, and out_json must not be NULL",
        );
    }
    let category = match utf8_arg(category, "category") {
        Ok(c) => c,
        Err(status) => return status,
    };
    let category = match category.parse::<KernelCategory>() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let precision = match precision_arg(precision, category) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let params = match parse_params(params_json, category) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let analysis = match build_features(&params, precision, &(*spec).inner, &(*tiling).inner) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let payload = serde_json::json!({
        "category": category.as_str(),
        "hardware": (*spec).inner.name,
        "precision": precision.to_string(),
        "names": FeatureVector::names(category),
        "values": analysis.features.flatten(),
        "theoretical_time_us": analysis.features.theoretical_time_us,
        "imbalance_ratio": analysis.imbalance_ratio,
    });
    out_string(out_json, payload.to_string())
}

/// Predict one kernel's latency with a trained estimator.
///
/// The kernel category comes from the estimator. Writes the predicted latency
/// in microseconds and, when `out_efficiency` is non-NULL, the predicted
/// efficiency in (0, 1).
///
/// # Safety
/// Handles must be live; string arguments NUL-terminated; `out_latency_us`
/// a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn synperf_predict_kernel(
    est: *const SynperfEstimator,
    spec: *const SynperfHwSpec,
    tiling: *const SynperfTiling,
    precision: *const c_char,
    params_json: *const c_char,
    out_latency_us: *mut f64,
    out_efficiency: *mut f64,
) -> SynperfStatus {
    if est.is_null() || spec.is_null() || tiling.is_null() || out_latency_us.is_null() {
        return fail_with(
            SynperfStatus::NullArgument,
            "est, spec, tiling, and out_latency_us must not be NULL",
        );
    }
    let category = (*est).inner.category;
    let precision = match precision_arg(precision, category) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let params = match parse_params(params_json, category) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let analysis = match build_features(&params, precision, &(*spec).inner, &(*tiling).inner) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    match (*est).inner.predict_latency(&analysis.features) {
        Ok(prediction) => {
            *out_latency_us = prediction.latency_us;
            if !out_efficiency.is_null() {
                *out_efficiency = prediction.efficiency;
            }
            SynperfStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `params_json` must be NULL (rejected) or a valid NUL-terminated string.
unsafe fn parse_params(
    params_json: *const c_char,
    category: KernelCategory,
) -> Result<KernelParams, SynperfStatus> {
    let text = utf8_arg(params_json, "params_json")?;
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| {
            fail_with(
                SynperfStatus::ParseError,
                format!("params_json is not a JSON object: {e}"),
            )
        })?;
    KernelParams::from_json_map(category, &map).map_err(fail)
}
