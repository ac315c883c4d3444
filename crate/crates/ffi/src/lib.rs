//! C ABI over a loaded model bundle.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`/`*_close` function. Every fallible call
//! returns an [`FfStatus`]; details of the last failure on the calling
//! thread are available from [`ff_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fitforge::data::{Gender, Sport};
use fitforge::models::{load_bundle, ModelBundle, BUNDLE_VERSION};
use fitforge::service::{recommend, RecommendationRequest, RecommendationResponse};
use fitforge::FitError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Checksum = 4,
    VersionMismatch = 5,
    NotFound = 6,
    Validation = 7,
    Internal = 8,
    Panic = 9,
}

/// A loaded, immutable model bundle.
pub struct FfBundle {
    inner: ModelBundle,
}

/// Result of one recommendation.
pub struct FfRecommendation {
    inner: RecommendationResponse,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &FitError) -> FfStatus {
    match err {
        FitError::Io(_) => FfStatus::Io,
        FitError::Checksum(_) => FfStatus::Checksum,
        FitError::VersionMismatch { .. } => FfStatus::VersionMismatch,
        FitError::NotFound { .. } => FfStatus::NotFound,
        FitError::Validation { .. } => FfStatus::Validation,
        _ => FfStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FfStatus>) -> FfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FfStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_last_error("panic inside fitforge".into());
            FfStatus::Panic
        }
    }
}

fn fail(err: FitError) -> FfStatus {
    set_last_error(err.to_string());
    status_of(&err)
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FfStatus> {
    if p.is_null() {
        set_last_error(format!("{name} is null"));
        return Err(FfStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_last_error(format!("{name} is not valid UTF-8"));
        FfStatus::InvalidUtf8
    })
}

/// Bundle format version understood by this library.
#[no_mangle]
pub extern "C" fn ff_bundle_format_version() -> u32 {
    BUNDLE_VERSION
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a bundle from `path` into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ff_bundle_open(path: *const c_char, out: *mut *mut FfBundle) -> FfStatus {
    guard(|| {
        if out.is_null() {
            set_last_error("out is null".into());
            return Err(FfStatus::NullPointer);
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let bundle = load_bundle(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(FfBundle { inner: bundle }));
        Ok(())
    })
}

/// Releases a bundle. Null is ignored.
///
/// # Safety
/// `bundle` must come from [`ff_bundle_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ff_bundle_close(bundle: *mut FfBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Steps per route profile, or 0 for a null bundle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_bundle_sequence_length(bundle: *const FfBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.sequence_length)
}

/// Embedding rank, or 0 for a null bundle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_bundle_rank(bundle: *const FfBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.rank())
}

/// Runs one recommendation. `sport` is "run", "bike" or "mountain-bike";
/// `gender` may be null to use the stored value.
///
/// # Safety
/// String arguments must be NUL-terminated, `bundle` live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ff_recommend(
    bundle: *const FfBundle,
    user_id: *const c_char,
    route_id: *const c_char,
    sport: *const c_char,
    target_calories: f64,
    gender: *const c_char,
    out: *mut *mut FfRecommendation,
) -> FfStatus {
    guard(|| {
        if out.is_null() {
            set_last_error("out is null".into());
            return Err(FfStatus::NullPointer);
        }
        *out = ptr::null_mut();
        let Some(bundle) = bundle.as_ref() else {
            set_last_error("bundle is null".into());
            return Err(FfStatus::NullPointer);
        };
        let sport: Sport = str_arg(sport, "sport")?.parse().map_err(fail)?;
        let gender = if gender.is_null() {
            None
        } else {
            Some(str_arg(gender, "gender")?.parse::<Gender>().map_err(fail)?)
        };
        let request = RecommendationRequest {
            user_id: str_arg(user_id, "user_id")?.to_string(),
            route_id: str_arg(route_id, "route_id")?.to_string(),
            sport,
            target_calories,
            gender,
        };
        let response = recommend(&bundle.inner, &request).map_err(fail)?;
        *out = Box::into_raw(Box::new(FfRecommendation { inner: response }));
        Ok(())
    })
}

/// Releases a recommendation. Null is ignored.
///
/// # Safety
/// `rec` must come from [`ff_recommend`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_free(rec: *mut FfRecommendation) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Predicted distance in km, NaN for null.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_distance_km(rec: *const FfRecommendation) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.inner.predicted_distance_km)
}

/// Mean predicted speed in km/h, NaN for null.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_avg_speed(rec: *const FfRecommendation) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.inner.avg_speed_kmh)
}

/// Mean predicted heart rate in bpm, NaN for null.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_avg_heartrate(rec: *const FfRecommendation) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.inner.avg_heartrate_bpm)
}

/// Number of steps in each predicted sequence, 0 for null.
///
/// # Safety
/// `rec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_len(rec: *const FfRecommendation) -> usize {
    rec.as_ref().map_or(0, |r| r.inner.speed_seq.len())
}

unsafe fn copy_seq(src: &[f64], buf: *mut f64, cap: usize) -> Result<(), FfStatus> {
    if buf.is_null() {
        set_last_error("buffer is null".into());
        return Err(FfStatus::NullPointer);
    }
    if cap < src.len() {
        set_last_error(format!("buffer holds {cap} values, need {}", src.len()));
        return Err(FfStatus::Validation);
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the speed sequence (km/h) into `buf`, which must hold
/// [`ff_recommendation_len`] values.
///
/// # Safety
/// `rec` must be live and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_speed(rec: *const FfRecommendation, buf: *mut f64, cap: usize) -> FfStatus {
    guard(|| {
        let r = rec.as_ref().ok_or_else(|| {
            set_last_error("recommendation is null".into());
            FfStatus::NullPointer
        })?;
        copy_seq(&r.inner.speed_seq, buf, cap)
    })
}

/// Copies the heart-rate sequence (bpm) into `buf`, which must hold
/// [`ff_recommendation_len`] values.
///
/// # Safety
/// `rec` must be live and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn ff_recommendation_heartrate(
    rec: *const FfRecommendation,
    buf: *mut f64,
    cap: usize,
) -> FfStatus {
    guard(|| {
        let r = rec.as_ref().ok_or_else(|| {
            set_last_error("recommendation is null".into());
            FfStatus::NullPointer
        })?;
        copy_seq(&r.inner.heartrate_seq, buf, cap)
    })
}
