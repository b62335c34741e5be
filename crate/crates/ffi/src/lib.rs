//! C ABI over the scoring engine.
//!
//! Every fallible function returns a [`VqmStatus`]; on anything other than
//! `VQM_STATUS_OK` a message is stored per thread and can be read with
//! [`vqm_last_error_message`]. Output pointers are written only on success.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vqm::error::Error;
use vqm::gmm::{BicPenalty, FitConfig, Point2D, Scatterplot};
use vqm::mergemodel::{self, MergingModel};
use vqm::vqm as score;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VqmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numeric = 4,
    Parse = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque trained merging model.
pub struct VqmModel {
    inner: MergingModel,
}

/// Mixture-fitting options. `bic_penalty` is 0 for `(6K-1) ln N` and 1 for `K ln N`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqmFitOptions {
    pub k_max: u32,
    pub em_tolerance: f64,
    pub max_iterations: u32,
    pub n_restarts: u32,
    pub regularization: f64,
    pub seed: u64,
    pub bic_penalty: u32,
}

/// `m` clusters after merging `k_star` components.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VqmScore {
    pub m: u32,
    pub k_star: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VqmStatus {
    match err {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::UnknownId(_) => VqmStatus::InvalidArgument,
        Error::Domain(_) => VqmStatus::Domain,
        Error::DegenerateCovariance(_) | Error::Numeric(_) => VqmStatus::Numeric,
        Error::Parse { .. } | Error::CorruptPayload(_) | Error::VersionMismatch { .. } | Error::Csv(_) => {
            VqmStatus::Parse
        }
        Error::Io(_) => VqmStatus::Io,
    }
}

fn fail(status: VqmStatus, message: impl Into<String>) -> VqmStatus {
    set_error(message.into());
    status
}

/// Runs `body`, clearing the last error first and turning panics into `Panic`.
fn guard(body: impl FnOnce() -> VqmStatus) -> VqmStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(VqmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn core_error(err: Error) -> VqmStatus {
    let status = status_of(&err);
    fail(status, err.to_string())
}

impl From<FitConfig> for VqmFitOptions {
    fn from(c: FitConfig) -> Self {
        Self {
            k_max: c.k_max as u32,
            em_tolerance: c.em_tolerance,
            max_iterations: c.max_iterations as u32,
            n_restarts: c.n_restarts as u32,
            regularization: c.regularization,
            seed: c.seed,
            bic_penalty: match c.bic_penalty {
                BicPenalty::FreeParameterCount => 0,
                BicPenalty::ComponentCount => 1,
            },
        }
    }
}

impl TryFrom<VqmFitOptions> for FitConfig {
    type Error = Error;

    fn try_from(o: VqmFitOptions) -> Result<Self, Error> {
        let bic_penalty = match o.bic_penalty {
            0 => BicPenalty::FreeParameterCount,
            1 => BicPenalty::ComponentCount,
            other => return Err(Error::InvalidArgument(format!("unknown bic_penalty {other}"))),
        };
        let config = FitConfig {
            k_max: o.k_max as usize,
            em_tolerance: o.em_tolerance,
            max_iterations: o.max_iterations as usize,
            n_restarts: o.n_restarts as usize,
            regularization: o.regularization,
            seed: o.seed,
            bic_penalty,
        };
        config.validate()?;
        Ok(config)
    }
}

fn to_core_score(s: VqmScore) -> Result<score::VqmScore, Error> {
    score::VqmScore::new(s.m as usize, s.k_star as usize)
}

/// Message for the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next `vqm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn vqm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn vqm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vqm_fit_options_default(out: *mut VqmFitOptions) -> VqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(VqmStatus::NullPointer, "out is NULL");
        }
        // SAFETY: non-null and valid for writes per the contract.
        unsafe { out.write(FitConfig::default().into()) };
        VqmStatus::Ok
    })
}

/// Load a model from its JSON envelope. Free the result with [`vqm_model_free`].
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vqm_model_from_json(bytes: *const u8, len: usize, out: *mut *mut VqmModel) -> VqmStatus {
    guard(|| {
        if bytes.is_null() || out.is_null() {
            return fail(VqmStatus::NullPointer, "bytes or out is NULL");
        }
        // SAFETY: caller guarantees `len` readable bytes.
        let slice = unsafe { std::slice::from_raw_parts(bytes, len) };
        match mergemodel::deserialize(slice) {
            Ok(inner) => {
                // SAFETY: non-null and valid for writes.
                unsafe { out.write(Box::into_raw(Box::new(VqmModel { inner }))) };
                VqmStatus::Ok
            }
            Err(e) => core_error(e),
        }
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`vqm_model_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vqm_model_free(model: *mut VqmModel) {
    if !model.is_null() {
        // SAFETY: handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Predict one aligned 8-feature pair `(tau, mu, sxu, syu, sxv, syv, thu, thv)`.
/// `out_merge` receives 1 for merge, 0 otherwise; `out_vote_fraction` may be NULL.
///
/// # Safety
/// `model` must be a live handle, `features` must point to 8 readable doubles,
/// `out_merge` must be valid for writes and `out_vote_fraction` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn vqm_model_predict(
    model: *const VqmModel,
    features: *const f64,
    out_merge: *mut u8,
    out_vote_fraction: *mut f64,
) -> VqmStatus {
    guard(|| {
        if model.is_null() || features.is_null() || out_merge.is_null() {
            return fail(VqmStatus::NullPointer, "model, features or out_merge is NULL");
        }
        // SAFETY: 8 readable doubles per the contract.
        let raw: [f64; 8] = unsafe { ptr::read_unaligned(features.cast()) };
        let aligned = match vqm::pairspace::AlignedPairFeatures::from_array(raw) {
            Ok(a) => a,
            Err(e) => return core_error(e),
        };
        // SAFETY: live handle.
        let prediction = unsafe { &(*model).inner }.predict(&aligned);
        // SAFETY: out pointers checked above.
        unsafe {
            out_merge.write(prediction.label.as_u8());
            if !out_vote_fraction.is_null() {
                out_vote_fraction.write(prediction.vote_fraction);
            }
        }
        VqmStatus::Ok
    })
}

/// Score a scatterplot given as parallel coordinate arrays.
/// `options` may be NULL for defaults.
///
/// # Safety
/// `model` must be a live handle, `xs` and `ys` must each point to `n`
/// readable doubles, `options` NULL or readable and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vqm_score_points(
    model: *const VqmModel,
    xs: *const f64,
    ys: *const f64,
    n: usize,
    options: *const VqmFitOptions,
    out: *mut VqmScore,
) -> VqmStatus {
    guard(|| {
        if model.is_null() || xs.is_null() || ys.is_null() || out.is_null() {
            return fail(VqmStatus::NullPointer, "model, xs, ys or out is NULL");
        }
        let config = if options.is_null() {
            FitConfig::default()
        } else {
            // SAFETY: readable per the contract.
            match FitConfig::try_from(unsafe { *options }) {
                Ok(c) => c,
                Err(e) => return core_error(e),
            }
        };
        // SAFETY: n readable doubles each.
        let (xs, ys) = unsafe { (std::slice::from_raw_parts(xs, n), std::slice::from_raw_parts(ys, n)) };
        let points = xs.iter().zip(ys).map(|(&x, &y)| Point2D::new(x, y)).collect();
        let result = Scatterplot::new(points).and_then(|sp| score::score_scatterplot(&sp, &config, unsafe { &(*model).inner }));
        match result {
            Ok(s) => {
                // SAFETY: checked non-null.
                unsafe { out.write(VqmScore { m: s.m as u32, k_star: s.k_star as u32 }) };
                VqmStatus::Ok
            }
            Err(e) => core_error(e),
        }
    })
}

/// Writes -1, 0 or 1 to `out` as `a` is simpler than, tied with or more complex than `b`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vqm_compare(a: VqmScore, b: VqmScore, out: *mut i32) -> VqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(VqmStatus::NullPointer, "out is NULL");
        }
        let (a, b) = match (to_core_score(a), to_core_score(b)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return core_error(e),
        };
        let ord = match score::compare(a, b) {
            Ordering::Less => -1,
            Ordering::Equal => 0,
            Ordering::Greater => 1,
        };
        // SAFETY: checked non-null.
        unsafe { out.write(ord) };
        VqmStatus::Ok
    })
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vqm_scalar_score(s: VqmScore, out: *mut f64) -> VqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(VqmStatus::NullPointer, "out is NULL");
        }
        match to_core_score(s) {
            Ok(s) => {
                // SAFETY: checked non-null.
                unsafe { out.write(score::scalar_score(s)) };
                VqmStatus::Ok
            }
            Err(e) => core_error(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_round_trip_and_reject_unknown_penalty() {
        let opts = VqmFitOptions::from(FitConfig::default());
        assert_eq!(FitConfig::try_from(opts).unwrap(), FitConfig::default());
        let bad = VqmFitOptions { bic_penalty: 7, ..opts };
        assert!(matches!(FitConfig::try_from(bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, VqmStatus::Panic);
        let msg = unsafe { std::ffi::CStr::from_ptr(vqm_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }
}
