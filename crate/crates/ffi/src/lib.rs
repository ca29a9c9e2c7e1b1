//! C ABI over the `afdm-isac` library.
//!
//! Every fallible call returns an [`AfdmStatus`]; on failure the message is
//! kept per thread and can be fetched with [`afdm_last_error`]. Objects are
//! handed out as opaque pointers and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use afdm_isac::crlb::{crlb_for_scenario, CrlbReport, GammaModel};
use afdm_isac::error::Error;
use afdm_isac::estimators::{estimate_all_with, EstimatorConfig, Estimates, RankMode};
use afdm_isac::harness;
use afdm_isac::scene::{synthesize_tensor, Scenario};
use afdm_isac::tensor::Tensor3;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfdmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotFound = 3,
    Parse = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Parameter selector for `afdm_crlb_get`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfdmParam {
    Theta = 0,
    Range = 1,
    Delay = 2,
    Doppler = 3,
    Phi = 4,
    Gamma = 5,
}

/// One estimated target.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AfdmTarget {
    /// Angle of arrival, rad.
    pub theta: f64,
    /// Angle of departure, rad.
    pub phi: f64,
    /// Delay, s.
    pub tau: f64,
    /// Doppler shift, Hz.
    pub f_d: f64,
    /// Delay in samples.
    pub beta: f64,
    /// Doppler in subcarrier spacings.
    pub nu: f64,
}

pub struct AfdmScenario(Scenario);
pub struct AfdmTensor(Tensor3);
pub struct AfdmEstimates(Estimates);
pub struct AfdmCrlb(CrlbReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AfdmStatus {
    match e {
        Error::NotFound(_) => AfdmStatus::NotFound,
        Error::Parse { .. } | Error::BadTensorFile(_) | Error::Json(_) | Error::Csv(_) => AfdmStatus::Parse,
        Error::Io(_) => AfdmStatus::Io,
        Error::RankDeficient | Error::Degenerate(_) => AfdmStatus::Numerical,
        _ => AfdmStatus::InvalidArgument,
    }
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (AfdmStatus, String)>) -> AfdmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AfdmStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            AfdmStatus::Panic
        }
    }
}

fn lib<T>(r: afdm_isac::error::Result<T>) -> Result<T, (AfdmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (AfdmStatus, String) {
    (AfdmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (AfdmStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, v: T) {
    *out = Box::into_raw(Box::new(v));
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, (AfdmStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| (AfdmStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn afdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn afdm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Built-in full-scale scene (N=256, G=101, K=8, three targets).
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn afdm_scenario_reference(out: *mut *mut AfdmScenario) -> AfdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, AfdmScenario(Scenario::reference()));
        Ok(())
    })
}

/// Built-in small scene (N=64, G=33, K=8, three targets).
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn afdm_scenario_desk(out: *mut *mut AfdmScenario) -> AfdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, AfdmScenario(Scenario::desk()));
        Ok(())
    })
}

/// Loads and validates a scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_scenario_load(path: *const c_char, out: *mut *mut AfdmScenario) -> AfdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sc = lib(Scenario::load(path_arg(path)?))?;
        lib(sc.validate())?;
        put(out, AfdmScenario(sc));
        Ok(())
    })
}

/// Number of truth targets in the scene, 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn afdm_scenario_num_targets(sc: *const AfdmScenario) -> usize {
    sc.as_ref().map_or(0, |s| s.0.scene.targets.len())
}

/// # Safety
/// `sc` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afdm_scenario_free(sc: *mut AfdmScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Synthesizes the received tensor of the scene's frame. A non-finite
/// `snr_db` gives the noise-free tensor.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_simulate(sc: *const AfdmScenario, snr_db: f64, seed: u64, out: *mut *mut AfdmTensor) -> AfdmStatus {
    guard(|| {
        let sc = &get(sc, "scenario")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        lib(sc.validate())?;
        let frame = lib(sc.frame())?;
        let syn = lib(synthesize_tensor(&sc.scene, &frame, &sc.afdm, snr_db.is_finite().then_some(snr_db), seed))?;
        put(out, AfdmTensor(syn.noisy.unwrap_or(syn.clean)));
        Ok(())
    })
}

/// Reads a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_tensor_read(path: *const c_char, out: *mut *mut AfdmTensor) -> AfdmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = lib(harness::read_tensor(path_arg(path)?))?;
        put(out, AfdmTensor(t));
        Ok(())
    })
}

/// Writes a tensor file.
///
/// # Safety
/// `t` must be a live tensor handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn afdm_tensor_write(t: *const AfdmTensor, path: *const c_char) -> AfdmStatus {
    guard(|| {
        let t = &get(t, "tensor")?.0;
        lib(harness::write_tensor(t, path_arg(path)?))
    })
}

/// Dimensions `(G, N, K)` of the tensor.
///
/// # Safety
/// `t` must be a live tensor handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn afdm_tensor_dims(t: *const AfdmTensor, g: *mut usize, n: *mut usize, k: *mut usize) -> AfdmStatus {
    guard(|| {
        let (a, b, c) = get(t, "tensor")?.0.dims();
        if g.is_null() || n.is_null() || k.is_null() {
            return Err(null("output"));
        }
        (*g, *n, *k) = (a, b, c);
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afdm_tensor_free(t: *mut AfdmTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs the estimator on `t` with the scene's geometry and frame. `rank` 0
/// selects the target count by MDL; `t_outer` 0 uses the default.
///
/// # Safety
/// `sc` and `t` must be live handles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_estimate(
    sc: *const AfdmScenario,
    t: *const AfdmTensor,
    rank: usize,
    t_outer: usize,
    out: *mut *mut AfdmEstimates,
) -> AfdmStatus {
    guard(|| {
        let sc = &get(sc, "scenario")?.0;
        let t = &get(t, "tensor")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut opts = EstimatorConfig::default();
        if t_outer > 0 {
            opts.t_outer = t_outer;
        }
        let mode = if rank == 0 { RankMode::Mdl } else { RankMode::Fixed(rank) };
        let frame = lib(sc.frame())?;
        let est = lib(estimate_all_with(t, &frame, &sc.afdm, &sc.scene, mode, &opts))?;
        put(out, AfdmEstimates(est));
        Ok(())
    })
}

/// Number of estimated targets, 0 for a null handle.
///
/// # Safety
/// `est` must be null or a live estimates handle.
#[no_mangle]
pub unsafe extern "C" fn afdm_estimates_count(est: *const AfdmEstimates) -> usize {
    est.as_ref().map_or(0, |e| e.0.targets.len())
}

/// Copies estimate `index` into `out`.
///
/// # Safety
/// `est` must be a live estimates handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_estimates_get(est: *const AfdmEstimates, index: usize, out: *mut AfdmTarget) -> AfdmStatus {
    guard(|| {
        let est = &get(est, "estimates")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = est
            .targets
            .get(index)
            .ok_or_else(|| (AfdmStatus::OutOfRange, format!("index {index} of {}", est.targets.len())))?;
        *out = AfdmTarget {
            theta: e.theta,
            phi: e.phi,
            tau: e.tau,
            f_d: e.f_d,
            beta: e.beta,
            nu: e.nu,
        };
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afdm_estimates_free(est: *mut AfdmEstimates) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Cramer-Rao bounds of the scene at `snr_db`. With `split_gamma` nonzero
/// the reflection coefficient counts as two real parameters.
///
/// # Safety
/// `sc` must be a live scenario handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_crlb(sc: *const AfdmScenario, snr_db: f64, split_gamma: i32, out: *mut *mut AfdmCrlb) -> AfdmStatus {
    guard(|| {
        let sc = &get(sc, "scenario")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if !snr_db.is_finite() {
            return Err((AfdmStatus::InvalidArgument, "SNR must be finite".into()));
        }
        lib(sc.validate())?;
        let model = if split_gamma != 0 { GammaModel::RealImagSplit } else { GammaModel::Printed };
        let rep = lib(crlb_for_scenario(sc, &lib(sc.frame())?, snr_db, model))?;
        put(out, AfdmCrlb(rep));
        Ok(())
    })
}

/// Copies the per-target bounds of `param` into `buf` and stores the target
/// count in `count`. Fails with `OUT_OF_RANGE` when `len` is too small
/// (`count` is still set). Range bounds of far-field targets are NaN.
///
/// # Safety
/// `c` must be a live CRLB handle; `buf` null or `len` writable doubles;
/// `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn afdm_crlb_get(c: *const AfdmCrlb, param: AfdmParam, buf: *mut f64, len: usize, count: *mut usize) -> AfdmStatus {
    guard(|| {
        let rep = &get(c, "crlb")?.0;
        if count.is_null() {
            return Err(null("count"));
        }
        let vals = rep.bounds()[param as usize].1;
        *count = vals.len();
        if buf.is_null() || len < vals.len() {
            return Err((AfdmStatus::OutOfRange, format!("buffer holds {len}, need {}", vals.len())));
        }
        ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        Ok(())
    })
}

/// Set when the Fisher information was singular and pseudo-inverted.
///
/// # Safety
/// `c` must be null or a live CRLB handle.
#[no_mangle]
pub unsafe extern "C" fn afdm_crlb_is_singular(c: *const AfdmCrlb) -> bool {
    c.as_ref().is_some_and(|r| r.0.singular)
}

/// # Safety
/// `c` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afdm_crlb_free(c: *mut AfdmCrlb) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
