//! C ABI over the `etlpv` pipelines.
//!
//! Configurations and reports cross the boundary as opaque handles. Every
//! fallible call returns an [`EtlpvStatus`]; the message of the last failure
//! on the calling thread is available from [`etlpv_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use etlpv::cli::{self, RunConfig, RunOptions, RunReport};
use etlpv::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtlpvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Dimension = 4,
    RankDeficient = 5,
    Numerical = 6,
    Io = 7,
    Panic = 8,
}

/// Parsed run configuration.
pub struct EtlpvConfig(RunConfig);

/// Outcome of a pipeline run.
pub struct EtlpvReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EtlpvStatus {
    match e {
        Error::Config(_) => EtlpvStatus::Config,
        Error::Dimension(_) => EtlpvStatus::Dimension,
        Error::RankDeficient { .. } => EtlpvStatus::RankDeficient,
        Error::Singular(_) | Error::Precondition(_) => EtlpvStatus::Numerical,
        Error::Io(_) => EtlpvStatus::Io,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (EtlpvStatus, String)>) -> EtlpvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EtlpvStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside etlpv".into());
            EtlpvStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (EtlpvStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (EtlpvStatus, String)> {
    if p.is_null() {
        return Err((EtlpvStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (EtlpvStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), (EtlpvStatus, String)> {
    if p.is_null() {
        Err((EtlpvStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, 0 if none.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn etlpv_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Minimum experiment length for `n` states, `m` inputs and `l` scheduling
/// parameters.
#[no_mangle]
pub extern "C" fn etlpv_min_data_length(n: usize, m: usize, l: usize) -> usize {
    etlpv::data::min_data_length(n, m, l)
}

/// Parse a JSON configuration document.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn etlpv_config_parse(text: *const c_char, out: *mut *mut EtlpvConfig) -> EtlpvStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(text, "text")?;
        let cfg = cli::parse_config(text, "<config>").map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EtlpvConfig(cfg)));
        Ok(())
    })
}

/// Load a bundled example configuration (`1`, `2a`, `2b`, `3a`, `3b`).
///
/// # Safety
/// `id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn etlpv_config_bundled(id: *const c_char, out: *mut *mut EtlpvConfig) -> EtlpvStatus {
    guard(|| {
        non_null(out, "out")?;
        let id = read_str(id, "id")?;
        let cfg = cli::bundled_config(id).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EtlpvConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_config_set_seed(cfg: *mut EtlpvConfig, seed: u64) -> EtlpvStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).0.simulation.seed = seed;
        Ok(())
    })
}

/// The configuration as a JSON string; free with [`etlpv_string_free`].
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_config_to_json(cfg: *const EtlpvConfig) -> *mut c_char {
    if cfg.is_null() {
        set_error("cfg is null".into());
        return ptr::null_mut();
    }
    CString::new(cli::emit_config(&(*cfg).0)).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etlpv_config_free(cfg: *mut EtlpvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn run_options(out_dir: *const c_char) -> Result<RunOptions, (EtlpvStatus, String)> {
    let dir = if out_dir.is_null() { None } else { Some(PathBuf::from(read_str(out_dir, "out_dir")?)) };
    Ok(RunOptions { out_dir: dir, ..Default::default() })
}

/// Run the tracking pipeline when the configuration has a tracking block,
/// the stabilization pipeline otherwise. `out_dir` may be null to skip
/// writing files. A failed stage or check still yields a report.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` null or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn etlpv_run(
    cfg: *const EtlpvConfig,
    out_dir: *const c_char,
    out: *mut *mut EtlpvReport,
) -> EtlpvStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let opts = run_options(out_dir)?;
        let cfg = &(*cfg).0;
        let rep =
            if cfg.tracking.is_some() { cli::cmd_track(cfg, &opts) } else { cli::cmd_synthesize(cfg, &opts) }.map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EtlpvReport(rep)));
        Ok(())
    })
}

/// Run a bundled example with its acceptance checks.
///
/// # Safety
/// `id` must be NUL-terminated, `out_dir` null or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn etlpv_reproduce(
    id: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut EtlpvReport,
) -> EtlpvStatus {
    guard(|| {
        non_null(out, "out")?;
        let id = read_str(id, "id")?;
        let rep = cli::cmd_reproduce(id, &run_options(out_dir)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EtlpvReport(rep)));
        Ok(())
    })
}

/// True when no stage and no check failed.
///
/// # Safety
/// `rep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_report_passed(rep: *const EtlpvReport) -> bool {
    !rep.is_null() && (*rep).0.passed()
}

/// Number of failed checks.
///
/// # Safety
/// `rep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_report_failed_checks(rep: *const EtlpvReport) -> usize {
    if rep.is_null() {
        return 0;
    }
    (*rep).0.failed_checks().len()
}

/// Event transmissions of the simulated loop, or -1 when no simulation ran.
///
/// # Safety
/// `rep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_report_transmissions(rep: *const EtlpvReport) -> i64 {
    if rep.is_null() {
        return -1;
    }
    (*rep).0.events.as_ref().map_or(-1, |e| e.transmissions as i64)
}

/// The full report as JSON; free with [`etlpv_string_free`].
///
/// # Safety
/// `rep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn etlpv_report_to_json(rep: *const EtlpvReport) -> *mut c_char {
    if rep.is_null() {
        set_error("rep is null".into());
        return ptr::null_mut();
    }
    CString::new((*rep).0.to_json()).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `rep` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etlpv_report_free(rep: *mut EtlpvReport) {
    if !rep.is_null() {
        drop(Box::from_raw(rep));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn etlpv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { etlpv_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(n > 0);
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_arguments_are_reported() {
        let mut cfg = ptr::null_mut();
        assert_eq!(unsafe { etlpv_config_parse(ptr::null(), &mut cfg) }, EtlpvStatus::NullPointer);
        assert!(last_error().contains("text"));
        assert!(cfg.is_null());
    }

    #[test]
    fn config_errors_map_to_config_status() {
        let mut cfg = ptr::null_mut();
        let text = CString::new("{ \"name\": 3 }").unwrap();
        assert_eq!(unsafe { etlpv_config_parse(text.as_ptr(), &mut cfg) }, EtlpvStatus::Config);
        assert!(last_error().starts_with("invalid configuration"));
    }

    #[test]
    fn truncated_error_copy_is_terminated() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        assert_eq!(unsafe { etlpv_last_error(buf.as_mut_ptr(), 4) }, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_bytes(), b"abc");
    }

    #[test]
    fn data_length() {
        assert_eq!(etlpv_min_data_length(2, 1, 2), 23);
    }
}
