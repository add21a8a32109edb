//! C interface to the simulator.
//!
//! Scenarios and run traces are opaque handles created and released by this
//! library. Every fallible call returns an [`NftStatus`]; the message of the
//! most recent failure on the calling thread is available from
//! [`nft_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nftrack::cli::ScenarioFile;
use nftrack::harness::{run_tracking, summarize, PolicyKind, RunTrace};
use nftrack::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Runtime = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed scenario document.
pub struct NftScenario {
    file: ScenarioFile,
}

/// Per-symbol record of one run.
pub struct NftTrace {
    trace: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: NftStatus, msg: impl Into<String>) -> NftStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> NftStatus {
    let status = match &e {
        Error::Config(_) => NftStatus::Config,
        Error::Domain(_) => NftStatus::Domain,
        Error::Runtime(_) => NftStatus::Runtime,
        Error::Io(_) | Error::Csv(_) => NftStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`NftStatus::Panic`].
fn guard(f: impl FnOnce() -> NftStatus) -> NftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == NftStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NftStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, NftStatus> {
    if s.is_null() {
        return Err(fail(NftStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(NftStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn nft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario TOML document; an empty string gives the defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nft_scenario_from_toml(toml: *const c_char, out: *mut *mut NftScenario) -> NftStatus {
    guard(|| {
        if out.is_null() {
            return fail(NftStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = try_ffi!(text(toml, "toml"));
        match ScenarioFile::from_toml(text).and_then(|f| f.validate().map(|_| f)) {
            Ok(file) => {
                *out = Box::into_raw(Box::new(NftScenario { file }));
                NftStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Switches to the reduced desk-scale setup: 64 elements, 1 s runs.
///
/// # Safety
/// `scenario` must come from [`nft_scenario_from_toml`].
#[no_mangle]
pub unsafe extern "C" fn nft_scenario_desk_scale(scenario: *mut NftScenario) -> NftStatus {
    guard(|| match scenario.as_mut() {
        None => fail(NftStatus::NullPointer, "scenario is null"),
        Some(s) => {
            s.file.desk_scale();
            NftStatus::Ok
        }
    })
}

/// # Safety
/// `scenario` must be null or come from [`nft_scenario_from_toml`], and is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn nft_scenario_free(scenario: *mut NftScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs one policy (`"ts"`, `"exploit"`, `"ekf"`, `"coherence"`, `"genie"`)
/// at one update interval and feedback ratio.
///
/// # Safety
/// `scenario` must come from [`nft_scenario_from_toml`], `policy` must be a
/// NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nft_run(
    scenario: *const NftScenario,
    policy: *const c_char,
    seed: u64,
    interval_ms: f64,
    feedback_ratio: f64,
    out: *mut *mut NftTrace,
) -> NftStatus {
    guard(|| {
        if out.is_null() {
            return fail(NftStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(NftStatus::NullPointer, "scenario is null");
        };
        let name = try_ffi!(text(policy, "policy"));
        let result = PolicyKind::parse(name).and_then(|p| {
            let sc = s.file.scenario(interval_ms, feedback_ratio)?;
            sc.protocol.validate()?;
            let truth = sc.truth(seed)?;
            run_tracking(&truth, &sc, &sc.scatterers(seed), p, seed)
        });
        match result {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(NftTrace { trace }));
                NftStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of symbols in the trace.
///
/// # Safety
/// `trace` must come from [`nft_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nft_trace_len(trace: *const NftTrace, out: *mut usize) -> NftStatus {
    guard(|| match (trace.as_ref(), out.as_mut()) {
        (Some(t), Some(o)) => {
            *o = t.trace.symbols.len();
            NftStatus::Ok
        }
        _ => fail(NftStatus::NullPointer, "trace or out is null"),
    })
}

/// Copies the per-symbol normalized gains into `buf`, which must hold at
/// least [`nft_trace_len`] values.
///
/// # Safety
/// `trace` must come from [`nft_run`]; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nft_trace_gains(trace: *const NftTrace, buf: *mut f64, len: usize) -> NftStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(NftStatus::NullPointer, "trace is null");
        };
        if buf.is_null() {
            return fail(NftStatus::NullPointer, "buf is null");
        }
        let n = t.trace.symbols.len();
        if len < n {
            return fail(NftStatus::BufferTooSmall, format!("buffer holds {len} values, trace has {n}"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        for (d, s) in dst.iter_mut().zip(&t.trace.symbols) {
            *d = s.gain;
        }
        NftStatus::Ok
    })
}

/// Mean normalized gain over the whole run.
///
/// # Safety
/// `trace` must come from [`nft_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nft_trace_mean_gain(trace: *const NftTrace, out: *mut f64) -> NftStatus {
    guard(|| match (trace.as_ref(), out.as_mut()) {
        (Some(t), Some(o)) => match summarize(&t.trace) {
            Ok(s) => {
                *o = s.mean_gain;
                NftStatus::Ok
            }
            Err(e) => from_error(e),
        },
        _ => fail(NftStatus::NullPointer, "trace or out is null"),
    })
}

/// Writes the per-symbol CSV to `path`.
///
/// # Safety
/// `trace` must come from [`nft_run`]; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nft_trace_write_csv(trace: *const NftTrace, path: *const c_char) -> NftStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(NftStatus::NullPointer, "trace is null");
        };
        let p = try_ffi!(text(path, "path"));
        let result = std::fs::File::create(Path::new(p)).map_err(Error::from).and_then(|f| t.trace.write_csv(f));
        match result {
            Ok(()) => NftStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `trace` must be null or come from [`nft_run`], and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn nft_trace_free(trace: *mut NftTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(NftStatus::Ok as i32, 0);
        assert_eq!(NftStatus::Panic as i32, 8);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, NftStatus::Panic);
        let msg = unsafe { CStr::from_ptr(nft_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| NftStatus::Ok), NftStatus::Ok);
        assert!(nft_last_error().is_null());
    }
}
