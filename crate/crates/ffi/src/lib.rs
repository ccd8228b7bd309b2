#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! C ABI over the alphagate library.
//!
//! Every function returns an [`AgStatus`]; on failure the message is
//! available from [`ag_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`ag_string_free`]. Series handles are released with [`ag_series_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use alphagate::marketdata::{self, generate_synthetic, MarketSeries, SyntheticConfig};
use alphagate::metrics::{self, ReturnSeries, Sampling};
use alphagate::protocol::{run_protocol, Outcome, ProtocolConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Data = 4,
    Config = 5,
    Protocol = 6,
    Undefined = 7,
    Panic = 8,
}

/// Verdict codes written by [`ag_protocol_run`]; identical to the CLI exit codes.
pub const AG_OUTCOME_DEPLOY: i32 = 0;
pub const AG_OUTCOME_REJECT: i32 = 2;
pub const AG_OUTCOME_REFACTOR: i32 = 3;

/// Opaque bar series.
pub struct AgSeries {
    inner: MarketSeries,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: AgStatus, msg: impl Into<String>) -> AgStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> AgStatus) -> AgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == AgStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(AgStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, AgStatus> {
    if p.is_null() {
        return Err(fail(AgStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AgStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn read_slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], AgStatus> {
    if p.is_null() {
        return Err(fail(AgStatus::NullPointer, "null array argument"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn into_handle(series: MarketSeries, out: *mut *mut AgSeries) -> AgStatus {
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = Box::into_raw(Box::new(AgSeries { inner: series })) };
    AgStatus::Ok
}

/// Last error message on this thread; empty after a successful call.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static version string.
#[no_mangle]
pub extern "C" fn ag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads bars from a CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_series_load_csv(path: *const c_char, out: *mut *mut AgSeries) -> AgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match marketdata::load_csv_auto(path) {
            Ok(series) => into_handle(series, out),
            Err(e) => fail(AgStatus::Data, e.to_string()),
        }
    })
}

/// Generates a synthetic series from a JSON generator spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_series_generate(spec_json: *const c_char, seed: u64, out: *mut *mut AgSeries) -> AgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        let text = match read_str(spec_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: SyntheticConfig = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => return fail(AgStatus::Config, e.to_string()),
        };
        match generate_synthetic(&spec, seed) {
            Ok(s) => into_handle(s.series, out),
            Err(e) => fail(AgStatus::Data, e.to_string()),
        }
    })
}

/// Number of bars; 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ag_series_len(series: *const AgSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ag_series_free(series: *mut AgSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Runs the full protocol. On success `out_pack` receives the canonical
/// evidence pack (free with [`ag_string_free`]) and `out_outcome` one of
/// the `AG_OUTCOME_*` codes.
///
/// # Safety
/// `series` must be a live handle, `config_json` a NUL-terminated string,
/// the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ag_protocol_run(
    series: *const AgSeries,
    config_json: *const c_char,
    out_pack: *mut *mut c_char,
    out_outcome: *mut i32,
) -> AgStatus {
    guarded(|| {
        let Some(series) = series.as_ref() else {
            return fail(AgStatus::NullPointer, "null series handle");
        };
        if out_pack.is_null() || out_outcome.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        let text = match read_str(config_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = match ProtocolConfig::from_json(text) {
            Ok(c) => c,
            Err(e) => return fail(AgStatus::Config, e.to_string()),
        };
        let run = match run_protocol(&series.inner, config, "ffi") {
            Ok(r) => r,
            Err(e) => return fail(AgStatus::Protocol, e.to_string()),
        };
        let pack = match CString::new(run.pack.to_canonical()) {
            Ok(c) => c,
            Err(_) => return fail(AgStatus::Protocol, "evidence pack contains NUL"),
        };
        *out_pack = pack.into_raw();
        *out_outcome = match run.verdict.outcome {
            Outcome::Deploy => AG_OUTCOME_DEPLOY,
            Outcome::Reject => AG_OUTCOME_REJECT,
            Outcome::Refactor => AG_OUTCOME_REFACTOR,
        };
        AgStatus::Ok
    })
}

/// Running-peak maximum drawdown of an equity curve, as a fraction.
///
/// # Safety
/// `equity` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_max_drawdown(equity: *const f64, len: usize, out: *mut f64) -> AgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        let e = match read_slice(equity, len) {
            Ok(e) => e,
            Err(s) => return s,
        };
        if e.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return fail(AgStatus::InvalidArgument, "equity must be finite and positive");
        }
        *out = metrics::max_drawdown(e).mdd;
        AgStatus::Ok
    })
}

/// Annualized Sharpe of the log returns of an equity curve sampled
/// `periods_per_year` times a year.
///
/// # Safety
/// `equity` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_sharpe(equity: *const f64, len: usize, periods_per_year: f64, out: *mut f64) -> AgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        if !(periods_per_year > 0.0) {
            return fail(AgStatus::InvalidArgument, "periods_per_year must be > 0");
        }
        let e = match read_slice(equity, len) {
            Ok(e) => e,
            Err(s) => return s,
        };
        let returns = match metrics::log_returns(e) {
            Ok(r) => r,
            Err(err) => return fail(AgStatus::InvalidArgument, err.to_string()),
        };
        let rs = ReturnSeries {
            returns,
            sampling: Sampling::PerBar,
            periods_per_year,
        };
        match metrics::sharpe(&rs, 0.0) {
            Ok(v) => {
                *out = v;
                AgStatus::Ok
            }
            Err(err) => fail(AgStatus::Undefined, err.to_string()),
        }
    })
}

/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_cagr(e_start: f64, e_end: f64, years: f64, out: *mut f64) -> AgStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgStatus::NullPointer, "null out pointer");
        }
        match metrics::cagr(e_start, e_end, years) {
            Ok(v) => {
                *out = v;
                AgStatus::Ok
            }
            Err(err) => fail(AgStatus::InvalidArgument, err.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(ag_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn metric_wrappers() {
        let e = [100.0, 110.0, 99.0, 120.0];
        let mut v = 0.0;
        assert_eq!(unsafe { ag_max_drawdown(e.as_ptr(), e.len(), &mut v) }, AgStatus::Ok);
        assert!((v - 0.1).abs() < 1e-12);
        assert_eq!(unsafe { ag_cagr(100.0, 121.0, 2.0, &mut v) }, AgStatus::Ok);
        assert!((v - 0.1).abs() < 1e-12);
        assert_eq!(unsafe { ag_sharpe(e.as_ptr(), e.len(), 252.0, &mut v) }, AgStatus::Ok);
        assert!(v.is_finite());
        assert!(last_error().is_empty());
    }

    #[test]
    fn errors_set_last_error() {
        let mut v = 0.0;
        let flat = [100.0; 5];
        assert_eq!(unsafe { ag_sharpe(flat.as_ptr(), flat.len(), 252.0, &mut v) }, AgStatus::Undefined);
        assert!(!last_error().is_empty());
        assert_eq!(unsafe { ag_max_drawdown(ptr::null(), 3, &mut v) }, AgStatus::NullPointer);
        assert_eq!(unsafe { ag_cagr(-1.0, 1.0, 1.0, &mut v) }, AgStatus::InvalidArgument);
        let bad = [1.0, -1.0];
        assert_eq!(unsafe { ag_max_drawdown(bad.as_ptr(), 2, &mut v) }, AgStatus::InvalidArgument);
    }

    #[test]
    fn series_handle_lifecycle() {
        let spec = CString::new(
            r#"{"n_days":3,"bars_per_day":24,"regimes":[{"drift":0,"volatility":0.001,"mean_spread":0.01}],"regime_switch_prob":0}"#,
        )
        .unwrap();
        let mut h: *mut AgSeries = ptr::null_mut();
        assert_eq!(unsafe { ag_series_generate(spec.as_ptr(), 5, &mut h) }, AgStatus::Ok);
        assert_eq!(unsafe { ag_series_len(h) }, 72);
        unsafe { ag_series_free(h) };
        assert_eq!(unsafe { ag_series_len(ptr::null()) }, 0);

        let bad = CString::new("{").unwrap();
        assert_eq!(unsafe { ag_series_generate(bad.as_ptr(), 5, &mut h) }, AgStatus::Config);
        let missing = CString::new("/nonexistent/bars.csv").unwrap();
        assert_eq!(unsafe { ag_series_load_csv(missing.as_ptr(), &mut h) }, AgStatus::Data);
    }

    #[test]
    fn version_is_static() {
        let v = unsafe { CStr::from_ptr(ag_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
