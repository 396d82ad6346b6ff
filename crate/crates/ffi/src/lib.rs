//! C interface to the simulator.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a
//! [`VanetStatus`]; on failure `vanet_last_error` describes what went wrong
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vanetsim::config::{load_config, parse_config, ScenarioConfig};
use vanetsim::metrics::MetricsSummary;
use vanetsim::protocols::ProtocolKind;
use vanetsim::sweep::{run_sweep, SweepOptions, SweepResult};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VanetStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    RuntimeError = 4,
    OutOfRange = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VanetProtocol {
    Baseline = 0,
    HybridVehcloud = 1,
    Dfcv = 2,
}

impl From<ProtocolKind> for VanetProtocol {
    fn from(p: ProtocolKind) -> Self {
        match p {
            ProtocolKind::Baseline => VanetProtocol::Baseline,
            ProtocolKind::HybridVehcloud => VanetProtocol::HybridVehcloud,
            ProtocolKind::Dfcv => VanetProtocol::Dfcv,
        }
    }
}

/// One metrics row. Metrics that are undefined for the run (nothing sent
/// or nothing delivered) are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanetRow {
    pub protocol: VanetProtocol,
    pub vehicle_count: u32,
    pub seed: u64,
    pub mean_e2e_delay_s: f64,
    pub delivery_probability: f64,
    pub plr: f64,
    pub avg_throughput_bps: f64,
    pub n_sent: u64,
    pub n_delivered: u64,
    pub n_lost: u64,
}

impl From<&MetricsSummary> for VanetRow {
    fn from(s: &MetricsSummary) -> Self {
        VanetRow {
            protocol: s.protocol.into(),
            vehicle_count: s.vehicle_count,
            seed: s.seed,
            mean_e2e_delay_s: s.mean_e2e_delay.unwrap_or(f64::NAN),
            delivery_probability: s.delivery_probability.unwrap_or(f64::NAN),
            plr: s.plr.unwrap_or(f64::NAN),
            avg_throughput_bps: s.avg_throughput,
            n_sent: s.n_sent,
            n_delivered: s.n_delivered,
            n_lost: s.n_lost,
        }
    }
}

/// Opaque scenario configuration.
pub struct VanetConfig(ScenarioConfig);

/// Opaque sweep result.
pub struct VanetSweep(SweepResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn guard(f: impl FnOnce() -> VanetStatus) -> VanetStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            VanetStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, VanetStatus> {
    if s.is_null() {
        set_error("null string argument");
        return Err(VanetStatus::NullArgument);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        VanetStatus::InvalidUtf8
    })
}

/// Message for the most recent failure on this thread, or NULL. The
/// pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn vanet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vanet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a JSON scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vanet_config_from_json(json: *const c_char, out: *mut *mut VanetConfig) -> VanetStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return VanetStatus::NullArgument;
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text).and_then(|c| c.validate().map(|()| c)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(VanetConfig(cfg)));
                VanetStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                VanetStatus::ConfigError
            }
        }
    })
}

/// Loads a JSON scenario file; relative paths inside resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vanet_config_load(path: *const c_char, out: *mut *mut VanetConfig) -> VanetStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return VanetStatus::NullArgument;
        }
        let path = match read_str(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_config(Path::new(path)) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(VanetConfig(cfg)));
                VanetStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                VanetStatus::ConfigError
            }
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vanet_config_free(cfg: *mut VanetConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every (protocol, density, seed) combination of the scenario.
///
/// # Safety
/// `cfg` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vanet_run_sweep(cfg: *const VanetConfig, parallel: bool, out: *mut *mut VanetSweep) -> VanetStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            set_error("null argument");
            return VanetStatus::NullArgument;
        }
        let opts = SweepOptions {
            parallel,
            event_log: false,
        };
        let cfg = &*cfg;
        match run_sweep(&cfg.0, opts) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(VanetSweep(r)));
                VanetStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                VanetStatus::RuntimeError
            }
        }
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `sweep` must be NULL or a live sweep handle.
#[no_mangle]
pub unsafe extern "C" fn vanet_sweep_row_count(sweep: *const VanetSweep) -> usize {
    if sweep.is_null() {
        0
    } else {
        let sweep = &*sweep;
        sweep.0.summaries.len()
    }
}

/// Copies row `index` (sorted by protocol name, vehicle count, seed).
///
/// # Safety
/// `sweep` must be a live sweep handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vanet_sweep_row(sweep: *const VanetSweep, index: usize, out: *mut VanetRow) -> VanetStatus {
    guard(|| {
        if sweep.is_null() || out.is_null() {
            set_error("null argument");
            return VanetStatus::NullArgument;
        }
        let sweep = &*sweep;
        match sweep.0.summaries.get(index) {
            Some(s) => {
                *out = VanetRow::from(s);
                VanetStatus::Ok
            }
            None => {
                set_error(format!("row {index} out of range"));
                VanetStatus::OutOfRange
            }
        }
    })
}

/// Metrics CSV for the sweep, header included. Release with `vanet_string_free`.
/// Returns NULL if `sweep` is NULL.
///
/// # Safety
/// `sweep` must be NULL or a live sweep handle.
#[no_mangle]
pub unsafe extern "C" fn vanet_sweep_csv(sweep: *const VanetSweep) -> *mut c_char {
    if sweep.is_null() {
        set_error("null argument");
        return ptr::null_mut();
    }
    let sweep = &*sweep;
    match CString::new(sweep.0.csv()) {
        Ok(c) => c.into_raw(),
        Err(_) => ptr::null_mut(),
    }
}

/// # Safety
/// `sweep` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vanet_sweep_free(sweep: *mut VanetSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// # Safety
/// `s` must be a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vanet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
