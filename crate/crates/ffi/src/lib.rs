//! C ABI for the slowguard detection library.
//!
//! Traces and evaluation reports are opaque handles created and destroyed by
//! this library; callers never see their layout. Every fallible call returns
//! a [`SlowguardStatus`] and writes results through out-pointers, so the ABI
//! carries no Rust-specific error machinery. Panics are caught at the
//! boundary and surfaced as [`SlowguardStatus::Internal`].
//!
//! The generated header lives at `include/slowguard.h`.

use std::ffi::{c_char, CStr, CString};
use std::net::Ipv4Addr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use slowguard::error::Error;
use slowguard::evaluator::{balanced_accuracy, run_experiment, ConfusionMatrix, EvalReport, RunOptions};
use slowguard::schemes::SchemeConfig;
use slowguard::trace_io::{
    apply_sidecar, label_from_blocks, read_labels, read_pcap, sidecar_path, Cidr, Endpoint,
    LabeledTrace,
};

/// Result code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowguardStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The file could not be read or written.
    Io = 3,
    /// The capture, label, or configuration input could not be parsed.
    Parse = 4,
    /// The configuration was syntactically valid but unusable.
    InvalidConfig = 5,
    /// Scoring needs at least one labeled attacker and one benign client.
    DegenerateClasses = 6,
    /// An unexpected internal failure (including a caught panic).
    Internal = 7,
}

fn status_of(err: &Error) -> SlowguardStatus {
    match err {
        Error::Io { .. } => SlowguardStatus::Io,
        Error::PcapFormat { .. } | Error::LabelFormat { .. } | Error::Ipv6Unsupported { .. } => {
            SlowguardStatus::Parse
        }
        Error::InvalidConfig(_) => SlowguardStatus::InvalidConfig,
        Error::DegenerateClasses(_) => SlowguardStatus::DegenerateClasses,
        _ => SlowguardStatus::Internal,
    }
}

/// Labeled packet trace (opaque).
pub struct SlowguardTrace {
    inner: LabeledTrace,
}

/// Detection evaluation report (opaque).
pub struct SlowguardReport {
    inner: EvalReport,
}

/// Returns the library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slowguard_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns a static NUL-terminated description of a status code.
#[no_mangle]
pub extern "C" fn slowguard_status_message(status: SlowguardStatus) -> *const c_char {
    let msg: &'static str = match status {
        SlowguardStatus::Ok => "ok\0",
        SlowguardStatus::NullArgument => "required pointer argument was null\0",
        SlowguardStatus::InvalidUtf8 => "string argument was not valid UTF-8\0",
        SlowguardStatus::Io => "file could not be read or written\0",
        SlowguardStatus::Parse => "capture, label, or configuration input could not be parsed\0",
        SlowguardStatus::InvalidConfig => "configuration is unusable\0",
        SlowguardStatus::DegenerateClasses => {
            "scoring needs at least one attacker and one benign client\0"
        }
        SlowguardStatus::Internal => "internal failure\0",
    };
    msg.as_ptr() as *const c_char
}

/// Runs `f` with panics converted to `Internal`.
fn guarded(f: impl FnOnce() -> SlowguardStatus) -> SlowguardStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(SlowguardStatus::Internal)
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, SlowguardStatus> {
    if ptr.is_null() {
        return Err(SlowguardStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| SlowguardStatus::InvalidUtf8)
}

/// Reads a capture file into a new trace handle.
///
/// `target_ip`/`target_port` select the protected service. `target_ip` may be
/// null, in which case the target is taken from the label sidecar next to the
/// capture (`<path>.labels.json`), which must then exist. When the sidecar
/// exists its attacker labels are applied.
///
/// On success writes a handle to `out`; release it with
/// [`slowguard_trace_free`].
///
/// # Safety
/// `path` (and `target_ip` when non-null) must point to NUL-terminated
/// strings, and `out` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_read(
    path: *const c_char,
    target_ip: *const c_char,
    target_port: u16,
    out: *mut *mut SlowguardTrace,
) -> SlowguardStatus {
    guarded(|| {
        if out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        let path = match cstr(path) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let sidecar = match std::fs::metadata(sidecar_path(path)) {
            Ok(_) => match read_labels(sidecar_path(path)) {
                Ok(labels) => Some(labels),
                Err(e) => return status_of(&e),
            },
            Err(_) => None,
        };
        let target = if target_ip.is_null() {
            match sidecar.as_ref().map(|s| s.target()) {
                Some(Ok(t)) => t,
                Some(Err(e)) => return status_of(&e),
                None => return SlowguardStatus::InvalidConfig,
            }
        } else {
            let ip = match cstr(target_ip) {
                Ok(s) => match Ipv4Addr::from_str(s) {
                    Ok(ip) => ip,
                    Err(_) => return SlowguardStatus::Parse,
                },
                Err(status) => return status,
            };
            Endpoint::new(ip, target_port)
        };
        let mut trace = match read_pcap(path, target) {
            Ok((trace, _stats)) => trace,
            Err(e) => return status_of(&e),
        };
        if let Some(labels) = &sidecar {
            if let Err(e) = apply_sidecar(&mut trace, labels) {
                return status_of(&e);
            }
        }
        out.write(Box::into_raw(Box::new(SlowguardTrace { inner: trace })));
        SlowguardStatus::Ok
    })
}

/// Releases a trace handle. Null is ignored.
///
/// # Safety
/// `trace` must be a handle returned by this library that has not already
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_free(trace: *mut SlowguardTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Writes the number of packets in the trace to `out`.
///
/// # Safety
/// `trace` must be a live handle from this library and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_packet_count(
    trace: *const SlowguardTrace,
    out: *mut u64,
) -> SlowguardStatus {
    guarded(|| {
        if trace.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        out.write((*trace).inner.packets.len() as u64);
        SlowguardStatus::Ok
    })
}

/// Writes the number of distinct client addresses (observed plus labeled) to
/// `out`.
///
/// # Safety
/// `trace` must be a live handle from this library and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_client_count(
    trace: *const SlowguardTrace,
    out: *mut u64,
) -> SlowguardStatus {
    guarded(|| {
        if trace.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        out.write((*trace).inner.client_ips().len() as u64);
        SlowguardStatus::Ok
    })
}

/// Writes the number of labeled attacker addresses to `out`.
///
/// # Safety
/// `trace` must be a live handle from this library and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_attacker_count(
    trace: *const SlowguardTrace,
    out: *mut u64,
) -> SlowguardStatus {
    guarded(|| {
        if trace.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        out.write((*trace).inner.attacker_ips.len() as u64);
        SlowguardStatus::Ok
    })
}

/// Replaces the trace's attacker labels with every client inside `cidr`
/// (for example `"128.10.0.0/16"`).
///
/// # Safety
/// `trace` must be a live handle from this library and `cidr` must point to
/// a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn slowguard_trace_label_block(
    trace: *mut SlowguardTrace,
    cidr: *const c_char,
) -> SlowguardStatus {
    guarded(|| {
        if trace.is_null() {
            return SlowguardStatus::NullArgument;
        }
        let cidr = match cstr(cidr) {
            Ok(s) => match s.parse::<Cidr>() {
                Ok(c) => c,
                Err(_) => return SlowguardStatus::Parse,
            },
            Err(status) => return status,
        };
        label_from_blocks(&mut (*trace).inner, cidr);
        SlowguardStatus::Ok
    })
}

/// Runs one detection configuration over a labeled trace and writes a report
/// handle to `out`.
///
/// `config_json` is a JSON object such as
/// `{"scheme":"lpr","thresholds":{"p":0.08},"include_handshake":false,"strikes":1}`.
///
/// Release the report with [`slowguard_report_free`].
///
/// # Safety
/// `trace` must be a live handle from this library, `config_json` must point
/// to a NUL-terminated string, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_eval_run(
    trace: *const SlowguardTrace,
    config_json: *const c_char,
    out: *mut *mut SlowguardReport,
) -> SlowguardStatus {
    guarded(|| {
        if trace.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        let config = match cstr(config_json) {
            Ok(s) => match serde_json::from_str::<SchemeConfig>(s) {
                Ok(c) => c,
                Err(_) => return SlowguardStatus::Parse,
            },
            Err(status) => return status,
        };
        match run_experiment(&(*trace).inner, &config, &RunOptions::default()) {
            Ok(report) => {
                out.write(Box::into_raw(Box::new(SlowguardReport { inner: report })));
                SlowguardStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Writes the report's confusion counts to the four out-pointers.
///
/// # Safety
/// `report` must be a live handle from this library and all four out-pointers
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_report_counts(
    report: *const SlowguardReport,
    true_positives: *mut u64,
    false_positives: *mut u64,
    false_negatives: *mut u64,
    true_negatives: *mut u64,
) -> SlowguardStatus {
    guarded(|| {
        if report.is_null()
            || true_positives.is_null()
            || false_positives.is_null()
            || false_negatives.is_null()
            || true_negatives.is_null()
        {
            return SlowguardStatus::NullArgument;
        }
        let cm = &(*report).inner.confusion;
        true_positives.write(cm.tp);
        false_positives.write(cm.fp);
        false_negatives.write(cm.fn_);
        true_negatives.write(cm.tn);
        SlowguardStatus::Ok
    })
}

/// Writes the report's balanced accuracy to `out`.
///
/// # Safety
/// `report` must be a live handle from this library and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_report_bacc(
    report: *const SlowguardReport,
    out: *mut f64,
) -> SlowguardStatus {
    guarded(|| {
        if report.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        out.write((*report).inner.bacc);
        SlowguardStatus::Ok
    })
}

/// Serializes the full report as a JSON string and writes it to `out`.
/// Release the string with [`slowguard_string_free`].
///
/// # Safety
/// `report` must be a live handle from this library and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slowguard_report_json(
    report: *const SlowguardReport,
    out: *mut *mut c_char,
) -> SlowguardStatus {
    guarded(|| {
        if report.is_null() || out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        let json = match serde_json::to_string(&(*report).inner) {
            Ok(s) => s,
            Err(_) => return SlowguardStatus::Internal,
        };
        match CString::new(json) {
            Ok(cstring) => {
                out.write(cstring.into_raw());
                SlowguardStatus::Ok
            }
            Err(_) => SlowguardStatus::Internal,
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `string` must have been returned by this library and not already freed.
#[no_mangle]
pub unsafe extern "C" fn slowguard_string_free(string: *mut c_char) {
    if !string.is_null() {
        drop(CString::from_raw(string));
    }
}

/// Releases a report handle. Null is ignored.
///
/// # Safety
/// `report` must be a handle returned by this library that has not already
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn slowguard_report_free(report: *mut SlowguardReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Computes balanced accuracy from raw confusion counts and writes it to
/// `out`. Fails with `DegenerateClasses` when either class is empty.
///
/// # Safety
/// `out` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn slowguard_balanced_accuracy(
    true_positives: u64,
    false_positives: u64,
    false_negatives: u64,
    true_negatives: u64,
    out: *mut f64,
) -> SlowguardStatus {
    guarded(|| {
        if out.is_null() {
            return SlowguardStatus::NullArgument;
        }
        let cm = ConfusionMatrix::new(true_positives, false_positives, false_negatives, true_negatives);
        match balanced_accuracy(&cm) {
            Ok(bacc) => {
                out.write(bacc);
                SlowguardStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}
