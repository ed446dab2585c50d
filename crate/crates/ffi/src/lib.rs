//! C ABI over `fiberwave`. Objects cross the boundary as opaque handles
//! that the caller frees with the matching `*_free` function. Every call
//! returns an [`FwStatus`]; on failure [`fw_last_error`] describes it.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;

use fiberwave::config::RunConfig;
use fiberwave::dataset::{window_length, WindowMode};
use fiberwave::harness::{evaluate, sweep_launch_power};
use fiberwave::metrics::{nmse_fields, q_from_ber};
use fiberwave::ssfm::propagate_link;
use fiberwave::tx::TxFrame;
use fiberwave::wfld::{read_field, write_field};
use fiberwave::{DualPolField, Error, ErrorClass, LinkConfig, WdmConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid configuration or arguments.
    Config = 2,
    Numeric = 3,
    Io = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwWindowMode {
    Pure = 0,
    Fdd = 1,
}

/// Dual-polarization sampled field.
pub struct FwField(DualPolField);

/// A transmitted frame plus the link it is sent over.
pub struct FwSimulation {
    wdm: WdmConfig,
    link: LinkConfig,
    frame: TxFrame,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> FwStatus {
    match e.class() {
        ErrorClass::Config => FwStatus::Config,
        ErrorClass::Numeric => FwStatus::Numeric,
        ErrorClass::Io => FwStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
    Small,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FwStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            FwStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Small)) => {
            set_error("output buffer too small");
            FwStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic");
            FwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Core(Error::invalid(format!("{what} is not UTF-8"))))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure::Core(Error::invalid("string contains NUL")))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated).
/// Returns the message length without the terminator, or 0 if none.
/// The message is truncated when `len` is too small.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn fw_last_error(buf: *mut c_char, len: usize) -> usize {
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

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Free a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Q-factor in dB for a bit error rate. Infinite values are returned as
/// IEEE infinities.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_q_from_ber(ber: f64, out: *mut f64) -> FwStatus {
    guard(|| {
        *out_arg(out, "out")? = q_from_ber(ber).as_f64();
        Ok(())
    })
}

/// Input window length in symbols for a span.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_window_length(
    num_channels: usize,
    symbol_rate_baud: f64,
    distance_km: f64,
    alpha_db_per_km: f64,
    beta2_ps2_per_km: f64,
    mode: FwWindowMode,
    out: *mut usize,
) -> FwStatus {
    guard(|| {
        let cfg = WdmConfig::new(num_channels, symbol_rate_baud, 0.0);
        let mode = match mode {
            FwWindowMode::Pure => WindowMode::Pure,
            FwWindowMode::Fdd => WindowMode::Fdd,
        };
        let spec = window_length(&cfg, distance_km, alpha_db_per_km, beta2_ps2_per_km, mode)?;
        *out_arg(out, "out")? = spec.window_length;
        Ok(())
    })
}

/// Build a field from `len` interleaved `[XI, XQ, YI, YQ]` records.
///
/// # Safety
/// `data` must point to `4 * len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_field_new(
    data: *const f64,
    len: usize,
    sample_rate_hz: f64,
    center_wavelength_m: f64,
    position_km: f64,
    out: *mut *mut FwField,
) -> FwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let raw = std::slice::from_raw_parts(data, 4 * len);
        let x = raw.chunks_exact(4).map(|r| Complex64::new(r[0], r[1])).collect();
        let y = raw.chunks_exact(4).map(|r| Complex64::new(r[2], r[3])).collect();
        let f = DualPolField::with_metadata(x, y, sample_rate_hz, center_wavelength_m, position_km)?;
        *out = Box::into_raw(Box::new(FwField(f)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_field_read(path: *const c_char, out: *mut *mut FwField) -> FwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let f = read_field(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(FwField(f)));
        Ok(())
    })
}

/// # Safety
/// `field` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fw_field_write(field: *const FwField, path: *const c_char) -> FwStatus {
    guard(|| {
        let f = ref_arg(field, "field")?;
        write_field(&f.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of samples per polarization, 0 for a null handle.
///
/// # Safety
/// `field` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fw_field_len(field: *const FwField) -> usize {
    field.as_ref().map_or(0, |f| f.0.len())
}

/// Sample rate, center wavelength and position of a field.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_field_metadata(
    field: *const FwField,
    sample_rate_hz: *mut f64,
    center_wavelength_m: *mut f64,
    position_km: *mut f64,
) -> FwStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        *out_arg(sample_rate_hz, "sample_rate_hz")? = f.sample_rate_hz();
        *out_arg(center_wavelength_m, "center_wavelength_m")? = f.center_wavelength_m();
        *out_arg(position_km, "position_km")? = f.position_km();
        Ok(())
    })
}

/// Copy the samples as interleaved `[XI, XQ, YI, YQ]` records into `buf`,
/// which holds `capacity` doubles and must fit `4 * fw_field_len`.
///
/// # Safety
/// `buf` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fw_field_copy(field: *const FwField, buf: *mut f64, capacity: usize) -> FwStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        if capacity < 4 * f.len() {
            return Err(Failure::Small);
        }
        let out = std::slice::from_raw_parts_mut(buf, 4 * f.len());
        for ((rec, x), y) in out.chunks_exact_mut(4).zip(f.x()).zip(f.y()) {
            rec.copy_from_slice(&[x.re, x.im, y.re, y.im]);
        }
        Ok(())
    })
}

/// NMSE of `candidate` against `reference` over both polarizations.
///
/// # Safety
/// Handles must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_field_nmse(
    reference: *const FwField,
    candidate: *const FwField,
    out: *mut f64,
) -> FwStatus {
    guard(|| {
        let r = &ref_arg(reference, "reference")?.0;
        let c = &ref_arg(candidate, "candidate")?.0;
        *out_arg(out, "out")? = nmse_fields(r, c)?;
        Ok(())
    })
}

/// # Safety
/// `field` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fw_field_free(field: *mut FwField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Generate the transmitted frame described by a JSON run configuration
/// (an empty object gives the defaults).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_new(config_json: *const c_char, out: *mut *mut FwSimulation) -> FwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        cfg.validate()?;
        let (wdm, link) = (cfg.wdm(), cfg.link());
        let frame = TxFrame::generate(&wdm, cfg.num_symbols, cfg.prng)?;
        *out = Box::into_raw(Box::new(FwSimulation { wdm, link, frame }));
        Ok(())
    })
}

/// Number of spans of the simulation's link.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_num_spans(sim: *const FwSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.link.num_spans())
}

/// A copy of the transmitted field.
///
/// # Safety
/// `sim` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_tx_field(sim: *const FwSimulation, out: *mut *mut FwField) -> FwStatus {
    guard(|| {
        let s = ref_arg(sim, "sim")?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(FwField(s.frame.field.clone())));
        Ok(())
    })
}

/// Propagate the transmitted frame through the first `num_spans` spans.
///
/// # Safety
/// `sim` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_propagate(
    sim: *const FwSimulation,
    num_spans: usize,
    out: *mut *mut FwField,
) -> FwStatus {
    guard(|| {
        let s = ref_arg(sim, "sim")?;
        let out = out_arg(out, "out")?;
        let link = s.link.truncated(num_spans)?;
        let field = propagate_link(&s.frame.field, &link, &BTreeSet::new())?.field;
        *out = Box::into_raw(Box::new(FwField(field)));
        Ok(())
    })
}

/// Center-channel index of the simulation's WDM grid.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_center_channel(sim: *const FwSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.wdm.center_channel())
}

/// # Safety
/// `sim` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fw_simulation_free(sim: *mut FwSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Run the evaluation described by a JSON run configuration and return the
/// report as JSON. Free the result with [`fw_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_evaluate(config_json: *const c_char, out: *mut *mut c_char) -> FwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        c.validate()?;
        let r = evaluate(&c.link(), &c.evaluate.candidate, &c.wdm(), &c.distances(), c.prng, &c.eval_options())?;
        *out = into_c_string(r.to_json()?)?;
        Ok(())
    })
}

/// Run the launch-power sweep of a JSON run configuration and return it as
/// JSON. Free the result with [`fw_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_sweep_power(config_json: *const c_char, out: *mut *mut c_char) -> FwStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = RunConfig::from_json(str_arg(config_json, "config_json")?)?;
        c.validate()?;
        let s = sweep_launch_power(&c.link(), &c.wdm(), &c.sweep.powers_dbm, c.prng, &c.eval_options())?;
        *out = into_c_string(serde_json::to_string_pretty(&s).map_err(Error::from)?)?;
        Ok(())
    })
}
