//! C interface. Objects cross the boundary as opaque handles owned by the
//! caller and released with the matching `_free`. Every call returns an
//! `HdStatus`; the message of the last failure on the calling thread is
//! available from `hd_last_error`.
//!
//! Complex arrays are interleaved `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hadamard_core::cli::{self, Command};
use hadamard_core::config::RunConfig;
use hadamard_core::grid::GridFunction;
use hadamard_core::parametrix::{CauchyData, ParametrixBundle};
use hadamard_core::Error;
use num_complex::Complex64;

/// Status code returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    InvalidArgument = 5,
    Numerical = 6,
    /// The call completed but at least one check failed.
    ChecksFailed = 7,
    Panic = 8,
}

/// Parsed and validated run configuration.
pub struct HdConfig(RunConfig);

/// Assembled parametrix on the configured grid and window.
pub struct HdBundle(ParametrixBundle);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> HdStatus {
    match e {
        Error::Config(_) | Error::Format(_) => HdStatus::Config,
        Error::Io(_) => HdStatus::Io,
        Error::InvalidArgument(_) | Error::SizeMismatch { .. } | Error::GridMismatch | Error::InvalidGrid(_) | Error::InvalidBands(_) => {
            HdStatus::InvalidArgument
        }
        _ => HdStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (HdStatus, String)>) -> HdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HdStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            HdStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (HdStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (HdStatus, String) {
    (HdStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (HdStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (HdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_config_from_toml(toml: *const c_char, out: *mut *mut HdConfig) -> HdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_toml(str_arg(toml, "toml")?).map_err(core_err)?;
        *out = Box::into_raw(Box::new(HdConfig(cfg)));
        Ok(())
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_config_load(path: *const c_char, out: *mut *mut HdConfig) -> HdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::load(Path::new(str_arg(path, "path")?)).map_err(core_err)?;
        *out = Box::into_raw(Box::new(HdConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hd_config_set_seed(cfg: *mut HdConfig, seed: u64) -> HdStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        c.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hd_config_free(cfg: *mut HdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a subcommand (`reduce`, `parametrix`, `state`, `verify`, `static`,
/// `glue`, `egorov`, `sweep`) into `out_dir`. Returns `ChecksFailed` when
/// the report was written but not every check passed.
///
/// # Safety
/// `cfg` must be a live handle; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hd_run(cfg: *const HdConfig, command: *const c_char, out_dir: *const c_char) -> HdStatus {
    let mut failed = false;
    let s = guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let name = str_arg(command, "command")?;
        let cmd = Command::parse(name).ok_or_else(|| (HdStatus::InvalidArgument, format!("unknown command {name}")))?;
        let report = cli::run(cmd, &c.0, Path::new(str_arg(out_dir, "out_dir")?)).map_err(core_err)?;
        if !report.all_pass() {
            let n = report.failures().len();
            set_error(format!("{n} check(s) failed, {} error(s)", report.errors.len()));
            failed = true;
        }
        Ok(())
    });
    if s == HdStatus::Ok && failed {
        HdStatus::ChecksFailed
    } else {
        s
    }
}

/// Builds the parametrix for the configured model.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_bundle_build(cfg: *const HdConfig, out: *mut *mut HdBundle) -> HdStatus {
    guard(|| {
        let c = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        c.0.validate().map_err(core_err)?;
        let model = c.0.model().map_err(core_err)?;
        let b = ParametrixBundle::build(&model, &c.0.parametrix_options()).map_err(core_err)?;
        *out = Box::into_raw(Box::new(HdBundle(b)));
        Ok(())
    })
}

/// # Safety
/// `b` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hd_bundle_free(b: *mut HdBundle) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Number of grid points.
///
/// # Safety
/// `b` must be a live handle; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hd_bundle_grid_size(b: *const HdBundle, n: *mut usize) -> HdStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("bundle"))?;
        *n.as_mut().ok_or_else(|| null("n"))? = b.0.grid().n();
        Ok(())
    })
}

/// Copies the `n × n` operator `r` row-major into `out` (`2n²` doubles).
///
/// # Safety
/// `b` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hd_bundle_r(b: *const HdBundle, out: *mut f64, len: usize) -> HdStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("bundle"))?;
        let m = b.0.r().mat();
        let n = m.nrows();
        if out.is_null() {
            return Err(null("out"));
        }
        if len != 2 * n * n {
            return Err((HdStatus::InvalidArgument, format!("r needs {} doubles, got {len}", 2 * n * n)));
        }
        let o = std::slice::from_raw_parts_mut(out, len);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                o[2 * (i * n + j)] = z.re;
                o[2 * (i * n + j) + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// Evolves Cauchy data `(f0, f1)` from time 0 to `t` with the parametrix.
/// All four arrays hold `2n` doubles.
///
/// # Safety
/// `b` must be a live handle; the arrays must hold `2n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hd_bundle_evolve(b: *const HdBundle, t: f64, f0: *const f64, f1: *const f64, out0: *mut f64, out1: *mut f64) -> HdStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("bundle"))?;
        if f0.is_null() || f1.is_null() || out0.is_null() || out1.is_null() {
            return Err(null("data array"));
        }
        let grid = b.0.grid().clone();
        let n = grid.n();
        let read = |p: *const f64| {
            let s = std::slice::from_raw_parts(p, 2 * n);
            GridFunction::new(&grid, s.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
        };
        let data = CauchyData::new(read(f0).map_err(core_err)?, read(f1).map_err(core_err)?).map_err(core_err)?;
        let res = b.0.evolve(&[data], &[t]).map_err(core_err)?;
        let d = &res[0][0];
        for (src, dst) in [(&d.f0, out0), (&d.f1, out1)] {
            let o = std::slice::from_raw_parts_mut(dst, 2 * n);
            for (k, z) in src.values().iter().enumerate() {
                o[2 * k] = z.re;
                o[2 * k + 1] = z.im;
            }
        }
        Ok(())
    })
}
