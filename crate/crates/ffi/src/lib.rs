//! C ABI for the soaksim library.
//!
//! Handles are opaque pointers created by `*_new`/`*_run` functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`SoaksimStatus`]; on failure the message is kept per thread and can be
//! copied out with [`soaksim_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use soaksim::calibration::{fit_soaking_rate, two_point_series, AreaSeries, FitFlag};
use soaksim::droplet::{initial_height, SoakingModel};
use soaksim::growth::{absorption_probability, ConsumptionSchedule};
use soaksim::io::ConfigFile;
use soaksim::pbs::{RunOutput, Simulator};
use soaksim::pde::{solve, Grid, OracleOutput, SolveOptions};
use soaksim::{validate_config, Error, SimulationConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoaksimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Parse = 4,
    Runtime = 5,
    OutOfRange = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: SoaksimStatus, msg: impl Into<String>) -> SoaksimStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> SoaksimStatus {
    let status = match &e {
        Error::InvalidArgument(_) => SoaksimStatus::InvalidArgument,
        Error::InvalidConfig(_) => SoaksimStatus::InvalidConfig,
        Error::Parse(_) | Error::Mismatch(_) => SoaksimStatus::Parse,
        _ => SoaksimStatus::Runtime,
    };
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> SoaksimStatus>(f: F) -> SoaksimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SoaksimStatus::Panic, format!("panic: {msg}"))
        }
    }
}

macro_rules! check_ptr {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(SoaksimStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes, into `buf`. Returns the full message length
/// excluding the terminator; pass `buf = NULL` to query it.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn soaksim_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn soaksim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Initial droplet height `V / A` in metres.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn soaksim_initial_height(volume_m3: f64, area_m2: f64, out: *mut f64) -> SoaksimStatus {
    check_ptr!(out);
    guard(|| match initial_height(volume_m3, area_m2) {
        Ok(h) => {
            *out = h;
            SoaksimStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Moles released into the agar over `[0, t]` by a droplet of the given
/// volume, footprint radius, soaking rate and concentration (mol/m³).
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn soaksim_cumulative_release(
    volume_m3: f64,
    radius_m: f64,
    soaking_rate_m_s: f64,
    concentration_mol_m3: f64,
    t_s: f64,
    out: *mut f64,
) -> SoaksimStatus {
    check_ptr!(out);
    guard(|| {
        match SoakingModel::from_droplet(volume_m3, radius_m, soaking_rate_m_s, concentration_mol_m3)
            .and_then(|m| m.cumulative_release(t_s))
        {
            Ok(v) => {
                *out = v;
                SoaksimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Lawn consumption rate at `t_s`. Pass `cap_m_s = INFINITY` for no cap.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn soaksim_consumption_rate(
    k0_m_s: f64,
    doubling_period_s: f64,
    cap_m_s: f64,
    t_s: f64,
    out: *mut f64,
) -> SoaksimStatus {
    check_ptr!(out);
    guard(|| {
        match ConsumptionSchedule::new(k0_m_s, doubling_period_s, Some(cap_m_s)).and_then(|s| s.consumption_rate_at(t_s)) {
            Ok(v) => {
                *out = v;
                SoaksimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Per-step surface absorption probability for rate `k`.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn soaksim_absorption_probability(k_m_s: f64, d_m2_s: f64, dt_s: f64, out: *mut f64) -> SoaksimStatus {
    check_ptr!(out);
    guard(|| match absorption_probability(k_m_s, d_m2_s, dt_s) {
        Ok(p) => {
            *out = p;
            SoaksimStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

pub const SOAKSIM_FIT_NO_SOAKING: u32 = 1;
pub const SOAKSIM_FIT_NEGATIVE_RATE: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoaksimFit {
    pub soaking_rate_m_s: f64,
    pub two_point_rate_m_s: f64,
    pub log_slope_per_s: f64,
    pub intercept_area_m2: f64,
    pub r_squared: f64,
    /// Bitwise OR of `SOAKSIM_FIT_*`.
    pub flags: u32,
}

/// Fits the soaking rate to `n` `(time, area)` samples.
///
/// # Safety
/// `times_s` and `areas_m2` must point to `n` readable doubles and `out` to a
/// writable [`SoaksimFit`].
#[no_mangle]
pub unsafe extern "C" fn soaksim_fit_soaking_rate(
    times_s: *const f64,
    areas_m2: *const f64,
    n: usize,
    h0_m: f64,
    out: *mut SoaksimFit,
) -> SoaksimStatus {
    check_ptr!(times_s, areas_m2, out);
    guard(|| {
        let t = std::slice::from_raw_parts(times_s, n);
        let a = std::slice::from_raw_parts(areas_m2, n);
        let series = match AreaSeries::new("ffi", t.iter().copied().zip(a.iter().copied()).collect()) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let fit = match fit_soaking_rate(&series, h0_m) {
            Ok(f) => f,
            Err(e) => return from_error(e),
        };
        let two_point = match two_point_series(&series, h0_m) {
            Ok(k) => k,
            Err(e) => return from_error(e),
        };
        let flags = fit.flags.iter().fold(0, |acc, f| {
            acc | match f {
                FitFlag::NoSoakingDetected => SOAKSIM_FIT_NO_SOAKING,
                FitFlag::NegativeRate => SOAKSIM_FIT_NEGATIVE_RATE,
            }
        });
        *out = SoaksimFit {
            soaking_rate_m_s: fit.soaking_rate_m_s,
            two_point_rate_m_s: two_point,
            log_slope_per_s: fit.log_slope_per_s,
            intercept_area_m2: fit.intercept_area_m2,
            r_squared: fit.r_squared,
            flags,
        };
        SoaksimStatus::Ok
    })
}

/// Opaque simulation configuration.
pub struct SoaksimConfig {
    inner: SimulationConfig,
}

fn boxed_config(inner: SimulationConfig, out: *mut *mut SoaksimConfig) -> SoaksimStatus {
    // SAFETY: callers check `out` for null before calling
    unsafe { *out = Box::into_raw(Box::new(SoaksimConfig { inner })) };
    SoaksimStatus::Ok
}

/// Reference configuration with initial consumption rate `kb0_m_s`.
///
/// # Safety
/// `out` must point to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_new(kb0_m_s: f64, out: *mut *mut SoaksimConfig) -> SoaksimStatus {
    check_ptr!(out);
    guard(|| boxed_config(SimulationConfig::reference(kb0_m_s), out))
}

/// Parses a configuration in the command-line tool's TOML format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_from_toml(text: *const c_char, out: *mut *mut SoaksimConfig) -> SoaksimStatus {
    check_ptr!(text, out);
    guard(|| {
        let text = match CStr::from_ptr(text).to_str() {
            Ok(s) => s,
            Err(_) => return fail(SoaksimStatus::Parse, "config text is not UTF-8"),
        };
        match ConfigFile::parse(text).and_then(|f| f.to_config()) {
            Ok(cfg) => boxed_config(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Sets one numeric config key, named as in the TOML format (for example
/// `end_time_s`, `time_step_s`, `particle_weight_mol`, `rng_seed`).
///
/// # Safety
/// `config` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_set_number(
    config: *mut SoaksimConfig,
    key: *const c_char,
    value: f64,
) -> SoaksimStatus {
    check_ptr!(config, key);
    guard(|| {
        let Ok(key) = CStr::from_ptr(key).to_str() else {
            return fail(SoaksimStatus::Parse, "key is not UTF-8");
        };
        let c = &mut (*config).inner;
        let whole = |v: f64| -> Option<u64> { (v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(64)).then_some(v as u64) };
        match key {
            "plate_radius_m" => c.geometry.plate_radius_m = value,
            "agar_depth_m" => c.geometry.agar_depth_m = value,
            "diffusion_coeff_m2_s" => c.species.diffusion_coeff_m2_s = value,
            "droplet_concentration_mol_m3" => c.species.droplet_concentration_mol_m3 = value,
            "particle_weight_mol" => c.species.particle_weight_mol = value,
            "droplet_volume_m3" => c.droplet.initial_volume_m3 = value,
            "droplet_radius_m" => c.droplet.initial_radius_m = value,
            "soaking_rate_m_s" => c.soaking_rate_m_s = value,
            "kb0_m_s" => c.growth.initial_consumption_rate_m_s = value,
            "doubling_period_s" => c.growth.doubling_period_s = value,
            "kb_cap_m_s" => c.growth.max_consumption_rate_m_s = if value.is_nan() { None } else { Some(value) },
            "time_step_s" => c.time_step_s = value,
            "end_time_s" => c.end_time_s = value,
            "rng_seed" => match whole(value) {
                Some(v) => c.rng_seed = v,
                None => return fail(SoaksimStatus::InvalidArgument, "rng_seed must be a non-negative integer"),
            },
            "timeseries_stride" => match whole(value) {
                Some(v) => c.timeseries_stride = v as usize,
                None => return fail(SoaksimStatus::InvalidArgument, "timeseries_stride must be a non-negative integer"),
            },
            other => return fail(SoaksimStatus::InvalidArgument, format!("unknown numeric key '{other}'")),
        }
        SoaksimStatus::Ok
    })
}

/// Replaces the snapshot times.
///
/// # Safety
/// `config` must be a live handle and `times_s` point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_set_snapshot_times(
    config: *mut SoaksimConfig,
    times_s: *const f64,
    n: usize,
) -> SoaksimStatus {
    check_ptr!(config, times_s);
    guard(|| {
        (*config).inner.snapshot_times_s = std::slice::from_raw_parts(times_s, n).to_vec();
        SoaksimStatus::Ok
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_set_bins(config: *mut SoaksimConfig, nx: usize, ny: usize) -> SoaksimStatus {
    check_ptr!(config);
    guard(|| {
        (*config).inner.histogram_bins = (nx, ny);
        SoaksimStatus::Ok
    })
}

/// Returns `Ok`, or `InvalidConfig` with every violation in the message.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_validate(config: *const SoaksimConfig) -> SoaksimStatus {
    check_ptr!(config);
    guard(|| match validate_config(&(*config).inner).into_result() {
        Ok(()) => SoaksimStatus::Ok,
        Err(e) => from_error(e),
    })
}

/// # Safety
/// `config` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soaksim_config_free(config: *mut SoaksimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Opaque result of a particle simulation.
pub struct SoaksimRun {
    inner: RunOutput,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoaksimSample {
    pub time_s: f64,
    pub released: u64,
    pub in_agar: u64,
    pub consumed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoaksimEvent {
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoaksimGridKind {
    InAgar = 0,
    Consumed = 1,
}

/// Validates `config` and runs the particle simulator with `workers`
/// threads (0 = all cores).
///
/// # Safety
/// `config` must be a live handle and `out` a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run(config: *const SoaksimConfig, workers: usize, out: *mut *mut SoaksimRun) -> SoaksimStatus {
    check_ptr!(config, out);
    guard(|| match Simulator::new(&(*config).inner, workers).and_then(|s| s.run()) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(SoaksimRun { inner }));
            SoaksimStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Number of recorded time-series samples.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_series_len(run: *const SoaksimRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.series.len()
}

/// # Safety
/// `run` must be a live handle and `out` a writable [`SoaksimSample`].
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_sample(run: *const SoaksimRun, index: usize, out: *mut SoaksimSample) -> SoaksimStatus {
    check_ptr!(run, out);
    guard(|| {
        let s = &(*run).inner.series;
        if index >= s.len() {
            return fail(SoaksimStatus::OutOfRange, format!("sample {index} of {}", s.len()));
        }
        *out = SoaksimSample {
            time_s: s.times_s[index],
            released: s.released_counts[index],
            in_agar: s.in_agar_counts[index],
            consumed: s.consumed_counts[index],
        };
        SoaksimStatus::Ok
    })
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_snapshot_count(run: *const SoaksimRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.snapshots.len()
}

/// Copies snapshot `index` into `counts` (row-major, `nx * ny` values) and
/// reports its shape and time. Call with `counts = NULL` to query the shape.
///
/// # Safety
/// `run` must be a live handle, `counts` NULL or `len` writable values, and
/// the remaining out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_snapshot(
    run: *const SoaksimRun,
    index: usize,
    kind: SoaksimGridKind,
    counts: *mut u64,
    len: usize,
    nx: *mut usize,
    ny: *mut usize,
    time_s: *mut f64,
) -> SoaksimStatus {
    check_ptr!(run, nx, ny, time_s);
    guard(|| {
        let snaps = &(*run).inner.snapshots;
        let Some(snap) = snaps.get(index) else {
            return fail(SoaksimStatus::OutOfRange, format!("snapshot {index} of {}", snaps.len()));
        };
        let grid = match kind {
            SoaksimGridKind::InAgar => &snap.grid,
            SoaksimGridKind::Consumed => &snap.consumed_grid,
        };
        *nx = grid.nx;
        *ny = grid.ny;
        *time_s = snap.time_s;
        if !counts.is_null() {
            if len < grid.counts.len() {
                return fail(SoaksimStatus::OutOfRange, format!("buffer holds {len}, need {}", grid.counts.len()));
            }
            ptr::copy_nonoverlapping(grid.counts.as_ptr(), counts, grid.counts.len());
        }
        SoaksimStatus::Ok
    })
}

/// Number of consumption events.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_ledger_len(run: *const SoaksimRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).inner.ledger.len()
}

/// Copies up to `len` consumption events, in time order, starting at
/// `first`. Returns the number copied.
///
/// # Safety
/// `run` must be a live handle and `events` point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_ledger(
    run: *const SoaksimRun,
    first: usize,
    events: *mut SoaksimEvent,
    len: usize,
) -> usize {
    if run.is_null() || events.is_null() {
        return 0;
    }
    let ledger = &(*run).inner.ledger;
    let tail = ledger.get(first..).unwrap_or(&[]);
    let n = tail.len().min(len);
    for (i, e) in tail[..n].iter().enumerate() {
        *events.add(i) = SoaksimEvent { time_s: e.time_s, x_m: e.x_m, y_m: e.y_m };
    }
    n
}

/// # Safety
/// `run` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soaksim_run_free(run: *mut SoaksimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Opaque result of the finite-volume solver.
pub struct SoaksimOracle {
    inner: OracleOutput,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SoaksimOracleSample {
    pub time_s: f64,
    pub released_mol: f64,
    pub in_agar_mol: f64,
    pub consumed_mol: f64,
    pub residual_mol: f64,
}

/// Solves `config` on an `n_r` by `n_z` grid.
///
/// # Safety
/// `config` must be a live handle and `out` a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn soaksim_oracle_solve(
    config: *const SoaksimConfig,
    n_r: usize,
    n_z: usize,
    dt_pde_s: f64,
    auto_shrink: bool,
    out: *mut *mut SoaksimOracle,
) -> SoaksimStatus {
    check_ptr!(config, out);
    guard(|| {
        let cfg = &(*config).inner;
        match Grid::new(&cfg.geometry, n_r, n_z, dt_pde_s).and_then(|g| solve(cfg, g, SolveOptions { auto_shrink })) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SoaksimOracle { inner }));
                SoaksimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `oracle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_oracle_series_len(oracle: *const SoaksimOracle) -> usize {
    if oracle.is_null() {
        return 0;
    }
    (*oracle).inner.series.times_s.len()
}

/// # Safety
/// `oracle` must be a live handle and `out` a writable [`SoaksimOracleSample`].
#[no_mangle]
pub unsafe extern "C" fn soaksim_oracle_sample(
    oracle: *const SoaksimOracle,
    index: usize,
    out: *mut SoaksimOracleSample,
) -> SoaksimStatus {
    check_ptr!(oracle, out);
    guard(|| {
        let s = &(*oracle).inner.series;
        if index >= s.times_s.len() {
            return fail(SoaksimStatus::OutOfRange, format!("sample {index} of {}", s.times_s.len()));
        }
        *out = SoaksimOracleSample {
            time_s: s.times_s[index],
            released_mol: s.released_mol[index],
            in_agar_mol: s.in_agar_mol[index],
            consumed_mol: s.consumed_mol[index],
            residual_mol: s.residual_mol[index],
        };
        SoaksimStatus::Ok
    })
}

/// Time step the solver actually used, after any stability shrink.
///
/// # Safety
/// `oracle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soaksim_oracle_dt(oracle: *const SoaksimOracle) -> f64 {
    if oracle.is_null() {
        return f64::NAN;
    }
    (*oracle).inner.grid.dt_pde
}

/// # Safety
/// `oracle` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soaksim_oracle_free(oracle: *mut SoaksimOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}
