//! C interface to the `boars` engine.
//!
//! Every function returns a [`BoarsStatus`]. On failure the message is
//! available from [`boars_last_error`] on the same thread until the next
//! call. Handles are opaque and must be released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use boars::engine::{BoConfig, Experiment, Pending, Status};
use boars::grid::{generate_synthetic_grid, load_dataset, save_dataset, SimulatedInstrument, SpectralGrid, SyntheticConfig};
use boars::recommender::{Preference, Vote};
use boars::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoarsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The call is not valid in the current run state.
    State = 3,
    Io = 4,
    Format = 5,
    /// Factorization, training or other numerical failure.
    Numeric = 6,
    BufferTooSmall = 7,
    VoterAbort = 8,
    CandidatesExhausted = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoarsRunStatus {
    Running = 0,
    AwaitingHuman = 1,
    Finished = 2,
    Aborted = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoarsPendingKind {
    None = 0,
    Vote = 1,
    Satisfaction = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoarsMapKind {
    Mean = 0,
    Variance = 1,
    /// Only after the target is frozen.
    Truth = 2,
    Error = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BoarsPending {
    pub kind: BoarsPendingKind,
    pub id: u64,
    pub row: usize,
    pub col: usize,
}

pub struct BoarsGrid(Arc<SpectralGrid>);

pub struct BoarsExperiment(Experiment);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> BoarsStatus {
    match e {
        Error::Io { .. } => BoarsStatus::Io,
        Error::Format(_) | Error::Json(_) => BoarsStatus::Format,
        Error::Dimension(_) | Error::NonFinite(_) | Error::InvalidArgument(_) | Error::IndexOutOfRange { .. } => {
            BoarsStatus::InvalidArgument
        }
        Error::State(_) | Error::MissingTarget => BoarsStatus::State,
        Error::DegenerateSpectrum(_) | Error::Factorization { .. } | Error::NonFiniteLoss { .. } | Error::Surrogate { .. } => {
            BoarsStatus::Numeric
        }
        Error::CandidatesExhausted => BoarsStatus::CandidatesExhausted,
        Error::VoterAbort(_) => BoarsStatus::VoterAbort,
    }
}

enum Fail {
    Null(&'static str),
    Small { needed: usize },
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BoarsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BoarsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            BoarsStatus::NullPointer
        }
        Ok(Err(Fail::Small { needed })) => {
            set_error(format!("buffer too small; {needed} elements needed"));
            BoarsStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BoarsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn string(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail::Core(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

/// Copies `values` into `buf`. `needed` always receives the full length.
unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if !needed.is_null() {
        needed.write(values.len());
    }
    if buf.is_null() || len < values.len() {
        return Err(Fail::Small { needed: values.len() });
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next `boars_` call on this thread.
#[no_mangle]
pub extern "C" fn boars_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn boars_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates the default synthetic grid with the given seed. `size` and
/// `correlation` override the defaults when positive / non-negative.
///
/// # Safety
/// `grid_out` must be valid for writes; it is set to NULL on failure.
#[no_mangle]
pub unsafe extern "C" fn boars_grid_synthetic(seed: u64, size: usize, correlation: f64, grid_out: *mut *mut BoarsGrid) -> BoarsStatus {
    guard(|| {
        out(grid_out, ptr::null_mut(), "grid_out")?;
        let mut config = SyntheticConfig::default();
        if size > 0 {
            config.height = size;
            config.width = size;
        }
        if correlation >= 0.0 {
            config.correlation = correlation;
        }
        let grid = generate_synthetic_grid(&config, seed)?;
        out(grid_out, Box::into_raw(Box::new(BoarsGrid(Arc::new(grid)))), "grid_out")
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `grid_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_grid_load(path: *const c_char, grid_out: *mut *mut BoarsGrid) -> BoarsStatus {
    guard(|| {
        out(grid_out, ptr::null_mut(), "grid_out")?;
        let grid = load_dataset(PathBuf::from(string(path, "path")?))?;
        out(grid_out, Box::into_raw(Box::new(BoarsGrid(Arc::new(grid)))), "grid_out")
    })
}

/// # Safety
/// `grid` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn boars_grid_save(grid: *const BoarsGrid, path: *const c_char) -> BoarsStatus {
    guard(|| {
        let grid = deref(grid, "grid")?;
        save_dataset(&grid.0, PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live handle; the out pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_grid_dims(
    grid: *const BoarsGrid,
    height: *mut usize,
    width: *mut usize,
    spectrum_len: *mut usize,
) -> BoarsStatus {
    guard(|| {
        let g = &deref(grid, "grid")?.0;
        out(height, g.height(), "height")?;
        out(width, g.width(), "width")?;
        out(spectrum_len, g.spectrum_len(), "spectrum_len")
    })
}

/// # Safety
/// `grid` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boars_grid_free(grid: *mut BoarsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Creates an experiment over `grid`. `config_json` is a JSON run
/// configuration; NULL or missing fields take the defaults. The grid handle
/// may be freed afterwards.
///
/// # Safety
/// `grid` must be a live handle; `config_json` NULL or NUL-terminated;
/// `exp_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_new(
    grid: *const BoarsGrid,
    config_json: *const c_char,
    exp_out: *mut *mut BoarsExperiment,
) -> BoarsStatus {
    guard(|| {
        out(exp_out, ptr::null_mut(), "exp_out")?;
        let grid = deref(grid, "grid")?.0.clone();
        let config: BoConfig = if config_json.is_null() {
            BoConfig::default()
        } else {
            serde_json::from_str(&string(config_json, "config_json")?).map_err(Error::from)?
        };
        let exp = Experiment::new(config, Box::new(SimulatedInstrument::new(grid)))?;
        out(exp_out, Box::into_raw(Box::new(BoarsExperiment(exp))), "exp_out")
    })
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_free(exp: *mut BoarsExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

fn run_status(s: Status) -> BoarsRunStatus {
    match s {
        Status::Running => BoarsRunStatus::Running,
        Status::AwaitingHuman => BoarsRunStatus::AwaitingHuman,
        Status::Finished => BoarsRunStatus::Finished,
        Status::Aborted => BoarsRunStatus::Aborted,
    }
}

/// Does one unit of work. `status_out` may be NULL.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_step(exp: *mut BoarsExperiment, status_out: *mut BoarsRunStatus) -> BoarsStatus {
    guard(|| {
        let s = deref_mut(exp, "exp")?.0.step()?;
        if !status_out.is_null() {
            status_out.write(run_status(s));
        }
        Ok(())
    })
}

/// Steps until a human answer is needed or the run ends.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_advance(exp: *mut BoarsExperiment, status_out: *mut BoarsRunStatus) -> BoarsStatus {
    guard(|| {
        let s = deref_mut(exp, "exp")?.0.advance()?;
        if !status_out.is_null() {
            status_out.write(run_status(s));
        }
        Ok(())
    })
}

/// # Safety
/// `exp` must be a live handle; `pending_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_pending(exp: *const BoarsExperiment, pending_out: *mut BoarsPending) -> BoarsStatus {
    guard(|| {
        let p = match deref(exp, "exp")?.0.pending() {
            None => BoarsPending { kind: BoarsPendingKind::None, id: 0, row: 0, col: 0 },
            Some(Pending::Vote { id, index, .. }) => {
                BoarsPending { kind: BoarsPendingKind::Vote, id: *id, row: index.row, col: index.col }
            }
            Some(Pending::Satisfaction { id, index }) => {
                BoarsPending { kind: BoarsPendingKind::Satisfaction, id: *id, row: index.row, col: index.col }
            }
        };
        out(pending_out, p, "pending_out")
    })
}

/// Copies the spectrum awaiting a vote into `buf`.
///
/// # Safety
/// `exp` must be a live handle; `buf` valid for `len` writes or NULL;
/// `needed` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_pending_spectrum(
    exp: *const BoarsExperiment,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> BoarsStatus {
    guard(|| match deref(exp, "exp")?.0.pending() {
        Some(Pending::Vote { spectrum, .. }) => copy_out(&spectrum.values, buf, len, needed),
        _ => Err(Error::State("no spectrum is awaiting a vote".into()).into()),
    })
}

/// Answers the pending vote. `pending_id` must match the pending
/// interaction, so a repeated call fails instead of voting twice.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_vote(exp: *mut BoarsExperiment, pending_id: u64, vote: i32, preference: f64) -> BoarsStatus {
    guard(|| {
        let exp = deref_mut(exp, "exp")?;
        exp.0.submit_vote(Some(pending_id), Vote::new(vote.into())?, Preference::new(preference)?)?;
        Ok(())
    })
}

/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_satisfaction(exp: *mut BoarsExperiment, pending_id: u64, satisfied: bool) -> BoarsStatus {
    guard(|| {
        deref_mut(exp, "exp")?.0.submit_satisfaction(Some(pending_id), satisfied)?;
        Ok(())
    })
}

/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_abort(exp: *mut BoarsExperiment) -> BoarsStatus {
    guard(|| {
        deref_mut(exp, "exp")?.0.abort();
        Ok(())
    })
}

/// # Safety
/// `exp` must be a live handle; `n_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_explored_count(exp: *const BoarsExperiment, n_out: *mut usize) -> BoarsStatus {
    guard(|| out(n_out, deref(exp, "exp")?.0.explored().len(), "n_out"))
}

/// Copies the current target into `buf`; `State` while none exists.
///
/// # Safety
/// As for [`boars_experiment_pending_spectrum`].
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_target(
    exp: *const BoarsExperiment,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> BoarsStatus {
    guard(|| {
        let target = deref(exp, "exp")?.0.target_state().target_ref().ok_or(Error::MissingTarget)?;
        copy_out(target, buf, len, needed)
    })
}

/// Copies the latest map of `kind` (row-major over the candidate lattice).
///
/// # Safety
/// `exp` must be a live handle; `buf` valid for `len` writes or NULL;
/// `rows`, `cols` and `needed` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_map(
    exp: *const BoarsExperiment,
    kind: BoarsMapKind,
    buf: *mut f64,
    len: usize,
    rows: *mut usize,
    cols: *mut usize,
    needed: *mut usize,
) -> BoarsStatus {
    guard(|| {
        let maps = deref(exp, "exp")?.0.latest_maps().ok_or_else(|| Error::State("no maps yet".into()))?;
        if !rows.is_null() {
            rows.write(maps.rows);
        }
        if !cols.is_null() {
            cols.write(maps.cols);
        }
        let values = match kind {
            BoarsMapKind::Mean => Some(&maps.mean),
            BoarsMapKind::Variance => Some(&maps.variance),
            BoarsMapKind::Truth => maps.truth.as_ref(),
            BoarsMapKind::Error => maps.error.as_ref(),
        }
        .ok_or(Error::MissingTarget)?;
        copy_out(values, buf, len, needed)
    })
}

/// Final whole-map MSE; `State` until the run has finished with a frozen
/// target.
///
/// # Safety
/// `exp` must be a live handle; `mse_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_mse(exp: *const BoarsExperiment, mse_out: *mut f64) -> BoarsStatus {
    guard(|| {
        let mse = deref(exp, "exp")?.0.record().mse().ok_or_else(|| Error::State("no final MSE".into()))?;
        out(mse_out, mse, "mse_out")
    })
}

/// Writes the run record directory.
///
/// # Safety
/// `exp` must be a live handle; `dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn boars_experiment_export(exp: *const BoarsExperiment, dir: *const c_char) -> BoarsStatus {
    guard(|| {
        let exp = deref(exp, "exp")?;
        let dir = PathBuf::from(string(dir, "dir")?);
        exp.0.record().export(&dir)?;
        Ok(())
    })
}
