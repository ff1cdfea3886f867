//! C interface to `rsm-core`.
//!
//! Every function returns an [`RsmStatus`]. On failure a message is kept per thread and can be
//! read with [`rsm_last_error`]. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rsm_core::data::{load_csv, load_json, training_instances, LogRow, Manifest, Schema};
use rsm_core::eval::{RsmScorer, Scorer};
use rsm_core::learner::{fit, LearnerConfig};
use rsm_core::markov::{stationary, StochasticMatrix};
use rsm_core::topology::{encode_rank_topology, Direction, WeightVector};
use rsm_core::RsmError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotStochastic = 3,
    NoUniqueStationary = 4,
    Numerical = 5,
    Data = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&RsmError> for RsmStatus {
    fn from(e: &RsmError) -> Self {
        match e {
            RsmError::NotStochastic(_) | RsmError::NotDistribution(_) => RsmStatus::NotStochastic,
            RsmError::NoUniqueStationary => RsmStatus::NoUniqueStationary,
            RsmError::Io(_) => RsmStatus::Io,
            e if e.is_config_error() => RsmStatus::InvalidArgument,
            e if e.is_data_error() => RsmStatus::Data,
            RsmError::Shape(_) | RsmError::ContextTooSmall(_) | RsmError::UnknownItem(_) => RsmStatus::InvalidArgument,
            _ => RsmStatus::Numerical,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(RsmStatus, String);

impl From<RsmError> for Failure {
    fn from(e: RsmError) -> Self {
        Failure(RsmStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: RsmStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, clearing the last error on success and recording it otherwise.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RsmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RsmStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(RsmStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(RsmStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return fail(RsmStatus::NullPointer, format!("{what} is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => fail(RsmStatus::InvalidArgument, format!("{what} is not UTF-8")),
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().map_or_else(|| fail(RsmStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Message for the last failed call on this thread, or null after a success.
///
/// The pointer stays valid until the next `rsm_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Stationary distribution of the row-major `n x n` matrix `p`, written to `out[0..n]`.
///
/// # Safety
/// `p` must point to `n * n` doubles and `out` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsm_stationary(p: *const f64, n: usize, out: *mut f64) -> RsmStatus {
    guard(|| {
        if n == 0 {
            return fail(RsmStatus::InvalidArgument, "n must be positive");
        }
        let entries = slice(p, n.checked_mul(n).ok_or(Failure(RsmStatus::InvalidArgument, "n too large".into()))?, "p")?;
        let out = slice_mut(out, n, "out")?;
        let dist = stationary(&StochasticMatrix::from_row_slice(n, entries)?)?;
        out.copy_from_slice(dist.as_slice());
        Ok(())
    })
}

/// Rank-encoded topology of `values`, written row-major to `out[0..n*n]`.
///
/// # Safety
/// `values` must point to `n` doubles and `out` to `n * n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rsm_encode_rank_topology(values: *const f64, n: usize, higher_is_better: bool, out: *mut f64) -> RsmStatus {
    guard(|| {
        let values = slice(values, n, "values")?;
        let out = slice_mut(out, n.checked_mul(n).ok_or(Failure(RsmStatus::InvalidArgument, "n too large".into()))?, "out")?;
        let dir = if higher_is_better { Direction::HigherIsBetter } else { Direction::LowerIsBetter };
        let m = encode_rank_topology(values, dir)?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = m.get(i, j);
            }
        }
        Ok(())
    })
}

/// Loaded click log with its schema.
pub struct RsmDataset {
    schema: Schema,
    rows: Vec<LogRow>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure(RsmStatus::Io, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure(RsmStatus::Data, format!("{}: {e}", path.display())))
}

fn load(data: &Path, schema: Option<&Path>) -> Result<RsmDataset, Failure> {
    let (schema, csv) = match schema {
        None if data.extension().is_some_and(|x| x == "json") => {
            // either a manifest or a self-describing dataset
            if let Ok(m) = read_json::<Manifest>(data) {
                (m.schema, data.parent().unwrap_or(Path::new(".")).join(m.data_file))
            } else {
                let ds = load_json(data)?;
                return Ok(RsmDataset { schema: ds.schema, rows: ds.rows });
            }
        }
        None => return fail(RsmStatus::InvalidArgument, "a CSV log needs a schema file"),
        Some(s) => (read_json::<Schema>(s)?, data.to_path_buf()),
    };
    schema.validate()?;
    let loaded = load_csv(&csv, &schema)?;
    if loaded.rows.is_empty() {
        return Err(RsmError::EmptyDataset.into());
    }
    Ok(RsmDataset { schema, rows: loaded.rows })
}

/// Loads a dataset. `data` is a manifest, a JSON dataset, or a CSV log; `schema` is a JSON
/// schema file required for CSV and ignored (may be null) otherwise.
///
/// # Safety
/// `data` and a non-null `schema` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsm_dataset_load(data: *const c_char, schema: *const c_char, out: *mut *mut RsmDataset) -> RsmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsmStatus::NullPointer, "out is null");
        }
        let data = path(data, "data")?;
        let schema = if schema.is_null() { None } else { Some(path(schema, "schema")?) };
        *out = Box::into_raw(Box::new(load(data, schema)?));
        Ok(())
    })
}

/// Number of contexts, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsm_dataset_len(dataset: *const RsmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.rows.len())
}

/// Number of topologies per context, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsm_dataset_num_features(dataset: *const RsmDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.schema.k())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsm_dataset_free(dataset: *mut RsmDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsmFitConfig {
    pub lambda: f64,
    pub eta: f64,
    pub halt_eps: f64,
    pub max_iters: usize,
}

/// Default learner settings.
#[no_mangle]
pub extern "C" fn rsm_fit_config_default() -> RsmFitConfig {
    let d = LearnerConfig::default();
    RsmFitConfig { lambda: d.lambda, eta: d.eta, halt_eps: d.halt_eps, max_iters: d.max_iters }
}

/// Learned weights together with what is needed to score new contexts.
pub struct RsmModel {
    scorer: RsmScorer,
    err_s: f64,
    converged: bool,
    iterations: usize,
}

/// Learns weights from `dataset`. A null `config` means the defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsm_fit(dataset: *const RsmDataset, config: *const RsmFitConfig, out: *mut *mut RsmModel) -> RsmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsmStatus::NullPointer, "out is null");
        }
        let ds = handle(dataset, "dataset")?;
        let c = config.as_ref().copied().unwrap_or_else(|| rsm_fit_config_default());
        let config = LearnerConfig { lambda: c.lambda, eta: c.eta, halt_eps: c.halt_eps, max_iters: c.max_iters, ..Default::default() };
        config.validate()?;
        let r = fit(&training_instances(&ds.rows, &ds.schema)?, &config)?;
        let scorer = RsmScorer { weights: r.weights, lambda: c.lambda, schema: ds.schema.clone() };
        *out = Box::into_raw(Box::new(RsmModel { scorer, err_s: r.err_s, converged: r.converged, iterations: r.iterations }));
        Ok(())
    })
}

/// Builds a model from reporting-form weights (non-negative, summing to one).
///
/// # Safety
/// `weights` must point to `k` doubles matching the dataset's feature count; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsm_model_from_weights(
    dataset: *const RsmDataset,
    weights: *const f64,
    k: usize,
    lambda: f64,
    out: *mut *mut RsmModel,
) -> RsmStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsmStatus::NullPointer, "out is null");
        }
        let ds = handle(dataset, "dataset")?;
        if k != ds.schema.k() {
            return fail(RsmStatus::InvalidArgument, format!("{k} weights for {} features", ds.schema.k()));
        }
        rsm_core::topology::check_lambda(lambda)?;
        let weights = WeightVector::reporting(slice(weights, k, "weights")?.to_vec())?;
        let scorer = RsmScorer { weights, lambda, schema: ds.schema.clone() };
        *out = Box::into_raw(Box::new(RsmModel { scorer, err_s: f64::NAN, converged: false, iterations: 0 }));
        Ok(())
    })
}

/// Copies the reporting-form weights into `out[0..len]`; `len` must equal the feature count.
///
/// # Safety
/// `model` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rsm_model_weights(model: *const RsmModel, out: *mut f64, len: usize) -> RsmStatus {
    guard(|| {
        let w = handle(model, "model")?.scorer.weights.as_slice();
        if len < w.len() {
            return fail(RsmStatus::BufferTooSmall, format!("need {} slots", w.len()));
        }
        slice_mut(out, w.len(), "out")?.copy_from_slice(w);
        Ok(())
    })
}

/// Mean absolute residual on the training set, iteration count and convergence flag.
/// Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsm_model_fit_info(model: *const RsmModel, err_s: *mut f64, iterations: *mut usize, converged: *mut bool) -> RsmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if let Some(p) = err_s.as_mut() {
            *p = m.err_s;
        }
        if let Some(p) = iterations.as_mut() {
            *p = m.iterations;
        }
        if let Some(p) = converged.as_mut() {
            *p = m.converged;
        }
        Ok(())
    })
}

/// Scores the items of context `row` of `dataset` in file order. `*written` receives the item count.
///
/// # Safety
/// Handles must be live; `out` must hold `cap` doubles and `written` be writable.
#[no_mangle]
pub unsafe extern "C" fn rsm_model_score_context(
    model: *const RsmModel,
    dataset: *const RsmDataset,
    row: usize,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> RsmStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        if written.is_null() {
            return fail(RsmStatus::NullPointer, "written is null");
        }
        let Some(r) = ds.rows.get(row) else {
            return fail(RsmStatus::InvalidArgument, format!("row {row} out of {}", ds.rows.len()));
        };
        *written = r.items.len();
        if cap < r.items.len() {
            return fail(RsmStatus::BufferTooSmall, format!("need {} slots", r.items.len()));
        }
        let scores = m.scorer.score_row(r)?;
        slice_mut(out, scores.len(), "out")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsm_model_free(model: *mut RsmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
