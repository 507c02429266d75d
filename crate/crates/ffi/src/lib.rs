//! C ABI over `sparsemix`.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free` function. Every fallible call returns an [`SmStatus`]
//! and, on failure, records a message readable through [`sm_last_error`] on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparsemix::evaluation::adjusted_rand_index;
use sparsemix::sparse::load_dataset;
use sparsemix::synthetic::{analytic_costs, MixtureSpec};
use sparsemix::{
    run_restarts, Error, Format, InitStrategy, ModelConfig, OptimizerReport, SparseBinaryDataset,
    SparseRow,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    Io = 2,
    Parse = 3,
    InvalidArgument = 4,
    Empty = 5,
    Panic = 6,
}

/// Input file layouts accepted by [`sm_dataset_load`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmFormat {
    Svmlight = 0,
    DenseCsv = 1,
}

/// Initial partition strategies for [`SmConfig::init`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmInit {
    Seeded = 0,
    Random = 1,
}

/// Clustering parameters. Fill with [`sm_config_default`] before editing.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SmConfig {
    pub threshold: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub k_init: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// One of [`SmInit`].
    pub init: i32,
    pub shuffle: bool,
    pub raw_pseudocode_gain: bool,
}

pub struct SmDataset {
    inner: SparseBinaryDataset,
}

pub struct SmResult {
    report: OptimizerReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SmStatus {
    match e {
        Error::Io { .. } => SmStatus::Io,
        Error::Parse { .. } | Error::IndexOutOfRange { .. } | Error::InvalidRow(_) => SmStatus::Parse,
        Error::EmptyDataset | Error::EmptyCluster => SmStatus::Empty,
        _ => SmStatus::InvalidArgument,
    }
}

fn fail(status: SmStatus, message: impl Into<String>) -> SmStatus {
    set_error(message.into());
    status
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), SmStatus>) -> SmStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SmStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SmStatus::Panic, message)
        }
    }
}

fn lift<T>(r: sparsemix::Result<T>) -> Result<T, SmStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), SmStatus> {
    if p.is_null() {
        Err(fail(SmStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn to_model_config(c: &SmConfig) -> Result<ModelConfig, SmStatus> {
    let init = match c.init {
        0 => InitStrategy::Seeded,
        1 => InitStrategy::Random,
        other => return Err(fail(SmStatus::InvalidArgument, format!("unknown init {other}"))),
    };
    let config = ModelConfig {
        threshold: c.threshold,
        beta: c.beta,
        epsilon: c.epsilon,
        k_init: c.k_init,
        restarts: c.restarts,
        max_iter: c.max_iter,
        seed: c.seed,
        init,
        shuffle: c.shuffle,
        raw_pseudocode_gain: c.raw_pseudocode_gain,
    };
    lift(config.validate())?;
    Ok(config)
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be null or point to writable memory for one `SmConfig`.
#[no_mangle]
pub unsafe extern "C" fn sm_config_default(out: *mut SmConfig) -> SmStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = ModelConfig::default();
        *out = SmConfig {
            threshold: d.threshold,
            beta: d.beta,
            epsilon: d.epsilon,
            k_init: d.k_init,
            restarts: d.restarts,
            max_iter: d.max_iter,
            seed: d.seed,
            init: SmInit::Seeded as i32,
            shuffle: d.shuffle,
            raw_pseudocode_gain: d.raw_pseudocode_gain,
        };
        Ok(())
    })
}

/// Loads a dataset. `format` is one of [`SmFormat`]; `dim` of 0 infers the
/// dimension from the data.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sm_dataset_load(
    path: *const c_char,
    format: i32,
    dim: usize,
    out: *mut *mut SmDataset,
) -> SmStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let format = match format {
            0 => Format::SvmlightSparse,
            1 => Format::DenseCsv,
            other => return Err(fail(SmStatus::InvalidArgument, format!("unknown format {other}"))),
        };
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SmStatus::InvalidArgument, "path is not UTF-8"))?;
        let loaded = lift(load_dataset(path, format, (dim > 0).then_some(dim)))?;
        *out = Box::into_raw(Box::new(SmDataset { inner: loaded.dataset }));
        Ok(())
    })
}

/// Builds a dataset from compressed rows: row `i` holds the zero-based,
/// strictly increasing column indices `indices[offsets[i] .. offsets[i + 1]]`.
/// `offsets` has `n_rows + 1` entries.
///
/// # Safety
/// `offsets` must point to `n_rows + 1` values and `indices` to at least
/// `offsets[n_rows]` values (it may be null when that is 0).
#[no_mangle]
pub unsafe extern "C" fn sm_dataset_from_rows(
    dim: usize,
    indices: *const u32,
    offsets: *const usize,
    n_rows: usize,
    out: *mut *mut SmDataset,
) -> SmStatus {
    guard(|| {
        non_null(offsets, "offsets")?;
        non_null(out, "out")?;
        let offsets = std::slice::from_raw_parts(offsets, n_rows + 1);
        let total = offsets[n_rows];
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(fail(SmStatus::InvalidArgument, "offsets must start at 0 and not decrease"));
        }
        let indices = if total == 0 {
            &[][..]
        } else {
            non_null(indices, "indices")?;
            std::slice::from_raw_parts(indices, total)
        };
        let rows = offsets
            .windows(2)
            .map(|w| SparseRow::new(indices[w[0]..w[1]].to_vec()))
            .collect::<sparsemix::Result<Vec<_>>>();
        let data = lift(rows.and_then(|rows| SparseBinaryDataset::new(dim, rows)))?;
        *out = Box::into_raw(Box::new(SmDataset { inner: data }));
        Ok(())
    })
}

/// # Safety
/// `data` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_dataset_free(data: *mut SmDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_dataset_len(data: *const SmDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_dataset_dim(data: *const SmDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.dim())
}

/// Runs the restarted optimizer. A null `config` uses the defaults.
///
/// # Safety
/// `data` must be a live handle, `config` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sm_cluster(
    data: *const SmDataset,
    config: *const SmConfig,
    out: *mut *mut SmResult,
) -> SmStatus {
    guard(|| {
        non_null(data, "data")?;
        non_null(out, "out")?;
        let config = match config.as_ref() {
            Some(c) => to_model_config(c)?,
            None => ModelConfig::default(),
        };
        let report = lift(run_restarts(&(*data).inner, &config))?;
        *out = Box::into_raw(Box::new(SmResult { report }));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from [`sm_cluster`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_result_free(result: *mut SmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_result_num_clusters(result: *const SmResult) -> usize {
    result.as_ref().map_or(0, |r| r.report.final_partition.num_clusters())
}

/// Objective value in bits per row; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_result_total_cost(result: *const SmResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.report.total_cost)
}

/// Copies cluster ids (0-based, dense) into `out`, which holds `len` slots;
/// `len` must equal the row count.
///
/// # Safety
/// `result` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sm_result_assignment(
    result: *const SmResult,
    out: *mut usize,
    len: usize,
) -> SmStatus {
    guard(|| {
        non_null(result, "result")?;
        non_null(out, "out")?;
        let assignment = (*result).report.final_partition.assignment();
        if assignment.len() != len {
            return Err(fail(
                SmStatus::InvalidArgument,
                format!("buffer holds {len} ids, result has {}", assignment.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(assignment);
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must each point to `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_adjusted_rand_index(
    a: *const i64,
    b: *const i64,
    n: usize,
    out: *mut f64,
) -> SmStatus {
    guard(|| {
        non_null(a, "a")?;
        non_null(b, "b")?;
        non_null(out, "out")?;
        let a = std::slice::from_raw_parts(a, n);
        let b = std::slice::from_raw_parts(b, n);
        *out = lift(adjusted_rand_index(a, b))?;
        Ok(())
    })
}

/// Expected per-row cost of one cluster versus two for the two-source block
/// mixture; `two_wins` is set when two clusters are strictly cheaper.
///
/// # Safety
/// Output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sm_analytic_costs(
    p: f64,
    alpha: f64,
    d: usize,
    dim: usize,
    omega: f64,
    cost_one: *mut f64,
    cost_two: *mut f64,
    two_wins: *mut bool,
) -> SmStatus {
    guard(|| {
        non_null(cost_one, "cost_one")?;
        non_null(cost_two, "cost_two")?;
        non_null(two_wins, "two_wins")?;
        let spec = MixtureSpec { p, alpha, d, dim, omega, n: 1 };
        let costs = lift(analytic_costs(&spec))?;
        *cost_one = costs.cost_one;
        *cost_two = costs.cost_two;
        *two_wins = costs.cost_two < costs.cost_one;
        Ok(())
    })
}
