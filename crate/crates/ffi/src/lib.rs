//! C ABI over `co2occ`.
//!
//! Every fallible function returns a [`Co2occStatus`]; on failure the
//! message is available from [`co2occ_last_error_message`] on the same
//! thread. Models and datasets are opaque handles that must be released
//! with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use co2occ::cli::{self, ExperimentArgs, IntervalArgs};
use co2occ::ingest::{self, Dataset, IngestConfig};
use co2occ::modelsel::Task;
use co2occ::svm::SvmModel;
use co2occ::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Co2occStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Bad value, flag, configuration or non-UTF-8 string.
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    /// The data cannot support the request (single class, empty series).
    DegenerateData = 5,
    /// Model and data disagree on features or format version.
    Schema = 6,
    Dimension = 7,
    /// Internal error; the library state is unchanged.
    Panic = 99,
}

/// Trained classifier.
pub struct Co2occModel {
    inner: SvmModel,
}

/// Gridded room dataset.
pub struct Co2occDataset {
    inner: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> Co2occStatus {
    match err {
        Error::Io { .. } => Co2occStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => Co2occStatus::Parse,
        Error::Schema(_) => Co2occStatus::Schema,
        Error::Dimension { .. } => Co2occStatus::Dimension,
        e if e.is_degenerate_data() => Co2occStatus::DegenerateData,
        _ => Co2occStatus::InvalidArgument,
    }
}

struct Fail(Co2occStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> Co2occStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            Co2occStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            Co2occStatus::Panic
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(Co2occStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Fail(
            Co2occStatus::InvalidArgument,
            format!("`{name}` is not UTF-8"),
        )
    })
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn co2occ_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version contains a NUL"),
        };
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn co2occ_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a model saved by `co2occ train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_load(
    path: *const c_char,
    out: *mut *mut Co2occModel,
) -> Co2occStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let model = SvmModel::load(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(Co2occModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`co2occ_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_free(model: *mut Co2occModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_n_features(model: *const Co2occModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_n_classes(model: *const Co2occModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.classes.len())
}

/// Predicts the label of one raw (unnormalized) feature row.
///
/// # Safety
/// `features` must point to `n_features` doubles; `out_label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_predict(
    model: *const Co2occModel,
    features: *const f64,
    n_features: usize,
    out_label: *mut i64,
) -> Co2occStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out_arg(out_label, "out_label")?;
        let x = slice_arg(features, n_features, "features")?;
        *out = model.inner.predict_raw(x)?;
        Ok(())
    })
}

/// Predicts `n_rows` row-major raw feature rows into `out_labels`.
///
/// # Safety
/// `rows` must hold `n_rows * n_features` doubles and `out_labels` room
/// for `n_rows` values.
#[no_mangle]
pub unsafe extern "C" fn co2occ_model_predict_batch(
    model: *const Co2occModel,
    rows: *const f64,
    n_rows: usize,
    n_features: usize,
    out_labels: *mut i64,
) -> Co2occStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let total = n_rows.checked_mul(n_features).ok_or_else(|| {
            Fail(
                Co2occStatus::InvalidArgument,
                "n_rows * n_features overflows".into(),
            )
        })?;
        let x = slice_arg(rows, total, "rows")?;
        if n_rows > 0 && out_labels.is_null() {
            return Err(null("out_labels"));
        }
        let mut labels = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            labels.push(
                model
                    .inner
                    .predict_raw(&x[r * n_features..(r + 1) * n_features])?,
            );
        }
        if n_rows > 0 {
            std::slice::from_raw_parts_mut(out_labels, n_rows).copy_from_slice(&labels);
        }
        Ok(())
    })
}

/// Loads `sensors.csv`, `labels.csv` and `room.json` from `dir` and grids
/// them at `target_interval_s`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_dataset_load(
    dir: *const c_char,
    native_interval_s: u32,
    target_interval_s: u32,
    out: *mut *mut Co2occDataset,
) -> Co2occStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let dir = str_arg(dir, "dir")?;
        let cfg = IngestConfig {
            native_interval_s,
            target_interval_s,
        };
        let ds = ingest::load_dataset_dir(&PathBuf::from(dir), &cfg)?;
        *out = Box::into_raw(Box::new(Co2occDataset { inner: ds }));
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must come from [`co2occ_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn co2occ_dataset_free(ds: *mut Co2occDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn co2occ_dataset_len(ds: *const Co2occDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Copies the occupant counts into `out` (capacity `cap`) and stores the
/// total count in `out_len`. Fails with `Dimension` when `cap` is too small.
///
/// # Safety
/// `out` must have room for `cap` values; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_dataset_occupants(
    ds: *const Co2occDataset,
    out: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> Co2occStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        let len = out_arg(out_len, "out_len")?;
        let labels = &ds.inner.labels;
        *len = labels.len();
        if cap < labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                got: cap,
            }
            .into());
        }
        if !labels.is_empty() {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, labels.len()).copy_from_slice(labels);
        }
        Ok(())
    })
}

/// `exp(-gamma * |x - z|^2)` for two vectors of length `dim`.
///
/// # Safety
/// `x` and `z` must hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_rbf_kernel(
    x: *const f64,
    z: *const f64,
    dim: usize,
    gamma: f64,
    out: *mut f64,
) -> Co2occStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = co2occ::svm::rbf_kernel(slice_arg(x, dim, "x")?, slice_arg(z, dim, "z")?, gamma)?;
        Ok(())
    })
}

/// Spearman rank correlation with average ranks for ties.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn co2occ_srocc(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut f64,
) -> Co2occStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = co2occ::eval::srocc(slice_arg(a, n, "a")?, slice_arg(b, n, "b")?)?;
        Ok(())
    })
}

/// Runs the simulator from JSON config and schedule files and writes the
/// sensor, label, room and manifest files into `out_dir`.
///
/// # Safety
/// All arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn co2occ_simulate(
    config_path: *const c_char,
    schedule_path: *const c_char,
    out_dir: *const c_char,
) -> Co2occStatus {
    guard(|| {
        let config = PathBuf::from(str_arg(config_path, "config_path")?);
        let schedule = PathBuf::from(str_arg(schedule_path, "schedule_path")?);
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        cli::cmd_simulate(&config, &schedule, &out)?;
        Ok(())
    })
}

/// Runs the full evaluation protocol on one room directory and writes the
/// report JSON to `out_path`. `features` is a comma list such as
/// `"avg,fd,vd"`; `task` is `"state"` or `"quantity"`.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn co2occ_experiment(
    data_dir: *const c_char,
    features: *const c_char,
    task: *const c_char,
    interval_s: u32,
    rounds: usize,
    seed: u64,
    out_path: *const c_char,
) -> Co2occStatus {
    guard(|| {
        let task: Task = str_arg(task, "task")?.parse()?;
        let args = ExperimentArgs {
            data: vec![PathBuf::from(str_arg(data_dir, "data_dir")?)],
            features: vec![str_arg(features, "features")?.to_string()],
            task,
            grid_args: IntervalArgs {
                interval: interval_s,
                native_interval: 15,
            },
            rounds,
            seed,
            grid: None,
            repeats: 5,
            out: PathBuf::from(str_arg(out_path, "out_path")?),
        };
        cli::cmd_experiment(&args)?;
        Ok(())
    })
}
