//! C ABI for drocox.
//!
//! Datasets and models are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`DrocoxStatus`]; on failure the message is kept per thread and can be
//! read with [`drocox_last_error`]. Output pointers are written only on
//! success. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use drocox::data::{generate_synthetic, load_csv, CsvSchema, Dataset, SyntheticConfig};
use drocox::metrics::c_index;
use drocox::model::{Checkpoint, RiskModel};
use drocox::train::{train, TrainConfig};
use drocox::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrocoxStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Bad input data or configuration.
    InvalidInput = 3,
    /// File could not be read or written.
    Io = 4,
    /// Numeric failure or aborted training.
    Numeric = 5,
    /// The requested metric is undefined for this data.
    Undefined = 6,
    /// Caller buffer is too small; the message states the required length.
    BufferTooSmall = 7,
    /// Internal panic; the handle arguments should be considered poisoned.
    Panic = 8,
}

/// Opaque dataset handle.
pub struct DrocoxDataset(Dataset);

/// Opaque model handle. Keeps the training feature names for checkpoints.
pub struct DrocoxModel {
    model: RiskModel,
    feature_names: Vec<String>,
    seed: u64,
    config: serde_json::Value,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DrocoxStatus {
    match err.root() {
        Error::Io { .. } => DrocoxStatus::Io,
        Error::UndefinedMetric(_) => DrocoxStatus::Undefined,
        e if e.is_usage() => DrocoxStatus::InvalidInput,
        Error::Contract(_) => DrocoxStatus::InvalidInput,
        _ => DrocoxStatus::Numeric,
    }
}

/// Runs `f`, converting errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (DrocoxStatus, String)>) -> DrocoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DrocoxStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DrocoxStatus::Panic
        }
    }
}

fn lift<T>(r: drocox::Result<T>) -> Result<T, (DrocoxStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DrocoxStatus, String) {
    (DrocoxStatus::NullPointer, format!("{what} is null"))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (DrocoxStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DrocoxStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (DrocoxStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (DrocoxStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn drocox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated)
/// and returns the full message length without the terminator. Returns 0 when
/// there is no error. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn drocox_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && cap > 0 {
                let n = bytes.len().min(cap - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Generates a synthetic dataset. `mixture_weights` has `k` entries and
/// `coefficients` is row-major `k × feature_dim`.
///
/// # Safety
/// Array arguments must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_synthetic(
    n: usize,
    k: usize,
    mixture_weights: *const f64,
    coefficients: *const f64,
    feature_dim: usize,
    censoring_rate: f64,
    seed: u64,
    out: *mut *mut DrocoxDataset,
) -> DrocoxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pi = slice_arg(mixture_weights, k, "mixture_weights")?.to_vec();
        let coef = slice_arg(coefficients, k * feature_dim, "coefficients")?;
        let cfg = SyntheticConfig {
            n,
            k,
            mixture_weights: pi,
            coefficients: coef.chunks(feature_dim.max(1)).map(<[f64]>::to_vec).collect(),
            feature_dim,
            censoring_rate,
            seed,
        };
        let ds = lift(generate_synthetic(&cfg))?;
        *out = Box::into_raw(Box::new(DrocoxDataset(ds)));
        Ok(())
    })
}

/// Loads a CSV. `time_col` and `event_col` may be null for the defaults
/// `time` and `status`; `group_cols` is a comma-separated list or null.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_load_csv(
    path: *const c_char,
    time_col: *const c_char,
    event_col: *const c_char,
    group_cols: *const c_char,
    out: *mut *mut DrocoxDataset,
) -> DrocoxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let mut schema = CsvSchema::default();
        if !time_col.is_null() {
            schema.time_col = str_arg(time_col, "time_col")?.to_string();
        }
        if !event_col.is_null() {
            schema.event_col = str_arg(event_col, "event_col")?.to_string();
        }
        if !group_cols.is_null() {
            schema.group_cols = str_arg(group_cols, "group_cols")?
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        let ds = lift(load_csv(path, &schema))?;
        *out = Box::into_raw(Box::new(DrocoxDataset(ds)));
        Ok(())
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_len(ds: *const DrocoxDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Number of feature columns, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_n_features(ds: *const DrocoxDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_features())
}

/// Copies durations and event flags (0/1) into caller arrays of length
/// `drocox_dataset_len`. Either output may be null.
///
/// # Safety
/// Non-null outputs must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_outcomes(
    ds: *const DrocoxDataset,
    durations: *mut f64,
    events: *mut u8,
    len: usize,
) -> DrocoxStatus {
    guard(|| {
        let d = &ref_arg(ds, "dataset")?.0;
        if len < d.len() {
            return Err((
                DrocoxStatus::BufferTooSmall,
                format!("need {} elements, got {len}", d.len()),
            ));
        }
        if !durations.is_null() {
            ptr::copy_nonoverlapping(d.durations().as_ptr(), durations, d.len());
        }
        if !events.is_null() {
            for (i, &e) in d.events().iter().enumerate() {
                *events.add(i) = u8::from(e);
            }
        }
        Ok(())
    })
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn drocox_dataset_free(ds: *mut DrocoxDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a model. `config_json` is a training configuration object (any
/// omitted field takes its default) or null for plain ERM with defaults.
/// `validation` may be null.
///
/// # Safety
/// Handles must be live; `config_json` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn drocox_train(
    train_set: *const DrocoxDataset,
    validation: *const DrocoxDataset,
    config_json: *const c_char,
    out: *mut *mut DrocoxModel,
) -> DrocoxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = &ref_arg(train_set, "train_set")?.0;
        let val = validation.as_ref().map(|v| &v.0);
        let cfg: TrainConfig = if config_json.is_null() {
            TrainConfig::default()
        } else {
            let text = str_arg(config_json, "config_json")?;
            serde_json::from_str(text).map_err(|e| (DrocoxStatus::InvalidInput, format!("config error: {e}")))?
        };
        let (model, _) = lift(train(ds, val, &cfg, None))?;
        let config = serde_json::to_value(&cfg).map_err(|e| (DrocoxStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(DrocoxModel {
            model,
            feature_names: ds.feature_names().to_vec(),
            seed: cfg.seed,
            config,
        }));
        Ok(())
    })
}

/// Writes one risk score f(x) per record of `ds` into `scores`.
///
/// # Safety
/// Handles must be live; `scores` valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn drocox_model_risk_scores(
    model: *const DrocoxModel,
    ds: *const DrocoxDataset,
    scores: *mut f64,
    len: usize,
) -> DrocoxStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = &ref_arg(ds, "dataset")?.0;
        if scores.is_null() {
            return Err(null("scores"));
        }
        if len < d.len() {
            return Err((
                DrocoxStatus::BufferTooSmall,
                format!("need {} elements, got {len}", d.len()),
            ));
        }
        let s = lift(m.model.risk_scores(&d.matrix()))?;
        ptr::copy_nonoverlapping(s.as_ptr(), scores, s.len());
        Ok(())
    })
}

/// Writes a JSON checkpoint.
///
/// # Safety
/// `model` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn drocox_model_save(model: *const DrocoxModel, path: *const c_char) -> DrocoxStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        let ck = Checkpoint::from_model(&m.model, m.feature_names.clone(), m.seed, m.config.clone());
        lift(ck.save(path))
    })
}

/// Loads a JSON checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn drocox_model_load(path: *const c_char, out: *mut *mut DrocoxModel) -> DrocoxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = lift(Checkpoint::load(str_arg(path, "path")?))?;
        let model = lift(ck.to_model())?;
        *out = Box::into_raw(Box::new(DrocoxModel {
            model,
            feature_names: ck.feature_names,
            seed: ck.seed,
            config: ck.config,
        }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn drocox_model_free(model: *mut DrocoxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Harrell's concordance index of `scores` against the outcomes; `events`
/// holds 0 or 1 per record.
///
/// # Safety
/// Arrays must be valid for `n` elements; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn drocox_c_index(
    scores: *const f64,
    durations: *const f64,
    events: *const u8,
    n: usize,
    out: *mut f64,
) -> DrocoxStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = slice_arg(scores, n, "scores")?;
        let y = slice_arg(durations, n, "durations")?;
        let e = slice_arg(events, n, "events")?;
        let mut flags = Vec::with_capacity(n);
        for &v in e {
            match v {
                0 => flags.push(false),
                1 => flags.push(true),
                other => return Err((DrocoxStatus::InvalidInput, format!("event flag {other} is not 0 or 1"))),
            }
        }
        *out = lift(c_index(s, y, &flags))?;
        Ok(())
    })
}
