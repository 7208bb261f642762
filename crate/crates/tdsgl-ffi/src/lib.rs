//! C ABI for the TDSGL engine: opaque handles, integer status codes, and a
//! thread-local last-error message. The committed header lives at
//! `include/tdsgl.h` and mirrors this surface one-to-one.
//!
//! Conventions: functions return `TdsglStatus` (0 = ok) and write results
//! through out-pointers; handles are created/freed in matching pairs; any
//! non-ok status leaves a human-readable message retrievable via
//! [`tdsgl_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use tdsgl::config::{Config, Variant};
use tdsgl::data::Split;
use tdsgl::error::Error;
use tdsgl::graph::CoOccurrenceMasks;
use tdsgl::model::EmbeddingState;
use tdsgl::trainer::{final_embeddings, train, TrainSinks};
use tdsgl::InteractionDataset;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdsglStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    ParseError = 4,
    InvalidArgument = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> TdsglStatus {
    match err {
        Error::Parse { .. } => TdsglStatus::ParseError,
        Error::Io { .. } | Error::Format { .. } => TdsglStatus::IoError,
        Error::InvalidArgument(_) | Error::Config(_) | Error::ShapeMismatch(_) => {
            TdsglStatus::InvalidArgument
        }
        _ => TdsglStatus::InternalError,
    }
}

fn fail(err: &Error) -> TdsglStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Shields the C boundary from panics.
fn guarded(f: impl FnOnce() -> TdsglStatus) -> TdsglStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            TdsglStatus::InternalError
        }
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, TdsglStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(TdsglStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(TdsglStatus::InvalidUtf8)
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, TdsglStatus> {
    if ptr.is_null() {
        set_error("null string");
        return Err(TdsglStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        TdsglStatus::InvalidUtf8
    })
}

/// Opaque dataset handle.
pub struct TdsglDataset {
    ds: InteractionDataset,
}

/// Opaque configuration handle (flat keys plus a variant selection).
pub struct TdsglConfig {
    config: Config,
    variant: Variant,
}

/// Engine version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdsgl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the last error on this thread. Valid until the next
/// failing call from the same thread.
#[no_mangle]
pub extern "C" fn tdsgl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parse a raw adjacency-list dataset (a single file, or a directory whose
/// train/test files are merged). The result is unsplit.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_dataset_load(
    path: *const c_char,
    out: *mut *mut TdsglDataset,
) -> TdsglStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return TdsglStatus::NullPointer;
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match tdsgl::data::load_raw(&path) {
            Ok((ds, _, _)) => {
                *out = Box::into_raw(Box::new(TdsglDataset { ds }));
                TdsglStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a prepared dataset directory written by `tdsgl prepare`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_dataset_load_prepared(
    dir: *const c_char,
    out: *mut *mut TdsglDataset,
) -> TdsglStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return TdsglStatus::NullPointer;
        }
        let dir = match path_arg(dir) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match tdsgl::data::load_split(&dir) {
            Ok((ds, _)) => {
                *out = Box::into_raw(Box::new(TdsglDataset { ds }));
                TdsglStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Deterministic per-user split of an unsplit dataset, in place.
///
/// # Safety
/// `ds` must be a live handle from a `tdsgl_dataset_load*` call.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_dataset_split(
    ds: *mut TdsglDataset,
    train_ratio: f64,
    validation_ratio: f64,
    test_ratio: f64,
    seed: u64,
) -> TdsglStatus {
    guarded(|| {
        let Some(handle) = ds.as_mut() else {
            set_error("null dataset");
            return TdsglStatus::NullPointer;
        };
        match tdsgl::split_dataset(&handle.ds, (train_ratio, validation_ratio, test_ratio), seed) {
            Ok(split) => {
                handle.ds = split;
                TdsglStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Basic dataset statistics. Any out-pointer may be NULL to skip that field.
///
/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_dataset_stats(
    ds: *const TdsglDataset,
    num_users: *mut u64,
    num_items: *mut u64,
    train: *mut u64,
    validation: *mut u64,
    test: *mut u64,
) -> TdsglStatus {
    guarded(|| {
        let Some(handle) = ds.as_ref() else {
            set_error("null dataset");
            return TdsglStatus::NullPointer;
        };
        if !num_users.is_null() {
            *num_users = handle.ds.num_users as u64;
        }
        if !num_items.is_null() {
            *num_items = handle.ds.num_items as u64;
        }
        if !train.is_null() {
            *train = handle.ds.train.len() as u64;
        }
        if !validation.is_null() {
            *validation = handle.ds.validation.len() as u64;
        }
        if !test.is_null() {
            *test = handle.ds.test.len() as u64;
        }
        TdsglStatus::Ok
    })
}

/// # Safety
/// `ds` must be a handle from `tdsgl_dataset_load*`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_dataset_free(ds: *mut TdsglDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// New configuration with the engine defaults and the full TDSGL variant.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_config_new(out: *mut *mut TdsglConfig) -> TdsglStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null out pointer");
            return TdsglStatus::NullPointer;
        }
        *out = Box::into_raw(Box::new(TdsglConfig {
            config: Config::default(),
            variant: Variant::Tdsgl,
        }));
        TdsglStatus::Ok
    })
}

/// Set one flat configuration key (`model.dim`, `ssl.tau`, `mask.beta`, …).
///
/// # Safety
/// All pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_config_set(
    cfg: *mut TdsglConfig,
    key: *const c_char,
    value: *const c_char,
) -> TdsglStatus {
    guarded(|| {
        let Some(handle) = cfg.as_mut() else {
            set_error("null config");
            return TdsglStatus::NullPointer;
        };
        let (key, value) = match (str_arg(key), str_arg(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match handle.config.set(key, value) {
            Ok(()) => TdsglStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Select an experiment variant (`tdsgl`, `sgl-ed`, `tdsgl-tf`, …).
///
/// # Safety
/// All pointers must be valid; the string NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_config_set_variant(
    cfg: *mut TdsglConfig,
    variant: *const c_char,
) -> TdsglStatus {
    guarded(|| {
        let Some(handle) = cfg.as_mut() else {
            set_error("null config");
            return TdsglStatus::NullPointer;
        };
        let name = match str_arg(variant) {
            Ok(v) => v,
            Err(s) => return s,
        };
        match Variant::parse(name) {
            Ok(v) => {
                handle.variant = v;
                TdsglStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// # Safety
/// `cfg` must be a handle from `tdsgl_config_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_config_free(cfg: *mut TdsglConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn train_impl(
    ds: &InteractionDataset,
    cfg: &TdsglConfig,
    run_dir: Option<&Path>,
    test_recall: *mut f64,
    test_ndcg: *mut f64,
) -> Result<(), Error> {
    let mut hyper = cfg.config.hyper.clone();
    cfg.variant.apply(&mut hyper);
    hyper.validate()?;

    let masks = if hyper.needs_masks() {
        let r = tdsgl::interaction_matrix(ds);
        Some(CoOccurrenceMasks::build(&r, hyper.beta, hyper.beta_user, hyper.beta_item)?)
    } else {
        None
    };

    let (steps_path, epochs_path);
    let mut sinks = TrainSinks::default();
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        steps_path = dir.join("steps.csv");
        epochs_path = dir.join("epochs.csv");
        sinks.steps_csv = Some(&steps_path);
        sinks.epochs_csv = Some(&epochs_path);
    }
    let out = train(ds, &hyper, masks.as_ref(), &sinks)?;
    if let Some(dir) = run_dir {
        out.best.save(&dir.join("checkpoint.bin"))?;
    }

    let combined = final_embeddings(ds, &hyper, &out.best);
    let report = tdsgl::evaluate(&combined, ds, Split::Test, 20);
    unsafe {
        if !test_recall.is_null() {
            *test_recall = report.recall;
        }
        if !test_ndcg.is_null() {
            *test_ndcg = report.ndcg;
        }
    }
    Ok(())
}

/// Train on the dataset's train split. When `run_dir` is non-NULL the loss
/// traces and the best checkpoint are written there. Test metrics come back
/// through the out-pointers (either may be NULL).
///
/// # Safety
/// `ds` and `cfg` must be live handles; `run_dir` NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_train(
    ds: *const TdsglDataset,
    cfg: *const TdsglConfig,
    run_dir: *const c_char,
    test_recall: *mut f64,
    test_ndcg: *mut f64,
) -> TdsglStatus {
    guarded(|| {
        let (Some(ds), Some(cfg)) = (ds.as_ref(), cfg.as_ref()) else {
            set_error("null dataset or config");
            return TdsglStatus::NullPointer;
        };
        let dir = if run_dir.is_null() {
            None
        } else {
            match path_arg(run_dir) {
                Ok(p) => Some(p),
                Err(s) => return s,
            }
        };
        match train_impl(&ds.ds, cfg, dir.as_deref(), test_recall, test_ndcg) {
            Ok(()) => TdsglStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Evaluate a saved checkpoint against the dataset's test (or validation)
/// split with full ranking at cutoff `k`.
///
/// # Safety
/// `ds` and `cfg` must be live handles; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tdsgl_evaluate_checkpoint(
    ds: *const TdsglDataset,
    cfg: *const TdsglConfig,
    checkpoint_path: *const c_char,
    split: *const c_char,
    k: u32,
    recall: *mut f64,
    ndcg: *mut f64,
) -> TdsglStatus {
    guarded(|| {
        let (Some(ds), Some(cfg)) = (ds.as_ref(), cfg.as_ref()) else {
            set_error("null dataset or config");
            return TdsglStatus::NullPointer;
        };
        let path = match path_arg(checkpoint_path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let split = match str_arg(split) {
            Ok("test") => Split::Test,
            Ok("validation") | Ok("val") => Split::Validation,
            Ok(other) => {
                set_error(&format!("unknown split {other:?}"));
                return TdsglStatus::InvalidArgument;
            }
            Err(s) => return s,
        };
        let mut hyper = cfg.config.hyper.clone();
        cfg.variant.apply(&mut hyper);
        let state = match EmbeddingState::load(&path) {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        if state.num_users != ds.ds.num_users || state.num_items != ds.ds.num_items {
            set_error("checkpoint shape does not match the dataset");
            return TdsglStatus::InvalidArgument;
        }
        let combined = final_embeddings(&ds.ds, &hyper, &state);
        let report = tdsgl::evaluate(&combined, &ds.ds, split, k as usize);
        if !recall.is_null() {
            *recall = report.recall;
        }
        if !ndcg.is_null() {
            *ndcg = report.ndcg;
        }
        TdsglStatus::Ok
    })
}
