//! C ABI for the sparsepos library: opaque model handles, integer status
//! codes, and a thread-local last-error message.
//!
//! Conventions: every function that can fail returns [`SparseposStatus`];
//! on failure the message is available via [`sparsepos_last_error`] until
//! the next call on the same thread. Out-parameters are written only on
//! `SPARSEPOS_STATUS_OK`. Handles are freed with their `_free` function;
//! strings returned by the library are freed with [`sparsepos_string_free`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use sparsepos::corpus::load_corpus;
use sparsepos::error::Error;
use sparsepos::eval::{build_contingency, compute_metrics};
use sparsepos::experiment::{read_tag_file, tag_corpus, write_tag_file, DecodeMode, ExperimentConfig};
use sparsepos::model_io::{load_model, save_model, SavedModel};
use sparsepos::synth::{synth_generate, SynthConfig};

/// Status codes mirroring the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SparseposStatus {
    Ok = 0,
    /// Invalid arguments (null pointers, bad UTF-8, bad configuration).
    Usage = 1,
    /// Unreadable or malformed data files.
    Data = 2,
    /// Numerical failure during training or inference.
    Numerical = 3,
}

/// Opaque handle to a trained model plus its vocabulary and preprocessing
/// policy.
pub struct SparseposModel {
    saved: SavedModel,
}

/// Clustering scores of a prediction against gold tags.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SparseposMetrics {
    pub one_many: f64,
    pub one_one: f64,
    pub vi: f64,
    pub v: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(error: &Error) -> SparseposStatus {
    match error.exit_code() {
        1 => SparseposStatus::Usage,
        2 => SparseposStatus::Data,
        _ => SparseposStatus::Numerical,
    }
}

fn fail(error: &Error) -> SparseposStatus {
    set_error(&error.to_string());
    status_of(error)
}

fn usage(message: &str) -> SparseposStatus {
    set_error(message);
    SparseposStatus::Usage
}

/// Wrap an FFI body so panics become `Numerical` instead of unwinding
/// across the boundary.
fn guarded<F: FnOnce() -> SparseposStatus>(body: F) -> SparseposStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            SparseposStatus::Numerical
        }
    }
}

unsafe fn path_arg(ptr: *const c_char, name: &str) -> Result<PathBuf, SparseposStatus> {
    if ptr.is_null() {
        return Err(usage(&format!("{name} is null")));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(usage(&format!("{name} is not valid UTF-8"))),
    }
}

/// Last error message on this thread; empty until an error occurs. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sparsepos_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a malloc'd string; free with `sparsepos_string_free`.
#[no_mangle]
pub extern "C" fn sparsepos_version() -> *mut c_char {
    CString::new(sparsepos::VERSION).unwrap().into_raw()
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Train a model on a corpus file.
///
/// `config_pairs` holds newline-separated `key = value` settings with the
/// same keys as the experiment config files (`algo`, `emission`, `states`,
/// `iters`, `sigma`, ...); pass null or empty for the defaults.
///
/// # Safety
/// `corpus_path` must be a valid NUL-terminated string; `config_pairs` may
/// be null; `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_train_file(
    corpus_path: *const c_char,
    config_pairs: *const c_char,
    seed: u64,
    out: *mut *mut SparseposModel,
) -> SparseposStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out handle is null");
        }
        let path = match path_arg(corpus_path, "corpus_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let mut config = ExperimentConfig::new(path.clone(), PathBuf::from("."));
        if !config_pairs.is_null() {
            let text = match CStr::from_ptr(config_pairs).to_str() {
                Ok(t) => t,
                Err(_) => return usage("config_pairs is not valid UTF-8"),
            };
            let mut pairs = BTreeMap::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return usage(&format!("bad config line {line:?}"));
                };
                pairs.insert(key.trim().to_string(), value.trim().to_string());
            }
            if let Err(e) = config.apply_pairs(&pairs) {
                return fail(&e);
            }
        }
        let policy = config.policy();
        let (corpus, vocab) = match load_corpus(&path, &policy) {
            Ok(cv) => cv,
            Err(e) => return fail(&e),
        };
        match sparsepos::experiment::train_one(&config, &corpus, &vocab, seed) {
            Ok((saved, _trace)) => {
                *out = Box::into_raw(Box::new(SparseposModel { saved }));
                SparseposStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a model file written by `sparsepos_model_save` or the CLI.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_model_load(
    path: *const c_char,
    out: *mut *mut SparseposModel,
) -> SparseposStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out handle is null");
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match load_model(&path) {
            Ok(saved) => {
                *out = Box::into_raw(Box::new(SparseposModel { saved }));
                SparseposStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Write a model to the versioned text format.
///
/// # Safety
/// `model` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_model_save(
    model: *const SparseposModel,
    path: *const c_char,
) -> SparseposStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return usage("model handle is null");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match save_model(&handle.saved, &path) {
            Ok(()) => SparseposStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Number of hidden states of a model handle; 0 for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_model_states(model: *const SparseposModel) -> u32 {
    model
        .as_ref()
        .map(|m| m.saved.model.num_states as u32)
        .unwrap_or(0)
}

/// Free a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_model_free(model: *mut SparseposModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tag a corpus file and write the tag file (one cluster id per token line,
/// blank line between sentences). `viterbi` false means posterior decoding.
///
/// # Safety
/// `model` must be a live handle; the paths valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_tag_file(
    model: *const SparseposModel,
    corpus_path: *const c_char,
    tags_path: *const c_char,
    viterbi: bool,
) -> SparseposStatus {
    guarded(|| {
        let Some(handle) = model.as_ref() else {
            return usage("model handle is null");
        };
        let corpus = match path_arg(corpus_path, "corpus_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let out = match path_arg(tags_path, "tags_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let decode = if viterbi {
            DecodeMode::Viterbi
        } else {
            DecodeMode::Posterior
        };
        match tag_corpus(&handle.saved, &corpus, decode)
            .and_then(|(_, tags)| write_tag_file(&tags, &out))
        {
            Ok(()) => SparseposStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

fn eval_paths(pred: &Path, gold: &Path) -> Result<SparseposMetrics, Error> {
    let predicted = read_tag_file(pred)?;
    let (gold_corpus, _) = load_corpus(gold, &sparsepos::corpus::PreprocessPolicy::raw())?;
    let gold_tags = gold_corpus
        .gold()
        .ok_or_else(|| Error::Config("gold corpus has no tags".into()))?;
    let num_clusters = predicted.iter().flatten().max().map(|&m| m + 1).unwrap_or(1);
    let table = build_contingency(
        &predicted,
        &gold_tags.tags,
        num_clusters,
        gold_tags.alphabet.len(),
    )?;
    let report = compute_metrics(&table);
    Ok(SparseposMetrics {
        one_many: report.one_many,
        one_one: report.one_one,
        vi: report.vi,
        v: report.v,
    })
}

/// Score a tag file against a gold corpus; writes all four metrics.
///
/// # Safety
/// The paths must be valid NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_eval_files(
    pred_path: *const c_char,
    gold_path: *const c_char,
    out: *mut SparseposMetrics,
) -> SparseposStatus {
    guarded(|| {
        if out.is_null() {
            return usage("out metrics pointer is null");
        }
        let pred = match path_arg(pred_path, "pred_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let gold = match path_arg(gold_path, "gold_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match eval_paths(&pred, &gold) {
            Ok(metrics) => {
                *out = metrics;
                SparseposStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Sample a synthetic gold-tagged corpus from a generated HMM.
///
/// # Safety
/// `out_path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sparsepos_synth(
    states: u32,
    vocab: u32,
    tokens: u64,
    sparsity: f64,
    seed: u64,
    out_path: *const c_char,
) -> SparseposStatus {
    guarded(|| {
        let path = match path_arg(out_path, "out_path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        let result = synth_generate(&SynthConfig {
            states: states as usize,
            vocab_size: vocab as usize,
            tokens: tokens as usize,
            sparsity,
            seed,
            ..Default::default()
        })
        .and_then(|(corpus, vocabulary, _)| {
            sparsepos::corpus::save_corpus(&corpus, &vocabulary, &path)
        });
        match result {
            Ok(()) => SparseposStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}
