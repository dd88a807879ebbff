//! C interface to the steertest library.
//!
//! Every function returns a [`SteertestStatus`]; on failure a description is
//! kept per thread and can be copied out with
//! [`steertest_last_error_message`]. Objects cross the boundary as opaque
//! handles that the caller releases with the matching `_free` function.
//! Panics never unwind into the caller; they surface as
//! [`SteertestStatus::Panic`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use steertest::artifact::{read_json, schema};
use steertest::code_model::parse_method_snippet;
use steertest::config::PipelineConfig;
use steertest::detector::{predict_defect, DetectorModel};
use steertest::metrics::{f1, pr_auc};
use steertest::pipeline::{self, PipelineError, StageSummary};
use steertest::steer::reweight_row;
use steertest::validator::{classify, Classification, RunResult};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteertestStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or malformed.
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 3,
    /// The configuration was rejected.
    ConfigError = 4,
    /// A stage needs an artifact an earlier stage has not produced.
    MissingArtifact = 5,
    /// A stage failed while running.
    StageFailed = 6,
    /// The requested value is undefined for the given input.
    Undefined = 7,
    /// The library panicked; the handle involved should be discarded.
    Panic = 8,
}

/// Outcome of one test run, as reported by a runner.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteertestRunResult {
    Pass = 0,
    Fail = 1,
    CompileError = 2,
    Timeout = 3,
}

/// Verdict of a candidate test from its runs on the defective and fixed
/// versions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteertestClassification {
    TruePositive = 0,
    FalsePositive = 1,
    TrueNegative = 2,
    FalseNegative = 3,
    Invalid = 4,
}

/// A loaded pipeline configuration.
pub struct SteertestConfig {
    inner: PipelineConfig,
}

/// A trained method-level defect detector.
pub struct SteertestDetector {
    inner: DetectorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(SteertestStatus, String);

impl Failure {
    fn new(status: SteertestStatus, message: impl Into<String>) -> Self {
        Self(status, message.into())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::Config(_) => SteertestStatus::ConfigError,
            PipelineError::MissingArtifact { .. } => SteertestStatus::MissingArtifact,
            PipelineError::Stage { .. } => SteertestStatus::StageFailed,
        };
        Self(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SteertestStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (SteertestStatus::Ok, String::new()),
        Ok(Err(Failure(status, message))) => (status, message),
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (SteertestStatus::Panic, message)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(SteertestStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(SteertestStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref()
        .ok_or_else(|| Failure::new(SteertestStatus::NullPointer, format!("{name} is null")))
}

unsafe fn mut_arg<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut()
        .ok_or_else(|| Failure::new(SteertestStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::new(SteertestStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn steertest_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `len > 0`). Returns the full message length
/// in bytes, excluding the terminator; 0 after a successful call.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn steertest_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ----- configuration ------------------------------------------------------

/// Load a TOML configuration; relative paths inside it resolve against the
/// file's directory. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_load(path: *const c_char, out: *mut *mut SteertestConfig) -> SteertestStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = PipelineConfig::load(path.as_ref())
            .map_err(|e| Failure::new(SteertestStatus::ConfigError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SteertestConfig { inner }));
        Ok(())
    })
}

/// Release a configuration handle. Null is ignored.
///
/// # Safety
/// `config` must be null or a handle from [`steertest_config_load`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_free(config: *mut SteertestConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Redirect every artifact of later stage calls to `dir`.
///
/// # Safety
/// `config` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_set_output_dir(config: *mut SteertestConfig, dir: *const c_char) -> SteertestStatus {
    guard(|| {
        let config = mut_arg(config, "config")?;
        config.inner.output_dir = PathBuf::from(str_arg(dir, "dir")?);
        Ok(())
    })
}

/// Set the test runner program used by the validate stage.
///
/// # Safety
/// `config` must be a live handle and `runner` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_set_runner(config: *mut SteertestConfig, runner: *const c_char) -> SteertestStatus {
    guard(|| {
        let config = mut_arg(config, "config")?;
        config.inner.validation.runner.runner = str_arg(runner, "runner")?.to_string();
        Ok(())
    })
}

/// Set the steering coefficient; must lie in `[0, 1]`.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_set_alpha(config: *mut SteertestConfig, alpha: f64) -> SteertestStatus {
    guard(|| {
        let config = mut_arg(config, "config")?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Failure::new(SteertestStatus::InvalidArgument, format!("alpha {alpha} is outside [0, 1]")));
        }
        config.inner.steering.alpha = alpha;
        Ok(())
    })
}

/// Set the root seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn steertest_config_set_seed(config: *mut SteertestConfig, seed: u64) -> SteertestStatus {
    guard(|| {
        mut_arg(config, "config")?.inner.seed = seed;
        Ok(())
    })
}

// ----- stages -------------------------------------------------------------

fn run_named(cfg: &PipelineConfig, stage: &str) -> Result<Vec<StageSummary>, Failure> {
    Ok(match stage {
        "detect" => vec![pipeline::detect(cfg)?],
        "locate" => vec![pipeline::locate(cfg)?],
        "train-decoder" => vec![pipeline::train_decoder_stage(cfg)?],
        "profile" => vec![pipeline::profile(cfg)?],
        "generate" => vec![pipeline::generate(cfg)?],
        "validate" => vec![pipeline::validate(cfg)?],
        "metrics" => vec![pipeline::metrics(cfg)?],
        "pipeline" => pipeline::run_pipeline(cfg)?,
        _ => return Err(Failure::new(SteertestStatus::InvalidArgument, format!("unknown stage {stage:?}"))),
    })
}

/// Run one stage by name (`detect`, `locate`, `train-decoder`, `profile`,
/// `generate`, `validate`, `metrics`) or every stage (`pipeline`).
/// Artifacts are written to the configured output directory.
///
/// # Safety
/// `config` must be a live handle and `stage` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn steertest_run_stage(config: *const SteertestConfig, stage: *const c_char) -> SteertestStatus {
    guard(|| {
        let config = ref_arg(config, "config")?;
        let stage = str_arg(stage, "stage")?;
        config
            .inner
            .validate()
            .map_err(|e| Failure::new(SteertestStatus::ConfigError, e.to_string()))?;
        run_named(&config.inner, stage)?;
        Ok(())
    })
}

// ----- detector -----------------------------------------------------------

/// Load a detector checkpoint written by the detect stage.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steertest_detector_load(path: *const c_char, out: *mut *mut SteertestDetector) -> SteertestStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let inner = read_json::<DetectorModel>(path.as_ref(), schema::DETECTOR_MODEL)
            .map_err(|e| Failure::new(SteertestStatus::InvalidArgument, e.to_string()))?
            .payload;
        *out = Box::into_raw(Box::new(SteertestDetector { inner }));
        Ok(())
    })
}

/// Release a detector handle. Null is ignored.
///
/// # Safety
/// `detector` must be null or a handle from [`steertest_detector_load`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn steertest_detector_free(detector: *mut SteertestDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Probability that the single method in `method_source` is defective.
///
/// # Safety
/// `detector` must be a live handle, `method_source` a NUL-terminated
/// string and `prob_defective` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steertest_detector_predict(
    detector: *const SteertestDetector,
    method_source: *const c_char,
    prob_defective: *mut f64,
) -> SteertestStatus {
    guard(|| {
        let detector = ref_arg(detector, "detector")?;
        let source = str_arg(method_source, "method_source")?;
        let out = mut_arg(prob_defective, "prob_defective")?;
        let method = parse_method_snippet(source, "Snippet")
            .map_err(|e| Failure::new(SteertestStatus::InvalidArgument, e.to_string()))?;
        let prediction = predict_defect(&detector.inner, &method)
            .map_err(|e| Failure::new(SteertestStatus::InvalidArgument, e.to_string()))?;
        *out = prediction.prob_defective;
        Ok(())
    })
}

// ----- primitives ---------------------------------------------------------

/// Reweight one attention row toward the positions in `highlighted`:
/// highlighted entries keep their weight, the rest are scaled by `alpha`,
/// and the row is renormalized. `out` receives `len` values.
///
/// # Safety
/// `row` and `out` must point to `len` doubles, `highlighted` to
/// `n_highlighted` indices.
#[no_mangle]
pub unsafe extern "C" fn steertest_reweight_row(
    row: *const f64,
    len: usize,
    highlighted: *const usize,
    n_highlighted: usize,
    alpha: f64,
    out: *mut f64,
) -> SteertestStatus {
    guard(|| {
        let row = slice_arg(row, len, "row")?;
        let set: BTreeSet<usize> = slice_arg(highlighted, n_highlighted, "highlighted")?.iter().copied().collect();
        if len > 0 && out.is_null() {
            return Err(Failure::new(SteertestStatus::NullPointer, "out is null"));
        }
        let w = reweight_row(row, &set, alpha).map_err(|e| Failure::new(SteertestStatus::InvalidArgument, e.to_string()))?;
        if len > 0 {
            std::ptr::copy_nonoverlapping(w.as_ptr(), out, len);
        }
        Ok(())
    })
}

/// Harmonic mean of precision and recall; `Undefined` when both are 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn steertest_f1(precision: f64, recall: f64, out: *mut f64) -> SteertestStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = f1(precision, recall).ok_or_else(|| Failure::new(SteertestStatus::Undefined, "F1 is undefined when precision and recall are both 0"))?;
        Ok(())
    })
}

/// Area under the precision-recall step curve. `labels[i]` is nonzero for a
/// positive example.
///
/// # Safety
/// `scores` and `labels` must point to `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn steertest_pr_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> SteertestStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        let scores = slice_arg(scores, len, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, len, "labels")?.iter().map(|&l| l != 0).collect();
        *out = pr_auc(scores, &labels).map_err(|e| Failure::new(SteertestStatus::Undefined, e.to_string()))?;
        Ok(())
    })
}

/// Classify a candidate from its defective-version and fixed-version runs.
#[no_mangle]
pub extern "C" fn steertest_classify(defective: SteertestRunResult, fixed: SteertestRunResult) -> SteertestClassification {
    let run = |r| match r {
        SteertestRunResult::Pass => RunResult::Pass,
        SteertestRunResult::Fail => RunResult::Fail,
        SteertestRunResult::CompileError => RunResult::CompileError,
        SteertestRunResult::Timeout => RunResult::Timeout,
    };
    match classify(run(defective), run(fixed)) {
        Classification::TP => SteertestClassification::TruePositive,
        Classification::FP => SteertestClassification::FalsePositive,
        Classification::TN => SteertestClassification::TrueNegative,
        Classification::FN => SteertestClassification::FalseNegative,
        Classification::Invalid => SteertestClassification::Invalid,
    }
}
