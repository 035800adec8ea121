//! C interface to the `pels` library.
//!
//! Datasets and training results are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible function
//! returns a [`PelsStatus`]; on failure a description is available from
//! [`pels_last_error_message`] on the same thread until the next failing
//! call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pels::dataset::{self, LabelPolicy, ShardedDataset};
use pels::engine::{CommLedger, ReduceTopology};
use pels::linesearch::{self, PelsParams, PolynomialModel, StepRoute, WolfeParams};
use pels::losses::{LeastSquares, Logistic};
use pels::optimizer::{
    self, default_powell_threshold, Algorithm, LineSearchKind, OptimizerConfig, RunOutput,
    Termination,
};
use pels::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NonFinite = 5,
    DimensionMismatch = 6,
    OutOfRange = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsAlgorithm {
    Gd = 0,
    Ncg = 1,
    Lbfgs = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsLineSearch {
    Wolfe = 0,
    Pels = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsLoss {
    Logistic = 0,
    LeastSquares = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsTermination {
    Converged = 0,
    MaxIters = 1,
    Stalled = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelsStepRoute {
    Newton = 0,
    NewtonFallback = 1,
    Halved = 2,
}

/// Training settings. Obtain defaults from [`pels_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PelsConfig {
    pub algorithm: PelsAlgorithm,
    pub linesearch: PelsLineSearch,
    pub loss: PelsLoss,
    pub lambda: f64,
    pub degree: u32,
    pub theta: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub history: u32,
    /// Negative selects the default for the chosen line search.
    pub powell_threshold: f64,
    pub grad_tol: f64,
    pub max_iters: u32,
    /// 0 sends every shard partial straight to the driver.
    pub tree_levels: u32,
    /// Non-zero records wall-clock time in the trace.
    pub record_time: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PelsTraceRecord {
    pub k: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub n_e: u64,
    pub cum_fg_evals: u64,
    pub cum_coeff_evals: u64,
    pub cum_bytes: u64,
    pub elapsed_seconds: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PelsCommStats {
    pub messages: u64,
    pub bytes: u64,
    pub driver_fan_in: u64,
    pub reduces: u64,
    pub broadcast_messages: u64,
    pub broadcast_bytes: u64,
}

/// Opaque sharded dataset.
pub struct PelsDataset {
    inner: ShardedDataset,
}

/// Opaque training result.
pub struct PelsResult {
    output: RunOutput,
    ledger: CommLedger,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure {
    status: PelsStatus,
    message: String,
}

impl Failure {
    fn new(status: PelsStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Self::new(PelsStatus::NullPointer, format!("{name} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DimensionMismatch { .. } | Error::PayloadLength { .. } => {
                PelsStatus::DimensionMismatch
            }
            Error::NonFinite(_) => PelsStatus::NonFinite,
            Error::InvalidArgument(_) | Error::NotDescent(_) => PelsStatus::InvalidArgument,
            Error::Parse { .. } => PelsStatus::Parse,
            Error::Io(_) | Error::Csv(_) => PelsStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PelsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PelsStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            PelsStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Failure> {
    if path.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure::new(PelsStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn finish_dataset(
    instances: Vec<dataset::Instance>,
    dim: usize,
    augment: bool,
    n_shards: u32,
) -> Result<Box<PelsDataset>, Failure> {
    if instances.is_empty() {
        return Err(Failure::new(
            PelsStatus::InvalidArgument,
            "dataset has no instances",
        ));
    }
    let instances = if augment {
        dataset::augment(instances, dim)?
    } else {
        instances
    };
    let inner = dataset::shard(instances, n_shards as usize)?;
    Ok(Box::new(PelsDataset { inner }))
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pels_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pels_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a LIBSVM file. `dim == 0` infers the dimension from the largest
/// index. Labels are mapped to {0, 1} for the logistic loss and kept as is
/// for least squares. `augment != 0` appends a constant feature.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_from_libsvm(
    path: *const c_char,
    loss: PelsLoss,
    dim: u64,
    augment: u8,
    n_shards: u32,
    out: *mut *mut PelsDataset,
) -> PelsStatus {
    guard(|| {
        let path = path_arg(path)?;
        let policy = match loss {
            PelsLoss::Logistic => LabelPolicy::Binary,
            PelsLoss::LeastSquares => LabelPolicy::Raw,
        };
        let parsed = dataset::read_libsvm_file(&path, policy, (dim > 0).then_some(dim as usize))?;
        let ds = finish_dataset(parsed.instances, parsed.dim, augment != 0, n_shards)?;
        write_out(out, Box::into_raw(ds))
    })
}

/// Generates `n` logistic-model instances of dimension `m`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_synthetic(
    n: u64,
    m: u64,
    seed: u64,
    augment: u8,
    n_shards: u32,
    out: *mut *mut PelsDataset,
) -> PelsStatus {
    guard(|| {
        let instances = pels::cli::generate_synthetic(n as usize, m as usize, seed)?;
        let ds = finish_dataset(instances, m as usize, augment != 0, n_shards)?;
        write_out(out, Box::into_raw(ds))
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_free(dataset: *mut PelsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Instance count, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_len(dataset: *const PelsDataset) -> u64 {
    dataset.as_ref().map_or(0, |d| d.inner.n() as u64)
}

/// Parameter dimension (including any constant feature), or 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_dim(dataset: *const PelsDataset) -> u64 {
    dataset.as_ref().map_or(0, |d| d.inner.dim() as u64)
}

/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_dataset_shards(dataset: *const PelsDataset) -> u32 {
    dataset.as_ref().map_or(0, |d| d.inner.n_shards() as u32)
}

#[no_mangle]
pub extern "C" fn pels_config_default(
    algorithm: PelsAlgorithm,
    linesearch: PelsLineSearch,
) -> PelsConfig {
    let base = OptimizerConfig::new(algorithm.into(), linesearch.into());
    PelsConfig {
        algorithm,
        linesearch,
        loss: PelsLoss::Logistic,
        lambda: 1e-4,
        degree: base.pels.degree as u32,
        theta: base.pels.theta,
        nu1: base.wolfe.nu1,
        nu2: base.wolfe.nu2,
        history: base.history as u32,
        powell_threshold: -1.0,
        grad_tol: base.grad_tol,
        max_iters: base.max_iters as u32,
        tree_levels: 4,
        record_time: 1,
    }
}

impl From<PelsAlgorithm> for Algorithm {
    fn from(a: PelsAlgorithm) -> Self {
        match a {
            PelsAlgorithm::Gd => Algorithm::Gd,
            PelsAlgorithm::Ncg => Algorithm::Ncg,
            PelsAlgorithm::Lbfgs => Algorithm::Lbfgs,
        }
    }
}

impl From<PelsLineSearch> for LineSearchKind {
    fn from(l: PelsLineSearch) -> Self {
        match l {
            PelsLineSearch::Wolfe => LineSearchKind::Wolfe,
            PelsLineSearch::Pels => LineSearchKind::Pels,
        }
    }
}

impl PelsConfig {
    fn optimizer(&self) -> OptimizerConfig {
        let linesearch: LineSearchKind = self.linesearch.into();
        OptimizerConfig {
            algorithm: self.algorithm.into(),
            linesearch,
            history: self.history as usize,
            powell_threshold: if self.powell_threshold < 0.0 {
                default_powell_threshold(linesearch)
            } else {
                self.powell_threshold
            },
            grad_tol: self.grad_tol,
            max_iters: self.max_iters as usize,
            wolfe: WolfeParams {
                nu1: self.nu1,
                nu2: self.nu2,
                ..WolfeParams::default()
            },
            pels: PelsParams {
                theta: self.theta,
                degree: self.degree as usize,
                ..PelsParams::default()
            },
            record_time: self.record_time != 0,
        }
    }

    fn topology(&self) -> Result<ReduceTopology, Error> {
        if self.tree_levels == 0 {
            Ok(ReduceTopology::AllToOne)
        } else {
            ReduceTopology::tree(self.tree_levels as usize)
        }
    }
}

/// Trains from `w = 0`.
///
/// # Safety
/// `dataset` and `config` must be live pointers and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pels_train(
    dataset: *const PelsDataset,
    config: *const PelsConfig,
    out: *mut *mut PelsResult,
) -> PelsStatus {
    guard(|| {
        let data = &dataset
            .as_ref()
            .ok_or_else(|| Failure::null("dataset"))?
            .inner;
        let config = config.as_ref().ok_or_else(|| Failure::null("config"))?;
        if out.is_null() {
            return Err(Failure::null("output pointer"));
        }
        let opt = config.optimizer();
        let topology = config.topology()?;
        let (output, ledger) = match config.loss {
            PelsLoss::Logistic => {
                optimizer::train(&opt, &Logistic::new(config.lambda)?, data, topology)?
            }
            PelsLoss::LeastSquares => {
                optimizer::train(&opt, &LeastSquares::new(config.lambda)?, data, topology)?
            }
        };
        write_out(out, Box::into_raw(Box::new(PelsResult { output, ledger })))
    })
}

/// # Safety
/// `result` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pels_result_free(result: *mut PelsResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

unsafe fn result_ref<'a>(result: *const PelsResult) -> Result<&'a PelsResult, Failure> {
    result.as_ref().ok_or_else(|| Failure::null("result"))
}

/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pels_result_termination(
    result: *const PelsResult,
    out: *mut PelsTermination,
) -> PelsStatus {
    guard(|| {
        let t = match result_ref(result)?.output.termination {
            Termination::Converged => PelsTermination::Converged,
            Termination::MaxIters => PelsTermination::MaxIters,
            Termination::Stalled => PelsTermination::Stalled,
        };
        write_out(out, t)
    })
}

/// Number of outer iterations performed, or 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_result_iterations(result: *const PelsResult) -> u64 {
    result.as_ref().map_or(0, |r| r.output.iterations() as u64)
}

/// Final loss, or NaN for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_result_final_loss(result: *const PelsResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.output.final_record().loss)
}

/// Length of the weight vector, or 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_result_dim(result: *const PelsResult) -> u64 {
    result.as_ref().map_or(0, |r| r.output.w.len() as u64)
}

/// Copies the final weights into `buf`, which must hold `len` doubles;
/// `len` must equal [`pels_result_dim`].
///
/// # Safety
/// `buf` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pels_result_weights(
    result: *const PelsResult,
    buf: *mut f64,
    len: u64,
) -> PelsStatus {
    guard(|| {
        let w = result_ref(result)?.output.w.as_slice();
        if buf.is_null() {
            return Err(Failure::null("buffer"));
        }
        if len as usize != w.len() {
            return Err(Failure::new(
                PelsStatus::DimensionMismatch,
                format!("buffer holds {len} values, weights have {}", w.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, w.len()).copy_from_slice(w);
        Ok(())
    })
}

/// Trace rows (iterations + 1), or 0 for null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pels_result_trace_len(result: *const PelsResult) -> u64 {
    result.as_ref().map_or(0, |r| r.output.trace.len() as u64)
}

/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pels_result_trace_get(
    result: *const PelsResult,
    index: u64,
    out: *mut PelsTraceRecord,
) -> PelsStatus {
    guard(|| {
        let trace = &result_ref(result)?.output.trace;
        let rec = trace.get(index as usize).ok_or_else(|| {
            Failure::new(
                PelsStatus::OutOfRange,
                format!("trace index {index} out of range (len {})", trace.len()),
            )
        })?;
        write_out(
            out,
            PelsTraceRecord {
                k: rec.k as u64,
                loss: rec.loss,
                grad_norm: rec.grad_norm,
                step_size: rec.step_size,
                n_e: rec.n_e as u64,
                cum_fg_evals: rec.cum_fg_evals,
                cum_coeff_evals: rec.cum_coeff_evals,
                cum_bytes: rec.cum_bytes,
                elapsed_seconds: rec.elapsed_seconds,
            },
        )
    })
}

/// # Safety
/// `result` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pels_result_comm(
    result: *const PelsResult,
    out: *mut PelsCommStats,
) -> PelsStatus {
    guard(|| {
        let l = result_ref(result)?.ledger;
        write_out(
            out,
            PelsCommStats {
                messages: l.messages,
                bytes: l.bytes,
                driver_fan_in: l.driver_fan_in,
                reduces: l.reduces,
                broadcast_messages: l.broadcast_messages,
                broadcast_bytes: l.broadcast_bytes,
            },
        )
    })
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `result` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pels_result_write_trace_csv(
    result: *const PelsResult,
    path: *const c_char,
) -> PelsStatus {
    guard(|| {
        let r = result_ref(result)?;
        let path = path_arg(path)?;
        let file = std::io::BufWriter::new(std::fs::File::create(path).map_err(Error::from)?);
        pels::report::write_trace_csv(file, &r.output.trace)?;
        Ok(())
    })
}

/// Evaluates `W(alpha) = sum_l coeffs[l] (alpha - alpha_j)^l` and its first
/// two derivatives. Any of the output pointers may be null.
///
/// # Safety
/// `coeffs` must point to `len` doubles; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pels_poly_eval(
    alpha_j: f64,
    coeffs: *const f64,
    len: u64,
    alpha: f64,
    value: *mut f64,
    slope: *mut f64,
    curvature: *mut f64,
) -> PelsStatus {
    guard(|| {
        let model = model_arg(alpha_j, coeffs, len)?;
        let (w, dw, d2w) = model.eval(alpha);
        for (ptr, v) in [(value, w), (slope, dw), (curvature, d2w)] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

unsafe fn model_arg(
    alpha_j: f64,
    coeffs: *const f64,
    len: u64,
) -> Result<PolynomialModel, Failure> {
    if coeffs.is_null() {
        return Err(Failure::null("coeffs"));
    }
    let c = std::slice::from_raw_parts(coeffs, len as usize).to_vec();
    Ok(PolynomialModel::new(alpha_j, c)?)
}

/// One step of the polynomial line search: the positive minimizer of the
/// model expanded about `alpha_j`, using default tolerances. `coeffs` holds
/// `degree + 1` values with `degree >= 2`.
///
/// # Safety
/// `coeffs` must point to `len` doubles; `alpha` and `route` must be
/// writable (`route` may be null).
#[no_mangle]
pub unsafe extern "C" fn pels_poly_minimize(
    alpha_j: f64,
    coeffs: *const f64,
    len: u64,
    alpha: *mut f64,
    route: *mut PelsStepRoute,
) -> PelsStatus {
    guard(|| {
        let model = model_arg(alpha_j, coeffs, len)?;
        if len < 3 {
            return Err(Failure::new(
                PelsStatus::InvalidArgument,
                "need at least 3 coefficients",
            ));
        }
        let params = PelsParams {
            degree: len as usize - 1,
            ..PelsParams::default()
        };
        let step = linesearch::minimize_polynomial(&model, &params)?;
        write_out(alpha, step.alpha)?;
        if !route.is_null() {
            route.write(match step.route {
                StepRoute::Newton => PelsStepRoute::Newton,
                StepRoute::NewtonFallback => PelsStepRoute::NewtonFallback,
                StepRoute::Halved => PelsStepRoute::Halved,
            });
        }
        Ok(())
    })
}
