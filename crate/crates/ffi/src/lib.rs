//! C ABI over the `inset` library.
//!
//! Models and datasets are opaque heap handles created by `*_new` / `*_load`
//! and released with the matching `*_free`. Every fallible call returns an
//! [`InsetStatus`]; on failure a description is available from
//! [`inset_last_error`] on the same thread until the next failing call.
//!
//! Feature matrices are passed as row-major `n × d` arrays of `double`,
//! masks as `n` bytes (0 = out, anything else = in).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};


use inset::checkpoint::{Checkpoint, CheckpointError};
use inset::data::{read_dataset, DataError};
use inset::eval::{self, EvalError, ModelPredictor, NOut};
use inset::model::{Dims, InsetModel, ModelError, ModelVariant};
use inset::prob::{LossHyper, TrainMode};
use inset::sample::{SetSample, SubsetMask};
use inset::seed::{self, Stream};
use inset::tensor::Tensor;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsetStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent with the model.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A file was not in the expected format.
    Format = 4,
    /// A numerical failure, e.g. a non-finite input.
    Numerical = 5,
    /// An internal panic was caught at the boundary.
    Internal = 6,
}

/// Opaque model handle.
pub struct InsetModelHandle {
    checkpoint: Checkpoint,
}

/// Opaque dataset handle.
pub struct InsetDatasetHandle {
    samples: Vec<SetSample>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

struct Failure(InsetStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(InsetStatus::InvalidArgument, msg.into())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::Prob(_) => InsetStatus::Numerical,
            _ => InsetStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        let status = match e {
            CheckpointError::Io(_) | CheckpointError::Read { .. } => InsetStatus::Io,
            CheckpointError::FeatureWidth { .. } => InsetStatus::InvalidArgument,
            _ => InsetStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let status = match e {
            DataError::Io(_) | DataError::Read { .. } => InsetStatus::Io,
            _ => InsetStatus::Format,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> InsetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => InsetStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            InsetStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(InsetStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid("path is not valid UTF-8"))
}

unsafe fn features_arg(data: *const f64, n: usize, d: usize) -> Result<Tensor, Failure> {
    non_null(data, "features")?;
    let len = n
        .checked_mul(d)
        .ok_or_else(|| Failure::invalid("n * d overflows"))?;
    let values = std::slice::from_raw_parts(data, len).to_vec();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Failure(InsetStatus::Numerical, "features contain NaN or infinity".into()));
    }
    Tensor::from_vec(n, d, values).map_err(|e| Failure::invalid(e.to_string()))
}

unsafe fn model_ref<'a>(m: *const InsetModelHandle) -> Result<&'a InsetModelHandle, Failure> {
    non_null(m, "model")?;
    Ok(&*m)
}

/// Message of the last failed call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn inset_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn inset_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a randomly initialized model.
///
/// `variant`: 0 inset, 1 deepsets-only. `mode`: 0 exact, 1 variational,
/// 2 direct; it selects how `inset_model_predict` scores elements.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn inset_model_new(
    variant: u32,
    mode: u32,
    d: usize,
    h: usize,
    h_d: usize,
    seed: u64,
    out: *mut *mut InsetModelHandle,
) -> InsetStatus {
    guard(|| {
        non_null(out, "out")?;
        let variant = match variant {
            0 => ModelVariant::Inset,
            1 => ModelVariant::DeepSetsOnly,
            v => return Err(Failure::invalid(format!("unknown variant {v}"))),
        };
        let mode = match mode {
            0 => TrainMode::Exact,
            1 => TrainMode::Variational,
            2 => TrainMode::Direct,
            m => return Err(Failure::invalid(format!("unknown mode {m}"))),
        };
        if d == 0 || h == 0 || h_d == 0 {
            return Err(Failure::invalid("dimensions must be at least 1"));
        }
        let model = InsetModel::new(variant, Dims { d, h, h_d }, &mut seed::rng(seed, Stream::Init, 0));
        let handle = Box::new(InsetModelHandle {
            checkpoint: Checkpoint::new(model, mode),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inset_model_load(
    path: *const c_char,
    out: *mut *mut InsetModelHandle,
) -> InsetStatus {
    guard(|| {
        non_null(out, "out")?;
        let checkpoint = Checkpoint::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(InsetModelHandle { checkpoint }));
        Ok(())
    })
}

/// Writes the model (without training state) to a checkpoint file.
///
/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn inset_model_save(
    model: *const InsetModelHandle,
    path: *const c_char,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        Checkpoint::new(m.checkpoint.model.clone(), m.checkpoint.mode).save(path)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn inset_model_free(model: *mut InsetModelHandle) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the model's feature width and hidden sizes.
///
/// # Safety
/// `model` must be valid; each output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn inset_model_dims(
    model: *const InsetModelHandle,
    d: *mut usize,
    h: *mut usize,
    h_d: *mut usize,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(d, "d")?;
        non_null(h, "h")?;
        non_null(h_d, "h_d")?;
        let dims = m.checkpoint.model.dims;
        *d = dims.d;
        *h = dims.h;
        *h_d = dims.h_d;
        Ok(())
    })
}

/// Energy `F(S; V)` of the subset `mask` of the ground set `features`.
///
/// # Safety
/// `features` must hold `n * d` doubles and `mask` `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn inset_model_energy(
    model: *const InsetModelHandle,
    features: *const f64,
    n: usize,
    d: usize,
    mask: *const u8,
    out: *mut f64,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(features, n, d)?;
        non_null(mask, "mask")?;
        non_null(out, "out")?;
        let bits = std::slice::from_raw_parts(mask, n).iter().map(|&b| b != 0).collect();
        *out = m.checkpoint.model.energy(&x, &SubsetMask::from_bools(bits))?;
        Ok(())
    })
}

/// EquiNet selection probabilities, one per element, written to `out`.
///
/// # Safety
/// `features` must hold `n * d` doubles and `out` room for `n`.
#[no_mangle]
pub unsafe extern "C" fn inset_model_equinet_probs(
    model: *const InsetModelHandle,
    features: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(features, n, d)?;
        non_null(out, "out")?;
        let y = m.checkpoint.model.equinet_probs(&x)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&y);
        Ok(())
    })
}

/// Predicted subset of size `n_out`, written as `n` bytes of 0/1.
///
/// # Safety
/// `features` must hold `n * d` doubles and `out_mask` room for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn inset_model_predict(
    model: *const InsetModelHandle,
    features: *const f64,
    n: usize,
    d: usize,
    n_out: usize,
    seed: u64,
    out_mask: *mut u8,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = features_arg(features, n, d)?;
        non_null(out_mask, "out_mask")?;
        let predictor = ModelPredictor {
            model: &m.checkpoint.model,
            mode: m.checkpoint.mode,
            hyper: LossHyper::default(),
            seed,
        };
        let mask = eval::predict_mask(&predictor, &x, n_out)?;
        let out = std::slice::from_raw_parts_mut(out_mask, n);
        for (o, &b) in out.iter_mut().zip(mask.bits()) {
            *o = u8::from(b);
        }
        Ok(())
    })
}

/// Loads a binary dataset file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inset_dataset_load(
    path: *const c_char,
    out: *mut *mut InsetDatasetHandle,
) -> InsetStatus {
    guard(|| {
        non_null(out, "out")?;
        let file = read_dataset(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(InsetDatasetHandle {
            samples: file.samples,
        }));
        Ok(())
    })
}

/// Number of samples in a dataset; 0 for null.
///
/// # Safety
/// `dataset` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn inset_dataset_len(dataset: *const InsetDatasetHandle) -> usize {
    if dataset.is_null() {
        0
    } else {
        (*dataset).samples.len()
    }
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn inset_dataset_free(dataset: *mut InsetDatasetHandle) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Mean Jaccard coefficient of the model's predictions over a dataset.
/// `fixed_n = 0` keeps `|S*|` elements per sample.
///
/// # Safety
/// `model` and `dataset` must be valid handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn inset_dataset_mjc(
    model: *const InsetModelHandle,
    dataset: *const InsetDatasetHandle,
    fixed_n: usize,
    seed: u64,
    out: *mut f64,
) -> InsetStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(dataset, "dataset")?;
        non_null(out, "out")?;
        let samples = &(*dataset).samples;
        if let Some(s) = samples.first() {
            m.checkpoint.check_width(s.d())?;
        }
        let predictor = ModelPredictor {
            model: &m.checkpoint.model,
            mode: m.checkpoint.mode,
            hyper: LossHyper::default(),
            seed,
        };
        let n_out = if fixed_n == 0 { NOut::PerSample } else { NOut::Fixed(fixed_n) };
        *out = eval::mjc(&predictor, samples, n_out)?;
        Ok(())
    })
}

