//! C ABI over the `nnse` engine.
//!
//! Models are opaque handles created by [`nnse_model_load`] and released
//! with [`nnse_model_free`]. Every fallible call returns an [`NnseStatus`];
//! on failure the message is kept per thread and read back with
//! [`nnse_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Duration;

use nnse::analyses::{attack, AttackResult, AttackSpec, Goal};
use nnse::exec::forward;
use nnse::model::{load_model, Model, Tensor};
use nnse::symexec::{ExplorationBudget, SymbolicMarking};
use nnse::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    MissingFile = 3,
    /// Malformed JSON, CSV or parameter data.
    MalformedInput = 4,
    ShapeMismatch = 5,
    InvalidArgument = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnseAttackOutcome {
    Found = 0,
    NoneWithinBudget = 1,
    ProvenRobust = 2,
}

/// Opaque loaded model.
pub struct NnseModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: NnseStatus, msg: impl Into<String>) -> NnseStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> NnseStatus {
    match e {
        Error::MissingFile(_) => NnseStatus::MissingFile,
        Error::MalformedJson(_)
        | Error::MalformedInput(_)
        | Error::InvalidLayer { .. }
        | Error::NonFiniteParameter { .. }
        | Error::NonFiniteActivation { .. } => NnseStatus::MalformedInput,
        Error::ShapeMismatch { .. } => NnseStatus::ShapeMismatch,
        Error::InvalidMarking(_) | Error::InvalidArgument(_) | Error::NonlinearTerm(_) | Error::EmptyDataset => {
            NnseStatus::InvalidArgument
        }
        _ => NnseStatus::Internal,
    }
}

fn from_error(e: Error) -> NnseStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

/// Runs `f`, turning a panic into `NnseStatus::Panic`.
fn guard(f: impl FnOnce() -> NnseStatus) -> NnseStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(NnseStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        (len == 0).then_some(&[])
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

fn input_tensor(model: &Model, data: &[f64]) -> Result<Tensor, NnseStatus> {
    Tensor::new(model.input_shape().clone(), data.to_vec()).map_err(from_error)
}

/// Loads the model stored in directory `dir` (UTF-8, NUL-terminated) and
/// stores a new handle in `*out`.
///
/// # Safety
/// `dir` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nnse_model_load(dir: *const c_char, out: *mut *mut NnseModel) -> NnseStatus {
    guard(|| {
        if dir.is_null() || out.is_null() {
            return fail(NnseStatus::NullPointer, "dir and out must not be null");
        }
        let Ok(dir) = CStr::from_ptr(dir).to_str() else {
            return fail(NnseStatus::InvalidUtf8, "model directory is not valid UTF-8");
        };
        match load_model(Path::new(dir)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(NnseModel { model }));
                NnseStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`nnse_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nnse_model_free(model: *mut NnseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input values (product of the input shape), or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nnse_model_input_len(model: *const NnseModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_shape().numel())
}

/// Number of output classes, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nnse_model_num_classes(model: *const NnseModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_classes())
}

/// Runs the network on `input` (row-major, channels last). Writes the
/// pre-softmax logits to `logits` (`logits_len >= num_classes`) and the
/// label to `*label`.
///
/// # Safety
/// Pointers must be valid for the given lengths; `label` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nnse_forward(
    model: *const NnseModel,
    input: *const f64,
    input_len: usize,
    logits: *mut f64,
    logits_len: usize,
    label: *mut usize,
) -> NnseStatus {
    guard(|| {
        let (Some(m), Some(data)) = (model.as_ref(), slice(input, input_len)) else {
            return fail(NnseStatus::NullPointer, "model and input must not be null");
        };
        if logits.is_null() || label.is_null() {
            return fail(NnseStatus::NullPointer, "logits and label must not be null");
        }
        let classes = m.model.num_classes();
        if logits_len < classes {
            return fail(
                NnseStatus::BufferTooSmall,
                format!("logits buffer holds {logits_len}, need {classes}"),
            );
        }
        let x = match input_tensor(&m.model, data) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match forward(&m.model, &x) {
            Ok((p, _)) => {
                std::slice::from_raw_parts_mut(logits, classes).copy_from_slice(p.logits.data());
                *label = p.label;
                NnseStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Searches for a value of one input position in `[lower, upper]` that
/// changes the label, within `timeout_secs`. `position` holds `rank`
/// indices. On `Found`, the adversarial input is written to `adversarial`
/// (`input_len` values) and its label to `*new_label`; otherwise both are
/// left untouched.
///
/// # Safety
/// Pointers must be valid for the given lengths; `outcome`, `adversarial`
/// and `new_label` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nnse_attack_pixel(
    model: *const NnseModel,
    input: *const f64,
    input_len: usize,
    position: *const usize,
    rank: usize,
    lower: f64,
    upper: f64,
    timeout_secs: f64,
    outcome: *mut NnseAttackOutcome,
    adversarial: *mut f64,
    new_label: *mut usize,
) -> NnseStatus {
    guard(|| {
        let (Some(m), Some(data), Some(pos)) = (model.as_ref(), slice(input, input_len), slice(position, rank)) else {
            return fail(NnseStatus::NullPointer, "model, input and position must not be null");
        };
        if outcome.is_null() || adversarial.is_null() || new_label.is_null() {
            return fail(
                NnseStatus::NullPointer,
                "outcome, adversarial and new_label must not be null",
            );
        }
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return fail(NnseStatus::InvalidArgument, "timeout_secs must be positive");
        }
        let x = match input_tensor(&m.model, data) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let spec = AttackSpec {
            budget: ExplorationBudget {
                wall_timeout: Duration::from_secs_f64(timeout_secs),
                ..ExplorationBudget::default()
            },
            ..AttackSpec::new(
                x,
                SymbolicMarking::inputs(vec![pos.to_vec()], lower, upper),
                Goal::AnyMisclassification,
            )
        };
        match attack(&m.model, &spec) {
            Ok(AttackResult::Found(adv)) => {
                std::slice::from_raw_parts_mut(adversarial, input_len).copy_from_slice(adv.input.data());
                *new_label = adv.new_label;
                *outcome = NnseAttackOutcome::Found;
                NnseStatus::Ok
            }
            Ok(AttackResult::NoneWithinBudget { .. }) => {
                *outcome = NnseAttackOutcome::NoneWithinBudget;
                NnseStatus::Ok
            }
            Ok(AttackResult::ProvenRobust { .. }) => {
                *outcome = NnseAttackOutcome::ProvenRobust;
                NnseStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn nnse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nnse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
