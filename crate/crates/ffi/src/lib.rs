//! C ABI for the npn classifier.
//!
//! Models are opaque `NpnModel` handles created by [`npn_fit`] or
//! [`npn_model_load`] and released with [`npn_model_free`]. Every fallible
//! call returns an [`NpnStatus`]; on failure a message is available from
//! [`npn_last_error`] on the same thread until the next failing call.
//!
//! Matrices are passed row-major as `n_rows * n_cols` doubles. Labels are
//! bytes: 0, 1, or [`NPN_MISSING_LABEL`] for an unlabeled row.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use npn_core::classifier::{select_and_fit, FitConfig, FittedModel};
use npn_core::dataset::Dataset;
use npn_core::gibbs::LambdaMode;
use npn_core::Error;

pub const NPN_MISSING_LABEL: u8 = 2;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NpnStatus {
    Ok = 0,
    /// Invalid argument or option value.
    Usage = 1,
    /// Unusable input data.
    Data = 2,
    /// Numerical failure while fitting.
    Numeric = 3,
    /// File could not be read or written.
    Io = 4,
    /// Model file is malformed or of another version.
    ModelFormat = 5,
    /// A required pointer argument was null.
    NullPointer = 6,
    /// Internal panic; the library state is otherwise unaffected.
    Panic = 7,
}

/// Fit options. Defaults come from `npn_fit_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NpnFitOptions {
    /// Smallest and largest candidate basis sizes (inclusive).
    pub j_min: usize,
    pub j_max: usize,
    pub pilot_iterations: usize,
    pub final_iterations: usize,
    /// Burn-in of the final chain; negative for half of it.
    pub burn_in: i64,
    /// Boundary ratio bound of the selection criterion.
    pub m: f64,
    /// Fixed λ₀ in (0, 1); any other value learns λ₀ under Beta(beta_a, beta_b).
    pub lambda0: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub seed: u64,
    /// Nonzero to run pilot chains on a thread pool.
    pub parallel: u8,
}

/// Opaque fitted model.
pub struct NpnModel {
    inner: FittedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> NpnStatus {
    match err {
        Error::Io { .. } => NpnStatus::Io,
        Error::ModelFormat(_) => NpnStatus::ModelFormat,
        e => match e.exit_code() {
            1 => NpnStatus::Usage,
            2 => NpnStatus::Data,
            _ => NpnStatus::Numeric,
        },
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NpnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NpnStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            NpnStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NpnStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<*const T, Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(p)
    }
}

unsafe fn matrix(x: *const f64, n_rows: usize, n_cols: usize) -> Result<DMatrix<f64>, Failure> {
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Failure::Core(Error::Usage("matrix size overflows".into())))?;
    if len == 0 {
        return Err(Failure::Core(Error::Usage("matrix is empty".into())));
    }
    let x = non_null(x, "x")?;
    let data = std::slice::from_raw_parts(x, len);
    Ok(DMatrix::from_row_slice(n_rows, n_cols, data))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, Failure> {
    let path = non_null(path, "path")?;
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Failure::Core(Error::Usage("path is not valid UTF-8".into())))
}

impl NpnFitOptions {
    fn to_config(self) -> Result<FitConfig, Error> {
        if self.j_min > self.j_max {
            return Err(Error::Usage(format!("j_min {} exceeds j_max {}", self.j_min, self.j_max)));
        }
        let lambda_mode = if self.lambda0 > 0.0 && self.lambda0 < 1.0 {
            LambdaMode::Fixed { lambda0: self.lambda0 }
        } else {
            LambdaMode::Learn { l0: self.beta_a, l1: self.beta_b }
        };
        let cfg = FitConfig {
            j_candidates: (self.j_min..=self.j_max).collect(),
            pilot_iterations: self.pilot_iterations,
            final_iterations: self.final_iterations,
            burn_in: usize::try_from(self.burn_in).ok(),
            m: self.m,
            lambda_mode,
            seed: self.seed,
            parallel: self.parallel != 0,
            ..FitConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn npn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn npn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Writes the default fit options to `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `NpnFitOptions`.
#[no_mangle]
pub unsafe extern "C" fn npn_fit_options_default(out: *mut NpnFitOptions) -> NpnStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = FitConfig::default();
        let LambdaMode::Learn { l0, l1 } = d.lambda_mode else { unreachable!() };
        *out = NpnFitOptions {
            j_min: d.j_candidates[0],
            j_max: *d.j_candidates.last().expect("non-empty default range"),
            pilot_iterations: d.pilot_iterations,
            final_iterations: d.final_iterations,
            burn_in: -1,
            m: d.m,
            lambda0: 0.0,
            beta_a: l0,
            beta_b: l1,
            seed: d.seed,
            parallel: 1,
        };
        Ok(())
    })
}

/// Fits a model. `options` may be null for the defaults. On success `*out`
/// receives a new handle owned by the caller.
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows` bytes,
/// `options` to a valid `NpnFitOptions` or be null, and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn npn_fit(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    labels: *const u8,
    options: *const NpnFitOptions,
    out: *mut *mut NpnModel,
) -> NpnStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let x = matrix(x, n_rows, n_cols)?;
        let labels = std::slice::from_raw_parts(non_null(labels, "labels")?, n_rows).to_vec();
        let config = if options.is_null() {
            FitConfig::default()
        } else {
            (*options).to_config()?
        };
        let data = Dataset::new(x, labels, None)?;
        let model = select_and_fit(&data, &config)?.model;
        *out = Box::into_raw(Box::new(NpnModel { inner: model }));
        Ok(())
    })
}

/// Classifies `n_rows` rows. `out_labels` receives 0 or 1 per row;
/// `out_p_class1`, if not null, the posterior probability of class 1.
///
/// # Safety
/// `model` must be a live handle, `x` must point to `n_rows * n_cols`
/// doubles, `out_labels` to `n_rows` writable bytes and `out_p_class1` to
/// `n_rows` writable doubles or be null.
#[no_mangle]
pub unsafe extern "C" fn npn_model_predict(
    model: *const NpnModel,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_labels: *mut u8,
    out_p_class1: *mut f64,
) -> NpnStatus {
    guard(|| {
        let model = &*non_null(model, "model")?;
        non_null(out_labels, "out_labels")?;
        if n_cols != model.inner.n_features() {
            return Err(Error::Data(format!(
                "{n_cols} columns, the model expects {}",
                model.inner.n_features()
            ))
            .into());
        }
        let pred = model.inner.predict(&matrix(x, n_rows, n_cols)?)?;
        std::slice::from_raw_parts_mut(out_labels, n_rows).copy_from_slice(&pred.labels);
        if !out_p_class1.is_null() {
            std::slice::from_raw_parts_mut(out_p_class1, n_rows).copy_from_slice(&pred.p_class1);
        }
        Ok(())
    })
}

/// Loads a model file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn npn_model_load(path: *const c_char, out: *mut *mut NpnModel) -> NpnStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let model = FittedModel::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(NpnModel { inner: model }));
        Ok(())
    })
}

/// Writes a model file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn npn_model_save(model: *const NpnModel, path: *const c_char) -> NpnStatus {
    guard(|| {
        let model = &*non_null(model, "model")?;
        model.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Number of feature columns the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npn_model_num_features(model: *const NpnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Selected spline basis size; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn npn_model_num_basis(model: *const NpnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_basis())
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn npn_model_free(model: *mut NpnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
