//! C ABI over the `gmmot` library.
//!
//! Models are opaque heap-allocated handles created by `gmmot_fit` or
//! `gmmot_model_parse` and released with `gmmot_model_free`. Every
//! fallible call returns a `GmmotStatus`; on failure a human-readable
//! message is stored in thread-local storage and can be read with
//! `gmmot_last_error_message` until the next failing call on the same
//! thread. Handles are immutable after creation and safe to share across
//! threads; the error message is per-thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};

use gmmot::{
    fit, gaussian_w2_squared, gmm_wasserstein_with, load_model, save_model, CostConvention,
    CovarianceType, Error, FitConfig, Gaussian, Gmm,
};

/// Result of a C-ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmotStatus {
    /// The call succeeded.
    Ok = 0,
    /// An argument violated a documented precondition (null pointer,
    /// length mismatch, non-finite value, malformed configuration).
    InvalidArgument = 1,
    /// Serialized model bytes could not be parsed.
    Parse = 2,
    /// A numeric computation failed (degenerate covariance, empty
    /// component, solver stall, infeasible marginals).
    Compute = 3,
    /// An internal invariant was violated; the library state is still
    /// consistent but the call produced nothing.
    Panic = 4,
}

/// Covariance structure for fitted components.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmotCovariance {
    /// Unconstrained symmetric positive-definite covariances.
    Full = 0,
    /// Diagonal covariances.
    Diagonal = 1,
}

/// Cost convention for the mixture transport distance.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmotCost {
    /// Pair costs are squared Gaussian W2 values; the distance is the
    /// square root of the transport objective.
    Squared = 0,
    /// Pair costs are unsquared Gaussian W2 values; the distance is the
    /// transport objective itself.
    Linear = 1,
}

/// Fitting parameters. Obtain defaults from `gmmot_fit_options_default`
/// and override individual fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GmmotFitOptions {
    /// Number of mixture components (must be >= 1).
    pub n_components: usize,
    /// Covariance structure.
    pub covariance: GmmotCovariance,
    /// Covariance regularization added to every diagonal. Non-finite or
    /// non-positive means "choose automatically from the data scale".
    pub reg_eps: f64,
    /// Relative log-likelihood change below which fitting stops.
    pub tol: f64,
    /// Maximum EM iterations per restart.
    pub max_iter: usize,
    /// Number of differently-seeded restarts; the best fit wins.
    pub n_restarts: usize,
    /// Seed for deterministic initialization.
    pub seed: u64,
}

/// Opaque handle to a Gaussian mixture model.
pub struct GmmotModel(Gmm);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn status_for(error: &Error) -> GmmotStatus {
    match error {
        Error::DegenerateComponent { .. }
        | Error::EmptyComponent { .. }
        | Error::NumericalStall { .. }
        | Error::InfeasibleMarginals { .. } => GmmotStatus::Compute,
        Error::MalformedModel { .. } => GmmotStatus::Parse,
        _ => GmmotStatus::InvalidArgument,
    }
}

fn fail(error: &Error) -> GmmotStatus {
    set_error(&error.to_string());
    status_for(error)
}

fn invalid(message: &str) -> GmmotStatus {
    set_error(message);
    GmmotStatus::InvalidArgument
}

fn guard<F: FnOnce() -> GmmotStatus>(body: F) -> GmmotStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            GmmotStatus::Panic
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gmmot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on the calling thread, as a
/// NUL-terminated string. Empty if no call on this thread has failed. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gmmot_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Fills `options` with the default fitting parameters.
///
/// # Safety
/// `options` must point to writable memory for one `GmmotFitOptions`.
#[no_mangle]
pub unsafe extern "C" fn gmmot_fit_options_default(options: *mut GmmotFitOptions) {
    if options.is_null() {
        return;
    }
    let defaults = FitConfig::default();
    options.write(GmmotFitOptions {
        n_components: defaults.n_components,
        covariance: GmmotCovariance::Full,
        reg_eps: f64::NAN,
        tol: defaults.tol,
        max_iter: defaults.max_iter,
        n_restarts: defaults.n_restarts,
        seed: defaults.seed,
    });
}

fn config_from(options: &GmmotFitOptions) -> FitConfig {
    FitConfig {
        n_components: options.n_components,
        covariance_type: match options.covariance {
            GmmotCovariance::Full => CovarianceType::Full,
            GmmotCovariance::Diagonal => CovarianceType::Diagonal,
        },
        reg_eps: (options.reg_eps.is_finite() && options.reg_eps > 0.0)
            .then_some(options.reg_eps),
        tol: options.tol,
        max_iter: options.max_iter,
        n_restarts: options.n_restarts,
        seed: options.seed,
    }
}

/// Fits a mixture model to `rows` observations of `cols` coordinates laid
/// out row-major in `data`. On success stores a new handle in `out_model`;
/// the caller owns it and must release it with `gmmot_model_free`.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out_model` to a
/// writable pointer slot. A null `options` selects the defaults; otherwise
/// it must point to a readable `GmmotFitOptions`.
#[no_mangle]
pub unsafe extern "C" fn gmmot_fit(
    data: *const f64,
    rows: usize,
    cols: usize,
    options: *const GmmotFitOptions,
    out_model: *mut *mut GmmotModel,
) -> GmmotStatus {
    guard(|| {
        if data.is_null() || out_model.is_null() {
            return invalid("gmmot_fit: null pointer argument");
        }
        if rows == 0 || cols == 0 {
            return invalid("gmmot_fit: rows and cols must be positive");
        }
        let config = if options.is_null() {
            FitConfig::default()
        } else {
            config_from(&*options)
        };
        let values = std::slice::from_raw_parts(data, rows * cols);
        let matrix = DMatrix::from_row_slice(rows, cols, values);
        match fit(&matrix, &config) {
            Ok((model, _)) => {
                out_model.write(Box::into_raw(Box::new(GmmotModel(model))));
                GmmotStatus::Ok
            }
            Err(error) => fail(&error),
        }
    })
}

/// Parses a serialized model (the JSON produced by
/// `gmmot_model_serialize` or the CLI). On success stores a new handle in
/// `out_model`; the caller owns it.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out_model` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_parse(
    bytes: *const u8,
    len: usize,
    out_model: *mut *mut GmmotModel,
) -> GmmotStatus {
    guard(|| {
        if bytes.is_null() || out_model.is_null() {
            return invalid("gmmot_model_parse: null pointer argument");
        }
        let slice = std::slice::from_raw_parts(bytes, len);
        match load_model(slice) {
            Ok(model) => {
                out_model.write(Box::into_raw(Box::new(GmmotModel(model))));
                GmmotStatus::Ok
            }
            Err(error) => fail(&error),
        }
    })
}

/// Serializes `model` to JSON. On success stores a fresh byte buffer and
/// its length; release the buffer with `gmmot_bytes_free`. The bytes are
/// valid UTF-8 and are not NUL-terminated.
///
/// # Safety
/// `model` must be a live handle; `out_bytes` and `out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_serialize(
    model: *const GmmotModel,
    out_bytes: *mut *mut u8,
    out_len: *mut usize,
) -> GmmotStatus {
    guard(|| {
        if model.is_null() || out_bytes.is_null() || out_len.is_null() {
            return invalid("gmmot_model_serialize: null pointer argument");
        }
        let boxed = save_model(&(*model).0).into_boxed_slice();
        out_len.write(boxed.len());
        out_bytes.write(Box::into_raw(boxed) as *mut u8);
        GmmotStatus::Ok
    })
}

/// Releases a buffer produced by `gmmot_model_serialize`. `len` must be
/// the length that call reported. A null `bytes` is a no-op.
///
/// # Safety
/// `bytes`/`len` must come from one `gmmot_model_serialize` call, unfreed.
#[no_mangle]
pub unsafe extern "C" fn gmmot_bytes_free(bytes: *mut u8, len: usize) {
    if !bytes.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(
            bytes, len,
        )));
    }
}

/// Releases a model handle. A null handle is a no-op.
///
/// # Safety
/// `model` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_free(model: *mut GmmotModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the model's observation space, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_dim(model: *const GmmotModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).0.dim()
    }
}

/// Number of mixture components, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_n_components(model: *const GmmotModel) -> usize {
    if model.is_null() {
        0
    } else {
        (*model).0.n_components()
    }
}

/// Copies the component weights into `out`, which must hold exactly
/// `gmmot_model_n_components(model)` doubles.
///
/// # Safety
/// `model` must be a live handle; `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_weights(
    model: *const GmmotModel,
    out: *mut f64,
    len: usize,
) -> GmmotStatus {
    guard(|| {
        if model.is_null() || out.is_null() {
            return invalid("gmmot_model_weights: null pointer argument");
        }
        let weights = (*model).0.weights();
        if weights.len() != len {
            return invalid(&format!(
                "gmmot_model_weights: buffer holds {len} values, model has {}",
                weights.len()
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(weights);
        GmmotStatus::Ok
    })
}

/// Copies component `index`'s mean (`dim` doubles) into `out_mean` and its
/// covariance (`dim * dim` doubles, row-major) into `out_cov`. Either
/// output may be null to skip it.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable at the
/// sizes above for `dim = gmmot_model_dim(model)`.
#[no_mangle]
pub unsafe extern "C" fn gmmot_model_component(
    model: *const GmmotModel,
    index: usize,
    out_mean: *mut f64,
    out_cov: *mut f64,
) -> GmmotStatus {
    guard(|| {
        if model.is_null() {
            return invalid("gmmot_model_component: null model");
        }
        let mixture = &(*model).0;
        if index >= mixture.n_components() {
            return invalid(&format!(
                "gmmot_model_component: index {index} out of range for {} components",
                mixture.n_components()
            ));
        }
        let component = &mixture.components()[index];
        let dim = mixture.dim();
        if !out_mean.is_null() {
            std::slice::from_raw_parts_mut(out_mean, dim)
                .copy_from_slice(component.mean().as_slice());
        }
        if !out_cov.is_null() {
            let cov = std::slice::from_raw_parts_mut(out_cov, dim * dim);
            for row in 0..dim {
                for col in 0..dim {
                    cov[row * dim + col] = component.cov()[(row, col)];
                }
            }
        }
        GmmotStatus::Ok
    })
}

/// Mixture transport distance between two models of equal dimension. The
/// distance is stored in `out_distance`; the raw transport objective (the
/// cost-weighted flow total before any root) is stored in `out_objective`
/// unless that pointer is null.
///
/// # Safety
/// `a` and `b` must be live handles; `out_distance` must be writable;
/// `out_objective` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn gmmot_wasserstein(
    a: *const GmmotModel,
    b: *const GmmotModel,
    cost: GmmotCost,
    out_distance: *mut f64,
    out_objective: *mut f64,
) -> GmmotStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out_distance.is_null() {
            return invalid("gmmot_wasserstein: null pointer argument");
        }
        let convention = match cost {
            GmmotCost::Squared => CostConvention::Squared,
            GmmotCost::Linear => CostConvention::Linear,
        };
        match gmm_wasserstein_with(&(*a).0, &(*b).0, convention) {
            Ok((distance, plan)) => {
                out_distance.write(distance);
                if !out_objective.is_null() {
                    out_objective.write(plan.objective());
                }
                GmmotStatus::Ok
            }
            Err(error) => fail(&error),
        }
    })
}

/// Squared 2-Wasserstein distance between two Gaussians given as a mean
/// (`dim` doubles) and a row-major covariance (`dim * dim` doubles) each.
///
/// # Safety
/// The four input pointers must be readable at the sizes above; `out_value`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn gmmot_gaussian_w2_squared(
    mean_a: *const f64,
    cov_a: *const f64,
    mean_b: *const f64,
    cov_b: *const f64,
    dim: usize,
    out_value: *mut f64,
) -> GmmotStatus {
    guard(|| {
        if mean_a.is_null()
            || cov_a.is_null()
            || mean_b.is_null()
            || cov_b.is_null()
            || out_value.is_null()
        {
            return invalid("gmmot_gaussian_w2_squared: null pointer argument");
        }
        if dim == 0 {
            return invalid("gmmot_gaussian_w2_squared: dim must be positive");
        }
        let build = |mean: *const f64, cov: *const f64| -> Result<Gaussian, Error> {
            let mean = DVector::from_column_slice(std::slice::from_raw_parts(mean, dim));
            let cov =
                DMatrix::from_row_slice(dim, dim, std::slice::from_raw_parts(cov, dim * dim));
            Gaussian::new(mean, cov)
        };
        let result = build(mean_a, cov_a)
            .and_then(|a| build(mean_b, cov_b).map(|b| (a, b)))
            .and_then(|(a, b)| gaussian_w2_squared(&a, &b));
        match result {
            Ok(value) => {
                out_value.write(value);
                GmmotStatus::Ok
            }
            Err(error) => fail(&error),
        }
    })
}
