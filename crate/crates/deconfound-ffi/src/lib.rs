//! C ABI over the core pipeline: dataset generation, spectral
//! deconfounding, and parent-set scoring.
//!
//! All functions return a `DcfStatus`; on error the message is retrievable
//! with `dcf_last_error`. Handles are opaque and must be released with the
//! matching `_free` function. Matrices cross the boundary as row-major
//! buffers.

use std::cell::RefCell;
use std::ffi::c_char;
use std::ptr;

use ndarray::{Array2, ArrayView2};

use deconfound::graph::{sample_confounder_attachment, sample_erdos_renyi};
use deconfound::pcss::{max_mse, pcss, PcssConfig, PcssResult};
use deconfound::scm::{sample_dataset, sample_instance, Dataset, ScmConfig};
use deconfound::scores::{ScoreKind, Scorer};
use deconfound::seed::child_seed;
use deconfound::Error;

/// Status codes mirroring the CLI exit-code contract: 0 success, 2 invalid
/// input, 3 numerical failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    NumericalFailure = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn status_from(err: Error) -> DcfStatus {
    let status = if err.exit_code() == 2 {
        DcfStatus::InvalidInput
    } else {
        DcfStatus::NumericalFailure
    };
    set_error(err.to_string());
    status
}

/// Copies the message from the most recent failing call on this thread into
/// `buf` (NUL-terminated, truncated to `len`). Returns the full message
/// length in bytes, excluding the terminator.
#[no_mangle]
pub extern "C" fn dcf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        let bytes = message.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Opaque generated dataset: X plus the optional H and S_true companions.
pub struct DcfDataset {
    inner: Dataset,
}

/// Opaque spectral-projection result.
pub struct DcfPcss {
    inner: PcssResult,
}

/// Generation settings for `dcf_generate`; a C mirror of the library's SCM
/// configuration plus the graph density and sample count.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DcfGenerateParams {
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub sigma_noise_sq: f64,
    pub sigma_h_sq: f64,
    /// Non-zero restricts every trend to the linear family.
    pub linear_only: u8,
    /// Non-zero removes the linear family from the non-linear draw.
    pub exclude_linear_trend: u8,
    pub attach_prob: f64,
    pub expected_neighborhood: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

#[no_mangle]
pub extern "C" fn dcf_generate(
    params: *const DcfGenerateParams,
    out: *mut *mut DcfDataset,
) -> DcfStatus {
    if params.is_null() || out.is_null() {
        set_error("null pointer argument");
        return DcfStatus::NullArgument;
    }
    let params = unsafe { *params };
    let config = ScmConfig {
        p: params.p,
        k: params.k,
        sigma_noise_sq: params.sigma_noise_sq,
        sigma_h_sq: params.sigma_h_sq,
        linear_only: params.linear_only != 0,
        exclude_linear_trend: params.exclude_linear_trend != 0,
        attach_prob: params.attach_prob,
        mc_samples: params.mc_samples,
    };
    let result = (|| {
        config.validate()?;
        let dag = sample_erdos_renyi(
            config.p,
            params.expected_neighborhood,
            child_seed(params.seed, "graph", 0),
        )?;
        let att = sample_confounder_attachment(
            config.p,
            config.k,
            config.attach_prob,
            child_seed(params.seed, "attachment", 0),
        )?;
        let instance = sample_instance(&config, &dag, &att, child_seed(params.seed, "instance", 0))?;
        sample_dataset(&instance, params.n, child_seed(params.seed, "dataset", 0))
    })();
    match result {
        Ok(dataset) => {
            unsafe { *out = Box::into_raw(Box::new(DcfDataset { inner: dataset })) };
            DcfStatus::Ok
        }
        Err(err) => status_from(err),
    }
}

#[no_mangle]
pub extern "C" fn dcf_dataset_rows(dataset: *const DcfDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    unsafe { &*dataset }.inner.n()
}

#[no_mangle]
pub extern "C" fn dcf_dataset_cols(dataset: *const DcfDataset) -> usize {
    if dataset.is_null() {
        return 0;
    }
    unsafe { &*dataset }.inner.p()
}

#[no_mangle]
pub extern "C" fn dcf_dataset_has_s_true(dataset: *const DcfDataset) -> u8 {
    if dataset.is_null() {
        return 0;
    }
    unsafe { &*dataset }.inner.s_true.is_some() as u8
}

fn copy_matrix(matrix: &Array2<f64>, buf: *mut f64, len: usize) -> DcfStatus {
    let needed = matrix.len();
    if buf.is_null() {
        set_error("null buffer");
        return DcfStatus::NullArgument;
    }
    if len < needed {
        set_error(format!("buffer holds {len} values, need {needed}"));
        return DcfStatus::InvalidInput;
    }
    let slice = unsafe { std::slice::from_raw_parts_mut(buf, needed) };
    for (dst, src) in slice.iter_mut().zip(matrix.iter()) {
        *dst = *src;
    }
    DcfStatus::Ok
}

/// Copies X row-major into `buf` (`len` in f64 elements, at least N*p).
#[no_mangle]
pub extern "C" fn dcf_dataset_copy_x(
    dataset: *const DcfDataset,
    buf: *mut f64,
    len: usize,
) -> DcfStatus {
    if dataset.is_null() {
        set_error("null dataset handle");
        return DcfStatus::NullArgument;
    }
    copy_matrix(&unsafe { &*dataset }.inner.x, buf, len)
}

/// Copies S_true row-major; fails when the generator could not compute it.
#[no_mangle]
pub extern "C" fn dcf_dataset_copy_s_true(
    dataset: *const DcfDataset,
    buf: *mut f64,
    len: usize,
) -> DcfStatus {
    if dataset.is_null() {
        set_error("null dataset handle");
        return DcfStatus::NullArgument;
    }
    match &unsafe { &*dataset }.inner.s_true {
        Some(s) => copy_matrix(s, buf, len),
        None => {
            set_error("dataset has no ground-truth sufficient statistics");
            DcfStatus::InvalidInput
        }
    }
}

#[no_mangle]
pub extern "C" fn dcf_dataset_free(dataset: *mut DcfDataset) {
    if !dataset.is_null() {
        drop(unsafe { Box::from_raw(dataset) });
    }
}

fn view_matrix<'a>(
    data: *const f64,
    rows: usize,
    cols: usize,
) -> Result<ArrayView2<'a, f64>, DcfStatus> {
    if data.is_null() {
        set_error("null matrix pointer");
        return Err(DcfStatus::NullArgument);
    }
    if rows == 0 || cols == 0 {
        set_error("matrix dimensions must be positive");
        return Err(DcfStatus::InvalidInput);
    }
    let slice = unsafe { std::slice::from_raw_parts(data, rows * cols) };
    ArrayView2::from_shape((rows, cols), slice).map_err(|e| {
        set_error(e.to_string());
        DcfStatus::InvalidInput
    })
}

/// Runs the spectral projection on a row-major N×p matrix, keeping the top
/// `m` components.
#[no_mangle]
pub extern "C" fn dcf_pcss(
    x: *const f64,
    rows: usize,
    cols: usize,
    m: usize,
    out: *mut *mut DcfPcss,
) -> DcfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DcfStatus::NullArgument;
    }
    let view = match view_matrix(x, rows, cols) {
        Ok(v) => v,
        Err(status) => return status,
    };
    match pcss(&view.to_owned(), &PcssConfig { m, center: true }) {
        Ok(result) => {
            unsafe { *out = Box::into_raw(Box::new(DcfPcss { inner: result })) };
            DcfStatus::Ok
        }
        Err(err) => status_from(err),
    }
}

#[no_mangle]
pub extern "C" fn dcf_pcss_copy_s_hat(
    handle: *const DcfPcss,
    buf: *mut f64,
    len: usize,
) -> DcfStatus {
    if handle.is_null() {
        set_error("null pcss handle");
        return DcfStatus::NullArgument;
    }
    copy_matrix(&unsafe { &*handle }.inner.s_hat, buf, len)
}

#[no_mangle]
pub extern "C" fn dcf_pcss_eigenvalue_count(handle: *const DcfPcss) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.inner.eigenvalues.len()
}

#[no_mangle]
pub extern "C" fn dcf_pcss_copy_eigenvalues(
    handle: *const DcfPcss,
    buf: *mut f64,
    len: usize,
) -> DcfStatus {
    if handle.is_null() {
        set_error("null pcss handle");
        return DcfStatus::NullArgument;
    }
    let eig = &unsafe { &*handle }.inner.eigenvalues;
    if buf.is_null() {
        set_error("null buffer");
        return DcfStatus::NullArgument;
    }
    if len < eig.len() {
        set_error(format!("buffer holds {len} values, need {}", eig.len()));
        return DcfStatus::InvalidInput;
    }
    let slice = unsafe { std::slice::from_raw_parts_mut(buf, eig.len()) };
    slice.copy_from_slice(eig);
    DcfStatus::Ok
}

#[no_mangle]
pub extern "C" fn dcf_pcss_free(handle: *mut DcfPcss) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Worst-per-column mean squared error between two row-major N×p matrices.
#[no_mangle]
pub extern "C" fn dcf_max_mse(
    estimate: *const f64,
    truth: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> DcfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DcfStatus::NullArgument;
    }
    let est = match view_matrix(estimate, rows, cols) {
        Ok(v) => v,
        Err(status) => return status,
    };
    let tru = match view_matrix(truth, rows, cols) {
        Ok(v) => v,
        Err(status) => return status,
    };
    match max_mse(&est.to_owned(), &tru.to_owned(), None) {
        Ok(v) => {
            unsafe { *out = v };
            DcfStatus::Ok
        }
        Err(err) => status_from(err),
    }
}

/// Score kinds exposed over the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcfScoreKind {
    VanillaBic = 0,
    PcssBic = 1,
    Cam = 2,
    CamObs = 3,
    DecamFound = 4,
}

impl DcfScoreKind {
    fn to_kind(self) -> ScoreKind {
        match self {
            DcfScoreKind::VanillaBic => ScoreKind::VanillaBic,
            DcfScoreKind::PcssBic => ScoreKind::PcssBic,
            DcfScoreKind::Cam => ScoreKind::Cam,
            DcfScoreKind::CamObs => ScoreKind::CamObs,
            DcfScoreKind::DecamFound => ScoreKind::DecamFound,
        }
    }
}

/// Scores one parent set. `s_hat` is required for PcssBic/DecamFound and
/// `h` (N×k_rows) for CamObs; pass null otherwise. `parents` may be null
/// when `n_parents` is zero.
#[no_mangle]
pub extern "C" fn dcf_score_parent_set(
    kind: DcfScoreKind,
    x: *const f64,
    rows: usize,
    cols: usize,
    s_hat: *const f64,
    h: *const f64,
    h_cols: usize,
    target: usize,
    parents: *const usize,
    n_parents: usize,
    out: *mut f64,
) -> DcfStatus {
    if out.is_null() {
        set_error("null output pointer");
        return DcfStatus::NullArgument;
    }
    let x_view = match view_matrix(x, rows, cols) {
        Ok(v) => v,
        Err(status) => return status,
    };
    let x_owned = x_view.to_owned();
    let s_owned = if s_hat.is_null() {
        None
    } else {
        match view_matrix(s_hat, rows, cols) {
            Ok(v) => Some(v.to_owned()),
            Err(status) => return status,
        }
    };
    let h_owned = if h.is_null() {
        None
    } else {
        match view_matrix(h, rows, h_cols) {
            Ok(v) => Some(v.to_owned()),
            Err(status) => return status,
        }
    };
    let parent_vec: Vec<usize> = if n_parents == 0 {
        Vec::new()
    } else {
        if parents.is_null() {
            set_error("null parent array with non-zero length");
            return DcfStatus::NullArgument;
        }
        unsafe { std::slice::from_raw_parts(parents, n_parents) }.to_vec()
    };

    let result = (|| {
        let scorer = Scorer::new(kind.to_kind(), &x_owned, s_owned.as_ref(), h_owned.as_ref())?;
        scorer.score_parent_set(target, &parent_vec)
    })();
    match result {
        Ok(value) => {
            unsafe { *out = value.log_score };
            DcfStatus::Ok
        }
        Err(err) => status_from(err),
    }
}
