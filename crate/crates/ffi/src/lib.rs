//! C interface to layerscope.
//!
//! Every function returns an `LsStatus`; on failure the message is available
//! from `ls_last_error_message` on the same thread. Handles are opaque and
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use layerscope::intrinsic_dim::{self, ProfileOptions, RatioSample, ScaleChoice, ScaleProfile};
use layerscope::io::{self, ActivationMatrix, DenseMatrix, Manifest};
use layerscope::rff::RffMap;
use layerscope::stats::{self, Method};
use layerscope::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullArgument = 1,
    NotFound = 2,
    Io = 3,
    /// Malformed LAM1, manifest, TSV or CSV input.
    Format = 4,
    Invalid = 5,
    Degenerate = 6,
    NotConverged = 7,
    Diverged = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsMethod {
    Pearson = 0,
    Spearman = 1,
}

/// A dense row-major matrix with its manifest.
pub struct LsMatrix {
    data: DenseMatrix,
    manifest: Manifest,
}

/// GRIDE scale profile of one point set.
pub struct LsIdProfile(ScaleProfile);

pub struct LsRffMap(RffMap);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::NotFound(_) => LsStatus::NotFound,
        Error::Io { .. } => LsStatus::Io,
        Error::Invalid { .. } | Error::Usage(_) => LsStatus::Invalid,
        Error::Degenerate { .. } => LsStatus::Degenerate,
        Error::NotConverged { .. } => LsStatus::NotConverged,
        Error::Diverged { .. } => LsStatus::Diverged,
        _ => LsStatus::Format,
    }
}

fn guard(f: impl FnOnce() -> Result<(), LsStatus>) -> LsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            LsStatus::Panic
        }
    }
}

fn fail(e: Error) -> LsStatus {
    let s = status_of(&e);
    set_error(format!("E:{}:{}: {e}", e.module(), e.code()));
    s
}

fn null(what: &str) -> LsStatus {
    set_error(format!("null pointer: {what}"));
    LsStatus::NullArgument
}

fn invalid(msg: &str) -> LsStatus {
    set_error(msg.to_string());
    LsStatus::Invalid
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, LsStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], LsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, LsStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, LsStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_from_rows(values: *const f64, rows: usize, cols: usize, out: *mut *mut LsMatrix) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = rows.checked_mul(cols).ok_or_else(|| invalid("rows * cols overflows"))?;
        let v = slice_arg(values, n, "values")?;
        let data = DenseMatrix::new(rows, cols, v.to_vec()).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsMatrix {
            data,
            manifest: Manifest::default(),
        }));
        Ok(())
    })
}

/// Reads a LAM1 file and its manifest sidecar, if any.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_read(path: *const c_char, out: *mut *mut LsMatrix) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path)?;
        let (data, manifest) = io::read_matrix(&path).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsMatrix {
            data,
            manifest: manifest.unwrap_or_default(),
        }));
        Ok(())
    })
}

/// Writes the matrix as LAM1 plus manifest sidecar.
///
/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_write(m: *const LsMatrix, path: *const c_char) -> LsStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        let path = path_arg(path)?;
        io::write_matrix(&m.data, &m.manifest, &path).map_err(fail)
    })
}

/// # Safety
/// `m` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_rows(m: *const LsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.data.rows())
}

/// # Safety
/// `m` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_cols(m: *const LsMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.data.cols())
}

/// Layer index from the matrix manifest.
///
/// # Safety
/// `m` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_layer(m: *const LsMatrix) -> u32 {
    m.as_ref().map_or(0, |m| m.manifest.layer)
}

/// Copies the row-major values into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_copy(m: *const LsMatrix, out: *mut f64, len: usize) -> LsStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        let v = m.data.values();
        if len != v.len() {
            return Err(invalid(&format!("buffer holds {len} values, matrix has {}", v.len())));
        }
        if out.is_null() && len > 0 {
            return Err(null("out"));
        }
        if len > 0 {
            ptr::copy_nonoverlapping(v.as_ptr(), out, len);
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_matrix_free(m: *mut LsMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// GRIDE estimate from distance ratios at scale `k`.
///
/// # Safety
/// `ratios` must point to `n` doubles; `id` and `stderr_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_gride_mle(ratios: *const f64, n: usize, k: usize, d_max: f64, id: *mut f64, stderr_out: *mut f64) -> LsStatus {
    guard(|| {
        let id = out_arg(id, "id")?;
        let se = out_arg(stderr_out, "stderr_out")?;
        let r = slice_arg(ratios, n, "ratios")?;
        let sample = RatioSample::new(k, r.to_vec()).map_err(fail)?;
        let fit = intrinsic_dim::gride_mle(&sample, d_max).map_err(fail)?;
        *id = fit.id;
        *se = fit.stderr;
        Ok(())
    })
}

/// Scale profile of the matrix rows; `k = 0` selects the plateau scale.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_id_profile(m: *const LsMatrix, max_exp: u32, k: usize, bootstraps: usize, seed: u64, out: *mut *mut LsIdProfile) -> LsStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        let out = out_arg(out, "out")?;
        let points = ActivationMatrix::new(m.data.clone(), m.manifest.clone()).map_err(fail)?;
        let opts = ProfileOptions {
            max_exp,
            choice: if k == 0 { ScaleChoice::Auto } else { ScaleChoice::Fixed(k) },
            bootstraps,
            seed,
        };
        let p = intrinsic_dim::gride_scale_profile(&points, &opts).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsIdProfile(p)));
        Ok(())
    })
}

/// Number of scales in the profile.
///
/// # Safety
/// `p` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn ls_id_profile_len(p: *const LsIdProfile) -> usize {
    p.as_ref().map_or(0, |p| p.0.scales.len())
}

/// Scale `i` of the profile: its k, estimate and standard error.
///
/// # Safety
/// `p` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_id_profile_scale(p: *const LsIdProfile, i: usize, k: *mut usize, id: *mut f64, stderr_out: *mut f64) -> LsStatus {
    guard(|| {
        let p = &handle(p, "profile")?.0;
        let (k, id, se) = (out_arg(k, "k")?, out_arg(id, "id")?, out_arg(stderr_out, "stderr_out")?);
        if i >= p.scales.len() {
            return Err(invalid(&format!("scale index {i} out of range ({})", p.scales.len())));
        }
        *k = p.scales[i];
        *id = p.estimates[i];
        *se = p.stderr[i];
        Ok(())
    })
}

/// Chosen scale, its estimate, and the bootstrap mean and standard deviation.
///
/// # Safety
/// `p` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_id_profile_chosen(p: *const LsIdProfile, k: *mut usize, id: *mut f64, bootstrap_mean: *mut f64, bootstrap_sd: *mut f64) -> LsStatus {
    guard(|| {
        let p = &handle(p, "profile")?.0;
        *out_arg(k, "k")? = p.chosen_k;
        *out_arg(id, "id")? = p.chosen_id;
        *out_arg(bootstrap_mean, "bootstrap_mean")? = p.bootstrap_mean;
        *out_arg(bootstrap_sd, "bootstrap_sd")? = p.bootstrap_sd;
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_id_profile_free(p: *mut LsIdProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// PCA dimension at 99% explained variance and participation ratio.
///
/// # Safety
/// `m` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_linear_dims(m: *const LsMatrix, pca_d: *mut usize, pr_d: *mut f64) -> LsStatus {
    guard(|| {
        let m = handle(m, "matrix")?;
        let (pca, pr) = (out_arg(pca_d, "pca_d")?, out_arg(pr_d, "pr_d")?);
        let points = ActivationMatrix::new(m.data.clone(), m.manifest.clone()).map_err(fail)?;
        let dims = intrinsic_dim::linear_dims(&points).map_err(fail)?;
        *pca = dims.pca_d;
        *pr = dims.pr_d;
        Ok(())
    })
}

/// Correlation of `x` and `y` with a two-sided permutation p-value.
///
/// # Safety
/// `x` and `y` must point to `n` doubles; `rho` and `p_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_permutation_test(
    x: *const f64,
    y: *const f64,
    n: usize,
    method: LsMethod,
    n_permutations: usize,
    seed: u64,
    rho: *mut f64,
    p_value: *mut f64,
) -> LsStatus {
    guard(|| {
        let (x, y) = (slice_arg(x, n, "x")?, slice_arg(y, n, "y")?);
        let (rho, p) = (out_arg(rho, "rho")?, out_arg(p_value, "p_value")?);
        let method = match method {
            LsMethod::Pearson => Method::Pearson,
            LsMethod::Spearman => Method::Spearman,
        };
        let r = stats::permutation_test(x, y, method, n_permutations, seed).map_err(fail)?;
        *rho = r.rho;
        *p = r.p_value;
        Ok(())
    })
}

/// Seeded random Fourier feature map R^d_in -> R^d_out for an RBF kernel of width `sigma`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_rff_map_new(d_in: usize, d_out: usize, sigma: f64, seed: u64, out: *mut *mut LsRffMap) -> LsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let map = RffMap::new(d_in, d_out, sigma, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsRffMap(map)));
        Ok(())
    })
}

/// Maps one vector; `x` holds d_in values and `out` d_out values.
///
/// # Safety
/// `map` must be a live handle; `x` and `out` must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ls_rff_apply(map: *const LsRffMap, x: *const f64, x_len: usize, out: *mut f64, out_len: usize) -> LsStatus {
    guard(|| {
        let map = &handle(map, "map")?.0;
        let x = slice_arg(x, x_len, "x")?;
        if out_len != map.d_out() {
            return Err(invalid(&format!("output holds {out_len} values, map produces {}", map.d_out())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let phi = map.apply(x).map_err(fail)?;
        ptr::copy_nonoverlapping(phi.as_ptr(), out, out_len);
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ls_rff_map_free(map: *mut LsRffMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}
