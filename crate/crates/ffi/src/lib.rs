//! C ABI over the concept-goodness library.
//!
//! Every function returns a [`CgStatus`]; results go through out-pointers.
//! On failure, [`cg_last_error_message`] describes the error for the calling
//! thread. Rating matrices are opaque handles created with
//! [`cg_rating_matrix_new`] and released with [`cg_rating_matrix_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use concept_goodness::reliability::{self, MeasurementLevel, RatingMatrix};
use concept_goodness::scoring::{Bucket, FactorScores, Weights};
use concept_goodness::{brevity, frequency, german, scoring, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgBucket {
    Bad = 0,
    Moderate = 1,
    Good = 2,
}

impl From<Bucket> for CgBucket {
    fn from(b: Bucket) -> Self {
        match b {
            Bucket::Bad => CgBucket::Bad,
            Bucket::Moderate => CgBucket::Moderate,
            Bucket::Good => CgBucket::Good,
        }
    }
}

impl From<CgBucket> for Bucket {
    fn from(b: CgBucket) -> Self {
        match b {
            CgBucket::Bad => Bucket::Bad,
            CgBucket::Moderate => Bucket::Moderate,
            CgBucket::Good => Bucket::Good,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgLevel {
    Nominal = 0,
    Ordinal = 1,
}

/// Opaque rating matrix.
pub struct CgRatingMatrix(RatingMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CgStatus, msg: impl Into<String>) -> CgStatus {
    set_last_error(msg);
    status
}

fn from_error(e: Error) -> CgStatus {
    let status = match e {
        Error::Degenerate(_) | Error::NoOverlap => CgStatus::Degenerate,
        _ => CgStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CgStatus) -> CgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(CgStatus::Panic, "internal panic"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> CgStatus {
    if out.is_null() {
        return fail(CgStatus::NullPointer, "output pointer is null");
    }
    // SAFETY: caller guarantees `out` points to writable storage for T.
    unsafe { out.write(value) };
    CgStatus::Ok
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, CgStatus> {
    if s.is_null() {
        return Err(fail(CgStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: caller guarantees a NUL-terminated string that outlives the call.
    unsafe { CStr::from_ptr(s) }
        .to_str()
        .map_err(|_| fail(CgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Brevity factor `1 - word_count / max_word_count`.
///
/// # Safety
/// `out` must be NULL or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn cg_brevity_score(word_count: u32, max_word_count: u32, out: *mut f64) -> CgStatus {
    guard(|| match brevity::brevity_score(word_count, max_word_count) {
        Ok(v) => unsafe { write_out(out, v) },
        Err(e) => from_error(e),
    })
}

/// Frequency factor `ln(1 + count) / ln(1 + max_count)`.
///
/// # Safety
/// `out` must be NULL or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn cg_frequency_score(count: u64, max_count: u64, out: *mut f64) -> CgStatus {
    guard(|| match frequency::frequency_score(count, max_count) {
        Ok(v) => unsafe { write_out(out, v) },
        Err(e) => from_error(e),
    })
}

/// German language mappability from English and German word counts.
///
/// # Safety
/// `out` must be NULL or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn cg_glm_score(
    source_word_count: u32,
    translated_word_count: u32,
    has_compound: bool,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        if source_word_count == 0 || translated_word_count == 0 {
            return fail(CgStatus::InvalidArgument, "word counts must be at least 1");
        }
        let v = german::glm_score_counts(source_word_count, translated_word_count, has_compound);
        unsafe { write_out(out, v) }
    })
}

/// Weighted mean of four factors (Br, FO, GLM, DP) under four integer
/// weights in `0..=100`, not all zero.
///
/// # Safety
/// `factors` and `weights` must each be NULL or point to four readable
/// elements; `out` must be NULL or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn cg_goodness(factors: *const f64, weights: *const u32, out: *mut f64) -> CgStatus {
    guard(|| {
        if factors.is_null() || weights.is_null() {
            return fail(CgStatus::NullPointer, "factors or weights is null");
        }
        // SAFETY: both point to four elements per the contract above.
        let (f, w) = unsafe { (*(factors as *const [f64; 4]), *(weights as *const [u32; 4])) };
        let f = match FactorScores::new(f[0], f[1], f[2], f[3]) {
            Ok(f) => f,
            Err(e) => return from_error(e),
        };
        match Weights::try_from(w) {
            Ok(w) => unsafe { write_out(out, scoring::goodness(&f, w)) },
            Err(e) => from_error(e),
        }
    })
}

/// Maps a five-level rating (1-5) to a bucket.
///
/// # Safety
/// `out` must be NULL or point to writable storage for one `CgBucket`.
#[no_mangle]
pub unsafe extern "C" fn cg_map_rating(level: u8, out: *mut CgBucket) -> CgStatus {
    guard(|| match reliability::map_rating(level) {
        Ok(b) => unsafe { write_out(out, b.into()) },
        Err(e) => from_error(e),
    })
}

/// New empty rating matrix; free it with [`cg_rating_matrix_free`].
#[no_mangle]
pub extern "C" fn cg_rating_matrix_new() -> *mut CgRatingMatrix {
    Box::into_raw(Box::new(CgRatingMatrix(RatingMatrix::new())))
}

/// Stores (or overwrites) one rater's bucket for one item.
///
/// # Safety
/// `matrix` must come from [`cg_rating_matrix_new`] and not be freed;
/// `rater` and `cui` must be NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn cg_rating_matrix_set(
    matrix: *mut CgRatingMatrix,
    rater: *const c_char,
    cui: *const c_char,
    bucket: CgBucket,
) -> CgStatus {
    guard(|| {
        // SAFETY: see the function contract.
        let Some(m) = (unsafe { matrix.as_mut() }) else {
            return fail(CgStatus::NullPointer, "matrix is null");
        };
        let (rater, cui) = match unsafe { (read_str(rater, "rater"), read_str(cui, "cui")) } {
            (Ok(r), Ok(c)) => (r, c),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        m.0.set(rater, cui, Some(bucket.into()));
        CgStatus::Ok
    })
}

/// Krippendorff's alpha over the matrix. Returns `CG_STATUS_DEGENERATE`
/// when alpha is undefined.
///
/// # Safety
/// `matrix` must come from [`cg_rating_matrix_new`] and not be freed; `out`
/// must be NULL or point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn cg_rating_matrix_alpha(
    matrix: *const CgRatingMatrix,
    level: CgLevel,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        // SAFETY: see the function contract.
        let Some(m) = (unsafe { matrix.as_ref() }) else {
            return fail(CgStatus::NullPointer, "matrix is null");
        };
        let level = match level {
            CgLevel::Nominal => MeasurementLevel::Nominal,
            CgLevel::Ordinal => MeasurementLevel::Ordinal,
        };
        match reliability::krippendorff_alpha(&m.0, level) {
            Ok(r) => unsafe { write_out(out, r.alpha) },
            Err(e) => from_error(e),
        }
    })
}

/// Releases a matrix. NULL is ignored.
///
/// # Safety
/// `matrix` must be NULL or come from [`cg_rating_matrix_new`], and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cg_rating_matrix_free(matrix: *mut CgRatingMatrix) {
    if !matrix.is_null() {
        // SAFETY: ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(matrix) });
    }
}
