use std::ffi::{CStr, CString};
use std::ptr;

use concept_goodness_ffi::*;

fn last_error() -> String {
    let p = cg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_scores() {
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(cg_brevity_score(1, 202, &mut out), CgStatus::Ok);
        assert!((out - 201.0 / 202.0).abs() < 1e-12);
        assert_eq!(cg_brevity_score(202, 202, &mut out), CgStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(cg_frequency_score(0, 10, &mut out), CgStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(cg_glm_score(3, 1, true, &mut out), CgStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(cg_glm_score(3, 4, false, &mut out), CgStatus::Ok);
        assert_eq!(out, 0.8);
    }
    assert!(cg_last_error_message().is_null());
}

#[test]
fn goodness_weighted_mean() {
    let f = [0.99505, 0.5, 1.0, 1.0];
    let w = [22u32, 27, 31, 15];
    let mut out = 0.0;
    let status = unsafe { cg_goodness(f.as_ptr(), w.as_ptr(), &mut out) };
    assert_eq!(status, CgStatus::Ok);
    let oracle = (0.99505 * 22.0 + 0.5 * 27.0 + 31.0 + 15.0) / 95.0;
    assert!((out - oracle).abs() < 1e-12);

    let zero = [0u32; 4];
    assert_eq!(unsafe { cg_goodness(f.as_ptr(), zero.as_ptr(), &mut out) }, CgStatus::InvalidArgument);
    assert!(last_error().contains("zero"));
    assert_eq!(unsafe { cg_goodness(ptr::null(), w.as_ptr(), &mut out) }, CgStatus::NullPointer);
}

#[test]
fn errors_set_the_message() {
    let mut out = 0.0;
    assert_eq!(unsafe { cg_brevity_score(5, 0, &mut out) }, CgStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { cg_brevity_score(1, 2, ptr::null_mut()) }, CgStatus::NullPointer);
    assert_eq!(unsafe { cg_glm_score(0, 1, false, &mut out) }, CgStatus::InvalidArgument);
}

#[test]
fn rating_levels() {
    let mut b = CgBucket::Moderate;
    let expect = [
        (1, CgBucket::Bad),
        (2, CgBucket::Bad),
        (3, CgBucket::Moderate),
        (4, CgBucket::Good),
        (5, CgBucket::Good),
    ];
    for (level, bucket) in expect {
        assert_eq!(unsafe { cg_map_rating(level, &mut b) }, CgStatus::Ok);
        assert_eq!(b, bucket);
    }
    assert_eq!(unsafe { cg_map_rating(6, &mut b) }, CgStatus::InvalidArgument);
}

#[test]
fn matrix_handle_lifecycle() {
    let m = cg_rating_matrix_new();
    let set = |rater: &str, cui: &str, b: CgBucket| {
        let r = CString::new(rater).unwrap();
        let c = CString::new(cui).unwrap();
        unsafe { cg_rating_matrix_set(m, r.as_ptr(), c.as_ptr(), b) }
    };
    let mut alpha = 0.0;
    assert_eq!(set("a", "C1", CgBucket::Good), CgStatus::Ok);
    assert_eq!(unsafe { cg_rating_matrix_alpha(m, CgLevel::Nominal, &mut alpha) }, CgStatus::Degenerate);

    for (cui, b) in [("C1", CgBucket::Good), ("C2", CgBucket::Bad), ("C3", CgBucket::Moderate)] {
        assert_eq!(set("a", cui, b), CgStatus::Ok);
        assert_eq!(set("b", cui, b), CgStatus::Ok);
    }
    assert_eq!(unsafe { cg_rating_matrix_alpha(m, CgLevel::Nominal, &mut alpha) }, CgStatus::Ok);
    assert_eq!(alpha, 1.0);
    assert_eq!(unsafe { cg_rating_matrix_alpha(m, CgLevel::Ordinal, &mut alpha) }, CgStatus::Ok);
    assert_eq!(alpha, 1.0);

    assert_eq!(
        unsafe { cg_rating_matrix_set(m, ptr::null(), ptr::null(), CgBucket::Bad) },
        CgStatus::NullPointer
    );
    unsafe { cg_rating_matrix_free(m) };
    unsafe { cg_rating_matrix_free(ptr::null_mut()) };
    assert_eq!(
        unsafe { cg_rating_matrix_alpha(ptr::null(), CgLevel::Nominal, &mut alpha) },
        CgStatus::NullPointer
    );
}
