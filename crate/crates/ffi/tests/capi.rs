use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use layerscope_ffi::*;

fn last_error() -> String {
    let p = ls_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn hypercube(n: usize, d: usize) -> Vec<f64> {
    // splitmix64 stream mapped to [0, 1)
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    (0..n * d)
        .map(|_| {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            (z ^ (z >> 31)) as f64 / 2f64.powi(64)
        })
        .collect()
}

#[test]
fn matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.lam").to_str().unwrap()).unwrap();
    let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ls_matrix_from_rows(values.as_ptr(), 2, 3, &mut m), LsStatus::Ok);
        assert_eq!(ls_matrix_write(m, path.as_ptr()), LsStatus::Ok);
        ls_matrix_free(m);
        let mut back = ptr::null_mut();
        assert_eq!(ls_matrix_read(path.as_ptr(), &mut back), LsStatus::Ok);
        assert_eq!((ls_matrix_rows(back), ls_matrix_cols(back)), (2, 3));
        let mut out = [0.0; 6];
        assert_eq!(ls_matrix_copy(back, out.as_mut_ptr(), 6), LsStatus::Ok);
        assert_eq!(out, values);
        assert_eq!(ls_matrix_copy(back, out.as_mut_ptr(), 5), LsStatus::Invalid);
        ls_matrix_free(back);
    }
    assert!(ls_last_error_message().is_null() || !last_error().is_empty());
}

#[test]
fn error_codes_and_messages() {
    let missing = CString::new("/nonexistent/x.lam").unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ls_matrix_read(missing.as_ptr(), &mut m), LsStatus::NotFound);
        assert!(m.is_null());
        assert!(last_error().starts_with("E:core-io:not-found:"));
        assert_eq!(ls_matrix_read(ptr::null(), &mut m), LsStatus::NullArgument);
        let nan = [f64::NAN];
        assert_eq!(ls_matrix_from_rows(nan.as_ptr(), 1, 1, &mut m), LsStatus::Format);
        let ok = [1.0];
        assert_eq!(ls_matrix_from_rows(ok.as_ptr(), 1, 1, &mut m), LsStatus::Ok);
        assert!(ls_last_error_message().is_null());
        ls_matrix_free(m);
        ls_matrix_free(ptr::null_mut());
    }
}

#[test]
fn gride_closed_form() {
    // k = 1: the MLE is n / sum(ln mu)
    let mu = [1.5, 2.0, 1.2, 3.0, 1.1];
    let oracle = mu.len() as f64 / mu.iter().map(|v: &f64| v.ln()).sum::<f64>();
    let (mut id, mut se) = (0.0, 0.0);
    unsafe {
        assert_eq!(ls_gride_mle(mu.as_ptr(), mu.len(), 1, 1000.0, &mut id, &mut se), LsStatus::Ok);
    }
    assert!((id - oracle).abs() < 1e-9, "{id} vs {oracle}");
    assert!(se > 0.0);
}

#[test]
fn id_profile_on_plane() {
    let n = 2000;
    let pts = hypercube(n, 2);
    let mut m = ptr::null_mut();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(ls_matrix_from_rows(pts.as_ptr(), n, 2, &mut m), LsStatus::Ok);
        assert_eq!(ls_id_profile(m, 6, 4, 2, 1, &mut p), LsStatus::Ok);
        assert_eq!(ls_id_profile_len(p), 7);
        let (mut k, mut id, mut bm, mut bs) = (0usize, 0.0, 0.0, 0.0);
        assert_eq!(ls_id_profile_chosen(p, &mut k, &mut id, &mut bm, &mut bs), LsStatus::Ok);
        assert_eq!(k, 4);
        assert!((id - 2.0).abs() < 0.2, "{id}");
        let mut se = 0.0;
        assert_eq!(ls_id_profile_scale(p, 0, &mut k, &mut id, &mut se), LsStatus::Ok);
        assert_eq!(k, 1);
        assert_eq!(ls_id_profile_scale(p, 99, &mut k, &mut id, &mut se), LsStatus::Invalid);
        let (mut pca, mut pr) = (0usize, 0.0);
        assert_eq!(ls_linear_dims(m, &mut pca, &mut pr), LsStatus::Ok);
        assert_eq!(pca, 2);
        assert!((pr - 2.0).abs() < 0.05, "{pr}");
        ls_id_profile_free(p);
        ls_matrix_free(m);
    }
}

#[test]
fn permutation_and_rff() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = [2.0, 4.0, 5.0, 4.5, 8.0, 9.0];
    let (mut rho, mut p) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            ls_permutation_test(x.as_ptr(), y.as_ptr(), 6, LsMethod::Spearman, 999, 3, &mut rho, &mut p),
            LsStatus::Ok
        );
    }
    let oracle = layerscope::stats::spearman(&x, &y).unwrap();
    assert_eq!(rho, oracle);
    assert!(p > 0.0 && p < 0.1);

    let mut map = ptr::null_mut();
    let mut phi = vec![0.0; 256];
    unsafe {
        assert_eq!(ls_rff_map_new(4, 256, 1.0, 9, &mut map), LsStatus::Ok);
        assert_eq!(ls_rff_apply(map, x.as_ptr(), 4, phi.as_mut_ptr(), 256), LsStatus::Ok);
        let direct = layerscope::rff::RffMap::new(4, 256, 1.0, 9).unwrap().apply(&x[..4]).unwrap();
        assert_eq!(phi, direct);
        assert_eq!(ls_rff_apply(map, x.as_ptr(), 3, phi.as_mut_ptr(), 256), LsStatus::Invalid);
        ls_rff_map_free(map);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/layerscope.h")
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "typedef struct LsMatrix LsMatrix",
        "LS_STATUS_NOT_FOUND",
        "ls_matrix_read",
        "ls_id_profile_chosen",
        "ls_permutation_test",
        "ls_rff_apply",
        "ls_last_error_message",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a C program against the static library.
#[test]
fn c_program_links_and_runs() {
    let exe_dir = std::env::current_exe().unwrap();
    let profile_dir = exe_dir.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("liblayerscope_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "layerscope.h"
int main(void) {
    double v[4] = {1.0, 2.0, 3.0, 4.0};
    LsMatrix *m = NULL;
    if (ls_matrix_from_rows(v, 2, 2, &m) != LS_STATUS_OK) return 1;
    if (ls_matrix_rows(m) != 2) return 2;
    ls_matrix_free(m);
    if (ls_matrix_read("/nonexistent.lam", &m) != LS_STATUS_NOT_FOUND) return 3;
    if (strncmp(ls_last_error_message(), "E:core-io:not-found:", 20) != 0) return 4;
    printf("%s\n", ls_version());
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
