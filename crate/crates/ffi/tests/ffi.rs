use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fmlab_ffi::*;

fn last_error() -> String {
    let p = fm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn kernel(text: &str) -> *mut FmKernel {
    let text = CString::new(text).unwrap();
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { fm_kernel_parse(text.as_ptr(), 1, &mut k) }, FmStatus::Ok);
    k
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(fm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn kernel_transform_and_errors() {
    let k = kernel("exp(m=2)");
    let mut z = FmComplex { re: 0.0, im: 0.0 };
    assert_eq!(unsafe { fm_kernel_transform(k, [1.0].as_ptr(), 1, &mut z) }, FmStatus::Ok);
    // 2m/(m² + ξ²)
    assert!((z.re - 0.8).abs() < 1e-15 && z.im.abs() < 1e-15);
    assert_eq!(unsafe { fm_kernel_transform(k, [1.0, 2.0].as_ptr(), 2, &mut z) }, FmStatus::DimensionMismatch);
    unsafe { fm_kernel_free(k) };

    let bad = CString::new("exp(q=1)").unwrap();
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { fm_kernel_parse(bad.as_ptr(), 1, &mut k) }, FmStatus::ParseError);
    assert!(k.is_null());
    assert!(last_error().contains("exp(q=1)"));
    assert_eq!(unsafe { fm_kernel_parse(ptr::null(), 1, &mut k) }, FmStatus::NullPointer);
    unsafe { fm_kernel_free(ptr::null_mut()) };
}

#[test]
fn operator_resolvent_solves_shifted_system() {
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { fm_operator_laplacian(4, std::f64::consts::PI, 1.0, &mut op) }, FmStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { fm_operator_dim(op, &mut n) }, FmStatus::Ok);
    assert_eq!(n, 4);
    let b: Vec<FmComplex> = (0..4).map(|i| FmComplex { re: i as f64, im: 1.0 }).collect();
    let mut x = vec![FmComplex { re: 0.0, im: 0.0 }; 4];
    let lambda = FmComplex { re: 2.0, im: 0.5 };
    assert_eq!(unsafe { fm_operator_resolvent_apply(op, lambda, b.as_ptr(), x.as_mut_ptr(), 4) }, FmStatus::Ok);

    // (A + λ)x = b with A read back through the parser-independent path
    let a = fmlab::sectorial::SectorialOperator::dirichlet_laplacian(4, std::f64::consts::PI, 1.0).unwrap();
    let xv = fmlab::linalg::CVector::from_iterator(4, x.iter().map(|z| num_complex::Complex64::new(z.re, z.im)));
    let lhs = a.apply(&xv) + xv * num_complex::Complex64::new(2.0, 0.5);
    for (l, r) in lhs.iter().zip(&b) {
        assert!((l.re - r.re).abs() < 1e-12 && (l.im - r.im).abs() < 1e-12);
    }

    let outside = FmComplex { re: -5.0, im: 0.0 };
    assert_eq!(
        unsafe { fm_operator_resolvent_apply(op, outside, b.as_ptr(), x.as_mut_ptr(), 4) },
        FmStatus::OutsideSector
    );
    assert_eq!(
        unsafe { fm_operator_resolvent_apply(op, lambda, b.as_ptr(), x.as_mut_ptr(), 3) },
        FmStatus::DimensionMismatch
    );
    unsafe { fm_operator_free(op) };
}

#[test]
fn gap_check() {
    let mut pass = -1;
    assert_eq!(unsafe { fm_check_gap(2.0, 4.0, 1, &mut pass) }, FmStatus::Ok);
    assert_eq!(pass, 1);
    assert_eq!(unsafe { fm_check_gap(1.1, 10.0, 30, &mut pass) }, FmStatus::Ok);
    assert_eq!(pass, 0);
    assert_eq!(unsafe { fm_check_gap(0.5, 4.0, 1, &mut pass) }, FmStatus::InvalidArgument);
}

#[test]
fn parabolic_solve_matches_scalar_solution() {
    // u' + u = f with u = sin(ωt) on a periodic box
    let (n_t, l) = (128usize, 5.0);
    let w = std::f64::consts::PI / l;
    let h = 2.0 * l / n_t as f64;
    let node = |j: usize| -l + j as f64 * h;
    let f: Vec<FmComplex> =
        (0..n_t).map(|j| FmComplex { re: w * (w * node(j)).cos() + (w * node(j)).sin(), im: 0.0 }).collect();
    let (a1, b1) = (kernel("zero"), kernel("zero"));
    let name = CString::new("scalar(1)").unwrap();
    let mut op = ptr::null_mut();
    assert_eq!(unsafe { fm_operator_parse(name.as_ptr(), &mut op) }, FmStatus::Ok);
    let one = FmComplex { re: 1.0, im: 0.0 };
    let mut u = vec![FmComplex { re: 0.0, im: 0.0 }; n_t];
    let mut report = FmParabolicReport {
        residual: f64::NAN,
        norm_u_prime: 0.0,
        norm_conv_u_prime: 0.0,
        norm_au: 0.0,
        norm_conv_au: 0.0,
        norm_f: 0.0,
        ratio_c: 0.0,
    };
    let status =
        unsafe { fm_solve_parabolic(one, a1, one, b1, op, f.as_ptr(), n_t, l, 2.0, u.as_mut_ptr(), &mut report) };
    assert_eq!(status, FmStatus::Ok, "{}", last_error());
    for (j, z) in u.iter().enumerate() {
        assert!((z.re - (w * node(j)).sin()).abs() < 1e-10 && z.im.abs() < 1e-10);
    }
    assert!(report.residual < 1e-12 && report.ratio_c.is_finite());

    // b0 = 0 with b1 = 0 violates the coefficient condition
    let zero = FmComplex { re: 0.0, im: 0.0 };
    let status =
        unsafe { fm_solve_parabolic(one, a1, zero, b1, op, f.as_ptr(), n_t, l, 2.0, u.as_mut_ptr(), &mut report) };
    assert_eq!(status, FmStatus::HypothesisFailed);
    assert!(last_error().contains("(1)"), "{}", last_error());
    unsafe {
        fm_kernel_free(a1);
        fm_kernel_free(b1);
        fm_operator_free(op);
    }
}

#[test]
fn rbound_of_two_scalars_is_exact() {
    let zs = [FmComplex { re: 1.0, im: 0.0 }, FmComplex { re: 2.0, im: 0.0 }];
    let mut est = 0.0;
    assert_eq!(unsafe { fm_rbound_scalars(zs.as_ptr(), 2, 1, 2.0, 200, 2, 7, &mut est) }, FmStatus::Ok);
    assert!((est - 2.0).abs() < 1e-12, "{est}");
    assert_eq!(unsafe { fm_rbound_scalars(zs.as_ptr(), 2, 1, 2.0, 10, 2, 7, &mut est) }, FmStatus::InvalidArgument);
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("fmlab.h").exists());
    let lib = target_dir().join("libfmlab_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no C compiler or static library");
        return;
    }
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "fmlab.h"
int main(void) {
    FmKernel *k = NULL;
    if (fm_kernel_parse("exp(m=1)", 1, &k) != FM_STATUS_OK) return 1;
    double xi = 0.0;
    FmComplex z;
    if (fm_kernel_transform(k, &xi, 1, &z) != FM_STATUS_OK) return 2;
    fm_kernel_free(k);
    if (z.re != 2.0) return 3;
    if (fm_kernel_parse("nope", 1, &k) != FM_STATUS_PARSE_ERROR) return 4;
    if (strlen(fm_last_error_message()) == 0) return 5;
    int pass = -1;
    if (fm_check_gap(2.0, 4.0, 1, &pass) != FM_STATUS_OK || pass != 1) return 6;
    printf("%s\n", fm_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
