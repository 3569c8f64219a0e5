use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use cusp_ffi::*;

fn last_error() -> String {
    let p = cusp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn reference() -> *mut CuspModelHandle {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cusp_model_reference(&mut m) }, CuspStatus::Ok);
    m
}

#[test]
fn drift_and_hurst() {
    let m = reference();
    let mut v = 0.0;
    unsafe {
        assert_eq!(cusp_model_drift(m, 1.0, 2.0, &mut v), CuspStatus::Ok);
        assert_eq!(v, 2.0);
        assert_eq!(cusp_model_hurst(m, &mut v), CuspStatus::Ok);
        assert_eq!(v, 0.75);
        cusp_model_free(m);
    }
}

#[test]
fn invalid_model_reports_code_and_message() {
    let mut m = ptr::null_mut();
    let s = unsafe { cusp_model_new(1.0, 0.7, CuspHKind::Constant, 1.0, 0.0, 0.0, 3.0, 0.5, 1.5, &mut m) };
    assert_eq!(s, CuspStatus::InvalidModel);
    assert!(m.is_null());
    assert!(last_error().contains("kappa"));
}

#[test]
fn null_handles_are_rejected() {
    let mut v = 0.0;
    let s = unsafe { cusp_model_drift(ptr::null(), 1.0, 1.0, &mut v) };
    assert_eq!(s, CuspStatus::NullPointer);
    let m = reference();
    let s = unsafe { cusp_model_drift(m, 1.0, 1.0, ptr::null_mut()) };
    assert_eq!(s, CuspStatus::NullPointer);
    unsafe {
        cusp_model_free(m);
        cusp_model_free(ptr::null_mut());
        cusp_path_free(ptr::null_mut());
    }
}

#[test]
fn model_from_json_round_trip() {
    let json = CString::new(
        r#"{"a":1,"kappa":0.25,"h":{"name":"constant","params":{"c":1}},"x0":0,"T":3,"theta_lo":0.5,"theta_hi":1.5}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cusp_model_from_json(json.as_ptr(), &mut m) }, CuspStatus::Ok);
    let mut c = CuspLimitConstants::default();
    assert_eq!(unsafe { cusp_limit_constants(m, 1.0, &mut c) }, CuspStatus::Ok);
    assert!((c.gamma_sq - 0.511988584660498).abs() < 1e-9);
    assert!((c.gamma - c.gamma_sq.powf(1.0 / 1.5)).abs() < 1e-15);
    let bad = CString::new("{").unwrap();
    let mut m2 = ptr::null_mut();
    assert_eq!(
        unsafe { cusp_model_from_json(bad.as_ptr(), &mut m2) },
        CuspStatus::Config
    );
    unsafe { cusp_model_free(m) };
}

#[test]
fn validate_counts_violations() {
    let m = reference();
    let mut n = usize::MAX;
    unsafe {
        assert_eq!(cusp_model_validate(m, 1.0, 0.0, &mut n), CuspStatus::Ok);
        assert_eq!(n, 0);
        // A lower bound above h = 1 cannot hold.
        assert_eq!(cusp_model_validate(m, 2.0, 0.0, &mut n), CuspStatus::Ok);
        assert!(n >= 1);
        assert!(last_error().contains("h not separated from zero"));
        cusp_model_free(m);
    }
}

#[test]
fn simulate_copy_and_estimate() {
    let m = reference();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(cusp_simulate_path(m, 1.0, 0.05, 1200, 7, 0, &mut p), CuspStatus::Ok);
        let mut len = 0;
        assert_eq!(cusp_path_len(p, &mut len), CuspStatus::Ok);
        assert_eq!(len, 1201);
        let mut small = vec![0.0; 10];
        assert_eq!(
            cusp_path_values(p, small.as_mut_ptr(), small.len()),
            CuspStatus::BufferTooSmall
        );
        let mut vals = vec![0.0; len];
        let mut times = vec![0.0; len];
        assert_eq!(cusp_path_values(p, vals.as_mut_ptr(), len), CuspStatus::Ok);
        assert_eq!(cusp_path_times(p, times.as_mut_ptr(), len), CuspStatus::Ok);
        assert_eq!(vals[0], 0.0);
        assert_eq!(times[len - 1], 3.0);

        // Same data through the external-data constructor gives the same estimates.
        let mut q = ptr::null_mut();
        assert_eq!(
            cusp_path_from_values(times.as_ptr(), vals.as_ptr(), len, &mut q),
            CuspStatus::Ok
        );
        for kind in [CuspEstimator::Mle, CuspEstimator::Bayes, CuspEstimator::Mde] {
            let mut a = CuspEstimate::default();
            let mut b = CuspEstimate::default();
            assert_eq!(cusp_estimate(m, p, 0.05, kind, &mut a), CuspStatus::Ok);
            assert_eq!(cusp_estimate(m, q, 0.05, kind, &mut b), CuspStatus::Ok);
            assert_eq!(a, b);
            assert!(a.theta_hat > 0.5 && a.theta_hat < 1.5, "{kind:?}: {}", a.theta_hat);
        }

        let mut r = 0.0;
        let mut back = 0.0;
        assert_eq!(cusp_log_likelihood_ratio(m, p, 1.1, 0.9, 0.05, &mut r), CuspStatus::Ok);
        assert_eq!(
            cusp_log_likelihood_ratio(m, p, 0.9, 1.1, 0.05, &mut back),
            CuspStatus::Ok
        );
        assert_eq!(r, -back);
        cusp_path_free(p);
        cusp_path_free(q);
        cusp_model_free(m);
    }
}

#[test]
fn bad_path_data_is_a_shape_error() {
    let t = [0.0, 2.0, 1.0];
    let v = [0.0, 1.0, 2.0];
    let mut p = ptr::null_mut();
    let s = unsafe { cusp_path_from_values(t.as_ptr(), v.as_ptr(), 3, &mut p) };
    assert_eq!(s, CuspStatus::Shape);
    assert!(p.is_null());
}

#[test]
fn limit_ode_endpoint() {
    let m = reference();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(cusp_solve_limit_ode(m, 1.0, 3000, &mut p), CuspStatus::Ok);
        let mut len = 0;
        cusp_path_len(p, &mut len);
        let mut v = vec![0.0; len];
        cusp_path_values(p, v.as_mut_ptr(), len);
        assert!(v[len - 1] > 1.5);
        cusp_path_free(p);
        cusp_model_free(m);
    }
}

#[test]
fn ks_through_the_abi() {
    let a = [0.0, 0.0, 0.0];
    let b = [1.0, 1.0, 1.0];
    let mut d = 0.0;
    unsafe {
        assert_eq!(cusp_ks_distance(a.as_ptr(), 3, b.as_ptr(), 3, &mut d), CuspStatus::Ok);
        assert_eq!(d, 1.0);
        assert_eq!(
            cusp_ks_distance(a.as_ptr(), 0, b.as_ptr(), 3, &mut d),
            CuspStatus::InvalidArgument
        );
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(cusp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cusp.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
        }
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", "-std=c99"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cusp.h"))
        .status()
    else {
        eprintln!("no C compiler; syntax check skipped");
        return;
    };
    assert!(status.success());
}
