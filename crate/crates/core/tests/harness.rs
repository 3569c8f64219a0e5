//! Experiment orchestration, report statistics and the command line.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use cusp_core::estimators::EstimatorKind;
use cusp_core::harness::experiment::{estimates_file, failures_file, read_estimates, read_failures, write_estimates};
use cusp_core::harness::properties::{deviation_check, occupation_check, occupation_check_on};
use cusp_core::harness::report::KsStatus;
use cusp_core::harness::{build_report, run_experiment, ExperimentConfig, LimitSpec, Status};
use cusp_core::noise::stream_index;
use cusp_core::stats::{ks_distance, rate_regression};
use cusp_core::CuspError;

fn small(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::reference(dir);
    c.limit = LimitSpec {
        half_width: 15.0,
        n_per_side: 150,
        n_samples: 300,
    };
    c
}

#[test]
fn degenerate_run_marks_ks_insufficient() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.n_replicates = 1;
    c.eps_list = vec![0.1];
    c.estimators = vec![EstimatorKind::Mle];
    let r = run_experiment(&c).unwrap();
    let row = r.row(EstimatorKind::Mle, 0).unwrap();
    assert_eq!(row.successes, 1);
    assert_eq!(row.risk.n, 1);
    assert_eq!(row.ks.as_ref().unwrap().status, KsStatus::InsufficientN);
    assert!(r.rate(EstimatorKind::Mle).unwrap().fit.is_none());
    for f in [
        "report.txt",
        "report.json",
        "limit_samples.csv",
        "estimates_eps0.csv",
        "config.json",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let text = fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(text.contains("insufficient"), "{text}");
}

#[test]
fn accounting_and_injected_zero_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.n_replicates = 12;
    c.eps_list = vec![0.1];
    let r = run_experiment(&c).unwrap();
    for kind in [EstimatorKind::Mle, EstimatorKind::Bayes, EstimatorKind::Mde] {
        let row = r.row(kind, 0).unwrap();
        assert_eq!(row.successes + row.failures, 12);
        assert!(row.risk.mean > 0.0);
    }
    let failures = read_failures(&fs::read_to_string(tmp.path().join(failures_file(0))).unwrap()).unwrap();
    assert!(failures.is_empty());

    let path = tmp.path().join(estimates_file(0));
    let mut rows = read_estimates(&fs::read_to_string(&path).unwrap()).unwrap();
    for row in &mut rows {
        row.theta_hat = c.theta0;
        row.normalized_error = 0.0;
    }
    let mut buf = Vec::new();
    write_estimates(&rows, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    let r = build_report(tmp.path()).unwrap();
    for row in &r.rows {
        assert_eq!(row.risk.mean, 0.0);
        assert_eq!(row.rmse, 0.0);
    }
}

#[test]
fn rerun_with_different_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small(tmp.path());
    c.n_replicates = 2;
    c.eps_list = vec![0.1];
    c.estimators = vec![EstimatorKind::Mde];
    run_experiment(&c).unwrap();
    c.master_seed += 1;
    assert!(matches!(run_experiment(&c), Err(CuspError::Config(_))));
}

#[test]
fn occupation_check_detects_grid_mismatch() {
    let mut c = ExperimentConfig::reference("unused");
    c.eps_list = vec![0.05];
    c.properties.occupation_replicates = 20;
    let ok = occupation_check(&c);
    assert_eq!(ok.status, Status::Pass, "{}", ok.line());
    let bad = occupation_check_on(&c, 2.0 * c.model.horizon);
    assert_eq!(bad.status, Status::Fail);
    assert_eq!(bad.get("wiener_T"), Some(6.0));
    assert!(bad.line().contains("mismatch"), "{}", bad.line());
}

#[test]
fn single_noise_level_skips_scaling() {
    let mut c = ExperimentConfig::reference("unused");
    c.eps_list = vec![0.05];
    let o = deviation_check(&c);
    assert_eq!(o.status, Status::Skipped);
}

#[test]
fn ks_and_rate_examples() {
    assert_eq!(ks_distance(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]), 0.0);
    assert_eq!(ks_distance(&[0.0; 3], &[1.0; 3]), 1.0);
    let exact: Vec<(f64, f64)> = [0.1, 0.05, 0.02, 0.01]
        .iter()
        .map(|&e: &f64| (e, e.powf(4.0 / 3.0)))
        .collect();
    let f = rate_regression(&exact).unwrap();
    assert!((f.slope - 4.0 / 3.0).abs() < 1e-12 && f.slope_se < 1e-10);
    let lin: Vec<(f64, f64)> = [0.1, 0.05, 0.02].iter().map(|&e| (e, 2.0 * e)).collect();
    let f = rate_regression(&lin).unwrap();
    assert!((f.slope - 1.0).abs() < 1e-12 && (f.intercept - 2f64.ln()).abs() < 1e-12);
    assert!(rate_regression(&[(0.1, 1.0), (0.05, 0.0), (0.02, 1.0)]).is_err());
}

proptest! {
    #[test]
    fn stream_indices_are_injective(a in any::<(u32, u32)>(), b in any::<(u32, u32)>()) {
        prop_assert_eq!(stream_index(a.0, a.1) == stream_index(b.0, b.1), a == b);
    }
}

#[test]
fn experiment_streams_do_not_collide() {
    let mut seen = HashSet::new();
    for e in 0..4u32 {
        for r in 0..2000u32 {
            assert!(seen.insert(stream_index(e, r)));
        }
    }
    assert!(!seen.contains(&stream_index(u32::MAX, 0)));
}

fn cusp(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_cusp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml");
    assert_eq!(cusp(&["validate", reference]), 0);

    let text = fs::read_to_string(reference).unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, text.replace("theta0 = 1.0", "theta0 = 2.0")).unwrap();
    assert_eq!(cusp(&["validate", bad.to_str().unwrap()]), 1);
    assert_eq!(
        cusp(&["validate", tmp.path().join("missing.toml").to_str().unwrap()]),
        1
    );

    let out = tmp.path().join("run");
    let tiny = text
        .replace("eps_list = [0.1, 0.05, 0.02, 0.01]", "eps_list = [0.1]")
        .replace("n_replicates = 2000", "n_replicates = 3")
        .replace(
            "out_dir = \"out/reference\"",
            &format!("out_dir = {:?}", out.to_str().unwrap()),
        )
        .replace("n_per_side = 600", "n_per_side = 150")
        .replace("n_samples = 10000", "n_samples = 200");
    let tiny_path = tmp.path().join("tiny.toml");
    fs::write(&tiny_path, tiny).unwrap();
    let tiny_path = tiny_path.to_str().unwrap();
    assert_eq!(cusp(&["simulate", tiny_path]), 0);
    assert!(out.join("paths/path_eps0_rep0.csv").exists());
    assert_eq!(cusp(&["estimate", tiny_path]), 0);
    assert_eq!(cusp(&["report", out.to_str().unwrap()]), 0);
    assert_eq!(cusp(&["limit-law", tiny_path]), 0);
    assert!(out.join("golden_u_hat.json").exists());
    // a single noise level cannot support the scaling checks, which are
    // skipped; the remaining checks are too small to be decisive either way
    let code = cusp(&["properties", tiny_path]);
    assert!(code == 0 || code == 2, "{code}");
    assert!(out.join("properties.json").exists());
    assert_eq!(cusp(&["report", tmp.path().join("nothing").to_str().unwrap()]), 1);
}
