use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{
    estimates_file, failures_file, load_limit_samples, read_estimates, read_failures, write_atomic, EstimateRow,
    CONFIG_FILE,
};
use super::properties::{load_properties, PropertyOutcome};
use crate::error::{CuspError, Result};
use crate::estimators::EstimatorKind;
use crate::likelihood::limit_constants;
use crate::limit_law::LimitVariables;
use crate::path::fmt17;
use crate::stats::{ecdf, ks_distance, rate_regression, Estimate, RateFit};

/// KS distance allowed between normalized errors and the standardized limit.
pub const KS_THRESHOLD: f64 = 0.08;
/// Fewer estimates than this make a KS comparison meaningless.
pub const KS_MIN_N: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KsStatus {
    Pass,
    Fail,
    InsufficientN,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    /// `u_hat/gamma` or `u_tilde/gamma`.
    pub target: &'static str,
    pub distance: f64,
    pub n_estimates: usize,
    pub n_limit: usize,
    pub threshold: f64,
    /// Classical 95% band for two samples of the same law.
    pub same_law_band: f64,
    pub status: KsStatus,
}

/// Statistics of one estimator at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub estimator: EstimatorKind,
    pub eps_index: usize,
    pub eps: f64,
    pub n_replicates: usize,
    pub successes: usize,
    pub failures: usize,
    /// Normalizing rate: `ε^{1/H}` (MLE, Bayes) or `ε` (MDE).
    pub scale: f64,
    pub mean_error: Estimate,
    /// Mean squared normalized error, `scale⁻² E(θ̂ − θ₀)²`.
    pub risk: Estimate,
    pub rmse: f64,
    pub rmse_se: f64,
    pub ties: usize,
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSummary {
    pub hurst: f64,
    pub gamma_sq: f64,
    pub gamma: f64,
    pub n_samples: usize,
    pub truncation_suspect: usize,
    pub ties: usize,
    /// `E(û/γ)²`.
    pub u_hat_sq: Estimate,
    /// `E(ũ/γ)²`.
    pub u_tilde_sq: Estimate,
    /// `E[(ũ/γ)² − (û/γ)²]` from the paired samples.
    pub paired_difference: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub estimator: EstimatorKind,
    pub expected_slope: f64,
    pub fit: Option<RateFit>,
    pub band95: Option<(f64, f64)>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesCheck {
    pub eps: f64,
    pub bayes_risk: f64,
    pub mle_risk: f64,
    pub combined_se: f64,
    /// Bayes risk above MLE risk by more than 2 combined SE.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stabilization {
    pub estimator: EstimatorKind,
    pub eps_a: f64,
    pub eps_b: f64,
    pub difference: f64,
    pub combined_se: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub theta0: f64,
    pub kappa: f64,
    pub hurst: f64,
    pub master_seed: u64,
    pub n_replicates: usize,
    pub eps_list: Vec<f64>,
    pub n_steps: Vec<usize>,
    pub completed_eps: usize,
    pub rows: Vec<EstimatorRow>,
    pub limit: Option<LimitSummary>,
    pub rates: Vec<RateSummary>,
    pub bayes_checks: Vec<BayesCheck>,
    pub stabilization: Vec<Stabilization>,
    pub properties: Option<Vec<PropertyOutcome>>,
}

impl ExperimentReport {
    pub fn row(&self, kind: EstimatorKind, eps_index: usize) -> Option<&EstimatorRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == kind && r.eps_index == eps_index)
    }

    pub fn rate(&self, kind: EstimatorKind) -> Option<&RateSummary> {
        self.rates.iter().find(|r| r.estimator == kind)
    }
}

pub fn load_config(dir: &FsPath) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(dir.join(CONFIG_FILE))
        .map_err(|e| CuspError::Config(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
    let mut c: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CuspError::Config(format!("{CONFIG_FILE}: {e}")))?;
    c.out_dir = dir.to_path_buf();
    Ok(c)
}

/// Per-ε estimate files present in `dir`, in order, stopping at the first
/// missing one.
pub fn load_estimates(dir: &FsPath, n_eps: usize) -> Result<Vec<(Vec<EstimateRow>, usize)>> {
    let mut out = Vec::new();
    for i in 0..n_eps {
        let p = dir.join(estimates_file(i));
        if !p.exists() {
            break;
        }
        let rows = read_estimates(&fs::read_to_string(p)?)?;
        let f = dir.join(failures_file(i));
        let failures = if f.exists() {
            read_failures(&fs::read_to_string(f)?)?.len()
        } else {
            0
        };
        out.push((rows, failures));
    }
    Ok(out)
}

fn limit_target(kind: EstimatorKind) -> Option<&'static str> {
    match kind {
        EstimatorKind::Mle => Some("u_hat/gamma"),
        EstimatorKind::Bayes => Some("u_tilde/gamma"),
        EstimatorKind::Mde => None,
    }
}

fn standardized(limit: &[LimitVariables], gamma: f64, kind: EstimatorKind) -> Vec<f64> {
    limit
        .iter()
        .map(|v| match kind {
            EstimatorKind::Bayes => v.u_tilde / gamma,
            _ => v.u_hat / gamma,
        })
        .collect()
}

/// Recomputes every aggregate from the files in `dir`.
pub fn build_report(dir: &FsPath) -> Result<ExperimentReport> {
    let config = load_config(dir)?;
    let model = &config.model;
    let hurst = model.hurst();
    let per_eps = load_estimates(dir, config.eps_list.len())?;
    let limit = load_limit_samples(dir)?;
    let consts = limit_constants(model, config.theta0)?;

    let mut rows = Vec::new();
    for (i, (est, failures)) in per_eps.iter().enumerate() {
        let eps = config.eps_list[i];
        for &kind in &config.estimators {
            let mine: Vec<&EstimateRow> = est.iter().filter(|r| r.estimator == kind).collect();
            let errs: Vec<f64> = mine.iter().map(|r| r.normalized_error).collect();
            let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
            let raw_sq: Vec<f64> = mine.iter().map(|r| (r.theta_hat - config.theta0).powi(2)).collect();
            let mse = Estimate::of(&raw_sq);
            let rmse = mse.mean.sqrt();
            let ks = match (limit_target(kind), &limit) {
                (Some(target), Some(lim)) => {
                    let n = errs.len();
                    let m = lim.len();
                    let band = 1.358 * (1.0 / n.max(1) as f64 + 1.0 / m as f64).sqrt();
                    if n < KS_MIN_N {
                        Some(KsResult {
                            target,
                            distance: f64::NAN,
                            n_estimates: n,
                            n_limit: m,
                            threshold: KS_THRESHOLD,
                            same_law_band: band,
                            status: KsStatus::InsufficientN,
                        })
                    } else {
                        let d = ks_distance(&errs, &standardized(lim, consts.gamma, kind));
                        Some(KsResult {
                            target,
                            distance: d,
                            n_estimates: n,
                            n_limit: m,
                            threshold: KS_THRESHOLD,
                            same_law_band: band,
                            status: if d < KS_THRESHOLD {
                                KsStatus::Pass
                            } else {
                                KsStatus::Fail
                            },
                        })
                    }
                }
                _ => None,
            };
            rows.push(EstimatorRow {
                estimator: kind,
                eps_index: i,
                eps,
                n_replicates: config.n_replicates,
                successes: mine.len(),
                failures: *failures,
                scale: super::experiment::error_scale(kind, eps, hurst),
                mean_error: Estimate::of(&errs),
                risk: Estimate::of(&sq),
                rmse,
                rmse_se: if rmse > 0.0 { mse.se / (2.0 * rmse) } else { 0.0 },
                ties: mine.iter().filter(|r| r.multiplicity).count(),
                ks,
            });
        }
    }

    let limit_summary = limit.as_ref().map(|lim| {
        let g2 = consts.gamma * consts.gamma;
        let hat: Vec<f64> = lim.iter().map(|v| v.u_hat * v.u_hat / g2).collect();
        let tilde: Vec<f64> = lim.iter().map(|v| v.u_tilde * v.u_tilde / g2).collect();
        let diff: Vec<f64> = tilde.iter().zip(&hat).map(|(t, h)| t - h).collect();
        LimitSummary {
            hurst,
            gamma_sq: consts.gamma_sq,
            gamma: consts.gamma,
            n_samples: lim.len(),
            truncation_suspect: lim.iter().filter(|v| v.truncation_suspect).count(),
            ties: lim.iter().filter(|v| v.tie).count(),
            u_hat_sq: Estimate::of(&hat),
            u_tilde_sq: Estimate::of(&tilde),
            paired_difference: Estimate::of(&diff),
        }
    });

    let rates = config
        .estimators
        .iter()
        .map(|&kind| {
            let expected_slope = match kind {
                EstimatorKind::Mde => 1.0,
                _ => 1.0 / hurst,
            };
            let pairs: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.estimator == kind && r.rmse > 0.0)
                .map(|r| (r.eps, r.rmse))
                .collect();
            match rate_regression(&pairs) {
                Ok(fit) => RateSummary {
                    estimator: kind,
                    expected_slope,
                    band95: Some(fit.band(1.96)),
                    fit: Some(fit),
                    note: String::new(),
                },
                Err(e) => RateSummary {
                    estimator: kind,
                    expected_slope,
                    fit: None,
                    band95: None,
                    note: format!("not fitted: {e}"),
                },
            }
        })
        .collect();

    let mut bayes_checks = Vec::new();
    for i in 0..per_eps.len() {
        let find = |k| {
            rows.iter()
                .find(|r: &&EstimatorRow| r.estimator == k && r.eps_index == i)
        };
        if let (Some(b), Some(m)) = (find(EstimatorKind::Bayes), find(EstimatorKind::Mle)) {
            let se = b.risk.se.hypot(m.risk.se);
            bayes_checks.push(BayesCheck {
                eps: b.eps,
                bayes_risk: b.risk.mean,
                mle_risk: m.risk.mean,
                combined_se: se,
                flagged: b.risk.mean > m.risk.mean + 2.0 * se,
            });
        }
    }

    let mut stabilization = Vec::new();
    if per_eps.len() >= 2 {
        let (ia, ib) = (per_eps.len() - 2, per_eps.len() - 1);
        for &kind in &config.estimators {
            let find = |i| {
                rows.iter()
                    .find(|r: &&EstimatorRow| r.estimator == kind && r.eps_index == i)
            };
            if let (Some(a), Some(b)) = (find(ia), find(ib)) {
                let se = a.risk.se.hypot(b.risk.se);
                let difference = b.risk.mean - a.risk.mean;
                stabilization.push(Stabilization {
                    estimator: kind,
                    eps_a: a.eps,
                    eps_b: b.eps,
                    difference,
                    combined_se: se,
                    stable: difference.abs() <= 2.0 * se,
                });
            }
        }
    }

    Ok(ExperimentReport {
        theta0: config.theta0,
        kappa: model.kappa,
        hurst,
        master_seed: config.master_seed,
        n_replicates: config.n_replicates,
        n_steps: config.eps_list.iter().map(|e| config.n_steps(*e)).collect(),
        eps_list: config.eps_list.clone(),
        completed_eps: per_eps.len(),
        rows,
        limit: limit_summary,
        rates,
        bayes_checks,
        stabilization,
        properties: load_properties(dir)?,
    })
}

fn est(e: &Estimate) -> String {
    format!("{:.4} ± {:.4}", e.mean, e.se)
}

/// Human-readable report.
pub fn render_text(r: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "cusp estimation experiment");
    let _ = writeln!(
        s,
        "theta0 = {}, kappa = {}, H = {:.6}, seed = {}, replicates = {}",
        r.theta0, r.kappa, r.hurst, r.master_seed, r.n_replicates
    );
    let _ = writeln!(s, "noise levels completed: {} of {}", r.completed_eps, r.eps_list.len());
    for (e, n) in r.eps_list.iter().zip(&r.n_steps) {
        let _ = writeln!(s, "  eps = {e}: {n} steps");
    }

    let _ = writeln!(
        s,
        "\nrisk table (risk = mean squared normalized error, normalization eps^(1/H) for mle/bayes, eps for mde)"
    );
    let _ = writeln!(
        s,
        "{:<6} {:>8} {:>6} {:>5} {:>22} {:>22} {:>12} {:>5}",
        "est", "eps", "n", "fail", "mean error", "risk", "rmse", "ties"
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<6} {:>8} {:>6} {:>5} {:>22} {:>22} {:>12.4e} {:>5}",
            row.estimator.as_str(),
            row.eps,
            row.successes,
            row.failures,
            est(&row.mean_error),
            est(&row.risk),
            row.rmse,
            row.ties
        );
    }

    if let Some(l) = &r.limit {
        let _ = writeln!(
            s,
            "\nlimit law ({} samples, Gamma^2 = {:.6}, gamma = {:.6})",
            l.n_samples, l.gamma_sq, l.gamma
        );
        let _ = writeln!(s, "  E(u_hat/gamma)^2   = {}", est(&l.u_hat_sq));
        let _ = writeln!(s, "  E(u_tilde/gamma)^2 = {}", est(&l.u_tilde_sq));
        let _ = writeln!(s, "  paired difference  = {}", est(&l.paired_difference));
        let _ = writeln!(
            s,
            "  truncation-suspect samples: {}, ties: {}",
            l.truncation_suspect, l.ties
        );
    }

    let _ = writeln!(s, "\nKS distances to the standardized limit law");
    let _ = writeln!(
        s,
        "  threshold {KS_THRESHOLD}: looser than the same-law 95% band so that time discretization and finite-noise bias are absorbed"
    );
    for row in &r.rows {
        if let Some(k) = &row.ks {
            let verdict = match k.status {
                KsStatus::Pass => "pass",
                KsStatus::Fail => "fail",
                KsStatus::InsufficientN => "insufficient-n",
            };
            let _ = writeln!(
                s,
                "  {:<6} eps = {:<8} vs {:<14} D = {:.4} (n = {}, m = {}, same-law band {:.4}) {verdict}",
                row.estimator.as_str(),
                row.eps,
                k.target,
                k.distance,
                k.n_estimates,
                k.n_limit,
                k.same_law_band
            );
        }
    }

    let _ = writeln!(s, "\nrate regression of rmse on eps (log-log)");
    for rate in &r.rates {
        match (&rate.fit, rate.band95) {
            (Some(f), Some((lo, hi))) => {
                let _ = writeln!(
                    s,
                    "  {:<6} slope {:.4} ± {:.4} (95% band [{lo:.4}, {hi:.4}], {} points), expected {:.4}",
                    rate.estimator.as_str(),
                    f.slope,
                    f.slope_se,
                    f.n_points,
                    rate.expected_slope
                );
            }
            _ => {
                let _ = writeln!(s, "  {:<6} {}", rate.estimator.as_str(), rate.note);
            }
        }
    }

    if !r.bayes_checks.is_empty() {
        let _ = writeln!(s, "\nbayes vs mle risk");
        for b in &r.bayes_checks {
            let _ = writeln!(
                s,
                "  eps = {:<8} bayes {:.4} mle {:.4} (combined se {:.4}){}",
                b.eps,
                b.bayes_risk,
                b.mle_risk,
                b.combined_se,
                if b.flagged {
                    " FLAGGED: bayes risk exceeds mle"
                } else {
                    ""
                }
            );
        }
    }
    if !r.stabilization.is_empty() {
        let _ = writeln!(s, "\nrisk stabilization over the two smallest noise levels");
        for st in &r.stabilization {
            let _ = writeln!(
                s,
                "  {:<6} eps {} -> {}: change {:.4} (combined se {:.4}) {}",
                st.estimator.as_str(),
                st.eps_a,
                st.eps_b,
                st.difference,
                st.combined_se,
                if st.stable { "stable" } else { "unstable" }
            );
        }
    }
    if let Some(props) = &r.properties {
        let _ = writeln!(s, "\nproperty checks");
        for p in props {
            let _ = writeln!(s, "  {}", p.line());
        }
    }
    s
}

fn ecdf_csv(estimates: &[f64], limit: &[f64]) -> String {
    let mut xs: Vec<f64> = estimates.iter().chain(limit).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let fa = ecdf(estimates, &xs);
    let fb = ecdf(limit, &xs);
    let mut s = String::from("x,empirical,limit\n");
    for ((x, a), b) in xs.iter().zip(fa).zip(fb) {
        let _ = writeln!(s, "{},{},{}", fmt17(*x), fmt17(a), fmt17(b));
    }
    s
}

/// Writes `report.txt`, `report.json`, `rate_points.csv` and one
/// `ecdf_<estimator>_eps<i>.csv` per KS comparison.
pub fn write_report(dir: &FsPath, report: &ExperimentReport) -> Result<()> {
    write_atomic(&dir.join("report.txt"), render_text(report).as_bytes())?;
    let json = serde_json::to_string_pretty(report).map_err(|e| CuspError::Io(e.to_string()))?;
    write_atomic(&dir.join("report.json"), json.as_bytes())?;

    let mut rates = String::from("estimator,eps,rmse,rmse_se,n\n");
    for row in &report.rows {
        let _ = writeln!(
            rates,
            "{},{},{},{},{}",
            row.estimator,
            fmt17(row.eps),
            fmt17(row.rmse),
            fmt17(row.rmse_se),
            row.successes
        );
    }
    write_atomic(&dir.join("rate_points.csv"), rates.as_bytes())?;

    let config = load_config(dir)?;
    if let Some(lim) = load_limit_samples(dir)? {
        let gamma = limit_constants(&config.model, config.theta0)?.gamma;
        let per_eps = load_estimates(dir, config.eps_list.len())?;
        for (i, (rows, _)) in per_eps.iter().enumerate() {
            for kind in [EstimatorKind::Mle, EstimatorKind::Bayes] {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.estimator == kind)
                    .map(|r| r.normalized_error)
                    .collect();
                if errs.is_empty() {
                    continue;
                }
                let csv = ecdf_csv(&errs, &standardized(&lim, gamma, kind));
                write_atomic(&dir.join(format!("ecdf_{kind}_eps{i}.csv")), csv.as_bytes())?;
            }
        }
    }
    Ok(())
}
