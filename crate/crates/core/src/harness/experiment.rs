use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{build_report, write_report, ExperimentReport};
use crate::error::{CuspError, Result};
use crate::estimators::{bayes_with, mde_with_cache, mle_with, EstimatorKind, MdeCache, Prior};
use crate::likelihood::LikelihoodEvaluator;
use crate::limit_law::{read_limit_samples, sample_limit_set, write_limit_samples, FbmSampler, LimitVariables};
use crate::model::{simulate_sde, simulate_wiener, CuspModel};
use crate::noise::{stream_index, NoiseStream};
use crate::path::fmt17;

pub const CONFIG_FILE: &str = "config.json";
pub const LIMIT_FILE: &str = "limit_samples.csv";
/// Eps index of the limit-law stream.
pub const LIMIT_EPS_INDEX: u32 = u32::MAX;
/// Largest tolerated share of failed replicates per noise level.
pub const FAILURE_BUDGET: f64 = 0.01;

const ESTIMATE_HEADER: &str = "replicate,estimator,theta_hat,normalized_error,multiplicity,eps,kappa,seed";
const FAILURE_HEADER: &str = "replicate,seed,message";

pub fn estimates_file(eps_index: usize) -> String {
    format!("estimates_eps{eps_index}.csv")
}

pub fn failures_file(eps_index: usize) -> String {
    format!("failures_eps{eps_index}.csv")
}

/// One estimate from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub replicate: u32,
    pub estimator: EstimatorKind,
    pub theta_hat: f64,
    /// `(θ̂ − θ₀)/ε^{1/H}` for MLE and Bayes, `(θ̂ − θ₀)/ε` for MDE.
    pub normalized_error: f64,
    pub multiplicity: bool,
    pub eps: f64,
    pub kappa: f64,
    /// Stream index of the replicate's noise.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub replicate: u32,
    pub seed: u64,
    pub message: String,
}

/// Everything recorded for one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsResults {
    pub eps_index: usize,
    pub eps: f64,
    pub rows: Vec<EstimateRow>,
    pub failures: Vec<FailureRow>,
}

/// Rate used to normalize an estimator's error: `ε^{1/H}` for the
/// likelihood estimators, `ε` for MDE.
pub fn error_scale(kind: EstimatorKind, eps: f64, hurst: f64) -> f64 {
    match kind {
        EstimatorKind::Mle | EstimatorKind::Bayes => eps.powf(1.0 / hurst),
        EstimatorKind::Mde => eps,
    }
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &FsPath, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// The configuration as stored in the output directory. Worker count and
/// directory do not affect results and are blanked.
pub fn fingerprint(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.out_dir = PathBuf::new();
    c.workers = 0;
    serde_json::to_string_pretty(&c).map_err(|e| CuspError::Io(e.to_string()))
}

pub fn write_estimates<W: Write>(rows: &[EstimateRow], mut w: W) -> Result<()> {
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.replicate,
            r.estimator,
            fmt17(r.theta_hat),
            fmt17(r.normalized_error),
            r.multiplicity as u8,
            fmt17(r.eps),
            fmt17(r.kappa),
            r.seed
        )?;
    }
    Ok(())
}

pub fn read_estimates(text: &str) -> Result<Vec<EstimateRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(ESTIMATE_HEADER) {
        return Err(CuspError::Shape("estimate file has an unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || CuspError::Shape(format!("malformed estimate on data line {}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        out.push(EstimateRow {
            replicate: f[0].parse().map_err(|_| bad())?,
            estimator: f[1].parse().map_err(|_| bad())?,
            theta_hat: num(f[2])?,
            normalized_error: num(f[3])?,
            multiplicity: f[4] == "1",
            eps: num(f[5])?,
            kappa: num(f[6])?,
            seed: f[7].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn write_failures<W: Write>(rows: &[FailureRow], mut w: W) -> Result<()> {
    writeln!(w, "{FAILURE_HEADER}")?;
    for r in rows {
        let msg = r.message.replace([',', '\n'], ";");
        writeln!(w, "{},{},{}", r.replicate, r.seed, msg)?;
    }
    Ok(())
}

pub fn read_failures(text: &str) -> Result<Vec<FailureRow>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let bad = || CuspError::Shape(format!("malformed failure on line {}", i + 1));
        let mut f = line.splitn(3, ',');
        out.push(FailureRow {
            replicate: f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            seed: f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?,
            message: f.next().unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

struct Shared<'a> {
    config: &'a ExperimentConfig,
    model: &'a CuspModel,
    prior: &'a Prior,
    hurst: f64,
}

fn run_replicate(
    sh: &Shared<'_>,
    cache: Option<&MdeCache>,
    eps_index: usize,
    eps: f64,
    n_steps: usize,
    replicate: u32,
) -> Result<Vec<EstimateRow>> {
    let stream = NoiseStream::for_replicate(sh.config.master_seed, eps_index as u32, replicate);
    let wiener = simulate_wiener(stream, n_steps, sh.model.horizon);
    let path = simulate_sde(sh.model, sh.config.theta0, eps, &wiener)?;
    let needs_likelihood = sh
        .config
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::Mle | EstimatorKind::Bayes));
    let eval = if needs_likelihood {
        Some(LikelihoodEvaluator::new(&path, sh.model, eps)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(sh.config.estimators.len());
    for &kind in &sh.config.estimators {
        let est = match kind {
            EstimatorKind::Mle => mle_with(eval.as_ref().expect("evaluator"), sh.model),
            EstimatorKind::Bayes => bayes_with(eval.as_ref().expect("evaluator"), sh.model, sh.prior),
            EstimatorKind::Mde => mde_with_cache(&path, sh.model, eps, cache.expect("MDE cache"))?,
        };
        if !est.theta_hat.is_finite() {
            return Err(CuspError::Consistency(format!("{kind} returned a non-finite estimate")));
        }
        rows.push(EstimateRow {
            replicate,
            estimator: kind,
            theta_hat: est.theta_hat,
            normalized_error: (est.theta_hat - sh.config.theta0) / error_scale(kind, eps, sh.hurst),
            multiplicity: est.diagnostics.multiplicity,
            eps,
            kappa: sh.model.kappa,
            seed: stream.replicate_index,
        });
    }
    Ok(rows)
}

/// Runs every replicate at one noise level.
pub fn run_eps(config: &ExperimentConfig, eps_index: usize) -> Result<EpsResults> {
    let model = &config.model;
    let prior = config.prior()?;
    let eps = config.eps_list[eps_index];
    let n_steps = config.n_steps(eps);
    let cache = config
        .estimators
        .contains(&EstimatorKind::Mde)
        .then(|| MdeCache::new(model, n_steps));
    let sh = Shared {
        config,
        model,
        prior: &prior,
        hurst: model.hurst(),
    };
    let outcomes: Vec<(u32, Result<Vec<EstimateRow>>)> = (0..config.n_replicates as u32)
        .into_par_iter()
        .map(|r| (r, run_replicate(&sh, cache.as_ref(), eps_index, eps, n_steps, r)))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => {
                let seed = stream_index(eps_index as u32, r);
                warn!("replicate failed: eps = {eps}, replicate = {r}, seed = {seed}: {e}");
                failures.push(FailureRow {
                    replicate: r,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(EpsResults {
        eps_index,
        eps,
        rows,
        failures,
    })
}

/// Draws the limit-law samples for the experiment's `H` and grid.
pub fn limit_samples(config: &ExperimentConfig) -> Result<Vec<LimitVariables>> {
    let l = &config.limit;
    let sampler = FbmSampler::new(config.model.hurst(), l.half_width, l.n_per_side)?;
    let stream = NoiseStream::for_replicate(config.master_seed, LIMIT_EPS_INDEX, 0);
    Ok(sample_limit_set(&sampler, l.n_samples, stream))
}

fn prepare_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    config.validate()?;
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let fp = fingerprint(config)?;
    let cfg_path = dir.join(CONFIG_FILE);
    match fs::read_to_string(&cfg_path) {
        Ok(existing) if existing != fp => {
            return Err(CuspError::Config(format!(
                "{} holds results of a different experiment",
                dir.display()
            )))
        }
        Ok(_) => {}
        Err(_) => write_atomic(&cfg_path, fp.as_bytes())?,
    }
    Ok(dir)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CuspError::Io(e.to_string()))?;
    Ok(pool.install(f))
}

/// Computes and stores the per-ε files for the first `n_eps` noise levels,
/// reusing any already on disk. An interrupted run leaves exactly this
/// state behind.
pub fn run_partial(config: &ExperimentConfig, n_eps: usize) -> Result<()> {
    let dir = prepare_dir(config)?;
    with_pool(config.workers, || -> Result<()> {
        for i in 0..n_eps.min(config.eps_list.len()) {
            let est_path = dir.join(estimates_file(i));
            if est_path.exists() {
                info!("eps[{i}] = {}: reusing {}", config.eps_list[i], est_path.display());
                continue;
            }
            info!("eps[{i}] = {}: {} replicates", config.eps_list[i], config.n_replicates);
            let res = run_eps(config, i)?;
            let mut fail = Vec::new();
            write_failures(&res.failures, &mut fail)?;
            write_atomic(&dir.join(failures_file(i)), &fail)?;
            if res.failures.len() as f64 > FAILURE_BUDGET * config.n_replicates as f64 {
                return Err(CuspError::FailureBudget {
                    eps: res.eps,
                    failures: res.failures.len(),
                    replicates: config.n_replicates,
                });
            }
            let mut est = Vec::new();
            write_estimates(&res.rows, &mut est)?;
            write_atomic(&est_path, &est)?;
        }
        Ok(())
    })?
}

/// Ensures the limit sample file exists when a likelihood estimator is run.
fn ensure_limit_samples(config: &ExperimentConfig, dir: &FsPath) -> Result<()> {
    let wanted = config
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::Mle | EstimatorKind::Bayes));
    let path = dir.join(LIMIT_FILE);
    if !wanted || path.exists() {
        return Ok(());
    }
    info!("sampling {} limit variables", config.limit.n_samples);
    let samples = with_pool(config.workers, || limit_samples(config))??;
    let mut buf = Vec::new();
    write_limit_samples(&samples, &mut buf)?;
    write_atomic(&path, &buf)
}

pub fn load_limit_samples(dir: &FsPath) -> Result<Option<Vec<LimitVariables>>> {
    let path = dir.join(LIMIT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_limit_samples(&fs::read_to_string(path)?).map(Some)
}

/// Full Monte Carlo experiment: per-ε estimate files, limit samples and
/// the report, all under `config.out_dir`. Resumes from existing files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_partial(config, config.eps_list.len())?;
    let dir = config.out_dir.clone();
    ensure_limit_samples(config, &dir)?;
    let report = build_report(&dir)?;
    write_report(&dir, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_csv_round_trip() {
        let rows = vec![EstimateRow {
            replicate: 3,
            estimator: EstimatorKind::Bayes,
            theta_hat: 1.0 + 1e-13,
            normalized_error: -0.123456789012345678,
            multiplicity: true,
            eps: 0.01,
            kappa: 0.25,
            seed: (2u64 << 32) | 3,
        }];
        let mut buf = Vec::new();
        write_estimates(&rows, &mut buf).unwrap();
        let back = read_estimates(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn failure_messages_stay_on_one_line() {
        let rows = vec![FailureRow {
            replicate: 1,
            seed: 9,
            message: "a, b\nc".into(),
        }];
        let mut buf = Vec::new();
        write_failures(&rows, &mut buf).unwrap();
        let back = read_failures(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back[0].message, "a; b;c");
    }

    #[test]
    fn fingerprint_ignores_directory_and_workers() {
        let a = ExperimentConfig::reference("one");
        let mut b = ExperimentConfig::reference("two");
        b.workers = 3;
        assert_eq!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
        b.master_seed += 1;
        assert_ne!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
    }
}
