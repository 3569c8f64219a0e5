//! Property checks on simulated paths and limit-law samples. Each check
//! returns an outcome with its measurements; failures are data, not errors.

use std::fmt;
use std::fs;
use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::config::ExperimentConfig;
use super::experiment::write_atomic;
use crate::error::{CuspError, Result};
use crate::estimators::mle_with;
use crate::likelihood::{limit_constants, LikelihoodEvaluator};
use crate::limit_law::{fbm_covariance, FbmSampler};
use crate::model::{
    limit_occupation_integral, occupation_integral, simulate_sde, simulate_wiener, solve_limit_ode, sup_deviation,
};
use crate::noise::{NoiseStream, RESERVED_EPS_INDEX_BASE};
use crate::path::Path;
use crate::stats::{self, log_log_fit, quantile, variance_se, Estimate};

pub const PROPERTIES_FILE: &str = "properties.json";

const DEVIATION_STREAMS: u32 = RESERVED_EPS_INDEX_BASE;
const HOLDER_STREAM: u32 = RESERVED_EPS_INDEX_BASE + 0x100;
const OCCUPATION_STREAMS: u32 = RESERVED_EPS_INDEX_BASE + 0x200;
const ANCHOR_STREAM: u32 = RESERVED_EPS_INDEX_BASE + 0x300;
const FBM_STREAM: u32 = RESERVED_EPS_INDEX_BASE + 0x400;
const BROWNIAN_STREAM: u32 = RESERVED_EPS_INDEX_BASE + 0x401;
const MOMENT_STREAM: u32 = RESERVED_EPS_INDEX_BASE + 0x500;
const UNIFORMITY_STREAMS: u32 = RESERVED_EPS_INDEX_BASE + 0x600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

fn ser_num<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_num<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub status: Status,
    pub measurements: Vec<Measurement>,
    pub detail: String,
}

impl PropertyOutcome {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            measurements: Vec::new(),
            detail: String::new(),
        }
    }

    fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.measurements.push(Measurement {
            name: name.into(),
            value,
        });
    }

    fn decide(mut self, pass: bool, detail: impl Into<String>) -> Self {
        self.status = if pass { Status::Pass } else { Status::Fail };
        self.detail = detail.into();
        self
    }

    fn skip(mut self, detail: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.detail = detail.into();
        self
    }

    fn failed_with(self, e: CuspError) -> Self {
        self.decide(false, format!("error: {e}"))
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.name == name).map(|m| m.value)
    }

    /// One line: name, status, measurements, detail.
    pub fn line(&self) -> String {
        let ms: Vec<String> = self
            .measurements
            .iter()
            .map(|m| format!("{}={:.6}", m.name, m.value))
            .collect();
        format!(
            "{:<22} {:<7} {} | {}",
            self.name,
            self.status.to_string(),
            ms.join(" "),
            self.detail
        )
    }
}

fn observation(config: &ExperimentConfig, theta0: f64, eps: f64, stream: NoiseStream) -> Result<(Path, Path)> {
    let n = config.n_steps(eps);
    let w = simulate_wiener(stream, n, config.model.horizon);
    let x = simulate_sde(&config.model, theta0, eps, &w)?;
    Ok((w, x))
}

fn smallest_eps(config: &ExperimentConfig) -> f64 {
    config.eps_list.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Pathwise deviation `sup|X − x|`: its median should scale like `ε^κ`, and
/// the ratio to `ε^κ Ŵ^κ + ε Ŵ` should have a stable 99th percentile.
pub fn deviation_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("deviation_scaling");
    if config.eps_list.len() < 2 {
        return out.skip("needs at least 2 noise levels");
    }
    let m = &config.model;
    let kappa = m.kappa;
    let reps = config.properties.deviation_replicates;
    let mut medians = Vec::new();
    let mut p99 = Vec::new();
    for (i, &eps) in config.eps_list.iter().enumerate() {
        let limit = match solve_limit_ode(m, config.theta0, config.n_steps(eps)) {
            Ok(p) => p,
            Err(e) => return out.failed_with(e),
        };
        let res: Result<Vec<(f64, f64)>> = (0..reps as u32)
            .into_par_iter()
            .map(|r| {
                let s = NoiseStream::for_replicate(config.master_seed, DEVIATION_STREAMS + i as u32, r);
                let (w, x) = observation(config, config.theta0, eps, s)?;
                let dev = sup_deviation(&x, &limit)?;
                let wmax = w.sup_abs();
                let bound = eps.powf(kappa) * wmax.powf(kappa) + eps * wmax;
                Ok((dev, dev / bound))
            })
            .collect();
        let res = match res {
            Ok(r) => r,
            Err(e) => return out.failed_with(e),
        };
        let devs: Vec<f64> = res.iter().map(|r| r.0).collect();
        let ratios: Vec<f64> = res.iter().map(|r| r.1).collect();
        let med = stats::median(&devs);
        let q = quantile(&ratios, 0.99);
        out.measure(format!("median_dev[eps={eps}]"), med);
        out.measure(format!("p99_ratio[eps={eps}]"), q);
        medians.push((eps, med));
        p99.push(q);
    }
    let fit = match log_log_fit(&medians) {
        Ok(f) => f,
        Err(e) => return out.failed_with(e),
    };
    let (first, last) = (p99[0], p99[p99.len() - 1]);
    let factor = first.max(last) / first.min(last);
    out.measure("slope", fit.slope);
    out.measure("kappa", kappa);
    out.measure("p99_factor", factor);
    out.measure("replicates", reps as f64);
    let slope_ok = (fit.slope - kappa).abs() <= 0.05;
    let factor_ok = factor < 2.0;
    out.decide(
        slope_ok && factor_ok,
        format!(
            "median slope {:.3} vs kappa {kappa} +- 0.05 ({}); p99 ratio factor {factor:.3} < 2 ({})",
            fit.slope,
            if slope_ok { "ok" } else { "off" },
            if factor_ok { "ok" } else { "off" }
        ),
    )
}

/// `ln Z_ε(u) = ln L(θ₀ + u ε^{1/H}) − ln L(θ₀)` at each `u` for one path.
fn log_z_at(eval: &LikelihoodEvaluator, theta0: f64, step: f64, us: &[f64]) -> Vec<f64> {
    let mut thetas = vec![theta0];
    thetas.extend(us.iter().map(|u| theta0 + step * u));
    let ll = eval.log_likelihood_many(&thetas);
    us.iter()
        .zip(&ll[1..])
        .map(|(u, l)| if *u == 0.0 { 0.0 } else { l - ll[0] })
        .collect()
}

fn log_z_samples(
    config: &ExperimentConfig,
    eps: f64,
    us: &[f64],
    reps: usize,
    eps_index: u32,
) -> Result<Vec<Vec<f64>>> {
    let m = &config.model;
    let step = eps.powf(1.0 / m.hurst());
    if let Some(u) = us.iter().find(|u| !m.contains_theta(config.theta0 + step * **u)) {
        return Err(CuspError::Domain(format!("u = {u} maps outside Θ at eps = {eps}")));
    }
    (0..reps as u32)
        .into_par_iter()
        .map(|r| {
            let s = NoiseStream::for_replicate(config.master_seed, eps_index, r);
            let (_, x) = observation(config, config.theta0, eps, s)?;
            let eval = LikelihoodEvaluator::new(&x, m, eps)?;
            Ok(log_z_at(&eval, config.theta0, step, us))
        })
        .collect()
}

/// Hölder bound `E|Z^{1/2}(u₂) − Z^{1/2}(u₁)|² ≤ C|u₂ − u₁|^{2H}` on a
/// 9-point grid in `[−2, 2]`, with `C` fitted at the widest pair and a
/// 3 SE allowance at the others.
pub fn holder_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("holder_bound");
    let eps = config.properties.holder_eps;
    let reps = config.properties.holder_replicates;
    let us: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
    let samples = match log_z_samples(config, eps, &us, reps, HOLDER_STREAM) {
        Ok(s) => s,
        Err(e) => return out.failed_with(e),
    };
    let two_h = 2.0 * config.model.hurst();
    let pair = |i: usize, j: usize| {
        let d: Vec<f64> = samples
            .iter()
            .map(|z| ((0.5 * z[j]).exp() - (0.5 * z[i]).exp()).powi(2))
            .collect();
        Estimate::of(&d)
    };
    let widest = pair(0, us.len() - 1);
    let c = widest.mean / (us[us.len() - 1] - us[0]).powf(two_h);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut checked = 0;
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            if i == 0 && j == us.len() - 1 {
                continue;
            }
            let e = pair(i, j);
            let bound = c * (us[j] - us[i]).powf(two_h);
            worst = worst.max(e.mean / bound);
            checked += 1;
            if e.mean > bound + 3.0 * e.se {
                violations += 1;
            }
        }
    }
    out.measure("C", c);
    out.measure("worst_ratio", worst);
    out.measure("violations", violations as f64);
    out.measure("pairs", checked as f64);
    out.measure("eps", eps);
    out.measure("replicates", reps as f64);
    out.decide(
        violations == 0,
        format!("{violations} of {checked} narrower pairs exceed C|du|^2H + 3 SE (worst mean/bound {worst:.3})"),
    )
}

/// Test function for the occupation check: a bump centred at `θ₀`.
fn bump(theta0: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| (-(x - theta0) * (x - theta0) / (2.0 * 0.25 * 0.25)).exp()
}

/// `∫₀ᵀ g(X_t) dt → ∫ g(x) ℓ₀(x) dx` at the smallest noise level, within
/// 1% plus 3 SE.
pub fn occupation_check(config: &ExperimentConfig) -> PropertyOutcome {
    occupation_check_on(config, config.model.horizon)
}

/// As [`occupation_check`], driving the paths with a Wiener process on
/// `[0, wiener_horizon]`.
pub fn occupation_check_on(config: &ExperimentConfig, wiener_horizon: f64) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("occupation_time");
    let m = &config.model;
    let g = bump(config.theta0);
    let x_end = match solve_limit_ode(m, config.theta0, 100_000) {
        Ok(p) => p.last(),
        Err(e) => return out.failed_with(e),
    };
    let limit = limit_occupation_integral(m, config.theta0, x_end, &g);
    out.measure("limit", limit);
    out.measure("wiener_T", wiener_horizon);
    out.measure("model_T", m.horizon);
    let reps = config.properties.occupation_replicates;
    let mut rel_err = f64::NAN;
    let mut tol = f64::NAN;
    for (i, &eps) in config.eps_list.iter().enumerate() {
        let vals: Result<Vec<f64>> = (0..reps as u32)
            .into_par_iter()
            .map(|r| {
                let s = NoiseStream::for_replicate(config.master_seed, OCCUPATION_STREAMS + i as u32, r);
                let w = simulate_wiener(s, config.n_steps(eps), wiener_horizon);
                let x = simulate_sde(m, config.theta0, eps, &w)?;
                Ok(occupation_integral(&x, &g))
            })
            .collect();
        let vals = match vals {
            Ok(v) => v,
            Err(e) => return out.failed_with(e),
        };
        let est = Estimate::of(&vals);
        out.measure(format!("mean[eps={eps}]"), est.mean);
        rel_err = (est.mean - limit).abs() / limit.abs();
        tol = 0.01 + 3.0 * est.se / limit.abs();
    }
    out.measure("rel_error_smallest_eps", rel_err);
    out.measure("tolerance", tol);
    out.decide(
        rel_err <= tol,
        format!(
            "relative error {rel_err:.2e} at eps = {} vs allowance {tol:.2e}",
            smallest_eps(config)
        ),
    )
}

/// `Z_ε(0) = 1` on every path.
pub fn anchor_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("anchor_z0");
    let eps = smallest_eps(config);
    let reps = config.properties.anchor_replicates;
    let m = &config.model;
    let res: Result<Vec<f64>> = (0..reps as u32)
        .into_par_iter()
        .map(|r| {
            let s = NoiseStream::for_replicate(config.master_seed, ANCHOR_STREAM, r);
            let (_, x) = observation(config, config.theta0, eps, s)?;
            let eval = LikelihoodEvaluator::new(&x, m, eps)?;
            let curve = crate::likelihood::normalized_curve_with(&eval, m, config.theta0, &[-1.0, 0.0, 1.0], false)?;
            Ok(curve.log_z[1].abs().max(eval.ratio(config.theta0, config.theta0).abs()))
        })
        .collect();
    match res {
        Ok(v) => {
            let worst = v.iter().fold(0.0_f64, |a, b| a.max(*b));
            out.measure("max_abs_logZ0", worst);
            out.measure("replicates", reps as f64);
            out.decide(
                worst == 0.0,
                format!("ln Z(0) exactly 0 on {reps} paths: {}", worst == 0.0),
            )
        }
        Err(e) => out.failed_with(e),
    }
}

/// Empirical covariance of limit-law fBm samples on a 5-point grid within
/// 4 SE of the closed form, and uncorrelated increments at `H = 1/2`.
pub fn fbm_covariance_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("fbm_covariance");
    let h = config.model.hurst();
    let n = config.properties.fbm_samples;
    let l = &config.limit;
    let sampler = match FbmSampler::new(h, l.half_width, l.n_per_side) {
        Ok(s) => s,
        Err(e) => return out.failed_with(e),
    };
    let points = [-2.0, -1.0, 0.5, 1.0, 2.0];
    let draws: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let s = NoiseStream::new(config.master_seed, crate::noise::stream_index(FBM_STREAM, 0) + j);
            let sample = sampler.sample(s);
            points.iter().map(|u| sample.at(*u)).collect()
        })
        .collect();
    let du = sampler.du();
    let node = |u: f64| (u / du).round() * du;
    let mut worst_z: f64 = 0.0;
    let mut bad = 0;
    for a in 0..points.len() {
        for b in a..points.len() {
            let prods: Vec<f64> = draws.iter().map(|d| d[a] * d[b]).collect();
            let e = Estimate::of(&prods);
            let target = fbm_covariance(h, node(points[a]), node(points[b]));
            let z = (e.mean - target).abs() / e.se;
            worst_z = worst_z.max(z);
            if z > 4.0 {
                bad += 1;
            }
        }
    }
    out.measure("worst_z", worst_z);
    out.measure("entries_outside_4se", bad as f64);

    let bm = match FbmSampler::new(0.5, 2.0, 8) {
        Ok(s) => s,
        Err(e) => return out.failed_with(e),
    };
    let incr: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let s = NoiseStream::new(config.master_seed, crate::noise::stream_index(BROWNIAN_STREAM, 0) + j);
            let w = bm.sample(s);
            w.at(1.0) * (w.at(2.0) - w.at(1.0))
        })
        .collect();
    let e = Estimate::of(&incr);
    let bz = e.mean.abs() / e.se;
    out.measure("brownian_increment_cov", e.mean);
    out.measure("brownian_increment_z", bz);
    out.measure("samples", n as f64);
    out.decide(
        bad == 0 && bz <= 3.0,
        format!(
            "{bad} of 15 entries outside 4 SE (worst z {worst_z:.2}); H=1/2 increment covariance z {bz:.2} (limit 3)"
        ),
    )
}

/// Mean and variance of `ln Z_ε(±1)` at the smallest noise level against
/// `−Γ²/2` and `Γ²`, within 5% plus 3 SE.
pub fn moment_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("log_z_moments");
    let eps = smallest_eps(config);
    let reps = config.properties.moment_replicates;
    let consts = match limit_constants(&config.model, config.theta0) {
        Ok(c) => c,
        Err(e) => return out.failed_with(e),
    };
    let us = [-1.0, 1.0];
    let samples = match log_z_samples(config, eps, &us, reps, MOMENT_STREAM) {
        Ok(s) => s,
        Err(e) => return out.failed_with(e),
    };
    let two_h = 2.0 * consts.hurst;
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, u) in us.iter().enumerate() {
        let v: Vec<f64> = samples.iter().map(|z| z[k]).collect();
        let target_var = consts.gamma_sq * u.abs().powf(two_h);
        let target_mean = -0.5 * target_var;
        let mean = Estimate::of(&v);
        let var = stats::variance(&v);
        let var_se = variance_se(&v);
        let mean_tol = 0.05 * target_mean.abs() + 3.0 * mean.se;
        let var_tol = 0.05 * target_var + 3.0 * var_se;
        let mean_ok = (mean.mean - target_mean).abs() <= mean_tol;
        let var_ok = (var - target_var).abs() <= var_tol;
        ok &= mean_ok && var_ok;
        out.measure(format!("mean[u={u}]"), mean.mean);
        out.measure(format!("mean_se[u={u}]"), mean.se);
        out.measure(format!("var[u={u}]"), var);
        out.measure(format!("var_se[u={u}]"), var_se);
        notes.push(format!(
            "u={u}: mean {:.4} vs {target_mean:.4} +- {mean_tol:.4} ({}), var {var:.4} vs {target_var:.4} +- {var_tol:.4} ({})",
            mean.mean,
            if mean_ok { "ok" } else { "off" },
            if var_ok { "ok" } else { "off" }
        ));
    }
    out.measure("gamma_sq", consts.gamma_sq);
    out.measure("eps", eps);
    out.measure("replicates", reps as f64);
    out.decide(ok, notes.join("; "))
}

/// Standardized MLE risk `γ² E((θ̂ − θ₀)/ε^{1/H})²` at each configured
/// true value, pairwise equal within 3 combined SE.
pub fn uniformity_check(config: &ExperimentConfig) -> PropertyOutcome {
    let mut out = PropertyOutcome::new("uniformity");
    let thetas = match &config.uniformity_thetas {
        Some(t) if t.len() >= 2 => t.clone(),
        _ => return out.skip("needs uniformity_thetas with at least 2 values"),
    };
    let eps = smallest_eps(config);
    let reps = config.properties.uniformity_replicates;
    let m = &config.model;
    let scale = eps.powf(1.0 / m.hurst());
    let mut risks = Vec::new();
    for (k, &th) in thetas.iter().enumerate() {
        let gamma = match limit_constants(m, th) {
            Ok(c) => c.gamma,
            Err(e) => return out.failed_with(e),
        };
        let errs: Result<Vec<f64>> = (0..reps as u32)
            .into_par_iter()
            .map(|r| {
                let s = NoiseStream::for_replicate(config.master_seed, UNIFORMITY_STREAMS + k as u32, r);
                let (_, x) = observation(config, th, eps, s)?;
                let eval = LikelihoodEvaluator::new(&x, m, eps)?;
                let e = gamma * (mle_with(&eval, m).theta_hat - th) / scale;
                Ok(e * e)
            })
            .collect();
        match errs {
            Ok(v) => {
                let est = Estimate::of(&v);
                out.measure(format!("risk[theta={th}]"), est.mean);
                out.measure(format!("risk_se[theta={th}]"), est.se);
                risks.push(est);
            }
            Err(e) => return out.failed_with(e),
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..risks.len() {
        for j in i + 1..risks.len() {
            let se = risks[i].se.hypot(risks[j].se);
            worst = worst.max((risks[i].mean - risks[j].mean).abs() / se);
        }
    }
    out.measure("worst_z", worst);
    out.decide(
        worst <= 3.0,
        format!("largest pairwise risk gap {worst:.2} combined SE (limit 3)"),
    )
}

/// Every property check, in a fixed order.
pub fn property_suite(config: &ExperimentConfig) -> Result<Vec<PropertyOutcome>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CuspError::Io(e.to_string()))?;
    Ok(pool.install(|| {
        vec![
            deviation_check(config),
            holder_check(config),
            occupation_check(config),
            anchor_check(config),
            fbm_covariance_check(config),
            moment_check(config),
            uniformity_check(config),
        ]
    }))
}

pub fn write_properties(dir: &FsPath, outcomes: &[PropertyOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(outcomes).map_err(|e| CuspError::Io(e.to_string()))?;
    write_atomic(&dir.join(PROPERTIES_FILE), json.as_bytes())
}

pub fn load_properties(dir: &FsPath) -> Result<Option<Vec<PropertyOutcome>>> {
    let path = dir.join(PROPERTIES_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CuspError::Io(format!("{PROPERTIES_FILE}: {e}")))
}
