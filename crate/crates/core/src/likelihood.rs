//! Discretized likelihood ratios along an observed path.
//!
//! The log-likelihood of the drift `S(θ, ·)` on a path observed at
//! `X_0, …, X_N` (step `dt`, noise level `ε`) is the Itô sum
//!
//! ```text
//! ln L(θ) = ε⁻² Σ_k S(θ, X_k) ΔX_k − (dt / 2ε²) Σ_k S(θ, X_k)²
//! ```
//!
//! with `S` evaluated at left endpoints. Only differences in `θ` are ever
//! formed, so the `θ`-free parts of the sums (of order `ε⁻²`) are never
//! computed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::model::{cusp_power, CuspModel};
use crate::path::{fmt17, Path};
use crate::quadrature;

fn ensure_uniform(observed: &Path) -> Result<()> {
    if observed.is_uniform() {
        Ok(())
    } else {
        Err(CuspError::Shape("likelihood needs a uniform time grid".into()))
    }
}

/// `ln L(θ_num) − ln L(θ_den)` in difference form.
pub fn log_likelihood_ratio(
    observed: &Path,
    model: &CuspModel,
    theta_num: f64,
    theta_den: f64,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(CuspError::Domain(format!("eps must be > 0, got {eps}")));
    }
    ensure_uniform(observed)?;
    let dt = observed.dt();
    let mut cross = 0.0;
    let mut square = 0.0;
    for w in observed.values.windows(2) {
        let s_num = model.drift(theta_num, w[0]);
        let s_den = model.drift(theta_den, w[0]);
        cross += (s_num - s_den) * (w[1] - w[0]);
        square += s_num * s_num - s_den * s_den;
    }
    Ok(cross / (eps * eps) - dt / (2.0 * eps * eps) * square)
}

/// Precomputed per-path weights for repeated evaluation of `ln L(θ)` up to a
/// `θ`-independent constant.
///
/// Writing `S(θ, x) = a p(θ, x) + h(x)` with `p = |x − θ|^κ`,
///
/// ```text
/// ln L(θ) = (a / ε²) Σ_k p_k (ΔX_k − h(X_k) dt) − (a² dt / 2ε²) Σ_k p_k² + const.
/// ```
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluator {
    states: Vec<f64>,
    weights: Vec<f64>,
    a: f64,
    kappa: f64,
    dt: f64,
    eps: f64,
}

impl LikelihoodEvaluator {
    pub fn new(observed: &Path, model: &CuspModel, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(CuspError::Domain(format!("eps must be > 0, got {eps}")));
        }
        ensure_uniform(observed)?;
        let dt = observed.dt();
        let n = observed.n_steps();
        let mut states = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for w in observed.values.windows(2) {
            states.push(w[0]);
            weights.push((w[1] - w[0]) - model.h.eval(w[0]) * dt);
        }
        Ok(Self {
            states,
            weights,
            a: model.a,
            kappa: model.kappa,
            dt,
            eps,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ln L(θ)` minus a path-dependent constant.
    pub fn log_likelihood(&self, theta: f64) -> f64 {
        self.log_likelihood_many(&[theta])[0]
    }

    /// `ln L` at several `θ` in one pass over the path. Each value is
    /// bitwise identical to a single-`θ` evaluation.
    pub fn log_likelihood_many(&self, thetas: &[f64]) -> Vec<f64> {
        let m = thetas.len();
        let mut cross = vec![0.0; m];
        let mut square = vec![0.0; m];
        if self.kappa == 0.25 {
            for (&x, &w) in self.states.iter().zip(&self.weights) {
                for j in 0..m {
                    let p = (x - thetas[j]).abs().sqrt().sqrt();
                    cross[j] += p * w;
                    square[j] += p * p;
                }
            }
        } else {
            for (&x, &w) in self.states.iter().zip(&self.weights) {
                for j in 0..m {
                    let p = cusp_power(x - thetas[j], self.kappa);
                    cross[j] += p * w;
                    square[j] += p * p;
                }
            }
        }
        let scale = self.a / (self.eps * self.eps);
        cross
            .iter()
            .zip(&square)
            .map(|(c, q)| scale * (c - 0.5 * self.a * self.dt * q))
            .collect()
    }

    /// `ln L(θ_num) − ln L(θ_den)`.
    pub fn ratio(&self, theta_num: f64, theta_den: f64) -> f64 {
        if theta_num == theta_den {
            return 0.0;
        }
        self.log_likelihood(theta_num) - self.log_likelihood(theta_den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveScale {
    RawTheta,
    UUnits,
}

/// `ln Z_ε` tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihoodCurve {
    pub ref_theta: f64,
    pub eps: f64,
    pub scale: CurveScale,
    /// θ per unit of `u` (`ε^{1/H}` or `φ_ε = ε^{1/H} / γ`); 1 for raw θ.
    pub u_step: f64,
    pub grid: Vec<f64>,
    pub log_z: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSidecar {
    pub ref_theta: f64,
    pub eps: f64,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub gamma_sq: f64,
    pub scale: CurveScale,
}

impl LogLikelihoodCurve {
    pub fn theta_at(&self, i: usize) -> f64 {
        match self.scale {
            CurveScale::RawTheta => self.grid[i],
            CurveScale::UUnits => self.ref_theta + self.u_step * self.grid[i],
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let col = match self.scale {
            CurveScale::RawTheta => "theta",
            CurveScale::UUnits => "u",
        };
        writeln!(w, "{col},logZ")?;
        for (g, z) in self.grid.iter().zip(&self.log_z) {
            writeln!(w, "{},{}", fmt17(*g), fmt17(*z))?;
        }
        Ok(())
    }

    pub fn sidecar(&self, constants: &LimitConstants) -> CurveSidecar {
        CurveSidecar {
            ref_theta: self.ref_theta,
            eps: self.eps,
            hurst: constants.hurst,
            gamma_sq: constants.gamma_sq,
            scale: self.scale,
        }
    }
}

/// `ln Z_ε(u) = ln L(θ₀ + step·u) − ln L(θ₀)` with `step = ε^{1/H}`, or
/// `φ_ε = ε^{1/H}/γ_{θ₀}` when `use_phi` is set.
///
/// Abscissae mapping outside the open interval Θ are rejected.
pub fn normalized_curve(
    observed: &Path,
    model: &CuspModel,
    theta0: f64,
    eps: f64,
    u_grid: &[f64],
    use_phi: bool,
) -> Result<LogLikelihoodCurve> {
    let eval = LikelihoodEvaluator::new(observed, model, eps)?;
    normalized_curve_with(&eval, model, theta0, u_grid, use_phi)
}

pub fn normalized_curve_with(
    eval: &LikelihoodEvaluator,
    model: &CuspModel,
    theta0: f64,
    u_grid: &[f64],
    use_phi: bool,
) -> Result<LogLikelihoodCurve> {
    if u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CuspError::Domain("u grid must be strictly increasing".into()));
    }
    let mut step = eval.eps().powf(1.0 / model.hurst());
    if use_phi {
        step /= limit_constants(model, theta0)?.gamma;
    }
    let offending: Vec<f64> = u_grid
        .iter()
        .copied()
        .filter(|u| {
            let th = theta0 + step * u;
            !(th > model.theta_lo && th < model.theta_hi)
        })
        .collect();
    if !offending.is_empty() {
        return Err(CuspError::Domain(format!("abscissae outside U_eps: {offending:?}")));
    }
    let base = eval.log_likelihood(theta0);
    let log_z = u_grid
        .iter()
        .map(|&u| {
            if u == 0.0 {
                0.0
            } else {
                eval.log_likelihood(theta0 + step * u) - base
            }
        })
        .collect();
    Ok(LogLikelihoodCurve {
        ref_theta: theta0,
        eps: eval.eps(),
        scale: CurveScale::UUnits,
        u_step: step,
        grid: u_grid.to_vec(),
        log_z,
    })
}

/// `ln L(θ) − ln L(θ_ref)` on raw θ abscissae inside the closure of Θ.
pub fn theta_curve(
    eval: &LikelihoodEvaluator,
    model: &CuspModel,
    ref_theta: f64,
    thetas: &[f64],
) -> Result<LogLikelihoodCurve> {
    if let Some(bad) = thetas.iter().find(|t| !model.contains_theta(**t)) {
        return Err(CuspError::Domain(format!("theta {bad} outside Θ")));
    }
    let base = eval.log_likelihood(ref_theta);
    Ok(LogLikelihoodCurve {
        ref_theta,
        eps: eval.eps(),
        scale: CurveScale::RawTheta,
        u_step: 1.0,
        grid: thetas.to_vec(),
        log_z: thetas
            .iter()
            .map(|&t| {
                if t == ref_theta {
                    0.0
                } else {
                    eval.log_likelihood(t) - base
                }
            })
            .collect(),
    })
}

/// `Γ²`, `γ = Γ^{1/H}` and `H` at a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub gamma_sq: f64,
    pub gamma: f64,
    pub hurst: f64,
    /// `∫ (|s − 1|^κ − |s|^κ)² ds`.
    pub cusp_integral: f64,
    /// Analytic tail beyond the quadrature cutoff, included in `cusp_integral`.
    pub tail: f64,
}

/// `J(κ) = ∫_ℝ (|s − 1|^κ − |s|^κ)² ds` with its cutoff and tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuspIntegral {
    pub value: f64,
    pub cutoff: f64,
    pub tail: f64,
    pub quadrature_error: f64,
}

/// `((r + 1/2)^κ − (r − 1/2)^κ)²` for `r ≥ 0`, i.e. the integrand at
/// `s = 1/2 + r`; cancellation-free for large `r`.
fn centered_integrand(r: f64, kappa: f64) -> f64 {
    let d = if r > 1.0 {
        let x = 0.5 / r;
        r.powf(kappa) * ((kappa * x.ln_1p()).exp_m1() - (kappa * (-x).ln_1p()).exp_m1())
    } else {
        (r + 0.5).powf(kappa) - (r - 0.5).abs().powf(kappa)
    };
    d * d
}

/// The integrand is symmetric about `s = 1/2` and behaves like
/// `κ² r^{2κ−2} (1 + O(r⁻²))` at distance `r`, so the two tails beyond
/// `|s − 1/2| = M` contribute `2κ² M^{2κ−1} / (1 − 2κ)` to relative order `M⁻²`.
pub fn cusp_integral(kappa: f64) -> Result<CuspIntegral> {
    if kappa >= 0.5 {
        return Err(CuspError::Divergent(format!(
            "∫(|s−1|^κ − |s|^κ)² ds diverges for κ = {kappa} ≥ 1/2"
        )));
    }
    if !(kappa > 0.0) {
        return Err(CuspError::Domain(format!("kappa must be positive, got {kappa}")));
    }
    let decay = 1.0 - 2.0 * kappa;
    let cutoff = (1e8 * kappa * kappa / decay).powf(1.0 / decay).max(1e3).min(1e6);
    let mut breaks = vec![0.0, 0.5];
    let mut b = 1.0;
    while b < cutoff {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(cutoff);
    let body = quadrature::integrate_pieces(|r| centered_integrand(r, kappa), &breaks, 1e-15, 1e-13);
    let tail = 2.0 * kappa * kappa * cutoff.powf(-decay) / decay;
    Ok(CuspIntegral {
        value: 2.0 * body.value + tail,
        cutoff,
        tail,
        quadrature_error: 2.0 * body.error,
    })
}

/// `Γ²_θ = a² J(κ) / h(θ)` and `γ_θ = Γ_θ^{1/H}`.
pub fn limit_constants(model: &CuspModel, theta0: f64) -> Result<LimitConstants> {
    let j = cusp_integral(model.kappa)?;
    let h = model.h.eval(theta0);
    if !(h > 0.0) {
        return Err(CuspError::Domain(format!("h({theta0}) = {h} is not positive")));
    }
    let gamma_sq = model.a * model.a * j.value / h;
    let hurst = model.hurst();
    Ok(LimitConstants {
        gamma_sq,
        gamma: gamma_sq.powf(1.0 / (2.0 * hurst)),
        hurst,
        cusp_integral: j.value,
        tail: j.tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_sde, simulate_wiener, HFunction};
    use crate::noise::NoiseStream;
    use proptest::prelude::*;

    fn sample_path(eps: f64, seed: u64) -> Path {
        let m = CuspModel::reference();
        let w = simulate_wiener(NoiseStream::new(seed, 0), 3000, m.horizon);
        simulate_sde(&m, 1.0, eps, &w).unwrap()
    }

    #[test]
    fn ratio_of_equal_thetas_is_zero() {
        let p = sample_path(0.05, 1);
        let m = CuspModel::reference();
        assert_eq!(log_likelihood_ratio(&p, &m, 1.1, 1.1, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn evaluator_matches_direct_difference() {
        let p = sample_path(0.05, 2);
        let m = CuspModel {
            h: HFunction::Logistic { c: 1.0, d: 0.3 },
            ..CuspModel::reference()
        };
        let ev = LikelihoodEvaluator::new(&p, &m, 0.05).unwrap();
        for (a, b) in [(0.9, 1.0), (1.2, 0.7), (1.0, 1.001)] {
            let direct = log_likelihood_ratio(&p, &m, a, b, 0.05).unwrap();
            let fast = ev.ratio(a, b);
            assert!(
                (direct - fast).abs() < 1e-8 * (1.0 + direct.abs()),
                "{direct} vs {fast}"
            );
        }
    }

    #[test]
    fn rejects_non_uniform_grid() {
        let mut p = sample_path(0.05, 3);
        p.times[5] += 1e-4;
        let m = CuspModel::reference();
        assert!(matches!(
            log_likelihood_ratio(&p, &m, 1.0, 1.1, 0.05),
            Err(CuspError::Shape(_))
        ));
    }

    #[test]
    fn curve_anchor_is_zero_and_escape_rejected() {
        let p = sample_path(0.05, 4);
        let m = CuspModel::reference();
        let c = normalized_curve(&p, &m, 1.0, 0.05, &[-1.0, 0.0, 1.0], false).unwrap();
        assert_eq!(c.log_z[1], 0.0);
        let err = normalized_curve(&p, &m, 1.0, 0.05, &[-100.0, 0.0], false).unwrap_err();
        assert!(matches!(err, CuspError::Domain(ref s) if s.contains("-100")));
    }

    #[test]
    fn divergent_kappa() {
        assert!(matches!(cusp_integral(0.5), Err(CuspError::Divergent(_))));
        assert!(matches!(cusp_integral(0.7), Err(CuspError::Divergent(_))));
    }

    #[test]
    fn gamma_scaling_identities_exact() {
        let m = CuspModel::reference();
        let base = limit_constants(&m, 1.0).unwrap().gamma_sq;
        let doubled_a = limit_constants(&CuspModel { a: 2.0, ..m }, 1.0).unwrap().gamma_sq;
        let doubled_h = limit_constants(
            &CuspModel {
                h: HFunction::Constant { c: 2.0 },
                ..m
            },
            1.0,
        )
        .unwrap()
        .gamma_sq;
        assert_eq!(doubled_a, 4.0 * base);
        assert_eq!(doubled_h, base / 2.0);
    }

    #[test]
    fn gamma_is_power_of_gamma_sq() {
        let c = limit_constants(&CuspModel::reference(), 1.0).unwrap();
        assert!((c.gamma.powf(2.0 * c.hurst) - c.gamma_sq).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn ratio_antisymmetric_and_chained(t1 in 0.5f64..1.5, t2 in 0.5f64..1.5, t3 in 0.5f64..1.5) {
            let p = sample_path(0.1, 9);
            let m = CuspModel::reference();
            let r12 = log_likelihood_ratio(&p, &m, t1, t2, 0.1).unwrap();
            let r21 = log_likelihood_ratio(&p, &m, t2, t1, 0.1).unwrap();
            prop_assert_eq!(r12, -r21);
            let r23 = log_likelihood_ratio(&p, &m, t2, t3, 0.1).unwrap();
            let r13 = log_likelihood_ratio(&p, &m, t1, t3, 0.1).unwrap();
            prop_assert!((r13 - (r12 + r23)).abs() <= 1e-9 * (1.0 + r13.abs()));
        }
    }
}
