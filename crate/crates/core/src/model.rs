//! The observation model `dX = S(θ, X) dt + ε dW` with cusp drift
//! `S(θ, x) = a |x − θ|^κ + h(x)`, its deterministic limit and path tools.

use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::noise::NoiseStream;
use crate::path::{uniform_grid, Path, PathKind};
use crate::quadrature;

/// Built-in catalog for the regular part `h` of the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum HFunction {
    /// `h(x) = c`.
    Constant { c: f64 },
    /// `h(x) = c + d / (1 + x²)`.
    Logistic { c: f64, d: f64 },
    /// `h(x) = clamp(intercept + slope·x, lo, hi)`; either clamp may be absent.
    AffineClamped {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        lo: Option<f64>,
        #[serde(default)]
        hi: Option<f64>,
    },
}

impl HFunction {
    pub fn name(&self) -> &'static str {
        match self {
            HFunction::Constant { .. } => "constant",
            HFunction::Logistic { .. } => "logistic",
            HFunction::AffineClamped { .. } => "affine_clamped",
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            HFunction::Constant { c } => c,
            HFunction::Logistic { c, d } => c + d / (1.0 + x * x),
            HFunction::AffineClamped {
                intercept,
                slope,
                lo,
                hi,
            } => {
                let mut v = intercept + slope * x;
                if let Some(lo) = lo {
                    v = v.max(lo);
                }
                if let Some(hi) = hi {
                    v = v.min(hi);
                }
                v
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            HFunction::Constant { .. } => 0.0,
            HFunction::Logistic { d, .. } => {
                let q = 1.0 + x * x;
                -2.0 * d * x / (q * q)
            }
            HFunction::AffineClamped {
                intercept,
                slope,
                lo,
                hi,
            } => {
                let v = intercept + slope * x;
                let clipped = lo.is_some_and(|l| v < l) || hi.is_some_and(|h| v > h);
                if clipped {
                    0.0
                } else {
                    slope
                }
            }
        }
    }

    /// Global lower bound `b` of `h`, when one exists.
    pub fn lower_bound(&self) -> Option<f64> {
        match *self {
            HFunction::Constant { c } => Some(c),
            HFunction::Logistic { c, d } => Some(c + d.min(0.0)),
            HFunction::AffineClamped {
                slope, lo, intercept, ..
            } => {
                if slope == 0.0 {
                    Some(lo.map_or(intercept, |l| l.max(intercept)))
                } else {
                    lo
                }
            }
        }
    }

    /// Global bound `H₁` on `|h'|`.
    pub fn derivative_bound(&self) -> f64 {
        match *self {
            HFunction::Constant { .. } => 0.0,
            // max |2x / (1 + x²)²| = 3√3 / 8 at x = 1/√3.
            HFunction::Logistic { d, .. } => d.abs() * 3.0 * 3f64.sqrt() / 8.0,
            HFunction::AffineClamped { slope, .. } => slope.abs(),
        }
    }
}

/// `|d|^κ`, with a square-root fast path for κ = 1/4.
#[inline]
pub fn cusp_power(d: f64, kappa: f64) -> f64 {
    let d = d.abs();
    if kappa == 0.25 {
        d.sqrt().sqrt()
    } else {
        d.powf(kappa)
    }
}

/// A problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CuspModel {
    pub a: f64,
    pub kappa: f64,
    pub h: HFunction,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl CuspModel {
    /// Builds a model and rejects it unless it passes [`validate_model`]
    /// with the catalog's own bounds for `h`.
    pub fn new(a: f64, kappa: f64, h: HFunction, x0: f64, horizon: f64, theta_lo: f64, theta_hi: f64) -> Result<Self> {
        let m = Self {
            a,
            kappa,
            h,
            x0,
            horizon,
            theta_lo,
            theta_hi,
        };
        m.check()?;
        Ok(m)
    }

    /// The baseline instance: a = 1, κ = 1/4, h ≡ 1, x₀ = 0, T = 3, Θ = (0.5, 1.5).
    pub fn reference() -> Self {
        Self {
            a: 1.0,
            kappa: 0.25,
            h: HFunction::Constant { c: 1.0 },
            x0: 0.0,
            horizon: 3.0,
            theta_lo: 0.5,
            theta_hi: 1.5,
        }
    }

    /// Validates against the catalog bounds of `h`.
    pub fn check(&self) -> Result<ValidationReport> {
        let b = self.h.lower_bound().unwrap_or(f64::MIN_POSITIVE);
        let h1 = self.h.derivative_bound();
        let report = validate_model(self, b.max(f64::MIN_POSITIVE), h1.max(f64::MIN_POSITIVE))?;
        if report.is_ok() {
            Ok(report)
        } else {
            Err(CuspError::InvalidModel(report.summary()))
        }
    }

    /// Hurst exponent `κ + 1/2` of the limit process.
    pub fn hurst(&self) -> f64 {
        self.kappa + 0.5
    }

    /// `S(θ, x) = a |x − θ|^κ + h(x)`; equals `h(θ)` at the cusp.
    #[inline]
    pub fn drift(&self, theta: f64, x: f64) -> f64 {
        self.a * cusp_power(x - theta, self.kappa) + self.h.eval(x)
    }

    pub fn contains_theta(&self, theta: f64) -> bool {
        theta >= self.theta_lo && theta <= self.theta_hi
    }
}

/// Free-function form of [`CuspModel::drift`].
pub fn drift(model: &CuspModel, theta: f64, x: f64) -> f64 {
    model.drift(theta, x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub clause: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Violated clauses, in check order.
    pub violations: Vec<Violation>,
    /// `sup |S| / (1 + |x|^κ)` over the sampled range and Θ endpoints.
    pub implied_growth_constant: f64,
    /// `x_T` at the lower and upper ends of Θ (when the limit solve ran).
    pub x_t_at_endpoints: Option<(f64, f64)>,
    /// State range on which `h` was sampled.
    pub sampled_range: Option<(f64, f64)>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn clauses(&self) -> Vec<&'static str> {
        self.violations.iter().map(|v| v.clause).collect()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} ({})", v.clause, v.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub const CLAUSE_KAPPA: &str = "kappa out of (0,1/2)";
pub const CLAUSE_A: &str = "a not positive";
pub const CLAUSE_T: &str = "T not positive";
pub const CLAUSE_H_LOWER: &str = "h not separated from zero";
pub const CLAUSE_H_DERIV: &str = "h derivative exceeds H1";
pub const CLAUSE_THETA_ORDER: &str = "theta interval empty";
pub const CLAUSE_THETA_LO: &str = "theta_lo not above x0";
pub const CLAUSE_THETA_HI: &str = "theta_hi not below inf x_T(theta)";
pub const CLAUSE_GROWTH: &str = "growth bound violated";
pub const CLAUSE_LIMIT_ODE: &str = "limit ODE not increasing";

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    /// Check the Θ-embedding on this many equispaced θ instead of the two
    /// endpoints.
    pub dense_theta: Option<usize>,
    pub n_steps: usize,
    /// State-range margin around `[x0, x_T]` on which `h` is sampled.
    pub margin: f64,
    pub n_samples: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            dense_theta: None,
            n_steps: 20_000,
            margin: 1.0,
            n_samples: 4001,
        }
    }
}

/// Checks Condition-A style constraints: `κ ∈ (0, 1/2)`, `a > 0`,
/// `h ≥ b` and `|h'| ≤ H₁` on the reachable range, `x₀ < θ_lo < θ_hi`,
/// `θ_hi < x_T(θ)` at the ends of Θ and the growth bound
/// `|S(θ, x)| ≤ L (1 + |x|^κ)`.
pub fn validate_model(model: &CuspModel, b: f64, h1: f64) -> Result<ValidationReport> {
    validate_model_with(model, b, h1, ValidationOptions::default())
}

pub fn validate_model_with(model: &CuspModel, b: f64, h1: f64, opts: ValidationOptions) -> Result<ValidationReport> {
    let mut violations = Vec::new();
    let mut push = |clause, detail: String| violations.push(Violation { clause, detail });

    if !(model.kappa > 0.0 && model.kappa < 0.5) {
        push(CLAUSE_KAPPA, format!("kappa = {}", model.kappa));
    }
    if !(model.a > 0.0) {
        push(CLAUSE_A, format!("a = {}", model.a));
    }
    if !(model.horizon > 0.0) {
        push(CLAUSE_T, format!("T = {}", model.horizon));
    }
    if !(model.theta_lo < model.theta_hi) {
        push(CLAUSE_THETA_ORDER, format!("({}, {})", model.theta_lo, model.theta_hi));
    }
    if !(model.theta_lo > model.x0) {
        push(
            CLAUSE_THETA_LO,
            format!("theta_lo = {} vs x0 = {}", model.theta_lo, model.x0),
        );
    }

    // h must be finite and separated from zero before the limit ODE can
    // be trusted, so sample it on a provisional range first.
    let finite_h = |x: f64| -> Result<f64> {
        let v = model.h.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CuspError::InvalidFunction {
                name: model.h.name().to_string(),
                x,
            })
        }
    };
    finite_h(model.x0)?;

    let mut x_t_at_endpoints = None;
    let mut range_hi = model.theta_hi.max(model.x0) + opts.margin;
    if model.horizon > 0.0 && model.horizon.is_finite() && finite_h(model.x0)? > 0.0 {
        let thetas: Vec<f64> = match opts.dense_theta {
            Some(n) if n >= 2 => (0..n)
                .map(|i| model.theta_lo + (model.theta_hi - model.theta_lo) * i as f64 / (n - 1) as f64)
                .collect(),
            _ => vec![model.theta_lo, model.theta_hi],
        };
        let mut ends = Vec::with_capacity(thetas.len());
        let mut ode_ok = true;
        for &th in &thetas {
            match solve_limit_ode_with(model, th, opts.n_steps, OdeScheme::Rk4) {
                Ok(p) => ends.push(p.last()),
                Err(CuspError::Consistency(msg)) => {
                    ode_ok = false;
                    push(CLAUSE_LIMIT_ODE, msg);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ode_ok {
            let inf_end = ends.iter().cloned().fold(f64::INFINITY, f64::min);
            let sup_end = ends.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(model.theta_hi < inf_end) {
                push(
                    CLAUSE_THETA_HI,
                    format!("theta_hi = {} vs inf x_T = {}", model.theta_hi, inf_end),
                );
            }
            x_t_at_endpoints = Some((ends[0], *ends.last().unwrap()));
            range_hi = range_hi.max(sup_end + opts.margin);
        }
    }

    let range_lo = model.x0 - opts.margin;
    let n = opts.n_samples.max(2);
    let mut min_h = f64::INFINITY;
    let mut min_at = range_lo;
    let mut max_dh = 0.0_f64;
    let mut max_dh_at = range_lo;
    let mut growth = 0.0_f64;
    for i in 0..n {
        let x = range_lo + (range_hi - range_lo) * i as f64 / (n - 1) as f64;
        let hx = finite_h(x)?;
        if hx < min_h {
            min_h = hx;
            min_at = x;
        }
        let dh = model.h.derivative(x).abs();
        if dh > max_dh {
            max_dh = dh;
            max_dh_at = x;
        }
        for th in [model.theta_lo, model.theta_hi] {
            let s = model.drift(th, x).abs() / (1.0 + cusp_power(x, model.kappa));
            growth = growth.max(s);
        }
    }
    // Also sample the points where h(x) = x style functions hit zero.
    for x in [0.0, model.x0, model.theta_lo, model.theta_hi] {
        if x >= range_lo && x <= range_hi {
            let hx = finite_h(x)?;
            if hx < min_h {
                min_h = hx;
                min_at = x;
            }
        }
    }
    if !(min_h >= b) {
        push(CLAUSE_H_LOWER, format!("min h = {min_h} at x = {min_at} below b = {b}"));
    }
    if !(max_dh <= h1) {
        push(
            CLAUSE_H_DERIV,
            format!("|h'| = {max_dh} at x = {max_dh_at} above H1 = {h1}"),
        );
    }
    // |S| ≤ a|x|^κ + a|θ|^κ + sup h, hence L = max(a, a·max|θ|^κ + sup h) works.
    let sup_h = (0..n)
        .map(|i| {
            model
                .h
                .eval(range_lo + (range_hi - range_lo) * i as f64 / (n - 1) as f64)
                .abs()
        })
        .fold(0.0_f64, f64::max);
    let theta_mag = model.theta_lo.abs().max(model.theta_hi.abs());
    let bound = model
        .a
        .abs()
        .max(model.a.abs() * cusp_power(theta_mag, model.kappa) + sup_h);
    if !(growth.is_finite() && growth <= bound * (1.0 + 1e-12)) {
        push(CLAUSE_GROWTH, format!("implied L = {growth} exceeds {bound}"));
    }

    Ok(ValidationReport {
        violations,
        implied_growth_constant: growth,
        x_t_at_endpoints,
        sampled_range: Some((range_lo, range_hi)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeScheme {
    Rk4,
    Euler,
}

/// Limit path `x_t(θ)` of `dx/dt = S(θ, x)` on a uniform grid by RK4.
pub fn solve_limit_ode(model: &CuspModel, theta: f64, n_steps: usize) -> Result<Path> {
    solve_limit_ode_with(model, theta, n_steps, OdeScheme::Rk4)
}

pub fn solve_limit_ode_with(model: &CuspModel, theta: f64, n_steps: usize, scheme: OdeScheme) -> Result<Path> {
    if n_steps < 100 {
        return Err(CuspError::Domain(format!(
            "limit ODE needs at least 100 steps, got {n_steps}"
        )));
    }
    let values = limit_ode_values(model, theta, n_steps, scheme);
    if let Some(k) = values.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(CuspError::Consistency(format!(
            "x_t not increasing at step {k} (x = {})",
            values[k]
        )));
    }
    Path::new(uniform_grid(model.horizon, n_steps), values, PathKind::Deterministic)
}

/// Values only; the explicit-Euler branch matches [`simulate_sde`] at ε = 0.
pub(crate) fn limit_ode_values(model: &CuspModel, theta: f64, n_steps: usize, scheme: OdeScheme) -> Vec<f64> {
    let dt = model.horizon / n_steps as f64;
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = model.x0;
    values.push(x);
    match scheme {
        OdeScheme::Rk4 => {
            for _ in 0..n_steps {
                let k1 = model.drift(theta, x);
                let k2 = model.drift(theta, x + 0.5 * dt * k1);
                let k3 = model.drift(theta, x + 0.5 * dt * k2);
                let k4 = model.drift(theta, x + dt * k3);
                x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                values.push(x);
            }
        }
        OdeScheme::Euler => {
            for _ in 0..n_steps {
                x = x + model.drift(theta, x) * dt;
                values.push(x);
            }
        }
    }
    values
}

/// Time `t(x) = ∫_{x₀}^{x} dy / S(θ, y)` for the limit path to reach `x`.
pub fn time_of_level(model: &CuspModel, theta: f64, x: f64) -> Result<f64> {
    if x < model.x0 {
        return Err(CuspError::Domain(format!("level {x} below x0 = {}", model.x0)));
    }
    let t = level_time_unchecked(model, theta, x);
    if !t.is_finite() || t > model.horizon * (1.0 + 1e-9) {
        return Err(CuspError::Domain(format!(
            "level {x} not reached by time T = {} (needs {t})",
            model.horizon
        )));
    }
    Ok(t)
}

fn level_time_unchecked(model: &CuspModel, theta: f64, x: f64) -> f64 {
    if x == model.x0 {
        return 0.0;
    }
    let mut breaks = vec![model.x0];
    if theta > model.x0 && theta < x {
        breaks.push(theta);
    }
    breaks.push(x);
    quadrature::integrate_pieces(|y| 1.0 / model.drift(theta, y), &breaks, 1e-13, 1e-13).value
}

/// Limit occupation density `ℓ₀(x) = 1 / S(θ₀, x)` on `[x₀, x_T]`.
pub fn limit_density(model: &CuspModel, theta0: f64, x: f64) -> f64 {
    1.0 / model.drift(theta0, x)
}

/// `∫_{x₀}^{x_end} g(x) ℓ₀(x) dx`, the small-noise limit of the occupation
/// integral when `x_end = x_T(θ₀)`.
pub fn limit_occupation_integral<G: Fn(f64) -> f64>(model: &CuspModel, theta0: f64, x_end: f64, g: G) -> f64 {
    let mut breaks = vec![model.x0];
    if theta0 > model.x0 && theta0 < x_end {
        breaks.push(theta0);
    }
    breaks.push(x_end);
    quadrature::integrate_pieces(|x| g(x) * limit_density(model, theta0, x), &breaks, 1e-12, 1e-12).value
}

/// Standard Wiener path with `W(0) = 0`.
pub fn simulate_wiener(stream: NoiseStream, n_steps: usize, horizon: f64) -> Path {
    assert!(n_steps >= 1, "n_steps must be positive");
    let sd = (horizon / n_steps as f64).sqrt();
    let mut z = vec![0.0; n_steps];
    stream.fill_standard_normal(&mut z);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut w = 0.0;
    values.push(w);
    for dz in z {
        w += sd * dz;
        values.push(w);
    }
    Path {
        times: uniform_grid(horizon, n_steps),
        values,
        kind: PathKind::Wiener,
    }
}

/// Euler–Maruyama path of the observation model driven by `wiener`.
pub fn simulate_sde(model: &CuspModel, theta: f64, eps: f64, wiener: &Path) -> Result<Path> {
    if !(eps >= 0.0) {
        return Err(CuspError::Domain(format!("eps must be >= 0, got {eps}")));
    }
    if wiener.kind != PathKind::Wiener {
        return Err(CuspError::Shape("driving path is not a Wiener path".into()));
    }
    let n = wiener.n_steps();
    if (wiener.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(CuspError::Shape(format!(
            "grid mismatch: Wiener horizon {} vs model T {}",
            wiener.horizon(),
            model.horizon
        )));
    }
    let dt = model.horizon / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut x = model.x0;
    values.push(x);
    for w in wiener.values.windows(2) {
        x = x + model.drift(theta, x) * dt + eps * (w[1] - w[0]);
        values.push(x);
    }
    Ok(Path {
        times: wiener.times.clone(),
        values,
        kind: PathKind::Observation,
    })
}

/// `max_k |X_k − x_k|` over a shared grid.
pub fn sup_deviation(observed: &Path, deterministic: &Path) -> Result<f64> {
    observed.ensure_same_grid(deterministic)?;
    Ok(observed
        .values
        .iter()
        .zip(&deterministic.values)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
}

/// Trapezoidal approximation of `∫₀ᵀ g(X_t) dt`.
pub fn occupation_integral<G: Fn(f64) -> f64>(observed: &Path, g: G) -> f64 {
    let mut acc = 0.0;
    let mut prev = g(observed.values[0]);
    for k in 1..observed.values.len() {
        let cur = g(observed.values[k]);
        acc += 0.5 * (prev + cur) * (observed.times[k] - observed.times[k - 1]);
        prev = cur;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_speed(c: f64) -> CuspModel {
        CuspModel {
            a: 0.0,
            h: HFunction::Constant { c },
            ..CuspModel::reference()
        }
    }

    #[test]
    fn drift_examples() {
        let m = CuspModel::reference();
        assert_eq!(m.drift(1.0, 1.0), 1.0);
        assert_eq!(m.drift(1.0, 2.0), 2.0);
        let m2 = CuspModel { a: 2.0, ..m };
        assert!((m2.drift(1.0, 1.0001) - 1.2).abs() < 1e-12);
        // General κ goes through powf.
        let m3 = CuspModel { kappa: 0.3, ..m };
        assert!((m3.drift(0.0, 2.0) - (1.0 + 2f64.powf(0.3))).abs() < 1e-15);
    }

    #[test]
    fn reference_model_validates() {
        let r = validate_model(&CuspModel::reference(), 1.0, 1e-9).unwrap();
        assert!(r.is_ok(), "{}", r.summary());
        let (lo, hi) = r.x_t_at_endpoints.unwrap();
        assert!(lo > 1.5 && hi > 1.5);
    }

    #[test]
    fn kappa_boundary_rejected() {
        let m = CuspModel {
            kappa: 0.5,
            ..CuspModel::reference()
        };
        let r = validate_model(&m, 1.0, 1e-9).unwrap();
        assert_eq!(r.clauses(), vec![CLAUSE_KAPPA]);
        assert!(CuspModel::new(1.0, 0.5, m.h, 0.0, 3.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn identity_h_not_separated() {
        let m = CuspModel {
            h: HFunction::AffineClamped {
                intercept: 0.0,
                slope: 1.0,
                lo: None,
                hi: None,
            },
            ..CuspModel::reference()
        };
        let r = validate_model(&m, 0.1, 1.0).unwrap();
        assert!(r.clauses().contains(&CLAUSE_H_LOWER), "{:?}", r.clauses());
    }

    #[test]
    fn zero_amplitude_rejected() {
        let r = validate_model(&constant_speed(1.0), 1.0, 1e-9).unwrap();
        assert!(r.clauses().contains(&CLAUSE_A));
    }

    #[test]
    fn theta_hi_beyond_reach_rejected() {
        let m = CuspModel {
            horizon: 0.5,
            ..CuspModel::reference()
        };
        let r = validate_model(&m, 1.0, 1e-9).unwrap();
        assert!(r.clauses().contains(&CLAUSE_THETA_HI), "{:?}", r.clauses());
    }

    #[test]
    fn nan_h_is_invalid_function() {
        let m = CuspModel {
            h: HFunction::Constant { c: f64::NAN },
            ..CuspModel::reference()
        };
        assert!(matches!(
            validate_model(&m, 1.0, 1.0),
            Err(CuspError::InvalidFunction { .. })
        ));
    }

    #[test]
    fn logistic_catalog_bounds() {
        let h = HFunction::Logistic { c: 1.0, d: 0.5 };
        let m = CuspModel {
            h,
            ..CuspModel::reference()
        };
        assert!(m.check().is_ok());
        let xs = (0..2001).map(|i| -5.0 + i as f64 * 0.005);
        let max_dh = xs.map(|x| h.derivative(x).abs()).fold(0.0, f64::max);
        assert!(max_dh <= h.derivative_bound() + 1e-12);
        assert!(max_dh > h.derivative_bound() - 1e-4);
    }

    #[test]
    fn linear_ode_is_exact() {
        let m = constant_speed(0.7);
        let p = solve_limit_ode(&m, 1.0, 300).unwrap();
        for (t, x) in p.times.iter().zip(&p.values) {
            assert!((x - (m.x0 + 0.7 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_steps_rejected() {
        assert!(solve_limit_ode(&CuspModel::reference(), 1.0, 50).is_err());
    }

    #[test]
    fn non_monotone_limit_path_detected() {
        let m = CuspModel {
            a: 0.0,
            h: HFunction::Constant { c: -1.0 },
            ..CuspModel::reference()
        };
        assert!(matches!(solve_limit_ode(&m, 1.0, 200), Err(CuspError::Consistency(_))));
    }

    #[test]
    fn time_of_level_constant_speed_and_origin() {
        let m = constant_speed(2.0);
        assert!((time_of_level(&m, 1.0, 0.0 + 2.0 * 1.25).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(time_of_level(&CuspModel::reference(), 1.0, 0.0).unwrap(), 0.0);
        assert!(time_of_level(&CuspModel::reference(), 1.0, -0.1).is_err());
        assert!(time_of_level(&CuspModel::reference(), 1.0, 100.0).is_err());
    }

    #[test]
    fn zero_noise_matches_euler_bitwise() {
        let m = CuspModel::reference();
        let w = simulate_wiener(NoiseStream::new(1, 0), 1000, m.horizon);
        let x = simulate_sde(&m, 1.0, 0.0, &w).unwrap();
        let e = solve_limit_ode_with(&m, 1.0, 1000, OdeScheme::Euler).unwrap();
        assert_eq!(x.values, e.values);
    }

    #[test]
    fn sde_rejects_grid_mismatch() {
        let m = CuspModel::reference();
        let w = simulate_wiener(NoiseStream::new(1, 0), 100, 2.0);
        assert!(matches!(simulate_sde(&m, 1.0, 0.1, &w), Err(CuspError::Shape(_))));
    }

    #[test]
    fn sup_deviation_examples() {
        let m = CuspModel::reference();
        let p = solve_limit_ode(&m, 1.0, 200).unwrap();
        assert_eq!(sup_deviation(&p, &p).unwrap(), 0.0);
        let mut q = p.clone();
        q.values[17] += 0.3;
        assert!((sup_deviation(&q, &p).unwrap() - 0.3).abs() < 1e-12);
        let r = solve_limit_ode(&m, 1.0, 201).unwrap();
        assert!(sup_deviation(&p, &r).is_err());
    }

    #[test]
    fn occupation_of_one_is_horizon() {
        let p = solve_limit_ode(&CuspModel::reference(), 1.0, 3000).unwrap();
        assert!((occupation_integral(&p, |_| 1.0) - 3.0).abs() < 1e-12);
    }
}
