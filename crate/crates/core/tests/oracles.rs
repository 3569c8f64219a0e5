//! Model, likelihood and constant computations against independent oracles.

use cusp_core::likelihood::{limit_constants, log_likelihood_ratio, LikelihoodEvaluator};
use cusp_core::model::{
    limit_occupation_integral, simulate_sde, simulate_wiener, solve_limit_ode, solve_limit_ode_with, time_of_level,
    OdeScheme,
};
use cusp_core::stats::Estimate;
use cusp_core::{CuspModel, HFunction, NoiseStream};

/// Composite Simpson rule with `n` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `∫_{x0}^{x} dy / S(θ, y)`, split at the cusp, with the substitution
/// `y = θ ± v^{1/κ}` making the integrand smooth at the cusp.
fn level_time_oracle(m: &CuspModel, theta: f64, x: f64) -> f64 {
    let p = 1.0 / m.kappa;
    let side = |dist: f64, sign: f64| {
        let vmax = dist.powf(1.0 / p);
        simpson(
            |v| {
                let y = theta + sign * v.powf(p);
                p * v.powf(p - 1.0) / m.drift(theta, y)
            },
            0.0,
            vmax,
            20_000,
        )
    };
    if x <= theta {
        side(theta - m.x0, -1.0) - side(theta - x, -1.0)
    } else {
        side(theta - m.x0, -1.0) + side(x - theta, 1.0)
    }
}

/// `x_T(θ)` by bisection on the time-change identity.
fn endpoint_oracle(m: &CuspModel, theta: f64) -> f64 {
    let (mut lo, mut hi) = (m.x0, m.x0 + 10.0 * m.horizon);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if level_time_oracle(m, theta, mid) < m.horizon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn rk4_endpoint_matches_time_change_root() {
    let m = CuspModel::reference();
    for theta in [0.5, 1.0, 1.5] {
        let oracle = endpoint_oracle(&m, theta);
        let rk4 = solve_limit_ode(&m, theta, 300_000).unwrap().last();
        // the cusp crossing limits RK4 to roughly first order
        assert!((rk4 - oracle).abs() < 1e-6, "theta {theta}: rk4 {rk4} oracle {oracle}");
    }
}

#[test]
fn level_time_matches_oracle() {
    let m = CuspModel::reference();
    for x in [0.3, 0.99, 1.0, 1.01, 2.5, 5.0] {
        let a = time_of_level(&m, 1.0, x).unwrap();
        let b = level_time_oracle(&m, 1.0, x);
        assert!((a - b).abs() < 1e-8, "x {x}: {a} vs {b}");
    }
}

#[test]
fn rk4_error_shrinks_with_steps() {
    let m = CuspModel::reference();
    let oracle = endpoint_oracle(&m, 1.0);
    let err = |n| (solve_limit_ode(&m, 1.0, n).unwrap().last() - oracle).abs();
    let (coarse, fine) = (err(1_000), err(100_000));
    assert!(fine < coarse / 20.0, "coarse {coarse:e} fine {fine:e}");
}

#[test]
fn zero_noise_sde_is_euler_bitwise() {
    let m = CuspModel::reference();
    let w = simulate_wiener(NoiseStream::new(3, 4), 5000, m.horizon);
    let x = simulate_sde(&m, 1.0, 0.0, &w).unwrap();
    let e = solve_limit_ode_with(&m, 1.0, 5000, OdeScheme::Euler).unwrap();
    assert_eq!(x.values, e.values);
}

#[test]
fn constant_speed_path_is_linear() {
    let m = CuspModel {
        a: 0.0,
        h: HFunction::Constant { c: 2.0 },
        ..CuspModel::reference()
    };
    let p = solve_limit_ode(&m, 1.0, 1000).unwrap();
    for (t, x) in p.times.iter().zip(&p.values) {
        assert!((x - 2.0 * t).abs() < 1e-12);
    }
}

#[test]
fn ratio_matches_direct_ito_sums() {
    let m = CuspModel::reference();
    let eps = 0.05;
    let w = simulate_wiener(NoiseStream::new(9, 1), 1200, m.horizon);
    let x = simulate_sde(&m, 1.0, eps, &w).unwrap();
    let dt = m.horizon / 1200.0;
    let full = |theta: f64| {
        let mut acc = 0.0;
        for k in 0..1200 {
            let s = (x.values[k] - theta).abs().powf(0.25) + 1.0;
            acc += s * (x.values[k + 1] - x.values[k]) / (eps * eps) - 0.5 * s * s * dt / (eps * eps);
        }
        acc
    };
    for (a, b) in [(1.1, 0.9), (0.6, 1.4), (1.0, 1.0 + 1e-3)] {
        let direct = full(a) - full(b);
        let lib = log_likelihood_ratio(&x, &m, a, b, eps).unwrap();
        assert!(
            (lib - direct).abs() < 1e-7 * (1.0 + direct.abs()),
            "{a},{b}: {lib} vs {direct}"
        );
    }
}

#[test]
fn batched_likelihood_equals_single_evaluations() {
    let m = CuspModel::reference();
    let w = simulate_wiener(NoiseStream::new(2, 2), 3000, m.horizon);
    let x = simulate_sde(&m, 1.0, 0.03, &w).unwrap();
    let ev = LikelihoodEvaluator::new(&x, &m, 0.03).unwrap();
    let thetas: Vec<f64> = (0..37).map(|i| 0.55 + 0.025 * i as f64).collect();
    let many = ev.log_likelihood_many(&thetas);
    for (t, v) in thetas.iter().zip(&many) {
        assert_eq!(*v, ev.log_likelihood(*t));
    }
}

#[test]
fn reference_gamma_squared() {
    // J(1/4) = 0.51198858466034588531 (independent high-precision quadrature); a = h = 1.
    let c = limit_constants(&CuspModel::reference(), 1.0).unwrap();
    assert!((c.gamma_sq - 0.511_988_584_660_345_9).abs() < 1e-11, "{}", c.gamma_sq);
    assert!((c.gamma - 0.511_988_584_660_345_9f64.powf(2.0 / 3.0)).abs() < 1e-11);
}

#[test]
fn wiener_terminal_variance() {
    let n = 4000;
    let ends: Vec<f64> = (0..n)
        .map(|r| simulate_wiener(NoiseStream::new(5, r), 300, 3.0).last())
        .collect();
    let sq: Vec<f64> = ends.iter().map(|x| x * x).collect();
    let e = Estimate::of(&sq);
    assert!((e.mean - 3.0).abs() < 3.0 * e.se, "{} ± {}", e.mean, e.se);
    let m = Estimate::of(&ends);
    assert!(m.mean.abs() < 3.0 * m.se);
}

#[test]
fn occupation_of_unit_function_is_horizon() {
    // ∫_{x0}^{x_T} dx / S(θ0, x) = T by the time change.
    let m = CuspModel::reference();
    let x_end = solve_limit_ode(&m, 1.0, 200_000).unwrap().last();
    let v = limit_occupation_integral(&m, 1.0, x_end, |_| 1.0);
    assert!((v - m.horizon).abs() < 1e-8, "{v}");
}
