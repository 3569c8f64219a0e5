//! Limit objects: two-sided fractional Brownian motion `W^H`, the process
//! `Z(u) = exp(W^H(u) − |u|^{2H}/2)`, its argmax `û` and the ratio
//! `ũ = ∫ u Z(u) du / ∫ Z(u) du`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::likelihood::LimitConstants;
use crate::noise::NoiseStream;
use crate::path::fmt17;
use crate::stats::Estimate;

/// Cap on the number of grid nodes handled by the dense factorization.
pub const MAX_GRID_NODES: usize = 8192;

/// Covariance of two-sided fBm: `(|s|^{2H} + |t|^{2H} − |s − t|^{2H}) / 2`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (s.abs().powf(p) + t.abs().powf(p) - (s - t).abs().powf(p))
}

/// Exact sampler on the symmetric grid `−U, …, 0, …, U`.
///
/// The `2n` non-zero nodes are sampled jointly through a Cholesky factor of
/// their covariance; the origin is pinned to zero.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    pub hurst: f64,
    pub half_width: f64,
    pub n_per_side: usize,
    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub jitter: f64,
    grid: Vec<f64>,
    /// Row-major packed lower-triangular factor over the non-zero nodes.
    factor: Vec<f64>,
}

impl FbmSampler {
    pub fn new(hurst: f64, half_width: f64, n_per_side: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(CuspError::Domain(format!("Hurst exponent {hurst} outside (0, 1)")));
        }
        if n_per_side < 8 {
            return Err(CuspError::Domain(format!("n_per_side must be >= 8, got {n_per_side}")));
        }
        if 2 * n_per_side + 1 > MAX_GRID_NODES {
            return Err(CuspError::Domain(format!(
                "{} grid nodes exceed the dense limit {MAX_GRID_NODES}",
                2 * n_per_side + 1
            )));
        }
        if !(half_width > 0.0) {
            return Err(CuspError::Domain(format!("U must be positive, got {half_width}")));
        }
        let du = half_width / n_per_side as f64;
        let n = n_per_side as i64;
        let grid: Vec<f64> = (-n..=n).map(|k| k as f64 * du).collect();
        let free: Vec<f64> = grid.iter().copied().filter(|u| *u != 0.0).collect();
        let m = free.len();
        let cov = DMatrix::from_fn(m, m, |i, j| fbm_covariance(hurst, free[i], free[j]));
        let max_diag = (0..m).map(|i| cov[(i, i)]).fold(0.0, f64::max);

        let mut jitter = 0.0;
        let chol = loop {
            let mut c = cov.clone();
            for i in 0..m {
                c[(i, i)] += jitter;
            }
            if let Some(ch) = c.cholesky() {
                break ch;
            }
            let limit = 1e-10 * max_diag;
            if jitter >= limit {
                return Err(CuspError::Conditioning { jitter });
            }
            jitter = if jitter == 0.0 {
                1e-15 * max_diag
            } else {
                (jitter * 10.0).min(limit)
            };
        };
        let l = chol.l();
        let mut factor = Vec::with_capacity(m * (m + 1) / 2);
        for i in 0..m {
            for j in 0..=i {
                factor.push(l[(i, j)]);
            }
        }
        Ok(Self {
            hurst,
            half_width,
            n_per_side,
            jitter,
            grid,
            factor,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn du(&self) -> f64 {
        self.half_width / self.n_per_side as f64
    }

    pub fn sample(&self, stream: NoiseStream) -> FbmSample {
        let m = 2 * self.n_per_side;
        let mut z = vec![0.0; m];
        stream.fill_standard_normal(&mut z);
        let mut free = vec![0.0; m];
        let mut offset = 0;
        for (i, out) in free.iter_mut().enumerate() {
            let row = &self.factor[offset..offset + i + 1];
            *out = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
            offset += i + 1;
        }
        let n = self.n_per_side;
        let mut values = Vec::with_capacity(m + 1);
        values.extend_from_slice(&free[..n]);
        values.push(0.0);
        values.extend_from_slice(&free[n..]);
        FbmSample {
            hurst: self.hurst,
            grid: self.grid.clone(),
            values,
        }
    }
}

/// One realization of two-sided fBm on a symmetric grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmSample {
    pub hurst: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl FbmSample {
    /// Value at the node nearest to `u`.
    pub fn at(&self, u: f64) -> f64 {
        let du = self.grid[1] - self.grid[0];
        let i = ((u - self.grid[0]) / du).round() as usize;
        self.values[i]
    }
}

/// One-shot exact sample; build an [`FbmSampler`] when drawing many.
pub fn sample_fbm(hurst: f64, half_width: f64, n_per_side: usize, stream: NoiseStream) -> Result<FbmSample> {
    Ok(FbmSampler::new(hurst, half_width, n_per_side)?.sample(stream))
}

/// `ln Z(u) = W^H(u) − |u|^{2H}/2` at every node.
pub fn limit_z(sample: &FbmSample) -> Vec<f64> {
    let p = 2.0 * sample.hurst;
    sample
        .grid
        .iter()
        .zip(&sample.values)
        .map(|(u, w)| if *u == 0.0 { 0.0 } else { w - 0.5 * u.abs().powf(p) })
        .collect()
}

/// Fraction of `Z`-mass beyond which a sample is flagged truncation-suspect.
pub const EDGE_MASS_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitVariables {
    pub u_hat: f64,
    pub u_tilde: f64,
    /// Share of the trapezoid `Z`-mass in the outer 10% of the grid.
    pub edge_mass: f64,
    pub truncation_suspect: bool,
    /// The maximum of `ln Z` was attained at more than one node.
    pub tie: bool,
}

impl LimitVariables {
    pub fn flag(&self) -> u8 {
        (self.truncation_suspect as u8) | ((self.tie as u8) << 1)
    }
}

pub fn sample_limit_variables(sample: &FbmSample) -> LimitVariables {
    limit_variables_from(&sample.grid, &limit_z(sample))
}

fn limit_variables_from(grid: &[f64], log_z: &[f64]) -> LimitVariables {
    let mut best = 0;
    for (i, v) in log_z.iter().enumerate() {
        if *v > log_z[best] {
            best = i;
        }
    }
    let tie = log_z.iter().enumerate().any(|(i, v)| i != best && *v == log_z[best]);
    let m = log_z[best];
    let last = grid.len() - 1;
    let edge = 0.9 * grid[last].abs();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut outer = 0.0;
    for (i, (u, lz)) in grid.iter().zip(log_z).enumerate() {
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        let z = (lz - m).exp() * w;
        num += u * z;
        den += z;
        if u.abs() > edge {
            outer += z;
        }
    }
    let edge_mass = outer / den;
    LimitVariables {
        u_hat: grid[best],
        u_tilde: num / den,
        edge_mass,
        truncation_suspect: edge_mass > EDGE_MASS_LIMIT,
        tie,
    }
}

/// `n_samples` limit-variable draws using streams
/// `stream.replicate_index + j`.
pub fn sample_limit_set(sampler: &FbmSampler, n_samples: usize, stream: NoiseStream) -> Vec<LimitVariables> {
    (0..n_samples)
        .into_par_iter()
        .map(|j| {
            let s = NoiseStream::new(stream.master_seed, stream.replicate_index.wrapping_add(j as u64));
            sample_limit_variables(&sampler.sample(s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitMoments {
    #[serde(rename = "H")]
    pub hurst: f64,
    #[serde(rename = "U")]
    pub half_width: f64,
    pub n_per_side: usize,
    pub p: f64,
    /// `E|û|^p`.
    pub u_hat: Estimate,
    /// `E|ũ|^p`.
    pub u_tilde: Estimate,
    pub truncation_suspect: usize,
}

/// Fails if more than 5% of the samples are truncation-suspect.
pub fn moments_of(
    samples: &[LimitVariables],
    hurst: f64,
    half_width: f64,
    n_per_side: usize,
    p: f64,
) -> Result<LimitMoments> {
    let suspect = samples.iter().filter(|s| s.truncation_suspect).count();
    if suspect * 20 > samples.len() {
        return Err(CuspError::GridTooSmall {
            suspect,
            total: samples.len(),
        });
    }
    let hat: Vec<f64> = samples.iter().map(|s| s.u_hat.abs().powf(p)).collect();
    let tilde: Vec<f64> = samples.iter().map(|s| s.u_tilde.abs().powf(p)).collect();
    Ok(LimitMoments {
        hurst,
        half_width,
        n_per_side,
        p,
        u_hat: Estimate::of(&hat),
        u_tilde: Estimate::of(&tilde),
        truncation_suspect: suspect,
    })
}

/// Monte Carlo `E|û|^p` and `E|ũ|^p` with standard errors.
pub fn limit_moments(
    hurst: f64,
    p: f64,
    n_samples: usize,
    half_width: f64,
    n_per_side: usize,
    stream: NoiseStream,
) -> Result<LimitMoments> {
    if n_samples < 100 {
        return Err(CuspError::Domain(format!("need at least 100 samples, got {n_samples}")));
    }
    if !(p > 0.0) {
        return Err(CuspError::Domain(format!("moment order must be positive, got {p}")));
    }
    let sampler = FbmSampler::new(hurst, half_width, n_per_side)?;
    let samples = sample_limit_set(&sampler, n_samples, stream);
    moments_of(&samples, hurst, half_width, n_per_side, p)
}

/// `(û/γ, ũ/γ)`: the targets for normalized estimator errors.
pub fn standardize(v: &LimitVariables, constants: &LimitConstants) -> (f64, f64) {
    (v.u_hat / constants.gamma, v.u_tilde / constants.gamma)
}

/// CSV `sample,u_hat,u_tilde,edge_mass,flag`.
pub fn write_limit_samples<W: Write>(samples: &[LimitVariables], mut w: W) -> Result<()> {
    writeln!(w, "sample,u_hat,u_tilde,edge_mass,flag")?;
    for (i, s) in samples.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            i,
            fmt17(s.u_hat),
            fmt17(s.u_tilde),
            fmt17(s.edge_mass),
            s.flag()
        )?;
    }
    Ok(())
}

pub fn read_limit_samples(text: &str) -> Result<Vec<LimitVariables>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CuspError::Shape(format!("malformed limit sample on line {}", i + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let flag: u8 = f[4].parse().map_err(|_| bad())?;
        out.push(LimitVariables {
            u_hat: num(f[1])?,
            u_tilde: num(f[2])?,
            edge_mass: num(f[3])?,
            truncation_suspect: flag & 1 != 0,
            tie: flag & 2 != 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_pinned() {
        let s = sample_fbm(0.75, 4.0, 16, NoiseStream::new(1, 2)).unwrap();
        assert_eq!(s.values[16], 0.0);
        assert_eq!(s.grid[16], 0.0);
        assert_eq!(limit_z(&s)[16], 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(FbmSampler::new(0.75, 4.0, 4).is_err());
        assert!(FbmSampler::new(0.75, 4.0, 5000).is_err());
        assert!(FbmSampler::new(1.2, 4.0, 16).is_err());
    }

    #[test]
    fn zero_path_gives_centered_variables() {
        let sampler = FbmSampler::new(0.75, 5.0, 50).unwrap();
        let zero = FbmSample {
            hurst: 0.75,
            grid: sampler.grid().to_vec(),
            values: vec![0.0; 101],
        };
        let lz = limit_z(&zero);
        for (u, v) in zero.grid.iter().zip(&lz) {
            assert!((v + 0.5 * u.abs().powf(1.5)).abs() < 1e-15);
        }
        let lv = sample_limit_variables(&zero);
        assert_eq!(lv.u_hat, 0.0);
        assert!(lv.u_tilde.abs() < 1e-14);
        assert!(!lv.tie);
    }

    #[test]
    fn standardize_divides_by_gamma() {
        let v = LimitVariables {
            u_hat: 1.0,
            u_tilde: -3.0,
            edge_mass: 0.0,
            truncation_suspect: false,
            tie: false,
        };
        let c = |g: f64| LimitConstants {
            gamma_sq: g * g,
            gamma: g,
            hurst: 0.75,
            cusp_integral: 0.0,
            tail: 0.0,
        };
        assert_eq!(standardize(&v, &c(1.0)), (1.0, -3.0));
        assert_eq!(standardize(&v, &c(2.0)), (0.5, -1.5));
    }

    #[test]
    fn samples_csv_round_trip() {
        let sampler = FbmSampler::new(0.75, 6.0, 40).unwrap();
        let set = sample_limit_set(&sampler, 20, NoiseStream::new(3, 0));
        let mut buf = Vec::new();
        write_limit_samples(&set, &mut buf).unwrap();
        let back = read_limit_samples(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn small_grid_is_flagged() {
        let err = limit_moments(0.75, 2.0, 200, 1.0, 10, NoiseStream::new(4, 0)).unwrap_err();
        assert!(matches!(err, CuspError::GridTooSmall { .. }));
    }
}
