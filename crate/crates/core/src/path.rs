//! Discretized trajectories on uniform time grids.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Observation,
    Deterministic,
    Wiener,
}

/// Values on the uniform grid `t_k = k T / N`, `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: PathKind,
}

/// Uniform grid with `n_steps` intervals on `[0, horizon]`; the last node is
/// exactly `horizon`.
pub fn uniform_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    let dt = horizon / n_steps as f64;
    let mut t: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    t[n_steps] = horizon;
    t
}

impl Path {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(CuspError::Shape(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(CuspError::Shape("a path needs at least two nodes".into()));
        }
        if times[0] != 0.0 {
            return Err(CuspError::Shape("grid must start at t = 0".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CuspError::Shape("grid must be strictly increasing".into()));
        }
        Ok(Self { times, values, kind })
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self) -> f64 {
        self.horizon() / self.n_steps() as f64
    }

    pub fn is_uniform(&self) -> bool {
        let dt = self.dt();
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1e-300))
    }

    /// Both paths sit on the same grid node-for-node.
    pub fn same_grid(&self, other: &Path) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    pub fn ensure_same_grid(&self, other: &Path) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(CuspError::Shape(format!(
                "grid mismatch: {} nodes on [0, {}] vs {} nodes on [0, {}]",
                self.times.len(),
                self.horizon(),
                other.times.len(),
                other.horizon()
            )))
        }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `sup_t |value_t|`, used for the Wiener maximum.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// CSV with header `t,value`; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, kind: PathKind) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "t,value" {
                    return Err(CuspError::Shape(format!("unexpected header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let t = parse_f64(it.next(), i)?;
            let v = parse_f64(it.next(), i)?;
            times.push(t);
            values.push(v);
        }
        Path::new(times, values, kind)
    }
}

fn parse_f64(field: Option<&str>, line: usize) -> Result<f64> {
    field
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| CuspError::Shape(format!("malformed number on line {}", line + 1)))
}

/// Scientific notation with 17 significant digits (round-trips every f64).
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_endpoints() {
        let g = uniform_grid(3.0, 7);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[7], 3.0);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(matches!(
            Path::new(vec![0.0, 1.0], vec![0.0], PathKind::Wiener),
            Err(CuspError::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 2..40)) {
            let n = vals.len() - 1;
            let p = Path::new(uniform_grid(2.5, n), vals, PathKind::Observation).unwrap();
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let q = Path::read_csv(&buf[..], PathKind::Observation).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
