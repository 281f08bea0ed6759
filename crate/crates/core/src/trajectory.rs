//! Uniform time grids and time-indexed sequences of nodal vectors.
//!
//! States live on the grid points `t_0 .. t_N` (`N + 1` rows). Controls are
//! piecewise constant on the `N` intervals and are stored by their left
//! endpoint (`N` rows).

use crate::error::{EviError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(EviError::Config("time grid needs at least one step".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(EviError::Config(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_final
        } else {
            k as f64 * self.dt()
        }
    }

    /// Grid points `t_0 .. t_N`.
    pub fn state_times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Left endpoints `t_0 .. t_{N-1}`.
    pub fn control_times(&self) -> Vec<f64> {
        (0..self.n_steps).map(|k| self.time(k)).collect()
    }

    /// The same interval with half the step size.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid {
            t_final: self.t_final,
            n_steps: 2 * self.n_steps,
        }
    }
}

/// A sequence of equally sized nodal vectors tagged with their times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(EviError::dim("trajectory rows", times.len(), values.len()));
        }
        if let Some(first) = values.first() {
            let dim = first.len();
            if let Some(bad) = values.iter().find(|v| v.len() != dim) {
                return Err(EviError::dim("trajectory columns", dim, bad.len()));
            }
        }
        Ok(Trajectory { times, values })
    }

    pub fn zeros(times: Vec<f64>, dim: usize) -> Self {
        let values = vec![vec![0.0; dim]; times.len()];
        Trajectory { times, values }
    }

    pub fn constant(times: Vec<f64>, value: &[f64]) -> Self {
        let values = vec![value.to_vec(); times.len()];
        Trajectory { times, values }
    }

    pub fn state_zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self::zeros(grid.state_times(), dim)
    }

    pub fn control_zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self::zeros(grid.control_times(), dim)
    }

    /// Control trajectory sampling `f(t, node)` at the left endpoints.
    pub fn control_from_fn(grid: &TimeGrid, dim: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let times = grid.control_times();
        let values = times.iter().map(|&t| (0..dim).map(|i| f(t, i)).collect()).collect();
        Trajectory { times, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k]
    }

    pub fn last(&self) -> &[f64] {
        self.values.last().expect("empty trajectory")
    }

    pub fn push(&mut self, t: f64, value: Vec<f64>) {
        debug_assert!(self.is_empty() || value.len() == self.dim());
        self.times.push(t);
        self.values.push(value);
    }

    /// Checks the row count and column count against expectations.
    pub fn expect_shape(&self, what: &str, rows: usize, dim: usize) -> Result<()> {
        if self.len() != rows || (rows > 0 && self.dim() != dim) {
            return Err(EviError::GridMismatch(format!(
                "{what}: expected {rows}x{dim}, got {}x{}",
                self.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .map(|r| r.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Trajectory {
        self.map(|v| s * v)
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Trajectory) -> Trajectory {
        assert_eq!(self.len(), other.len(), "trajectory lengths differ");
        Trajectory {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance over all rows and nodes.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.len(), other.len(), "trajectory lengths differ");
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// `Σ_k dt · aₖᵀ diag(weights) bₖ`: the discrete `L²(0,T;L²)` pairing.
    pub fn weighted_inner(&self, other: &Trajectory, weights: &[f64], dt: f64) -> f64 {
        assert_eq!(self.len(), other.len(), "trajectory lengths differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .zip(weights)
                    .map(|((x, y), w)| x * y * w)
                    .sum::<f64>()
            })
            .sum::<f64>()
            * dt
    }

    pub fn weighted_norm(&self, weights: &[f64], dt: f64) -> f64 {
        self.weighted_inner(self, weights, dt).max(0.0).sqrt()
    }

    /// Plain Euclidean pairing summed over rows.
    pub fn dot(&self, other: &Trajectory) -> f64 {
        self.weighted_inner(other, &vec![1.0; self.dim()], 1.0)
    }

    /// Keeps the first `n` rows.
    pub fn truncated(&self, n: usize) -> Trajectory {
        Trajectory {
            times: self.times[..n].to_vec(),
            values: self.values[..n].to_vec(),
        }
    }

    /// Keeps every `stride`-th row (used to compare against coarser grids).
    pub fn subsampled(&self, stride: usize) -> Trajectory {
        Trajectory {
            times: self.times.iter().step_by(stride).copied().collect(),
            values: self.values.iter().step_by(stride).cloned().collect(),
        }
    }
}
