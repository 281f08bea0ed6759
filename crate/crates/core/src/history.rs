//! Volterra history operators and fatigue degradation maps.
//!
//! The history of a trajectory `y` at `t` is
//! `H(y)(t) = ∫₀ᵗ A(t−s) y(s) ds + y₀`, discretized by the left rectangle
//! rule so that `H(y)(t_k)` only sees `y_0 .. y_{k−1}`. The fatigue map `κ`
//! turns accumulated history into nodal toughness.

use crate::error::{EviError, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `A(t) = a₀`
    Constant,
    /// `A(t) = a₀ e^{−γ t}`
    Exponential,
}

/// Scalar-times-identity convolution kernel plus initial offset.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraKernel {
    pub kind: KernelKind,
    pub amplitude: f64,
    pub rate: f64,
    /// Initial fatigue `y₀`; an empty vector means zero.
    pub offset: Vec<f64>,
}

impl VolterraKernel {
    pub fn constant(amplitude: f64) -> Self {
        VolterraKernel {
            kind: KernelKind::Constant,
            amplitude,
            rate: 0.0,
            offset: Vec::new(),
        }
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        VolterraKernel {
            kind: KernelKind::Exponential,
            amplitude,
            rate,
            offset: Vec::new(),
        }
    }

    /// No history feedback at all.
    pub fn none() -> Self {
        Self::constant(0.0)
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        self.offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(EviError::Config("kernel amplitude must be finite".into()));
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(EviError::Config(format!(
                "kernel rate must be nonnegative, got {}",
                self.rate
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            KernelKind::Constant => self.amplitude,
            KernelKind::Exponential => self.amplitude * (-self.rate * t).exp(),
        }
    }

    /// `L_H = max_t |A(t)|`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude.abs()
    }

    fn offset_at(&self, i: usize) -> f64 {
        self.offset.get(i).copied().unwrap_or(0.0)
    }
}

fn history_sum(kernel: &VolterraKernel, y: &Trajectory, t_index: usize, with_offset: bool) -> Result<Vec<f64>> {
    if t_index > y.len() || (y.is_empty() && t_index > 0) {
        return Err(EviError::Domain(format!(
            "history index {t_index} outside trajectory with {} rows",
            y.len()
        )));
    }
    let dim = if y.is_empty() { kernel.offset.len() } else { y.dim() };
    if !kernel.offset.is_empty() && kernel.offset.len() != dim {
        return Err(EviError::dim("history offset", dim, kernel.offset.len()));
    }
    let times = y.times();
    let t_k = if t_index < y.len() {
        times[t_index]
    } else if t_index >= 2 || (t_index == 1 && y.len() == 1) {
        // one step past the last stored row, on the same uniform grid
        let dt = if y.len() >= 2 { times[1] - times[0] } else { 0.0 };
        times[t_index - 1] + dt
    } else {
        times.get(t_index).copied().unwrap_or(0.0)
    };
    let mut out: Vec<f64> = (0..dim)
        .map(|i| if with_offset { kernel.offset_at(i) } else { 0.0 })
        .collect();
    for j in 0..t_index {
        let dt = if j + 1 < times.len() {
            times[j + 1] - times[j]
        } else {
            t_k - times[j]
        };
        let w = dt * kernel.eval(t_k - times[j]);
        if w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(y.row(j)) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// `H(y)(t_k) ≈ y₀ + Σ_{j<k} Δt · A(t_k − t_j) · y_j`.
///
/// `t_index` may equal `y.len()`, the step right after the last stored row.
pub fn apply_history(kernel: &VolterraKernel, y: &Trajectory, t_index: usize) -> Result<Vec<f64>> {
    history_sum(kernel, y, t_index, true)
}

/// `H′(y; δy)(t_k)`. The Volterra operator is affine, so this is the
/// history of `δy` without the offset and does not depend on `y`.
pub fn history_derivative(kernel: &VolterraKernel, dy: &Trajectory, t_index: usize) -> Result<Vec<f64>> {
    history_sum(kernel, dy, t_index, false)
}

/// Transpose of the map `δy ↦ (H′(δy)(t_k))_{k < n}` on a uniform grid:
/// `out_j = Σ_{j<k<n} Δt · A(t_k − t_j) · w_k`.
pub fn history_adjoint(kernel: &VolterraKernel, weights: &Trajectory, dt: f64) -> Vec<Vec<f64>> {
    let n = weights.len();
    let dim = weights.dim();
    let mut out = vec![vec![0.0; dim]; n];
    for j in 0..n {
        for k in j + 1..n {
            let a = dt * kernel.eval((k - j) as f64 * dt);
            if a == 0.0 {
                continue;
            }
            for (o, w) in out[j].iter_mut().zip(weights.row(k)) {
                *o += a * w;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FatigueKind {
    /// `κ(s) = κ_min + (κ₀ − κ_min) / (1 + e^{γ s})`
    SigmoidDecay,
    /// `κ(s) = κ_min + ln(1 + e^{κ₀ − κ_min − γ s})`
    SoftplusLinear,
}

/// Toughness as a function of accumulated fatigue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueMap {
    pub kind: FatigueKind,
    pub kappa0: f64,
    pub kappa_min: f64,
    pub gamma: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FatigueMap {
    pub fn sigmoid(kappa0: f64, kappa_min: f64, gamma: f64) -> Self {
        FatigueMap {
            kind: FatigueKind::SigmoidDecay,
            kappa0,
            kappa_min,
            gamma,
        }
    }

    pub fn softplus(kappa0: f64, kappa_min: f64, gamma: f64) -> Self {
        FatigueMap {
            kind: FatigueKind::SoftplusLinear,
            kappa0,
            kappa_min,
            gamma,
        }
    }

    /// Constant toughness `κ ≡ value`.
    pub fn constant(value: f64) -> Self {
        Self::sigmoid(value, value, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0 > 0.0) {
            return Err(EviError::Config("kappa0 must be positive".into()));
        }
        if !(self.kappa_min >= 0.0) || self.kappa_min > self.kappa0 {
            return Err(EviError::Config(
                "kappa_min must lie in [0, kappa0]".into(),
            ));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(EviError::Config("gamma must be positive".into()));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        let span = self.kappa0 - self.kappa_min;
        match self.kind {
            FatigueKind::SigmoidDecay => self.kappa_min + span * logistic(-self.gamma * s),
            FatigueKind::SoftplusLinear => self.kappa_min + softplus(span - self.gamma * s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let span = self.kappa0 - self.kappa_min;
        match self.kind {
            FatigueKind::SigmoidDecay => {
                let p = logistic(self.gamma * s);
                -span * self.gamma * p * (1.0 - p)
            }
            FatigueKind::SoftplusLinear => -self.gamma * logistic(span - self.gamma * s),
        }
    }

    /// Global Lipschitz constant `L_κ`.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            FatigueKind::SigmoidDecay => (self.kappa0 - self.kappa_min) * self.gamma / 4.0,
            FatigueKind::SoftplusLinear => self.gamma,
        }
    }
}

pub fn kappa_eval(map: &FatigueMap, s: &[f64]) -> Vec<f64> {
    s.iter().map(|&v| map.eval(v)).collect()
}

pub fn kappa_deriv(map: &FatigueMap, s: &[f64], ds: &[f64]) -> Vec<f64> {
    s.iter().zip(ds).map(|(&v, &d)| map.derivative(v) * d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_traj(grid: &TimeGrid, dim: usize, f: impl Fn(f64, usize) -> f64) -> Trajectory {
        let times = grid.state_times();
        let values = times.iter().map(|&t| (0..dim).map(|i| f(t, i)).collect()).collect();
        Trajectory::new(times, values).unwrap()
    }

    #[test]
    fn zero_trajectory_returns_offset() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let y = Trajectory::state_zeros(&g, 2);
        let k = VolterraKernel::exponential(1.3, 0.7).with_offset(vec![0.5, -1.0]);
        for idx in 0..=10 {
            assert_eq!(apply_history(&k, &y, idx).unwrap(), vec![0.5, -1.0]);
        }
        assert!(apply_history(&k, &y, 12).is_err());
    }

    #[test]
    fn constant_kernel_integrates_identity() {
        let k = VolterraKernel::constant(1.0);
        let mut prev_err = f64::INFINITY;
        for n in [10, 100, 1000] {
            let g = TimeGrid::new(1.0, n).unwrap();
            let y = state_traj(&g, 1, |t, _| t);
            let h = apply_history(&k, &y, n).unwrap()[0];
            let err = (h - 0.5).abs();
            // left rectangle: error is exactly dt/2
            assert!((err - 0.5 / n as f64).abs() < 1e-12);
            assert!(err < prev_err);
            prev_err = err;
        }
    }

    #[test]
    fn exponential_kernel_on_constant_input() {
        let (a0, gk, c, y0) = (0.8, 1.5, 2.0, 0.3);
        let k = VolterraKernel::exponential(a0, gk).with_offset(vec![y0]);
        let exact = |t: f64| c * a0 * (1.0 - (-gk * t).exp()) / gk + y0;
        let mut errs = Vec::new();
        for n in [50, 100, 200] {
            let g = TimeGrid::new(1.0, n).unwrap();
            let y = state_traj(&g, 1, |_, _| c);
            let h = apply_history(&k, &y, n).unwrap()[0];
            errs.push((h - exact(1.0)).abs());
        }
        assert!(errs[0] < 0.05);
        // first order in dt
        assert!((errs[0] / errs[1] - 2.0).abs() < 0.05);
        assert!((errs[1] / errs[2] - 2.0).abs() < 0.05);
    }

    #[test]
    fn derivative_is_linear_and_independent_of_base_point() {
        let g = TimeGrid::new(2.0, 16).unwrap();
        let k = VolterraKernel::exponential(-0.7, 0.4).with_offset(vec![1.0, 2.0]);
        let y = state_traj(&g, 2, |t, i| (t + i as f64).sin());
        let dy = state_traj(&g, 2, |t, i| t * t - i as f64);
        assert_eq!(history_derivative(&k, &Trajectory::state_zeros(&g, 2), 7).unwrap(), vec![0.0, 0.0]);
        for tau in [1e-2, 1e-4] {
            let yp = y.add_scaled(tau, &dy);
            let h0 = apply_history(&k, &y, 9).unwrap();
            let h1 = apply_history(&k, &yp, 9).unwrap();
            let d = history_derivative(&k, &dy, 9).unwrap();
            for i in 0..2 {
                assert!(((h1[i] - h0[i]) / tau - d[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn history_is_causal_and_lipschitz() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        let k = VolterraKernel::exponential(1.7, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut y1 = Trajectory::state_zeros(&g, 3);
            for j in 0..y1.len() {
                y1.row_mut(j).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let mut y2 = state_traj(&g, 3, |_, _| 0.0);
            for j in 0..y2.len() {
                for i in 0..3 {
                    y2.row_mut(j)[i] = y1.row(j)[i] + 0.3 * (j as f64 + i as f64).cos();
                }
            }
            for kk in 0..=20 {
                let h1 = apply_history(&k, &y1, kk).unwrap();
                let h2 = apply_history(&k, &y2, kk).unwrap();
                let lhs = h1.iter().zip(&h2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let rhs: f64 = (0..kk)
                    .map(|j| {
                        g.dt() * y1.row(j).iter().zip(y2.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                    })
                    .sum::<f64>()
                    * k.lipschitz();
                assert!(lhs <= rhs + 1e-12);
                // changing the future leaves the present untouched
                let mut y3 = y1.clone();
                for j in kk..y3.len() {
                    y3.row_mut(j).iter_mut().for_each(|v| *v += 10.0);
                }
                assert_eq!(apply_history(&k, &y3, kk).unwrap(), h1);
            }
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        let g = TimeGrid::new(1.0, 12).unwrap();
        let k = VolterraKernel::exponential(0.9, 1.1);
        let dy = Trajectory::control_from_fn(&g, 2, |t, i| (3.0 * t + i as f64).cos());
        let w = Trajectory::control_from_fn(&g, 2, |t, i| t - 0.2 * i as f64);
        let lhs: f64 = (0..12)
            .map(|kk| {
                let h = history_derivative(&k, &dy, kk).unwrap();
                h.iter().zip(w.row(kk)).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum();
        let adj = history_adjoint(&k, &w, g.dt());
        let rhs: f64 = (0..12)
            .map(|j| adj[j].iter().zip(dy.row(j)).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn sigmoid_limits_and_constant() {
        let m = FatigueMap::sigmoid(2.0, 0.5, 3.0);
        assert!((m.eval(-50.0) - 2.0).abs() < 1e-12);
        assert!((m.eval(50.0) - 0.5).abs() < 1e-12);
        let c = FatigueMap::constant(1.0);
        assert_eq!(c.eval(3.0), 1.0);
        assert_eq!(c.derivative(3.0), 0.0);
        assert!(FatigueMap::sigmoid(1.0, 2.0, 1.0).validate().is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for map in [FatigueMap::sigmoid(1.5, 0.2, 2.0), FatigueMap::softplus(1.5, 0.2, 0.7)] {
            for _ in 0..20 {
                let s = rng.random_range(-3.0..3.0);
                let h = 1e-5;
                let fd = (map.eval(s + h) - map.eval(s - h)) / (2.0 * h);
                let d = map.derivative(s);
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "{fd} vs {d}");
            }
            let dk = kappa_deriv(&map, &[0.1, 0.2], &[2.0, -1.0]);
            assert!((dk[0] - 2.0 * map.derivative(0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_lipschitz_bound_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for map in [FatigueMap::sigmoid(1.5, 0.2, 2.0), FatigueMap::softplus(1.0, 0.0, 3.0)] {
            for _ in 0..1000 {
                let a = rng.random_range(-5.0..5.0);
                let b = rng.random_range(-5.0..5.0);
                if a == b {
                    continue;
                }
                assert!((map.eval(a) - map.eval(b)).abs() / (a - b).abs() <= map.lipschitz() * (1.0 + 1e-12));
                assert!(map.eval(a) >= 0.0);
            }
        }
    }
}
