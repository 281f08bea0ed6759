//! Tracking-type objectives
//!
//! ```text
//! J = Σ_{k<N} Δt [ ½‖x_k − x_d,k‖²_T + (α₁/2)‖d_k‖²_M + (α₂/2)‖ℓ_k − ℓ_d,k‖²_M ]
//! ```
//!
//! where `x` is the tracked field (`φ` with `T = K + M` in the two-field
//! model, `q` with `T = K` in the single-field model) and `d` the damage.
//! The left rectangle rule matches the explicit time stepping: the final
//! state `x_N` never enters `J`, so the adjoint vanishes at `T`.

use crate::discretization::SparseOperator;
use crate::error::{EviError, Result};
use crate::trajectory::{TimeGrid, Trajectory};

#[derive(Debug, Clone)]
pub struct TrackingObjective {
    /// Target for the tracked field (`φ_d`, or `q_d` for the single-field model).
    /// `N` or `N + 1` rows; a final row is ignored.
    pub phi_target: Trajectory,
    pub ell_target: Trajectory,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl TrackingObjective {
    pub fn new(phi_target: Trajectory, ell_target: Trajectory, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 >= 0.0) {
            return Err(EviError::Config("alpha1 must be nonnegative".into()));
        }
        if !(alpha2 > 0.0) {
            return Err(EviError::Config("alpha2 must be positive".into()));
        }
        Ok(TrackingObjective {
            phi_target,
            ell_target,
            alpha1,
            alpha2,
        })
    }

    /// Zero targets on the given grid.
    pub fn zero_targets(grid: &TimeGrid, dim: usize, alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::new(
            Trajectory::control_zeros(grid, dim),
            Trajectory::control_zeros(grid, dim),
            alpha1,
            alpha2,
        )
    }
}

/// Spatial operators and step size defining the quadrature of `J`.
#[derive(Debug, Clone)]
pub struct ObjectiveMetric {
    pub tracking: SparseOperator,
    pub mass: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
}

/// The pieces of a model state that enter `J`.
pub trait TrackedState {
    /// Tracked field, at least `N` rows.
    fn tracked(&self) -> &Trajectory;
    /// Damage variable, at least `N` rows.
    fn damage(&self) -> &Trajectory;
}

/// Plain partial derivatives `∂J/∂x_{k,i}`; see [`riesz`] for the
/// `L²(0,T;L²)` representatives.
#[derive(Debug, Clone)]
pub struct ObjectivePartials {
    pub tracked_grad: Trajectory,
    pub damage_grad: Trajectory,
    pub ell_grad: Trajectory,
}

/// Divides each entry by `Δt mᵢ`: plain gradient to `L²(0,T;L²)` representative.
pub fn riesz(metric: &ObjectiveMetric, g: &Trajectory) -> Trajectory {
    let mut out = g.clone();
    for k in 0..out.len() {
        for (v, m) in out.row_mut(k).iter_mut().zip(&metric.mass) {
            *v /= metric.dt * m;
        }
    }
    out
}

fn check(obj: &TrackingObjective, metric: &ObjectiveMetric, state: &impl TrackedState, ell: &Trajectory) -> Result<()> {
    let n = metric.n_steps;
    let dim = metric.mass.len();
    ell.expect_shape("control", n, dim)?;
    obj.ell_target.expect_shape("control target", n, dim)?;
    for (what, t) in [
        ("tracked target", &obj.phi_target),
        ("tracked state", state.tracked()),
        ("damage state", state.damage()),
    ] {
        if t.len() < n || t.dim() != dim {
            return Err(EviError::GridMismatch(format!(
                "{what}: expected at least {n}x{dim}, got {}x{}",
                t.len(),
                t.dim()
            )));
        }
    }
    Ok(())
}

pub fn eval_objective(
    obj: &TrackingObjective,
    metric: &ObjectiveMetric,
    state: &impl TrackedState,
    ell: &Trajectory,
) -> Result<f64> {
    check(obj, metric, state, ell)?;
    let mut total = 0.0;
    for k in 0..metric.n_steps {
        let dx: Vec<f64> = state
            .tracked()
            .row(k)
            .iter()
            .zip(obj.phi_target.row(k))
            .map(|(a, b)| a - b)
            .collect();
        let d = state.damage().row(k);
        let mut step = 0.5 * metric.tracking.quad_form(&dx);
        for i in 0..metric.mass.len() {
            let dl = ell.row(k)[i] - obj.ell_target.row(k)[i];
            step += 0.5 * metric.mass[i] * (obj.alpha1 * d[i] * d[i] + obj.alpha2 * dl * dl);
        }
        total += metric.dt * step;
    }
    Ok(total)
}

/// Plain partial derivatives of [`eval_objective`], each with `N` rows.
pub fn eval_partials(
    obj: &TrackingObjective,
    metric: &ObjectiveMetric,
    state: &impl TrackedState,
    ell: &Trajectory,
) -> Result<ObjectivePartials> {
    check(obj, metric, state, ell)?;
    let n = metric.n_steps;
    let times = ell.times().to_vec();
    let dim = metric.mass.len();
    let mut tracked_grad = Trajectory::zeros(times.clone(), dim);
    let mut damage_grad = Trajectory::zeros(times.clone(), dim);
    let mut ell_grad = Trajectory::zeros(times, dim);
    for k in 0..n {
        let dx: Vec<f64> = state
            .tracked()
            .row(k)
            .iter()
            .zip(obj.phi_target.row(k))
            .map(|(a, b)| a - b)
            .collect();
        let tx = metric.tracking.apply(&dx);
        for i in 0..dim {
            let m = metric.mass[i];
            tracked_grad.row_mut(k)[i] = metric.dt * tx[i];
            damage_grad.row_mut(k)[i] = metric.dt * obj.alpha1 * m * state.damage().row(k)[i];
            ell_grad.row_mut(k)[i] =
                metric.dt * obj.alpha2 * m * (ell.row(k)[i] - obj.ell_target.row(k)[i]);
        }
    }
    Ok(ObjectivePartials {
        tracked_grad,
        damage_grad,
        ell_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_mesh, BoundaryCondition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Plain {
        x: Trajectory,
        d: Trajectory,
    }

    impl TrackedState for Plain {
        fn tracked(&self) -> &Trajectory {
            &self.x
        }
        fn damage(&self) -> &Trajectory {
            &self.d
        }
    }

    fn setup() -> (ObjectiveMetric, TimeGrid) {
        let mesh = build_mesh(3, 1.0, BoundaryCondition::Natural).unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let metric = ObjectiveMetric {
            tracking: mesh.stiffness().add_scaled(1.0, &mesh.lumped_mass()),
            mass: mesh.mass_diagonal(),
            dt: grid.dt(),
            n_steps: 5,
        };
        (metric, grid)
    }

    fn random(grid: &TimeGrid, rows: usize, rng: &mut ChaCha8Rng) -> Trajectory {
        let mut t = Trajectory::zeros(grid.state_times()[..rows].to_vec(), 3);
        for k in 0..rows {
            t.row_mut(k).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        t
    }

    #[test]
    fn zero_at_targets_and_quadratic_scaling() {
        let (metric, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&grid, 6, &mut rng);
        let ell = random(&grid, 5, &mut rng);
        let obj = TrackingObjective::new(x.truncated(5), ell.clone(), 0.0, 1.0).unwrap();
        let s = Plain { x: x.clone(), d: x.clone() };
        assert_eq!(eval_objective(&obj, &metric, &s, &ell).unwrap(), 0.0);
        let p = eval_partials(&obj, &metric, &s, &ell).unwrap();
        assert_eq!(p.tracked_grad.max_abs() + p.ell_grad.max_abs(), 0.0);

        let zero = Trajectory::state_zeros(&grid, 3);
        let obj = TrackingObjective::new(zero.clone(), Trajectory::control_zeros(&grid, 3), 0.0, 1e-300).unwrap();
        let ell0 = Trajectory::control_zeros(&grid, 3);
        let j1 = eval_objective(&obj, &metric, &Plain { x: x.clone(), d: zero.clone() }, &ell0).unwrap();
        let j2 = eval_objective(&obj, &metric, &Plain { x: x.scaled(2.0), d: zero }, &ell0).unwrap();
        assert!((j2 - 4.0 * j1).abs() < 1e-13 * j2);
    }

    #[test]
    fn partials_match_central_differences() {
        let (metric, grid) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&grid, 6, &mut rng);
        let d = random(&grid, 6, &mut rng);
        let ell = random(&grid, 5, &mut rng);
        let obj = TrackingObjective::new(random(&grid, 5, &mut rng), random(&grid, 5, &mut rng), 0.7, 0.3).unwrap();
        let p = eval_partials(&obj, &metric, &Plain { x: x.clone(), d: d.clone() }, &ell).unwrap();
        let h = 1e-4;
        for k in 0..5 {
            for i in 0..3 {
                let bump = |t: &Trajectory, s: f64| {
                    let mut t = t.clone();
                    t.row_mut(k)[i] += s;
                    t
                };
                let cases = [
                    (
                        eval_objective(&obj, &metric, &Plain { x: bump(&x, h), d: d.clone() }, &ell).unwrap()
                            - eval_objective(&obj, &metric, &Plain { x: bump(&x, -h), d: d.clone() }, &ell).unwrap(),
                        p.tracked_grad.row(k)[i],
                    ),
                    (
                        eval_objective(&obj, &metric, &Plain { x: x.clone(), d: bump(&d, h) }, &ell).unwrap()
                            - eval_objective(&obj, &metric, &Plain { x: x.clone(), d: bump(&d, -h) }, &ell).unwrap(),
                        p.damage_grad.row(k)[i],
                    ),
                    (
                        eval_objective(&obj, &metric, &Plain { x: x.clone(), d: d.clone() }, &bump(&ell, h)).unwrap()
                            - eval_objective(&obj, &metric, &Plain { x: x.clone(), d: d.clone() }, &bump(&ell, -h)).unwrap(),
                        p.ell_grad.row(k)[i],
                    ),
                ];
                for (diff, g) in cases {
                    let fd = diff / (2.0 * h);
                    assert!((fd - g).abs() <= 1e-8 * g.abs().max(1e-2), "{fd} vs {g}");
                }
            }
        }
    }
}
