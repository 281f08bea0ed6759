//! Reduced-gradient descent over piecewise constant controls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EviError, Result};
use crate::objective::{eval_objective, eval_partials, TrackingObjective};
use crate::single_field::{adjoint_single, forward_single, sensitivity_single, stationarity_residual_single, SingleFieldParams, SingleFieldState};
use crate::stationarity::StationarityReport;
use crate::trajectory::{TimeGrid, Trajectory};
use crate::two_field::{adjoint_two, bstat_check, forward_two, stationarity_residual_two, TwoFieldParams};

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub max_iters: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub grad_tol: f64,
    pub initial_step: f64,
    pub max_shrinks: usize,
    /// Try a Barzilai-Borwein step before falling back to `initial_step`.
    pub barzilai_borwein: bool,
    /// Random directions added to the final B-stationarity sample.
    pub random_directions: usize,
    pub seed: u64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iters: 200,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            grad_tol: 1e-6,
            initial_step: 1.0,
            max_shrinks: 60,
            barzilai_borwein: true,
            random_directions: 10,
            seed: 0,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.armijo_c) || !unit(self.armijo_shrink) {
            return Err(EviError::Config("armijo_c and armijo_shrink must lie in (0, 1)".into()));
        }
        if !(self.grad_tol >= 0.0) || !(self.initial_step > 0.0) {
            return Err(EviError::Config("grad_tol must be nonnegative and initial_step positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub ell_star: Trajectory,
    /// Objective value before the first and after every accepted step.
    pub j_history: Vec<f64>,
    pub iterations: usize,
    pub report: StationarityReport,
}

/// Random controls normalized to unit `L²(0,T;L²)` norm.
pub fn random_directions(grid: &TimeGrid, mass: &[f64], count: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut t = Trajectory::control_zeros(grid, mass.len());
            for k in 0..t.len() {
                t.row_mut(k).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let nrm = t.weighted_norm(mass, grid.dt());
            t.scaled(1.0 / nrm)
        })
        .collect()
}

fn two_field_value(params: &TwoFieldParams, obj: &TrackingObjective, ell: &Trajectory, grid: &TimeGrid) -> Result<f64> {
    let state = forward_two(params, ell, grid)?;
    eval_objective(obj, &params.objective_metric(grid), &state, ell)
}

/// Steepest descent with Armijo backtracking on the adjoint gradient.
pub fn descend_two_field(
    params: &TwoFieldParams,
    obj: &TrackingObjective,
    ell0: &Trajectory,
    grid: &TimeGrid,
    opts: &DescentOptions,
) -> Result<DescentResult> {
    opts.validate()?;
    let metric = params.objective_metric(grid);
    let mass = metric.mass.clone();
    let dt = metric.dt;
    let mut ell = ell0.clone();
    let mut state = forward_two(params, &ell, grid)?;
    let mut j = eval_objective(obj, &metric, &state, &ell)?;
    let mut bundle = adjoint_two(params, &state, &ell, obj)?;
    let mut history = vec![j];
    let mut prev: Option<(Trajectory, Trajectory)> = None;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let g = bundle.gradient.clone();
        let gnorm2 = g.weighted_inner(&g, &mass, dt);
        if gnorm2.sqrt() <= opts.grad_tol {
            break;
        }
        let mut step = opts.initial_step;
        if opts.barzilai_borwein {
            if let Some((ell_prev, g_prev)) = &prev {
                let s = ell.add_scaled(-1.0, ell_prev);
                let y = g.add_scaled(-1.0, g_prev);
                let sy = s.weighted_inner(&y, &mass, dt);
                if sy > 0.0 {
                    step = s.weighted_inner(&s, &mass, dt) / sy;
                }
            }
        }
        let mut accepted = None;
        for _ in 0..=opts.max_shrinks {
            let trial = ell.add_scaled(-step, &g);
            let jt = two_field_value(params, obj, &trial, grid)?;
            if jt <= j - opts.armijo_c * step * gnorm2 && jt < j {
                accepted = Some((trial, jt));
                break;
            }
            step *= opts.armijo_shrink;
        }
        let Some((trial, jt)) = accepted else {
            return Err(EviError::Stagnation {
                iteration: iterations,
                shrinks: opts.max_shrinks,
                last_iterate: Box::new(ell),
            });
        };
        prev = Some((ell, g));
        ell = trial;
        j = jt;
        history.push(j);
        state = forward_two(params, &ell, grid)?;
        bundle = adjoint_two(params, &state, &ell, obj)?;
        iterations += 1;
    }

    let mut report = stationarity_residual_two(params, &state, &ell, &bundle, obj)?;
    let mut dirs = Vec::with_capacity(1 + opts.random_directions);
    let gnorm = bundle.gradient_norm(&metric);
    if gnorm > 0.0 {
        dirs.push(bundle.gradient.scaled(1.0 / gnorm));
    }
    dirs.extend(random_directions(grid, &mass, opts.random_directions, opts.seed));
    report.bstat_min = Some(bstat_check(params, &ell, obj, grid, &dirs)?);
    Ok(DescentResult {
        ell_star: ell,
        j_history: history,
        iterations,
        report,
    })
}

fn single_field_value(params: &SingleFieldParams, obj: &TrackingObjective, ell: &Trajectory, grid: &TimeGrid) -> Result<f64> {
    let state = forward_single(params, ell, grid)?;
    eval_objective(obj, &params.objective_metric(grid), &state, ell)
}

/// One-sided derivative `J′(ℓ; δℓ)` through the critical-cone sensitivity.
pub fn directional_derivative_single(
    params: &SingleFieldParams,
    obj: &TrackingObjective,
    state: &SingleFieldState,
    ell: &Trajectory,
    dell: &Trajectory,
) -> Result<f64> {
    let metric = params.objective_metric(&state.grid);
    let partials = eval_partials(obj, &metric, state, ell)?;
    let sens = sensitivity_single(params, state, ell, dell)?;
    let mut total = 0.0;
    for k in 0..state.grid.n_steps() {
        for i in 0..params.n_nodes() {
            total += (partials.tracked_grad.row(k)[i] + partials.damage_grad.row(k)[i]) * sens.dq.row(k)[i]
                + partials.ell_grad.row(k)[i] * dell.row(k)[i];
        }
    }
    Ok(total)
}

/// Coordinate descent over the span of `dictionary`, with one-sided
/// directional derivatives from sensitivities and secant trial steps.
pub fn descend_single_field(
    params: &SingleFieldParams,
    obj: &TrackingObjective,
    ell0: &Trajectory,
    grid: &TimeGrid,
    opts: &DescentOptions,
    dictionary: &[Trajectory],
) -> Result<DescentResult> {
    opts.validate()?;
    let mut ell = ell0.clone();
    let mut j = single_field_value(params, obj, &ell, grid)?;
    let mut history = vec![j];
    if dictionary.is_empty() {
        let report = StationarityReport {
            bstat_min: Some(f64::INFINITY),
            directional_only: true,
            ..StationarityReport::default()
        };
        return Ok(DescentResult {
            ell_star: ell,
            j_history: history,
            iterations: 0,
            report,
        });
    }
    // last (coefficient, derivative) per direction for secant steps
    let mut memory: Vec<Option<(f64, f64)>> = vec![None; dictionary.len()];
    let mut coeff = vec![0.0; dictionary.len()];
    let mut iterations = 0;
    let mut measure = f64::INFINITY;
    while iterations < opts.max_iters {
        measure = 0.0;
        let mut moved = false;
        for (m, dir) in dictionary.iter().enumerate() {
            let state = forward_single(params, &ell, grid)?;
            let up = directional_derivative_single(params, obj, &state, &ell, dir)?;
            let down = directional_derivative_single(params, obj, &state, &ell, &dir.scaled(-1.0))?;
            let (sign, slope) = if up < 0.0 && up <= down {
                (1.0, up)
            } else if down < 0.0 {
                (-1.0, down)
            } else {
                memory[m] = Some((coeff[m], up));
                continue;
            };
            measure = f64::max(measure, -slope);
            if -slope <= opts.grad_tol {
                continue;
            }
            let mut step = opts.initial_step;
            if let Some((c_prev, d_prev)) = memory[m] {
                let d_now = if sign > 0.0 { up } else { -down };
                let denom = d_now - d_prev;
                let dc = coeff[m] - c_prev;
                if denom.abs() > 0.0 && dc != 0.0 {
                    let secant = (-d_now * dc / denom).abs();
                    if secant.is_finite() && secant > 0.0 {
                        step = secant;
                    }
                }
            }
            memory[m] = Some((coeff[m], if sign > 0.0 { up } else { -down }));
            let mut accepted = None;
            for _ in 0..=opts.max_shrinks {
                let trial = ell.add_scaled(sign * step, dir);
                let jt = single_field_value(params, obj, &trial, grid)?;
                if jt <= j + opts.armijo_c * step * slope && jt < j {
                    accepted = Some((trial, jt));
                    break;
                }
                step *= opts.armijo_shrink;
            }
            match accepted {
                Some((trial, jt)) => {
                    ell = trial;
                    coeff[m] += sign * step;
                    j = jt;
                    history.push(j);
                    moved = true;
                }
                None => {
                    return Err(EviError::Stagnation {
                        iteration: iterations,
                        shrinks: opts.max_shrinks,
                        last_iterate: Box::new(ell),
                    })
                }
            }
        }
        iterations += 1;
        if !moved || measure <= opts.grad_tol {
            break;
        }
    }

    let state = forward_single(params, &ell, grid)?;
    let mut bstat = f64::INFINITY;
    for dir in dictionary {
        bstat = bstat.min(directional_derivative_single(params, obj, &state, &ell, dir)?);
        bstat = bstat.min(directional_derivative_single(params, obj, &state, &ell, &dir.scaled(-1.0))?);
    }
    let biactive: usize = state.biactive_counts(params.opts.act_tol).iter().sum();
    let mut report = if biactive == 0 {
        let adj = adjoint_single(params, &state, &ell, obj)?;
        let mut r = stationarity_residual_single(params, &state, &ell, &adj.xi, &adj.lambda, obj)?;
        let metric = params.objective_metric(grid);
        r.gradient_norm = Some(adj.gradient.weighted_norm(&metric.mass, metric.dt));
        r
    } else {
        StationarityReport {
            biactive_count: biactive,
            directional_only: true,
            ..StationarityReport::default()
        }
    };
    report.push("dictionary_slope", measure.max(0.0));
    report.bstat_min = Some(bstat);
    Ok(DescentResult {
        ell_star: ell,
        j_history: history,
        iterations,
        report,
    })
}
