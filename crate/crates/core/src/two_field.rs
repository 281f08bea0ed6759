//! Penalized two-field damage model with local damage `d` and nonlocal
//! damage `φ`:
//!
//! ```text
//! ḋ = (1/ε) max(−β(d − φ) − κ(H(d)), 0)
//! −αΔφ + βφ = βd + ℓ
//! ```

use crate::discretization::linalg::dot;
use crate::discretization::{BoundaryCondition, SparseOperator, SpatialMesh, SpdSolver};
use crate::error::{EviError, Result};
use crate::evi::{DissipationSpec, NonsmoothOde, ViscositySpec};
use crate::history::{apply_history, history_derivative, FatigueMap, VolterraKernel};
use crate::objective::{eval_partials, ObjectiveMetric, ObjectivePartials, TrackedState, TrackingObjective};
use crate::options::SolverOptions;
use crate::stationarity::StationarityReport;
use crate::trajectory::{TimeGrid, Trajectory};

#[derive(Clone)]
pub struct TwoFieldParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub fatigue: FatigueMap,
    pub kernel: VolterraKernel,
    pub mesh: SpatialMesh,
    pub opts: SolverOptions,
    stiffness: SparseOperator,
    mass: Vec<f64>,
    phi_solver: SpdSolver,
    visc: ViscositySpec,
}

impl std::fmt::Debug for TwoFieldParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoFieldParams")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("epsilon", &self.epsilon)
            .field("fatigue", &self.fatigue)
            .field("kernel", &self.kernel)
            .field("mesh", &self.mesh)
            .finish()
    }
}

impl TwoFieldParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        epsilon: f64,
        fatigue: FatigueMap,
        kernel: VolterraKernel,
        mesh: SpatialMesh,
    ) -> Result<Self> {
        Self::with_options(alpha, beta, epsilon, fatigue, kernel, mesh, SolverOptions::default())
    }

    pub fn with_options(
        alpha: f64,
        beta: f64,
        epsilon: f64,
        fatigue: FatigueMap,
        kernel: VolterraKernel,
        mesh: SpatialMesh,
        opts: SolverOptions,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !(beta > 0.0) || !(epsilon > 0.0) {
            return Err(EviError::Config("alpha, beta and epsilon must be positive".into()));
        }
        if mesh.bc() != BoundaryCondition::Natural {
            return Err(EviError::Config("the two-field model needs a natural mesh".into()));
        }
        fatigue.validate()?;
        kernel.validate()?;
        if !kernel.offset.is_empty() && kernel.offset.len() != mesh.n_nodes() {
            return Err(EviError::dim("history offset", mesh.n_nodes(), kernel.offset.len()));
        }
        let stiffness = mesh.stiffness();
        let mass = mesh.mass_diagonal();
        let m = SparseOperator::diagonal(&mass);
        let phi_op = stiffness.scaled(alpha).add_scaled(beta, &m);
        let phi_solver = SpdSolver::with_tolerance(&phi_op, opts.spd_tol)?;
        let visc = ViscositySpec::new(m.scaled(epsilon), m)?;
        Ok(TwoFieldParams {
            alpha,
            beta,
            epsilon,
            fatigue,
            kernel,
            mesh,
            opts,
            stiffness,
            mass,
            phi_solver,
            visc,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `αK + βM`.
    pub fn phi_operator(&self) -> SparseOperator {
        self.stiffness
            .scaled(self.alpha)
            .add_scaled(self.beta, &SparseOperator::diagonal(&self.mass))
    }

    /// `V = εM` with the `L²` state norm.
    pub fn viscosity(&self) -> &ViscositySpec {
        &self.visc
    }

    pub fn dissipation(&self, zeta: &[f64]) -> DissipationSpec {
        DissipationSpec {
            kappa_field: zeta.iter().map(|&s| self.fatigue.eval(s)).collect(),
            mass: self.mass.clone(),
        }
    }

    /// Quadrature for the objective, tracking `φ` in the full `H¹` norm.
    pub fn objective_metric(&self, grid: &TimeGrid) -> ObjectiveMetric {
        ObjectiveMetric {
            tracking: self
                .stiffness
                .add_scaled(1.0, &SparseOperator::diagonal(&self.mass)),
            mass: self.mass.clone(),
            dt: grid.dt(),
            n_steps: grid.n_steps(),
        }
    }
}

/// `φ = (αK + βM)⁻¹(βM d + M ℓ)`.
pub fn solve_phi(params: &TwoFieldParams, d: &[f64], ell: &[f64]) -> Result<Vec<f64>> {
    let n = params.n_nodes();
    if d.len() != n || ell.len() != n {
        return Err(EviError::dim("solve_phi", n, d.len().max(ell.len())));
    }
    let rhs: Vec<f64> = (0..n)
        .map(|i| params.mass[i] * (params.beta * d[i] + ell[i]))
        .collect();
    params.phi_solver.solve(&rhs)
}

/// Directional derivative `max′(x; h)`.
pub fn max_dir(x: f64, h: f64) -> f64 {
    if x > 0.0 {
        h
    } else if x < 0.0 {
        0.0
    } else {
        h.max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TwoFieldState {
    pub grid: TimeGrid,
    /// Local damage, `N + 1` rows.
    pub d: Trajectory,
    /// Nonlocal damage `φ_k` for `k < N`.
    pub phi: Trajectory,
    /// Max argument `−β(d − φ) − κ(H(d))`, nodal, `N` rows.
    pub z: Trajectory,
    /// `H(d)(t_k)`, `N` rows.
    pub history: Trajectory,
    /// Nodes with `|z| ≤ z_tol`, per step.
    pub biactive_counts: Vec<usize>,
}

impl TrackedState for TwoFieldState {
    fn tracked(&self) -> &Trajectory {
        &self.phi
    }
    fn damage(&self) -> &Trajectory {
        &self.d
    }
}

impl TwoFieldState {
    pub fn biactive_total(&self) -> usize {
        self.biactive_counts.iter().sum()
    }

    /// Smallest `|z|` over all node-steps.
    pub fn min_abs_z(&self) -> f64 {
        self.z
            .rows()
            .iter()
            .flat_map(|r| r.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

pub fn forward_two(params: &TwoFieldParams, ell: &Trajectory, grid: &TimeGrid) -> Result<TwoFieldState> {
    let n = params.n_nodes();
    let steps = grid.n_steps();
    ell.expect_shape("control", steps, n)?;
    let times = grid.control_times();
    let dt = grid.dt();
    let mut d = Trajectory::new(vec![0.0], vec![vec![0.0; n]])?;
    let mut phi = Trajectory::zeros(times.clone(), n);
    let mut z = Trajectory::zeros(times.clone(), n);
    let mut history = Trajectory::zeros(times, n);
    let mut biactive_counts = Vec::with_capacity(steps);
    for k in 0..steps {
        let phik = solve_phi(params, d.row(k), ell.row(k))?;
        let zeta = apply_history(&params.kernel, &d, k)?;
        let dk = d.row(k);
        let zk: Vec<f64> = (0..n)
            .map(|i| -params.beta * (dk[i] - phik[i]) - params.fatigue.eval(zeta[i]))
            .collect();
        let next: Vec<f64> = (0..n).map(|i| dk[i] + dt / params.epsilon * zk[i].max(0.0)).collect();
        biactive_counts.push(zk.iter().filter(|v| v.abs() <= params.opts.z_tol).count());
        phi.row_mut(k).copy_from_slice(&phik);
        z.row_mut(k).copy_from_slice(&zk);
        history.row_mut(k).copy_from_slice(&zeta);
        d.push(grid.time(k + 1), next);
    }
    Ok(TwoFieldState {
        grid: *grid,
        d,
        phi,
        z,
        history,
        biactive_counts,
    })
}

#[derive(Debug, Clone)]
pub struct TwoFieldSensitivity {
    pub dd: Trajectory,
    pub dphi: Trajectory,
    pub biactive_counts: Vec<usize>,
}

/// `(δd, δφ) = S′(ℓ; δℓ)` for the state returned by [`forward_two`] on `ell`.
pub fn sensitivity_two(
    params: &TwoFieldParams,
    state: &TwoFieldState,
    ell: &Trajectory,
    dell: &Trajectory,
) -> Result<TwoFieldSensitivity> {
    let n = params.n_nodes();
    let grid = state.grid;
    let steps = grid.n_steps();
    ell.expect_shape("control", steps, n)?;
    dell.expect_shape("control direction", steps, n)?;
    let dt = grid.dt();
    let z_tol = params.opts.z_tol;
    let mut dd = Trajectory::new(vec![0.0], vec![vec![0.0; n]])?;
    let mut dphi = Trajectory::control_zeros(&grid, n);
    for k in 0..steps {
        let dphik = solve_phi(params, dd.row(k), dell.row(k))?;
        let dzeta = history_derivative(&params.kernel, &dd, k)?;
        let zeta = state.history.row(k);
        let ddk = dd.row(k);
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let arg = -params.beta * (ddk[i] - dphik[i]) - params.fatigue.derivative(zeta[i]) * dzeta[i];
                let zk = state.z.row(k)[i];
                let x = if zk.abs() <= z_tol { 0.0 } else { zk };
                ddk[i] + dt / params.epsilon * max_dir(x, arg)
            })
            .collect();
        dphi.row_mut(k).copy_from_slice(&dphik);
        dd.push(grid.time(k + 1), next);
    }
    Ok(TwoFieldSensitivity {
        dd,
        dphi,
        biactive_counts: state.biactive_counts.clone(),
    })
}

/// Adjoint states, multiplier and reduced gradient, all in continuous
/// scaling (nodal values, `L²(0,T;L²)` Riesz representatives).
#[derive(Debug, Clone)]
pub struct AdjointBundle {
    /// `N + 1` rows with `ξ_N = 0`.
    pub xi: Trajectory,
    pub w: Trajectory,
    /// `λ_k = (1/ε) χ_{z_k>0} ξ_{k+1}`; zero on biactive node-steps.
    pub lambda: Trajectory,
    /// `w + ∂_ℓJ`.
    pub gradient: Trajectory,
    pub biactive_count: usize,
}

impl AdjointBundle {
    /// `⟨gradient, δℓ⟩` in `L²(0,T;L²)` with the lumped mass.
    pub fn directional(&self, metric: &ObjectiveMetric, dell: &Trajectory) -> f64 {
        self.gradient.weighted_inner(dell, &metric.mass, metric.dt)
    }

    pub fn gradient_norm(&self, metric: &ObjectiveMetric) -> f64 {
        self.gradient.weighted_norm(&metric.mass, metric.dt)
    }
}

fn chi(params: &TwoFieldParams, z: f64) -> bool {
    z > params.opts.z_tol
}

/// `Σ_{j<k<N} Δt A(t_k − t_j) κ′(ζ_k) λ_k` (nodal).
fn fatigue_adjoint(params: &TwoFieldParams, state: &TwoFieldState, lambda: &Trajectory, j: usize) -> Vec<f64> {
    let n = params.n_nodes();
    let dt = state.grid.dt();
    let mut out = vec![0.0; n];
    for k in j + 1..lambda.len() {
        let a = dt * params.kernel.eval((k - j) as f64 * dt);
        if a == 0.0 {
            continue;
        }
        let zeta = state.history.row(k);
        for i in 0..n {
            out[i] += a * params.fatigue.derivative(zeta[i]) * lambda.row(k)[i];
        }
    }
    out
}

/// Exact transpose of the linearized forward scheme, run backward from
/// `ξ_N = 0`.
pub fn adjoint_two(
    params: &TwoFieldParams,
    state: &TwoFieldState,
    ell: &Trajectory,
    obj: &TrackingObjective,
) -> Result<AdjointBundle> {
    let metric = params.objective_metric(&state.grid);
    let partials = eval_partials(obj, &metric, state, ell)?;
    adjoint_two_with_partials(params, state, ell, obj, &partials)
}

fn adjoint_two_with_partials(
    params: &TwoFieldParams,
    state: &TwoFieldState,
    ell: &Trajectory,
    obj: &TrackingObjective,
    partials: &ObjectivePartials,
) -> Result<AdjointBundle> {
    let n = params.n_nodes();
    let grid = state.grid;
    let steps = grid.n_steps();
    let dt = grid.dt();
    let (beta, eps) = (params.beta, params.epsilon);
    let mass = &params.mass;

    // load-form adjoint p = Mξ and the discrete multiplier Λ = Δt M λ
    let mut p = vec![vec![0.0; n]; steps + 1];
    let mut lambda = Trajectory::control_zeros(&grid, n);
    let mut w = Trajectory::control_zeros(&grid, n);
    for j in (0..steps).rev() {
        for i in 0..n {
            lambda.row_mut(j)[i] = if chi(params, state.z.row(j)[i]) {
                p[j + 1][i] / (mass[i] * eps)
            } else {
                0.0
            };
        }
        let rhs: Vec<f64> = (0..n)
            .map(|i| partials.tracked_grad.row(j)[i] + beta * dt * mass[i] * lambda.row(j)[i])
            .collect();
        let r = params.phi_solver.solve(&rhs)?;
        let hist = fatigue_adjoint(params, state, &lambda, j);
        for i in 0..n {
            let big_lambda = dt * mass[i] * lambda.row(j)[i];
            p[j][i] = p[j + 1][i] + partials.damage_grad.row(j)[i] - beta * big_lambda
                + beta * mass[i] * r[i]
                - dt * mass[i] * hist[i];
            w.row_mut(j)[i] = r[i] / dt;
        }
    }
    let mut xi = Trajectory::state_zeros(&grid, n);
    for k in 0..=steps {
        for i in 0..n {
            xi.row_mut(k)[i] = p[k][i] / mass[i];
        }
    }
    let mut gradient = Trajectory::control_zeros(&grid, n);
    for k in 0..steps {
        for i in 0..n {
            gradient.row_mut(k)[i] = w.row(k)[i] + obj.alpha2 * (ell.row(k)[i] - obj.ell_target.row(k)[i]);
        }
    }
    Ok(AdjointBundle {
        xi,
        w,
        lambda,
        gradient,
        biactive_count: state.biactive_total(),
    })
}

/// Pointwise check of the multiplier selection. `λ_k` is paired with
/// `ξ_{k+1}`, the adjoint value its step feeds into.
pub fn check_sign_condition(params: &TwoFieldParams, state: &TwoFieldState, bundle: &AdjointBundle) -> StationarityReport {
    let n = params.n_nodes();
    let eps = params.epsilon;
    let z_tol = params.opts.z_tol;
    let mut report = StationarityReport::default();
    let mut worst = 0.0_f64;
    for k in 0..state.grid.n_steps() {
        for i in 0..n {
            let z = state.z.row(k)[i];
            let x = bundle.xi.row(k + 1)[i] / eps;
            let lam = bundle.lambda.row(k)[i];
            let tol = 1e-8 * (1.0 + x.abs());
            if z.abs() > z_tol {
                let want = if z > 0.0 { x } else { 0.0 };
                let gap = (lam - want).abs();
                worst = worst.max(gap);
                if gap > tol {
                    report.sign_violations += 1;
                }
            } else {
                report.biactive_count += 1;
                let (lo, hi) = (x.min(0.0) - tol, x.max(0.0) + tol);
                if lam < lo || lam > hi || x < -tol {
                    report.sign_violations += 1;
                    report.biactive_sign_violations += 1;
                }
            }
        }
    }
    report.push("sign", worst);
    report.directional_only = report.biactive_count > 0;
    report
}

/// Residuals of the adjoint, elliptic adjoint and gradient equations in
/// continuous scaling, plus the sign check.
pub fn stationarity_residual_two(
    params: &TwoFieldParams,
    state: &TwoFieldState,
    ell: &Trajectory,
    bundle: &AdjointBundle,
    obj: &TrackingObjective,
) -> Result<StationarityReport> {
    let n = params.n_nodes();
    let grid = state.grid;
    let steps = grid.n_steps();
    let dt = grid.dt();
    bundle.xi.expect_shape("xi", steps + 1, n)?;
    bundle.w.expect_shape("w", steps, n)?;
    bundle.lambda.expect_shape("lambda", steps, n)?;
    let metric = params.objective_metric(&grid);
    let beta = params.beta;
    let phi_op = params.phi_operator();

    let mut adjoint1 = 0.0_f64;
    let mut adjoint2 = 0.0_f64;
    let mut grad = 0.0_f64;
    for j in 0..steps {
        let hist = fatigue_adjoint(params, state, &bundle.lambda, j);
        let lam = bundle.lambda.row(j);
        let w = bundle.w.row(j);
        for i in 0..n {
            let dj = obj.alpha1 * state.d.row(j)[i];
            let r = (bundle.xi.row(j)[i] - bundle.xi.row(j + 1)[i]) / dt + beta * lam[i] - beta * w[i] + hist[i] - dj;
            adjoint1 = adjoint1.max(r.abs());
        }
        let dphi: Vec<f64> = state
            .phi
            .row(j)
            .iter()
            .zip(obj.phi_target.row(j))
            .map(|(a, b)| a - b)
            .collect();
        let track = metric.tracking.apply(&dphi);
        let aw = phi_op.apply(w);
        for i in 0..n {
            let r = aw[i] - beta * params.mass[i] * lam[i] - track[i];
            adjoint2 = adjoint2.max(r.abs());
            let g = w[i] + obj.alpha2 * (ell.row(j)[i] - obj.ell_target.row(j)[i]);
            grad = grad.max(g.abs());
        }
    }
    let mut report = StationarityReport::default();
    report.push("adjoint1", adjoint1);
    report.push("adjoint2", adjoint2);
    report.push("gradient", grad);
    report.push("terminal", bundle.xi.row(steps).iter().fold(0.0, |m, v| m.max(v.abs())));
    report.merge(check_sign_condition(params, state, bundle));
    report.gradient_norm = Some(bundle.gradient_norm(&metric));
    Ok(report)
}

/// `∂J/∂(d,φ) S′(ℓ; δℓ) + ∂_ℓJ δℓ` evaluated through [`sensitivity_two`].
pub fn directional_derivative(
    params: &TwoFieldParams,
    state: &TwoFieldState,
    ell: &Trajectory,
    partials: &ObjectivePartials,
    dell: &Trajectory,
) -> Result<f64> {
    let sens = sensitivity_two(params, state, ell, dell)?;
    let steps = state.grid.n_steps();
    let mut total = 0.0;
    for k in 0..steps {
        total += dot(partials.damage_grad.row(k), sens.dd.row(k))
            + dot(partials.tracked_grad.row(k), sens.dphi.row(k))
            + dot(partials.ell_grad.row(k), dell.row(k));
    }
    Ok(total)
}

/// Smallest directional derivative of the reduced objective over `±δℓ`;
/// `+∞` for an empty list.
pub fn bstat_check(
    params: &TwoFieldParams,
    ell: &Trajectory,
    obj: &TrackingObjective,
    grid: &TimeGrid,
    directions: &[Trajectory],
) -> Result<f64> {
    if directions.is_empty() {
        return Ok(f64::INFINITY);
    }
    let state = forward_two(params, ell, grid)?;
    let metric = params.objective_metric(grid);
    let partials = eval_partials(obj, &metric, &state, ell)?;
    let mut best = f64::INFINITY;
    for dir in directions {
        for s in [1.0, -1.0] {
            let v = directional_derivative(params, &state, ell, &partials, &dir.scaled(s))?;
            best = best.min(v);
        }
    }
    Ok(best)
}

/// The two-field model as a non-smooth ODE in `d` with `V = εM`; `φ` is
/// eliminated through [`solve_phi`].
pub struct TwoFieldOde<'a> {
    pub params: &'a TwoFieldParams,
}

impl NonsmoothOde for TwoFieldOde<'_> {
    fn dim(&self) -> usize {
        self.params.n_nodes()
    }

    fn history(&self, y: &Trajectory, k: usize) -> Result<Vec<f64>> {
        apply_history(&self.params.kernel, y, k)
    }

    fn rhs(&self, y: &[f64], ell: &[f64]) -> Result<Vec<f64>> {
        let phi = solve_phi(self.params, y, ell)?;
        Ok((0..y.len())
            .map(|i| -self.params.beta * self.params.mass[i] * (y[i] - phi[i]))
            .collect())
    }

    fn dissipation(&self, zeta: &[f64]) -> DissipationSpec {
        self.params.dissipation(zeta)
    }

    fn viscosity(&self) -> &ViscositySpec {
        &self.params.visc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_mesh;

    fn scalar() -> TwoFieldParams {
        let mesh = build_mesh(1, 1.0, BoundaryCondition::Natural).unwrap();
        TwoFieldParams::new(1.0, 1.0, 0.5, FatigueMap::constant(1.0), VolterraKernel::none(), mesh).unwrap()
    }

    #[test]
    fn max_dir_cases() {
        assert_eq!(max_dir(2.0, -3.0), -3.0);
        assert_eq!(max_dir(-1.0, 5.0), 0.0);
        assert_eq!(max_dir(0.0, -2.0), 0.0);
        assert_eq!(max_dir(0.0, 2.0), 2.0);
    }

    #[test]
    fn solve_phi_examples() {
        let p = scalar();
        assert_eq!(solve_phi(&p, &[0.0], &[0.0]).unwrap(), vec![0.0]);
        let phi = solve_phi(&p, &[0.3], &[2.0]).unwrap()[0];
        assert!((phi - (0.3 + 2.0 / p.beta)).abs() < 1e-15);

        let mesh = build_mesh(6, 2.0, BoundaryCondition::Natural).unwrap();
        let p = TwoFieldParams::new(0.7, 3.0, 0.5, FatigueMap::constant(1.0), VolterraKernel::none(), mesh).unwrap();
        let phi = solve_phi(&p, &[1.5; 6], &[0.0; 6]).unwrap();
        assert!(phi.iter().all(|v| (v - 1.5).abs() < 1e-13));
    }

    #[test]
    fn scalar_closed_form() {
        let p = scalar();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let ell = Trajectory::control_from_fn(&grid, 1, |_, _| 2.0);
        let s = forward_two(&p, &ell, &grid).unwrap();
        for (k, t) in grid.state_times().iter().enumerate() {
            assert!((s.d.row(k)[0] - 2.0 * t).abs() <= 4.0 * f64::EPSILON * (1.0 + 2.0 * t));
        }
    }

    #[test]
    fn zero_load_and_zero_objective() {
        let mesh = build_mesh(4, 1.0, BoundaryCondition::Natural).unwrap();
        let p = TwoFieldParams::new(0.5, 2.0, 0.5, FatigueMap::sigmoid(1.0, 0.1, 1.0), VolterraKernel::exponential(1.0, 0.3), mesh).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let ell = Trajectory::control_zeros(&grid, 4);
        let s = forward_two(&p, &ell, &grid).unwrap();
        assert_eq!(s.d.max_abs() + s.phi.max_abs(), 0.0);
        let obj = TrackingObjective::new(s.phi.clone(), ell.clone(), 0.0, 1.0).unwrap();
        let b = adjoint_two(&p, &s, &ell, &obj).unwrap();
        assert_eq!(b.xi.max_abs() + b.w.max_abs() + b.lambda.max_abs() + b.gradient.max_abs(), 0.0);
        let sens = sensitivity_two(&p, &s, &ell, &ell).unwrap();
        assert_eq!(sens.dd.max_abs() + sens.dphi.max_abs(), 0.0);
        assert_eq!(bstat_check(&p, &ell, &obj, &grid, &[]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn sign_check_counts_perturbations() {
        let mesh = build_mesh(3, 1.0, BoundaryCondition::Natural).unwrap();
        let p = TwoFieldParams::new(0.5, 2.0, 0.5, FatigueMap::sigmoid(1.0, 0.1, 1.0), VolterraKernel::constant(0.5), mesh).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let ell = Trajectory::control_from_fn(&grid, 3, |t, i| if i == 0 { 3.0 + t } else { -1.0 });
        let s = forward_two(&p, &ell, &grid).unwrap();
        let obj = TrackingObjective::zero_targets(&grid, 3, 0.1, 0.01).unwrap();
        let mut b = adjoint_two(&p, &s, &ell, &obj).unwrap();
        let rep = check_sign_condition(&p, &s, &b);
        assert_eq!(rep.sign_violations, 0);
        let mut perturbed = 0;
        for k in 0..10 {
            if s.z.row(k)[2] < -1e-3 {
                b.lambda.row_mut(k)[2] += 1.0;
                perturbed += 1;
            }
        }
        assert!(perturbed > 0);
        assert_eq!(check_sign_condition(&p, &s, &b).sign_violations, perturbed);
    }
}
