use crate::discretization::DEFAULT_SOLVER_TOL;
use crate::qp::QpOptions;

/// Time stepping scheme for [`crate::evi::integrate_ode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntegratorMode {
    /// `y_{k+1} = y_k + Δt F(H(y)(t_k), g(y_k, ℓ_k))`
    #[default]
    Euler,
    /// Trapezoidal rule on each step, solved by fixed-point iteration.
    Picard,
}

/// Tolerances shared by the forward, sensitivity and adjoint solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub spd_tol: f64,
    pub qp: QpOptions,
    /// Multiplier size below which a zero rate counts as biactive.
    pub act_tol: f64,
    /// `|z|` below which the max argument counts as sitting on the kink.
    pub z_tol: f64,
    pub integrator: IntegratorMode,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            spd_tol: DEFAULT_SOLVER_TOL,
            qp: QpOptions::default(),
            act_tol: 1e-8,
            z_tol: 1e-10,
            integrator: IntegratorMode::Euler,
            picard_tol: 1e-10,
            picard_max_iter: 50,
        }
    }
}
