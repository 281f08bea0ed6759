//! Rate problems of viscous EVIs with a κ-weighted irreversibility cone.
//!
//! For a history value `ζ` the dissipation is `R(ζ, η) = Σᵢ mᵢ κᵢ ηᵢ` on
//! `η ≥ 0` and `+∞` otherwise. Its subdifferential at zero is the shifted
//! polar cone `{μ : μ ≤ M κ}`. `B(ζ, ω)` projects `ω` onto this set in the
//! `V⁻¹` metric and `F(ζ, ω) = V⁻¹(ω − B(ζ, ω))` is the rate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::linalg::{dot, generalized_eigen_range, sub};
use crate::discretization::SparseOperator;
use crate::error::{EviError, Result};
use crate::history::FatigueMap;
use crate::options::{IntegratorMode, SolverOptions};
use crate::qp::{solve_bound_qp, Bound, QpOptions};
use crate::trajectory::{TimeGrid, Trajectory};

/// `R(ζ, ·)` for a fixed nodal toughness field `κ(ζ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationSpec {
    pub kappa_field: Vec<f64>,
    /// Diagonal of the lumped mass.
    pub mass: Vec<f64>,
}

impl DissipationSpec {
    pub fn new(kappa_field: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if kappa_field.len() != mass.len() {
            return Err(EviError::dim("dissipation", mass.len(), kappa_field.len()));
        }
        Ok(DissipationSpec { kappa_field, mass })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// The load vector `M κ`.
    pub fn shift(&self) -> Vec<f64> {
        self.mass.iter().zip(&self.kappa_field).map(|(m, k)| m * k).collect()
    }

    /// `R(ζ, η)`, or `None` when `η` leaves the cone.
    pub fn eval(&self, eta: &[f64]) -> Option<f64> {
        if eta.iter().any(|v| *v < 0.0) {
            return None;
        }
        Some(dot(&self.shift(), eta))
    }
}

/// The family `ζ ↦ R(ζ, ·)` induced by a fatigue map.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationFamily {
    pub fatigue: FatigueMap,
    pub mass: Vec<f64>,
}

impl DissipationFamily {
    pub fn at(&self, zeta: &[f64]) -> DissipationSpec {
        DissipationSpec {
            kappa_field: zeta.iter().map(|&s| self.fatigue.eval(s)).collect(),
            mass: self.mass.clone(),
        }
    }
}

/// Viscosity operator `V` with the coercivity constant `ϑ` relative to the
/// state norm `‖y‖²_Y = yᵀ G y`.
#[derive(Debug, Clone)]
pub struct ViscositySpec {
    pub operator: SparseOperator,
    pub state_gram: SparseOperator,
    pub theta: f64,
}

impl ViscositySpec {
    /// Computes `ϑ = min yᵀVy / yᵀGy` from the dense pencil.
    pub fn new(operator: SparseOperator, state_gram: SparseOperator) -> Result<Self> {
        if operator.dim() != state_gram.dim() {
            return Err(EviError::dim("viscosity gram", operator.dim(), state_gram.dim()));
        }
        if !operator.is_symmetric(1e-12) {
            return Err(EviError::Domain("viscosity operator is not symmetric".into()));
        }
        let (theta, _) = generalized_eigen_range(&operator.to_dense(), &state_gram.to_dense())?;
        if !(theta > 0.0) {
            return Err(EviError::Domain(format!(
                "viscosity operator is not coercive (theta = {theta:.3e})"
            )));
        }
        Ok(ViscositySpec {
            operator,
            state_gram,
            theta,
        })
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeProjectionResult {
    /// Rate `F(ζ, ω) ≥ 0`.
    pub z: Vec<f64>,
    /// `B(ζ, ω) = ω − V z`.
    pub mu: Vec<f64>,
    /// Nodes with `z = 0`.
    pub active_set: Vec<bool>,
    /// `M κ − μ`, nonnegative and zero off the active set.
    pub multiplier: Vec<f64>,
}

fn check_dims(diss: &DissipationSpec, visc: &ViscositySpec, omega: &[f64]) -> Result<()> {
    let n = visc.dim();
    if diss.dim() != n {
        return Err(EviError::dim("dissipation", n, diss.dim()));
    }
    if omega.len() != n {
        return Err(EviError::dim("omega", n, omega.len()));
    }
    Ok(())
}

/// `B(ζ, ω)` via the rate QP `min_{z≥0} ½ zᵀVz − (ω − Mκ)ᵀz`.
pub fn project_b(
    diss: &DissipationSpec,
    visc: &ViscositySpec,
    omega: &[f64],
    warm_active: Option<&[bool]>,
    opts: &QpOptions,
) -> Result<ConeProjectionResult> {
    check_dims(diss, visc, omega)?;
    let b = sub(omega, &diss.shift());
    let sol = solve_bound_qp(&visc.operator, &b, &vec![Bound::NonNegative; b.len()], warm_active, opts)?;
    let vz = visc.operator.apply(&sol.x);
    let mu = sub(omega, &vz);
    Ok(ConeProjectionResult {
        z: sol.x,
        mu,
        active_set: sol.active,
        multiplier: sol.multiplier,
    })
}

/// `B(ζ, ω)` through the shift identity: project `ω − Mκ` onto the polar
/// cone `{ν ≤ 0}` in the `V⁻¹` metric and add `Mκ` back.
///
/// Works on the dense inverse; meant as an independent check of
/// [`project_b`] on small problems.
pub fn project_b_shifted(
    diss: &DissipationSpec,
    visc: &ViscositySpec,
    omega: &[f64],
    opts: &QpOptions,
) -> Result<ConeProjectionResult> {
    check_dims(diss, visc, omega)?;
    let n = omega.len();
    let chol = Cholesky::new(visc.operator.to_dense())
        .ok_or_else(|| EviError::Domain("viscosity operator is not positive definite".into()))?;
    let v_inv = chol.inverse();
    let shift = diss.shift();
    let shifted = DVector::from_vec(sub(omega, &shift));
    // ν = −x with x ≥ 0 minimizes ½ xᵀV⁻¹x + (V⁻¹ω′)ᵀx
    let b: Vec<f64> = (&v_inv * &shifted).iter().map(|v| -v).collect();
    let a = SparseOperator::from_dense(&v_inv);
    let sol = solve_bound_qp(&a, &b, &vec![Bound::NonNegative; n], None, opts)?;
    let mu: Vec<f64> = sol.x.iter().zip(&shift).map(|(x, s)| s - x).collect();
    let z = chol.solve(&DVector::from_vec(sub(omega, &mu)));
    let z: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
    let active_set = sol.x.iter().map(|x| *x > 0.0).collect::<Vec<_>>();
    let active_set: Vec<bool> = active_set
        .iter()
        .zip(&z)
        .map(|(&a, &zi)| a || zi == 0.0)
        .collect();
    Ok(ConeProjectionResult {
        z,
        mu,
        active_set,
        multiplier: sol.x,
    })
}

/// `F(ζ, ω)`: the solution of the elliptic VI of the second kind.
pub fn eval_f(diss: &DissipationSpec, visc: &ViscositySpec, omega: &[f64], opts: &QpOptions) -> Result<Vec<f64>> {
    Ok(project_b(diss, visc, omega, None, opts)?.z)
}

/// Worst violation of
/// `R(ζ,η) − R(ζ,z) + ⟨Vz, η−z⟩ ≥ ⟨ω, η−z⟩` over the test rates `η`.
/// Positive values are violations.
pub fn vi_residual(
    diss: &DissipationSpec,
    visc: &ViscositySpec,
    omega: &[f64],
    z: &[f64],
    test_dirs: &[Vec<f64>],
) -> Result<f64> {
    check_dims(diss, visc, omega)?;
    let r_z = diss
        .eval(z)
        .ok_or_else(|| EviError::Domain("rate has a negative component".into()))?;
    let vz = visc.operator.apply(z);
    let mut worst = f64::NEG_INFINITY;
    for eta in test_dirs {
        if eta.len() != z.len() {
            return Err(EviError::dim("test direction", z.len(), eta.len()));
        }
        let r_eta = diss
            .eval(eta)
            .ok_or_else(|| EviError::Domain("test direction leaves the cone".into()))?;
        let diff = sub(eta, z);
        let v = dot(omega, &diff) - r_eta + r_z - dot(&vz, &diff);
        worst = worst.max(v);
    }
    Ok(worst)
}

/// Standard test set: `0`, `z`, `2z`, the unit vectors and `extra` random
/// nonnegative vectors scaled like `z`.
pub fn standard_test_dirs(z: &[f64], extra: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = z.len();
    let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut dirs = vec![vec![0.0; n], z.to_vec(), z.iter().map(|v| 2.0 * v).collect()];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = scale;
        dirs.push(e);
    }
    for _ in 0..extra {
        dirs.push((0..n).map(|_| scale * rng.random_range(0.0..2.0)).collect());
    }
    dirs
}

/// A non-smooth ODE `ẏ = F(H(y), g(y, ℓ))` assembled from callbacks.
pub trait NonsmoothOde {
    fn dim(&self) -> usize;
    /// `ζ_k = H(y)(t_k)` given rows `y_0 ..` (at least `y_0 .. y_{k−1}`).
    fn history(&self, y: &Trajectory, k: usize) -> Result<Vec<f64>>;
    /// Load vector `g(y, ℓ)`.
    fn rhs(&self, y: &[f64], ell: &[f64]) -> Result<Vec<f64>>;
    fn dissipation(&self, zeta: &[f64]) -> DissipationSpec;
    fn viscosity(&self) -> &ViscositySpec;
}

/// Integrates from `y(0) = 0` with piecewise constant `ℓ`.
pub fn integrate_ode<M: NonsmoothOde + ?Sized>(
    model: &M,
    ell: &Trajectory,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let n = model.dim();
    ell.expect_shape("control", grid.n_steps(), n)?;
    let dt = grid.dt();
    let mut y = Trajectory::new(vec![0.0], vec![vec![0.0; n]])?;
    let mut active: Option<Vec<bool>> = None;
    for k in 0..grid.n_steps() {
        let yk = y.row(k).to_vec();
        let zeta = model.history(&y, k)?;
        let diss = model.dissipation(&zeta);
        let omega = model.rhs(&yk, ell.row(k))?;
        let p = project_b(&diss, model.viscosity(), &omega, active.as_deref(), &opts.qp)?;
        let mut next: Vec<f64> = yk.iter().zip(&p.z).map(|(a, r)| a + dt * r).collect();
        active = Some(p.active_set);
        if opts.integrator == IntegratorMode::Picard {
            let zeta_next = model.history(&y, k + 1)?;
            let diss_next = model.dissipation(&zeta_next);
            let mut converged = false;
            let mut change = f64::INFINITY;
            for _ in 0..opts.picard_max_iter {
                let omega_next = model.rhs(&next, ell.row(k))?;
                let r_next = project_b(&diss_next, model.viscosity(), &omega_next, active.as_deref(), &opts.qp)?;
                let cand: Vec<f64> = (0..n)
                    .map(|i| yk[i] + 0.5 * dt * (p.z[i] + r_next.z[i]))
                    .collect();
                change = cand.iter().zip(&next).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
                next = cand;
                if change <= opts.picard_tol * (1.0 + next.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(EviError::NonConvergence {
                    solver: "Picard step",
                    iterations: opts.picard_max_iter,
                    residual: change,
                });
            }
        }
        y.push(grid.time(k + 1), next);
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzStats {
    pub samples: usize,
    pub max_ratio: f64,
    /// `max{1, L_κ}/ϑ`.
    pub bound: f64,
    /// `max{1, L_R}/ϑ` with `L_R = L_κ · c`, `c` the `X ↪ Y*` pairing constant.
    pub sharp_bound: f64,
    pub holds: bool,
}

/// `‖F(ζ₁,ω₁) − F(ζ₂,ω₂)‖_Y / (‖ζ₁−ζ₂‖_X + ‖ω₁−ω₂‖_{Y*})` with `X` the
/// lumped `L²` norm and `Y*` dual to the state gram.
pub fn lipschitz_ratio(
    family: &DissipationFamily,
    visc: &ViscositySpec,
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
    opts: &QpOptions,
) -> Result<f64> {
    let f1 = eval_f(&family.at(a.0), visc, a.1, opts)?;
    let f2 = eval_f(&family.at(b.0), visc, b.1, opts)?;
    let df = sub(&f1, &f2);
    let num = visc.state_gram.quad_form(&df).max(0.0).sqrt();
    let dz = sub(a.0, b.0);
    let x_norm = dz.iter().zip(&family.mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt();
    let dw = sub(a.1, b.1);
    let y_dual = dot(&dw, &crate::discretization::solve_spd(&visc.state_gram, &dw)?).max(0.0).sqrt();
    let den = x_norm + y_dual;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// Samples random pairs and compares the worst ratio with `max{1, L_κ}/ϑ`.
pub fn lipschitz_certificate(
    family: &DissipationFamily,
    visc: &ViscositySpec,
    sample_count: usize,
    seed: u64,
    opts: &QpOptions,
) -> Result<LipschitzStats> {
    if sample_count == 0 {
        return Err(EviError::Config("sample_count must be at least 1".into()));
    }
    let n = visc.dim();
    let mass_op = SparseOperator::diagonal(&family.mass);
    let (lo, _) = generalized_eigen_range(&visc.state_gram.to_dense(), &mass_op.to_dense())?;
    let embed = 1.0 / lo.sqrt();
    let l_kappa = family.fatigue.lipschitz();
    let bound = l_kappa.max(1.0) / visc.theta;
    let sharp_bound = (l_kappa * embed).max(1.0) / visc.theta;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // load scale comparable to the toughness shift so both branches occur
    let scale = family
        .mass
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v))
        * family.fatigue.kappa0.max(1.0)
        * 2.0;
    let mut max_ratio = 0.0_f64;
    for _ in 0..sample_count {
        let z1: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z2: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w1: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..2.0)).collect();
        let w2: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..2.0)).collect();
        let r = lipschitz_ratio(family, visc, (&z1, &w1), (&z2, &w2), opts)?;
        max_ratio = max_ratio.max(r);
    }
    Ok(LipschitzStats {
        samples: sample_count,
        max_ratio,
        bound,
        sharp_bound,
        holds: max_ratio <= bound * (1.0 + 1e-8),
    })
}

/// Dense `V⁻¹` helper used by tests and the verification suite.
pub fn dense_inverse(op: &SparseOperator) -> Result<DMatrix<f64>> {
    Cholesky::new(op.to_dense())
        .map(|c| c.inverse())
        .ok_or_else(|| EviError::Domain("operator is not positive definite".into()))
}
