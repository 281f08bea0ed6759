//! Desk-scale verification suite: each check rebuilds small instances, runs
//! the solvers and compares against an independent oracle or invariant.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::linalg::sub;
use crate::discretization::{build_mesh, BoundaryCondition};
use crate::error::Result;
use crate::evi::{integrate_ode, lipschitz_certificate, project_b, project_b_shifted, standard_test_dirs, vi_residual, DissipationFamily, ViscositySpec};
use crate::history::{FatigueMap, VolterraKernel};
use crate::objective::{eval_partials, TrackingObjective};
use crate::optimize::{descend_two_field, DescentOptions};
use crate::options::SolverOptions;
use crate::single_field::{forward_single, polar_project, sensitivity_single, SingleFieldOde, SingleFieldParams};
use crate::trajectory::{TimeGrid, Trajectory};
use crate::two_field::{adjoint_two, directional_derivative, forward_two, sensitivity_two, TwoFieldParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

pub const CHECK_NAMES: [&str; 9] = [
    "evi_ode_equivalence",
    "projection_oracle",
    "vi_residual",
    "lipschitz_certificate",
    "sensitivity_consistency",
    "adjoint_duality",
    "strong_stationarity",
    "scalar_closed_form",
    "irreversibility",
];

fn random_control(grid: &TimeGrid, n: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut t = Trajectory::control_zeros(grid, n);
    for k in 0..t.len() {
        t.row_mut(k).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    t
}

fn single_instance(n: usize) -> Result<SingleFieldParams> {
    SingleFieldParams::new(
        0.05,
        0.2,
        FatigueMap::sigmoid(1.0, 0.2, 4.0),
        VolterraKernel::exponential(3.0, 0.5),
        build_mesh(n, 1.0, BoundaryCondition::Dirichlet)?,
    )
}

fn single_load(grid: &TimeGrid, n: usize) -> Trajectory {
    Trajectory::control_from_fn(grid, n, |t, i| {
        let x = (i + 1) as f64 / (n + 1) as f64;
        if x < 0.6 {
            2.0 + 1.5 * t + x
        } else {
            -1.0
        }
    })
}

fn two_instance(n: usize) -> Result<TwoFieldParams> {
    TwoFieldParams::new(
        0.5,
        2.0,
        0.5,
        FatigueMap::sigmoid(1.0, 0.2, 2.0),
        VolterraKernel::exponential(1.0, 0.5),
        build_mesh(n, 1.0, BoundaryCondition::Natural)?,
    )
}

fn two_load(grid: &TimeGrid, n: usize) -> Trajectory {
    Trajectory::control_from_fn(grid, n, |t, i| {
        let x = i as f64 / (n.max(2) - 1) as f64;
        if x < 0.5 {
            1.6 + 0.8 * t + 0.3 * x
        } else {
            0.2 - 0.3 * t
        }
    })
}

fn scalar_two() -> Result<TwoFieldParams> {
    TwoFieldParams::new(
        1.0,
        1.0,
        0.5,
        FatigueMap::constant(1.0),
        VolterraKernel::none(),
        build_mesh(1, 1.0, BoundaryCondition::Natural)?,
    )
}

/// Rows strictly out of order, counted exactly (no tolerance).
fn decreases(y: &Trajectory) -> usize {
    y.rows()
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| b < a).count())
        .sum()
}

/// Minimizer of `½ zᵀAz − bᵀz` over `z ≥ 0` by trying every active set.
pub fn enumerate_bound_qp(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1usize << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut z = vec![0.0; n];
        if !free.is_empty() {
            let sub_a = DMatrix::from_fn(free.len(), free.len(), |r, c| a[(free[r], free[c])]);
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| b[i]));
            let sol = sub_a.lu().solve(&rhs)?;
            for (r, &i) in free.iter().enumerate() {
                z[i] = sol[r];
            }
        }
        let scale = 1.0 + b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if z.iter().any(|v| *v < -1e-12 * scale) {
            continue;
        }
        let az = a * DVector::from_column_slice(&z);
        let dual_ok = (0..n).all(|i| mask & (1 << i) != 0 || az[i] - b[i] >= -1e-12 * scale);
        if !dual_ok {
            continue;
        }
        let val = 0.5 * z.iter().zip(az.iter()).map(|(x, y)| x * y).sum::<f64>() - z.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        if best.as_ref().is_none_or(|(v, _)| val < *v) {
            best = Some((val, z));
        }
    }
    best.map(|(_, z)| z)
}

fn diff_sup(a: &[f64], b: &[f64]) -> f64 {
    sub(a, b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn check_evi_ode_equivalence(seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let n = rng.random_range(2..=8);
        let steps = rng.random_range(20..=200);
        let p = single_instance(n)?;
        let grid = TimeGrid::new(1.0, steps)?;
        let amp = rng.random_range(1.0..4.0);
        let ell = Trajectory::control_from_fn(&grid, n, |t, i| amp * (1.0 + t) * ((i as f64 + 1.0) * 0.7).sin());
        let s = forward_single(&p, &ell, &grid)?;
        let y = integrate_ode(&SingleFieldOde { params: &p }, &ell, &grid, &SolverOptions::default())?;
        worst = worst.max(s.q.max_abs_diff(&y));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(CheckOutcome::new(
        CHECK_NAMES[0],
        worst <= 1e-9 && secs < 10.0,
        format!("sup diff {worst:.3e} over 5 instances in {secs:.2}s"),
    ))
}

pub fn check_projection_oracle(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2);
    let p = single_instance(4)?;
    let v = p.viscosity();
    let dense = v.operator.to_dense();
    let family = DissipationFamily {
        fatigue: p.fatigue,
        mass: p.mass().to_vec(),
    };
    let opts = &p.opts.qp;
    let mut worst_b = 0.0_f64;
    let mut worst_polar = 0.0_f64;
    let mut worst_shift = 0.0_f64;
    let mut active_mix = 0usize;
    for _ in 0..100 {
        let zeta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let omega: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..2.0)).collect();
        let diss = family.at(&zeta);
        let shifted = sub(&omega, &diss.shift());
        let oracle = enumerate_bound_qp(&dense, &shifted).ok_or_else(|| crate::error::EviError::Domain("no KKT point found".into()))?;
        let direct = project_b(&diss, v, &omega, None, opts)?;
        let polar = polar_project(&p, &shifted, None)?;
        let via_shift = project_b_shifted(&diss, v, &omega, opts)?;
        let n_active = direct.active_set.iter().filter(|a| **a).count();
        if n_active > 0 && n_active < 4 {
            active_mix += 1;
        }
        worst_b = worst_b.max(diff_sup(&direct.z, &oracle));
        worst_polar = worst_polar.max(diff_sup(&polar.z, &oracle));
        worst_shift = worst_shift.max(diff_sup(&via_shift.mu, &direct.mu));
    }
    let passed = worst_b <= 1e-10 && worst_polar <= 1e-10 && worst_shift <= 1e-10;
    Ok(CheckOutcome::new(
        CHECK_NAMES[1],
        passed,
        format!(
            "project_b {worst_b:.3e}, polar_project {worst_polar:.3e}, shift identity {worst_shift:.3e}; {active_mix}/100 mixed active sets"
        ),
    ))
}

pub fn check_vi_residual(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3);
    let mut worst_single = 0.0_f64;
    let mut worst_two = 0.0_f64;
    let mut min_dirs = usize::MAX;

    let p = single_instance(6)?;
    let grid = TimeGrid::new(1.0, 50)?;
    let ell = single_load(&grid, 6);
    let s = forward_single(&p, &ell, &grid)?;
    for k in 0..grid.n_steps() {
        let diss = p.dissipation(s.history.row(k));
        let omega = p.rhs(s.q.row(k), ell.row(k));
        let dirs = standard_test_dirs(s.rate.row(k), 50, &mut rng);
        min_dirs = min_dirs.min(dirs.len());
        worst_single = worst_single.max(vi_residual(&diss, p.viscosity(), &omega, s.rate.row(k), &dirs)?);
    }

    let p2 = two_instance(6)?;
    let ode = crate::two_field::TwoFieldOde { params: &p2 };
    let ell2 = two_load(&grid, 6);
    let s2 = forward_two(&p2, &ell2, &grid)?;
    for k in 0..grid.n_steps() {
        let diss = p2.dissipation(s2.history.row(k));
        let omega = crate::evi::NonsmoothOde::rhs(&ode, s2.d.row(k), ell2.row(k))?;
        let rate: Vec<f64> = s2.z.row(k).iter().map(|z| z.max(0.0) / p2.epsilon).collect();
        let dirs = standard_test_dirs(&rate, 50, &mut rng);
        min_dirs = min_dirs.min(dirs.len());
        worst_two = worst_two.max(vi_residual(&diss, p2.viscosity(), &omega, &rate, &dirs)?);
    }
    Ok(CheckOutcome::new(
        CHECK_NAMES[2],
        worst_single <= 1e-9 && worst_two <= 1e-9 && min_dirs >= 56,
        format!("single-field {worst_single:.3e}, two-field {worst_two:.3e}, {min_dirs} directions per step"),
    ))
}

pub fn check_lipschitz(seed: u64) -> Result<CheckOutcome> {
    let mut parts = Vec::new();
    let mut passed = true;
    let single = single_instance(4)?;
    let two = two_instance(4)?;
    let cases: [(&str, &FatigueMap, &[f64], &ViscositySpec, &crate::qp::QpOptions); 2] = [
        ("single-field", &single.fatigue, single.mass(), single.viscosity(), &single.opts.qp),
        ("two-field", &two.fatigue, two.mass(), two.viscosity(), &two.opts.qp),
    ];
    for (i, (label, fatigue, mass, visc, opts)) in cases.into_iter().enumerate() {
        let family = DissipationFamily {
            fatigue: *fatigue,
            mass: mass.to_vec(),
        };
        let stats = lipschitz_certificate(&family, visc, 1000, seed.wrapping_add(i as u64), opts)?;
        passed &= stats.holds;
        parts.push(format!("{label} max ratio {:.4} vs bound {:.4}", stats.max_ratio, stats.bound));
    }
    Ok(CheckOutcome::new(CHECK_NAMES[3], passed, parts.join("; ")))
}

fn fd_orders(errs: &[f64]) -> (f64, bool) {
    let min_order = errs
        .windows(2)
        .map(|w| (w[0] / w[1]).log10())
        .fold(f64::INFINITY, f64::min);
    // two-point estimates of a first-order error scatter by a few percent
    (min_order, min_order >= 0.95 && *errs.last().unwrap_or(&f64::INFINITY) <= 1e-3)
}

pub fn check_sensitivity(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5);
    let taus = [1e-1, 1e-2, 1e-3, 1e-4];
    let grid = TimeGrid::new(1.0, 40)?;

    let p = single_instance(5)?;
    let ell = single_load(&grid, 5);
    let s = forward_single(&p, &ell, &grid)?;
    let dell = random_control(&grid, 5, &mut rng);
    let sens = sensitivity_single(&p, &s, &ell, &dell)?;
    let mut errs = Vec::new();
    for tau in taus {
        let sp = forward_single(&p, &ell.add_scaled(tau, &dell), &grid)?;
        let fd = sp.q.add_scaled(-1.0, &s.q).scaled(1.0 / tau);
        errs.push(fd.max_abs_diff(&sens.dq) / sens.dq.max_abs());
    }
    let (order_single, ok_single) = fd_orders(&errs);
    let ok_single = ok_single && sens.is_biactive_free();
    let last_single = errs[3];

    let p2 = two_instance(4)?;
    let ell2 = two_load(&grid, 4);
    let s2 = forward_two(&p2, &ell2, &grid)?;
    let dell2 = random_control(&grid, 4, &mut rng);
    let sens2 = sensitivity_two(&p2, &s2, &ell2, &dell2)?;
    let mut errs = Vec::new();
    for tau in taus {
        let sp = forward_two(&p2, &ell2.add_scaled(tau, &dell2), &grid)?;
        let fd = sp.d.add_scaled(-1.0, &s2.d).scaled(1.0 / tau);
        errs.push(fd.max_abs_diff(&sens2.dd) / sens2.dd.max_abs());
    }
    let (order_two, ok_two) = fd_orders(&errs);
    let ok_two = ok_two && s2.biactive_total() == 0;
    Ok(CheckOutcome::new(
        CHECK_NAMES[4],
        ok_single && ok_two,
        format!(
            "single-field order {order_single:.4} final {last_single:.2e}; two-field order {order_two:.4} final {:.2e}",
            errs[3]
        ),
    ))
}

pub fn check_adjoint_duality(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6);
    let mut worst = 0.0_f64;
    let mut done = 0;
    let mut attempts = 0;
    while done < 10 && attempts < 100 {
        attempts += 1;
        let n = rng.random_range(1..=5);
        let steps = rng.random_range(10..=40);
        let p = two_instance(n)?;
        let grid = TimeGrid::new(1.0, steps)?;
        let ell = two_load(&grid, n).add_scaled(0.2, &random_control(&grid, n, &mut rng));
        let s = forward_two(&p, &ell, &grid)?;
        if s.min_abs_z() <= 1e-6 {
            continue;
        }
        let obj = TrackingObjective::new(
            random_control(&grid, n, &mut rng),
            random_control(&grid, n, &mut rng),
            rng.random_range(0.0..0.5),
            rng.random_range(0.01..0.5),
        )?;
        let metric = p.objective_metric(&grid);
        let bundle = adjoint_two(&p, &s, &ell, &obj)?;
        let partials = eval_partials(&obj, &metric, &s, &ell)?;
        let dell = random_control(&grid, n, &mut rng);
        let via_adj = bundle.directional(&metric, &dell);
        let via_sens = directional_derivative(&p, &s, &ell, &partials, &dell)?;
        worst = worst.max((via_adj - via_sens).abs() / via_sens.abs().max(1e-300));
        done += 1;
    }
    Ok(CheckOutcome::new(
        CHECK_NAMES[5],
        done == 10 && worst <= 1e-6,
        format!("worst relative gap {worst:.3e} over {done} triples"),
    ))
}

pub fn check_strong_stationarity(seed: u64) -> Result<CheckOutcome> {
    let opts = DescentOptions {
        grad_tol: 1e-6,
        seed,
        ..DescentOptions::default()
    };
    let grid = TimeGrid::new(1.0, 20)?;
    let scalar = scalar_two()?;
    let scalar_obj = TrackingObjective::new(
        Trajectory::control_from_fn(&grid, 1, |t, _| 3.0 * t),
        Trajectory::control_zeros(&grid, 1),
        0.2,
        0.1,
    )?;
    let scalar_ell0 = Trajectory::control_from_fn(&grid, 1, |_, _| 2.0);

    let four = two_instance(4)?;
    let reference = Trajectory::control_from_fn(&grid, 4, |t, i| 1.5 + t - 0.2 * i as f64);
    let s_ref = forward_two(&four, &reference, &grid)?;
    let four_obj = TrackingObjective::new(s_ref.phi.clone(), reference.map(|v| v + 0.3), 0.05, 0.1)?;
    let four_ell0 = Trajectory::control_from_fn(&grid, 4, |_, _| 1.0);

    let mut passed = true;
    let mut parts = Vec::new();
    for (label, p, obj, ell0) in [("scalar", &scalar, &scalar_obj, &scalar_ell0), ("4-node", &four, &four_obj, &four_ell0)] {
        let res = descend_two_field(p, obj, ell0, &grid, &opts)?;
        let r = &res.report;
        let resid = ["adjoint1", "adjoint2", "gradient"]
            .iter()
            .map(|k| r.residual(k).unwrap_or(f64::INFINITY))
            .fold(0.0_f64, f64::max);
        let off_biactive = r.sign_violations - r.biactive_sign_violations;
        let bstat = r.bstat_min.unwrap_or(f64::NEG_INFINITY);
        let ok = resid <= 1e-5 && off_biactive == 0 && bstat >= -1e-5 && r.gradient_norm.is_some_and(|g| g <= 1e-6);
        passed &= ok;
        parts.push(format!(
            "{label}: {} iters, residual {resid:.2e}, sign violations {off_biactive}, bstat {bstat:.2e}",
            res.iterations
        ));
    }
    Ok(CheckOutcome::new(CHECK_NAMES[6], passed, parts.join("; ")))
}

pub fn check_scalar_closed_form() -> Result<CheckOutcome> {
    let p = scalar_two()?;
    let mut worst = 0.0_f64;
    for steps in [10, 37, 100] {
        let grid = TimeGrid::new(1.0, steps)?;
        let ell = Trajectory::control_from_fn(&grid, 1, |_, _| 2.0);
        let s = forward_two(&p, &ell, &grid)?;
        for k in 0..=steps {
            let t = grid.time(k);
            worst = worst.max((s.d.row(k)[0] - 2.0 * t).abs() / (1.0 + 2.0 * t));
        }
    }
    Ok(CheckOutcome::new(
        CHECK_NAMES[7],
        worst <= 4.0 * f64::EPSILON,
        format!("max relative deviation from 2t: {worst:.3e}"),
    ))
}

pub fn check_irreversibility(seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9);
    let mut instances = 0;
    let mut violations = 0;
    for _ in 0..10 {
        let n = rng.random_range(1..=8);
        let steps = rng.random_range(10..=100);
        let grid = TimeGrid::new(1.0, steps)?;
        let ell = random_control(&grid, n, &mut rng).scaled(4.0);
        let s = forward_single(&single_instance(n)?, &ell, &grid)?;
        let s2 = forward_two(&two_instance(n)?, &ell, &grid)?;
        violations += decreases(&s.q) + decreases(&s2.d);
        instances += 2;
    }
    let grid = TimeGrid::new(1.0, 200)?;
    let s = forward_single(&single_instance(5)?, &Trajectory::control_from_fn(&grid, 5, |_, _| 20.0), &grid)?;
    violations += decreases(&s.q);
    instances += 1;
    Ok(CheckOutcome::new(
        CHECK_NAMES[8],
        violations == 0,
        format!("{violations} decreasing entries over {instances} trajectories"),
    ))
}

type Check = Box<dyn Fn() -> Result<CheckOutcome>>;

/// One pass over the whole suite. A check whose solver errors is reported
/// as failed with the error text.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    let checks: [(&'static str, Check); 9] = [
        (CHECK_NAMES[0], Box::new(move || check_evi_ode_equivalence(seed))),
        (CHECK_NAMES[1], Box::new(move || check_projection_oracle(seed))),
        (CHECK_NAMES[2], Box::new(move || check_vi_residual(seed))),
        (CHECK_NAMES[3], Box::new(move || check_lipschitz(seed))),
        (CHECK_NAMES[4], Box::new(move || check_sensitivity(seed))),
        (CHECK_NAMES[5], Box::new(move || check_adjoint_duality(seed))),
        (CHECK_NAMES[6], Box::new(move || check_strong_stationarity(seed))),
        (CHECK_NAMES[7], Box::new(check_scalar_closed_form)),
        (CHECK_NAMES[8], Box::new(move || check_irreversibility(seed))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| CheckOutcome::new(name, false, format!("error: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_oracle_on_diagonal_problem() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 4.0]));
        let z = enumerate_bound_qp(&a, &[2.0, -1.0, 1.0]).unwrap();
        assert_eq!(z, vec![1.0, 0.0, 0.25]);
    }

    #[test]
    fn decreases_is_exact() {
        let t = Trajectory::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0 - 1e-16]]).unwrap();
        assert_eq!(decreases(&t), 1);
    }

    #[test]
    fn full_suite_passes() {
        for outcome in run_all(7) {
            println!("{outcome}");
            assert!(outcome.passed, "{outcome}");
        }
    }
}
