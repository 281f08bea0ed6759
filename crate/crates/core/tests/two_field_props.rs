#![allow(clippy::needless_range_loop)]

use hevi_core::discretization::{build_mesh, BoundaryCondition};
use hevi_core::evi::integrate_ode;
use hevi_core::history::{FatigueMap, VolterraKernel};
use hevi_core::objective::{eval_objective, eval_partials, TrackingObjective};
use hevi_core::options::SolverOptions;
use hevi_core::trajectory::{TimeGrid, Trajectory};
use hevi_core::two_field::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(n: usize) -> TwoFieldParams {
    let mesh = build_mesh(n, 1.0, BoundaryCondition::Natural).unwrap();
    TwoFieldParams::new(
        0.5,
        2.0,
        0.5,
        FatigueMap::sigmoid(1.0, 0.2, 2.0),
        VolterraKernel::exponential(1.0, 0.5),
        mesh,
    )
    .unwrap()
}

fn load(grid: &TimeGrid, n: usize) -> Trajectory {
    Trajectory::control_from_fn(grid, n, |t, i| {
        let x = i as f64 / (n.max(2) - 1) as f64;
        if x < 0.5 {
            1.6 + 0.8 * t + 0.3 * x
        } else {
            0.2 - 0.3 * t
        }
    })
}

fn random_control(grid: &TimeGrid, n: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut t = Trajectory::control_zeros(grid, n);
    for k in 0..t.len() {
        t.row_mut(k).iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    t
}

#[test]
fn matches_generic_ode_integration() {
    let p = params(5);
    let grid = TimeGrid::new(1.0, 80).unwrap();
    let ell = load(&grid, 5);
    let s = forward_two(&p, &ell, &grid).unwrap();
    let y = integrate_ode(&TwoFieldOde { params: &p }, &ell, &grid, &SolverOptions::default()).unwrap();
    assert!(s.d.max_abs_diff(&y) <= 1e-10, "{}", s.d.max_abs_diff(&y));
    assert!(s.d.max_abs() > 0.1);
}

#[test]
fn elliptic_consistency_and_irreversibility() {
    let p = params(6);
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let ell = load(&grid, 6);
    let s = forward_two(&p, &ell, &grid).unwrap();
    let a = p.phi_operator();
    for k in 0..40 {
        let lhs = a.apply(s.phi.row(k));
        for i in 0..6 {
            let rhs = p.mass()[i] * (p.beta * s.d.row(k)[i] + ell.row(k)[i]);
            assert!((lhs[i] - rhs).abs() < 1e-10);
            assert!(s.d.row(k + 1)[i] >= s.d.row(k)[i]);
        }
    }
}

#[test]
fn step_halving_converges_at_first_order() {
    let p = params(4);
    let mut errs = Vec::new();
    let fine = TimeGrid::new(1.0, 1280).unwrap();
    let reference = forward_two(&p, &load(&fine, 4), &fine).unwrap();
    for n in [40, 80, 160] {
        let g = TimeGrid::new(1.0, n).unwrap();
        let s = forward_two(&p, &load(&g, 4), &g).unwrap();
        errs.push(s.d.max_abs_diff(&reference.d.subsampled(1280 / n)));
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.9, "{errs:?}");
    }
}

#[test]
fn sensitivity_matches_finite_differences() {
    let p = params(4);
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let ell = load(&grid, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dell = random_control(&grid, 4, &mut rng);
    let s = forward_two(&p, &ell, &grid).unwrap();
    assert!(s.min_abs_z() > 1e-3);
    let sens = sensitivity_two(&p, &s, &ell, &dell).unwrap();
    let mut errs = Vec::new();
    for tau in [1e-1, 1e-2, 1e-3, 1e-4] {
        let sp = forward_two(&p, &ell.add_scaled(tau, &dell), &grid).unwrap();
        let fd = sp.d.add_scaled(-1.0, &s.d).scaled(1.0 / tau);
        errs.push(fd.max_abs_diff(&sens.dd) / sens.dd.max_abs());
    }
    // first order in τ, up to the slack of a two-point order estimate
    for w in errs.windows(2) {
        assert!((w[0] / w[1]).log10() >= 0.95, "{errs:?}");
    }
    assert!(*errs.last().unwrap() <= 1e-3);
}

#[test]
fn adjoint_gradient_matches_sensitivities() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 3, 4] {
        let p = params(n);
        let grid = TimeGrid::new(1.0, 30).unwrap();
        let ell = load(&grid, n);
        let s = forward_two(&p, &ell, &grid).unwrap();
        assert_eq!(s.biactive_total(), 0);
        let obj = TrackingObjective::new(
            random_control(&grid, n, &mut rng),
            random_control(&grid, n, &mut rng),
            0.3,
            0.05,
        )
        .unwrap();
        let metric = p.objective_metric(&grid);
        let b = adjoint_two(&p, &s, &ell, &obj).unwrap();
        let partials = eval_partials(&obj, &metric, &s, &ell).unwrap();
        for _ in 0..3 {
            let dell = random_control(&grid, n, &mut rng);
            let via_adj = b.directional(&metric, &dell);
            let via_sens = directional_derivative(&p, &s, &ell, &partials, &dell).unwrap();
            let rel = (via_adj - via_sens).abs() / via_sens.abs().max(1e-12);
            assert!(rel <= 1e-10, "{via_adj} vs {via_sens}");
        }
        let rep = stationarity_residual_two(&p, &s, &ell, &b, &obj).unwrap();
        assert!(rep.residual("adjoint1").unwrap() < 1e-9);
        assert!(rep.residual("adjoint2").unwrap() < 1e-9);
        assert_eq!(rep.sign_violations, 0);
    }
}

#[test]
fn scalar_gradient_matches_central_differences() {
    let mesh = build_mesh(1, 1.0, BoundaryCondition::Natural).unwrap();
    let p = TwoFieldParams::new(1.0, 1.0, 0.5, FatigueMap::constant(1.0), VolterraKernel::none(), mesh).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let ell = Trajectory::control_from_fn(&grid, 1, |t, _| 2.0 + t);
    let target = Trajectory::control_from_fn(&grid, 1, |t, _| 3.0 * t);
    let obj = TrackingObjective::new(target, Trajectory::control_zeros(&grid, 1), 0.2, 0.1).unwrap();
    let metric = p.objective_metric(&grid);
    let s = forward_two(&p, &ell, &grid).unwrap();
    let b = adjoint_two(&p, &s, &ell, &obj).unwrap();
    let h = 1e-5;
    for k in 0..20 {
        let mut up = ell.clone();
        up.row_mut(k)[0] += h;
        let mut dn = ell.clone();
        dn.row_mut(k)[0] -= h;
        let jp = eval_objective(&obj, &metric, &forward_two(&p, &up, &grid).unwrap(), &up).unwrap();
        let jm = eval_objective(&obj, &metric, &forward_two(&p, &dn, &grid).unwrap(), &dn).unwrap();
        let fd = (jp - jm) / (2.0 * h);
        let g = b.gradient.row(k)[0] * metric.dt * metric.mass[0];
        assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-8), "k={k}: {fd} vs {g}");
    }
}
