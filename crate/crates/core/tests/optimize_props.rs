use hevi_core::discretization::{build_mesh, BoundaryCondition};
use hevi_core::history::{FatigueMap, VolterraKernel};
use hevi_core::objective::{eval_objective, TrackingObjective};
use hevi_core::optimize::*;
use hevi_core::single_field::{forward_single, SingleFieldParams};
use hevi_core::trajectory::{TimeGrid, Trajectory};
use hevi_core::two_field::{forward_two, TwoFieldParams};

fn scalar_two() -> TwoFieldParams {
    let mesh = build_mesh(1, 1.0, BoundaryCondition::Natural).unwrap();
    TwoFieldParams::new(1.0, 1.0, 0.5, FatigueMap::constant(1.0), VolterraKernel::none(), mesh).unwrap()
}

fn four_node_two() -> TwoFieldParams {
    let mesh = build_mesh(4, 1.0, BoundaryCondition::Natural).unwrap();
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

fn check_optimized(p: &TwoFieldParams, obj: &TrackingObjective, ell0: &Trajectory, grid: &TimeGrid) {
    let res = descend_two_field(p, obj, ell0, grid, &DescentOptions::default()).unwrap();
    for w in res.j_history.windows(2) {
        assert!(w[1] < w[0]);
    }
    let r = &res.report;
    println!("{r}\niterations {}", res.iterations);
    assert!(r.gradient_norm.unwrap() <= 1e-6);
    for name in ["adjoint1", "adjoint2", "gradient"] {
        assert!(r.residual(name).unwrap() <= 1e-5, "{name}");
    }
    assert_eq!(r.sign_violations - r.biactive_sign_violations, 0);
    assert!(r.bstat_min.unwrap() >= -1e-5);
}

#[test]
fn scalar_two_field_descent_reaches_stationarity() {
    let p = scalar_two();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let target = Trajectory::control_from_fn(&grid, 1, |t, _| 3.0 * t);
    let obj = TrackingObjective::new(target, Trajectory::control_zeros(&grid, 1), 0.2, 0.1).unwrap();
    let ell0 = Trajectory::control_from_fn(&grid, 1, |_, _| 2.0);
    check_optimized(&p, &obj, &ell0, &grid);
}

#[test]
fn four_node_two_field_descent_reaches_stationarity() {
    let p = four_node_two();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let reference = Trajectory::control_from_fn(&grid, 4, |t, i| 1.5 + t - 0.2 * i as f64);
    let s = forward_two(&p, &reference, &grid).unwrap();
    let obj = TrackingObjective::new(s.phi.clone(), reference.map(|v| v + 0.3), 0.05, 0.1).unwrap();
    let ell0 = Trajectory::control_from_fn(&grid, 4, |_, _| 1.0);
    check_optimized(&p, &obj, &ell0, &grid);
}

#[test]
fn consistent_start_is_already_stationary() {
    let p = four_node_two();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let ell = Trajectory::control_from_fn(&grid, 4, |t, i| 1.0 + t + 0.1 * i as f64);
    let s = forward_two(&p, &ell, &grid).unwrap();
    let obj = TrackingObjective::new(s.phi.clone(), ell.clone(), 0.0, 0.1).unwrap();
    let res = descend_two_field(&p, &obj, &ell, &grid, &DescentOptions::default()).unwrap();
    assert!(res.iterations <= 1);
    assert_eq!(res.j_history[0], 0.0);
    assert!(res.report.gradient_norm.unwrap() <= 1e-6);
}

fn scalar_single() -> SingleFieldParams {
    let mesh = build_mesh(1, 1.0, BoundaryCondition::Dirichlet).unwrap();
    SingleFieldParams::new(0.5, 0.5, FatigueMap::sigmoid(1.0, 0.2, 2.0), VolterraKernel::exponential(1.0, 0.5), mesh)
        .unwrap()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

#[test]
fn single_direction_matches_golden_section() {
    let p = scalar_single();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let target = Trajectory::state_zeros(&grid, 1).map(|_| 0.4);
    let obj = TrackingObjective::new(target, Trajectory::control_zeros(&grid, 1), 0.0, 0.05).unwrap();
    let ell0 = Trajectory::control_from_fn(&grid, 1, |_, _| 2.0);
    let dir = Trajectory::control_from_fn(&grid, 1, |t, _| 1.0 + t);
    let metric = p.objective_metric(&grid);
    let j = |s: f64| {
        let ell = ell0.add_scaled(s, &dir);
        eval_objective(&obj, &metric, &forward_single(&p, &ell, &grid).unwrap(), &ell).unwrap()
    };
    let s_star = golden_section(j, -5.0, 5.0, 1e-9);
    let opts = DescentOptions {
        grad_tol: 1e-10,
        ..DescentOptions::default()
    };
    let res = descend_single_field(&p, &obj, &ell0, &grid, &opts, std::slice::from_ref(&dir)).unwrap();
    let s_found = res.ell_star.add_scaled(-1.0, &ell0).row(0)[0] / dir.row(0)[0];
    assert!((s_found - s_star).abs() <= 1e-4, "{s_found} vs {s_star}");
    for w in res.j_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn empty_dictionary_returns_start() {
    let p = scalar_single();
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let obj = TrackingObjective::zero_targets(&grid, 1, 0.0, 0.1).unwrap();
    let ell0 = Trajectory::control_from_fn(&grid, 1, |t, _| t);
    let res = descend_single_field(&p, &obj, &ell0, &grid, &DescentOptions::default(), &[]).unwrap();
    assert_eq!(res.ell_star, ell0);
    assert_eq!(res.iterations, 0);
    assert_eq!(res.report.bstat_min, Some(f64::INFINITY));
    assert!(res.report.directional_only);
}
