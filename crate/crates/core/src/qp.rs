//! Strictly convex quadratic programs with sign constraints,
//!
//! ```text
//!     minimize    ½ xᵀ A x − bᵀ x
//!     subject to  xᵢ ≥ 0   for i with Bound::NonNegative
//!                 xᵢ = 0   for i with Bound::Zero
//! ```
//!
//! solved by a primal-dual active set (PDAS) iteration. PDAS terminates
//! finitely when `A` is an M-matrix (stiffness and mass operators are); for
//! general SPD `A` it may cycle, in which case a primal active-set method
//! takes over.

use std::collections::HashSet;

use crate::discretization::linalg::{dot, max_abs};
use crate::discretization::{SparseOperator, SpdSolver};
use crate::error::{EviError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    NonNegative,
    Zero,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub max_pdas_iter: usize,
    pub max_fallback_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_pdas_iter: 100,
            max_fallback_iter: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// `A x − b`; zero on every component that is not held at zero.
    pub multiplier: Vec<f64>,
    /// Components held at zero (constrained and `xᵢ = 0`).
    pub active: Vec<bool>,
    pub iterations: usize,
    pub used_fallback: bool,
}

/// Solves with the reduced system on the components where `fixed` is false.
fn solve_reduced(a: &SparseOperator, b: &[f64], fixed: &[bool]) -> Result<Vec<f64>> {
    let free: Vec<usize> = (0..b.len()).filter(|&i| !fixed[i]).collect();
    let mut x = vec![0.0; b.len()];
    if free.is_empty() {
        return Ok(x);
    }
    let sub = a.principal_submatrix(&free);
    let rhs: Vec<f64> = free.iter().map(|&i| b[i]).collect();
    let sol = SpdSolver::new(&sub)?.solve(&rhs)?;
    for (&i, v) in free.iter().zip(sol) {
        x[i] = v;
    }
    Ok(x)
}

fn finish(a: &SparseOperator, b: &[f64], x: Vec<f64>, fixed: &[bool], iterations: usize, used_fallback: bool) -> QpSolution {
    let ax = a.apply(&x);
    let multiplier: Vec<f64> = (0..b.len())
        .map(|i| if fixed[i] { ax[i] - b[i] } else { 0.0 })
        .collect();
    QpSolution {
        x,
        multiplier,
        active: fixed.to_vec(),
        iterations,
        used_fallback,
    }
}

/// Minimizes `½ xᵀAx − bᵀx` under per-component sign constraints.
///
/// `warm_active` seeds the PDAS active set (entries for non-`NonNegative`
/// components are ignored). Ties (`xᵢ = 0` with zero multiplier) are
/// classified as active.
pub fn solve_bound_qp(
    a: &SparseOperator,
    b: &[f64],
    bounds: &[Bound],
    warm_active: Option<&[bool]>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = b.len();
    if a.dim() != n {
        return Err(EviError::dim("bound QP operator", n, a.dim()));
    }
    if bounds.len() != n {
        return Err(EviError::dim("bound QP bounds", n, bounds.len()));
    }
    let mut fixed: Vec<bool> = (0..n)
        .map(|i| match bounds[i] {
            Bound::Free => false,
            Bound::Zero => true,
            Bound::NonNegative => match warm_active {
                Some(w) if w.len() == n => w[i],
                _ => b[i] <= 0.0,
            },
        })
        .collect();

    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    for iter in 1..=opts.max_pdas_iter {
        let x = solve_reduced(a, b, &fixed)?;
        let ax = a.apply(&x);
        let next: Vec<bool> = (0..n)
            .map(|i| match bounds[i] {
                Bound::Free => false,
                Bound::Zero => true,
                Bound::NonNegative => {
                    if fixed[i] {
                        ax[i] - b[i] >= 0.0
                    } else {
                        x[i] <= 0.0
                    }
                }
            })
            .collect();
        if next == fixed {
            return Ok(finish(a, b, x, &fixed, iter, false));
        }
        if !seen.insert(fixed.clone()) {
            break;
        }
        fixed = next;
    }
    primal_active_set(a, b, bounds, opts)
}

/// Feasible-point active-set method; each iteration either reduces the
/// objective or adds a blocking constraint.
fn primal_active_set(
    a: &SparseOperator,
    b: &[f64],
    bounds: &[Bound],
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = b.len();
    let tol = 1e-12 * max_abs(b).max(1.0);
    let mut working: Vec<bool> = bounds.iter().map(|&bd| bd != Bound::Free).collect();
    let mut x = solve_reduced(a, b, &working)?;
    for iter in 1..=opts.max_fallback_iter {
        let xhat = solve_reduced(a, b, &working)?;
        let blocking = (0..n)
            .filter(|&i| !working[i] && bounds[i] == Bound::NonNegative && xhat[i] < 0.0)
            .map(|i| {
                let p = xhat[i] - x[i];
                (i, if p < 0.0 { (-x[i] / p).max(0.0) } else { 0.0 })
            })
            .min_by(|l, r| l.1.total_cmp(&r.1));
        match blocking {
            None => {
                x = xhat;
                let ax = a.apply(&x);
                let drop = (0..n)
                    .filter(|&i| working[i] && bounds[i] == Bound::NonNegative)
                    .map(|i| (i, ax[i] - b[i]))
                    .min_by(|l, r| l.1.total_cmp(&r.1));
                match drop {
                    Some((i, lam)) if lam < -tol => working[i] = false,
                    _ => return Ok(finish(a, b, x, &working, iter, true)),
                }
            }
            Some((i, step)) => {
                for k in 0..n {
                    x[k] += step * (xhat[k] - x[k]);
                }
                x[i] = 0.0;
                working[i] = true;
            }
        }
    }
    let ax = a.apply(&x);
    let residual = (0..n)
        .filter(|&i| working[i] && bounds[i] == Bound::NonNegative)
        .map(|i| (b[i] - ax[i]).max(0.0))
        .fold(0.0, f64::max);
    Err(EviError::NonConvergence {
        solver: "active-set QP",
        iterations: opts.max_fallback_iter,
        residual,
    })
}

/// Objective value `½ xᵀAx − bᵀx`.
pub fn qp_objective(a: &SparseOperator, b: &[f64], x: &[f64]) -> f64 {
    0.5 * a.quad_form(x) - dot(b, x)
}
