use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::mesh::SpatialMesh;
use super::sparse::SparseOperator;
use crate::error::{EviError, Result};

/// Relative residual tolerance of the iterative SPD solver.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// Below this dimension SPD systems are factorized densely.
pub const DENSE_CUTOFF: usize = 64;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Clone)]
enum Backend {
    Dense(Cholesky<f64, Dyn>),
    Iterative,
}

/// Reusable solver for `A x = b` with `A` symmetric positive definite.
///
/// Small systems are Cholesky-factorized once; larger ones run Jacobi
/// preconditioned conjugate gradients on every call.
#[derive(Clone)]
pub struct SpdSolver {
    op: SparseOperator,
    backend: Backend,
    tol: f64,
    max_iter: usize,
}

impl SpdSolver {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        Self::with_tolerance(op, DEFAULT_SOLVER_TOL)
    }

    pub fn with_tolerance(op: &SparseOperator, tol: f64) -> Result<Self> {
        let backend = if op.dim() < DENSE_CUTOFF {
            let chol = Cholesky::new(op.to_dense()).ok_or_else(|| {
                EviError::Domain("operator is not symmetric positive definite".into())
            })?;
            Backend::Dense(chol)
        } else {
            if op.diag().iter().any(|d| !(*d > 0.0)) {
                return Err(EviError::Domain(
                    "operator has a non-positive diagonal entry".into(),
                ));
            }
            Backend::Iterative
        };
        Ok(SpdSolver {
            op: op.clone(),
            backend,
            tol,
            max_iter: 10 * op.dim().max(10),
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.op.dim() {
            return Err(EviError::dim("solve_spd", self.op.dim(), rhs.len()));
        }
        match &self.backend {
            Backend::Dense(chol) => {
                let x = chol.solve(&DVector::from_column_slice(rhs));
                Ok(x.as_slice().to_vec())
            }
            Backend::Iterative => conjugate_gradient(&self.op, rhs, self.tol, self.max_iter),
        }
    }
}

/// Solves `op · x = rhs` for a symmetric positive definite `op`.
pub fn solve_spd(op: &SparseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    SpdSolver::new(op)?.solve(rhs)
}

/// Jacobi-preconditioned conjugate gradients, stopping at
/// `‖op·x − rhs‖₂ ≤ tol·‖rhs‖₂`.
pub fn conjugate_gradient(
    op: &SparseOperator,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = op.dim();
    let rhs_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op.diag().iter().map(|d| 1.0 / d).collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(EviError::Domain(
                "conjugate gradients met a non-positive curvature direction".into(),
            ));
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        if norm2(&r) <= tol * rhs_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(EviError::NonConvergence {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: norm2(&r) / rhs_norm,
    })
}

/// Inner products on nodal vectors.
///
/// Vectors in `Y` are nodal values; vectors in `Y*` are load vectors, paired
/// with nodal values through the plain Euclidean dot product.
#[derive(Debug, Clone)]
pub enum InnerProduct {
    /// `vᵀ M v` with the lumped mass.
    L2Lumped(SparseOperator),
    /// `vᵀ K v` with a stiffness operator.
    H1Seminorm(SparseOperator),
    /// `vᵀ W v` for an arbitrary SPD weight, e.g. the viscosity.
    Energy(SparseOperator),
    /// `vᵀ W⁻¹ v`: the dual norm of [`InnerProduct::Energy`].
    VInverse(SparseOperator),
}

impl InnerProduct {
    pub fn l2_lumped(mesh: &SpatialMesh) -> Self {
        InnerProduct::L2Lumped(mesh.lumped_mass())
    }

    pub fn h1_seminorm(mesh: &SpatialMesh) -> Self {
        InnerProduct::H1Seminorm(mesh.stiffness())
    }

    pub fn weight(&self) -> &SparseOperator {
        match self {
            InnerProduct::L2Lumped(w)
            | InnerProduct::H1Seminorm(w)
            | InnerProduct::Energy(w)
            | InnerProduct::VInverse(w) => w,
        }
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let w = self.weight();
        if u.len() != w.dim() || v.len() != w.dim() {
            return Err(EviError::dim("inner product", w.dim(), u.len().max(v.len())));
        }
        match self {
            InnerProduct::VInverse(w) => Ok(dot(u, &solve_spd(w, v)?)),
            _ => Ok(dot(u, &w.apply(v))),
        }
    }

    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        Ok(self.inner(v, v)?.max(0.0).sqrt())
    }
}

pub fn norm(spec: &InnerProduct, v: &[f64]) -> Result<f64> {
    spec.norm(v)
}

/// Smallest generalized eigenvalue `min xᵀAx / xᵀBx` for symmetric `A` and SPD `B`.
pub fn min_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let (lo, _) = generalized_eigen_range(a, b)?;
    Ok(lo)
}

/// Extreme generalized eigenvalues of the pencil `(A, B)`.
pub fn generalized_eigen_range(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, f64)> {
    let chol = Cholesky::new(b.clone())
        .ok_or_else(|| EviError::Domain("metric operator is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| EviError::Domain("singular Cholesky factor".into()))?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(c);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}
