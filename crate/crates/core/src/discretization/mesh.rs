use super::sparse::SparseOperator;
use crate::error::{EviError, Result};

/// Boundary treatment of the unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet: boundary nodes are eliminated (state space H¹₀).
    Dirichlet,
    /// Natural (Neumann) boundary: boundary nodes are unknowns (state space H¹).
    Natural,
}

/// Uniform grid on the interval `(0, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    n_nodes: usize,
    length: f64,
    bc: BoundaryCondition,
}

impl SpatialMesh {
    /// A natural mesh with a single node is accepted and treated as one cell
    /// covering the whole interval (spatially constant fields).
    pub fn new(n_nodes: usize, length: f64, bc: BoundaryCondition) -> Result<Self> {
        if n_nodes == 0 {
            return Err(EviError::Config("mesh needs at least one node".into()));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(EviError::Config(format!(
                "mesh length must be positive, got {length}"
            )));
        }
        Ok(SpatialMesh {
            n_nodes,
            length,
            bc,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn spacing(&self) -> f64 {
        match self.bc {
            BoundaryCondition::Dirichlet => self.length / (self.n_nodes + 1) as f64,
            BoundaryCondition::Natural if self.n_nodes == 1 => self.length,
            BoundaryCondition::Natural => self.length / (self.n_nodes - 1) as f64,
        }
    }

    /// Coordinates of the unknowns.
    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.spacing();
        match self.bc {
            BoundaryCondition::Dirichlet => (1..=self.n_nodes).map(|i| i as f64 * h).collect(),
            BoundaryCondition::Natural if self.n_nodes == 1 => vec![0.5 * self.length],
            BoundaryCondition::Natural => (0..self.n_nodes).map(|i| i as f64 * h).collect(),
        }
    }

    /// Diagonal of the lumped mass matrix.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        let n = self.n_nodes;
        let h = self.spacing();
        match self.bc {
            BoundaryCondition::Dirichlet => vec![h; n],
            BoundaryCondition::Natural if n == 1 => vec![self.length],
            BoundaryCondition::Natural => {
                let mut m = vec![h; n];
                m[0] = 0.5 * h;
                m[n - 1] = 0.5 * h;
                m
            }
        }
    }

    /// Weak-form stiffness `(∇u, ∇v)` of piecewise linear elements.
    pub fn stiffness(&self) -> SparseOperator {
        let n = self.n_nodes;
        let inv_h = 1.0 / self.spacing();
        let mut trip = Vec::with_capacity(3 * n);
        match self.bc {
            BoundaryCondition::Dirichlet => {
                for i in 0..n {
                    trip.push((i, i, 2.0 * inv_h));
                    if i + 1 < n {
                        trip.push((i, i + 1, -inv_h));
                        trip.push((i + 1, i, -inv_h));
                    }
                }
            }
            BoundaryCondition::Natural if n == 1 => trip.push((0, 0, 0.0)),
            BoundaryCondition::Natural => {
                for e in 0..n - 1 {
                    trip.push((e, e, inv_h));
                    trip.push((e + 1, e + 1, inv_h));
                    trip.push((e, e + 1, -inv_h));
                    trip.push((e + 1, e, -inv_h));
                }
            }
        }
        SparseOperator::from_triplets(n, trip)
    }

    pub fn lumped_mass(&self) -> SparseOperator {
        SparseOperator::diagonal(&self.mass_diagonal())
    }
}

pub fn build_mesh(n_nodes: usize, length: f64, bc: BoundaryCondition) -> Result<SpatialMesh> {
    SpatialMesh::new(n_nodes, length, bc)
}

pub fn stiffness(mesh: &SpatialMesh) -> SparseOperator {
    mesh.stiffness()
}

pub fn lumped_mass(mesh: &SpatialMesh) -> SparseOperator {
    mesh.lumped_mass()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    #[test]
    fn spacing_examples() {
        let m = build_mesh(3, 1.0, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(m.spacing(), 0.25);
        let m = build_mesh(2, 1.0, BoundaryCondition::Natural).unwrap();
        assert_eq!(m.spacing(), 1.0);
        assert!(matches!(
            build_mesh(0, 1.0, BoundaryCondition::Dirichlet),
            Err(EviError::Config(_))
        ));
        assert!(build_mesh(2, 0.0, BoundaryCondition::Natural).is_err());
    }

    #[test]
    fn stiffness_examples() {
        let k = build_mesh(1, 1.0, BoundaryCondition::Dirichlet).unwrap().stiffness();
        assert_eq!(k.to_dense(), DMatrix::from_element(1, 1, 4.0));

        let k = build_mesh(3, 1.0, BoundaryCondition::Dirichlet).unwrap().stiffness();
        let expected =
            DMatrix::from_row_slice(3, 3, &[8.0, -4.0, 0.0, -4.0, 8.0, -4.0, 0.0, -4.0, 8.0]);
        assert_eq!(k.to_dense(), expected);

        let k = build_mesh(2, 1.0, BoundaryCondition::Natural).unwrap().stiffness();
        assert_eq!(k.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!(k.apply(&[3.0, 3.0]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lumped_mass_examples() {
        let m = build_mesh(3, 1.0, BoundaryCondition::Dirichlet).unwrap().lumped_mass();
        assert_eq!(m.diag(), vec![0.25; 3]);
        let m = build_mesh(2, 1.0, BoundaryCondition::Natural).unwrap().lumped_mass();
        assert_eq!(m.diag(), vec![0.5; 2]);

        for n in 1..9 {
            let d = build_mesh(n, 2.5, BoundaryCondition::Dirichlet).unwrap();
            let total: f64 = d.mass_diagonal().iter().sum();
            assert!((total - 2.5 * n as f64 / (n + 1) as f64).abs() < 1e-14);
            let nat = build_mesh(n, 2.5, BoundaryCondition::Natural).unwrap();
            let total: f64 = nat.mass_diagonal().iter().sum();
            assert!((total - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_stiffness_spectrum_matches_closed_form() {
        for n in 1..=6 {
            let mesh = build_mesh(n, 1.0, BoundaryCondition::Dirichlet).unwrap();
            let h = mesh.spacing();
            let eig = SymmetricEigen::new(mesh.stiffness().to_dense());
            let mut got: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            got.sort_by(f64::total_cmp);
            let mut want: Vec<f64> = (1..=n)
                .map(|k| (2.0 / h) * (1.0 - (k as f64 * std::f64::consts::PI / (n + 1) as f64).cos()))
                .collect();
            want.sort_by(f64::total_cmp);
            for (g, w) in got.iter().zip(&want) {
                assert!(*g > 0.0);
                assert!((g - w).abs() < 1e-10 * w.max(1.0), "n={n}: {g} vs {w}");
            }
        }
    }
}
