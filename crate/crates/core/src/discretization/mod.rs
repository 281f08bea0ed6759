//! Finite-difference scaffolding on a 1D interval: meshes, stiffness and
//! lumped mass operators, inner products and SPD solves.

pub mod linalg;
pub mod mesh;
pub mod sparse;

pub use linalg::{norm, solve_spd, InnerProduct, SpdSolver, DEFAULT_SOLVER_TOL};
pub use mesh::{build_mesh, lumped_mass, stiffness, BoundaryCondition, SpatialMesh};
pub use sparse::SparseOperator;
