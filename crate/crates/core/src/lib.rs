//! Simulation and optimal control of viscous damage evolutions with
//! fatigue-type history dependence, discretized in 1D.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod discretization;
pub mod error;
pub mod evi;
pub mod history;
pub mod objective;
pub mod optimize;
pub mod options;
pub mod qp;
pub mod single_field;
pub mod stationarity;
pub mod trajectory;
pub mod two_field;
pub mod verify;

pub use discretization::{build_mesh, BoundaryCondition, SparseOperator, SpatialMesh};
pub use error::{EviError, Result};
pub use history::{FatigueKind, FatigueMap, KernelKind, VolterraKernel};
pub use objective::{eval_objective, eval_partials, TrackingObjective};
pub use optimize::{descend_single_field, descend_two_field, directional_derivative_single, DescentOptions, DescentResult};
pub use options::{IntegratorMode, SolverOptions};
pub use single_field::{SingleFieldParams, SingleFieldState};
pub use stationarity::StationarityReport;
pub use trajectory::{TimeGrid, Trajectory};
pub use two_field::{AdjointBundle, TwoFieldParams, TwoFieldState};
pub use verify::CheckOutcome;
