//! Explicit-implicit model predictive control.
//!
//! A ReLU network predicts the full horizon plan, a primal active-set solver
//! repairs it into a feasible plan, and a duality-gap certificate decides when
//! the plan is good enough to stop early.

pub mod active_set;
pub mod batch_qp;
pub mod certificates;
pub mod datagen;
pub mod error;
pub mod formats;
pub mod linalg;
pub mod neural;
pub mod planner;
pub mod polytope;
pub mod systems;

pub use active_set::{solve, Solution, SolveStats, SolveStatus, SolverOptions, Termination};
pub use batch_qp::{assemble_batch, BatchDims, BatchQp, PrimalDualPoint};
pub use certificates::{certify, Certificate};
pub use error::{Error, Result};
pub use datagen::{generate_data, SampleRecord, WalkConfig};
pub use linalg::{Mat, Vector};
pub use neural::{MlpModel, TrainConfig};
pub use planner::{closed_loop_simulate, explicit_implicit_plan, InitMode, PlanResult};
pub use polytope::Polytope;
pub use systems::{build_benchmark, Benchmark, ContinuousLti, DiscreteLti, LtiProblemSpec};
