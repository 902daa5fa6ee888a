//! Numerical library for a two-obstacle gradient flow of the clamped-plate
//! energy: per-step box-constrained convex minimization solved by a
//! primal-dual active set method, a penalty-regularized variant, trajectory
//! interpolants, and residual-measure diagnostics, plus refinement studies
//! and a batch CLI.

pub mod certify;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod obstacles;
pub mod oracle;
pub mod presets;
pub mod stepper;
pub mod studies;

pub use error::{ConfigError, FlowError, GridError, ObstacleError, OracleError, SolveError};
pub use flow::{run_flow, DissipationReport, Trajectory};
pub use grid::{
    assemble_biharmonic, assemble_laplacian, build_grid, energy, inner, norm, DiscreteOperator,
    Grid,
};
pub use obstacles::{sample_obstacles, ObstaclePair, ObstacleSource, PenaltyParams};
pub use oracle::{enumerate_step, NodeState, OracleSolution};
pub use stepper::{
    beta, classify_contacts, gamma, solve_constrained, solve_penalized, StepMethod, StepOptions,
    StepResult,
};
