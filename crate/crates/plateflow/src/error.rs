//! Error types shared across the library.

use thiserror::Error;

/// Errors from grid construction and grid-sized vector operations.
#[derive(Debug, Clone, Error)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("resolution must be at least 3 nodes per axis, got {0}")]
    ResolutionTooSmall(usize),
    #[error("extent must be strictly positive, got {0}")]
    NonPositiveExtent(f64),
    #[error("expected {expected} per-axis values, got {got}")]
    AxisCountMismatch { expected: usize, got: usize },
    #[error("grid function has length {got}, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Errors from obstacle validation and manipulation.
#[derive(Debug, Clone, Error)]
pub enum ObstacleError {
    /// Lower obstacle exceeds the upper one somewhere in the interior.
    #[error("obstacle order violated at node {node}: lower {lower} > upper {upper}")]
    OrderViolation { node: usize, lower: f64, upper: f64 },
    /// The boundary-ring sign condition (lower < 0 < upper) fails.
    #[error("boundary sign condition violated at ring node {node}: lower {lower}, upper {upper}")]
    BoundarySign { node: usize, lower: f64, upper: f64 },
    /// Supplied values do not match the grid shape.
    #[error("obstacle values have length {got}, expected {expected} (full grid including boundary ring)")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("obstacle shift must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
    #[error("penalty strength must be strictly positive, got {0}")]
    NonPositiveRho(f64),
    #[error("obstacle value at node {node} is not finite")]
    NonFinite { node: usize },
}

/// Errors from the per-step solvers.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found before giving up.
        best: Vec<f64>,
    },
    #[error("infeasible step input: {0}")]
    Infeasible(#[from] ObstacleError),
    #[error("previous state leaves the box at node {node}: {value} not in [{lower}, {upper}]")]
    StateOutsideBox {
        node: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("penalized solve requires penalty parameters")]
    MissingPenalty,
    #[error("linear system is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Errors from the brute-force oracle.
#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error("oracle enumeration supports at most {max} nodes, got {got}")]
    TooLarge { got: usize, max: usize },
    /// A strictly convex box QP always has a KKT point; reaching this
    /// indicates a bug in the caller-supplied operator or in the oracle.
    #[error("no labeling passed the feasibility and sign checks")]
    NoCandidate,
    #[error("singular reduced system in labeling {labeling}")]
    SingularSystem { labeling: usize },
}

/// Errors from running a full trajectory.
#[derive(Debug, Clone, Error)]
pub enum FlowError {
    #[error("step {index} failed: {source}")]
    Step {
        index: usize,
        #[source]
        source: SolveError,
    },
    #[error("time horizon must be strictly positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
}

/// Errors from configuration parsing and instance assembly.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("obstacle file {path}: {message}")]
    ObstacleFile { path: String, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
}
