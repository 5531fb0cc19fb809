use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integration drift {drift:.3e} exceeds tolerance {tol:.1e}; raise the step count")]
    DriftExceeded { drift: f64, tol: f64 },
    #[error("endpoint is degenerate: det(M - I) = {det:.3e}")]
    DegenerateEndpoint { det: f64 },
    #[error("crossing at t = {time} stays non-regular after {attempts} perturbations")]
    NonRegularCrossing { time: f64, attempts: u32 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("generator has a nontrivial fixed subspace of dimension {dim}")]
    NontrivialFixedSubspace { dim: usize },
    #[error("zero suspected on the box boundary (margin {margin:.3e})")]
    BoundaryZeroSuspected { margin: f64 },
    #[error("root found within {distance:.3e} of the box boundary")]
    RootNearBoundary { distance: f64 },
    #[error("independent regular values give degrees {first} and {second}")]
    DegreeUnstable { first: i64, second: i64 },
    #[error("subspace is not Lagrangian (defect {defect:.3e})")]
    NotLagrangian { defect: f64 },
    #[error("subspaces are not complementary (smallest singular value {sigma:.3e})")]
    NotComplementary { sigma: f64 },
    #[error("projection to the diagonal is not invertible on the box of radius {radius}")]
    ProjectionNotInvertible { radius: f64 },
    #[error("1-form is not closed (loop defect {defect:.3e})")]
    FormNotClosed { defect: f64 },
    #[error("function is not invariant (defect {defect:.3e})")]
    NotInvariant { defect: f64 },
    #[error("epsilon {epsilon:.3e} is inadmissible: {reason}")]
    EpsilonInadmissible { epsilon: f64, reason: String },
    #[error("critical point suspected on the box boundary (gradient margin {margin:.3e})")]
    CriticalPointOnBoundarySuspected { margin: f64 },
    #[error("homology did not stabilize after {doublings} doublings from r = {r0}")]
    NotStabilized { r0: usize, doublings: usize },
    #[error("cubical complex of {cells} cells exceeds the budget of {budget}")]
    ComplexTooLarge { cells: u64, budget: u64 },
    #[error("group action does not preserve the grid: {0}")]
    GridNotInvariant(String),
    #[error("group action does not preserve the pair")]
    PairNotInvariant,
    #[error("group order {order} is not a power of {p}")]
    NotPGroup { order: usize, p: u32 },
    #[error("degree-shift calibration has not been run")]
    CalibrationMissing,
    #[error("calibration inconsistent: rotation model gives s = {rotation}, hyperbolic model gives s = {hyperbolic}")]
    CalibrationInconsistent { rotation: i64, hyperbolic: i64 },
    #[error("homology computation failed: {0}")]
    Homology(String),
}

pub type Result<T> = std::result::Result<T, Error>;
