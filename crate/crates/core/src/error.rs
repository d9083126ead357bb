use thiserror::Error;

/// Everything that can go wrong while building operators, solving for
/// contextual values or evaluating averages.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvError {
    #[error("matrix is not Hermitian (max |M - M^dagger| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("density operator trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },

    #[error("measurement context has no outcomes")]
    EmptyContext,

    #[error("POVM elements do not sum to the identity (residual norm {residual:.3e})")]
    IncompleteContext { residual: f64 },

    #[error("branch probability {probability:.3e} is zero")]
    ZeroProbabilityBranch { probability: f64 },

    #[error("measurement context does not commute with the observable (commutator norm {norm:.3e})")]
    NonCommutingContext { norm: f64 },

    #[error("observable is not in the span of the POVM (residual {residual:.3e})")]
    NotReconstructable { residual: f64 },

    #[error("postselection probability {probability:.3e} is below the floor")]
    ZeroPostselectionProbability { probability: f64 },

    #[error("pre- and postselected states are orthogonal")]
    OrthogonalPostselection,

    #[error("detector grid is inadequate (completeness defect {defect:.3e})")]
    GridInadequate { defect: f64 },

    #[error("coupling is degenerate: a - b(g) = {gap:.3e}")]
    DegenerateCoupling { gap: f64 },

    #[error("closed-form denominator {denominator:.3e} vanishes")]
    DivergentPostselection { denominator: f64 },

    #[error("no trial survived postselection")]
    NoPostselectedTrials,

    #[error("{count} outcome sequences exceed the tensor limit")]
    TooManySequences { count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = CvError> = std::result::Result<T, E>;
