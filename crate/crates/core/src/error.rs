use thiserror::Error;

/// Every failure the library can report.
///
/// Verdicts (solvable or not, decoupled or not) are values, never errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("system is not right invertible: normal rank {normal_rank}, outputs {outputs}")]
    NotRightInvertible { normal_rank: usize, outputs: usize },
    #[error("system is not stabilizable: uncontrollable mode {0} outside the stability region")]
    NotStabilizable(String),
    #[error("forbidden point {0} is an invariant zero")]
    ForbiddenZero(f64),
    #[error("pencil not supported: {0}")]
    UnsupportedPencil(String),
    #[error("output index {index} out of range for {outputs} outputs")]
    BadIndex { index: usize, outputs: usize },
    #[error("minimum-phase zero {0} has a nontrivial Jordan structure")]
    NontrivialJordanZero(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("bad problem specification: {0}")]
    BadSpec(String),
    #[error("problem too large: {0}")]
    ProblemTooLarge(String),
    #[error("infeasible counts: {0}")]
    InfeasibleCounts(String),
    #[error("no transversal witness found after {0} attempts")]
    NoWitness(usize),
    #[error("problem is not solvable for this system")]
    Unsolvable,
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("closed loop is not stable: {0}")]
    NotStabilized(String),
    #[error("closed loop is defective: {0}")]
    DefectiveClosedLoop(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the caller's input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidMatrix(_)
                | Error::DimensionMismatch(_)
                | Error::Parse(_)
                | Error::BadIndex { .. }
                | Error::BadSpec(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
