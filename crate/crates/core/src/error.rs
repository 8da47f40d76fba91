use thiserror::Error;

/// Errors raised by the library. Display strings are part of the CLI contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("singular base change")]
    SingularBaseChange,
    #[error("boundary-charged box: {0}")]
    BoundaryChargedBox(String),
    #[error("boundary-charged face: {0}")]
    BoundaryChargedFace(String),
    #[error("empty box")]
    EmptyBox,
    #[error("rigid on eps*K (eps = {0})")]
    RigidOnWindow(f64),
    #[error("rigid window: |Eu|(K(x,eps)) = 0 at eps = {0}")]
    RigidWindow(f64),
    #[error("integrand overflow: {0}")]
    IntegrandOverflow(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("periodic formula requires convex integrand")]
    PeriodicNeedsConvex,
    #[error("grid/j mismatch: {0}")]
    GridMismatch(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("wrong dimension: expected {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("{context} (eps = {eps}): {source}")]
    AtScale {
        context: &'static str,
        eps: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors produced by numerical solves rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::IntegrandOverflow(_) | Error::Solver(_) => true,
            Error::AtScale { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
