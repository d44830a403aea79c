use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input vector carried a NaN or infinity.
    NonFinite,
    /// The 1-D dual root-find did not reach its tolerance.
    NoConvergence { iterations: usize, residual: f64 },
    /// A matrix row that should be a distribution is not.
    NotRowStochastic { row: usize, sum: f64 },
    /// Dimensions of the arguments disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// The evaluator was asked about an iteration the trajectory does not hold.
    TrajectoryTooShort { requested: usize, available: usize },
    /// Exhaustive enumeration would exceed the configured guard.
    EnumerationGuard { count: u128, limit: u128 },
    /// Stage-certified quantity requested at an iteration of the first stage.
    NoPriorStage { t: usize },
    /// Stage regret requested for a stage that never completed.
    IncompleteStage { stage: usize },
    /// Swap-regret diagnostics need the per-iteration utility history.
    MissingUtilities,
    /// Learning rate must be strictly positive and finite.
    InvalidLearningRate(f64),
    /// Iteration index must be at least one.
    ZeroIteration,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite => write!(f, "input contains a non-finite value"),
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "root-find did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::NotRowStochastic { row, sum } => {
                write!(f, "row {row} is not a probability distribution (sum {sum})")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::TrajectoryTooShort {
                requested,
                available,
            } => write!(
                f,
                "iteration {requested} requested but the trajectory holds {available}"
            ),
            Error::EnumerationGuard { count, limit } => write!(
                f,
                "exhaustive enumeration of {count} deviations exceeds the guard of {limit}; use the informed upper bound"
            ),
            Error::NoPriorStage { t } => {
                write!(f, "iteration {t} lies in the first stage and has no completed prior stage")
            }
            Error::IncompleteStage { stage } => write!(f, "stage {stage} did not complete"),
            Error::MissingUtilities => {
                write!(f, "run was recorded without the per-iteration utility history")
            }
            Error::InvalidLearningRate(eta) => write!(f, "invalid learning rate {eta}"),
            Error::ZeroIteration => write!(f, "iteration indices start at 1"),
        }
    }
}

impl core::error::Error for Error {}
