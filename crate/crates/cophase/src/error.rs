use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("coherence layout requires M >= 1 and C >= 1, got M={m}, C={c}")]
    InvalidLayout { m: usize, c: usize },

    #[error("operator has {rows} rows but layout declares C*M = {expected}")]
    LayoutOperatorMismatch { rows: usize, expected: usize },

    #[error("noise-to-signal ratio must be non-negative, got {0}")]
    NegativeNoise(f64),

    #[error("{what} has zero norm")]
    ZeroNorm { what: &'static str },

    #[error("phase difference undefined: both base magnitudes are zero")]
    PhaseDifferenceUndefined,

    #[error("no coherence information: C must be at least 2, got {0}")]
    NoCoherenceInformation(usize),

    #[error("trivial solution: x is the zero vector")]
    TrivialSolution,

    #[error("phase undetermined at entry {index}: |psi| below {threshold:e}")]
    PhaseUndetermined { index: usize, threshold: f64 },

    #[error("degenerate pinned system: condition estimate {cond:e} exceeds {limit:e}")]
    DegeneratePinnedSystem { cond: f64, limit: f64 },

    #[error("least-squares system is numerically singular")]
    SingularSystem,

    #[error("iterative kernel extraction did not converge: residual {residual:e} after {iterations} iterations")]
    KernelNonConvergence { residual: f64, iterations: usize },

    #[error("comparison method implemented for C=2 only, got C={0}")]
    ComparisonNeedsTwoBlocks(usize),

    #[error("pin index {index} out of range 1..={m}")]
    PinIndexOutOfRange { index: usize, m: usize },

    #[error("dipole source count must be even (two polarizations per location), got {0}")]
    OddSourceCount(usize),

    #[error(
        "source and probe positions closer than {minimum} wavelengths (distance {distance:e})"
    )]
    SourceProbeCollision { distance: f64, minimum: f64 },

    #[error("measurement positions {a} and {b} coincide")]
    CoincidentProbePositions { a: usize, b: usize },

    #[error("experiment grid requires at least one trial per point")]
    EmptyGrid,

    #[error("unknown solver name {0:?}")]
    UnknownSolver(String),

    #[error("bad CPLX1 file: {0}")]
    BadFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
