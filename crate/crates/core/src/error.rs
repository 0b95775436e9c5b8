use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("operator is not skew-Hermitian (max defect {defect:e})")]
    NotSkewHermitian { defect: f64 },

    #[error("eigensolver failed (residual {residual:e})")]
    Numerical { residual: f64 },

    #[error("level index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("path step {step} has length {length:e} above the bound {bound:e}; refine the path")]
    RefinementNeeded { step: usize, length: f64, bound: f64 },

    #[error("branch continuity violated at step {step}; refine the path")]
    BranchDiscontinuity { step: usize },

    #[error("levels {level} and {next} are not degenerate at the given point (gap {gap:e})", next = level + 1)]
    NotDegenerate { level: usize, gap: f64 },

    #[error("degenerate spectrum (gap {gap:e} between levels {level} and {next})", next = level + 1)]
    DegenerateSpectrum { level: usize, gap: f64 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("propagation needs {steps} steps, above the budget of {budget}; use a larger epsilon")]
    StepBudget { steps: u64, budget: u64 },

    #[error("{0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Parse(#[from] serde_json::Error),
}
