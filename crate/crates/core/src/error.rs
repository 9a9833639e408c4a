use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcimError {
    #[error("point {0:?} lies within tolerance of a branch boundary")]
    PointOnBoundary(Vec<f64>),
    #[error("point {0:?} is outside the study domain")]
    OutOfDomain(Vec<f64>),
    #[error("bracket [{lo}, {hi}] does not straddle a root")]
    NoRoot { lo: f64, hi: f64 },
    #[error("scalar profile is not monotone on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },
    #[error("probe point is too close to the neutral point")]
    DegenerateProbe,
    #[error("invalid map parameters: {0}")]
    BadSpec(String),
    #[error("point {0:?} is not in the region")]
    NotInRegion(Vec<f64>),
    #[error("orbit did not leave the region within {0} steps")]
    Overflow(usize),
    #[error("fit window is empty")]
    EmptyWindow,
    #[error("tail volume is not positive at n = {0}")]
    NonPositiveTail(usize),
    #[error("resolution {0} is below the minimum of 8 cells per axis")]
    BadResolution(usize),
    #[error("{0} cells had fewer than half their samples accepted")]
    CellStarved(usize),
    #[error("power iteration stopped after {iterations} sweeps with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("grid functions live on different partitions")]
    PartitionMismatch,
    #[error("local inverse failed at cell {cell}: {reason}")]
    InverseFailure { cell: usize, reason: String },
    #[error("tail fit unusable: {0}")]
    InsufficientFit(String),
    #[error("epsilon {eps} is below two cell widths ({min})")]
    EpsTooSmall { eps: f64, min: f64 },
    #[error("no admissible epsilon in the grid")]
    EpsGridEmpty,
    #[error("every test function has zero seminorm")]
    DegenerateFamily,
    #[error("orbit of length {len} is shorter than the required {min}")]
    OrbitTooShort { len: usize, min: usize },
    #[error("vectors are linearly dependent")]
    DegenerateVectors,
    #[error("invalid radii: {0}")]
    BadRadii(String),
    #[error("overlap table is empty")]
    EmptyTable,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl AcimError {
    /// Configuration and parameter problems, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            AcimError::BadSpec(_)
                | AcimError::BadResolution(_)
                | AcimError::EpsTooSmall { .. }
                | AcimError::EpsGridEmpty
                | AcimError::BadRadii(_)
                | AcimError::Config(_)
                | AcimError::EmptyWindow
                | AcimError::PartitionMismatch
        )
    }
}

impl From<std::io::Error> for AcimError {
    fn from(e: std::io::Error) -> Self {
        AcimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AcimError>;
