use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("form degree mismatch: {0}")]
    Degree(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("region has no grid nodes: {0}")]
    EmptyRegion(String),

    #[error("point {0:?} lies outside the grid extent")]
    OutsideGrid([f64; 3]),

    #[error("grid does not cover the operator support: {0}")]
    SupportNotCovered(String),

    #[error("degree unresolved: {0}")]
    UnresolvedDegree(String),

    #[error("invalid argument `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("collar {collar} is not {k}-quasiconformal (distortion {found})")]
    CollarNotQc { collar: String, k: f64, found: f64 },

    #[error("initial frame is infeasible: qc violation {violation:e} exceeds {tolerance:e}")]
    Infeasible { violation: f64, tolerance: f64 },

    #[error("non-finite gradient at iteration {0}")]
    NonFiniteGradient(usize),

    #[error("evaluation at the origin")]
    AtOrigin,

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
