use thiserror::Error;

pub type Result<T> = std::result::Result<T, PmeError>;

#[derive(Debug, Error)]
pub enum PmeError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("index {index} out of range 0..={max}")]
    Index { index: usize, max: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameterization: {0}")]
    InvalidSpec(String),

    #[error("curve fit residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Fit { residual: f64, tolerance: f64 },

    #[error("{} node(s) outside the FFD lattice box, first offenders: {:?}", .offenders.len(), &.offenders[..offenders.len().min(8)])]
    Registration { offenders: Vec<usize> },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<PmeError>,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("provenance mismatch: expected {expected}, found {found}")]
    Provenance { expected: String, found: String },

    #[error("matrix of order {order} exceeds the direct-solve cap {cap}")]
    SizeCap { order: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PmeError {
    /// Errors caused by bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PmeError::Config(_)
                | PmeError::Parse(_)
                | PmeError::MissingArtifact { .. }
                | PmeError::Provenance { .. }
                | PmeError::InvalidSpec(_)
                | PmeError::InvalidShape(_)
                | PmeError::Json(_)
        )
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(PmeError::Dimension {
            context,
            expected,
            found,
        })
    }
}
