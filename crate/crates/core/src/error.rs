use thiserror::Error;

/// Failures while building, loading or evaluating a [`crate::net::Network`].
#[derive(Debug, Error)]
pub enum NetError {
    #[error("failed to read or write weight file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("weight file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(
        "dimension mismatch between layer {prev_layer} (out_dim {prev_out}) and layer {layer} (in_dim {in_dim})"
    )]
    DimensionChain {
        prev_layer: usize,
        prev_out: usize,
        layer: usize,
        in_dim: usize,
    },
    #[error("non-finite value in layer {layer} field `{field}` at position {position}")]
    NonFinite {
        layer: usize,
        field: &'static str,
        position: usize,
    },
    #[error("invalid layer {layer} field `{field}`: {reason}")]
    Invalid {
        layer: usize,
        field: &'static str,
        reason: String,
    },
    #[error("layer index {index} out of range for a network of depth {depth}")]
    LayerIndex { index: usize, depth: usize },
    #[error("{what} has length {found}, expected {expected}")]
    InputDimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} has a non-finite entry at position {position}")]
    NonFiniteInput { what: &'static str, position: usize },
}

/// Crate-wide error for everything above the network engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("query is outside the generative region (unit {unit} violates its halfspace)")]
    QueryOutsideRegion { unit: usize },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("{what} has dimension {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unit index {index} out of range for layer width {width}")]
    UnitIndex { index: usize, width: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Dimension { .. }
                | Error::UnitIndex { .. }
                | Error::QueryOutsideRegion { .. }
                | Error::Net(NetError::LayerIndex { .. })
                | Error::Net(NetError::InputDimension { .. })
                | Error::Net(NetError::NonFiniteInput { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
