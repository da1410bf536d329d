use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("duplicate feature name {0:?}")]
    DuplicateFeature(String),
    /// A cohort selector or group filter matched no rows.
    #[error("{0}: no instances")]
    EmptySelection(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("signed graph: project to |W| or use two-layer analysis")]
    SignedGraph,
    #[error("graph has zero total edge weight")]
    EmptyGraph,
    #[error("no setting meets the modularity floor {floor}; best Q found {best_q}")]
    NoSettingMeetsFloor { floor: f64, best_q: f64 },
    #[error("metric {0} requires ground-truth labels")]
    MissingLabels(&'static str),
    #[error("modules {0} and {1} overlap")]
    OverlappingModules(usize, usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
