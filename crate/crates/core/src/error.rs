use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series is constant (zero variance){}", zone_suffix(.zone))]
    ConstantSeries { zone: Option<String> },

    #[error("unknown zone `{0}`")]
    UnknownZone(String),

    #[error("window of {window} steps does not fit a range of {range_len} steps")]
    WindowTooLarge { window: usize, range_len: usize },

    #[error("correlation set for zone `{target}` is empty (theta = {theta}); correlated-only forecasting needs at least one member")]
    EmptyCorrelationSet { target: String, theta: f64 },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss became {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },

    #[error("series of length {len} is too short (need more than {needed})")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("non-finite value in input at index {0}")]
    NonFiniteInput(usize),

    #[error("insufficient history: have {have}, need at least {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("panel has {have} steps but the split needs {need}")]
    PanelTooShort { have: usize, need: usize },

    #[error("empty input")]
    Empty,

    #[error("experiments target different zones: `{0}` vs `{1}`")]
    MismatchedTargets(String, String),

    #[error("malformed csv at row {row}{}: {msg}", column_suffix(.column))]
    MalformedCsv {
        row: usize,
        column: Option<usize>,
        msg: String,
    },

    #[error("irregular cadence at row {row}: {msg}")]
    IrregularCadence { row: usize, msg: String },

    #[error("negative flow {value} at row {row}, zone `{zone}`")]
    NegativeFlow {
        row: usize,
        zone: String,
        value: f64,
    },

    #[error("gap of {missing} missing rows before row {row} exceeds the allowed {allowed}")]
    GapTooLarge {
        row: usize,
        missing: usize,
        allowed: usize,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

fn zone_suffix(zone: &Option<String>) -> String {
    zone.as_ref()
        .map(|z| format!(" for zone `{z}`"))
        .unwrap_or_default()
}

fn column_suffix(column: &Option<usize>) -> String {
    column.map(|c| format!(", column {c}")).unwrap_or_default()
}

impl Error {
    /// True for errors caused by bad inputs or configuration rather than by
    /// the environment or a failed computation.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Serde(_) | Error::DivergenceDetected { .. }
        )
    }
}
