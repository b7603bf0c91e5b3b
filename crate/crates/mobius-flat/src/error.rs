use thiserror::Error;

/// Errors raised by the library. Messages start with a stable tag so that
/// callers and the command line can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid-too-small: {0}")]
    GridTooSmall(String),
    #[error("grid-mismatch")]
    GridMismatch,
    #[error("invalid-grid: {0}")]
    InvalidGrid(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("non-finite value at ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("missing-key: {0}")]
    MissingKey(String),
    #[error("degenerate-metric at node ({i}, {j})")]
    DegenerateMetric { i: usize, j: usize },
    #[error("asymmetric-metric at node ({i}, {j})")]
    AsymmetricMetric { i: usize, j: usize },
    #[error("singular-gauge at node ({i}, {j})")]
    SingularGauge { i: usize, j: usize },
    #[error("not-nilpotent: |M^4| = {0:e}")]
    NotNilpotent(f64),
    #[error("ad-not-nilpotent: |ad^7| = {0:e}")]
    AdNotNilpotent(f64),
    #[error("frame-degenerate at node ({i}, {j})")]
    FrameDegenerate { i: usize, j: usize },
    #[error("coordinates-not-asymptotic: mixed coefficient {0:e}")]
    NotAsymptotic(f64),
    #[error("quabla-mismatch: residual {0:e}")]
    QuablaMismatch(f64),
    #[error("not-centro-affine at node ({i}, {j})")]
    NotCentroAffine { i: usize, j: usize },
    #[error("elliptic-metric: no real asymptotic directions")]
    EllipticMetric,
    #[error("not-integrable: path residual {0:e}")]
    NotIntegrable(f64),
    #[error("invalid-input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
