use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("unsupported moment order {0} (expected 1..=4)")]
    UnsupportedOrder(u32),

    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("cannot build {rows} mutually orthogonal rows in dimension {dim}")]
    InfeasibleOrthogonality { rows: usize, dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("reference resistance must be positive, got {0}")]
    InvalidReference(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid port model: {0}")]
    Model(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("frequency grids differ across stir states at: {}", format_freqs(.0))]
    Alignment(Vec<f64>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_freqs(freqs: &[f64]) -> String {
    let shown: Vec<String> = freqs.iter().take(8).map(|f| format!("{f} Hz")).collect();
    if freqs.len() > 8 {
        format!("{} (and {} more)", shown.join(", "), freqs.len() - 8)
    } else {
        shown.join(", ")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
