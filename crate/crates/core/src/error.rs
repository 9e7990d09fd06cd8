use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("cube of radius 0 has no inner boundary")]
    EmptyBoundary,
    #[error("core needs radius >= 3, got {0}")]
    DegenerateCore(u32),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("enumeration of {count} configurations exceeds budget {budget}")]
    EnumerationTooLarge { count: f64, budget: u64 },
    #[error("disorder window does not cover the truncation radius; need radius {required_radius}")]
    Truncation { required_radius: f64 },
    #[error("cube is partially interactive")]
    NotNonInteractive,
    #[error("interaction does not vanish on the cube")]
    RangeViolation,
    #[error("dimension {dim} exceeds dense threshold {threshold}")]
    TooLarge { dim: usize, threshold: usize },
    #[error("iterative solver did not converge (best residual {residual:e})")]
    Convergence { residual: f64 },
    #[error("energy is resonant: distance to spectrum {distance:e} below floor {floor:e}")]
    Resonant { distance: f64, floor: f64 },
    #[error("cannot certify: error bars [{lo:e}, {hi:e}] straddle {target:e}")]
    Uncertain { lo: f64, hi: f64, target: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("characteristic function has not decayed at t_max: |phi| = {0:e}")]
    InsufficientDecay(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
