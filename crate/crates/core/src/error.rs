use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The point is farther than the hull tolerance from the convex hull.
    /// `projection` is the nearest hull point, which callers may decompose instead.
    #[error("point lies outside the convex hull (distance {distance:e})")]
    NotInHull { projection: Vec<f64>, distance: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("time {t} outside evaluation domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("divergence: state norm {norm:e} exceeded guard at t = {time}")]
    Divergence { time: f64, norm: f64 },

    #[error("radius floor: r_{segment} = {value:e} is below r_min = {floor:e}")]
    RadiusFloor {
        segment: usize,
        value: f64,
        floor: f64,
    },

    #[error("segment {segment} left its {eps:e}-tube at t = {time} (error {error:e})")]
    SegmentFailure {
        segment: usize,
        time: f64,
        error: f64,
        eps: f64,
    },

    #[error("construction failure: {0}")]
    ConstructionFailure(String),

    #[error("zeta iterates do not converge (level {level}, residuals {residuals:?})")]
    NonConvergence { level: usize, residuals: Vec<f64> },

    #[error("tube violated at t = {time} (weighted error {weighted_error})")]
    TubeViolation { time: f64, weighted_error: f64 },

    #[error("verification failure: {0}")]
    Verification(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
