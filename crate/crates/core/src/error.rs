use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("invalid event stream: {0}")]
    InvalidStream(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid signal: {0}")]
    Signal(String),

    #[error("zero pivot in tridiagonal elimination at row {0}")]
    ZeroPivot(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the underlying byte source or sink.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Malformed(String),
    OutOfBounds {
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    Polarity {
        value: String,
        convention: &'static str,
    },
    DecreasingTimestamp {
        t: f64,
        previous: f64,
    },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Malformed(msg) => write!(f, "malformed event: {msg}"),
            ParseErrorKind::OutOfBounds {
                x,
                y,
                width,
                height,
            } => write!(f, "pixel ({x}, {y}) outside {width}x{height} sensor"),
            ParseErrorKind::Polarity { value, convention } => {
                write!(f, "polarity {value} invalid under {convention} convention")
            }
            ParseErrorKind::DecreasingTimestamp { t, previous } => {
                write!(f, "timestamp {t} precedes previous timestamp {previous}")
            }
        }
    }
}
