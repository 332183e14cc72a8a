use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand dimensions disagree along `axis`.
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    /// Tensor rank or element count is not what the operation accepts.
    Rank { op: &'static str, detail: String },
    InvalidParam { name: &'static str, detail: String },
    NegativeDistance(f64),
    EmptyChannel { channel: String },
    ImageTooSmall {
        id: Option<String>,
        width: usize,
        height: usize,
        needed: usize,
    },
    OutOfBounds {
        what: &'static str,
        x: i64,
        y: i64,
    },
    BackwardBeforeForward,
    Placement { attempts: usize },
    NonFiniteLoss { batch: usize },
    ArchMismatch(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, axis: &'static str, expected: usize, found: usize) -> Self {
        Error::Shape {
            op,
            axis,
            expected,
            found,
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                op,
                axis,
                expected,
                found,
            } => write!(f, "{op}: dimension mismatch on {axis} axis (expected {expected}, found {found})"),
            Error::Rank { op, detail } => write!(f, "{op}: {detail}"),
            Error::InvalidParam { name, detail } => write!(f, "invalid {name}: {detail}"),
            Error::NegativeDistance(d) => write!(f, "distance must be non-negative, got {d}"),
            Error::EmptyChannel { channel } => write!(f, "landmark channel '{channel}' has no points"),
            Error::ImageTooSmall {
                id,
                width,
                height,
                needed,
            } => {
                if let Some(id) = id {
                    write!(f, "image {id} ({width}x{height}) too small: needs more than {needed} px per side")
                } else {
                    write!(f, "image {width}x{height} too small: needs more than {needed} px per side")
                }
            }
            Error::OutOfBounds { what, x, y } => write!(f, "{what} at ({x}, {y}) is out of bounds"),
            Error::BackwardBeforeForward => write!(f, "backward called before a recorded forward pass"),
            Error::Placement { attempts } => {
                write!(f, "could not place synthetic features after {attempts} attempts")
            }
            Error::NonFiniteLoss { batch } => write!(f, "non-finite loss at batch {batch}"),
            Error::ArchMismatch(detail) => write!(f, "architecture mismatch: {detail}"),
        }
    }
}

impl core::error::Error for Error {}
