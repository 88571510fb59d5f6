//! Crate-wide error type.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Error, Debug)]
pub enum Error {
    /// An input value violated an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A Gram-Schmidt frame could not be built (parent limb degenerate or
    /// parallel to the face vector).
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    /// A geometric construction received collinear or coincident points.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A joint ended up at or behind the camera plane.
    #[error("joint {joint} behind camera (depth {depth:.6})")]
    BehindCamera { joint: usize, depth: f64 },

    /// Configuration is inconsistent or a bound is unsatisfiable.
    #[error("config error: {0}")]
    Config(String),

    /// The puppet template is malformed (empty part, bad anchors, ...).
    #[error("template error: {0}")]
    Template(String),

    /// A file did not match its expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Gradient was requested through a non-differentiable operation.
    #[error("unsupported op in gradient graph: {0}")]
    UnsupportedOp(&'static str),

    /// A numeric evaluation produced NaN or infinity.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Every fitting restart diverged.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// Training aborted (NaN loss or similar); carries a diagnostic.
    #[error("training aborted: {0}")]
    TrainAbort(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
