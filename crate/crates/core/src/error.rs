use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vertex {vertex} has no incident non-degenerate triangle")]
    IsolatedVertex { vertex: usize },

    #[error("triangle {triangle} references vertex {index} but mesh has {count} vertices")]
    BadTriangleIndex { triangle: usize, index: usize, count: usize },

    #[error("mesh has no uv coordinates")]
    MissingUv,

    #[error("uv coordinate ({u}, {v}) outside [0,1]^2")]
    UvOutOfRange { u: f64, v: f64 },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch { what: &'static str, expected: usize, actual: usize },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no valid depth under the face region")]
    NoValidDepth,

    #[error("singular normal equations at iteration {iteration}")]
    SingularSystem { iteration: usize },

    #[error("anchor graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("face region covers the whole image; no background anchors")]
    NoAnchors,

    #[error("texture fit diverged; residual trace {trace:?}")]
    Diverged { trace: Vec<f64> },

    #[error("too few reliable correspondences: need {needed}, have {have}")]
    TooFewCorrespondences { needed: usize, have: usize },

    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { format, msg: msg.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
