use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("box {w}x{h} cannot be localized to {eta}-accuracy by any level of the scheme")]
    OutOfRange { w: u32, h: u32, eta: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("image {width}x{height} is too small (need at least {min_width}x{min_height})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("box ({x},{y},{w},{h}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: usize,
        height: usize,
    },

    #[error("kernel {kw}x{kh} larger than map {mw}x{mh}")]
    KernelTooLarge {
        kw: usize,
        kh: usize,
        mw: usize,
        mh: usize,
    },

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("non-finite feature value in sample {0}")]
    NonFiniteFeature(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no level of the scheme fits a {width}x{height} image")]
    NoFittingLevel { width: usize, height: usize },

    #[error("feature length {len} is not divisible into {segments} segments")]
    Divisibility { len: usize, segments: usize },

    #[error("unknown level {0}")]
    UnknownLevel(usize),

    #[error("no positive training windows: {0}")]
    NoPositives(String),

    #[error("no stage-one candidate reaches the correctness threshold on the training images")]
    NoPositiveCandidates,

    #[error("unknown evaluation mode `{0}`")]
    UnknownMode(String),

    #[error("curve needs at least 2 points, got {0}")]
    DegenerateGrid(usize),

    #[error("need at least 2 timed samples, got {0}")]
    InsufficientSamples(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
