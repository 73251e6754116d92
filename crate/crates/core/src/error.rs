use std::path::PathBuf;

/// Errors produced by the analysis and simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported bit depth {0} (expected 8, 10 or 12)")]
    UnsupportedBitDepth(u8),

    #[error("unsupported CU size {0} (expected 16, 32 or 64)")]
    UnsupportedCuSize(usize),

    #[error("picture dimensions {width}x{height} too small (need at least 2x2)")]
    PictureTooSmall { width: usize, height: usize },

    #[error(
        "{path}: file size mismatch: expected {expected} bytes \
         ({frames} frames of {frame_bytes} bytes), found {actual}"
    )]
    FileSizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
        frames: usize,
        frame_bytes: u64,
    },

    #[error(
        "sample value {value} exceeds {bit_depth}-bit range at frame {frame}, \
         channel {channel}, sample offset {offset}"
    )]
    SampleOutOfRange {
        frame: usize,
        channel: usize,
        offset: usize,
        value: u16,
        bit_depth: u8,
    },

    #[error("synthesis value {value} out of range for {bit_depth}-bit samples")]
    SynthValueOutOfRange { value: u32, bit_depth: u8 },

    #[error("invalid synthesis spec: {0}")]
    InvalidSynthSpec(String),

    #[error("frame {index} does not match descriptor ({reason})")]
    FrameDescriptorMismatch { index: usize, reason: String },

    #[error("plane index {0} out of range (frames have 3 planes)")]
    BadPlaneIndex(usize),

    #[error("empty pixel region")]
    EmptyRegion,

    #[error("activity list is empty")]
    EmptyActivityList,

    #[error("QStep must be positive, got {0}")]
    NonPositiveQStep(f64),

    #[error("normalized activity must be positive, got {0}")]
    NonPositiveActivity(f64),

    #[error("QP map does not match frame: {0}")]
    QpMapMismatch(String),

    #[error("RD curve needs at least {min} points, got {got}")]
    TooFewRdPoints { min: usize, got: usize },

    #[error("RD curve has non-positive rate {rate} at point {index}")]
    NonPositiveRate { index: usize, rate: f64 },

    #[error("RD curve has non-finite or duplicate PSNR values ({0})")]
    BadPsnrValues(String),

    #[error("PSNR ranges do not overlap (anchor {anchor_lo}..{anchor_hi}, test {test_lo}..{test_hi})")]
    NoPsnrOverlap {
        anchor_lo: f64,
        anchor_hi: f64,
        test_lo: f64,
        test_hi: f64,
    },

    #[error("{path}:{line}: malformed CSV row: {reason}")]
    MalformedCsv {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown policy {0:?} (expected fcpq, adaptiveqp or uniform)")]
    UnknownPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
