use thiserror::Error;

/// Errors raised by the library operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mask has no nonzero voxels")]
    EmptyMask,
    #[error("mask extent {extent:?} exceeds bounding box {bbox:?}")]
    MaskExceedsBox { extent: [usize; 3], bbox: [usize; 3] },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("class {class} has {count} member(s); at least 2 required")]
    ClassTooSmall { class: usize, count: usize },
    #[error("binary task k={k} is degenerate ({positives} positives, {negatives} negatives)")]
    DegenerateTask { k: usize, positives: usize, negatives: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range 1..={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("true class {0} has no samples")]
    EmptyClass(usize),
    #[error("batch too small for normalization: {0} values per channel")]
    DegenerateBatch(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
