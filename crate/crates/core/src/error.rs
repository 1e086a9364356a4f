use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("partition error: cut index {cut} outside legal range {min}..={max}")]
    Partition { cut: usize, min: usize, max: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("wire format error: {0}")]
    Format(String),

    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("channel integrity error: {0}")]
    ChannelIntegrity(String),

    #[error("insufficient data: requested {requested}, available {available}")]
    InsufficientData { requested: usize, available: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate value range: min == max == {0}")]
    DegenerateRange(f64),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: usize, right: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Stable short identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Partition { .. } => "partition",
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Format(_) => "format",
            Error::Truncated { .. } => "truncated",
            Error::ChannelIntegrity(_) => "channel_integrity",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Precondition(_) => "precondition",
            Error::DegenerateRange(_) => "degenerate_range",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::Dimension { .. } => "dimension",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
