use crate::geometry::Rect;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),

    #[error("box {child} exceeds patch extents {patch}")]
    BoxOutsidePatch { child: Rect, patch: Rect },

    #[error("heatmap grid is empty")]
    EmptyHeatmap,

    #[error("heatmap shape mismatch: {width}x{height} grid with {len} values")]
    GridShape { width: usize, height: usize, len: usize },

    #[error("heatmap contains a non-finite value at index {index}")]
    NonFiniteValue { index: usize },

    #[error("patch {patch} not contained in heatmap frame {frame}")]
    PatchOutsideFrame { patch: Rect, frame: Rect },

    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("malformed wire message: {0}")]
    WireFormat(String),

    #[error("VQA backend failure: {0}")]
    Vqa(String),

    #[error("malformed data: {0}")]
    DataFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
