//! Guided visual search over high-resolution images.
//!
//! The library implements an informed best-first search that localizes a
//! described target by recursively zooming into the most promising image
//! patches, guided by target-specific and contextual cue heatmaps. Around
//! the search sit the pieces needed to run and evaluate it end to end:
//!
//! - [`geometry`]: rectangles, orientation-aware 4-way subdivision, and
//!   coordinate-frame mapping;
//! - [`heatmap`]: cue grids, patch priorities, and fixation-derived
//!   guidance maps;
//! - [`perception`]: the backend interface plus oracle, fixation-replay,
//!   and HTTP implementations;
//! - [`search`]: the guided search, the uninformed baselines, and the
//!   trace/search-length machinery;
//! - [`seal`]: the question-answering pipeline built around a visual
//!   working memory;
//! - [`bench`]: synthetic scenes, strategy comparisons, ablations, and
//!   fixation replay;
//! - [`render`]: grayscale heatmap rendering and trace overlays.

pub mod bench;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod perception;
pub mod render;
pub mod seal;
pub mod search;

mod rng;

pub use error::{Error, Result};
pub use geometry::{orientation, subdivide, to_root_frame, Orientation, Rect};
pub use heatmap::{
    fixations_to_heatmap, render_heatmap, FixationSequence, GrayBuffer, Heatmap,
};
pub use perception::{
    FixationBackend, LocalizationResult, OracleBackend, PerceptionBackend, RemoteBackend,
    SceneTarget, SyntheticScene, TargetQuery,
};
pub use seal::{
    crop_target, projection_policy, render_vwm_prompt, seal_answer, seal_answer_with, ImageRef,
    Projection, ProjectionChoice, ProjectionVariant, ScriptedVqa, SealOptions, SealResult,
    VisualWorkingMemory, VqaBackend,
};
pub use search::{
    baseline_search, cue_threshold, search_length, vstar_search, vstar_search_with, CuePolicy,
    Outcome, SearchAborted, SearchOutcome, SearchParams, SearchTrace, Strategy,
};
