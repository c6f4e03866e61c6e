//! Perception backends: the interface between the search loop and
//! whatever model (or stand-in) localizes targets and produces cue
//! heatmaps.
//!
//! Three implementations ship here: a deterministic oracle over synthetic
//! scenes, a replay backend that substitutes recorded fixations for the
//! cue heatmap, and an HTTP client speaking the JSON wire protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::heatmap::Heatmap;

mod fixation;
mod oracle;
mod remote;

pub use fixation::FixationBackend;
pub use oracle::OracleBackend;
pub use remote::{
    wire, RemoteBackend, DEFAULT_RETRIES,
};

/// Peak amplitude of generated cue heatmaps at full fidelity.
pub const CUE_AMPLITUDE: f64 = 6.0;

/// Grid resolution of generated cue heatmaps.
pub const CUE_GRID: (usize, usize) = (24, 24);

/// A target is localizable in a patch only when its shorter side is at
/// least this fraction of the patch's shorter side. Mirrors a detector
/// that cannot resolve objects below 20px at a 224px input.
pub const MIN_RELATIVE_TARGET_SIZE: f64 = 20.0 / 224.0;

/// One localization request: a target expression over a sub-image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetQuery {
    pub name: String,
    pub patch: Rect,
}

impl TargetQuery {
    pub fn new(name: impl Into<String>, patch: Rect) -> Self {
        Self {
            name: name.into(),
            patch,
        }
    }
}

/// Localization output: an optional box with its confidence, plus the
/// target-specific cue heatmap over the queried patch.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    /// Located box in root-frame coordinates, absent when nothing was
    /// found in the patch.
    pub bbox: Option<Rect>,
    /// Confidence in `[0, 1]`; 0 when no box is returned.
    pub confidence: f64,
    /// Target-specific cue heatmap covering the queried patch.
    pub cue: Heatmap,
}

/// A planted object in a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTarget {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: Rect,
    /// Confidence reported when the target is localizable; 0.9 clears the
    /// acceptance threshold, values in [0.3, 0.5) exercise the fallback.
    pub detectability: f64,
}

/// A synthetic scene: planted targets, their context regions, and the
/// cue-quality knobs of the oracle backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub extent: Rect,
    pub targets: Vec<SceneTarget>,
    pub context_regions: BTreeMap<String, Rect>,
    pub cue_fidelity: f64,
    pub noise_level: f64,
    pub seed: u64,
    /// Half-width of a uniform perturbation applied to reported
    /// confidences; 0 disables jitter.
    #[serde(default)]
    pub confidence_jitter: f64,
}

impl SyntheticScene {
    /// Checks structural invariants: targets inside the extent, context
    /// regions covering their targets, knobs in range.
    pub fn validate(&self) -> Result<()> {
        for t in &self.targets {
            if !self.extent.contains_rect(&t.bbox) {
                return Err(Error::InvalidScene(format!(
                    "target '{}' box {} outside extent {}",
                    t.name, t.bbox, self.extent
                )));
            }
            if !(0.0..=1.0).contains(&t.detectability) {
                return Err(Error::InvalidScene(format!(
                    "target '{}' detectability {} outside [0, 1]",
                    t.name, t.detectability
                )));
            }
            if let Some(region) = self.context_regions.get(&t.name) {
                if !region.contains_rect(&t.bbox) {
                    return Err(Error::InvalidScene(format!(
                        "context region {} does not cover target '{}' box {}",
                        region, t.name, t.bbox
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.cue_fidelity) {
            return Err(Error::InvalidScene(format!(
                "cue_fidelity {} outside [0, 1]",
                self.cue_fidelity
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "noise_level {} must be finite and non-negative",
                self.noise_level
            )));
        }
        if !(self.confidence_jitter >= 0.0 && self.confidence_jitter.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "confidence_jitter {} must be finite and non-negative",
                self.confidence_jitter
            )));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let scene: SyntheticScene = serde_json::from_str(json)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Abstract visual-search model: localize a target, name its likely
/// whereabouts, and turn such an expression into a cue heatmap.
///
/// Implementations must be safe to share across concurrent searches;
/// within one search the calls are strictly sequential.
pub trait PerceptionBackend: Send + Sync {
    /// "Please locate the `<target>` in the image."
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult>;

    /// "What is the most likely location of the `<target>` in the image?"
    fn contextual_cue(&self, query: &TargetQuery) -> Result<String>;

    /// "Please locate the '`<cue>`' in the image."
    fn locate_cue(&self, cue_text: &str, patch: &Rect) -> Result<Heatmap>;
}

impl<T: PerceptionBackend + ?Sized> PerceptionBackend for &T {
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult> {
        (**self).locate_target(query)
    }

    fn contextual_cue(&self, query: &TargetQuery) -> Result<String> {
        (**self).contextual_cue(query)
    }

    fn locate_cue(&self, cue_text: &str, patch: &Rect) -> Result<Heatmap> {
        (**self).locate_cue(cue_text, patch)
    }
}

impl<T: PerceptionBackend + ?Sized> PerceptionBackend for Box<T> {
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult> {
        (**self).locate_target(query)
    }

    fn contextual_cue(&self, query: &TargetQuery) -> Result<String> {
        (**self).contextual_cue(query)
    }

    fn locate_cue(&self, cue_text: &str, patch: &Rect) -> Result<Heatmap> {
        (**self).locate_cue(cue_text, patch)
    }
}

/// Shared detectability rule: the box center must lie in the patch
/// (half-open) and the box's shorter side must be resolvable at the
/// patch's scale.
pub(crate) fn detectable_in(bbox: &Rect, patch: &Rect) -> bool {
    let (cx, cy) = bbox.center();
    patch.contains_point(cx, cy)
        && f64::from(bbox.shorter_side())
            >= MIN_RELATIVE_TARGET_SIZE * f64::from(patch.shorter_side())
}
