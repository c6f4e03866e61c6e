//! Replay backend: recorded fixations stand in for the learned cue.
//!
//! Localization still follows the ground-truth box (same detectability
//! rule as the oracle), but the cue heatmap returned with every query is
//! the fixation-derived guidance map restricted to the queried patch.
//! Contextual cues are deliberately uninformative: fixation guidance
//! replaces them.

use crate::error::Result;
use crate::geometry::Rect;
use crate::heatmap::{fixations_to_heatmap, FixationSequence, Heatmap, DEFAULT_AMPLITUDE};

use super::{
    detectable_in, LocalizationResult, PerceptionBackend, SyntheticScene, TargetQuery, CUE_GRID,
};

/// Resolution of the precomputed global guidance map.
const GUIDANCE_GRID: (usize, usize) = (64, 64);

/// Confidence reported for a localized ground-truth box.
const REPLAY_CONFIDENCE: f64 = 0.9;

pub struct FixationBackend {
    extent: Rect,
    target: Rect,
    guidance: Heatmap,
    cue_grid: (usize, usize),
}

impl FixationBackend {
    /// Builds a backend from a ground-truth box and a fixation trail.
    /// `sigma` defaults to 1/16 of the image's longer side.
    pub fn new(
        extent: Rect,
        target: Rect,
        fixations: &FixationSequence,
        gamma: f64,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let sigma = sigma.unwrap_or(f64::from(extent.longer_side()) / 16.0);
        let guidance =
            fixations_to_heatmap(fixations, gamma, sigma, GUIDANCE_GRID, DEFAULT_AMPLITUDE)?;
        Ok(Self {
            extent,
            target,
            guidance,
            cue_grid: CUE_GRID,
        })
    }

    /// Same, taking the ground truth from a synthetic scene's first target.
    pub fn from_scene(
        scene: &SyntheticScene,
        fixations: &FixationSequence,
        gamma: f64,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let target = scene
            .targets
            .first()
            .ok_or_else(|| crate::error::Error::InvalidScene("scene has no targets".into()))?
            .bbox;
        Self::new(scene.extent, target, fixations, gamma, sigma)
    }

    pub fn guidance(&self) -> &Heatmap {
        &self.guidance
    }

    pub fn extent(&self) -> &Rect {
        &self.extent
    }
}

impl PerceptionBackend for FixationBackend {
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult> {
        let cue = self.guidance.restrict(&query.patch, self.cue_grid)?;
        if detectable_in(&self.target, &query.patch) {
            Ok(LocalizationResult {
                bbox: Some(self.target.intersect(&self.extent).unwrap_or(self.target)),
                confidence: REPLAY_CONFIDENCE,
                cue,
            })
        } else {
            Ok(LocalizationResult {
                bbox: None,
                confidence: 0.0,
                cue,
            })
        }
    }

    fn contextual_cue(&self, _query: &TargetQuery) -> Result<String> {
        Ok("region:unknown".to_string())
    }

    fn locate_cue(&self, _cue_text: &str, patch: &Rect) -> Result<Heatmap> {
        Ok(Heatmap::zeros(self.cue_grid.0, self.cue_grid.1, *patch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::subdivide;

    fn rect(x: u32, y: u32, w: u32, h: u32) -> Rect {
        Rect::new(x, y, w, h).unwrap()
    }

    #[test]
    fn trail_ending_on_target_ranks_its_quadrant_first_among_late() {
        let extent = rect(0, 0, 2048, 2048);
        let target = rect(1500, 1500, 100, 100);
        let fixations = FixationSequence::new(
            vec![(300.0, 300.0), (1550.0, 1550.0)],
            extent,
        )
        .unwrap();
        let backend = FixationBackend::new(extent, target, &fixations, 0.9, None).unwrap();
        let cue = backend
            .locate_target(&TargetQuery::new("anything", extent))
            .unwrap()
            .cue;
        let quadrants = subdivide(&extent, 224);
        let p: Vec<f64> = quadrants
            .iter()
            .map(|q| cue.patch_priority(q).unwrap())
            .collect();
        // Quadrant 0 holds the first fixation (weight 1), quadrant 3 the
        // final fixation on the target (weight gamma); both dominate the
        // untouched quadrants.
        assert!(p[0] > p[3]);
        assert!(p[3] > p[1]);
        assert!(p[3] > p[2]);
    }

    #[test]
    fn empty_trail_gives_uniform_guidance() {
        let extent = rect(0, 0, 1024, 1024);
        let target = rect(101, 101, 80, 80);
        let fixations = FixationSequence::new(vec![], extent).unwrap();
        let backend = FixationBackend::new(extent, target, &fixations, 0.9, None).unwrap();
        let r = backend
            .locate_target(&TargetQuery::new("t", extent))
            .unwrap();
        assert!(r.cue.values().iter().all(|&v| v == 0.0));
        // Detection still works off the ground truth.
        let quad = rect(0, 0, 512, 512);
        let hit = backend.locate_target(&TargetQuery::new("t", quad)).unwrap();
        assert!(hit.bbox.is_some());
    }

    #[test]
    fn lower_gamma_weakly_lowers_late_fixation_priorities() {
        let extent = rect(0, 0, 2048, 2048);
        let target = rect(1500, 1500, 100, 100);
        let pts = vec![(300.0, 300.0), (1700.0, 300.0), (1550.0, 1550.0)];
        let fixations = FixationSequence::new(pts, extent).unwrap();
        let hi = FixationBackend::new(extent, target, &fixations, 0.9, None).unwrap();
        let lo = FixationBackend::new(extent, target, &fixations, 0.8, None).unwrap();
        let quadrants = subdivide(&extent, 224);
        let p_hi: Vec<f64> = quadrants
            .iter()
            .map(|q| hi.guidance().patch_priority(q).unwrap())
            .collect();
        let p_lo: Vec<f64> = quadrants
            .iter()
            .map(|q| lo.guidance().patch_priority(q).unwrap())
            .collect();
        // Both maps are anchored at the first fixation (amplitude 6), and
        // later-fixation quadrants sink when gamma drops.
        assert!((p_hi[0] - p_lo[0]).abs() < 1e-9);
        assert!(p_lo[1] <= p_hi[1]);
        assert!(p_lo[3] <= p_hi[3]);
        // Early-fixation ordering is unchanged.
        assert!(p_hi[0] > p_hi[3] && p_lo[0] > p_lo[3]);
    }

    #[test]
    fn contextual_path_is_uninformative() {
        let extent = rect(0, 0, 1024, 1024);
        let fixations =
            FixationSequence::new(vec![(500.0, 500.0)], extent).unwrap();
        let backend =
            FixationBackend::new(extent, rect(1, 1, 50, 50), &fixations, 0.9, None).unwrap();
        let q = TargetQuery::new("t", extent);
        assert_eq!(backend.contextual_cue(&q).unwrap(), "region:unknown");
        let hm = backend.locate_cue("region:unknown", &extent).unwrap();
        assert_eq!(hm.max_value().unwrap(), 0.0);
    }
}
