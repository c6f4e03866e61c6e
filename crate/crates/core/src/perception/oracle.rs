//! Deterministic oracle backend over a synthetic scene.
//!
//! Localization follows the planted ground truth: a target is reported
//! iff its center lies in the queried patch and it is large enough
//! relative to the patch. Cue heatmaps are Gaussian bumps at the true
//! center (target-specific) or at the stored context region (contextual),
//! degraded by `cue_fidelity` and buried under seeded uniform noise, so
//! identical queries always produce bit-identical results.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::geometry::Rect;
use crate::heatmap::Heatmap;
use crate::rng::derive_rng;

use super::{
    detectable_in, LocalizationResult, PerceptionBackend, SceneTarget, SyntheticScene,
    TargetQuery, CUE_AMPLITUDE, CUE_GRID,
};

/// Spread of the target-specific bump, as a divisor of the patch's
/// shorter side.
const TARGET_SIGMA_DIVISOR: f64 = 8.0;

/// Spread of the contextual bump, as a divisor of the region's sides.
const CONTEXT_SIGMA_DIVISOR: f64 = 4.0;

// Salts keeping the noise streams of distinct draws apart.
const SALT_TARGET_NOISE: u64 = 0xA1;
const SALT_CUE_NOISE: u64 = 0xB2;
const SALT_JITTER: u64 = 0xC3;

pub struct OracleBackend {
    scene: SyntheticScene,
    cue_grid: (usize, usize),
}

impl OracleBackend {
    pub fn new(scene: SyntheticScene) -> Result<Self> {
        scene.validate()?;
        Ok(Self {
            scene,
            cue_grid: CUE_GRID,
        })
    }

    pub fn with_cue_grid(mut self, grid: (usize, usize)) -> Self {
        self.cue_grid = grid;
        self
    }

    pub fn scene(&self) -> &SyntheticScene {
        &self.scene
    }

    fn patch_rng(&self, patch: &Rect, salt: u64) -> ChaCha8Rng {
        derive_rng(&[
            self.scene.seed,
            salt,
            u64::from(patch.x),
            u64::from(patch.y),
            u64::from(patch.w),
            u64::from(patch.h),
        ])
    }

    fn add_noise(&self, map: &mut Vec<f64>, patch: &Rect, salt: u64) {
        if self.scene.noise_level > 0.0 {
            let mut rng = self.patch_rng(patch, salt);
            for v in map.iter_mut() {
                *v += rng.random_range(0.0..self.scene.noise_level);
            }
        }
    }

    /// Gaussian bump clipped to the patch grid. The center may lie
    /// outside the patch; only the visible tail is rendered.
    fn bump(
        map: &mut [f64],
        grid: (usize, usize),
        patch: &Rect,
        center: (f64, f64),
        sigma: (f64, f64),
        amplitude: f64,
    ) {
        if amplitude <= 0.0 {
            return;
        }
        let (gw, gh) = grid;
        let cw = f64::from(patch.w) / gw as f64;
        let ch = f64::from(patch.h) / gh as f64;
        for row in 0..gh {
            for col in 0..gw {
                let cx = f64::from(patch.x) + (col as f64 + 0.5) * cw;
                let cy = f64::from(patch.y) + (row as f64 + 0.5) * ch;
                let dx = (cx - center.0) / sigma.0;
                let dy = (cy - center.1) / sigma.1;
                map[row * gw + col] += amplitude * (-(dx * dx + dy * dy) / 2.0).exp();
            }
        }
    }

    /// Best detectable instance of the named target in the patch, by
    /// detectability then planting order.
    fn best_candidate(&self, query: &TargetQuery) -> Option<&SceneTarget> {
        self.scene
            .targets
            .iter()
            .filter(|t| t.name == query.name && detectable_in(&t.bbox, &query.patch))
            .fold(None, |best: Option<&SceneTarget>, t| match best {
                Some(b) if b.detectability >= t.detectability => Some(b),
                _ => Some(t),
            })
    }

    fn target_cue(&self, query: &TargetQuery) -> Heatmap {
        let patch = &query.patch;
        let mut values = vec![0.0; self.cue_grid.0 * self.cue_grid.1];
        let sigma = f64::from(patch.shorter_side()) / TARGET_SIGMA_DIVISOR;
        for t in &self.scene.targets {
            if t.name != query.name {
                continue;
            }
            let center = t.bbox.center();
            if patch.contains_point(center.0, center.1) {
                Self::bump(
                    &mut values,
                    self.cue_grid,
                    patch,
                    center,
                    (sigma, sigma),
                    CUE_AMPLITUDE * self.scene.cue_fidelity,
                );
            }
        }
        self.add_noise(&mut values, patch, SALT_TARGET_NOISE);
        Heatmap::new(self.cue_grid.0, self.cue_grid.1, *patch, values)
            .expect("oracle cue grids are finite by construction")
    }
}

impl PerceptionBackend for OracleBackend {
    fn locate_target(&self, query: &TargetQuery) -> Result<LocalizationResult> {
        let cue = self.target_cue(query);
        match self.best_candidate(query) {
            Some(t) => {
                let mut confidence = t.detectability;
                if self.scene.confidence_jitter > 0.0 {
                    let j = self.scene.confidence_jitter;
                    let mut rng = self.patch_rng(&query.patch, SALT_JITTER);
                    confidence = (confidence + rng.random_range(-j..j)).clamp(0.0, 1.0);
                }
                // The reported box is the planted one, clipped to the
                // scene extent (a no-op for valid scenes).
                let bbox = t
                    .bbox
                    .intersect(&self.scene.extent)
                    .unwrap_or(t.bbox);
                Ok(LocalizationResult {
                    bbox: Some(bbox),
                    confidence,
                    cue,
                })
            }
            None => Ok(LocalizationResult {
                bbox: None,
                confidence: 0.0,
                cue,
            }),
        }
    }

    fn contextual_cue(&self, query: &TargetQuery) -> Result<String> {
        if self.scene.context_regions.contains_key(&query.name) {
            Ok(format!("region:{}", query.name))
        } else {
            Ok("region:unknown".to_string())
        }
    }

    fn locate_cue(&self, cue_text: &str, patch: &Rect) -> Result<Heatmap> {
        let mut values = vec![0.0; self.cue_grid.0 * self.cue_grid.1];
        let region = cue_text
            .strip_prefix("region:")
            .filter(|name| *name != "unknown")
            .and_then(|name| self.scene.context_regions.get(name));
        if let Some(region) = region {
            Self::bump(
                &mut values,
                self.cue_grid,
                patch,
                region.center(),
                (
                    f64::from(region.w) / CONTEXT_SIGMA_DIVISOR,
                    f64::from(region.h) / CONTEXT_SIGMA_DIVISOR,
                ),
                CUE_AMPLITUDE * self.scene.cue_fidelity,
            );
        }
        self.add_noise(&mut values, patch, SALT_CUE_NOISE);
        Ok(
            Heatmap::new(self.cue_grid.0, self.cue_grid.1, *patch, values)
                .expect("oracle cue grids are finite by construction"),
        )
    }
}
