//! Cue heatmaps, patch priority scoring, and conversion of recorded
//! fixation sequences into guidance heatmaps.
//!
//! A heatmap is a row-major grid of finite scores (logit scale, values may
//! exceed 1) covering a pixel rectangle. The priority of a patch is the
//! maximum over the cells whose centers fall inside it: a small, peaked cue
//! survives subdivision instead of being averaged away.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;

/// Row-major grid of finite cue scores over a pixel frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HeatmapRepr")]
pub struct Heatmap {
    width: usize,
    height: usize,
    frame: Rect,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct HeatmapRepr {
    width: usize,
    height: usize,
    frame: Rect,
    values: Vec<f64>,
}

impl TryFrom<HeatmapRepr> for Heatmap {
    type Error = Error;

    fn try_from(r: HeatmapRepr) -> Result<Self> {
        Heatmap::new(r.width, r.height, r.frame, r.values)
    }
}

impl Heatmap {
    /// Builds a heatmap, rejecting shape mismatches and non-finite values.
    pub fn new(width: usize, height: usize, frame: Rect, values: Vec<f64>) -> Result<Self> {
        if width * height != values.len() {
            return Err(Error::GridShape {
                width,
                height,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self {
            width,
            height,
            frame,
            values,
        })
    }

    /// All-zero heatmap over `frame`.
    pub fn zeros(width: usize, height: usize, frame: Rect) -> Self {
        Self {
            width,
            height,
            frame,
            values: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame(&self) -> &Rect {
        &self.frame
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    fn cell_size(&self) -> (f64, f64) {
        (
            f64::from(self.frame.w) / self.width as f64,
            f64::from(self.frame.h) / self.height as f64,
        )
    }

    /// Pixel position of a cell's center in the root frame.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let (cw, ch) = self.cell_size();
        (
            f64::from(self.frame.x) + (col as f64 + 0.5) * cw,
            f64::from(self.frame.y) + (row as f64 + 0.5) * ch,
        )
    }

    /// Value of the cell containing the given root-frame point, clamping
    /// points outside the frame to the nearest cell.
    pub fn value_at(&self, px: f64, py: f64) -> f64 {
        let (cw, ch) = self.cell_size();
        let col = (((px - f64::from(self.frame.x)) / cw).floor() as i64)
            .clamp(0, self.width as i64 - 1) as usize;
        let row = (((py - f64::from(self.frame.y)) / ch).floor() as i64)
            .clamp(0, self.height as i64 - 1) as usize;
        self.get(col, row)
    }

    /// Maximum over all cells. Errors on an empty grid.
    pub fn max_value(&self) -> Result<f64> {
        if self.values.is_empty() {
            return Err(Error::EmptyHeatmap);
        }
        Ok(self
            .values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Search priority of a patch: the maximum over cells whose centers
    /// fall inside it. When the patch is too small to cover any cell
    /// center, falls back to the cell nearest to the patch center. Errors
    /// when the patch is not contained in the frame.
    pub fn patch_priority(&self, patch: &Rect) -> Result<f64> {
        if !self.frame.contains_rect(patch) {
            return Err(Error::PatchOutsideFrame {
                patch: *patch,
                frame: self.frame,
            });
        }
        if self.values.is_empty() {
            return Err(Error::EmptyHeatmap);
        }
        let mut best: Option<f64> = None;
        for row in 0..self.height {
            for col in 0..self.width {
                let (cx, cy) = self.cell_center(col, row);
                if patch.contains_point(cx, cy) {
                    let v = self.get(col, row);
                    best = Some(best.map_or(v, |b| b.max(v)));
                }
            }
        }
        if let Some(v) = best {
            return Ok(v);
        }
        let (px, py) = patch.center();
        let mut nearest = (f64::INFINITY, 0.0);
        for row in 0..self.height {
            for col in 0..self.width {
                let (cx, cy) = self.cell_center(col, row);
                let d2 = (cx - px).powi(2) + (cy - py).powi(2);
                if d2 < nearest.0 {
                    nearest = (d2, self.get(col, row));
                }
            }
        }
        Ok(nearest.1)
    }

    /// Resamples this heatmap onto a fresh grid covering `patch`, taking
    /// the value of the cell under each new cell center. The patch must be
    /// contained in the frame.
    pub fn restrict(&self, patch: &Rect, grid: (usize, usize)) -> Result<Heatmap> {
        if !self.frame.contains_rect(patch) {
            return Err(Error::PatchOutsideFrame {
                patch: *patch,
                frame: self.frame,
            });
        }
        let (gw, gh) = grid;
        let mut out = Heatmap::zeros(gw, gh, *patch);
        for row in 0..gh {
            for col in 0..gw {
                let (cx, cy) = out.cell_center(col, row);
                out.values[row * gw + col] = self.value_at(cx, cy);
            }
        }
        Ok(out)
    }
}

/// Temporally ordered fixation points over an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSequence {
    points: Vec<(f64, f64)>,
    image_extent: Rect,
}

impl FixationSequence {
    pub fn new(points: Vec<(f64, f64)>, image_extent: Rect) -> Result<Self> {
        for &(x, y) in &points {
            let inside = x.is_finite()
                && y.is_finite()
                && x >= f64::from(image_extent.x)
                && x <= image_extent.right() as f64
                && y >= f64::from(image_extent.y)
                && y <= image_extent.bottom() as f64;
            if !inside {
                return Err(Error::DataFormat(format!(
                    "fixation point ({x}, {y}) outside image extent {image_extent}"
                )));
            }
        }
        Ok(Self {
            points,
            image_extent,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn image_extent(&self) -> &Rect {
        &self.image_extent
    }
}

/// Default peak amplitude of generated guidance heatmaps. Chosen so a
/// strong cue clears the level-0 prominence threshold.
pub const DEFAULT_AMPLITUDE: f64 = 6.0;

/// Converts a fixation sequence into a guidance heatmap by summing
/// Gaussians centered at each fixation. The i-th fixation (0-indexed)
/// is weighted `gamma^i`, so earlier fixations dominate. A non-empty
/// result is rescaled so its global maximum equals `amplitude`.
pub fn fixations_to_heatmap(
    fixations: &FixationSequence,
    gamma: f64,
    sigma: f64,
    grid: (usize, usize),
    amplitude: f64,
) -> Result<Heatmap> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
        });
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "amplitude",
            value: amplitude,
        });
    }
    let (gw, gh) = grid;
    let mut map = Heatmap::zeros(gw, gh, *fixations.image_extent());
    if fixations.points().is_empty() {
        return Ok(map);
    }
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    for row in 0..gh {
        for col in 0..gw {
            let (cx, cy) = map.cell_center(col, row);
            let mut v = 0.0;
            let mut weight = 1.0;
            for &(fx, fy) in fixations.points() {
                let d2 = (cx - fx).powi(2) + (cy - fy).powi(2);
                v += weight * (-d2 * inv_two_sigma_sq).exp();
                weight *= gamma;
            }
            map.values[row * gw + col] = v;
        }
    }
    let max = map.max_value()?;
    if max > 0.0 {
        let k = amplitude / max;
        for v in &mut map.values {
            *v *= k;
        }
    }
    Ok(map)
}

/// 8-bit grayscale raster produced from a heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Maps a heatmap linearly onto 8-bit gray: min to 0, max to 255.
/// Constant heatmaps come out all black.
pub fn render_heatmap(h: &Heatmap) -> GrayBuffer {
    let mut pixels = vec![0u8; h.values.len()];
    let min = h.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = h.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        let scale = 255.0 / (max - min);
        for (p, &v) in pixels.iter_mut().zip(&h.values) {
            *p = ((v - min) * scale).round().clamp(0.0, 255.0) as u8;
        }
    }
    GrayBuffer {
        width: h.width,
        height: h.height,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::subdivide;
    use approx::assert_relative_eq;

    fn frame(w: u32, h: u32) -> Rect {
        Rect::new(0, 0, w, h).unwrap()
    }

    #[test]
    fn max_value_basics() {
        let h = Heatmap::new(2, 2, frame(2, 2), vec![0.0, 0.0, 0.0, 5.1]).unwrap();
        assert_eq!(h.max_value().unwrap(), 5.1);
        let z = Heatmap::zeros(4, 4, frame(4, 4));
        assert_eq!(z.max_value().unwrap(), 0.0);
        let empty = Heatmap::new(0, 0, frame(4, 4), vec![]).unwrap();
        assert!(matches!(empty.max_value(), Err(Error::EmptyHeatmap)));
    }

    #[test]
    fn construction_rejects_bad_grids() {
        assert!(matches!(
            Heatmap::new(2, 2, frame(2, 2), vec![0.0; 3]),
            Err(Error::GridShape { .. })
        ));
        assert!(matches!(
            Heatmap::new(2, 1, frame(2, 2), vec![0.0, f64::NAN]),
            Err(Error::NonFiniteValue { index: 1 })
        ));
        assert!(matches!(
            Heatmap::new(1, 1, frame(2, 2), vec![f64::INFINITY]),
            Err(Error::NonFiniteValue { index: 0 })
        ));
    }

    #[test]
    fn patch_priority_takes_covered_max() {
        let mut values = vec![0.0; 16];
        values[5] = 5.0; // col 1, row 1 of a 4x4 grid over 400x400
        let h = Heatmap::new(4, 4, frame(400, 400), values).unwrap();
        let left_half = Rect::new(0, 0, 200, 400).unwrap();
        assert_eq!(h.patch_priority(&left_half).unwrap(), 5.0);
        let right_half = Rect::new(200, 0, 200, 400).unwrap();
        assert_eq!(h.patch_priority(&right_half).unwrap(), 0.0);
        assert_eq!(h.patch_priority(h.frame()).unwrap(), h.max_value().unwrap());
    }

    #[test]
    fn patch_priority_quadrant_matches_brute_force() {
        // 8x8 grid over 800x800; the top-left quadrant covers exactly
        // cells (0..4, 0..4).
        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut values = Vec::with_capacity(64);
        for _ in 0..64 {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            values.push((rng_state >> 11) as f64 / (1u64 << 53) as f64 * 10.0);
        }
        let h = Heatmap::new(8, 8, frame(800, 800), values.clone()).unwrap();
        let quadrant = Rect::new(0, 0, 400, 400).unwrap();
        let mut expected = f64::NEG_INFINITY;
        for row in 0..4 {
            for col in 0..4 {
                expected = expected.max(values[row * 8 + col]);
            }
        }
        assert_eq!(h.patch_priority(&quadrant).unwrap(), expected);
    }

    #[test]
    fn patch_priority_falls_back_to_nearest_cell() {
        // 2x2 grid over 400x400; a 3x3 patch covers no cell center.
        let h = Heatmap::new(2, 2, frame(400, 400), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let tiny = Rect::new(350, 350, 3, 3).unwrap();
        // Nearest cell center to (351.5, 351.5) is (300, 300) -> value 4.0.
        assert_eq!(h.patch_priority(&tiny).unwrap(), 4.0);
    }

    #[test]
    fn patch_priority_rejects_outside_patch() {
        let h = Heatmap::zeros(2, 2, frame(100, 100));
        let outside = Rect::new(50, 50, 100, 100).unwrap();
        assert!(matches!(
            h.patch_priority(&outside),
            Err(Error::PatchOutsideFrame { .. })
        ));
    }

    #[test]
    fn priority_decomposes_over_subdivision() {
        let mut values = Vec::with_capacity(144);
        for i in 0..144u64 {
            values.push(((i * 37) % 101) as f64);
        }
        let h = Heatmap::new(12, 12, frame(600, 600), values).unwrap();
        let parent = *h.frame();
        let children = subdivide(&parent, 1);
        let child_max = children
            .iter()
            .map(|c| h.patch_priority(c).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(child_max, h.patch_priority(&parent).unwrap());
    }

    #[test]
    fn empty_fixations_yield_zero_map() {
        let seq = FixationSequence::new(vec![], frame(1000, 1000)).unwrap();
        let h = fixations_to_heatmap(&seq, 0.9, 50.0, (16, 16), 6.0).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_fixation_peaks_at_amplitude() {
        let seq = FixationSequence::new(vec![(500.0, 500.0)], frame(1000, 1000)).unwrap();
        let h = fixations_to_heatmap(&seq, 0.9, 60.0, (16, 16), 6.0).unwrap();
        assert_relative_eq!(h.max_value().unwrap(), 6.0);
        // The peak cell is the one containing the fixation.
        let peak = h.value_at(500.0, 500.0);
        assert_relative_eq!(peak, 6.0);
    }

    #[test]
    fn fixation_weights_decay_geometrically() {
        // Three fixations far apart relative to sigma: the local peaks
        // carry weights 1, gamma, gamma^2 up to negligible cross terms.
        let gamma = 0.9;
        let pts = vec![(100.0, 100.0), (900.0, 100.0), (500.0, 900.0)];
        let seq = FixationSequence::new(pts.clone(), frame(1000, 1000)).unwrap();
        let h = fixations_to_heatmap(&seq, gamma, 20.0, (50, 50), 6.0).unwrap();
        let peaks: Vec<f64> = pts.iter().map(|&(x, y)| h.value_at(x, y)).collect();
        assert_relative_eq!(peaks[1] / peaks[0], gamma, epsilon = 1e-6);
        assert_relative_eq!(peaks[2] / peaks[1], gamma, epsilon = 1e-6);
    }

    #[test]
    fn two_fixation_peak_ratio_matches_direct_sum() {
        // Independent evaluation of the double-Gaussian sum at both
        // fixation points, compared against the rendered grid.
        let gamma = 0.9;
        let sigma = 20.0;
        let p0 = (110.0, 110.0);
        let p1 = (890.0, 890.0);
        let seq = FixationSequence::new(vec![p0, p1], frame(1000, 1000)).unwrap();
        let h = fixations_to_heatmap(&seq, gamma, sigma, (100, 100), 6.0).unwrap();

        let gauss = |a: (f64, f64), b: (f64, f64)| {
            let d2 = (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            (-d2 / (2.0 * sigma * sigma)).exp()
        };
        // Evaluate at the exact cell centers covering each fixation
        // (10px cells, centers at 5, 15, ...).
        let center_of = |p: (f64, f64)| {
            let col = (p.0 / 10.0).floor();
            let row = (p.1 / 10.0).floor();
            (col * 10.0 + 5.0, row * 10.0 + 5.0)
        };
        let v0 = gauss(center_of(p0), p0) + gamma * gauss(center_of(p0), p1);
        let v1 = gauss(center_of(p1), p0) + gamma * gauss(center_of(p1), p1);
        let expected_ratio = v0 / v1;
        let got_ratio = h.value_at(p0.0, p0.1) / h.value_at(p1.0, p1.1);
        assert_relative_eq!(got_ratio, expected_ratio, epsilon = 1e-9);
        assert!(got_ratio > 1.0, "earlier fixation must dominate");
    }

    #[test]
    fn fixation_parameter_domains() {
        let seq = FixationSequence::new(vec![(1.0, 1.0)], frame(10, 10)).unwrap();
        for gamma in [0.0, 1.0, -0.5, 1.5] {
            assert!(fixations_to_heatmap(&seq, gamma, 1.0, (4, 4), 6.0).is_err());
        }
        assert!(fixations_to_heatmap(&seq, 0.9, 0.0, (4, 4), 6.0).is_err());
        assert!(fixations_to_heatmap(&seq, 0.9, -1.0, (4, 4), 6.0).is_err());
    }

    #[test]
    fn fixations_must_lie_inside_extent() {
        assert!(FixationSequence::new(vec![(11.0, 5.0)], frame(10, 10)).is_err());
        assert!(FixationSequence::new(vec![(10.0, 10.0)], frame(10, 10)).is_ok());
    }

    #[test]
    fn render_endpoints() {
        let z = Heatmap::zeros(3, 3, frame(3, 3));
        assert!(render_heatmap(&z).pixels.iter().all(|&p| p == 0));

        let h = Heatmap::new(2, 1, frame(2, 1), vec![0.0, 6.0]).unwrap();
        assert_eq!(render_heatmap(&h).pixels, vec![0, 255]);
    }

    #[test]
    fn render_ramp_is_monotone() {
        let values: Vec<f64> = (0..32).map(|i| i as f64 * 0.37).collect();
        let h = Heatmap::new(32, 1, frame(32, 1), values).unwrap();
        let px = render_heatmap(&h).pixels;
        assert!(px.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(px[0], 0);
        assert_eq!(px[31], 255);
    }

    #[test]
    fn restrict_samples_underlying_cells() {
        let h = Heatmap::new(2, 2, frame(100, 100), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let patch = Rect::new(50, 0, 50, 100).unwrap();
        let r = h.restrict(&patch, (2, 2)).unwrap();
        assert_eq!(r.values(), &[2.0, 2.0, 4.0, 4.0]);
        assert_eq!(r.frame(), &patch);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_scaling_preserves_sibling_order(
                values in proptest::collection::vec(0.0f64..100.0, 36),
                k in 0.01f64..50.0,
            ) {
                let f = frame(600, 600);
                let h = Heatmap::new(6, 6, f, values.clone()).unwrap();
                let scaled_values: Vec<f64> = values.iter().map(|v| v * k).collect();
                let s = Heatmap::new(6, 6, f, scaled_values).unwrap();
                let children = subdivide(&f, 1);
                let p: Vec<f64> = children.iter().map(|c| h.patch_priority(c).unwrap()).collect();
                let q: Vec<f64> = children.iter().map(|c| s.patch_priority(c).unwrap()).collect();
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        if p[i] > p[j] {
                            prop_assert!(q[i] >= q[j]);
                        }
                    }
                }
            }

            #[test]
            fn serde_round_trip(values in proptest::collection::vec(-50.0f64..50.0, 12)) {
                let h = Heatmap::new(4, 3, frame(40, 30), values).unwrap();
                let json = serde_json::to_string(&h).unwrap();
                let back: Heatmap = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, h);
            }
        }
    }
}
