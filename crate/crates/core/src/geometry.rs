//! Rectangles, patch subdivision, orientation classification, and mapping
//! between a patch's local frame and the root image frame.
//!
//! Subdivision always produces four non-overlapping children that tile the
//! parent exactly. The split layout depends on the parent's orientation so
//! that children stay close to square: landscape parents split into four
//! columns, portrait parents into four rows, everything else into a 2x2
//! grid. All types here are plain values and all functions are pure.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in root-image pixel coordinates.
///
/// Serializes in corner form `[x1, y1, x2, y2]` with `x2 = x + w` and
/// `y2 = y + h`, the convention used by traces and rendered prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidRect(format!(
                "zero-sized rectangle {w}x{h} at ({x}, {y})"
            )));
        }
        if u64::from(x) + u64::from(w) > u64::from(u32::MAX)
            || u64::from(y) + u64::from(h) > u64::from(u32::MAX)
        {
            return Err(Error::InvalidRect(format!(
                "rectangle ({x}, {y}, {w}, {h}) overflows the coordinate range"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_corners(x1: u64, y1: u64, x2: u64, y2: u64) -> Result<Self> {
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidRect(format!(
                "degenerate corners [{x1}, {y1}, {x2}, {y2}]"
            )));
        }
        let to_u32 = |v: u64, name: &str| -> Result<u32> {
            u32::try_from(v)
                .map_err(|_| Error::InvalidRect(format!("{name} {v} out of range")))
        };
        Rect::new(
            to_u32(x1, "x1")?,
            to_u32(y1, "y1")?,
            to_u32(x2 - x1, "width")?,
            to_u32(y2 - y1, "height")?,
        )
    }

    /// Exclusive right edge, `x + w`.
    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    /// Exclusive bottom edge, `y + h`.
    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn shorter_side(&self) -> u32 {
        self.w.min(self.h)
    }

    pub fn longer_side(&self) -> u32 {
        self.w.max(self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            f64::from(self.x) + f64::from(self.w) / 2.0,
            f64::from(self.y) + f64::from(self.h) / 2.0,
        )
    }

    /// Half-open containment test: the left/top edges are inside, the
    /// right/bottom edges are not. Keeps point-to-patch assignment unique
    /// across a subdivision.
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= f64::from(self.x)
            && px < self.right() as f64
            && py >= f64::from(self.y)
            && py < self.bottom() as f64
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = self.right().min(other.right());
        let y2 = self.bottom().min(other.bottom());
        Rect::from_corners(u64::from(x1), u64::from(y1), x2, y2).ok()
    }

    /// Corner form `[x1, y1, x2, y2]`.
    pub fn corners(&self) -> [u64; 4] {
        [
            u64::from(self.x),
            u64::from(self.y),
            self.right(),
            self.bottom(),
        ]
    }

    /// Grows the rectangle by `frac` of its size on every side, then clips
    /// the result to `bounds`. Errors when the clipped region is empty.
    pub fn expand_within(&self, frac: f64, bounds: &Rect) -> Result<Rect> {
        if !frac.is_finite() || frac < 0.0 {
            return Err(Error::InvalidParameter {
                name: "margin_frac",
                value: frac,
            });
        }
        let dx = (frac * f64::from(self.w)).round() as i64;
        let dy = (frac * f64::from(self.h)).round() as i64;
        let x1 = (i64::from(self.x) - dx).max(i64::from(bounds.x)) as u64;
        let y1 = (i64::from(self.y) - dy).max(i64::from(bounds.y)) as u64;
        let x2 = (self.right() as i64 + dx).min(bounds.right() as i64).max(0) as u64;
        let y2 = (self.bottom() as i64 + dy).min(bounds.bottom() as i64).max(0) as u64;
        Rect::from_corners(x1, y1, x2, y2)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x1, y1, x2, y2] = self.corners();
        write!(f, "[{x1}, {y1}, {x2}, {y2}]")
    }
}

impl Serialize for Rect {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.corners().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rect {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[u64; 4]>::deserialize(deserializer)?;
        Rect::from_corners(x1, y1, x2, y2).map_err(D::Error::custom)
    }
}

/// Shape class of a rectangle, deciding the subdivision layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Landscape,
    Portrait,
    Balanced,
}

/// Landscape iff the width is strictly greater than twice the height,
/// portrait iff the height strictly exceeds twice the width. `w == 2h`
/// is balanced.
pub fn orientation(r: &Rect) -> Orientation {
    if u64::from(r.w) > 2 * u64::from(r.h) {
        Orientation::Landscape
    } else if u64::from(r.h) > 2 * u64::from(r.w) {
        Orientation::Portrait
    } else {
        Orientation::Balanced
    }
}

/// Splits `total` into `parts` integer lengths differing by at most one
/// pixel, earlier parts taking the remainder.
fn split_lengths(total: u32, parts: u32) -> Vec<u32> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + u32::from(i < rem)).collect()
}

/// Divides a patch into four non-overlapping children that tile it
/// exactly: 2x2 for balanced patches, one row of four columns for
/// landscape, four rows for portrait. Children come back in raster order
/// (left-to-right, top-to-bottom).
///
/// Returns an empty list when any child's shorter side would fall below
/// `min_side`; such a patch is a leaf of the search tree.
pub fn subdivide(r: &Rect, min_side: u32) -> Vec<Rect> {
    let min_side = min_side.max(1);
    let (cols, rows) = match orientation(r) {
        Orientation::Landscape => (4u32, 1u32),
        Orientation::Portrait => (1, 4),
        Orientation::Balanced => (2, 2),
    };
    // The smallest child dimension is the floor of the division.
    if (r.w / cols).min(r.h / rows) < min_side {
        return Vec::new();
    }
    let widths = split_lengths(r.w, cols);
    let heights = split_lengths(r.h, rows);
    let mut children = Vec::with_capacity(4);
    let mut y = r.y;
    for &ch in &heights {
        let mut x = r.x;
        for &cw in &widths {
            children.push(Rect { x, y, w: cw, h: ch });
            x += cw;
        }
        y += ch;
    }
    children
}

/// Translates a box expressed in `patch`-local coordinates into the root
/// frame. Errors when the box does not fit inside the patch extents.
pub fn to_root_frame(child_box: &Rect, patch: &Rect) -> Result<Rect> {
    if u64::from(child_box.x) + u64::from(child_box.w) > u64::from(patch.w)
        || u64::from(child_box.y) + u64::from(child_box.h) > u64::from(patch.h)
    {
        return Err(Error::BoxOutsidePatch {
            child: *child_box,
            patch: *patch,
        });
    }
    Rect::new(
        patch.x + child_box.x,
        patch.y + child_box.y,
        child_box.w,
        child_box.h,
    )
}
