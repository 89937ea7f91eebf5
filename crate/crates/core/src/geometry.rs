//! Screen-space geometry: points, axis-aligned boxes, and the two predicates
//! (point-in-box, IoU) everything else is built on.
//!
//! Coordinates use the usual screen convention: origin at the top-left,
//! x growing rightward, y growing downward. Values are stored as `f64` so
//! sub-pixel model outputs survive without loss.

use serde::{Deserialize, Serialize};

/// A point in screenshot pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// True when both coordinates are finite and non-negative.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.x >= 0.0 && self.y >= 0.0
    }
}

/// An axis-aligned bounding box `(x_l, y_l, x_r, y_r)`.
///
/// `(x_l, y_l)` is the top-left corner, `(x_r, y_r)` the bottom-right.
/// Zero-area boxes are legal: some datasets annotate bare points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_l: f64,
    pub y_l: f64,
    pub x_r: f64,
    pub y_r: f64,
}

impl BBox {
    pub fn new(x_l: f64, y_l: f64, x_r: f64, y_r: f64) -> Self {
        BBox { x_l, y_l, x_r, y_r }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_l, self.y_l, self.x_r, self.y_r]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.x_l <= self.x_r
            && self.y_l <= self.y_r
    }

    pub fn width(&self) -> f64 {
        self.x_r - self.x_l
    }

    pub fn height(&self) -> f64 {
        self.y_r - self.y_l
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_l + self.x_r) / 2.0, (self.y_l + self.y_r) / 2.0)
    }

    /// Lexicographic order on `(x_l, y_l, x_r, y_r)`, used for deterministic
    /// tie-breaking when matching detections.
    pub fn lex_cmp(&self, other: &BBox) -> std::cmp::Ordering {
        let a = [self.x_l, self.y_l, self.x_r, self.y_r];
        let b = [other.x_l, other.y_l, other.x_r, other.y_r];
        a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Boundary-inclusive point membership: true iff
/// `x_l <= x <= x_r` and `y_l <= y <= y_r`.
pub fn point_in_box(p: Point, b: BBox) -> bool {
    b.x_l <= p.x && p.x <= b.x_r && b.y_l <= p.y && p.y <= b.y_r
}

/// Intersection-over-union of two boxes, in `[0, 1]`.
///
/// Returns 0 when the union has zero area (two identical zero-area boxes
/// included), so the function is total over valid boxes.
pub fn iou(a: BBox, b: BBox) -> f64 {
    let ix = (a.x_r.min(b.x_r) - a.x_l.max(b.x_l)).max(0.0);
    let iy = (a.y_r.min(b.y_r) - a.y_l.max(b.y_l)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
