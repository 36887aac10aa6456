//! Pairwise geometric edge features.
//!
//! Layout: `[d_h, d_v, d_e, r_inter, r_outer, r_interouter, a.x0, a.y0,
//! a.x1, a.y1, b.x0, b.y0, b.x1, b.y1]`.

use serde::{Deserialize, Serialize};

use super::NormalizedBBox;

pub const EDGE_FEATURE_DIM: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures(pub [f64; EDGE_FEATURE_DIM]);

/// Gap between two closed intervals, 0 when they overlap or touch.
fn interval_gap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a0.max(b0) - a1.min(b1)).max(0.0)
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Horizontal, vertical and Euclidean distance between the closest points.
pub fn box_distances(a: &NormalizedBBox, b: &NormalizedBBox) -> (f64, f64, f64) {
    let dh = interval_gap(a.x0, a.x1, b.x0, b.x1);
    let dv = interval_gap(a.y0, a.y1, b.y0, b.y1);
    (dh, dv, dh.hypot(dv))
}

/// `(I / area(E), (area(a) + area(b)) / area(E), IoU)` where `E` is the
/// enclosing box of both and `I` their intersection area. All zero when `E`
/// has no area.
pub fn area_ratios(a: &NormalizedBBox, b: &NormalizedBBox) -> (f64, f64, f64) {
    let enclosing = (a.x1.max(b.x1) - a.x0.min(b.x0)) * (a.y1.max(b.y1) - a.y0.min(b.y0));
    if enclosing <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let inter = interval_overlap(a.x0, a.x1, b.x0, b.x1) * interval_overlap(a.y0, a.y1, b.y0, b.y1);
    let total = a.area() + b.area();
    let union = total - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    (inter / enclosing, total / enclosing, iou)
}

pub fn edge_features(a: &NormalizedBBox, b: &NormalizedBBox) -> EdgeFeatures {
    let (dh, dv, de) = box_distances(a, b);
    let (ri, ro, rio) = area_ratios(a, b);
    EdgeFeatures([
        dh, dv, de, ri, ro, rio, a.x0, a.y0, a.x1, a.y1, b.x0, b.y0, b.x1, b.y1,
    ])
}
