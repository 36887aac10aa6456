//! Box geometry, pairwise edge features and the line-of-sight page graph.

mod features;
mod sight;

use serde::{Deserialize, Serialize};

use crate::corpus::BBox;
use crate::error::{Error, Result};

pub use features::{area_ratios, box_distances, edge_features, EdgeFeatures, EDGE_FEATURE_DIM};
pub use sight::{line_of_sight_graph, Adjacency};

/// Width of the per-node geometric embedding `(x0, y0, x1, y1, w, h)`.
pub const GEOMETRY_DIM: usize = 6;

/// Page-relative box with coordinates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl NormalizedBBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        NormalizedBBox { x0, y0, x1, y1 }
    }

    pub fn w(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn h(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.w() * self.h()
    }

    pub fn embedding(&self) -> [f64; GEOMETRY_DIM] {
        [self.x0, self.y0, self.x1, self.y1, self.w(), self.h()]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        NormalizedBBox::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }
}

pub fn normalize_bbox(b: &BBox, page_width: u32, page_height: u32) -> Result<NormalizedBBox> {
    if page_width == 0 || page_height == 0 {
        return Err(Error::InvalidArgument(format!(
            "page dimensions must be positive, got {page_width}x{page_height}"
        )));
    }
    let (w, h) = (page_width as f64, page_height as f64);
    Ok(NormalizedBBox::new(
        b.x0 as f64 / w,
        b.y0 as f64 / h,
        b.x1 as f64 / w,
        b.y1 as f64 / h,
    ))
}

/// Line-of-sight adjacency plus both orientations of every edge with its
/// 14-dim feature vector. Row `r` of the directed list is `(i, j)`: node `i`
/// receives from node `j` through `edge_features(box_i, box_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    pub adjacency: Adjacency,
    pub directed: Vec<(usize, usize)>,
    pub features: Vec<EdgeFeatures>,
}

impl DocumentGraph {
    pub fn build(boxes: &[NormalizedBBox]) -> Self {
        Self::from_adjacency(boxes, line_of_sight_graph(boxes))
    }

    pub fn from_adjacency(boxes: &[NormalizedBBox], adjacency: Adjacency) -> Self {
        let mut directed = Vec::with_capacity(2 * adjacency.edges.len());
        let mut features = Vec::with_capacity(2 * adjacency.edges.len());
        for &(i, j) in &adjacency.edges {
            for (a, b) in [(i, j), (j, i)] {
                directed.push((a, b));
                features.push(edge_features(&boxes[a], &boxes[b]));
            }
        }
        DocumentGraph {
            adjacency,
            directed,
            features,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_page_box() {
        let n = normalize_bbox(&BBox::new(0, 0, 1000, 1000), 1000, 1000).unwrap();
        assert_eq!(n.embedding(), [0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn division_arithmetic() {
        let n = normalize_bbox(&BBox::new(10, 20, 110, 40), 1000, 1000).unwrap();
        let expected = [0.01, 0.02, 0.11, 0.04, 0.10, 0.02];
        for (got, want) in n.embedding().iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn point_box() {
        let n = normalize_bbox(&BBox::new(500, 250, 500, 250), 1000, 1000).unwrap();
        assert_eq!(n.embedding(), [0.5, 0.25, 0.5, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn zero_page_rejected() {
        assert!(normalize_bbox(&BBox::new(0, 0, 0, 0), 0, 10).is_err());
    }

    #[test]
    fn directed_rows_carry_orientation() {
        let boxes = [
            NormalizedBBox::new(0.0, 0.0, 0.1, 0.1),
            NormalizedBBox::new(0.2, 0.0, 0.3, 0.1),
        ];
        let g = DocumentGraph::build(&boxes);
        assert_eq!(g.directed, vec![(0, 1), (1, 0)]);
        assert_eq!(g.features[0].0[6..10], [0.0, 0.0, 0.1, 0.1]);
        assert_eq!(g.features[1].0[6..10], [0.2, 0.0, 0.3, 0.1]);
    }
}
