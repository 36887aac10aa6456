//! Line-of-sight graph between axis-aligned boxes.
//!
//! Two boxes see each other when their projections overlap with positive
//! length on at least one axis and the open band between them (overlap
//! interval on that axis times the gap on the other) meets no third box's
//! interior. Boxes whose interiors intersect are always connected.

use super::NormalizedBBox;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adjacency {
    pub node_count: usize,
    /// Sorted, `i < j`, no duplicates.
    pub edges: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn new(node_count: usize, mut edges: Vec<(usize, usize)>) -> Self {
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.retain(|&(i, j)| i != j);
        edges.sort_unstable();
        edges.dedup();
        Adjacency { node_count, edges }
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(i, j)| match node {
            n if n == i => Some(j),
            n if n == j => Some(i),
            _ => None,
        })
    }
}

/// Open rectangle `(x0, x1) × (y0, y1)`.
#[derive(Debug, Clone, Copy)]
struct Band {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Band {
    fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    fn meets_interior(&self, b: &NormalizedBBox) -> bool {
        b.x0 < b.x1
            && b.y0 < b.y1
            && b.x0 < self.x1
            && b.x1 > self.x0
            && b.y0 < self.y1
            && b.y1 > self.y0
    }
}

enum Sight {
    Overlapping,
    Through(Band),
    None,
}

fn sight(a: &NormalizedBBox, b: &NormalizedBBox) -> Sight {
    let ox = a.x1.min(b.x1) - a.x0.max(b.x0);
    let oy = a.y1.min(b.y1) - a.y0.max(b.y0);
    match (ox > 0.0, oy > 0.0) {
        (true, true) => Sight::Overlapping,
        // Side by side: the band spans the horizontal gap.
        (false, true) => Sight::Through(Band {
            x0: a.x1.min(b.x1),
            x1: a.x0.max(b.x0),
            y0: a.y0.max(b.y0),
            y1: a.y1.min(b.y1),
        }),
        (true, false) => Sight::Through(Band {
            x0: a.x0.max(b.x0),
            x1: a.x1.min(b.x1),
            y0: a.y1.min(b.y1),
            y1: a.y0.max(b.y0),
        }),
        (false, false) => Sight::None,
    }
}

/// Uniform bucket grid over the boxes' bounding region.
struct Grid {
    origin: (f64, f64),
    cell: (f64, f64),
    size: usize,
    buckets: Vec<Vec<u32>>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl Grid {
    fn new(boxes: &[NormalizedBBox]) -> Self {
        let size = ((boxes.len() as f64).sqrt().ceil() as usize).clamp(1, 64);
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for b in boxes {
            lo_x = lo_x.min(b.x0);
            lo_y = lo_y.min(b.y0);
            hi_x = hi_x.max(b.x1);
            hi_y = hi_y.max(b.y1);
        }
        let span = |lo: f64, hi: f64| {
            if hi > lo {
                (hi - lo) / size as f64
            } else {
                1.0
            }
        };
        let mut grid = Grid {
            origin: (lo_x, lo_y),
            cell: (span(lo_x, hi_x), span(lo_y, hi_y)),
            size,
            buckets: vec![Vec::new(); size * size],
            stamp: vec![0; boxes.len()],
            epoch: 0,
        };
        for (idx, b) in boxes.iter().enumerate() {
            if b.x0 < b.x1 && b.y0 < b.y1 {
                let (cx0, cx1, cy0, cy1) = grid.cells(b.x0, b.x1, b.y0, b.y1);
                for cy in cy0..=cy1 {
                    for cx in cx0..=cx1 {
                        grid.buckets[cy * size + cx].push(idx as u32);
                    }
                }
            }
        }
        grid
    }

    fn cell_index(&self, v: f64, origin: f64, cell: f64) -> usize {
        (((v - origin) / cell).floor().max(0.0) as usize).min(self.size - 1)
    }

    fn cells(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> (usize, usize, usize, usize) {
        (
            self.cell_index(x0, self.origin.0, self.cell.0),
            self.cell_index(x1, self.origin.0, self.cell.0),
            self.cell_index(y0, self.origin.1, self.cell.1),
            self.cell_index(y1, self.origin.1, self.cell.1),
        )
    }

    /// True when any box other than `skip` meets the band's interior.
    fn blocked(&mut self, boxes: &[NormalizedBBox], band: &Band, skip: (usize, usize)) -> bool {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        let (cx0, cx1, cy0, cy1) = self.cells(band.x0, band.x1, band.y0, band.y1);
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                for &c in &self.buckets[cy * self.size + cx] {
                    let c = c as usize;
                    if c == skip.0 || c == skip.1 || self.stamp[c] == self.epoch {
                        continue;
                    }
                    self.stamp[c] = self.epoch;
                    if band.meets_interior(&boxes[c]) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Build the line-of-sight adjacency. Candidate pairs come from a sweep over
/// x-sorted and y-sorted orders; blockers are looked up in a bucket grid.
pub fn line_of_sight_graph(boxes: &[NormalizedBBox]) -> Adjacency {
    let n = boxes.len();
    if n < 2 {
        return Adjacency::new(n, Vec::new());
    }
    let mut candidates = overlapping_pairs(boxes, |b| (b.y0, b.y1));
    candidates.extend(overlapping_pairs(boxes, |b| (b.x0, b.x1)));
    candidates.sort_unstable();
    candidates.dedup();

    let mut grid = Grid::new(boxes);
    let edges = candidates
        .into_iter()
        .filter(|&(i, j)| match sight(&boxes[i], &boxes[j]) {
            Sight::Overlapping => true,
            Sight::Through(band) => band.is_empty() || !grid.blocked(boxes, &band, (i, j)),
            Sight::None => false,
        })
        .collect();
    Adjacency::new(n, edges)
}

/// All pairs `(i, j)`, `i < j`, whose projections on one axis overlap with
/// positive length.
fn overlapping_pairs(
    boxes: &[NormalizedBBox],
    interval: impl Fn(&NormalizedBBox) -> (f64, f64),
) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| interval(&boxes[a]).0.total_cmp(&interval(&boxes[b]).0));
    let mut pairs = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let (_, hi) = interval(&boxes[i]);
        for &j in &order[pos + 1..] {
            let (lo_j, hi_j) = interval(&boxes[j]);
            if lo_j >= hi {
                break;
            }
            let (lo_i, hi_i) = interval(&boxes[i]);
            if hi_i.min(hi_j) - lo_i.max(lo_j) > 0.0 {
                pairs.push((i.min(j), i.max(j)));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> NormalizedBBox {
        NormalizedBBox::new(x0, y0, x1, y1)
    }

    #[test]
    fn trivial_sizes() {
        assert!(line_of_sight_graph(&[]).edges.is_empty());
        assert!(line_of_sight_graph(&[b(0.0, 0.0, 1.0, 1.0)])
            .edges
            .is_empty());
    }

    #[test]
    fn vertical_stack_blocks_far_pair() {
        let boxes = [
            b(0.1, 0.0, 0.5, 0.1),
            b(0.1, 0.2, 0.5, 0.3),
            b(0.1, 0.4, 0.5, 0.5),
        ];
        assert_eq!(line_of_sight_graph(&boxes).edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn diagonal_boxes_do_not_see() {
        let boxes = [b(0.0, 0.0, 0.1, 0.1), b(0.2, 0.2, 0.3, 0.3)];
        assert!(line_of_sight_graph(&boxes).edges.is_empty());
    }

    #[test]
    fn overlapping_boxes_always_connect() {
        let boxes = [
            b(0.0, 0.0, 0.5, 0.5),
            b(0.4, 0.4, 0.9, 0.9),
            b(0.45, 0.45, 0.46, 0.46),
        ];
        let adj = line_of_sight_graph(&boxes);
        assert!(adj.edges.contains(&(0, 1)));
    }

    #[test]
    fn touching_boxes_connect() {
        let boxes = [b(0.0, 0.0, 0.2, 0.1), b(0.2, 0.0, 0.4, 0.1)];
        assert_eq!(line_of_sight_graph(&boxes).edges, vec![(0, 1)]);
    }

    #[test]
    fn zero_length_projection_overlap_is_no_edge() {
        // Corners touch: both projection overlaps have zero length.
        let boxes = [b(0.0, 0.0, 0.2, 0.2), b(0.2, 0.2, 0.4, 0.4)];
        assert!(line_of_sight_graph(&boxes).edges.is_empty());
    }

    #[test]
    fn partial_blocker_still_blocks() {
        let boxes = [
            b(0.0, 0.0, 0.1, 0.5),
            b(0.5, 0.0, 0.6, 0.5),
            b(0.3, 0.45, 0.35, 0.9),
        ];
        let adj = line_of_sight_graph(&boxes);
        assert!(!adj.edges.contains(&(0, 1)));
    }

    #[test]
    fn adjacency_normalizes_edges() {
        let adj = Adjacency::new(3, vec![(2, 1), (1, 2), (0, 0), (0, 2)]);
        assert_eq!(adj.edges, vec![(0, 2), (1, 2)]);
        assert_eq!(adj.neighbours(2).collect::<Vec<_>>(), vec![0, 1]);
    }
}
