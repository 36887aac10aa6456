mod common;

use common::oracles::sightline_oracle;
use common::{lattice_boxes, random_boxes, rng};
use ecn_core::geometry::{
    area_ratios, box_distances, edge_features, line_of_sight_graph, NormalizedBBox,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn sightlines_match_oracle_on_random_layouts() {
    let mut r = rng(7);
    for layout in 0..1000 {
        let n = r.gen_range(0..=50);
        let boxes = if layout % 2 == 0 {
            random_boxes(&mut r, n)
        } else {
            lattice_boxes(&mut r, n, 24)
        };
        let got = line_of_sight_graph(&boxes).edges;
        assert_eq!(got, sightline_oracle(&boxes), "layout {layout}: {boxes:?}");
    }
}

#[test]
fn distances_match_sampled_minimum() {
    let mut r = rng(11);
    let steps = 40;
    for _ in 0..200 {
        let boxes = random_boxes(&mut r, 2);
        let (a, b) = (&boxes[0], &boxes[1]);
        let points = |bx: &NormalizedBBox| {
            let mut pts = Vec::new();
            for s in 0..=steps {
                for t in 0..=steps {
                    let x = bx.x0 + bx.w() * s as f64 / steps as f64;
                    let y = bx.y0 + bx.h() * t as f64 / steps as f64;
                    pts.push((x, y));
                }
            }
            pts
        };
        let (pa, pb) = (points(a), points(b));
        let mut best = (f64::MAX, f64::MAX, f64::MAX);
        for &(ax, ay) in &pa {
            for &(bx, by) in &pb {
                let (dx, dy) = ((ax - bx).abs(), (ay - by).abs());
                best.0 = best.0.min(dx);
                best.1 = best.1.min(dy);
                best.2 = best.2.min(dx.hypot(dy));
            }
        }
        let (dh, dv, de) = box_distances(a, b);
        let slack = (a.w().max(b.w()) + a.h().max(b.h())) / steps as f64;
        // For disjoint projections the per-axis minimum sits on a sampled
        // corner; overlapping projections give 0 up to sampling resolution.
        for (d, sampled, disjoint) in [
            (dh, best.0, a.x1 < b.x0 || b.x1 < a.x0),
            (dv, best.1, a.y1 < b.y0 || b.y1 < a.y0),
        ] {
            if disjoint {
                assert!((d - sampled).abs() < 1e-12, "{d} vs {sampled}");
            } else {
                assert!(d == 0.0 && sampled <= slack, "{d} vs {sampled}");
            }
        }
        assert!(
            de <= best.2 + 1e-12 && best.2 <= de + slack,
            "{de} vs {}",
            best.2
        );
    }
}

#[test]
fn area_ratios_match_rasterized_counts() {
    let mut r = rng(3);
    let cells = 30u32;
    for _ in 0..300 {
        let boxes = lattice_boxes(&mut r, 2, cells);
        let (a, b) = (&boxes[0], &boxes[1]);
        let to_cell = |v: f64| (v * cells as f64).round() as i64;
        let inside = |bx: &NormalizedBBox, x: i64, y: i64| {
            to_cell(bx.x0) <= x && x < to_cell(bx.x1) && to_cell(bx.y0) <= y && y < to_cell(bx.y1)
        };
        let (ex0, ex1) = (to_cell(a.x0.min(b.x0)), to_cell(a.x1.max(b.x1)));
        let (ey0, ey1) = (to_cell(a.y0.min(b.y0)), to_cell(a.y1.max(b.y1)));
        let (mut ca, mut cb, mut ci, mut ce) = (0.0, 0.0, 0.0, 0.0);
        for y in ey0..ey1 {
            for x in ex0..ex1 {
                ce += 1.0;
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                ca += ia as u8 as f64;
                cb += ib as u8 as f64;
                ci += (ia && ib) as u8 as f64;
            }
        }
        let (ri, ro, rio) = area_ratios(a, b);
        assert!((ri - ci / ce).abs() < 1e-9);
        assert!((ro - (ca + cb) / ce).abs() < 1e-9);
        assert!((rio - ci / (ca + cb - ci)).abs() < 1e-9);
    }
}

#[test]
fn degenerate_enclosing_box_gives_zero_ratios() {
    let line = NormalizedBBox::new(0.1, 0.5, 0.4, 0.5);
    let other = NormalizedBBox::new(0.2, 0.5, 0.6, 0.5);
    assert_eq!(area_ratios(&line, &other), (0.0, 0.0, 0.0));
}

fn arb_box() -> impl Strategy<Value = NormalizedBBox> {
    (0.0..0.9f64, 0.0..0.9f64, 0.0..0.5f64, 0.0..0.5f64)
        .prop_map(|(x, y, w, h)| NormalizedBBox::new(x, y, (x + w).min(1.0), (y + h).min(1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn pair_invariants(a in arb_box(), b in arb_box(), dx in -0.5..0.5f64, dy in -0.5..0.5f64) {
        let f = edge_features(&a, &b).0;
        let g = edge_features(&b, &a).0;
        // Symmetric scalars; the coordinate blocks swap.
        for k in 0..6 {
            prop_assert_eq!(f[k], g[k]);
        }
        prop_assert_eq!(&f[6..10], &g[10..14]);

        let (dh, dv, de) = (f[0], f[1], f[2]);
        prop_assert!(dh >= 0.0 && dv >= 0.0);
        prop_assert!(de >= dh.max(dv));
        prop_assert!(de <= dh + dv + 1e-15);
        prop_assert!((0.0..=1.0).contains(&f[3]), "r_inter {}", f[3]);
        prop_assert!((0.0..=2.0).contains(&f[4]), "r_outer {}", f[4]);
        prop_assert!((0.0..=1.0).contains(&f[5]), "IoU {}", f[5]);
        prop_assert!(f[3] <= f[5] + 1e-15);

        let touching = a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
        prop_assert_eq!(de == 0.0, touching);

        let (ta, tb) = (a.translate(dx, dy), b.translate(dx, dy));
        let t = edge_features(&ta, &tb).0;
        for k in 0..6 {
            prop_assert!((t[k] - f[k]).abs() <= 1e-9, "feature {} moved under translation: {} vs {}", k, f[k], t[k]);
        }
    }
}

#[test]
fn outer_ratio_can_exceed_one_when_overlapping() {
    // Identical boxes: the sum of areas is twice the enclosing area.
    let a = NormalizedBBox::new(0.1, 0.1, 0.3, 0.3);
    let (ri, ro, rio) = area_ratios(&a, &a);
    assert!((ri - 1.0).abs() < 1e-12);
    assert!((ro - 2.0).abs() < 1e-12);
    assert!((rio - 1.0).abs() < 1e-12);
}
