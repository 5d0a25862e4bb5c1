//! Polygon scenes, validation, rasterization into label maps, and mask overlap.

use thiserror::Error;

use crate::grid::{BinaryMask, InstanceMap};

/// Validation and dimension errors for scene geometry.
#[derive(Debug, Error)]
pub enum GeometryError {
    /// Polygons need at least 3 vertices.
    #[error("polygon has {0} vertices, need at least 3")]
    TooFewVertices(usize),
    /// Consecutive duplicate vertices, including the closing pair.
    #[error("polygon vertices {0} and {1} are consecutive duplicates")]
    DuplicateVertex(usize, usize),
    #[error("polygon vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    /// Two edges of one polygon touch or cross.
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersection(usize, usize),
    #[error("scene dimensions {0}x{1} must be positive")]
    ZeroDimension(u32, u32),
    #[error("instance {instance} vertex {vertex} at ({x}, {y}) lies outside the {width}x{height} domain")]
    VertexOutOfDomain {
        instance: usize,
        vertex: usize,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// Simple polygon in pixel coordinates, validated on construction.
///
/// Vertices are listed in drawing order; the closing edge from the last
/// vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    points: Vec<(f64, f64)>,
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// True when `p` lies within the bounding box of segment (a, b).
/// Callers establish collinearity first.
fn within_box(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Segment intersection test counting shared endpoints and touches as hits.
fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(c, d, a))
        || (d2 == 0.0 && within_box(c, d, b))
        || (d3 == 0.0 && within_box(a, b, c))
        || (d4 == 0.0 && within_box(a, b, d))
}

impl Polygon {
    /// Validates vertex count, finiteness, consecutive duplicates, and
    /// self-intersection. Edges sharing a vertex may continue straight but
    /// must not fold back over each other.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        let n = points.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        for (i, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(GeometryError::NonFiniteVertex(i));
            }
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if points[i] == points[j] {
                return Err(GeometryError::DuplicateVertex(i, j));
            }
        }
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            let c = points[(i + 2) % n];
            // Fold-back at the shared vertex: collinear and reversing direction.
            if orient(a, b, c) == 0.0 && (b.0 - a.0) * (c.0 - b.0) + (b.1 - a.1) * (c.1 - b.1) < 0.0
            {
                return Err(GeometryError::SelfIntersection(i, (i + 1) % n));
            }
        }
        for i in 0..n {
            let a = points[i];
            let b = points[(i + 1) % n];
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue; // adjacent through the closing edge
                }
                let c = points[j];
                let d = points[(j + 1) % n];
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::SelfIntersection(i, j));
                }
            }
        }
        Ok(Polygon { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Axis-aligned bounding box as (min_x, min_y, max_x, max_y).
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut it = self.points.iter();
        let &(x0, y0) = it.next().expect("validated polygon is nonempty");
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (x0, y0, x0, y0);
        for &(x, y) in it {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        (min_x, min_y, max_x, max_y)
    }

    /// Boundary-inclusive even-odd containment test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let pts = &self.points;
        let n = pts.len();
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            if orient(a, b, (px, py)) == 0.0 && within_box(a, b, (px, py)) {
                return true;
            }
        }
        let mut inside = false;
        for i in 0..n {
            let (ax, ay) = pts[i];
            let (bx, by) = pts[(i + 1) % n];
            // Half-open vertical rule so a crossing at a vertex counts once.
            if (ay > py) != (by > py) {
                let t = (py - ay) / (by - ay);
                let cross_x = ax + t * (bx - ax);
                if px < cross_x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// An image domain with zero or more text instance polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonScene {
    width: u32,
    height: u32,
    instances: Vec<Polygon>,
}

impl PolygonScene {
    /// Checks positive dimensions and that every vertex lies within
    /// [0, width] x [0, height].
    pub fn new(width: u32, height: u32, instances: Vec<Polygon>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::ZeroDimension(width, height));
        }
        for (i, poly) in instances.iter().enumerate() {
            for (v, &(x, y)) in poly.points().iter().enumerate() {
                if x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 {
                    return Err(GeometryError::VertexOutOfDomain {
                        instance: i,
                        vertex: v,
                        x,
                        y,
                        width,
                        height,
                    });
                }
            }
        }
        Ok(PolygonScene {
            width,
            height,
            instances,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn instances(&self) -> &[Polygon] {
        &self.instances
    }
}

/// Paints every instance into a shared label map.
///
/// Pixel centers sit at (x + 0.5, y + 0.5); a center on a polygon boundary
/// counts as inside. `labels` carries 1-based instance indices, overlaps
/// keep the lowest index, and `mask` marks any labeled pixel. An instance
/// covering no pixel center contributes nothing.
pub fn rasterize(scene: &PolygonScene) -> (BinaryMask, InstanceMap) {
    let (w, h) = (scene.width(), scene.height());
    let mut labels = InstanceMap::new(w, h);
    for (idx, poly) in scene.instances().iter().enumerate() {
        let label = idx as u32 + 1;
        let (x0, y0, x1, y1) = poly.bbox();
        let xa = (x0.floor() as i64 - 1).clamp(0, w as i64 - 1) as u32;
        let xb = (x1.ceil() as i64 + 1).clamp(0, w as i64 - 1) as u32;
        let ya = (y0.floor() as i64 - 1).clamp(0, h as i64 - 1) as u32;
        let yb = (y1.ceil() as i64 + 1).clamp(0, h as i64 - 1) as u32;
        for y in ya..=yb {
            for x in xa..=xb {
                if labels.get(x, y) == 0 && poly.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels.set(x, y, label);
                }
            }
        }
    }
    (labels.to_mask(), labels)
}

/// Intersection over union of two masks; empty over empty is 0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(GeometryError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&pa, &pb) in a.data().iter().zip(b.data()) {
        if pa && pb {
            inter += 1;
        }
        if pa || pb {
            union += 1;
        }
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).unwrap()
    }

    /// Containment check against every pixel center, one polygon at a time,
    /// ignoring overlap resolution. Kept dumb on purpose.
    fn rasterize_reference(scene: &PolygonScene) -> BinaryMask {
        let mut mask = BinaryMask::new(scene.width(), scene.height());
        for poly in scene.instances() {
            for y in 0..scene.height() {
                for x in 0..scene.width() {
                    if poly.contains(x as f64 + 0.5, y as f64 + 0.5) {
                        mask.set(x, y, true);
                    }
                }
            }
        }
        mask
    }

    #[test]
    fn rejects_short_and_duplicate_polygons() {
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (1.0, 1.0)]),
            Err(GeometryError::TooFewVertices(2))
        ));
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 1.0)]),
            Err(GeometryError::DuplicateVertex(1, 2))
        ));
        // Closing duplicate: last vertex repeats the first.
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (2.0, 0.0), (1.0, 1.0), (0.0, 0.0)]),
            Err(GeometryError::DuplicateVertex(3, 0))
        ));
    }

    #[test]
    fn rejects_self_intersection() {
        // Bowtie: edges 0 and 2 cross.
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (4.0, 4.0), (4.0, 0.0), (0.0, 4.0)]),
            Err(GeometryError::SelfIntersection(..))
        ));
        // Spur: edge 1 folds straight back over edge 0.
        assert!(matches!(
            Polygon::new(vec![(0.0, 0.0), (4.0, 0.0), (2.0, 0.0), (2.0, 3.0)]),
            Err(GeometryError::SelfIntersection(..))
        ));
        // Touching vertex on a non-adjacent edge.
        assert!(matches!(
            Polygon::new(vec![
                (0.0, 0.0),
                (4.0, 0.0),
                (4.0, 2.0),
                (2.0, 0.0),
                (0.0, 2.0)
            ]),
            Err(GeometryError::SelfIntersection(..))
        ));
    }

    #[test]
    fn accepts_collinear_continuation() {
        // A redundant midpoint on one side is legal.
        assert!(Polygon::new(vec![
            (0.0, 0.0),
            (2.0, 0.0),
            (4.0, 0.0),
            (4.0, 3.0),
            (0.0, 3.0)
        ])
        .is_ok());
    }

    #[test]
    fn scene_rejects_out_of_domain_vertices() {
        let p = square(1.0, 1.0, 7.0, 3.0);
        assert!(matches!(
            PolygonScene::new(6, 6, vec![p]),
            Err(GeometryError::VertexOutOfDomain { .. })
        ));
        assert!(matches!(
            PolygonScene::new(0, 6, vec![]),
            Err(GeometryError::ZeroDimension(0, 6))
        ));
    }

    #[test]
    fn unit_square_covers_nine_centers() {
        let scene = PolygonScene::new(6, 6, vec![square(1.0, 1.0, 4.0, 4.0)]).unwrap();
        let (mask, labels) = rasterize(&scene);
        assert_eq!(mask.count_true(), 9);
        for y in 0..6 {
            for x in 0..6 {
                let inside = (1..4).contains(&x) && (1..4).contains(&y);
                assert_eq!(mask.get(x, y), inside, "pixel ({x}, {y})");
                assert_eq!(labels.get(x, y), if inside { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn empty_scene_rasterizes_to_zeros() {
        let scene = PolygonScene::new(5, 4, vec![]).unwrap();
        let (mask, labels) = rasterize(&scene);
        assert_eq!(mask.count_true(), 0);
        assert_eq!(labels.count_nonzero(), 0);
    }

    #[test]
    fn two_disjoint_squares_get_labels_one_and_two() {
        let scene = PolygonScene::new(
            12,
            6,
            vec![square(1.0, 1.0, 4.0, 4.0), square(7.0, 1.0, 10.0, 4.0)],
        )
        .unwrap();
        let (_, labels) = rasterize(&scene);
        let mut seen: Vec<u32> = labels.data().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn overlap_keeps_lower_instance_index() {
        let scene = PolygonScene::new(
            8,
            8,
            vec![square(1.0, 1.0, 5.0, 5.0), square(3.0, 3.0, 7.0, 7.0)],
        )
        .unwrap();
        let (_, labels) = rasterize(&scene);
        assert_eq!(labels.get(3, 3), 1);
        assert_eq!(labels.get(4, 4), 1);
        assert_eq!(labels.get(5, 5), 2);
    }

    #[test]
    fn mask_matches_labels_everywhere() {
        let scene = PolygonScene::new(
            16,
            10,
            vec![
                square(0.0, 0.0, 5.0, 5.0),
                Polygon::new(vec![(8.0, 1.0), (14.0, 2.0), (12.0, 8.0), (7.0, 6.0)]).unwrap(),
            ],
        )
        .unwrap();
        let (mask, labels) = rasterize(&scene);
        for y in 0..10 {
            for x in 0..16 {
                assert_eq!(mask.get(x, y), labels.get(x, y) != 0);
            }
        }
        assert_eq!(mask, rasterize_reference(&scene));
    }

    #[test]
    fn iou_identity_disjoint_and_partial() {
        let a = rasterize(&PolygonScene::new(8, 4, vec![square(0.0, 0.0, 2.0, 2.0)]).unwrap()).0;
        let b = rasterize(&PolygonScene::new(8, 4, vec![square(4.0, 0.0, 6.0, 2.0)]).unwrap()).0;
        // Two 2x2 squares sharing one column: intersection 2, union 6.
        let c = rasterize(&PolygonScene::new(8, 4, vec![square(1.0, 0.0, 3.0, 2.0)]).unwrap()).0;
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
        assert!((mask_iou(&a, &c).unwrap() - 2.0 / 6.0).abs() < 1e-15);
        let empty = BinaryMask::new(8, 4);
        assert_eq!(mask_iou(&empty, &empty).unwrap(), 0.0);
        let narrow = BinaryMask::new(4, 4);
        assert!(mask_iou(&a, &narrow).is_err());
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(bits_a in proptest::collection::vec(any::<bool>(), 48),
                            bits_b in proptest::collection::vec(any::<bool>(), 48)) {
            let a = BinaryMask::from_grid(crate::grid::Grid::from_vec(8, 6, bits_a));
            let b = BinaryMask::from_grid(crate::grid::Grid::from_vec(8, 6, bits_b));
            prop_assert_eq!(mask_iou(&a, &b).unwrap(), mask_iou(&b, &a).unwrap());
        }

        #[test]
        fn iou_self_is_one_when_nonempty(bits in proptest::collection::vec(any::<bool>(), 48)) {
            let a = BinaryMask::from_grid(crate::grid::Grid::from_vec(8, 6, bits));
            let expected = if a.count_true() == 0 { 0.0 } else { 1.0 };
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), expected);
        }

        #[test]
        fn rasterize_is_deterministic(x0 in 0.0f64..4.0, y0 in 0.0f64..4.0,
                                      w in 1.0f64..5.0, h in 1.0f64..5.0) {
            let p = square(x0, y0, x0 + w, y0 + h);
            let scene = PolygonScene::new(10, 10, vec![p]).unwrap();
            let (m1, l1) = rasterize(&scene);
            let (m2, l2) = rasterize(&scene);
            prop_assert_eq!(m1, m2);
            prop_assert_eq!(l1, l2);
        }
    }
}
