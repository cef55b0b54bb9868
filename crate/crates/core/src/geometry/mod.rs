//! Polygonal domains, meshes, boundary quadrature and Whitney grids.
//!
//! Everything here is two-dimensional. Formulas that carry the ambient
//! dimension take it from [`DIM`] so the exponent bookkeeping lives in one
//! place.

mod mesh;
mod quadrature;
mod whitney;

pub use mesh::{BoundaryEdge, CellKind, Mesh};
pub use quadrature::{boundary_quadrature, gauss_legendre, BoundaryPoint, BoundaryQuadrature};
pub use whitney::{Cube, WhitneyGrid, WhitneyParams};

use crate::error::{LabError, Result};

/// Ambient dimension of every computation in this crate.
pub const DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        Point2::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point2::new(a.x + t * dx, a.y + t * dy))
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Proper or touching intersection test for two closed segments.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(c, d, a))
        || (d2 == 0.0 && on(c, d, b))
        || (d3 == 0.0 && on(a, b, c))
        || (d4 == 0.0 && on(a, b, d))
}

/// A simple, positively oriented polygon with connected boundary.
#[derive(Debug, Clone)]
pub struct PolygonalDomain {
    vertices: Vec<Point2>,
    diameter: f64,
}

impl PolygonalDomain {
    /// Validates and normalizes the vertex list. Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(LabError::InvalidDomain(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(LabError::InvalidDomain("non-finite vertex".into()));
        }
        let area = signed_area(&vertices);
        let scale = bbox_of(&vertices).diag();
        if area.abs() <= 1e-14 * scale * scale {
            return Err(LabError::InvalidDomain("polygon has zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a.dist(b) == 0.0 {
                return Err(LabError::InvalidDomain(format!("repeated vertex at index {i}")));
            }
            for j in (i + 1)..n {
                // adjacent edges share an endpoint and are skipped
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(LabError::InvalidDomain(format!(
                        "edges {i} and {j} intersect (self-intersecting polygon)"
                    )));
                }
            }
        }
        let mut diameter: f64 = 0.0;
        for (i, p) in vertices.iter().enumerate() {
            for q in &vertices[i + 1..] {
                diameter = diameter.max(p.dist(*q));
            }
        }
        Ok(Self { vertices, diameter })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(pairs.iter().map(|&p| p.into()).collect())
    }

    pub fn unit_square() -> Self {
        Self::from_pairs(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).expect("valid square")
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::from_pairs(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Unit square with the upper-right quarter removed.
    pub fn l_shape() -> Self {
        Self::from_pairs(&[
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.5, 1.0],
            [0.0, 1.0],
        ])
        .expect("valid L-shape")
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bbox(&self) -> BBox {
        bbox_of(&self.vertices)
    }

    /// Exact Euclidean distance from `p` to the boundary polygon.
    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd containment test; points on the boundary may go either way.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let xc = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < xc {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True when every edge is axis-parallel.
    pub fn is_rectilinear(&self) -> bool {
        self.edges().all(|(a, b)| a.x == b.x || a.y == b.y)
    }

    /// Whether `p` lies on some boundary edge (within `tol`).
    pub fn on_boundary(&self, p: Point2, tol: f64) -> bool {
        self.distance_to_boundary(p) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point2,
    pub max: Point2,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }
    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
    pub fn diag(&self) -> f64 {
        self.width().hypot(self.height())
    }
    pub fn center(&self) -> Point2 {
        self.min.lerp(self.max, 0.5)
    }
}

fn bbox_of(points: &[Point2]) -> BBox {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    BBox { min, max }
}

fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

/// Distance between the closed axis-aligned square `[c, c + side]^2` and a segment.
pub fn square_segment_distance(corner: Point2, side: f64, a: Point2, b: Point2) -> f64 {
    let inside = |p: Point2| {
        p.x >= corner.x && p.x <= corner.x + side && p.y >= corner.y && p.y <= corner.y + side
    };
    if inside(a) || inside(b) {
        return 0.0;
    }
    let c = [
        corner,
        Point2::new(corner.x + side, corner.y),
        Point2::new(corner.x + side, corner.y + side),
        Point2::new(corner.x, corner.y + side),
    ];
    for i in 0..4 {
        if segments_intersect(a, b, c[i], c[(i + 1) % 4]) {
            return 0.0;
        }
    }
    let mut d = f64::INFINITY;
    for i in 0..4 {
        d = d.min(point_segment_distance(a, c[i], c[(i + 1) % 4]));
        d = d.min(point_segment_distance(b, c[i], c[(i + 1) % 4]));
        d = d.min(point_segment_distance(c[i], a, b));
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_distances() {
        let sq = PolygonalDomain::unit_square();
        assert_abs_diff_eq!(sq.distance_to_boundary(Point2::new(0.5, 0.5)), 0.5);
        assert_abs_diff_eq!(sq.distance_to_boundary(Point2::new(0.25, 0.5)), 0.25);
        assert_abs_diff_eq!(sq.diameter(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sq.perimeter(), 4.0);
    }

    #[test]
    fn l_shape_reentrant_corner_distance() {
        let l = PolygonalDomain::l_shape();
        let p = Point2::new(0.4, 0.4);
        // brute force over dense boundary sampling
        let mut brute = f64::INFINITY;
        for (a, b) in l.edges() {
            for k in 0..=20_000 {
                brute = brute.min(p.dist(a.lerp(b, k as f64 / 20_000.0)));
            }
        }
        let d = l.distance_to_boundary(p);
        assert_abs_diff_eq!(d, 0.1 * 2f64.sqrt(), epsilon = 1e-14);
        assert!((d - brute).abs() < 1e-4);
        assert!(l.contains(p));
        assert!(!l.contains(Point2::new(0.75, 0.75)));
        assert_abs_diff_eq!(l.area(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let d = PolygonalDomain::from_pairs(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(d.area() > 0.0);
    }

    #[test]
    fn degenerate_polygons_rejected() {
        let bowtie = PolygonalDomain::from_pairs(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bowtie, Err(LabError::InvalidDomain(_))));
        let flat = PolygonalDomain::from_pairs(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(flat, Err(LabError::InvalidDomain(_))));
    }

    #[test]
    fn square_segment_distance_cases() {
        let c = Point2::new(0.0, 0.0);
        let d = square_segment_distance(c, 1.0, Point2::new(2.0, 0.0), Point2::new(2.0, 1.0));
        assert_abs_diff_eq!(d, 1.0);
        let crossing = square_segment_distance(c, 1.0, Point2::new(-1.0, 0.5), Point2::new(2.0, 0.5));
        assert_eq!(crossing, 0.0);
    }
}
