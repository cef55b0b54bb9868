use std::collections::HashMap;
use std::fmt::Write as _;

use super::{square_segment_distance, Point2, PolygonalDomain, DIM};
use crate::error::{LabError, Result};

/// Comparability constants in `c1 * l(Q) <= dist(Q, bdry) <= c2 * l(Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitneyParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for WhitneyParams {
    fn default() -> Self {
        Self { c1: 1.0, c2: 4.0 * (DIM as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cube {
    pub corner: Point2,
    pub side: f64,
    pub level: u32,
    /// Dyadic position relative to the root square at this level.
    pub i: u64,
    pub j: u64,
    /// Distance from the closed cube to the boundary.
    pub dist: f64,
}

impl Cube {
    pub fn center(&self) -> Point2 {
        Point2::new(self.corner.x + 0.5 * self.side, self.corner.y + 0.5 * self.side)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(DIM as i32)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.corner.x
            && p.x < self.corner.x + self.side
            && p.y >= self.corner.y
            && p.y < self.corner.y + self.side
    }
}

/// Dyadic Whitney cubes inside a polygon, built from the bounding square.
///
/// Cubes are the accepted leaves of a quadtree, so they have disjoint
/// interiors. The strip of boundary-touching cubes at the finest level is
/// left uncovered and reported through [`WhitneyGrid::tail_fraction`].
#[derive(Debug, Clone)]
pub struct WhitneyGrid {
    cubes: Vec<Cube>,
    depth: u32,
    tail_fraction: f64,
    root_corner: Point2,
    root_side: f64,
    params: WhitneyParams,
    index: HashMap<(u32, u64, u64), usize>,
    min_level: u32,
}

impl WhitneyGrid {
    pub fn build(domain: &PolygonalDomain, max_depth: u32) -> Result<Self> {
        Self::build_with(domain, max_depth, WhitneyParams::default())
    }

    pub fn build_with(domain: &PolygonalDomain, max_depth: u32, params: WhitneyParams) -> Result<Self> {
        if max_depth < 1 {
            return Err(LabError::InvalidParameter("max_depth must be at least 1".into()));
        }
        if !(params.c1 > 0.0 && params.c2 > params.c1) {
            return Err(LabError::InvalidParameter(format!("bad Whitney constants {params:?}")));
        }
        let bb = domain.bbox();
        let root_side = bb.width().max(bb.height());
        let root_corner = bb.min;
        let mut cubes = Vec::new();
        let mut stack: Vec<(u32, u64, u64)> = vec![(0, 0, 0)];
        while let Some((level, i, j)) = stack.pop() {
            let side = root_side / (1u64 << level) as f64;
            let corner = Point2::new(root_corner.x + i as f64 * side, root_corner.y + j as f64 * side);
            let dist = domain
                .edges()
                .map(|(a, b)| square_segment_distance(corner, side, a, b))
                .fold(f64::INFINITY, f64::min);
            let center = Point2::new(corner.x + 0.5 * side, corner.y + 0.5 * side);
            if dist > 0.0 && !domain.contains(center) {
                continue;
            }
            let comparable = dist >= params.c1 * side && dist <= params.c2 * side;
            if dist > 0.0 && comparable {
                cubes.push(Cube { corner, side, level, i, j, dist });
            } else if level < max_depth {
                for (di, dj) in [(1, 1), (0, 1), (1, 0), (0, 0)] {
                    stack.push((level + 1, 2 * i + di, 2 * j + dj));
                }
            }
        }
        if cubes.is_empty() {
            return Err(LabError::EmptyGrid);
        }
        cubes.sort_by_key(|c| (c.level, c.j, c.i));
        let index = cubes
            .iter()
            .enumerate()
            .map(|(k, c)| ((c.level, c.i, c.j), k))
            .collect();
        let covered: f64 = crate::sum::pairwise_sum(&cubes.iter().map(Cube::volume).collect::<Vec<_>>());
        let area = domain.area();
        let min_level = cubes.iter().map(|c| c.level).min().unwrap();
        Ok(Self {
            cubes,
            depth: max_depth,
            tail_fraction: ((area - covered) / area).max(0.0),
            root_corner,
            root_side,
            params,
            index,
            min_level,
        })
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tail_fraction
    }

    pub fn params(&self) -> WhitneyParams {
        self.params
    }

    /// Index of the cube containing `p`, if any.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        let fx = (p.x - self.root_corner.x) / self.root_side;
        let fy = (p.y - self.root_corner.y) / self.root_side;
        if !(0.0..1.0).contains(&fx) || !(0.0..1.0).contains(&fy) {
            return None;
        }
        for level in self.min_level..=self.depth {
            let n = (1u64 << level) as f64;
            let key = (level, (fx * n) as u64, (fy * n) as u64);
            if let Some(&k) = self.index.get(&key) {
                return Some(k);
            }
        }
        None
    }

    /// CSV with columns `corner_x,corner_y,side`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("corner_x,corner_y,side\n");
        for c in &self.cubes {
            writeln!(out, "{},{},{}", c.corner.x, c.corner.y, c.side).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(domain: &PolygonalDomain, grid: &WhitneyGrid) {
        let p = grid.params();
        for c in grid.cubes() {
            let d = domain
                .edges()
                .map(|(a, b)| square_segment_distance(c.corner, c.side, a, b))
                .fold(f64::INFINITY, f64::min);
            assert!(p.c1 * c.side <= d + 1e-15 && d <= p.c2 * c.side + 1e-15, "{c:?}");
            assert!(domain.contains(c.center()));
        }
        // disjoint interiors: leaves of one quadtree, so no cube is an ancestor of another
        for a in grid.cubes() {
            for b in grid.cubes() {
                if a.level < b.level {
                    let shift = b.level - a.level;
                    assert!(!(b.i >> shift == a.i && b.j >> shift == a.j));
                } else if a.level == b.level && (a.i, a.j) == (b.i, b.j) {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn unit_square_depth_three() {
        let sq = PolygonalDomain::unit_square();
        let g = WhitneyGrid::build(&sq, 3).unwrap();
        check_invariants(&sq, &g);
        // 4 cubes of side 1/4 and a ring of 20 cubes of side 1/8
        assert_eq!(g.len(), 24);
    }

    #[test]
    fn tail_is_the_uncovered_boundary_strip() {
        let sq = PolygonalDomain::unit_square();
        let mut prev = 1.0;
        for depth in 2..=8 {
            let g = WhitneyGrid::build(&sq, depth).unwrap();
            let strip = 1.0 / (1u64 << depth) as f64;
            let exact = 1.0 - (1.0 - 2.0 * strip).powi(2);
            assert!((g.tail_fraction() - exact).abs() < 1e-12, "depth {depth}");
            assert!(g.tail_fraction() <= prev);
            prev = g.tail_fraction();
        }
        assert!(WhitneyGrid::build(&sq, 7).unwrap().tail_fraction() < 0.05);
    }

    #[test]
    fn refinement_keeps_existing_cubes() {
        let l = PolygonalDomain::l_shape();
        let coarse = WhitneyGrid::build(&l, 4).unwrap();
        let fine = WhitneyGrid::build(&l, 6).unwrap();
        check_invariants(&l, &fine);
        for c in coarse.cubes() {
            assert!(fine.cubes().contains(c));
        }
    }

    #[test]
    fn locate_points() {
        let sq = PolygonalDomain::unit_square();
        let g = WhitneyGrid::build(&sq, 5).unwrap();
        let k = g.locate(Point2::new(0.5, 0.5)).unwrap();
        assert_eq!(g.cubes()[k].side, 0.25);
        assert!(g.locate(Point2::new(0.001, 0.5)).is_none());
        assert!(g.to_csv().starts_with("corner_x,corner_y,side\n0.25,0.25,0.25"));
    }
}
