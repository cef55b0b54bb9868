use std::collections::HashMap;

use super::{Point2, PolygonalDomain};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Counter-clockwise triangles.
    Triangle,
    /// Axis-aligned rectangles, vertices ordered lower-left, lower-right,
    /// upper-right, upper-left.
    Rectangle,
}

impl CellKind {
    pub fn n_vertices(self) -> usize {
        match self {
            CellKind::Triangle => 3,
            CellKind::Rectangle => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub cell: usize,
    /// Unit outward normal.
    pub normal: Point2,
}

#[derive(Debug, Clone)]
struct Locator {
    origin: Point2,
    cell_size: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

/// Conforming triangulation or rectangle grid of a polygonal domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    kind: CellKind,
    vertices: Vec<Point2>,
    cells: Vec<[usize; 4]>,
    boundary_edges: Vec<BoundaryEdge>,
    boundary_vertex: Vec<bool>,
    h: f64,
    locator: Locator,
}

impl Mesh {
    fn assemble(kind: CellKind, vertices: Vec<Point2>, cells: Vec<[usize; 4]>) -> Self {
        let nv = kind.n_vertices();
        let mut edge_count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            for i in 0..nv {
                let (a, b) = (cell[i], cell[(i + 1) % nv]);
                let key = (a.min(b), a.max(b));
                edge_count
                    .entry(key)
                    .and_modify(|e| e.2 += 1)
                    .or_insert((a, b, 1));
                let _ = c;
            }
        }
        let mut cell_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            for i in 0..nv {
                cell_of_edge.insert((cell[i], cell[(i + 1) % nv]), c);
            }
        }
        let mut boundary_edges: Vec<BoundaryEdge> = edge_count
            .values()
            .filter(|e| e.2 == 1)
            .map(|&(a, b, _)| {
                let (pa, pb) = (vertices[a], vertices[b]);
                let len = pa.dist(pb);
                BoundaryEdge {
                    a,
                    b,
                    cell: cell_of_edge[&(a, b)],
                    normal: Point2::new((pb.y - pa.y) / len, -(pb.x - pa.x) / len),
                }
            })
            .collect();
        boundary_edges.sort_by_key(|e| (e.a, e.b));
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in &boundary_edges {
            boundary_vertex[e.a] = true;
            boundary_vertex[e.b] = true;
        }
        let mut h: f64 = 0.0;
        for cell in &cells {
            for i in 0..nv {
                for j in (i + 1)..nv {
                    h = h.max(vertices[cell[i]].dist(vertices[cell[j]]));
                }
            }
        }
        let locator = Locator::build(kind, &vertices, &cells);
        Self {
            kind,
            vertices,
            cells,
            boundary_edges,
            boundary_vertex,
            h,
            locator,
        }
    }

    /// Triangulates `domain` by ear clipping and applies `levels` rounds of
    /// red refinement. Polygon edges are subdivided, never moved.
    pub fn triangulate(domain: &PolygonalDomain, levels: usize) -> Result<Self> {
        let verts: Vec<Point2> = domain.vertices().to_vec();
        let mut tris = ear_clip(&verts)?;
        let mut vertices = verts;
        for _ in 0..levels {
            let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point2>| -> usize {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    vertices.push(vertices[a].lerp(vertices[b], 0.5));
                    vertices.len() - 1
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for t in &tris {
                let [a, b, c] = *t;
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.push([a, ab, ca]);
                next.push([ab, b, bc]);
                next.push([ca, bc, c]);
                next.push([ab, bc, ca]);
            }
            tris = next;
        }
        let cells = tris.into_iter().map(|[a, b, c]| [a, b, c, usize::MAX]).collect();
        Ok(Self::assemble(CellKind::Triangle, vertices, cells))
    }

    /// Conforming triangle mesh with maximal cell diameter at most `h_target`.
    pub fn build(domain: &PolygonalDomain, h_target: f64) -> Result<Self> {
        if !(h_target > 0.0) {
            return Err(LabError::InvalidParameter(format!("h_target must be positive, got {h_target}")));
        }
        let mut levels = 0;
        loop {
            let mesh = Self::triangulate(domain, levels)?;
            if mesh.h <= h_target * (1.0 + 1e-12) {
                return Ok(mesh);
            }
            levels += 1;
            if levels > 14 {
                return Err(LabError::InvalidParameter(format!("h_target {h_target} too small")));
            }
        }
    }

    /// Uniform grid of square cells of side `spacing` covering a rectilinear
    /// domain whose vertices lie on the grid.
    pub fn rect_grid(domain: &PolygonalDomain, spacing: f64) -> Result<Self> {
        if !domain.is_rectilinear() {
            return Err(LabError::InvalidDomain("rectangle meshes need a rectilinear domain".into()));
        }
        let bb = domain.bbox();
        let snap = |v: f64| -> Option<i64> {
            let k = v / spacing;
            let r = k.round();
            ((k - r).abs() < 1e-9).then_some(r as i64)
        };
        for p in domain.vertices() {
            if snap(p.x - bb.min.x).is_none() || snap(p.y - bb.min.y).is_none() {
                return Err(LabError::InvalidDomain(format!(
                    "vertex ({}, {}) is not on the grid of spacing {spacing}",
                    p.x, p.y
                )));
            }
        }
        let nx = snap(bb.width()).unwrap() as usize;
        let ny = snap(bb.height()).unwrap() as usize;
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut cells = Vec::new();
        let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point2>| -> usize {
            *index.entry((j, i)).or_insert_with(|| {
                vertices.push(Point2::new(
                    bb.min.x + i as f64 * spacing,
                    bb.min.y + j as f64 * spacing,
                ));
                vertices.len() - 1
            })
        };
        for j in 0..ny {
            for i in 0..nx {
                let c = Point2::new(
                    bb.min.x + (i as f64 + 0.5) * spacing,
                    bb.min.y + (j as f64 + 0.5) * spacing,
                );
                if domain.contains(c) {
                    let a = vid(i, j, &mut vertices);
                    let b = vid(i + 1, j, &mut vertices);
                    let cc = vid(i + 1, j + 1, &mut vertices);
                    let d = vid(i, j + 1, &mut vertices);
                    cells.push([a, b, cc, d]);
                }
            }
        }
        if cells.is_empty() {
            return Err(LabError::InvalidDomain("no grid cell inside the domain".into()));
        }
        // renumber vertices row-major so the natural ordering is banded
        let mut order: Vec<usize> = (0..vertices.len()).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (vertices[a], vertices[b]);
            pa.y.partial_cmp(&pb.y).unwrap().then(pa.x.partial_cmp(&pb.x).unwrap())
        });
        let mut new_id = vec![0; vertices.len()];
        for (k, &old) in order.iter().enumerate() {
            new_id[old] = k;
        }
        let vertices: Vec<Point2> = order.iter().map(|&o| vertices[o]).collect();
        for c in &mut cells {
            for v in c.iter_mut() {
                *v = new_id[*v];
            }
        }
        Ok(Self::assemble(CellKind::Rectangle, vertices, cells))
    }

    /// [`Mesh::rect_grid`] with every square split along its lower-left to
    /// upper-right diagonal.
    pub fn rect_grid_triangles(domain: &PolygonalDomain, spacing: f64) -> Result<Self> {
        let rect = Self::rect_grid(domain, spacing)?;
        let mut cells = Vec::with_capacity(2 * rect.cells.len());
        for c in &rect.cells {
            cells.push([c[0], c[1], c[2], usize::MAX]);
            cells.push([c[0], c[2], c[3], usize::MAX]);
        }
        Ok(Self::assemble(CellKind::Triangle, rect.vertices, cells))
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.kind.n_vertices()]
    }

    pub fn cell_points(&self, c: usize) -> [Point2; 4] {
        let cell = &self.cells[c];
        let mut out = [Point2::default(); 4];
        for i in 0..self.kind.n_vertices() {
            out[i] = self.vertices[cell[i]];
        }
        out
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Maximal cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        match self.kind {
            CellKind::Triangle => {
                0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y))
            }
            CellKind::Rectangle => (p[2].x - p[0].x) * (p[2].y - p[0].y),
        }
    }

    /// Maps reference coordinates to physical coordinates.
    pub fn map_point(&self, c: usize, xi: f64, eta: f64) -> Point2 {
        let p = self.cell_points(c);
        match self.kind {
            CellKind::Triangle => Point2::new(
                p[0].x + xi * (p[1].x - p[0].x) + eta * (p[2].x - p[0].x),
                p[0].y + xi * (p[1].y - p[0].y) + eta * (p[2].y - p[0].y),
            ),
            CellKind::Rectangle => Point2::new(
                p[0].x + xi * (p[2].x - p[0].x),
                p[0].y + eta * (p[2].y - p[0].y),
            ),
        }
    }

    /// Reference coordinates of `x` in cell `c` (no containment check).
    pub fn reference_coords(&self, c: usize, x: Point2) -> (f64, f64) {
        let p = self.cell_points(c);
        match self.kind {
            CellKind::Triangle => {
                let (ax, ay) = (p[1].x - p[0].x, p[1].y - p[0].y);
                let (bx, by) = (p[2].x - p[0].x, p[2].y - p[0].y);
                let det = ax * by - bx * ay;
                let (rx, ry) = (x.x - p[0].x, x.y - p[0].y);
                ((rx * by - bx * ry) / det, (ax * ry - rx * ay) / det)
            }
            CellKind::Rectangle => (
                (x.x - p[0].x) / (p[2].x - p[0].x),
                (x.y - p[0].y) / (p[2].y - p[0].y),
            ),
        }
    }

    /// Finds a cell containing `x` and the reference coordinates there.
    pub fn locate(&self, x: Point2) -> Option<(usize, f64, f64)> {
        let tol = 1e-10;
        for &c in self.locator.bucket(x)? {
            let (xi, eta) = self.reference_coords(c, x);
            let inside = match self.kind {
                CellKind::Triangle => xi >= -tol && eta >= -tol && xi + eta <= 1.0 + tol,
                CellKind::Rectangle => {
                    (-tol..=1.0 + tol).contains(&xi) && (-tol..=1.0 + tol).contains(&eta)
                }
            };
            if inside {
                return Some((c, xi, eta));
            }
        }
        None
    }

    /// Vertex index with coordinates equal to `p` (to `tol`).
    pub fn find_vertex(&self, p: Point2, tol: f64) -> Option<usize> {
        let (c, _, _) = self.locate(p)?;
        self.cell(c).iter().copied().find(|&v| self.vertices[v].dist(p) <= tol)
    }
}

impl Locator {
    fn build(kind: CellKind, vertices: &[Point2], cells: &[[usize; 4]]) -> Self {
        let nv = kind.n_vertices();
        let (mut min, mut max) = (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for p in vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        let side = (max.x - min.x).max(max.y - min.y).max(1e-300);
        let n = ((cells.len() as f64).sqrt().ceil() as usize).max(1);
        let cell_size = side / n as f64;
        let (nx, ny) = (n, n);
        let mut buckets = vec![Vec::new(); nx * ny];
        let clampi = |v: f64, n: usize| -> usize { (v.max(0.0) as usize).min(n - 1) };
        for (c, cell) in cells.iter().enumerate() {
            let (mut lo, mut hi) = (
                Point2::new(f64::INFINITY, f64::INFINITY),
                Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            );
            for &v in &cell[..nv] {
                let p = vertices[v];
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
            let pad = 1e-9 * side;
            let i0 = clampi((lo.x - pad - min.x) / cell_size, nx);
            let i1 = clampi((hi.x + pad - min.x) / cell_size, nx);
            let j0 = clampi((lo.y - pad - min.y) / cell_size, ny);
            let j1 = clampi((hi.y + pad - min.y) / cell_size, ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(c);
                }
            }
        }
        Self { origin: min, cell_size, nx, ny, buckets }
    }

    fn bucket(&self, x: Point2) -> Option<&Vec<usize>> {
        let fx = (x.x - self.origin.x) / self.cell_size;
        let fy = (x.y - self.origin.y) / self.cell_size;
        let eps = 1e-9;
        if fx < -eps || fy < -eps || fx > self.nx as f64 + eps || fy > self.ny as f64 + eps {
            return None;
        }
        let i = (fx.max(0.0) as usize).min(self.nx - 1);
        let j = (fy.max(0.0) as usize).min(self.ny - 1);
        Some(&self.buckets[j * self.nx + i])
    }
}

fn ear_clip(vertices: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let mut idx: Vec<usize> = (0..vertices.len()).collect();
    let mut tris = Vec::new();
    let cross = |a: Point2, b: Point2, c: Point2| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let mut guard = 0;
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        for i in 0..n {
            let (ip, ic, inx) = (idx[(i + n - 1) % n], idx[i], idx[(i + 1) % n]);
            let (a, b, c) = (vertices[ip], vertices[ic], vertices[inx]);
            if cross(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&k| {
                if k == ip || k == ic || k == inx {
                    return false;
                }
                let p = vertices[k];
                cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
            });
            if !blocked {
                tris.push([ip, ic, inx]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        guard += 1;
        if !clipped || guard > 10 * vertices.len() {
            return Err(LabError::InvalidDomain("ear clipping failed".into()));
        }
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Ok(tris)
}
