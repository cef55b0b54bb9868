use super::{Mesh, Point2};
use crate::error::{LabError, Result};

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub point: Point2,
    pub weight: f64,
    pub normal: Point2,
    /// Index into `Mesh::boundary_edges`.
    pub edge: usize,
    /// Parameter along the edge from `a` (0) to `b` (1).
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub points: Vec<BoundaryPoint>,
}

impl BoundaryQuadrature {
    pub fn integrate(&self, f: impl Fn(&BoundaryPoint) -> f64) -> f64 {
        crate::sum::pairwise_sum(&self.points.iter().map(|p| p.weight * f(p)).collect::<Vec<_>>())
    }

    pub fn total_weight(&self) -> f64 {
        self.integrate(|_| 1.0)
    }
}

/// Gauss points on every boundary edge of `mesh`, `order` points per edge.
pub fn boundary_quadrature(mesh: &Mesh, order: usize) -> Result<BoundaryQuadrature> {
    if !(1..=10).contains(&order) {
        return Err(LabError::InvalidParameter(format!("quadrature order {order} outside 1..=10")));
    }
    let (nodes, weights) = gauss_legendre(order);
    let verts = mesh.vertices();
    let mut points = Vec::with_capacity(mesh.boundary_edges().len() * order);
    for (k, e) in mesh.boundary_edges().iter().enumerate() {
        let (a, b) = (verts[e.a], verts[e.b]);
        let len = a.dist(b);
        for (t, w) in nodes.iter().zip(&weights) {
            points.push(BoundaryPoint {
                point: a.lerp(b, *t),
                weight: w * len,
                normal: e.normal,
                edge: k,
                t: *t,
            });
        }
    }
    Ok(BoundaryQuadrature { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolygonalDomain;

    #[test]
    fn gauss_exactness() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn perimeter_and_line_integrals() {
        let mesh = Mesh::triangulate(&PolygonalDomain::unit_square(), 2).unwrap();
        for order in 1..=10 {
            let q = boundary_quadrature(&mesh, order).unwrap();
            assert!((q.total_weight() - 4.0).abs() < 1e-13);
        }
        let q = boundary_quadrature(&mesh, 2).unwrap();
        // edges x=0 contributes 0, x=1 contributes 1, y=0 and y=1 contribute 1/2 each
        assert!((q.integrate(|p| p.point.x) - 2.0).abs() < 1e-13);
        assert!(boundary_quadrature(&mesh, 0).is_err());
        assert!(boundary_quadrature(&mesh, 11).is_err());
    }
}
