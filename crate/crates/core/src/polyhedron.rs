//! Convex polyhedra as outward-oriented face loops, with half-space clipping
//! and divergence-theorem volumes.

use crate::geometry::Point;

/// Points this close to a clipping plane count as lying on it.
const PLANE_EPS: f64 = 1e-13;

#[derive(Clone, Debug, Default)]
pub struct ConvexPolyhedron {
    /// Each face is a planar loop, counter-clockwise seen from outside.
    pub faces: Vec<Vec<Point>>,
}

impl ConvexPolyhedron {
    pub fn is_empty(&self) -> bool {
        self.faces.len() < 4
    }

    /// Volume from the divergence theorem, summing signed fan tetrahedra
    /// against the origin.
    pub fn volume(&self) -> f64 {
        let mut v = 0.0;
        for f in &self.faces {
            for k in 1..f.len().saturating_sub(1) {
                v += f[0].dot(&f[k].cross(&f[k + 1]));
            }
        }
        v / 6.0
    }

    pub fn centroid_of_vertices(&self) -> Point {
        let mut sum = Point::zeros();
        let mut count = 0.0f64;
        for f in &self.faces {
            for p in f {
                sum += p;
                count += 1.0;
            }
        }
        sum / count.max(1.0)
    }

    /// Keep the part with `normal . x <= offset`. Points on the plane are kept.
    pub fn clip(&self, normal: &Point, offset: f64) -> ConvexPolyhedron {
        let scale = normal.norm();
        if scale == 0.0 {
            return self.clone();
        }
        let n = normal / scale;
        let d = offset / scale;
        // nothing strictly inside: at most a face or edge touches the plane
        if self.faces.iter().flatten().all(|p| n.dot(p) - d >= -PLANE_EPS) {
            return ConvexPolyhedron::default();
        }
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        let mut cut: Vec<Point> = Vec::new();
        let mut face_on_plane = false;
        for f in &self.faces {
            let dist: Vec<f64> = f.iter().map(|p| n.dot(p) - d).collect();
            if dist.iter().all(|&s| s.abs() <= PLANE_EPS) {
                // an existing face already caps the cut
                face_on_plane = true;
                faces.push(f.clone());
                continue;
            }
            if dist.iter().all(|&s| s <= PLANE_EPS) {
                for (p, &s) in f.iter().zip(&dist) {
                    if s.abs() <= PLANE_EPS {
                        cut.push(*p);
                    }
                }
                faces.push(f.clone());
                continue;
            }
            if dist.iter().all(|&s| s >= -PLANE_EPS) {
                for (p, &s) in f.iter().zip(&dist) {
                    if s.abs() <= PLANE_EPS {
                        cut.push(*p);
                    }
                }
                continue;
            }
            let mut out = Vec::with_capacity(f.len() + 1);
            for k in 0..f.len() {
                let (p, q) = (f[k], f[(k + 1) % f.len()]);
                let (sp, sq) = (dist[k], dist[(k + 1) % f.len()]);
                if sp <= PLANE_EPS {
                    out.push(p);
                    if sp.abs() <= PLANE_EPS {
                        cut.push(p);
                    }
                }
                if (sp < -PLANE_EPS && sq > PLANE_EPS) || (sp > PLANE_EPS && sq < -PLANE_EPS) {
                    let x = p + (q - p) * (sp / (sp - sq));
                    out.push(x);
                    cut.push(x);
                }
            }
            if out.len() >= 3 {
                faces.push(out);
            }
        }
        if faces.is_empty() {
            return ConvexPolyhedron::default();
        }
        if !face_on_plane {
            if let Some(cap) = cap_polygon(cut, &n) {
                faces.push(cap);
            }
        }
        ConvexPolyhedron { faces }
    }
}

/// Order points lying in a plane with unit normal `n` counter-clockwise about
/// `n`, dropping duplicates. `None` if fewer than three distinct points remain.
fn cap_polygon(mut pts: Vec<Point>, n: &Point) -> Option<Vec<Point>> {
    let mut uniq: Vec<Point> = Vec::with_capacity(pts.len());
    let scale = pts.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    for p in pts.drain(..) {
        if !uniq.iter().any(|q| (q - p).norm() <= 1e-12 * scale) {
            uniq.push(p);
        }
    }
    if uniq.len() < 3 {
        return None;
    }
    let c = uniq.iter().sum::<Point>() / uniq.len() as f64;
    let helper = if n.x.abs() < 0.9 { Point::x() } else { Point::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    uniq.sort_by(|a, b| {
        let ta = (a - c).dot(&e2).atan2((a - c).dot(&e1));
        let tb = (b - c).dot(&e2).atan2((b - c).dot(&e1));
        ta.total_cmp(&tb)
    });
    Some(uniq)
}

/// Barycentric cell of local vertex `k` inside a tetrahedron: the region where
/// the barycentric coordinate of `k` is the largest. It is a combinatorial cube
/// with corners at the vertex, three edge midpoints, three face centroids and
/// the tetrahedron's centroid.
pub fn barycentric_fragment(tet: &[Point; 4], k: usize) -> ConvexPolyhedron {
    let v = tet[k];
    let others: Vec<usize> = (0..4).filter(|&j| j != k).collect();
    let (a, b, c) = (tet[others[0]], tet[others[1]], tet[others[2]]);
    let mid = |p: Point| (v + p) / 2.0;
    let face = |p: Point, q: Point| (v + p + q) / 3.0;
    let g = (v + a + b + c) / 4.0;
    let (ma, mb, mc) = (mid(a), mid(b), mid(c));
    let (fab, fbc, fca) = (face(a, b), face(b, c), face(c, a));
    let quads = [
        [v, ma, fab, mb],
        [v, mb, fbc, mc],
        [v, mc, fca, ma],
        [ma, fab, g, fca],
        [mb, fbc, g, fab],
        [mc, fca, g, fbc],
    ];
    let centre = (v + ma + mb + mc + fab + fbc + fca + g) / 8.0;
    let faces = quads
        .into_iter()
        .map(|q| {
            let normal = (q[1] - q[0]).cross(&(q[2] - q[0])) + (q[2] - q[0]).cross(&(q[3] - q[0]));
            let centre_q = (q[0] + q[1] + q[2] + q[3]) / 4.0;
            let mut f = q.to_vec();
            if normal.dot(&(centre_q - centre)) < 0.0 {
                f.reverse();
            }
            f
        })
        .collect();
    ConvexPolyhedron { faces }
}
