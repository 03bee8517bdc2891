//! Euclidean geometry of tetrahedra computed from edge lengths alone.
//!
//! A tetrahedron's six lengths are always given in [`TET_EDGE_PAIRS`] order.
//! Volumes and angles come from the Gram matrix of the three edge vectors
//! leaving one vertex; coordinates appear only when a star of tetrahedra has
//! to be unfolded into a common frame.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{BlockTemplate, TorusTriangulation, TET_EDGE_PAIRS};

pub type Point = Vector3<f64>;

/// Slot in [`TET_EDGE_PAIRS`] of the edge joining local vertices `a` and `b`.
pub fn pair_slot(a: usize, b: usize) -> usize {
    let pair = if a < b { [a, b] } else { [b, a] };
    TET_EDGE_PAIRS.iter().position(|p| *p == pair).expect("distinct local vertices")
}

fn sq(l: &[f64; 6], a: usize, b: usize) -> f64 {
    let x = l[pair_slot(a, b)];
    x * x
}

/// Gram matrix of the edge vectors from local vertex `a` to `b`, `c`, `d`.
fn gram(l: &[f64; 6], a: usize, b: usize, c: usize, d: usize) -> [[f64; 3]; 3] {
    let (uu, vv, ww) = (sq(l, a, b), sq(l, a, c), sq(l, a, d));
    let uv = 0.5 * (uu + vv - sq(l, b, c));
    let uw = 0.5 * (uu + ww - sq(l, b, d));
    let vw = 0.5 * (vv + ww - sq(l, c, d));
    [[uu, uv, uw], [uv, vv, vw], [uw, vw, ww]]
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cayley-Menger determinant, equal to `288 V^2`.
pub fn cayley_menger(l: &[f64; 6]) -> f64 {
    8.0 * det3(&gram(l, 0, 1, 2, 3))
}

pub fn tet_volume(l: &[f64; 6]) -> Result<f64> {
    let cm = cayley_menger(l);
    if cm.is_nan() || cm <= 0.0 {
        return Err(Error::DegenerateSimplex { tet: None, determinant: cm });
    }
    Ok((cm / 288.0).sqrt())
}

/// Interior dihedral angle at the edge in `slot`.
///
/// With `u`, `v`, `w` the edge vectors from one end of the edge to the other
/// three vertices, the angle is `atan2(|u| * 6V, (u.u)(v.w) - (u.w)(u.v))`.
/// The atan2 form stays accurate near 0, pi/2 and pi without clamping.
pub fn dihedral_angle(l: &[f64; 6], slot: usize) -> Result<f64> {
    let [a, b] = TET_EDGE_PAIRS[slot];
    let mut rest = (0..4).filter(|&k| k != a && k != b);
    let (c, d) = (rest.next().unwrap(), rest.next().unwrap());
    let g = gram(l, a, b, c, d);
    let det = det3(&g);
    if det.is_nan() || det <= 0.0 {
        return Err(Error::DegenerateSimplex { tet: None, determinant: 8.0 * det });
    }
    let num = g[0][0] * g[1][2] - g[0][2] * g[0][1];
    Ok((g[0][0].sqrt() * det.sqrt()).atan2(num))
}

/// All six dihedral angles, in slot order.
pub fn dihedral_angles(l: &[f64; 6]) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for (s, o) in out.iter_mut().enumerate() {
        *o = dihedral_angle(l, s)?;
    }
    Ok(out)
}

/// Angle at local vertex `v` between the edges to local vertices `a` and `b`.
pub fn corner_angle(l: &[f64; 6], v: usize, a: usize, b: usize) -> f64 {
    let (va, vb, ab) = (l[pair_slot(v, a)], l[pair_slot(v, b)], l[pair_slot(a, b)]);
    let c = (va * va + vb * vb - ab * ab) / (2.0 * va * vb);
    c.clamp(-1.0, 1.0).acos()
}

/// The six lengths of tetrahedron `t`.
pub fn tet_lengths(tri: &TorusTriangulation, lengths: &[f64], t: usize) -> [f64; 6] {
    tri.tet(t).edges.map(|e| lengths[e])
}

pub fn check_lengths(tri: &TorusTriangulation, lengths: &[f64]) -> Result<()> {
    if lengths.len() != tri.num_edges() {
        return Err(Error::LengthCount { expected: tri.num_edges(), got: lengths.len() });
    }
    if let Some((edge, &length)) = lengths.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidLength { edge, length });
    }
    Ok(())
}

fn tag(t: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::DegenerateSimplex { determinant, .. } => Error::DegenerateSimplex { tet: Some(t), determinant },
        other => other,
    }
}

pub fn total_volume(tri: &TorusTriangulation, lengths: &[f64]) -> Result<f64> {
    let vols: Result<Vec<f64>> = (0..tri.num_tets())
        .into_par_iter()
        .map(|t| tet_volume(&tet_lengths(tri, lengths, t)).map_err(tag(t)))
        .collect();
    Ok(vols?.iter().sum())
}

/// Deficit angle `2 pi - sum of dihedral angles` of one edge.
pub fn deficit_angle(tri: &TorusTriangulation, lengths: &[f64], edge: usize) -> Result<f64> {
    let mut sum = 0.0;
    for &t in tri.edge_ring(edge) {
        let slot = tri.tet(t).local_edge(edge).expect("ring tetrahedra contain the edge");
        sum += dihedral_angle(&tet_lengths(tri, lengths, t), slot).map_err(tag(t))?;
    }
    Ok(2.0 * PI - sum)
}

/// Deficit angles of every edge.
pub fn deficits(tri: &TorusTriangulation, lengths: &[f64]) -> Result<Vec<f64>> {
    let per_tet: Result<Vec<[f64; 6]>> = (0..tri.num_tets())
        .into_par_iter()
        .map(|t| dihedral_angles(&tet_lengths(tri, lengths, t)).map_err(tag(t)))
        .collect();
    let per_tet = per_tet?;
    let mut sums = vec![0.0; tri.num_edges()];
    for e in 0..tri.num_edges() {
        for &t in tri.edge_ring(e) {
            sums[e] += per_tet[t][tri.tet(t).local_edge(e).unwrap()];
        }
    }
    Ok(sums.into_iter().map(|s| 2.0 * PI - s).collect())
}

/// Place a tetrahedron in space from its lengths: vertex 0 at the origin,
/// vertex 1 on the x axis, vertex 2 in the xy plane, vertex 3 above it.
pub fn embed_tet(l: &[f64; 6]) -> Result<[Point; 4]> {
    let p0 = Point::zeros();
    let p1 = Point::new(l[0], 0.0, 0.0);
    let x2 = (l[0] * l[0] + l[1] * l[1] - l[3] * l[3]) / (2.0 * l[0]);
    let y2 = (l[1] * l[1] - x2 * x2).max(0.0).sqrt();
    let p2 = Point::new(x2, y2, 0.0);
    let p3 = trilaterate([p0, p1, p2], [l[2], l[4], l[5]], 1.0)
        .ok_or(Error::DegenerateSimplex { tet: None, determinant: cayley_menger(l) })?;
    Ok([p0, p1, p2, p3])
}

/// Point at distances `r` from `a`, on the side of their plane given by the
/// sign of `side` relative to `(a1 - a0) x (a2 - a0)`. `None` if the base
/// triangle is degenerate.
pub fn trilaterate(a: [Point; 3], r: [f64; 3], side: f64) -> Option<Point> {
    let ex = a[1] - a[0];
    let d = ex.norm();
    if d == 0.0 {
        return None;
    }
    let ex = ex / d;
    let ac = a[2] - a[0];
    let i = ex.dot(&ac);
    let ey = ac - ex * i;
    let j = ey.norm();
    if j <= 1e-300 {
        return None;
    }
    let ey = ey / j;
    let ez = ex.cross(&ey);
    let x = (r[0] * r[0] - r[1] * r[1] + d * d) / (2.0 * d);
    let y = (r[0] * r[0] - r[2] * r[2] + i * i + j * j) / (2.0 * j) - i * x / j;
    let z = (r[0] * r[0] - x * x - y * y).max(0.0).sqrt();
    Some(a[0] + ex * x + ey * y + ez * (z * side.signum()))
}

/// Tetrahedra around one vertex embedded in a single frame by unfolding
/// across shared triangles, breadth first from a set of root tetrahedra.
#[derive(Clone, Debug)]
pub struct UnfoldedStar {
    pub vertex: usize,
    /// `(tet, positions of its four vertices in local order, parent tet)`.
    pub tets: Vec<(usize, [Point; 4], Option<usize>)>,
    /// Number of unfolding steps from the root to each entry of `tets`.
    pub depth: Vec<usize>,
}

impl UnfoldedStar {
    pub fn position_of(&self, t: usize) -> Option<&[Point; 4]> {
        self.tets.iter().find(|(tt, _, _)| *tt == t).map(|(_, p, _)| p)
    }

    /// Position of a global vertex as first reached by the unfolding.
    pub fn vertex_position(&self, tri: &TorusTriangulation, v: usize) -> Option<Point> {
        self.tets
            .iter()
            .find_map(|(t, p, _)| tri.tet(*t).local_vertex(v).map(|k| p[k]))
    }
}

/// Embed `to`, a neighbour of `from` across a shared triangle, in the frame
/// where `from` sits at `from_pos`. The new apex goes on the opposite side of
/// the shared triangle from `from`'s own apex.
pub fn unfold_step(
    tri: &TorusTriangulation,
    lengths: &[f64],
    from: usize,
    from_pos: &[Point; 4],
    to: usize,
) -> Result<[Point; 4]> {
    let a = tri.tet(from);
    let b = tri.tet(to);
    let opp = (0..4)
        .find(|&k| !b.vertices.contains(&a.vertices[k]))
        .expect("neighbouring tetrahedra share a triangle");
    let shared: Vec<usize> = (0..4).filter(|&k| k != opp).collect();
    let base = [from_pos[shared[0]], from_pos[shared[1]], from_pos[shared[2]]];
    let apex = (0..4)
        .find(|&k| !a.vertices.contains(&b.vertices[k]))
        .expect("neighbouring tetrahedron has one new vertex");
    let bl = tet_lengths(tri, lengths, to);
    let dist = |s: usize| bl[pair_slot(b.local_vertex(a.vertices[s]).unwrap(), apex)];
    let r = [dist(shared[0]), dist(shared[1]), dist(shared[2])];
    let normal = (base[1] - base[0]).cross(&(base[2] - base[0]));
    let side = -normal.dot(&(from_pos[opp] - base[0]));
    let p = trilaterate(base, r, side)
        .ok_or(Error::DegenerateSimplex { tet: Some(to), determinant: cayley_menger(&bl) })?;
    let mut out = [Point::zeros(); 4];
    for &s in &shared {
        out[b.local_vertex(a.vertices[s]).unwrap()] = from_pos[s];
    }
    out[apex] = p;
    Ok(out)
}

/// The tetrahedra sharing a triangle at `vertex` with `t`.
pub fn star_neighbours(tri: &TorusTriangulation, vertex: usize, t: usize) -> Vec<usize> {
    let kv = tri.tet(t).local_vertex(vertex).expect("tetrahedron contains the vertex");
    (0..4)
        .filter(|&o| o != kv)
        .map(|o| {
            let [t0, t1] = tri.triangle_tets(tri.tet_triangle(t, o));
            if t0 == t {
                t1
            } else {
                t0
            }
        })
        .collect()
}

/// Unfold the star of `vertex` breadth first, starting from `roots`; the
/// first root is placed by [`embed_tet`], later roots are reached by unfolding.
pub fn unfold_star(tri: &TorusTriangulation, lengths: &[f64], vertex: usize, roots: &[usize]) -> Result<UnfoldedStar> {
    let root = roots[0];
    let root_pos = embed_tet(&tet_lengths(tri, lengths, root)).map_err(tag(root))?;
    let mut out = UnfoldedStar { vertex, tets: vec![(root, root_pos, None)], depth: vec![0] };
    let mut seen = vec![root];
    let mut queue = VecDeque::from([0usize]);
    while let Some(idx) = queue.pop_front() {
        let (t, pos, _) = out.tets[idx];
        let mut nbrs = star_neighbours(tri, vertex, t);
        // keep the remaining roots at depth zero by visiting them first
        nbrs.sort_by_key(|n| !roots.contains(n));
        for next in nbrs {
            if seen.contains(&next) {
                continue;
            }
            seen.push(next);
            let np = unfold_step(tri, lengths, t, &pos, next)?;
            let d = if roots.contains(&next) { 0 } else { out.depth[idx] + 1 };
            out.tets.push((next, np, Some(t)));
            out.depth.push(d);
            queue.push_back(out.tets.len() - 1);
        }
    }
    Ok(out)
}

/// Angle between two edges meeting at a vertex, measured by unfolding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterEdgeAngle {
    pub angle: f64,
    /// Largest minus smallest angle over all shortest fans.
    pub spread: f64,
    /// Number of tetrahedra in the shortest fan.
    pub fan_length: usize,
    pub fans: usize,
}

/// Other endpoint of `edge` seen from `v`.
pub fn far_end(tri: &TorusTriangulation, edge: usize, v: usize) -> usize {
    let [a, b] = tri.edge(edge).vertices;
    if a == v {
        b
    } else {
        a
    }
}

pub fn shared_vertex(tri: &TorusTriangulation, e1: usize, e2: usize) -> Option<usize> {
    let a = tri.edge(e1).vertices;
    let b = tri.edge(e2).vertices;
    a.into_iter().find(|v| b.contains(v))
}

const MAX_FANS: usize = 256;

/// Angle between `edge` and `neighbour` at their shared vertex.
///
/// Every shortest fan of tetrahedra joining a tetrahedron on `edge` to one on
/// `neighbour` through triangles at the shared vertex is embedded; the angles
/// are averaged and their spread reported. Edges in a common tetrahedron give
/// a fan of length 1, i.e. the plain law-of-cosines angle.
pub fn inter_edge_angle(tri: &TorusTriangulation, lengths: &[f64], edge: usize, neighbour: usize) -> Result<InterEdgeAngle> {
    let v = shared_vertex(tri, edge, neighbour)
        .filter(|_| edge != neighbour)
        .ok_or(Error::NotAdjacent { edge, neighbour })?;
    let (wa, wb) = (far_end(tri, edge, v), far_end(tri, neighbour, v));
    let star = tri.vertex_tets(v);
    let on = |t: usize, e: usize| tri.tet(t).edges.contains(&e);
    let idx = |t: usize| star.iter().position(|&s| s == t).unwrap();

    let mut dist = vec![usize::MAX; star.len()];
    let mut queue = VecDeque::new();
    for (k, &t) in star.iter().enumerate() {
        if on(t, edge) {
            dist[k] = 0;
            queue.push_back(t);
        }
    }
    let mut depth = None;
    while let Some(t) = queue.pop_front() {
        let d = dist[idx(t)];
        if depth.is_some_and(|td| d > td) {
            break;
        }
        if on(t, neighbour) {
            depth = Some(d);
            continue;
        }
        for n in star_neighbours(tri, v, t) {
            if dist[idx(n)] == usize::MAX {
                dist[idx(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    let depth = depth.ok_or(Error::NoFan { vertex: v, edge: neighbour })?;

    // shortest fans, built backwards from their end on `neighbour`
    let mut fans: Vec<Vec<usize>> = star
        .iter()
        .filter(|&&t| dist[idx(t)] == depth && on(t, neighbour))
        .map(|&t| vec![t])
        .collect();
    for d in (0..depth).rev() {
        let mut next = Vec::new();
        for fan in &fans {
            for n in star_neighbours(tri, v, *fan.last().unwrap()) {
                if dist[idx(n)] == d && next.len() < MAX_FANS {
                    let mut f = fan.clone();
                    f.push(n);
                    next.push(f);
                }
            }
        }
        fans = next;
    }

    let mut angles = Vec::with_capacity(fans.len());
    for fan in &fans {
        let start = *fan.last().unwrap();
        let start_pos = embed_tet(&tet_lengths(tri, lengths, start)).map_err(tag(start))?;
        let pv = start_pos[tri.tet(start).local_vertex(v).unwrap()];
        let pa = start_pos[tri.tet(start).local_vertex(wa).unwrap()];
        let mut pos = start_pos;
        for w in (0..fan.len() - 1).rev() {
            pos = unfold_step(tri, lengths, fan[w + 1], &pos, fan[w])?;
        }
        let pb = pos[tri.tet(fan[0]).local_vertex(wb).unwrap()];
        let (da, db) = (pa - pv, pb - pv);
        angles.push((da.dot(&db) / (da.norm() * db.norm())).clamp(-1.0, 1.0).acos());
    }
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    let (lo, hi) = angles.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(InterEdgeAngle { angle: mean, spread: hi - lo, fan_length: depth + 1, fans: angles.len() })
}

/// Dihedral ring and neighbour angles of one edge.
#[derive(Clone, Debug)]
pub struct EdgeStar {
    pub edge: usize,
    /// `(tet, dihedral angle at the edge)` in ring order.
    pub ring: Vec<(usize, f64)>,
    pub neighbours: Vec<NeighbourAngle>,
}

#[derive(Clone, Copy, Debug)]
pub struct NeighbourAngle {
    pub edge: usize,
    pub vertex: usize,
    pub angle: f64,
    pub spread: f64,
}

impl EdgeStar {
    pub fn deficit(&self) -> f64 {
        2.0 * PI - self.ring.iter().map(|(_, a)| a).sum::<f64>()
    }
}

pub fn edge_star(tri: &TorusTriangulation, lengths: &[f64], edge: usize) -> Result<EdgeStar> {
    let ring = tri
        .edge_ring(edge)
        .iter()
        .map(|&t| {
            let slot = tri.tet(t).local_edge(edge).unwrap();
            dihedral_angle(&tet_lengths(tri, lengths, t), slot).map(|a| (t, a)).map_err(tag(t))
        })
        .collect::<Result<Vec<_>>>()?;
    let neighbours = tri
        .edge_neighbours(edge)
        .iter()
        .map(|&n| {
            let a = inter_edge_angle(tri, lengths, edge, n)?;
            Ok(NeighbourAngle { edge: n, vertex: shared_vertex(tri, edge, n).unwrap(), angle: a.angle, spread: a.spread })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgeStar { edge, ring, neighbours })
}

/// Least-squares embedding of the eight corners of one block.
#[derive(Clone, Debug)]
pub struct BlockEmbedding {
    /// Corners numbered `cx + 2 cy + 4 cz`.
    pub points: [Point; 8],
    /// Largest absolute mismatch between embedded and requested lengths.
    pub residual: f64,
    /// Distance between corners 0 and 7 in the embedding.
    pub body_diagonal: f64,
    pub iterations: usize,
}

impl BlockEmbedding {
    pub fn is_embeddable(&self, tolerance: f64) -> bool {
        self.residual <= tolerance
    }
}

/// Lengths of a block's edges as `(corner pair, length)`; the body diagonal
/// (corners 0 and 7) is left out when `with_body_diagonal` is false.
pub fn block_pair_lengths(
    tri: &TorusTriangulation,
    lengths: &[f64],
    block: [usize; 3],
    with_body_diagonal: bool,
) -> Vec<([usize; 2], f64)> {
    tri.block_local_edges(block)
        .into_iter()
        .filter(|(pair, _)| with_body_diagonal || *pair != [0, 7])
        .map(|(pair, e)| (pair, lengths[e]))
        .collect()
}

/// Fit eight points to the given pairwise distances by Levenberg-Marquardt,
/// starting from `start` or the template's flat corners.
pub fn embed_block(template: &BlockTemplate, pairs: &[([usize; 2], f64)], start: Option<[Point; 8]>) -> BlockEmbedding {
    let mut p: [Point; 8] = start.unwrap_or_else(|| {
        std::array::from_fn(|c| {
            let q = template.corner_position(c);
            Point::new(q[0], q[1], q[2])
        })
    });
    let residuals = |p: &[Point; 8]| -> DVector<f64> {
        DVector::from_iterator(pairs.len(), pairs.iter().map(|([a, b], l)| (p[*a] - p[*b]).norm() - l))
    };
    let cost = |r: &DVector<f64>| r.norm_squared();
    let mut r = residuals(&p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let mut jac = DMatrix::<f64>::zeros(pairs.len(), 24);
        for (k, ([a, b], _)) in pairs.iter().enumerate() {
            let d = p[*a] - p[*b];
            let n = d.norm();
            for c in 0..3 {
                jac[(k, 3 * a + c)] = d[c] / n;
                jac[(k, 3 * b + c)] = -d[c] / n;
            }
        }
        let jt = jac.transpose();
        let g = &jt * &r;
        let h = &jt * &jac;
        let mut accepted = false;
        while mu < 1e12 {
            let mut damped = h.clone();
            for i in 0..24 {
                damped[(i, i)] += mu * (1.0 + h[(i, i)]);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                mu *= 10.0;
                continue;
            };
            let mut q = p;
            for (c, pt) in q.iter_mut().enumerate() {
                *pt += Vector3::new(step[3 * c], step[3 * c + 1], step[3 * c + 2]);
            }
            let rq = residuals(&q);
            if cost(&rq) < cost(&r) {
                let small = step.norm() < 1e-15 * (1.0 + p.iter().map(|x| x.norm()).sum::<f64>());
                p = q;
                r = rq;
                mu = (mu / 10.0).max(1e-15);
                accepted = !small;
                break;
            }
            mu *= 10.0;
        }
        if !accepted || r.amax() < 1e-15 {
            break;
        }
    }
    BlockEmbedding { residual: r.amax(), body_diagonal: (p[7] - p[0]).norm(), points: p, iterations }
}
