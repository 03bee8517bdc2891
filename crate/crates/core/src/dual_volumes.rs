//! Barycentric dual volumes of vertices and capped dual volumes of edges.
//!
//! The dual cell of a vertex is the union of its barycentric fragments in the
//! surrounding tetrahedra. The volume of an edge is the union of its two
//! endpoint cells, cut down to the slab between the planes through the
//! endpoints orthogonal to the edge.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{
    check_lengths, corner_angle, far_end, tet_lengths, tet_volume, unfold_star, Point,
};
use crate::lattice::TorusTriangulation;
use crate::polyhedron::barycentric_fragment;

/// Cosines this close to zero are treated as orthogonal (on the cap plane).
const ORTHOGONAL_EPS: f64 = 1e-12;

/// How a neighbouring edge meets the capped volume of an edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighbourInfo {
    pub edge: usize,
    /// The endpoint shared with the owning edge.
    pub vertex: usize,
    /// Whether both edges lie in a common tetrahedron.
    pub shares_tet: bool,
    /// Cosine of the angle between the two edges, both pointing away from `vertex`.
    pub cos_theta: f64,
    /// Fraction of the neighbour's half inside the vertex cell that also lies
    /// inside the slab.
    pub fraction: f64,
    pub intersects: bool,
}

#[derive(Clone, Debug)]
pub struct EdgeDual {
    pub volume: f64,
    pub neighbours: Vec<NeighbourInfo>,
}

#[derive(Clone, Debug)]
pub struct DualVolumes {
    pub vertex_volume: Vec<f64>,
    pub edge_volume: Vec<f64>,
    pub neighbours: Vec<Vec<NeighbourInfo>>,
}

/// `V_v`: each tetrahedron gives exactly a quarter of its volume to each of
/// its vertices, since the four barycentric fragments are congruent in volume.
pub fn vertex_volumes(tri: &TorusTriangulation, lengths: &[f64]) -> Result<Vec<f64>> {
    check_lengths(tri, lengths)?;
    let vols = tet_volumes(tri, lengths)?;
    Ok(vertex_volumes_from(tri, &vols))
}

pub(crate) fn tet_volumes(tri: &TorusTriangulation, lengths: &[f64]) -> Result<Vec<f64>> {
    (0..tri.num_tets())
        .into_par_iter()
        .map(|t| {
            tet_volume(&tet_lengths(tri, lengths, t)).map_err(|e| match e {
                crate::Error::DegenerateSimplex { determinant, .. } => {
                    crate::Error::DegenerateSimplex { tet: Some(t), determinant }
                }
                other => other,
            })
        })
        .collect()
}

pub(crate) fn vertex_volumes_from(tri: &TorusTriangulation, tet_vols: &[f64]) -> Vec<f64> {
    (0..tri.num_vertices())
        .map(|v| tri.vertex_tets(v).iter().map(|&t| tet_vols[t] / 4.0).sum())
        .collect()
}

/// Fraction of the segment from the shared vertex to the neighbour's midpoint
/// that falls inside the slab of an edge of length `edge_len`.
fn slab_fraction(cos_theta: f64, neighbour_len: f64, edge_len: f64) -> f64 {
    if cos_theta < -ORTHOGONAL_EPS {
        0.0
    } else if cos_theta <= ORTHOGONAL_EPS {
        1.0
    } else {
        (2.0 * edge_len / (neighbour_len * cos_theta)).min(1.0)
    }
}

/// Capped volume and neighbour data of one edge. With `clip` false the slab
/// is dropped and the volume is simply `V_v1 + V_v2`.
pub fn edge_dual(tri: &TorusTriangulation, lengths: &[f64], edge: usize, clip: bool) -> Result<EdgeDual> {
    let ring = tri.edge_ring(edge);
    let mut volume = 0.0;
    let mut neighbours = Vec::new();
    for v in tri.edge(edge).vertices {
        let w = far_end(tri, edge, v);
        let star = unfold_star(tri, lengths, v, ring)?;
        let root = star.tets[0].1;
        let root_tet = tri.tet(star.tets[0].0);
        let pv = root[root_tet.local_vertex(v).unwrap()];
        let pw = root[root_tet.local_vertex(w).unwrap()];
        let u = pw - pv;
        for (t, pos, _) in &star.tets {
            let frag = barycentric_fragment(pos, tri.tet(*t).local_vertex(v).unwrap());
            let frag = if clip { frag.clip(&-u, -u.dot(&pv)).clip(&u, u.dot(&pw)) } else { frag };
            volume += frag.volume();
        }

        for &n in tri.vertex_edges(v) {
            if n == edge {
                continue;
            }
            let common = ring.iter().copied().find(|&t| tri.tet(t).edges.contains(&n));
            let x = far_end(tri, n, v);
            let cos_theta = match common {
                Some(t) => {
                    let tet = tri.tet(t);
                    let (kv, kw, kx) = (
                        tet.local_vertex(v).unwrap(),
                        tet.local_vertex(w).unwrap(),
                        tet.local_vertex(x).unwrap(),
                    );
                    corner_angle(&tet_lengths(tri, lengths, t), kv, kw, kx).cos()
                }
                None => {
                    let px: Point = star.vertex_position(tri, x).expect("star contains every neighbour");
                    let d = px - pv;
                    d.dot(&u) / (d.norm() * u.norm())
                }
            };
            let fraction = slab_fraction(cos_theta, lengths[n], lengths[edge]);
            neighbours.push(NeighbourInfo {
                edge: n,
                vertex: v,
                shares_tet: common.is_some(),
                cos_theta,
                fraction,
                intersects: fraction > 0.0,
            });
        }
    }
    Ok(EdgeDual { volume, neighbours })
}

/// `V_l` for every edge.
pub fn edge_volumes(tri: &TorusTriangulation, lengths: &[f64]) -> Result<Vec<f64>> {
    check_lengths(tri, lengths)?;
    (0..tri.num_edges())
        .into_par_iter()
        .map(|e| edge_dual(tri, lengths, e, true).map(|d| d.volume))
        .collect()
}

pub fn dual_volumes(tri: &TorusTriangulation, lengths: &[f64]) -> Result<DualVolumes> {
    let vertex_volume = vertex_volumes(tri, lengths)?;
    let duals: Vec<EdgeDual> = (0..tri.num_edges())
        .into_par_iter()
        .map(|e| edge_dual(tri, lengths, e, true))
        .collect::<Result<_>>()?;
    let (edge_volume, neighbours) = duals.into_iter().map(|d| (d.volume, d.neighbours)).unzip();
    Ok(DualVolumes { vertex_volume, edge_volume, neighbours })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_torus, flat_lengths, BlockKind, EdgeRole};
    use approx::assert_relative_eq;

    #[test]
    fn flat_vertex_volumes_are_one_block() {
        for kind in [BlockKind::Cubic, BlockKind::Skew] {
            let tri = build_torus(kind, [3, 3, 3]).unwrap();
            for (c, expect) in [(1.0, 1.0), (1.0 / 3.0, 1.0 / 27.0)] {
                let vv = vertex_volumes(&tri, &flat_lengths(&tri, c)).unwrap();
                assert!(vv.iter().all(|&v| (v - expect).abs() < 1e-13), "{kind:?} {c}");
            }
        }
    }

    #[test]
    fn unclipped_edge_volume_is_both_cells() {
        let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
        let l = flat_lengths(&tri, 1.0);
        for e in [0, 40, 100, 170] {
            assert_relative_eq!(edge_dual(&tri, &l, e, false).unwrap().volume, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_edge_volumes_depend_only_on_role() {
        for kind in [BlockKind::Cubic, BlockKind::Skew] {
            let tri = build_torus(kind, [3, 3, 3]).unwrap();
            let vol = edge_volumes(&tri, &flat_lengths(&tri, 1.0)).unwrap();
            let n = tri.num_blocks();
            for role in EdgeRole::ALL {
                let block = &vol[role.index() * n..(role.index() + 1) * n];
                assert!(block.iter().all(|&v| (v - block[0]).abs() < 1e-12), "{kind:?} {role}");
                assert!(block[0] > 0.0 && block[0] < 2.0);
            }
        }
    }

    #[test]
    fn slab_fraction_cases() {
        assert_eq!(slab_fraction(-0.5, 1.0, 1.0), 0.0);
        assert_eq!(slab_fraction(0.0, 1.0, 1.0), 1.0);
        assert_eq!(slab_fraction(1.0, 1.0, 1.0), 1.0);
        assert_relative_eq!(slab_fraction(1.0, 4.0, 1.0), 0.5);
    }
}
