//! Piecewise-flat scalar, sectional and Ricci curvature.
//!
//! ```text
//! R_v  = (1/V_v) sum_i |l_i| eps_i                       over edges at v
//! K_l  = (1/V_l) (|l| eps_l + sum_i 1/2 |l_i| cos^2(theta_i) eps_i)
//! Rc_l = (R_v1 + R_v2)/4 - K_l
//! ```
//!
//! The sum in `K_l` runs over the edges at an endpoint of `l` that lie in a
//! tetrahedron with `l` and reach into its capped volume.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual_volumes::{dual_volumes, edge_dual, tet_volumes, vertex_volumes_from, DualVolumes, NeighbourInfo};
use crate::error::Result;
use crate::geometry::{check_lengths, deficit_angle, deficits};
use crate::lattice::TorusTriangulation;

/// Length weight given to neighbouring edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingStrategy {
    /// `|l_i|` in the scalar sum and `|l_i|/2` in the sectional sum.
    #[default]
    FullLength,
    /// The length of `l_i` actually inside the dual cell: `|l_i|/2` in the
    /// scalar sum, the slab-clipped half in the sectional sum.
    ClippedLength,
}

impl std::str::FromStr for WeightingStrategy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_length" | "full" => Ok(Self::FullLength),
            "clipped_length" | "clipped" => Ok(Self::ClippedLength),
            other => Err(crate::Error::Config(format!("unknown weighting strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureField {
    pub deficit: Vec<f64>,
    pub scalar: Vec<f64>,
    pub sectional: Vec<f64>,
    pub ricci: Vec<f64>,
    pub weighting: WeightingStrategy,
}

/// Whether a neighbour enters the sectional sum.
pub fn contributes(n: &NeighbourInfo) -> bool {
    n.shares_tet && n.intersects
}

fn scalar_weight(len: f64, w: WeightingStrategy) -> f64 {
    match w {
        WeightingStrategy::FullLength => len,
        WeightingStrategy::ClippedLength => 0.5 * len,
    }
}

fn sectional_weight(len: f64, n: &NeighbourInfo, w: WeightingStrategy) -> f64 {
    let half = 0.5 * len;
    match w {
        WeightingStrategy::FullLength => half,
        WeightingStrategy::ClippedLength => half * n.fraction,
    }
}

fn scalar_at(tri: &TorusTriangulation, lengths: &[f64], eps: &[f64], vol: f64, v: usize, w: WeightingStrategy) -> f64 {
    tri.vertex_edges(v).iter().map(|&e| scalar_weight(lengths[e], w) * eps[e]).sum::<f64>() / vol
}

fn sectional_at(
    lengths: &[f64],
    eps: &[f64],
    edge: usize,
    volume: f64,
    neighbours: &[NeighbourInfo],
    w: WeightingStrategy,
) -> f64 {
    let mut k = lengths[edge] * eps[edge];
    for n in neighbours.iter().filter(|n| contributes(n)) {
        k += sectional_weight(lengths[n.edge], n, w) * n.cos_theta * n.cos_theta * eps[n.edge];
    }
    k / volume
}

/// `R_v` for every vertex.
pub fn scalar_curvature(
    tri: &TorusTriangulation,
    lengths: &[f64],
    deficits: &[f64],
    duals: &DualVolumes,
    weighting: WeightingStrategy,
) -> Vec<f64> {
    (0..tri.num_vertices())
        .map(|v| scalar_at(tri, lengths, deficits, duals.vertex_volume[v], v, weighting))
        .collect()
}

/// `K_l` for every edge.
pub fn sectional_curvature(
    tri: &TorusTriangulation,
    lengths: &[f64],
    deficits: &[f64],
    duals: &DualVolumes,
    weighting: WeightingStrategy,
) -> Vec<f64> {
    (0..tri.num_edges())
        .map(|e| sectional_at(lengths, deficits, e, duals.edge_volume[e], &duals.neighbours[e], weighting))
        .collect()
}

/// The full curvature field, including `Rc_l`.
pub fn ricci_curvature(tri: &TorusTriangulation, lengths: &[f64], weighting: WeightingStrategy) -> Result<CurvatureField> {
    let eps = deficits(tri, lengths)?;
    let duals = dual_volumes(tri, lengths)?;
    let scalar = scalar_curvature(tri, lengths, &eps, &duals, weighting);
    let sectional = sectional_curvature(tri, lengths, &eps, &duals, weighting);
    let ricci = tri
        .edges()
        .iter()
        .zip(&sectional)
        .map(|(e, k)| 0.25 * (scalar[e.vertices[0]] + scalar[e.vertices[1]]) - k)
        .collect();
    Ok(CurvatureField { deficit: eps, scalar, sectional, ricci, weighting })
}

/// `Rc_l` for a subset of edges, touching only the geometry they depend on.
pub fn ricci_subset(
    tri: &TorusTriangulation,
    lengths: &[f64],
    edges: &[usize],
    weighting: WeightingStrategy,
) -> Result<Vec<f64>> {
    check_lengths(tri, lengths)?;
    let mut eps = vec![0.0; tri.num_edges()];
    let mut have = vec![false; tri.num_edges()];
    let mut needed = Vec::new();
    for &e in edges {
        for v in tri.edge(e).vertices {
            for &n in tri.vertex_edges(v) {
                if !have[n] {
                    have[n] = true;
                    needed.push(n);
                }
            }
        }
    }
    for &n in &needed {
        eps[n] = deficit_angle(tri, lengths, n)?;
    }
    let mut vol_cache: Vec<Option<f64>> = vec![None; tri.num_vertices()];
    let mut vertex_volume = |v: usize| -> Result<f64> {
        if let Some(x) = vol_cache[v] {
            return Ok(x);
        }
        let mut s = 0.0;
        for &t in tri.vertex_tets(v) {
            s += crate::geometry::tet_volume(&crate::geometry::tet_lengths(tri, lengths, t))? / 4.0;
        }
        vol_cache[v] = Some(s);
        Ok(s)
    };
    let mut out = Vec::with_capacity(edges.len());
    for &e in edges {
        let [a, b] = tri.edge(e).vertices;
        let ra = scalar_at(tri, lengths, &eps, vertex_volume(a)?, a, weighting);
        let rb = scalar_at(tri, lengths, &eps, vertex_volume(b)?, b, weighting);
        let dual = edge_dual(tri, lengths, e, true)?;
        out.push(0.25 * (ra + rb) - sectional_at(lengths, &eps, e, dual.volume, &dual.neighbours, weighting));
    }
    Ok(out)
}

/// `Rc_l` for every edge, without keeping the intermediate fields.
pub fn ricci_all(tri: &TorusTriangulation, lengths: &[f64], weighting: WeightingStrategy) -> Result<Vec<f64>> {
    check_lengths(tri, lengths)?;
    let eps = deficits(tri, lengths)?;
    let vv = vertex_volumes_from(tri, &tet_volumes(tri, lengths)?);
    let scalar: Vec<f64> = (0..tri.num_vertices())
        .map(|v| scalar_at(tri, lengths, &eps, vv[v], v, weighting))
        .collect();
    (0..tri.num_edges())
        .into_par_iter()
        .map(|e| {
            let [a, b] = tri.edge(e).vertices;
            let dual = edge_dual(tri, lengths, e, true)?;
            Ok(0.25 * (scalar[a] + scalar[b]) - sectional_at(lengths, &eps, e, dual.volume, &dual.neighbours, weighting))
        })
        .collect()
}

impl CurvatureField {
    /// `max |Rc + K - (R_v1 + R_v2)/4|`; zero up to rounding by construction.
    pub fn identity_residual(&self, tri: &TorusTriangulation) -> f64 {
        tri.edges()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                (self.ricci[i] + self.sectional[i] - 0.25 * (self.scalar[e.vertices[0]] + self.scalar[e.vertices[1]])).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.deficit
            .iter()
            .chain(&self.scalar)
            .chain(&self.sectional)
            .chain(&self.ricci)
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// CSV with columns `edge,role,deficit,sectional,ricci`.
    pub fn write_csv<W: Write>(&self, tri: &TorusTriangulation, mut out: W) -> Result<()> {
        writeln!(out, "edge,role,deficit,sectional,ricci")?;
        for (i, e) in tri.edges().iter().enumerate() {
            writeln!(out, "{i},{},{:e},{:e},{:e}", e.role, self.deficit[i], self.sectional[i], self.ricci[i])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_torus, flat_lengths, BlockKind, Diagonal};

    #[test]
    fn flat_field_vanishes() {
        let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
        let f = ricci_curvature(&tri, &flat_lengths(&tri, 1.0), WeightingStrategy::FullLength).unwrap();
        assert!(f.max_abs() < 1e-11);
    }

    #[test]
    fn subset_matches_full_field() {
        let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
        let mut l = flat_lengths(&tri, 1.0);
        l[tri.face_diagonal_index([1, 1, 1], Diagonal::Xy)] += 1e-3;
        l[tri.face_diagonal_index([0, 1, 2], Diagonal::Yz)] -= 2e-3;
        for w in [WeightingStrategy::FullLength, WeightingStrategy::ClippedLength] {
            let full = ricci_curvature(&tri, &l, w).unwrap();
            assert!(full.identity_residual(&tri) < 1e-14);
            let rows: Vec<usize> = (0..tri.num_edges()).step_by(7).collect();
            let sub = ricci_subset(&tri, &l, &rows, w).unwrap();
            for (k, &e) in rows.iter().enumerate() {
                assert!((sub[k] - full.ricci[e]).abs() < 1e-14);
            }
            let all = ricci_all(&tri, &l, w).unwrap();
            assert!(all.iter().zip(&full.ricci).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
        let f = ricci_curvature(&tri, &flat_lengths(&tri, 1.0), WeightingStrategy::FullLength).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&tri, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 190);
        assert!(text.starts_with("edge,role,deficit,sectional,ricci\n0,x,"));
    }
}
