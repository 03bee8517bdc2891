use std::collections::HashSet;

use regge_flow::lattice::{build_torus, flat_lengths, BlockKind, BlockTemplate, Diagonal, EdgeRole, TorusTriangulation};
use regge_flow::Error;

const GRIDS: [[usize; 3]; 4] = [[3, 3, 3], [3, 3, 4], [4, 4, 4], [5, 4, 3]];

#[test]
fn simplex_counts_follow_block_count() {
    for kind in [BlockKind::Cubic, BlockKind::Skew] {
        for dims in GRIDS {
            let tri = build_torus(kind, dims).unwrap();
            let n = dims.iter().product::<usize>();
            assert_eq!(tri.num_vertices(), n);
            assert_eq!(tri.num_edges(), 7 * n);
            assert_eq!(tri.num_triangles(), 12 * n);
            assert_eq!(tri.num_tets(), 6 * n);
            assert_eq!(tri.euler_characteristic(), 0);
            assert!(tri.validate().is_empty(), "{:?}", tri.validate());
        }
    }
}

#[test]
fn every_vertex_has_fourteen_edges_and_twenty_four_tets() {
    let tri = build_torus(BlockKind::Cubic, [3, 4, 5]).unwrap();
    for v in 0..tri.num_vertices() {
        assert_eq!(tri.vertex_edges(v).len(), 14);
        assert_eq!(tri.vertex_tets(v).len(), 24);
    }
}

#[test]
fn ring_sizes_by_role() {
    // Kuhn split: axis edges sit in 6 tets, face diagonals in 4, body diagonals in 6
    let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
    for (e, edge) in tri.edges().iter().enumerate() {
        let expected = match edge.role {
            EdgeRole::FaceDiagonal(_) => 4,
            _ => 6,
        };
        assert_eq!(tri.edge_ring(e).len(), expected, "edge {e} role {}", edge.role);
    }
}

#[test]
fn rings_are_cyclic_through_shared_triangles() {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
    for e in 0..tri.num_edges() {
        let ring = tri.edge_ring(e);
        let [a, b] = tri.edge(e).vertices;
        for k in 0..ring.len() {
            let (s, t) = (tri.tet(ring[k]), tri.tet(ring[(k + 1) % ring.len()]));
            let shared: HashSet<usize> = s.vertices.iter().filter(|v| t.vertices.contains(v)).copied().collect();
            assert_eq!(shared.len(), 3, "consecutive ring tets of edge {e} share a face");
            assert!(shared.contains(&a) && shared.contains(&b));
        }
    }
}

#[test]
fn small_grids_rejected() {
    for dims in [[2, 3, 3], [3, 2, 3], [3, 3, 1]] {
        assert!(matches!(build_torus(BlockKind::Cubic, dims), Err(Error::GridTooSmall { value, .. }) if value < 3));
    }
}

#[test]
fn template_matches_kuhn_fixture() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/kuhn_tetrahedra.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let expected: Vec<[[i64; 3]; 4]> = serde_json::from_value(doc["tetrahedra"].clone()).unwrap();
    for kind in [BlockKind::Cubic, BlockKind::Skew] {
        let t = BlockTemplate::new(kind);
        assert_eq!(t.tetrahedra.to_vec(), expected);
        let total: f64 = (0..6).map(|k| t.tet_volume(k)).sum();
        assert!((0..6).all(|k| t.tet_volume(k) > 0.0));
        assert!((total - 1.0).abs() < 1e-14, "unit block volume, got {total}");
    }
}

#[test]
fn face_diagonal_indexing_round_trips() {
    let tri = build_torus(BlockKind::Cubic, [3, 4, 5]).unwrap();
    let mut seen = HashSet::new();
    for i in 0..3 {
        for j in 0..4 {
            for k in 0..5 {
                for d in Diagonal::ALL {
                    let e = tri.face_diagonal_index([i, j, k], d);
                    assert!(tri.face_diagonals().contains(&e));
                    assert_eq!(tri.face_diagonal_coords(e).unwrap(), ([i as usize, j as usize, k as usize], d));
                    seen.insert(e);
                }
            }
        }
    }
    assert_eq!(seen.len(), 3 * 60);
    // indices wrap periodically
    assert_eq!(tri.face_diagonal_index([-1, 4, 5], Diagonal::Xy), tri.face_diagonal_index([2, 0, 0], Diagonal::Xy));
}

#[test]
fn document_round_trip() {
    let tri = build_torus(BlockKind::Skew, [3, 3, 4]).unwrap();
    let json = serde_json::to_string(&tri.to_document()).unwrap();
    let doc = serde_json::from_str(&json).unwrap();
    let back = TorusTriangulation::from_document(&doc).unwrap();
    assert_eq!(back.num_edges(), tri.num_edges());
    assert_eq!(back.to_document(), tri.to_document());

    let mut tampered: serde_json::Value = serde_json::from_str(&json).unwrap();
    tampered["tetrahedra"][0][0] = serde_json::json!(1);
    let doc = serde_json::from_value(tampered).unwrap();
    assert!(TorusTriangulation::from_document(&doc).is_err());
}

#[test]
fn flat_lengths_scale() {
    let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
    let a = flat_lengths(&tri, 1.0);
    let b = flat_lengths(&tri, 1.0 / 3.0);
    assert!(a.iter().zip(&b).all(|(x, y)| (x / 3.0 - y).abs() < 1e-15));
}

#[test]
fn flat_positions_reproduce_flat_lengths() {
    // an edge's length is the distance between its endpoints in the flat embedding
    for kind in [BlockKind::Cubic, BlockKind::Skew] {
        let tri = build_torus(kind, [3, 3, 3]).unwrap();
        let l = flat_lengths(&tri, 1.0);
        for (e, edge) in tri.edges().iter().enumerate() {
            let o = edge.role.offset();
            let b = edge.block;
            let p = tri.template().position([b[0] as f64, b[1] as f64, b[2] as f64]);
            let q = tri
                .template()
                .position([(b[0] as i64 + o[0]) as f64, (b[1] as i64 + o[1]) as f64, (b[2] as i64 + o[2]) as f64]);
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            assert!((d - l[e]).abs() < 1e-14, "{kind:?} edge {e}");
        }
    }
}
