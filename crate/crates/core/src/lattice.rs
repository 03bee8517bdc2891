//! Periodic block triangulations of the 3-torus.
//!
//! Every block of the grid is split into six tetrahedra around its main
//! body diagonal (the Kuhn split). In local corner coordinates the six
//! tetrahedra are the monotone lattice paths from `000` to `111`:
//!
//! ```text
//! 000 100 110 111      000 100 101 111
//! 000 010 110 111      000 010 011 111
//! 000 001 101 111      000 001 011 111
//! ```
//!
//! (odd permutations are stored with their last two corners swapped so
//! that every tetrahedron is positively oriented). With this split the
//! face diagonals of opposite block faces point the same way, and each
//! block owns exactly seven edges, all leaving its origin corner:
//!
//! | role | offset    |
//! |------|-----------|
//! | x    | (1,0,0)   |
//! | y    | (0,1,0)   |
//! | z    | (0,0,1)   |
//! | yz   | (0,1,1)   |
//! | zx   | (1,0,1)   |
//! | xy   | (1,1,0)   |
//! | xyz  | (1,1,1)   |
//!
//! Edges are indexed role-major: `role_index * n + block_index`, with
//! blocks ordered lexicographically by `(i, j, k)`. The face diagonals
//! therefore occupy the contiguous range `3n..6n` in yz, zx, xy order.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema tag written into exported triangulation documents.
pub const TRIANGULATION_SCHEMA: &str = "regge-flow/triangulation/v1";

/// Local vertex pairs of a tetrahedron, in the order used by [`Tetrahedron::edges`].
pub const TET_EDGE_PAIRS: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Cubic,
    Skew,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Cubic => "cubic",
            BlockKind::Skew => "skew",
        }
    }
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" => Ok(BlockKind::Cubic),
            "skew" => Ok(BlockKind::Skew),
            other => Err(Error::Config(format!("unknown block kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Face-diagonal types, named by the coordinate plane they lie in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Diagonal {
    Yz,
    Zx,
    Xy,
}

impl Diagonal {
    pub const ALL: [Diagonal; 3] = [Diagonal::Yz, Diagonal::Zx, Diagonal::Xy];

    /// Position of this type in the role-blocked face-diagonal ordering.
    pub fn index(self) -> usize {
        match self {
            Diagonal::Yz => 0,
            Diagonal::Zx => 1,
            Diagonal::Xy => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        EdgeRole::FaceDiagonal(self).as_str()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeRole {
    Axis(Axis),
    FaceDiagonal(Diagonal),
    BodyDiagonal,
}

impl EdgeRole {
    pub const ALL: [EdgeRole; 7] = [
        EdgeRole::Axis(Axis::X),
        EdgeRole::Axis(Axis::Y),
        EdgeRole::Axis(Axis::Z),
        EdgeRole::FaceDiagonal(Diagonal::Yz),
        EdgeRole::FaceDiagonal(Diagonal::Zx),
        EdgeRole::FaceDiagonal(Diagonal::Xy),
        EdgeRole::BodyDiagonal,
    ];

    pub fn index(self) -> usize {
        match self {
            EdgeRole::Axis(Axis::X) => 0,
            EdgeRole::Axis(Axis::Y) => 1,
            EdgeRole::Axis(Axis::Z) => 2,
            EdgeRole::FaceDiagonal(d) => 3 + d.index(),
            EdgeRole::BodyDiagonal => 6,
        }
    }

    /// Lattice offset from the owning block's origin corner to the far end.
    pub fn offset(self) -> [i64; 3] {
        match self {
            EdgeRole::Axis(Axis::X) => [1, 0, 0],
            EdgeRole::Axis(Axis::Y) => [0, 1, 0],
            EdgeRole::Axis(Axis::Z) => [0, 0, 1],
            EdgeRole::FaceDiagonal(Diagonal::Yz) => [0, 1, 1],
            EdgeRole::FaceDiagonal(Diagonal::Zx) => [1, 0, 1],
            EdgeRole::FaceDiagonal(Diagonal::Xy) => [1, 1, 0],
            EdgeRole::BodyDiagonal => [1, 1, 1],
        }
    }

    pub fn from_offset(offset: [i64; 3]) -> Option<EdgeRole> {
        EdgeRole::ALL.into_iter().find(|r| r.offset() == offset)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeRole::Axis(Axis::X) => "x",
            EdgeRole::Axis(Axis::Y) => "y",
            EdgeRole::Axis(Axis::Z) => "z",
            EdgeRole::FaceDiagonal(Diagonal::Yz) => "yz",
            EdgeRole::FaceDiagonal(Diagonal::Zx) => "zx",
            EdgeRole::FaceDiagonal(Diagonal::Xy) => "xy",
            EdgeRole::BodyDiagonal => "xyz",
        }
    }

    pub fn is_face_diagonal(self) -> bool {
        matches!(self, EdgeRole::FaceDiagonal(_))
    }
}

impl fmt::Display for EdgeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown edge role '{s}'")))
    }
}

impl Serialize for EdgeRole {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EdgeRole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Corner index `cx + 2 cy + 4 cz` of a unit block.
fn corner_index(c: [i64; 3]) -> usize {
    (c[0] + 2 * c[1] + 4 * c[2]) as usize
}

fn corner_coords(index: usize) -> [i64; 3] {
    [(index & 1) as i64, ((index >> 1) & 1) as i64, ((index >> 2) & 1) as i64]
}

/// Geometric and combinatorial template for one block.
#[derive(Clone, Debug)]
pub struct BlockTemplate {
    pub kind: BlockKind,
    /// Rows are the images of the lattice directions x, y, z.
    pub basis: [[f64; 3]; 3],
    /// Six tetrahedra as local corner coordinates, positively oriented.
    pub tetrahedra: [[[i64; 3]; 4]; 6],
    /// Every corner pair joined by an edge inside the block, with its role.
    pub edge_roles: Vec<([usize; 2], EdgeRole)>,
}

impl BlockTemplate {
    pub fn new(kind: BlockKind) -> Self {
        let basis = match kind {
            BlockKind::Cubic => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            BlockKind::Skew => [
                [1.0, -1.0 / 3.0, 0.0],
                [0.0, 1.0, 0.0],
                [-1.0 / 3.0, -2.0 / 9.0, 1.0],
            ],
        };
        let tetrahedra = kuhn_tetrahedra();
        let mut edge_roles: Vec<([usize; 2], EdgeRole)> = Vec::new();
        for tet in &tetrahedra {
            for [a, b] in TET_EDGE_PAIRS {
                let (p, q) = (tet[a], tet[b]);
                let (lo, hi) = if corner_index(p) < corner_index(q) { (p, q) } else { (q, p) };
                let d = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
                let role = EdgeRole::from_offset(d).expect("Kuhn edges are monotone lattice steps");
                let key = [corner_index(lo), corner_index(hi)];
                if !edge_roles.iter().any(|(k, _)| *k == key) {
                    edge_roles.push((key, role));
                }
            }
        }
        edge_roles.sort_by_key(|(k, _)| *k);
        BlockTemplate { kind, basis, tetrahedra, edge_roles }
    }

    /// Euclidean position of a lattice point under this template's embedding.
    pub fn position(&self, lattice: [f64; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (a, row) in self.basis.iter().enumerate() {
            for d in 0..3 {
                p[d] += lattice[a] * row[d];
            }
        }
        p
    }

    pub fn corner_position(&self, corner: usize) -> [f64; 3] {
        let c = corner_coords(corner);
        self.position([c[0] as f64, c[1] as f64, c[2] as f64])
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let p: Vec<[f64; 3]> = self.tetrahedra[t]
            .iter()
            .map(|c| self.position([c[0] as f64, c[1] as f64, c[2] as f64]))
            .collect();
        let u = sub(p[1], p[0]);
        let v = sub(p[2], p[0]);
        let w = sub(p[3], p[0]);
        (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
            + u[2] * (v[0] * w[1] - v[1] * w[0]))
            / 6.0
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn kuhn_tetrahedra() -> [[[i64; 3]; 4]; 6] {
    const PERMS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], false),
        ([0, 2, 1], true),
        ([1, 0, 2], true),
        ([1, 2, 0], false),
        ([2, 0, 1], false),
        ([2, 1, 0], true),
    ];
    let mut out = [[[0i64; 3]; 4]; 6];
    for (t, (perm, odd)) in PERMS.iter().enumerate() {
        let mut c = [0i64; 3];
        out[t][0] = c;
        for (s, &axis) in perm.iter().enumerate() {
            c[axis] = 1;
            out[t][s + 1] = c;
        }
        if *odd {
            out[t].swap(2, 3);
        }
    }
    out
}

/// Flat edge lengths of a unit-volume block, in role order x, y, z, yz, zx, xy, xyz.
pub fn flat_role_lengths(kind: BlockKind) -> [f64; 7] {
    match kind {
        BlockKind::Cubic => [
            1.0,
            1.0,
            1.0,
            2f64.sqrt(),
            2f64.sqrt(),
            2f64.sqrt(),
            3f64.sqrt(),
        ],
        BlockKind::Skew => [
            10f64.sqrt() / 3.0,
            1.0,
            94f64.sqrt() / 9.0,
            139f64.sqrt() / 9.0,
            142f64.sqrt() / 9.0,
            13f64.sqrt() / 3.0,
            133f64.sqrt() / 9.0,
        ],
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    /// `[origin, far]`, the origin being the owning block's origin corner.
    pub vertices: [usize; 2],
    pub role: EdgeRole,
    pub block: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tetrahedron {
    pub vertices: [usize; 4],
    /// Edge ids in [`TET_EDGE_PAIRS`] order.
    pub edges: [usize; 6],
    pub block: [usize; 3],
    /// Index of the template tetrahedron this one instantiates.
    pub template: usize,
}

impl Tetrahedron {
    /// Local edge slot (0..6) of a global edge id, if present.
    pub fn local_edge(&self, edge: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == edge)
    }

    pub fn local_vertex(&self, vertex: usize) -> Option<usize> {
        self.vertices.iter().position(|&v| v == vertex)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub edges: [usize; 3],
}

/// A closed periodic tetrahedral complex built from a grid of blocks.
#[derive(Clone, Debug)]
pub struct TorusTriangulation {
    template: BlockTemplate,
    dims: [usize; 3],
    edges: Vec<Edge>,
    triangles: Vec<Triangle>,
    tets: Vec<Tetrahedron>,
    edge_tets: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
    vertex_tets: Vec<Vec<usize>>,
    edge_neighbours: Vec<Vec<usize>>,
    triangle_tets: Vec<[usize; 2]>,
    tet_triangles: Vec<[usize; 4]>,
}

/// Build the periodic triangulation of a `dims` grid of `kind` blocks.
pub fn build_torus(kind: BlockKind, dims: [usize; 3]) -> Result<TorusTriangulation> {
    for (axis, &value) in ['x', 'y', 'z'].iter().zip(dims.iter()) {
        if value < 3 {
            return Err(Error::GridTooSmall { axis: *axis, value });
        }
    }
    let template = BlockTemplate::new(kind);
    let n = dims[0] * dims[1] * dims[2];
    let wrap = |c: [i64; 3]| -> [usize; 3] {
        [
            c[0].rem_euclid(dims[0] as i64) as usize,
            c[1].rem_euclid(dims[1] as i64) as usize,
            c[2].rem_euclid(dims[2] as i64) as usize,
        ]
    };
    let linear = |b: [usize; 3]| (b[0] * dims[1] + b[1]) * dims[2] + b[2];

    let mut edges = Vec::with_capacity(7 * n);
    for role in EdgeRole::ALL {
        for b in 0..n {
            let block = unlinear(b, dims);
            let o = role.offset();
            let far = wrap([
                block[0] as i64 + o[0],
                block[1] as i64 + o[1],
                block[2] as i64 + o[2],
            ]);
            edges.push(Edge { vertices: [b, linear(far)], role, block });
        }
    }
    let edge_id = |p: [i64; 3], q: [i64; 3]| -> usize {
        let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        if let Some(role) = EdgeRole::from_offset(d) {
            role.index() * n + linear(wrap(p))
        } else {
            let role = EdgeRole::from_offset([-d[0], -d[1], -d[2]])
                .expect("tetrahedron edges are lattice edges");
            role.index() * n + linear(wrap(q))
        }
    };

    let mut tets = Vec::with_capacity(6 * n);
    for b in 0..n {
        let block = unlinear(b, dims);
        let base = [block[0] as i64, block[1] as i64, block[2] as i64];
        for (t, corners) in template.tetrahedra.iter().enumerate() {
            let pts: Vec<[i64; 3]> = corners
                .iter()
                .map(|c| [base[0] + c[0], base[1] + c[1], base[2] + c[2]])
                .collect();
            let vertices = [
                linear(wrap(pts[0])),
                linear(wrap(pts[1])),
                linear(wrap(pts[2])),
                linear(wrap(pts[3])),
            ];
            let mut tet_edges = [0usize; 6];
            for (s, [a, bb]) in TET_EDGE_PAIRS.iter().enumerate() {
                tet_edges[s] = edge_id(pts[*a], pts[*bb]);
            }
            tets.push(Tetrahedron { vertices, edges: tet_edges, block, template: t });
        }
    }

    // Triangles keyed by their sorted edge triple.
    let mut tri_index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(12 * n);
    let mut triangle_tets: Vec<Vec<usize>> = Vec::with_capacity(12 * n);
    let mut tet_triangles = vec![[0usize; 4]; tets.len()];
    for (t, tet) in tets.iter().enumerate() {
        for opposite in 0..4 {
            let local: Vec<usize> = (0..4).filter(|&k| k != opposite).collect();
            let verts = [tet.vertices[local[0]], tet.vertices[local[1]], tet.vertices[local[2]]];
            let slot = |a: usize, b: usize| {
                let pair = if a < b { [a, b] } else { [b, a] };
                TET_EDGE_PAIRS.iter().position(|p| *p == pair).unwrap()
            };
            let mut tri_edges = [
                tet.edges[slot(local[0], local[1])],
                tet.edges[slot(local[0], local[2])],
                tet.edges[slot(local[1], local[2])],
            ];
            tri_edges.sort_unstable();
            let id = *tri_index.entry(tri_edges).or_insert_with(|| {
                let mut v = verts;
                v.sort_unstable();
                triangles.push(Triangle { vertices: v, edges: tri_edges });
                triangle_tets.push(Vec::new());
                triangles.len() - 1
            });
            triangle_tets[id].push(t);
            tet_triangles[t][opposite] = id;
        }
    }
    let triangle_tets: Vec<[usize; 2]> = triangle_tets
        .into_iter()
        .map(|ts| {
            assert_eq!(ts.len(), 2, "every triangle of a closed 3-manifold bounds two tetrahedra");
            [ts[0], ts[1]]
        })
        .collect();

    let mut edge_tets_unordered = vec![Vec::new(); edges.len()];
    let mut vertex_tets = vec![Vec::new(); n];
    for (t, tet) in tets.iter().enumerate() {
        for &e in &tet.edges {
            edge_tets_unordered[e].push(t);
        }
        for &v in &tet.vertices {
            vertex_tets[v].push(t);
        }
    }
    let mut vertex_edges = vec![Vec::new(); n];
    for (e, edge) in edges.iter().enumerate() {
        vertex_edges[edge.vertices[0]].push(e);
        vertex_edges[edge.vertices[1]].push(e);
    }
    let edge_neighbours: Vec<Vec<usize>> = edges
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let mut nb: Vec<usize> = edge
                .vertices
                .iter()
                .flat_map(|&v| vertex_edges[v].iter().copied())
                .filter(|&o| o != e)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            nb
        })
        .collect();

    let mut tri = TorusTriangulation {
        template,
        dims,
        edges,
        triangles,
        tets,
        edge_tets: Vec::new(),
        vertex_edges,
        vertex_tets,
        edge_neighbours,
        triangle_tets,
        tet_triangles,
    };
    tri.edge_tets = (0..tri.edges.len())
        .map(|e| tri.order_ring(e, &edge_tets_unordered[e]))
        .collect();
    Ok(tri)
}

fn unlinear(b: usize, dims: [usize; 3]) -> [usize; 3] {
    [b / (dims[1] * dims[2]), (b / dims[2]) % dims[1], b % dims[2]]
}

impl TorusTriangulation {
    /// Order the tetrahedra around an edge so consecutive ones share a
    /// triangle containing the edge. Panics if the ring does not close.
    fn order_ring(&self, edge: usize, unordered: &[usize]) -> Vec<usize> {
        let [a, b] = self.edges[edge].vertices;
        let faces_with_edge = |t: usize| -> Vec<usize> {
            let tet = &self.tets[t];
            (0..4)
                .filter(|&opp| tet.vertices[opp] != a && tet.vertices[opp] != b)
                .map(|opp| self.tet_triangles[t][opp])
                .collect()
        };
        let mut ring = vec![unordered[0]];
        let mut came_through = faces_with_edge(unordered[0])[0];
        loop {
            let current = *ring.last().unwrap();
            let exit = faces_with_edge(current)
                .into_iter()
                .find(|&f| f != came_through)
                .expect("two faces of a tetrahedron contain any of its edges");
            let [t0, t1] = self.triangle_tets[exit];
            let next = if t0 == current { t1 } else { t0 };
            if next == ring[0] {
                break;
            }
            assert!(
                !ring.contains(&next) && ring.len() < unordered.len(),
                "tetrahedron ring around edge {edge} does not close"
            );
            ring.push(next);
            came_through = exit;
        }
        assert_eq!(ring.len(), unordered.len(), "tetrahedron ring around edge {edge} is not connected");
        ring
    }

    pub fn kind(&self) -> BlockKind {
        self.template.kind
    }

    pub fn template(&self) -> &BlockTemplate {
        &self.template
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn num_blocks(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn num_vertices(&self) -> usize {
        self.num_blocks()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn tets(&self) -> &[Tetrahedron] {
        &self.tets
    }

    pub fn tet(&self, t: usize) -> &Tetrahedron {
        &self.tets[t]
    }

    /// Tetrahedra around an edge, cyclically ordered.
    pub fn edge_ring(&self, e: usize) -> &[usize] {
        &self.edge_tets[e]
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }

    pub fn vertex_tets(&self, v: usize) -> &[usize] {
        &self.vertex_tets[v]
    }

    /// Edges sharing at least one vertex with `e` (excluding `e`).
    pub fn edge_neighbours(&self, e: usize) -> &[usize] {
        &self.edge_neighbours[e]
    }

    pub fn triangle_tets(&self, f: usize) -> [usize; 2] {
        self.triangle_tets[f]
    }

    /// Triangle of tetrahedron `t` opposite its local vertex `k`.
    pub fn tet_triangle(&self, t: usize, k: usize) -> usize {
        self.tet_triangles[t][k]
    }

    pub fn block_index(&self, block: [usize; 3]) -> usize {
        (block[0] * self.dims[1] + block[1]) * self.dims[2] + block[2]
    }

    pub fn block_coords(&self, b: usize) -> [usize; 3] {
        unlinear(b, self.dims)
    }

    pub fn vertex_coords(&self, v: usize) -> [usize; 3] {
        unlinear(v, self.dims)
    }

    pub fn wrap(&self, c: [i64; 3]) -> [usize; 3] {
        [
            c[0].rem_euclid(self.dims[0] as i64) as usize,
            c[1].rem_euclid(self.dims[1] as i64) as usize,
            c[2].rem_euclid(self.dims[2] as i64) as usize,
        ]
    }

    /// Edge with the given role leaving the origin corner of `block`.
    pub fn edge_at(&self, block: [i64; 3], role: EdgeRole) -> usize {
        role.index() * self.num_blocks() + self.block_index(self.wrap(block))
    }

    /// The seven edges owned by a block, in role order.
    pub fn block_edges(&self, block: [usize; 3]) -> [usize; 7] {
        let b = [block[0] as i64, block[1] as i64, block[2] as i64];
        EdgeRole::ALL.map(|r| self.edge_at(b, r))
    }

    pub fn block_tets(&self, block: [usize; 3]) -> [usize; 6] {
        let b = self.block_index(block);
        [6 * b, 6 * b + 1, 6 * b + 2, 6 * b + 3, 6 * b + 4, 6 * b + 5]
    }

    pub fn body_diagonal(&self, block: [usize; 3]) -> usize {
        self.edge_at([block[0] as i64, block[1] as i64, block[2] as i64], EdgeRole::BodyDiagonal)
    }

    /// All 19 edges inside a block as `(local corner pair, edge id)`.
    /// Corners are numbered `cx + 2 cy + 4 cz`.
    pub fn block_local_edges(&self, block: [usize; 3]) -> Vec<([usize; 2], usize)> {
        let b = [block[0] as i64, block[1] as i64, block[2] as i64];
        self.template
            .edge_roles
            .iter()
            .map(|&([lo, _], role)| {
                let c = corner_coords(lo);
                let e = self.edge_at([b[0] + c[0], b[1] + c[1], b[2] + c[2]], role);
                let hi = corner_index([
                    c[0] + role.offset()[0],
                    c[1] + role.offset()[1],
                    c[2] + role.offset()[2],
                ]);
                ([lo, hi], e)
            })
            .collect()
    }

    /// Face diagonal of `diag` type owned by the block at `coords` (reduced modulo the grid).
    pub fn face_diagonal_index(&self, coords: [i64; 3], diag: Diagonal) -> usize {
        self.edge_at(coords, EdgeRole::FaceDiagonal(diag))
    }

    /// Inverse of [`Self::face_diagonal_index`].
    pub fn face_diagonal_coords(&self, edge: usize) -> Result<([usize; 3], Diagonal)> {
        let e = &self.edges[edge];
        match e.role {
            EdgeRole::FaceDiagonal(d) => Ok((e.block, d)),
            other => Err(Error::NotFaceDiagonal { edge, role: other.to_string() }),
        }
    }

    /// Face diagonal edge ids in role-blocked order (all yz, then zx, then xy).
    pub fn face_diagonals(&self) -> std::ops::Range<usize> {
        let n = self.num_blocks();
        3 * n..6 * n
    }

    pub fn body_diagonals(&self) -> std::ops::Range<usize> {
        let n = self.num_blocks();
        6 * n..7 * n
    }

    /// Block offset of an edge relative to `origin`, reduced to the
    /// symmetric range `(-d/2, d/2]` per axis.
    pub fn edge_offset(&self, edge: usize, origin: [usize; 3]) -> [i64; 3] {
        let b = self.edges[edge].block;
        let mut out = [0i64; 3];
        for a in 0..3 {
            let d = self.dims[a] as i64;
            let mut o = (b[a] as i64 - origin[a] as i64).rem_euclid(d);
            if o > d / 2 {
                o -= d;
            }
            out[a] = o;
        }
        out
    }

    /// Number of blocks whose closed unit cell contains the edge.
    pub fn blocks_containing_edge(&self, edge: usize) -> usize {
        let n = self.tets.len() / 6;
        let mut blocks: Vec<[usize; 3]> = self.edge_tets[edge].iter().map(|&t| self.tets[t].block).collect();
        blocks.sort_unstable();
        blocks.dedup();
        debug_assert!(blocks.len() <= n);
        blocks.len()
    }

    /// Euler characteristic `V - E + F - T`.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
            - self.num_tets() as i64
    }

    /// Lattice position of a vertex in flat unit-volume coordinates.
    pub fn flat_vertex_position(&self, v: usize) -> [f64; 3] {
        let c = self.vertex_coords(v);
        self.template.position([c[0] as f64, c[1] as f64, c[2] as f64])
    }

    /// Check the structural invariants; returns a list of human-readable failures.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.num_blocks();
        if self.num_edges() != 7 * n {
            problems.push(format!("expected {} edges, found {}", 7 * n, self.num_edges()));
        }
        if self.num_triangles() != 12 * n {
            problems.push(format!("expected {} triangles, found {}", 12 * n, self.num_triangles()));
        }
        if self.num_tets() != 6 * n {
            problems.push(format!("expected {} tetrahedra, found {}", 6 * n, self.num_tets()));
        }
        if self.euler_characteristic() != 0 {
            problems.push(format!("Euler characteristic {}", self.euler_characteristic()));
        }
        for (e, ring) in self.edge_tets.iter().enumerate() {
            let [a, b] = self.edges[e].vertices;
            for w in 0..ring.len() {
                let (t0, t1) = (ring[w], ring[(w + 1) % ring.len()]);
                let shared: Vec<usize> = self.tets[t0]
                    .vertices
                    .iter()
                    .filter(|v| self.tets[t1].vertices.contains(v))
                    .copied()
                    .collect();
                if shared.len() != 3 || !shared.contains(&a) || !shared.contains(&b) {
                    problems.push(format!("edge {e}: ring step {w} does not cross a triangle on the edge"));
                }
            }
        }
        for e in 0..self.num_edges() {
            let expected = match self.edges[e].role {
                EdgeRole::Axis(_) => 4,
                EdgeRole::FaceDiagonal(_) => 2,
                EdgeRole::BodyDiagonal => 1,
            };
            let got = self.blocks_containing_edge(e);
            if got != expected {
                problems.push(format!("edge {e} lies in {got} blocks, expected {expected}"));
            }
        }
        problems
    }

    pub fn to_document(&self) -> TriangulationDocument {
        TriangulationDocument {
            schema: TRIANGULATION_SCHEMA.to_string(),
            kind: self.kind(),
            dims: self.dims,
            vertices: (0..self.num_vertices()).map(|v| self.vertex_coords(v)).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord { vertices: e.vertices, role: e.role, block: e.block })
                .collect(),
            triangles: self.triangles.iter().map(|t| t.vertices).collect(),
            tetrahedra: self.tets.iter().map(|t| t.vertices).collect(),
        }
    }

    /// Rebuild from an exported document, rejecting any table that does not
    /// match the deterministic construction for its `(kind, dims)`.
    pub fn from_document(doc: &TriangulationDocument) -> Result<Self> {
        if doc.schema != TRIANGULATION_SCHEMA {
            return Err(Error::Config(format!("unsupported triangulation schema '{}'", doc.schema)));
        }
        let tri = build_torus(doc.kind, doc.dims)?;
        if tri.to_document() != *doc {
            return Err(Error::Config(
                "triangulation tables do not match the construction for this kind and grid".into(),
            ));
        }
        Ok(tri)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub vertices: [usize; 2],
    pub role: EdgeRole,
    pub block: [usize; 3],
}

/// JSON form of a triangulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangulationDocument {
    pub schema: String,
    pub kind: BlockKind,
    pub dims: [usize; 3],
    pub vertices: Vec<[usize; 3]>,
    pub edges: Vec<EdgeRecord>,
    pub triangles: Vec<[usize; 3]>,
    pub tetrahedra: Vec<[usize; 4]>,
}

/// Flat edge lengths for the triangulation's block kind, scaled by `scale`.
pub fn flat_lengths(tri: &TorusTriangulation, scale: f64) -> Vec<f64> {
    let table = flat_role_lengths(tri.kind());
    tri.edges().iter().map(|e| table[e.role.index()] * scale).collect()
}
