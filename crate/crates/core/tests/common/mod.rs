//! Oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regge_flow::lattice::TorusTriangulation;

/// Volume of the capped dual cell of `edge` in the flat embedding of a
/// triangulation at scale 1, by jittered stratified sampling.
///
/// Works in the universal cover: a sample belongs to the dual cell of the
/// lattice point with the largest barycentric coordinate in its Kuhn
/// tetrahedron, and it counts when that point is one of the two unwrapped
/// endpoints and it lies between the planes through them orthogonal to the
/// edge. Shares no code with the library's clipping or unfolding.
pub fn monte_carlo_edge_volume(tri: &TorusTriangulation, edge: usize, per_axis: usize, seed: u64) -> f64 {
    let basis = tri.template().basis;
    // rows of `basis` are the images of the lattice directions
    let b = Matrix3::from_fn(|i, j| basis[i][j]);
    let e = tri.edge(edge);
    let o = e.role.offset();
    let p1 = [e.block[0] as i64, e.block[1] as i64, e.block[2] as i64];
    let p2 = [p1[0] + o[0], p1[1] + o[1], p1[2] + o[2]];
    let to_space = |l: [f64; 3]| b.transpose() * Vector3::new(l[0], l[1], l[2]);
    let x1 = to_space(p1.map(|v| v as f64));
    let x2 = to_space(p2.map(|v| v as f64));
    let u = x2 - x1;
    let uu = u.norm_squared();

    let lo: [f64; 3] = std::array::from_fn(|a| (p1[a].min(p2[a]) - 1) as f64);
    let hi: [f64; 3] = std::array::from_fn(|a| (p1[a].max(p2[a]) + 1) as f64);
    let step: [f64; 3] = std::array::from_fn(|a| (hi[a] - lo[a]) / per_axis as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..per_axis {
                let idx = [i, j, k];
                let l: [f64; 3] = std::array::from_fn(|a| lo[a] + step[a] * (idx[a] as f64 + rng.random::<f64>()));
                let base = l.map(f64::floor);
                let f: [f64; 3] = std::array::from_fn(|a| l[a] - base[a]);
                let mut order = [0usize, 1, 2];
                order.sort_by(|&a, &c| f[c].total_cmp(&f[a]));
                // barycentric weights of the path corners base, +e_a1, +e_a2, +e_a3
                let w = [1.0 - f[order[0]], f[order[0]] - f[order[1]], f[order[1]] - f[order[2]], f[order[2]]];
                let best = (0..4).max_by(|&a, &c| w[a].total_cmp(&w[c])).unwrap();
                let mut corner = base.map(|x| x as i64);
                for &axis in order.iter().take(best) {
                    corner[axis] += 1;
                }
                if corner != p1 && corner != p2 {
                    continue;
                }
                let s = (to_space(l) - x1).dot(&u);
                if (0.0..=uu).contains(&s) {
                    hits += 1;
                }
            }
        }
    }
    let box_lattice: f64 = (0..3).map(|a| hi[a] - lo[a]).product();
    let det = b.determinant().abs();
    det * box_lattice * hits as f64 / (per_axis as f64).powi(3)
}

use regge_flow::lattice::{Diagonal, EdgeRole};
use regge_flow::stability::StabilityMatrix;

type Stencil = &'static [(Diagonal, [i64; 3], f64)];

/// Linearised raw cubic flow at the xy diagonal of block (0,0,0).
pub const RAW_CUBIC_XY: Stencil = &[
    (Diagonal::Xy, [0, 0, 0], -4.0),
    (Diagonal::Xy, [-1, -1, 0], -1.0),
    (Diagonal::Xy, [1, 1, 0], -1.0),
    (Diagonal::Xy, [-1, 0, 0], 1.5),
    (Diagonal::Xy, [0, -1, 0], 1.5),
    (Diagonal::Xy, [0, 1, 0], 1.5),
    (Diagonal::Xy, [1, 0, 0], 1.5),
    (Diagonal::Xy, [0, 0, -1], 2.0),
    (Diagonal::Xy, [0, 0, 1], 2.0),
    (Diagonal::Yz, [0, -1, -1], -0.5),
    (Diagonal::Yz, [1, 1, 0], -0.5),
    (Diagonal::Yz, [0, -1, 0], 1.0),
    (Diagonal::Yz, [1, 1, -1], 1.0),
    (Diagonal::Yz, [0, 0, 0], 1.5),
    (Diagonal::Yz, [1, 0, -1], 1.5),
    (Diagonal::Zx, [-1, 0, -1], -0.5),
    (Diagonal::Zx, [1, 1, 0], -0.5),
    (Diagonal::Zx, [-1, 0, 0], 1.0),
    (Diagonal::Zx, [1, 1, -1], 1.0),
    (Diagonal::Zx, [0, 0, 0], 1.5),
    (Diagonal::Zx, [0, 1, -1], 1.5),
];

/// The same row with every block kept flat.
pub const FLATTENED_CUBIC_XY: Stencil = &[
    (Diagonal::Xy, [0, 0, 0], -5.0),
    (Diagonal::Xy, [-1, -1, 0], -1.0),
    (Diagonal::Xy, [1, 1, 0], -1.0),
    (Diagonal::Xy, [-1, 0, 1], -0.25),
    (Diagonal::Xy, [0, -1, 1], -0.25),
    (Diagonal::Xy, [0, 1, -1], -0.25),
    (Diagonal::Xy, [1, 0, -1], -0.25),
    (Diagonal::Xy, [-1, 0, 0], 1.25),
    (Diagonal::Xy, [0, -1, 0], 1.25),
    (Diagonal::Xy, [0, 1, 0], 1.25),
    (Diagonal::Xy, [1, 0, 0], 1.25),
    (Diagonal::Xy, [0, 0, -1], 1.5),
    (Diagonal::Xy, [0, 0, 1], 1.5),
    (Diagonal::Yz, [0, -1, -1], -0.5),
    (Diagonal::Yz, [0, 0, -1], -0.5),
    (Diagonal::Yz, [1, 0, 0], -0.5),
    (Diagonal::Yz, [1, 1, 0], -0.5),
    (Diagonal::Yz, [-1, 0, 0], -0.25),
    (Diagonal::Yz, [0, 1, -1], -0.25),
    (Diagonal::Yz, [1, -1, 0], -0.25),
    (Diagonal::Yz, [2, 0, -1], -0.25),
    (Diagonal::Yz, [0, -1, 0], 0.75),
    (Diagonal::Yz, [0, 0, 0], 0.75),
    (Diagonal::Yz, [1, 0, -1], 0.75),
    (Diagonal::Yz, [1, 1, -1], 0.75),
    (Diagonal::Zx, [-1, 0, -1], -0.5),
    (Diagonal::Zx, [0, 0, -1], -0.5),
    (Diagonal::Zx, [0, 1, 0], -0.5),
    (Diagonal::Zx, [1, 1, 0], -0.5),
    (Diagonal::Zx, [-1, 1, 0], -0.25),
    (Diagonal::Zx, [0, -1, 0], -0.25),
    (Diagonal::Zx, [0, 2, -1], -0.25),
    (Diagonal::Zx, [1, 0, -1], -0.25),
    (Diagonal::Zx, [-1, 0, 0], 0.75),
    (Diagonal::Zx, [0, 0, 0], 0.75),
    (Diagonal::Zx, [0, 1, -1], 0.75),
    (Diagonal::Zx, [1, 1, -1], 0.75),
];

/// Role sums of the raw skew matrix at unit block volume, rows and columns
/// ordered yz, zx, xy.
pub const SKEW_REDUCED: [[f64; 3]; 3] = [[0.308, 0.311, 0.282], [0.410, 0.415, 0.376], [0.266, 0.269, 0.244]];
pub const SKEW_EIGENVALUE: f64 = 0.966;
pub const SKEW_EIGENVECTOR: [f64; 3] = [0.532, 0.710, 0.461];

/// Relabel x -> y -> z -> x, applied `turns` times.
fn rotate(d: Diagonal, o: [i64; 3], turns: usize) -> (Diagonal, [i64; 3]) {
    let (mut d, mut o) = (d, o);
    for _ in 0..turns {
        d = match d {
            Diagonal::Xy => Diagonal::Yz,
            Diagonal::Yz => Diagonal::Zx,
            Diagonal::Zx => Diagonal::Xy,
        };
        o = [o[2], o[0], o[1]];
    }
    (d, o)
}

/// Largest gap between a matrix row and a stencil rotated `turns` times,
/// taken over every column of the row. Rows are those of the diagonal at
/// `block`; the stencil's own diagonal is rotated along with it.
pub fn stencil_gap(tri: &TorusTriangulation, sm: &StabilityMatrix, block: [i64; 3], stencil: Stencil, turns: usize) -> f64 {
    let (own, _) = rotate(Diagonal::Xy, [0; 3], turns);
    let first = sm.face_diagonals[0];
    let row = tri.edge_at(block, EdgeRole::FaceDiagonal(own)) - first;
    let mut want = vec![0.0; sm.matrix.ncols()];
    for &(d, o, v) in stencil {
        let (d, o) = rotate(d, o, turns);
        let col = tri.edge_at([block[0] + o[0], block[1] + o[1], block[2] + o[2]], EdgeRole::FaceDiagonal(d)) - first;
        want[col] += v;
    }
    (0..want.len()).map(|c| (sm.matrix[(row, c)] - want[c]).abs()).fold(0.0, f64::max)
}
