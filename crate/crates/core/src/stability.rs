//! Linearisation of the flow about flat lengths.
//!
//! The coefficient matrix `A` has `a_ij = d(rate_i)/d(l_j)` over the face
//! diagonals, in role-blocked order (all yz, then zx, then xy). Entries are
//! central differences of the exact flow rates; each perturbation only
//! touches a few tetrahedra, so only the rows that can see it are evaluated.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::WeightingStrategy;
use crate::error::{Error, Result};
use crate::flow::{flatten_block, flow_rhs, flow_rhs_subset, FlattenMethod, FlowMode};
use crate::geometry::total_volume;
use crate::lattice::{BlockKind, TorusTriangulation};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientOptions {
    /// Finite-difference step relative to the perturbed edge's length. The
    /// default sits near the cube root of machine epsilon, where rounding
    /// and truncation errors of central differences balance.
    pub h_rel: f64,
    pub weighting: WeightingStrategy,
    pub flatten: FlattenMethod,
    /// Largest base rate accepted as stationary.
    pub stationary_tolerance: f64,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        CoefficientOptions {
            h_rel: 1e-5,
            weighting: WeightingStrategy::FullLength,
            flatten: FlattenMethod::Linear,
            stationary_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityMatrix {
    pub matrix: DMatrix<f64>,
    pub mode: FlowMode,
    pub kind: BlockKind,
    pub dims: [usize; 3],
    /// Length scale `c`: the cube root of the mean block volume.
    pub scale: f64,
    /// Edge id of each row and column.
    pub face_diagonals: Vec<usize>,
    pub row_sums: Vec<f64>,
}

/// Edges whose rates can change when the edges in `changed` move: the face
/// diagonals with an endpoint on a tetrahedron containing a changed edge.
fn affected_rows(tri: &TorusTriangulation, changed: &[usize]) -> Vec<usize> {
    let mut verts = BTreeSet::new();
    for &e in changed {
        for &t in tri.edge_ring(e) {
            verts.extend(tri.tet(t).vertices);
        }
    }
    let mut rows = BTreeSet::new();
    for v in verts {
        for &e in tri.vertex_edges(v) {
            if tri.edge(e).role.is_face_diagonal() {
                rows.insert(e);
            }
        }
    }
    rows.into_iter().collect()
}

/// Blocks whose body-diagonal ring contains `edge`.
fn blocks_touching(tri: &TorusTriangulation, edge: usize) -> Vec<[usize; 3]> {
    let mut blocks: Vec<[usize; 3]> = tri.edge_ring(edge).iter().map(|&t| tri.tet(t).block).collect();
    blocks.sort_unstable();
    blocks.dedup();
    blocks
}

/// Lengths after moving face diagonal `j` by `h`, plus every edge that moved.
fn perturbed(
    tri: &TorusTriangulation,
    base: &[f64],
    j: usize,
    h: f64,
    mode: FlowMode,
    method: FlattenMethod,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut l = base.to_vec();
    l[j] += h;
    let mut changed = vec![j];
    if mode == FlowMode::Flattened {
        for block in blocks_touching(tri, j) {
            flatten_block(tri, &mut l, block, method)?;
            changed.push(tri.body_diagonal(block));
        }
    }
    Ok((l, changed))
}

pub fn build_coefficient_matrix(
    tri: &TorusTriangulation,
    lengths: &[f64],
    mode: FlowMode,
    opts: &CoefficientOptions,
) -> Result<StabilityMatrix> {
    let base_rates = flow_rhs(tri, lengths, opts.weighting)?;
    let (edge, max_rate) = base_rates
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(ke, m), (e, r)| if r.abs() > m { (e, r.abs()) } else { (ke, m) });
    if max_rate > opts.stationary_tolerance {
        return Err(Error::NotStationary { max_rate, edge });
    }
    let fd: Vec<usize> = tri.face_diagonals().collect();
    let first = fd[0];
    let m = fd.len();
    let columns: Vec<Vec<(usize, f64)>> = fd
        .par_iter()
        .map(|&j| {
            let h = opts.h_rel * lengths[j];
            let (lp, cp) = perturbed(tri, lengths, j, h, mode, opts.flatten)?;
            let (lm, cm) = perturbed(tri, lengths, j, -h, mode, opts.flatten)?;
            let mut changed = cp;
            changed.extend(cm);
            changed.sort_unstable();
            changed.dedup();
            let rows = affected_rows(tri, &changed);
            let rp = flow_rhs_subset(tri, &lp, &rows, opts.weighting)?;
            let rm = flow_rhs_subset(tri, &lm, &rows, opts.weighting)?;
            Ok(rows
                .iter()
                .zip(rp.iter().zip(&rm))
                .map(|(&i, (a, b))| (i - first, (a - b) / (2.0 * h)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::zeros(m, m);
    for (c, col) in columns.into_iter().enumerate() {
        for (r, v) in col {
            matrix[(r, c)] = v;
        }
    }
    let row_sums = matrix.row_iter().map(|r| r.sum()).collect();
    let scale = (total_volume(tri, lengths)? / tri.num_blocks() as f64).cbrt();
    Ok(StabilityMatrix { matrix, mode, kind: tri.kind(), dims: tri.dims(), scale, face_diagonals: fd, row_sums })
}

/// All eigenvalues, sorted by real part then imaginary part, descending.
///
/// Uses faer's Hessenberg reduction and multishift QR; nalgebra's Schur
/// iteration stalls on the highly degenerate spectra of these matrices.
pub fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let ev = m
        .eigenvalues()
        .map_err(|_| Error::EigenNonConvergence { dim: n, max_iterations: 30 * n })?;
    let mut ev: Vec<Complex64> = ev.into_iter().map(|z| Complex64::new(z.re, z.im)).collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(ev)
}

/// Distinct real parts, largest first, merging values closer than `tol`.
pub fn distinct_real_parts(ev: &[Complex64], tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for z in ev {
        if out.last().is_none_or(|&last| (last - z.re).abs() > tol) {
            out.push(z.re);
        }
    }
    out
}

/// Smallest singular value of `A - lambda I`, a backward-error measure for
/// a computed eigenvalue.
pub fn eigen_residual(a: &DMatrix<f64>, lambda: Complex64) -> f64 {
    let n = a.nrows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let x = Complex64::new(a[(i, j)], 0.0);
        if i == j {
            x - lambda
        } else {
            x
        }
    });
    shifted.singular_values().min()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RowSumReport {
    /// The common row sum, if rows agree within the tolerance.
    pub value: Option<f64>,
    pub mean: f64,
    pub spread: f64,
    /// `||A 1 - mean 1||_inf`.
    pub residual: f64,
}

pub fn row_sum_eigenpair(a: &DMatrix<f64>, tolerance: f64) -> RowSumReport {
    let sums: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    let (lo, hi) = sums.iter().fold((f64::MAX, f64::MIN), |(l, h), &s| (l.min(s), h.max(s)));
    let residual = sums.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
    let spread = hi - lo;
    RowSumReport { value: (spread <= tolerance).then_some(mean), mean, spread, residual }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedSkewMatrix {
    pub matrix: [[f64; 3]; 3],
    pub eigenvalue: f64,
    /// Unit dominant eigenvector `(p, q, r)` with positive sum.
    pub eigenvector: [f64; 3],
    /// `||A v - lambda v||_inf / ||v||_inf` for the lifted vector.
    pub lifted_residual: f64,
}

/// Collapse `A` onto the three face-diagonal roles: entry `(r, c)` is the sum
/// over role-block `c` of any row in role-block `r`.
pub fn reduced_skew_matrix(a: &DMatrix<f64>, tolerance: f64) -> Result<ReducedSkewMatrix> {
    let n = a.nrows() / 3;
    let mut red = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let sums: Vec<f64> = (0..n).map(|i| a.view((r * n + i, c * n), (1, n)).sum()).collect();
            let (lo, hi) = sums.iter().fold((f64::MAX, f64::MIN), |(l, h), &s| (l.min(s), h.max(s)));
            if hi - lo > tolerance {
                return Err(Error::NonConstantRoleBlock { block: 3 * r + c, spread: hi - lo, tolerance });
            }
            red[r][c] = sums.iter().sum::<f64>() / n as f64;
        }
    }
    let m = DMatrix::from_fn(3, 3, |i, j| red[i][j]);
    let ev = spectrum(&m)?;
    let lambda = ev[0].re;
    let shifted = &m - DMatrix::identity(3, 3) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let k = svd.singular_values.imin();
    let mut vec = [vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]];
    if vec.iter().sum::<f64>() < 0.0 {
        vec.iter_mut().for_each(|x| *x = -*x);
    }
    let lifted = DVector::from_fn(3 * n, |i, _| vec[i / n]);
    let residual = (a * &lifted - &lifted * lambda).amax() / lifted.amax();
    Ok(ReducedSkewMatrix { matrix: red, eigenvalue: lambda, eigenvector: vec, lifted_residual: residual })
}

/// Largest `|a_ij - a_T(i)T(j)|` over all grid translations `T`.
pub fn translation_defect(tri: &TorusTriangulation, sm: &StabilityMatrix) -> f64 {
    let first = sm.face_diagonals[0];
    let shift = |e: usize, t: [usize; 3]| -> usize {
        let edge = tri.edge(e);
        let b = edge.block;
        tri.edge_at([(b[0] + t[0]) as i64, (b[1] + t[1]) as i64, (b[2] + t[2]) as i64], edge.role) - first
    };
    let m = sm.matrix.nrows();
    (0..tri.num_blocks())
        .into_par_iter()
        .map(|k| {
            let t = tri.block_coords(k);
            let mut worst = 0.0f64;
            for i in 0..m {
                let ti = shift(sm.face_diagonals[i], t);
                for j in 0..m {
                    let tj = shift(sm.face_diagonals[j], t);
                    worst = worst.max((sm.matrix[(i, j)] - sm.matrix[(ti, tj)]).abs());
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

impl StabilityMatrix {
    pub fn row_of(&self, edge: usize) -> Option<usize> {
        self.face_diagonals.iter().position(|&e| e == edge)
    }

    /// Non-negligible entries of a row as `(role, block offset, value)`,
    /// offsets taken relative to the row edge's block.
    pub fn stencil(&self, tri: &TorusTriangulation, row: usize, threshold: f64) -> Vec<(String, [i64; 3], f64)> {
        let origin = tri.edge(self.face_diagonals[row]).block;
        let mut out: Vec<(String, [i64; 3], f64)> = self
            .face_diagonals
            .iter()
            .enumerate()
            .filter(|(c, _)| self.matrix[(row, *c)].abs() > threshold)
            .map(|(c, &e)| (tri.edge(e).role.to_string(), tri.edge_offset(e, origin), self.matrix[(row, c)]))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// A row written as `a δ_role(i,j,k) + ...`, one term per line.
    pub fn format_stencil(&self, tri: &TorusTriangulation, row: usize) -> String {
        let e = self.face_diagonals[row];
        let (block, _) = tri.face_diagonal_coords(e).expect("rows are face diagonals");
        let mut s = format!(
            "d/dt δ_{}{:?} =  (row sum {:+.6})\n",
            tri.edge(e).role,
            block,
            self.row_sums[row]
        );
        for (role, off, v) in self.stencil(tri, row, 1e-7) {
            s.push_str(&format!("  {v:+10.6} δ_{role:<3}({:>2},{:>2},{:>2})\n", off[0], off[1], off[2]));
        }
        s
    }

    /// Dense CSV, one line per row; the header lists column edge ids.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = self.face_diagonals.iter().map(|e| format!("e{e}")).collect();
        writeln!(out, "row,{}", header.join(","))?;
        for (i, r) in self.matrix.row_iter().enumerate() {
            let vals: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(out, "e{},{}", self.face_diagonals[i], vals.join(","))?;
        }
        Ok(())
    }

    pub fn bundle(&self, eigenvalues: &[Complex64]) -> SpectrumBundle {
        SpectrumBundle {
            schema: SPECTRUM_SCHEMA.to_string(),
            kind: self.kind,
            mode: self.mode,
            c: self.scale,
            dims: self.dims,
            row_sums: self.row_sums.clone(),
            eigenvalues: eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

pub const SPECTRUM_SCHEMA: &str = "regge-flow/spectrum/v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumBundle {
    pub schema: String,
    pub kind: BlockKind,
    pub mode: FlowMode,
    pub c: f64,
    pub dims: [usize; 3],
    pub row_sums: Vec<f64>,
    /// `[re, im]` pairs, largest real part first.
    pub eigenvalues: Vec<[f64; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_of_known_matrix() {
        // rotation-plus-scaling block and a real eigenvalue
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let ev = spectrum(&a).unwrap();
        assert!((ev[0].re - 3.0).abs() < 1e-12);
        assert!((ev[1] - Complex64::new(1.0, 2.0)).norm() < 1e-12);
        assert!((ev[2] - Complex64::new(1.0, -2.0)).norm() < 1e-12);
        for z in ev {
            assert!(eigen_residual(&a, z) < 1e-12);
        }
    }

    #[test]
    fn row_sums() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.0]);
        let r = row_sum_eigenpair(&a, 1e-12);
        assert_eq!(r.value, Some(3.0));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        let r = row_sum_eigenpair(&b, 1e-12);
        assert_eq!(r.value, None);
        assert!((r.spread - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distinct_parts_merge_repeats() {
        let ev = [Complex64::new(12.0, 0.0), Complex64::new(6.0, 1.0), Complex64::new(6.0, -1.0), Complex64::new(0.0, 0.0)];
        assert_eq!(distinct_real_parts(&ev, 1e-9), vec![12.0, 6.0, 0.0]);
    }
}
