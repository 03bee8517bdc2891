//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero on any failure not listed in `KNOWN_GAPS`. Set
//! `ACCEPTANCE_STRICT=1` to fail on those as well.

mod common;

use std::time::{Duration, Instant};

use common::{monte_carlo_edge_volume, stencil_gap, FLATTENED_CUBIC_XY, RAW_CUBIC_XY, SKEW_EIGENVALUE, SKEW_REDUCED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regge_flow::curvature::{ricci_curvature, WeightingStrategy};
use regge_flow::dual_volumes::edge_volumes;
use regge_flow::fitting::{fit_edges, fit_linear, median, summarize_fits, trace_statistics, FitModel};
use regge_flow::flow::{flatten_block, flow_rhs, run_flow, FlattenMethod, FlowConfig, FlowMode, FlowTrace, Perturbation};
use regge_flow::geometry::{block_pair_lengths, embed_block};
use regge_flow::lattice::{build_torus, flat_lengths, BlockKind, EdgeRole, TorusTriangulation};
use regge_flow::stability::{
    build_coefficient_matrix, distinct_real_parts, reduced_skew_matrix, spectrum, CoefficientOptions, StabilityMatrix,
};

/// Criteria that cannot pass as specified, with the reason.
const KNOWN_GAPS: &[(usize, &str)] = &[(
    6,
    "explicit Euler at dt = 0.01 turns the linear rate 12 into ln(1 + 0.12)/0.01 = 11.33, \
     so a cubic k1 of 11.998 is out of reach for the specified integrator",
)];

struct Verdict {
    pass: bool,
    detail: String,
}

type Outcome = Result<Verdict, regge_flow::Error>;
type Check = fn() -> Outcome;

fn verdict(pass: bool, detail: String) -> Outcome {
    Ok(Verdict { pass, detail })
}

const KINDS: [BlockKind; 2] = [BlockKind::Cubic, BlockKind::Skew];

fn matrix(kind: BlockKind, dims: [usize; 3], c: f64, mode: FlowMode) -> Result<StabilityMatrix, regge_flow::Error> {
    let tri = build_torus(kind, dims)?;
    build_coefficient_matrix(&tri, &flat_lengths(&tri, c), mode, &CoefficientOptions::default())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn flat_stationarity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for kind in KINDS {
        for n in [3, 4, 5] {
            let tri = build_torus(kind, [n; 3])?;
            for c in [1.0, 1.0 / 3.0] {
                let l = flat_lengths(&tri, c);
                let f = ricci_curvature(&tri, &l, WeightingStrategy::FullLength)?;
                worst = worst.max(f.max_abs()).max(max_abs(&flow_rhs(&tri, &l, WeightingStrategy::FullLength)?));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-11 && secs < 10.0, format!("max |eps, R, K, Rc, rate| = {worst:.2e}, {secs:.1} s"))
}

fn raw_cubic_row() -> Outcome {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3])?;
    let sm = matrix(BlockKind::Cubic, [3, 3, 3], 1.0, FlowMode::Raw)?;
    let gap = (0..3).map(|turns| stencil_gap(&tri, &sm, [1, 1, 1], RAW_CUBIC_XY, turns)).fold(0.0, f64::max);
    verdict(gap < 1e-6, format!("xy, yz, zx rows differ from the published stencil by at most {gap:.2e}"))
}

fn flattened_cubic_row() -> Outcome {
    let tri = build_torus(BlockKind::Cubic, [4, 4, 4])?;
    let sm = matrix(BlockKind::Cubic, [4, 4, 4], 1.0, FlowMode::Flattened)?;
    let gap = (0..3).map(|turns| stencil_gap(&tri, &sm, [1, 1, 1], FLATTENED_CUBIC_XY, turns)).fold(0.0, f64::max);
    let sums = max_abs(&sm.row_sums);
    verdict(gap < 1e-6 && sums < 1e-8, format!("row gap {gap:.2e}, max |row sum| {sums:.2e}"))
}

fn instability_spectra() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for (dims, want) in [([3, 3, 3], [12.0, 6.0, 2.739, 0.0]), ([3, 3, 4], [12.0, 8.0, 6.0, 4.514])] {
        let one = distinct_real_parts(&spectrum(&matrix(BlockKind::Cubic, dims, 1.0, FlowMode::Raw)?.matrix)?, 1e-6);
        let third = distinct_real_parts(&spectrum(&matrix(BlockKind::Cubic, dims, 1.0 / 3.0, FlowMode::Raw)?.matrix)?, 1e-5);
        let gap = one.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
        let ratio = one
            .iter()
            .zip(&third)
            .filter(|(a, _)| a.abs() > 1e-6)
            .map(|(a, b)| (b / (9.0 * a) - 1.0).abs())
            .fold(0.0, f64::max);
        pass &= gap < 1e-3 && ratio < 1e-6 && one.len() >= 4;
        notes.push(format!("cubic {dims:?} gap {gap:.1e} ratio {ratio:.1e}"));
    }
    let sm = matrix(BlockKind::Skew, [3, 3, 3], 1.0, FlowMode::Raw)?;
    let top = spectrum(&sm.matrix)?[0].re;
    let third = spectrum(&matrix(BlockKind::Skew, [3, 3, 3], 1.0 / 3.0, FlowMode::Raw)?.matrix)?[0].re;
    let red = reduced_skew_matrix(&sm.matrix, 1e-6)?;
    let entry_gap = (0..9).map(|k| (red.matrix[k / 3][k % 3] - SKEW_REDUCED[k / 3][k % 3]).abs()).fold(0.0, f64::max);
    let ratio = (third / (9.0 * top) - 1.0).abs();
    pass &= (top - SKEW_EIGENVALUE).abs() < 2e-3 && entry_gap < 2e-3 && ratio < 1e-6;
    notes.push(format!("skew top {top:.6} reduced-matrix gap {entry_gap:.1e} ratio {ratio:.1e}"));
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    notes.push(format!("{secs:.1} s"));
    verdict(pass, notes.join("; "))
}

fn flattened_suppression() -> Outcome {
    let mut worst = f64::MIN;
    for kind in KINDS {
        for dims in [[3, 3, 3], [3, 3, 4]] {
            for c in [1.0, 1.0 / 3.0] {
                worst = worst.max(spectrum(&matrix(kind, dims, c, FlowMode::Flattened)?.matrix)?[0].re);
            }
        }
    }
    verdict(worst <= 1e-8, format!("max Re(lambda) over 8 flattened matrices = {worst:.2e}"))
}

fn traces(kind: BlockKind, c: f64, mode: FlowMode) -> Result<(TorusTriangulation, Vec<FlowTrace>), regge_flow::Error> {
    let tri = build_torus(kind, [3, 3, 3])?;
    let l = flat_lengths(&tri, c);
    let runs = (0..5)
        .map(|seed| {
            let cfg = FlowConfig { mode, perturbation: Perturbation { seed, sigma: 1e-15 }, ..FlowConfig::default() };
            run_flow(&tri, &l, &cfg)
        })
        .collect::<Result<_, _>>()?;
    Ok((tri, runs))
}

fn simulated_growth() -> Outcome {
    let start = Instant::now();
    let (tri, runs) = traces(BlockKind::Cubic, 1.0, FlowMode::Raw)?;
    let sm = build_coefficient_matrix(&tri, &flat_lengths(&tri, 1.0), FlowMode::Raw, &CoefficientOptions::default())?;
    let init: Vec<f64> = distinct_real_parts(&spectrum(&sm.matrix)?, 1e-6).into_iter().filter(|x| *x > 1e-6).take(3).collect();
    let fd: Vec<usize> = tri.face_diagonals().collect();
    let mut fits = Vec::new();
    for t in &runs {
        fits.extend(fit_edges(t, &fd, FitModel::Cubic3Exp, Some(&init))?);
    }
    let cubic = summarize_fits(FitModel::Cubic3Exp, &fits);
    let (k1, r2) = (cubic.rates[0].median, cubic.r_squared.median);

    let (tri, runs) = traces(BlockKind::Skew, 1.0 / 3.0, FlowMode::Raw)?;
    let sm = build_coefficient_matrix(&tri, &flat_lengths(&tri, 1.0 / 3.0), FlowMode::Raw, &CoefficientOptions::default())?;
    let lambda = spectrum(&sm.matrix)?[0].re;
    let fd: Vec<usize> = tri.face_diagonals().collect();
    let mut fits = Vec::new();
    for t in &runs {
        fits.extend(fit_edges(t, &fd, FitModel::Skew1ExpLinear, Some(&[lambda]))?);
    }
    let skew = summarize_fits(FitModel::Skew1ExpLinear, &fits);
    let k = skew.rates[0].median;
    let secs = start.elapsed().as_secs_f64();

    let cubic_ok = (11.9..=12.1).contains(&k1) && r2 > 0.999;
    let skew_ok = (8.2..=8.8).contains(&k);
    verdict(
        cubic_ok && skew_ok && secs < 300.0,
        format!(
            "cubic median k1 {k1:.4} (band [11.9, 12.1]: {}), R^2 {r2:.6}; skew median k {k:.4} (band [8.2, 8.8]: {}), \
             linearised {lambda:.4}; {secs:.1} s",
            if cubic_ok { "in" } else { "OUT" },
            if skew_ok { "in" } else { "OUT" },
        ),
    )
}

fn flattened_statistics() -> Outcome {
    let (_, runs) = traces(BlockKind::Cubic, 1.0, FlowMode::Flattened)?;
    let cubic_max = runs.iter().map(|t| trace_statistics(t).all.max_change).fold(0.0, f64::max);
    let (tri, runs) = traces(BlockKind::Skew, 1.0 / 3.0, FlowMode::Flattened)?;
    let mut slopes = Vec::new();
    for t in &runs {
        for e in 0..tri.num_edges() {
            slopes.push(fit_linear(&t.times, &t.deviation(e))?.slope.abs());
        }
    }
    let slope = median(&slopes);
    verdict(
        cubic_max <= 1e-14 && (2e-15..=8e-15).contains(&slope),
        format!("cubic max change {cubic_max:.2e}; skew median |slope| {slope:.2e}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3])?;
    let skew = build_torus(BlockKind::Skew, [3, 3, 3])?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut fit = 0.0f64;
    for trial in 0..100 {
        let t = if trial % 2 == 0 { &tri } else { &skew };
        let mut l = flat_lengths(t, 1.0);
        l.iter_mut().for_each(|x| *x += rng.random_range(-1e-3..=1e-3));
        let block = [rng.random_range(0..3), rng.random_range(0..3), rng.random_range(0..3)];
        let emb = embed_block(t.template(), &block_pair_lengths(t, &l, block, false), None);
        flatten_block(t, &mut l, block, FlattenMethod::Exact)?;
        worst = worst.max((l[t.body_diagonal(block)] - emb.body_diagonal).abs());
        fit = fit.max(emb.residual);
    }
    let mut volume_gap = 0.0f64;
    for t in [&tri, &skew] {
        let vol = edge_volumes(t, &flat_lengths(t, 1.0))?;
        for (i, role) in EdgeRole::ALL.into_iter().enumerate() {
            let e = t.edge_at([1, 1, 1], role);
            let mc = monte_carlo_edge_volume(t, e, 240, 100 + i as u64);
            volume_gap = volume_gap.max((mc - vol[e]).abs() / vol[e]);
        }
    }
    verdict(
        worst < 1e-9 && fit < 1e-12 && volume_gap < 5e-4,
        format!("flatten vs embedding {worst:.2e} (embedding residual {fit:.1e}); edge volumes vs sampling {volume_gap:.1e} relative"),
    )
}

fn step_halving() -> Outcome {
    let mut worst = 0.0f64;
    for kind in KINDS {
        for mode in [FlowMode::Raw, FlowMode::Flattened] {
            let tri = build_torus(kind, [3, 3, 3])?;
            let l = flat_lengths(&tri, 1.0);
            let opts = CoefficientOptions::default();
            let a = build_coefficient_matrix(&tri, &l, mode, &opts)?.matrix;
            let half = CoefficientOptions { h_rel: opts.h_rel / 2.0, ..opts };
            let b = build_coefficient_matrix(&tri, &l, mode, &half)?.matrix;
            let norm = a.amax();
            for (x, y) in a.iter().zip(b.iter()) {
                // entries below 1e-6 of the largest are structural zeros
                if x.abs() > 1e-6 * norm {
                    worst = worst.max((x - y).abs() / x.abs());
                }
            }
        }
    }
    verdict(worst < 1e-4, format!("max relative entry change under h -> h/2: {worst:.2e}"))
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(&str, Check); 9] = [
        ("flat stationarity", flat_stationarity),
        ("raw cubic linearised row", raw_cubic_row),
        ("flattened cubic linearised row", flattened_cubic_row),
        ("instability spectra", instability_spectra),
        ("flattened spectra suppression", flattened_suppression),
        ("simulated growth rates", simulated_growth),
        ("flattened run statistics", flattened_statistics),
        ("oracle equivalence", oracle_equivalence),
        ("finite-difference step halving", step_halving),
    ];
    let mut unexpected = 0;
    let mut total = Duration::ZERO;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let v = check().unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
        total += start.elapsed();
        let gap = KNOWN_GAPS.iter().find(|(k, _)| *k == n);
        let tag = match (v.pass, gap) {
            (true, _) => "PASS",
            (false, Some(_)) if !strict => "FAIL (known)",
            (false, _) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {n} {name}: {tag} | {}", v.detail);
        if let (false, Some((_, why))) = (v.pass, gap) {
            println!("    known gap: {why}");
        }
    }
    println!("acceptance finished in {:.1} s, {unexpected} unexpected failure(s)", total.as_secs_f64());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
