use regge_flow::flow::{
    flatten_body_diagonals, run_flow, FlattenMethod, FlowConfig, FlowMode, FlowTrace, Perturbation,
};
use regge_flow::geometry::{deficit_angle, total_volume};
use regge_flow::lattice::{build_torus, flat_lengths, BlockKind};
use regge_flow::Error;

fn config(mode: FlowMode, steps: usize, seed: u64, sigma: f64) -> FlowConfig {
    FlowConfig { steps, mode, perturbation: Perturbation { seed, sigma }, ..FlowConfig::default() }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    let a = run_flow(&tri, &l, &config(FlowMode::Raw, 5, 7, 1e-6)).unwrap();
    let b = run_flow(&tri, &l, &config(FlowMode::Raw, 5, 7, 1e-6)).unwrap();
    let c = run_flow(&tri, &l, &config(FlowMode::Raw, 5, 8, 1e-6)).unwrap();
    assert_eq!(a.lengths, b.lengths);
    assert_ne!(a.lengths, c.lengths);
}

#[test]
fn unperturbed_flat_grid_stays_put() {
    for mode in [FlowMode::Raw, FlowMode::Flattened] {
        let tri = build_torus(BlockKind::Cubic, [3, 3, 4]).unwrap();
        let l = flat_lengths(&tri, 1.0 / 3.0);
        let t = run_flow(&tri, &l, &config(mode, 10, 0, 0.0)).unwrap();
        for row in &t.lengths {
            let drift = row.iter().zip(&l).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(drift < 1e-12, "{mode:?} {drift:e}");
        }
    }
}

#[test]
fn trace_survives_csv_round_trip() {
    let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    let mut cfg = config(FlowMode::Raw, 6, 3, 1e-5);
    cfg.record_every = 2;
    let t = run_flow(&tri, &l, &cfg).unwrap();
    assert_eq!(t.times.len(), 4);
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = FlowTrace::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back.times, t.times);
    assert_eq!(back.reference, t.reference);
    assert_eq!(back.roles, t.roles);
    for (x, y) in back.lengths.iter().flatten().zip(t.lengths.iter().flatten()) {
        assert_eq!(x, y);
    }
    assert_eq!(t.deviation(0).len(), t.times.len());
}

#[test]
fn normalisation_keeps_total_volume() {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    let mut cfg = config(FlowMode::Raw, 20, 2, 1e-3);
    cfg.normalize = true;
    let t = run_flow(&tri, &l, &cfg).unwrap();
    let v0 = total_volume(&tri, &t.lengths[0]).unwrap();
    let v1 = total_volume(&tri, t.last()).unwrap();
    assert!((v1 - v0).abs() < 1e-12 * v0, "{v0} {v1}");
}

#[test]
fn flattened_runs_keep_blocks_flat() {
    let tri = build_torus(BlockKind::Skew, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    let mut cfg = config(FlowMode::Flattened, 5, 4, 1e-4);
    cfg.flatten = FlattenMethod::Exact;
    let t = run_flow(&tri, &l, &cfg).unwrap();
    assert_eq!(t.flatten_residuals.len(), 6);
    assert!(t.flatten_residuals.iter().all(|r| *r < 1e-13));
    let mut last = t.last().to_vec();
    let res = flatten_body_diagonals(&tri, &mut last, FlattenMethod::Exact).unwrap();
    assert!(res.iter().all(|r| r.delta.abs() < 1e-12));
    for b in tri.body_diagonals() {
        assert!(deficit_angle(&tri, &last, b).unwrap().abs() < 1e-12);
    }
}

#[test]
fn collapsing_mesh_aborts_with_step() {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    let mut cfg = config(FlowMode::Raw, 50, 1, 0.2);
    cfg.dt = 0.5;
    match run_flow(&tri, &l, &cfg) {
        Err(Error::FlowAborted { step, .. }) => assert!(step <= 50),
        Err(Error::DegenerateSimplex { .. }) | Err(Error::InvalidLength { .. }) => {}
        other => panic!("expected an abort, got {:?}", other.map(|t| t.times.len())),
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let tri = build_torus(BlockKind::Cubic, [3, 3, 3]).unwrap();
    let l = flat_lengths(&tri, 1.0);
    assert!(matches!(run_flow(&tri, &l[1..], &FlowConfig::default()), Err(Error::LengthCount { .. })));
    let mut cfg = FlowConfig::default();
    cfg.perturbation.sigma = -1.0;
    assert!(matches!(run_flow(&tri, &l, &cfg), Err(Error::Config(_))));
}
