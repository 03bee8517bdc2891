//! Piecewise-flat Ricci flow `d|l|/dt = -Rc_l |l|`, integrated with explicit
//! Euler steps, optionally keeping every block flat by re-solving its body
//! diagonal before each step.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{ricci_all, ricci_subset, WeightingStrategy};
use crate::error::{Error, Result};
use crate::geometry::{check_lengths, deficit_angle, total_volume};
use crate::lattice::{EdgeRole, TorusTriangulation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    #[default]
    Raw,
    /// Body diagonals are constraint-determined so every block stays flat.
    Flattened,
}

impl std::str::FromStr for FlowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(FlowMode::Raw),
            "flattened" | "flat" => Ok(FlowMode::Flattened),
            other => Err(Error::Config(format!("unknown flow mode '{other}'"))),
        }
    }
}

/// How body diagonals are re-solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlattenMethod {
    /// One linearised solve per block: `delta = -eps / eps'`.
    #[default]
    Linear,
    /// Newton iteration until `|eps| < 1e-13`.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub seed: u64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub dt: f64,
    pub steps: usize,
    pub mode: FlowMode,
    pub normalize: bool,
    pub perturbation: Perturbation,
    pub record_every: usize,
    #[serde(default)]
    pub flatten: FlattenMethod,
    #[serde(default)]
    pub weighting: WeightingStrategy,
}

impl Default for FlowConfig {
    /// 100 Euler steps of 0.01 with perturbations of standard deviation 1e-15.
    fn default() -> Self {
        FlowConfig {
            dt: 0.01,
            steps: 100,
            mode: FlowMode::Raw,
            normalize: false,
            perturbation: Perturbation { seed: 0, sigma: 1e-15 },
            record_every: 1,
            flatten: FlattenMethod::Linear,
            weighting: WeightingStrategy::FullLength,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if !(self.perturbation.sigma >= 0.0 && self.perturbation.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be non-negative, got {}", self.perturbation.sigma)));
        }
        Ok(())
    }
}

/// `d|l|/dt` for every edge. Body-diagonal rates are still reported in
/// flattened mode even though the integrator does not use them.
pub fn flow_rhs(tri: &TorusTriangulation, lengths: &[f64], weighting: WeightingStrategy) -> Result<Vec<f64>> {
    let rc = ricci_all(tri, lengths, weighting)?;
    Ok(rc.iter().zip(lengths).map(|(r, l)| -r * l).collect())
}

/// `d|l|/dt` for a subset of edges.
pub fn flow_rhs_subset(
    tri: &TorusTriangulation,
    lengths: &[f64],
    edges: &[usize],
    weighting: WeightingStrategy,
) -> Result<Vec<f64>> {
    let rc = ricci_subset(tri, lengths, edges, weighting)?;
    Ok(rc.iter().zip(edges).map(|(r, &e)| -r * lengths[e]).collect())
}

/// Outcome of flattening one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlattenResult {
    pub block: [usize; 3],
    pub delta: f64,
    /// `|eps|` of the body diagonal after the update.
    pub residual: f64,
}

const SINGULAR_DERIVATIVE: f64 = 1e-10;
const EXACT_TOLERANCE: f64 = 1e-13;
const FD_STEP: f64 = 1e-6;

/// Deficit of a body diagonal and its central-difference derivative.
fn deficit_and_slope(tri: &TorusTriangulation, lengths: &mut [f64], b: usize) -> Result<(f64, f64)> {
    let b0 = lengths[b];
    let h = FD_STEP * b0;
    let eps = deficit_angle(tri, lengths, b)?;
    lengths[b] = b0 + h;
    let ep = deficit_angle(tri, lengths, b);
    lengths[b] = b0 - h;
    let em = deficit_angle(tri, lengths, b);
    lengths[b] = b0;
    Ok((eps, (ep? - em?) / (2.0 * h)))
}

/// Re-solve the body diagonal of one block so its deficit vanishes.
pub fn flatten_block(
    tri: &TorusTriangulation,
    lengths: &mut [f64],
    block: [usize; 3],
    method: FlattenMethod,
) -> Result<FlattenResult> {
    let b = tri.body_diagonal(block);
    let start = lengths[b];
    let iterations = match method {
        FlattenMethod::Linear => 1,
        FlattenMethod::Exact => 50,
    };
    for _ in 0..iterations {
        let (eps, slope) = deficit_and_slope(tri, lengths, b)?;
        if method == FlattenMethod::Exact && eps.abs() < EXACT_TOLERANCE {
            break;
        }
        if slope.abs() < SINGULAR_DERIVATIVE {
            return Err(Error::SingularConstraint { block, derivative: slope });
        }
        if eps == 0.0 {
            break;
        }
        lengths[b] -= eps / slope;
        if lengths[b].is_nan() || lengths[b] <= 0.0 {
            return Err(Error::InvalidLength { edge: b, length: lengths[b] });
        }
    }
    let residual = deficit_angle(tri, lengths, b)?.abs();
    if method == FlattenMethod::Exact && residual >= EXACT_TOLERANCE {
        return Err(Error::FlattenNotConverged { block, residual });
    }
    Ok(FlattenResult { block, delta: lengths[b] - start, residual })
}

/// Flatten every block. Each body diagonal's ring lies in its own block, so
/// the blocks are independent and solved in parallel.
pub fn flatten_body_diagonals(
    tri: &TorusTriangulation,
    lengths: &mut [f64],
    method: FlattenMethod,
) -> Result<Vec<FlattenResult>> {
    check_lengths(tri, lengths)?;
    let base = lengths.to_vec();
    let results: Vec<(usize, f64, FlattenResult)> = (0..tri.num_blocks())
        .into_par_iter()
        .map(|k| {
            let block = tri.block_coords(k);
            let mut local = base.clone();
            let r = flatten_block(tri, &mut local, block, method)?;
            let b = tri.body_diagonal(block);
            Ok((b, local[b], r))
        })
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .map(|(b, len, r)| {
            lengths[b] = len;
            r
        })
        .collect())
}

/// Time series produced by [`run_flow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    /// Flat reference lengths, before perturbation.
    pub reference: Vec<f64>,
    pub roles: Vec<EdgeRole>,
    pub lengths: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    /// Max `|eps|` of the body diagonals after flattening, per step.
    pub flatten_residuals: Vec<f64>,
    pub config: FlowConfig,
}

impl FlowTrace {
    pub fn num_edges(&self) -> usize {
        self.reference.len()
    }

    /// Length of `edge` minus its flat reference at every recorded time.
    pub fn deviation(&self, edge: usize) -> Vec<f64> {
        self.lengths.iter().map(|l| l[edge] - self.reference[edge]).collect()
    }

    pub fn initial(&self) -> &[f64] {
        &self.lengths[0]
    }

    pub fn last(&self) -> &[f64] {
        self.lengths.last().expect("a trace holds at least the initial state")
    }

    /// CSV with columns `step,time,edge,role,length,deviation,rate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,time,edge,role,length,deviation,rate")?;
        let every = self.config.record_every;
        for (k, (t, (l, r))) in self.times.iter().zip(self.lengths.iter().zip(&self.rates)).enumerate() {
            let step = (k * every).min(self.config.steps);
            for e in 0..l.len() {
                writeln!(
                    out,
                    "{step},{t},{e},{},{:.17e},{:.17e},{:.17e}",
                    self.roles[e],
                    l[e],
                    l[e] - self.reference[e],
                    r[e]
                )?;
            }
        }
        Ok(())
    }

    /// Parse the CSV written by [`Self::write_csv`]. The configuration is not
    /// stored in the CSV, so only the record layout is recovered.
    pub fn read_csv(text: &str) -> Result<FlowTrace> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "step,time,edge,role,length,deviation,rate" {
            return Err(Error::Config(format!("unexpected trace header '{header}'")));
        }
        let mut times: Vec<f64> = Vec::new();
        let mut lengths: Vec<Vec<f64>> = Vec::new();
        let mut rates: Vec<Vec<f64>> = Vec::new();
        let mut reference: Vec<f64> = Vec::new();
        let mut roles: Vec<EdgeRole> = Vec::new();
        let mut steps = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Config(format!("malformed trace line {}", n + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let step: usize = f[0].parse().map_err(|_| bad())?;
            let t: f64 = f[1].parse().map_err(|_| bad())?;
            let e: usize = f[2].parse().map_err(|_| bad())?;
            let role: EdgeRole = f[3].parse()?;
            let l: f64 = f[4].parse().map_err(|_| bad())?;
            let dev: f64 = f[5].parse().map_err(|_| bad())?;
            let r: f64 = f[6].parse().map_err(|_| bad())?;
            if e == 0 {
                times.push(t);
                steps.push(step);
                lengths.push(Vec::new());
                rates.push(Vec::new());
            }
            let (Some(ls), Some(rs)) = (lengths.last_mut(), rates.last_mut()) else {
                return Err(bad());
            };
            if ls.len() != e {
                return Err(bad());
            }
            ls.push(l);
            rs.push(r);
            if times.len() == 1 {
                reference.push(l - dev);
                roles.push(role);
            }
        }
        let every = if steps.len() > 1 { steps[1] - steps[0] } else { 1 };
        let dt = if times.len() > 1 { (times[1] - times[0]) / every as f64 } else { 0.01 };
        let config = FlowConfig {
            dt,
            steps: *steps.last().unwrap_or(&0),
            record_every: every.max(1),
            ..FlowConfig::default()
        };
        Ok(FlowTrace { times, reference, roles, lengths, rates, flatten_residuals: Vec::new(), config })
    }
}

fn check_step(tri: &TorusTriangulation, lengths: &[f64], step: usize) -> Result<()> {
    check_lengths(tri, lengths).map_err(|e| Error::FlowAborted { step, source: Box::new(e) })
}

/// Apply the seeded normal perturbation to every edge.
pub fn perturb(lengths: &mut [f64], p: &Perturbation) -> Result<()> {
    if p.sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, p.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for l in lengths.iter_mut() {
        *l += normal.sample(&mut rng);
    }
    Ok(())
}

/// Evolve `reference` (perturbed first) for `config.steps` Euler steps.
pub fn run_flow(tri: &TorusTriangulation, reference: &[f64], config: &FlowConfig) -> Result<FlowTrace> {
    config.validate()?;
    check_lengths(tri, reference)?;
    let mut lengths = reference.to_vec();
    perturb(&mut lengths, &config.perturbation)?;
    check_step(tri, &lengths, 0)?;
    let v0 = if config.normalize { total_volume(tri, &lengths)? } else { 0.0 };
    let mut frozen = vec![false; tri.num_edges()];
    if config.mode == FlowMode::Flattened {
        tri.body_diagonals().into_iter().for_each(|b| frozen[b] = true);
    }
    let abort = |step: usize| move |e: Error| Error::FlowAborted { step, source: Box::new(e) };

    let mut trace = FlowTrace {
        times: Vec::new(),
        reference: reference.to_vec(),
        roles: tri.edges().iter().map(|e| e.role).collect(),
        lengths: Vec::new(),
        rates: Vec::new(),
        flatten_residuals: Vec::new(),
        config: config.clone(),
    };
    for step in 0..=config.steps {
        if config.mode == FlowMode::Flattened {
            let res = flatten_body_diagonals(tri, &mut lengths, config.flatten).map_err(abort(step))?;
            trace.flatten_residuals.push(res.iter().map(|r| r.residual).fold(0.0, f64::max));
        }
        let rates = flow_rhs(tri, &lengths, config.weighting).map_err(abort(step))?;
        if step % config.record_every == 0 || step == config.steps {
            trace.times.push(step as f64 * config.dt);
            trace.lengths.push(lengths.clone());
            trace.rates.push(rates.clone());
        }
        if step == config.steps {
            break;
        }
        for (e, (l, r)) in lengths.iter_mut().zip(&rates).enumerate() {
            if frozen[e] {
                continue;
            }
            *l += config.dt * r;
        }
        check_step(tri, &lengths, step + 1)?;
        if config.normalize {
            let v = total_volume(tri, &lengths).map_err(abort(step + 1))?;
            let s = (v0 / v).cbrt();
            lengths.iter_mut().for_each(|l| *l *= s);
        }
    }
    Ok(trace)
}
