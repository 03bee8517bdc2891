//! Growth-rate fits to deviation traces.
//!
//! Exponential models are fitted by variable projection: for fixed rates the
//! amplitudes, slope and offset enter linearly and are solved exactly, so the
//! damped Gauss-Newton iteration only runs over the rates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::lattice::EdgeRole;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `a1 e^{k1 t} + a2 e^{k2 t} + a3 e^{k3 t} + c`
    Cubic3Exp,
    /// `a e^{k t} + b t + c`
    Skew1ExpLinear,
    /// `b t + c`
    Linear,
}

impl FitModel {
    pub fn num_rates(self) -> usize {
        match self {
            FitModel::Cubic3Exp => 3,
            FitModel::Skew1ExpLinear => 1,
            FitModel::Linear => 0,
        }
    }

    pub fn num_parameters(self) -> usize {
        match self {
            FitModel::Cubic3Exp => 7,
            FitModel::Skew1ExpLinear => 4,
            FitModel::Linear => 2,
        }
    }

    fn has_slope(self) -> bool {
        !matches!(self, FitModel::Cubic3Exp)
    }
}

impl std::str::FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic3exp" | "cubic_3exp" | "cubic" => Ok(FitModel::Cubic3Exp),
            "skew1exp_linear" | "skew" => Ok(FitModel::Skew1ExpLinear),
            "linear" => Ok(FitModel::Linear),
            other => Err(Error::Config(format!("unknown fit model '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Rates ordered by the size of their term at the last sample, so `rates[0]`
    /// is the dominant growth rate.
    pub rates: Vec<f64>,
    /// Amplitudes matching `rates`.
    pub amplitudes: Vec<f64>,
    pub slope: Option<f64>,
    pub offset: f64,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-10;

/// Linear least-squares part: columns `e^{k_i t}`, optionally `t`, and `1`.
fn design(times: &[f64], rates: &[f64], slope: bool) -> DMatrix<f64> {
    let cols = rates.len() + usize::from(slope) + 1;
    DMatrix::from_fn(times.len(), cols, |r, c| {
        let t = times[r];
        if c < rates.len() {
            (rates[c] * t).exp()
        } else if slope && c == rates.len() {
            t
        } else {
            1.0
        }
    })
}

/// Solve the linear coefficients for fixed rates; returns them and the residual.
fn project(times: &[f64], y: &DVector<f64>, rates: &[f64], slope: bool) -> (DVector<f64>, DVector<f64>) {
    let a = design(times, rates, slope);
    if a.iter().any(|v| !v.is_finite()) {
        // an overflowing rate: reject the trial outright
        let cols = a.ncols();
        return (DVector::zeros(cols), DVector::from_element(y.len(), f64::INFINITY));
    }
    // scale columns so the SVD cutoff is meaningful
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm().max(1e-300)).collect();
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = scaled.svd(true, true);
    let mut coef = svd.solve(y, 1e-13).unwrap_or_else(|_| DVector::zeros(norms.len()));
    for (j, n) in norms.iter().enumerate() {
        coef[j] /= n;
    }
    let resid = y - a * &coef;
    (coef, resid)
}

fn r_squared(y: &DVector<f64>, resid: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res = resid.norm_squared();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// One damped Gauss-Newton run over the rates from a single start.
fn solve_rates(times: &[f64], y: &DVector<f64>, start: &[f64], slope: bool) -> (Vec<f64>, DVector<f64>, usize, bool) {
    let mut k = start.to_vec();
    let (_, mut r) = project(times, y, &k, slope);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    for it in 0..MAX_ITERATIONS {
        // Jacobian of the projected residual by central differences
        let mut jac = DMatrix::zeros(times.len(), k.len());
        for i in 0..k.len() {
            let h = 1e-6 * k[i].abs().max(1.0);
            let mut kp = k.clone();
            kp[i] += h;
            let mut km = k.clone();
            km[i] -= h;
            let rp = project(times, y, &kp, slope).1;
            let rm = project(times, y, &km, slope).1;
            jac.set_column(i, &((rp - rm) / (2.0 * h)));
        }
        let g = jac.transpose() * &r;
        let h = jac.transpose() * &jac;
        let mut accepted = None;
        while mu < 1e16 {
            let mut damped = h.clone();
            for i in 0..k.len() {
                damped[(i, i)] += mu * h[(i, i)].max(1e-30);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial: Vec<f64> = k.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (_, rt) = project(times, y, &trial, slope);
            let ct = rt.norm_squared();
            if ct <= cost {
                let rel = step.norm() / (1.0 + k.iter().map(|x| x * x).sum::<f64>().sqrt());
                k = trial;
                r = rt;
                cost = ct;
                mu = (mu * 0.3).max(1e-12);
                accepted = Some(rel);
                break;
            }
            mu *= 10.0;
        }
        match accepted {
            Some(rel) if rel < STEP_TOLERANCE => return (k, r, it + 1, true),
            Some(_) => {}
            // no descent direction left: at a minimum up to rounding
            None => return (k, r, it + 1, true),
        }
    }
    (k, r, MAX_ITERATIONS, false)
}

/// Rough dominant rate from the log-slope of the last half of the trace.
fn log_slope_guess(times: &[f64], y: &[f64]) -> f64 {
    let n = y.len();
    let (a, b) = (n / 2, n - 1);
    let (ya, yb) = (y[a].abs().max(1e-300), y[b].abs().max(1e-300));
    let k = (yb / ya).ln() / (times[b] - times[a]).max(1e-300);
    if k.is_finite() && k > 0.1 {
        k
    } else {
        1.0
    }
}

/// Sort `(rate, amplitude)` terms by the size of their contribution at `t_end`.
/// Terms with rates within 1% of each other are ranked together by their
/// summed contribution, since such pairs often cancel.
fn order_by_contribution(pairs: &mut [(f64, f64)], t_end: f64) {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut groups: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for &(k, a) in pairs.iter() {
        match groups.last_mut() {
            Some((_, g)) if (g[0].0 - k).abs() <= 0.01 * g[0].0.abs().max(1.0) => g.push((k, a)),
            _ => groups.push((0.0, vec![(k, a)])),
        }
    }
    for (w, g) in &mut groups {
        *w = g.iter().map(|(k, a)| a * (k * t_end).exp()).sum::<f64>().abs();
    }
    groups.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (slot, term) in pairs.iter_mut().zip(groups.into_iter().flat_map(|(_, g)| g)) {
        *slot = term;
    }
}

/// Fit `model` to `(times, y)`. `initial` gives starting rates, e.g. the top
/// eigenvalues of the linearised flow; each is also tried at +-10% and +-20%.
pub fn fit_trace(times: &[f64], y: &[f64], model: FitModel, initial: Option<&[f64]>) -> Result<FitResult> {
    let needed = 2 * model.num_parameters();
    if times.len() < needed || y.len() != times.len() {
        return Err(Error::TooFewSamples { needed, got: times.len().min(y.len()) });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("deviation trace contains non-finite values".into()));
    }
    // work in units of the largest deviation
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let yv = DVector::from_iterator(y.len(), y.iter().map(|v| v / scale));
    let nk = model.num_rates();
    let slope = model.has_slope();

    let (rates, resid, iterations, converged) = if nk == 0 {
        (Vec::new(), project(times, &yv, &[], slope).1, 0, true)
    } else {
        let base: Vec<f64> = match initial {
            Some(k) if k.len() >= nk => k[..nk].to_vec(),
            _ => {
                let k1 = log_slope_guess(times, y);
                (0..nk).map(|i| k1 / 2f64.powi(i as i32)).collect()
            }
        };
        let starts: Vec<Vec<f64>> = [1.0, 0.8, 0.9, 1.1, 1.2]
            .iter()
            .map(|f| base.iter().map(|k| k * f).collect())
            .collect();
        let runs: Vec<_> = starts.par_iter().map(|s| solve_rates(times, &yv, s, slope)).collect();
        runs.into_iter()
            .min_by(|a, b| a.1.norm_squared().total_cmp(&b.1.norm_squared()))
            .expect("at least one start")
    };
    let (coef, _) = project(times, &yv, &rates, slope);
    let mut pairs: Vec<(f64, f64)> = rates.iter().zip(coef.iter()).map(|(k, a)| (*k, a * scale)).collect();
    order_by_contribution(&mut pairs, times[times.len() - 1]);
    Ok(FitResult {
        model,
        rates: pairs.iter().map(|p| p.0).collect(),
        amplitudes: pairs.iter().map(|p| p.1).collect(),
        slope: slope.then(|| coef[nk] * scale),
        offset: coef[coef.len() - 1] * scale,
        r_squared: r_squared(&yv, &resid),
        residual_norm: resid.norm() * scale,
        iterations,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when the data has zero variance.
    pub r_squared: Option<f64>,
}

/// Ordinary least squares line.
pub fn fit_linear(times: &[f64], y: &[f64]) -> Result<LinearFit> {
    if times.len() < 3 || y.len() != times.len() {
        return Err(Error::TooFewSamples { needed: 3, got: times.len().min(y.len()) });
    }
    let n = times.len() as f64;
    let mt = times.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = times.iter().zip(y).map(|(t, v)| (t - mt) * (v - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mt;
    let r_squared = if syy > 0.0 {
        let ss_res: f64 = times.iter().zip(y).map(|(t, v)| (v - intercept - slope * t).powi(2)).sum();
        Some(1.0 - ss_res / syy)
    } else {
        None
    };
    Ok(LinearFit { slope, intercept, r_squared })
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile; NaN for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

/// Median and IQR of one fitted quantity across edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        Summary { median: median(values), iqr: iqr(values) }
    }
}

/// Per-edge fits for the given edges of a trace.
pub fn fit_edges(trace: &FlowTrace, edges: &[usize], model: FitModel, initial: Option<&[f64]>) -> Result<Vec<(usize, FitResult)>> {
    edges
        .par_iter()
        .map(|&e| fit_trace(&trace.times, &trace.deviation(e), model, initial).map(|f| (e, f)))
        .collect()
}

/// Write per-edge fits as CSV: `edge,k1,k2,k3,a1,a2,a3,slope,offset,r_squared,converged`.
pub fn write_fits_csv<W: Write>(fits: &[(usize, FitResult)], mut out: W) -> Result<()> {
    writeln!(out, "edge,k1,k2,k3,a1,a2,a3,slope,offset,r_squared,converged")?;
    let cell = |v: Option<&f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for (e, f) in fits {
        writeln!(
            out,
            "{e},{},{},{},{},{},{},{},{:e},{},{}",
            cell(f.rates.first()),
            cell(f.rates.get(1)),
            cell(f.rates.get(2)),
            cell(f.amplitudes.first()),
            cell(f.amplitudes.get(1)),
            cell(f.amplitudes.get(2)),
            cell(f.slope.as_ref()),
            f.offset,
            f.r_squared,
            f.converged
        )?;
    }
    Ok(())
}

/// Median and IQR of every fitted rate and of R^2, in table form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTable {
    pub model: FitModel,
    pub rates: Vec<Summary>,
    pub slope: Option<Summary>,
    pub r_squared: Summary,
    pub edges: usize,
    pub converged: usize,
}

pub fn summarize_fits(model: FitModel, fits: &[(usize, FitResult)]) -> FitTable {
    let rates = (0..model.num_rates())
        .map(|i| Summary::of(&fits.iter().map(|(_, f)| f.rates[i]).collect::<Vec<_>>()))
        .collect();
    let slope = model
        .has_slope()
        .then(|| Summary::of(&fits.iter().filter_map(|(_, f)| f.slope).collect::<Vec<_>>()));
    FitTable {
        model,
        rates,
        slope,
        r_squared: Summary::of(&fits.iter().map(|(_, f)| f.r_squared).collect::<Vec<_>>()),
        edges: fits.len(),
        converged: fits.iter().filter(|(_, f)| f.converged).count(),
    }
}

impl FitTable {
    /// CSV in the layout `parameter,median,iqr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "parameter,median,iqr")?;
        for (i, s) in self.rates.iter().enumerate() {
            writeln!(out, "k{},{},{}", i + 1, s.median, s.iqr)?;
        }
        if let Some(s) = self.slope {
            writeln!(out, "slope,{:e},{:e}", s.median, s.iqr)?;
        }
        writeln!(out, "r_squared,{},{:e}", self.r_squared.median, self.r_squared.iqr)?;
        Ok(())
    }
}

/// Change statistics for one edge role, or for all edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeStats {
    pub median_change: f64,
    pub max_change: f64,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStatistics {
    /// `|l(T) - l(0)|` over all edges, where `l(0)` is the perturbed start.
    pub all: ChangeStats,
    pub by_role: Vec<(EdgeRole, ChangeStats)>,
    /// Largest `|l(0) - reference|`.
    pub initial_perturbation_max: f64,
}

fn change_stats(changes: &[f64]) -> ChangeStats {
    ChangeStats {
        median_change: if changes.is_empty() { 0.0 } else { median(changes) },
        max_change: changes.iter().fold(0.0, |m: f64, x| m.max(*x)),
        edges: changes.len(),
    }
}

pub fn trace_statistics(trace: &FlowTrace) -> TraceStatistics {
    let first = trace.initial();
    let last = trace.last();
    let changes: Vec<f64> = first.iter().zip(last).map(|(a, b)| (b - a).abs()).collect();
    let by_role = EdgeRole::ALL
        .iter()
        .map(|&role| {
            let c: Vec<f64> = changes
                .iter()
                .zip(&trace.roles)
                .filter(|(_, r)| **r == role)
                .map(|(c, _)| *c)
                .collect();
            (role, change_stats(&c))
        })
        .collect();
    let initial_perturbation_max = first
        .iter()
        .zip(&trace.reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    TraceStatistics { all: change_stats(&changes), by_role, initial_perturbation_max }
}
