//! Fixed-point iteration for the optimal probing schedule.
//!
//! Each iteration replaces `p_i` by `p_i W_i / Σ_z p_z W_z`. A schedule is a
//! fixed point exactly when `W_i` is constant over its support, which for
//! the convex θ-cost is the optimality condition. The same loop runs on an
//! explicit process or on a sample, where only the sets that were observed
//! contribute.

use rand::Rng;

use crate::cost::{
    exact_cost_at, summary_cost_at, summary_weight_vector_at, weight_vector_at, SampleSummary,
    WeightVector,
};
use crate::error::{Error, Result};
use crate::model::{linf, CostParams, GeneratingProcess, Graph, Sample, Schedule};
use crate::numeric::compensated_sum;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_CONV_TOL: f64 = 1e-9;
/// Smallest normalizer accepted before an update is considered garbage.
pub const NORMALIZER_FLOOR: f64 = 1e-300;
/// Lower bound on each entry of a random starting point before normalization.
pub const INTERIOR_FLOOR: f64 = 1e-9;
const DESCENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once successive iterates differ by at most this much in L∞.
    pub conv_tol: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: DEFAULT_MAX_ITERS,
            conv_tol: DEFAULT_CONV_TOL,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "conv_tol must be positive, got {}",
                self.conv_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub schedule: Schedule,
    pub converged: bool,
    pub iterations: usize,
    /// Cost of the iterate after each completed iteration, when recorded.
    pub cost_trace: Vec<f64>,
    /// Weights evaluated at the returned schedule.
    pub final_weights: WeightVector,
}

/// The objective as seen by the fixed-point loop.
pub trait FixedPointMap {
    fn n(&self) -> usize;
    fn cost(&self, probs: &[f64]) -> f64;
    fn weights(&self, probs: &[f64]) -> WeightVector;
    /// True when no set carries positive weight.
    fn is_degenerate(&self) -> bool;

    /// Unnormalized next iterate `p_i W_i`.
    fn scaled_weights(&self, probs: &[f64]) -> Vec<f64> {
        let w = self.weights(probs);
        probs.iter().zip(w.iter()).map(|(p, w)| p * w).collect()
    }
}

/// Exact θ-cost of an explicit process.
pub struct ExactObjective<'a> {
    pub process: &'a GeneratingProcess,
    pub params: CostParams,
}

impl FixedPointMap for ExactObjective<'_> {
    fn n(&self) -> usize {
        self.process.n()
    }

    fn cost(&self, probs: &[f64]) -> f64 {
        exact_cost_at(self.process, probs, &self.params).expect("dimension checked on entry")
    }

    fn weights(&self, probs: &[f64]) -> WeightVector {
        weight_vector_at(self.process, probs, &self.params).expect("dimension checked on entry")
    }

    fn is_degenerate(&self) -> bool {
        self.process.sets().iter().all(|(_, w)| *w == 0.0)
    }
}

/// Sample θ-cost over a pre-aggregated sample.
pub struct SampleObjective<'a> {
    pub summary: &'a SampleSummary,
    pub n: usize,
    pub params: CostParams,
}

impl FixedPointMap for SampleObjective<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn cost(&self, probs: &[f64]) -> f64 {
        summary_cost_at(self.summary, probs, &self.params)
    }

    fn weights(&self, probs: &[f64]) -> WeightVector {
        summary_weight_vector_at(self.summary, probs, &self.params)
    }

    fn is_degenerate(&self) -> bool {
        self.summary.sets().is_empty()
    }
}

/// Divides `g` by its compensated sum (taken in index order).
pub fn normalize_update(g: Vec<f64>, iteration: usize) -> Result<Schedule> {
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            iteration,
            msg: format!("non-finite value {} at node {i}", g[i]),
        });
    }
    // A set mass that rounds past 1 gives (1 - p(S))^(c-1) a tiny negative
    // value when c - 1 is odd; such entries are zero in exact arithmetic.
    let g: Vec<f64> = g.into_iter().map(|x| x.max(0.0)).collect();
    let total = compensated_sum(g.iter().copied());
    if total == 0.0 {
        return Err(Error::DegenerateProcess);
    }
    if !(total >= NORMALIZER_FLOOR) {
        return Err(Error::Numerical {
            iteration,
            msg: format!("normalizer {total:e} below floor"),
        });
    }
    Ok(Schedule::from_update(
        g.into_iter().map(|x| x / total).collect(),
    ))
}

/// Runs the multiplicative update from `start`, using `step` to produce each
/// unnormalized iterate.
pub fn iterate_with<M, F>(
    map: &M,
    start: Schedule,
    cfg: &SolverConfig,
    mut step: F,
) -> Result<SolveResult>
where
    M: FixedPointMap + ?Sized,
    F: FnMut(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    if start.len() != map.n() {
        return Err(Error::DimensionMismatch {
            expected: map.n(),
            got: start.len(),
        });
    }
    if map.is_degenerate() {
        return Err(Error::DegenerateProcess);
    }
    let mut p = start;
    let mut converged = false;
    let mut iterations = 0;
    let mut cost_trace = Vec::new();

    for j in 1..=cfg.max_iters {
        let next = match normalize_update(step(p.probs()), j) {
            // With c > 1, every weighted set at mass 1 zeroes all weights:
            // the cost sits at its lower bound Σ π(S) and `p` is optimal.
            Err(Error::DegenerateProcess) if map.weights(p.probs()).iter().all(|w| *w == 0.0) => {
                p.clone()
            }
            // Undamped updates with c > 1 can overshoot onto a vertex that
            // misses every node that still carries weight.
            Err(Error::DegenerateProcess) => {
                return Err(Error::Numerical {
                    iteration: j,
                    msg: "iterate collapsed onto nodes with zero weight".into(),
                })
            }
            other => other?,
        };
        let delta = linf(next.probs(), p.probs());
        p = next;
        iterations = j;
        if cfg.record_trace {
            let c = map.cost(p.probs());
            if !c.is_finite() {
                return Err(Error::Numerical {
                    iteration: j,
                    msg: format!("non-finite cost {c}"),
                });
            }
            if let Some(&prev) = cost_trace.last() {
                if c > prev + DESCENT_SLACK {
                    log::warn!("cost rose at iteration {j}: {prev} -> {c}");
                }
            }
            cost_trace.push(c);
        }
        if delta <= cfg.conv_tol {
            converged = true;
            break;
        }
    }

    let final_weights = map.weights(p.probs());
    Ok(SolveResult {
        schedule: p,
        converged,
        iterations,
        cost_trace,
        final_weights,
    })
}

pub fn iterate<M: FixedPointMap + ?Sized>(
    map: &M,
    start: Schedule,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    iterate_with(map, start, cfg, |p| map.scaled_weights(p))
}

/// Optimal schedule for an explicit process, starting from uniform.
pub fn wiggins(
    proc: &GeneratingProcess,
    params: &CostParams,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if proc.n() == 0 {
        return Err(Error::DegenerateProcess);
    }
    wiggins_from(proc, params, cfg, Schedule::uniform(proc.n()))
}

pub fn wiggins_from(
    proc: &GeneratingProcess,
    params: &CostParams,
    cfg: &SolverConfig,
    start: Schedule,
) -> Result<SolveResult> {
    let map = ExactObjective {
        process: proc,
        params: *params,
    };
    iterate(&map, start, cfg)
}

/// Sample-optimal schedule over `n` nodes, starting from uniform.
pub fn wiggins_apx(
    sample: &Sample,
    n: usize,
    params: &CostParams,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    if n == 0 {
        return Err(Error::DegenerateProcess);
    }
    wiggins_apx_from(sample, n, params, cfg, Schedule::uniform(n))
}

pub fn wiggins_apx_from(
    sample: &Sample,
    n: usize,
    params: &CostParams,
    cfg: &SolverConfig,
    start: Schedule,
) -> Result<SolveResult> {
    let summary = SampleSummary::from_sample(sample)?;
    summary.check_bounds(n)?;
    let map = SampleObjective {
        summary: &summary,
        n,
        params: *params,
    };
    iterate(&map, start, cfg)
}

/// A random strictly interior starting schedule.
pub fn random_interior_start<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Schedule {
    let raw: Vec<f64> = (0..n)
        .map(|_| INTERIOR_FLOOR + (1.0 - INTERIOR_FLOOR) * rng.random::<f64>())
        .collect();
    Schedule::normalized(raw).expect("positive entries")
}

/// Relative spread `(max W - min W) / mean W` over nodes with `p_i > support_tol`.
pub fn stationarity_spread(p: &Schedule, w: &WeightVector, support_tol: f64) -> f64 {
    let supported: Vec<f64> = p
        .probs()
        .iter()
        .zip(w.iter())
        .filter(|(p, _)| **p > support_tol)
        .map(|(_, w)| *w)
        .collect();
    if supported.is_empty() {
        return 0.0;
    }
    let max = supported.iter().copied().fold(f64::MIN, f64::max);
    let min = supported.iter().copied().fold(f64::MAX, f64::min);
    let mean = supported.iter().sum::<f64>() / supported.len() as f64;
    (max - min) / mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Uniform,
    InDegree,
    OutDegree,
    TotalDegree,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Uniform,
        BaselineKind::OutDegree,
        BaselineKind::InDegree,
        BaselineKind::TotalDegree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Uniform => "uniform",
            BaselineKind::InDegree => "indeg",
            BaselineKind::OutDegree => "outdeg",
            BaselineKind::TotalDegree => "totdeg",
        }
    }
}

/// Uniform, or proportional to in-, out- or total degree.
pub fn baseline_schedule(kind: BaselineKind, graph: &Graph) -> Result<Schedule> {
    let degrees = match kind {
        BaselineKind::Uniform => {
            if graph.n() == 0 {
                return Err(Error::InvalidParameter("graph has no nodes".into()));
            }
            return Ok(Schedule::uniform(graph.n()));
        }
        BaselineKind::InDegree => graph.in_degree(),
        BaselineKind::OutDegree => graph.out_degree(),
        BaselineKind::TotalDegree => graph.total_degree(),
    };
    let total: usize = degrees.iter().sum();
    if total == 0 {
        return Err(Error::InvalidParameter(format!(
            "{} schedule needs at least one edge",
            kind.name()
        )));
    }
    Ok(Schedule::from_update(
        degrees.iter().map(|&d| d as f64 / total as f64).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub mean_cost: f64,
    pub costs: Vec<f64>,
}

/// Mean sample cost of each schedule over the given samples, in input order.
pub fn compare_schedules(
    schedules: &[(String, Schedule)],
    samples: &[Sample],
    params: &CostParams,
) -> Result<Vec<ComparisonRow>> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let summaries = samples
        .iter()
        .map(SampleSummary::from_sample)
        .collect::<Result<Vec<_>>>()?;
    let n = schedules.first().map(|(_, s)| s.len()).unwrap_or(0);
    for (_, s) in schedules {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    for summary in &summaries {
        summary.check_bounds(n)?;
    }
    Ok(schedules
        .iter()
        .map(|(name, s)| {
            let costs: Vec<f64> = summaries
                .iter()
                .map(|sm| summary_cost_at(sm, s.probs(), params))
                .collect();
            let mean_cost = costs.iter().sum::<f64>() / costs.len() as f64;
            ComparisonRow {
                name: name.clone(),
                mean_cost,
                costs,
            }
        })
        .collect())
}
