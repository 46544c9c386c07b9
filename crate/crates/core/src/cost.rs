//! Exact and sample-based θ-cost, the weight vectors driving the solver,
//! and the sample length needed for a cost estimate to be trusted.
//!
//! For a set `S` with schedule mass `p(S)` and miss probability
//! `m = (1 - p(S))^c`, an item generated on `S` contributes expected
//! discounted load `1 / (1 - θ m)`. The weight of node `i` is the negative
//! partial derivative of the cost in `p_i`:
//! `Σ_{S ∋ i} π(S) θ c (1 - p(S))^(c-1) / (1 - θ m)^2`.

use std::collections::BTreeMap;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::model::{mass_of, CostParams, GeneratingProcess, NodeSet, Sample, Schedule};
use crate::numeric::pow_u;

/// Per-node weights `W_i`; zero exactly for nodes in no weighted set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Expected discounted load of one item on a set with mass `mass`.
#[inline]
pub(crate) fn cost_term(mass: f64, params: &CostParams) -> f64 {
    1.0 / (1.0 - params.theta() * pow_u(1.0 - mass, params.c()))
}

/// Contribution of one item on a set with mass `mass` to each member's weight.
#[inline]
pub(crate) fn weight_term(mass: f64, params: &CostParams) -> f64 {
    let miss = 1.0 - mass;
    let denom = 1.0 - params.theta() * pow_u(miss, params.c());
    params.theta() * params.c() as f64 * pow_u(miss, params.c() - 1) / (denom * denom)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

/// Long-run average expected load of schedule `p` under `proc`:
/// `Σ_S π(S) / (1 - θ (1 - p(S))^c)`.
pub fn exact_cost(proc: &GeneratingProcess, p: &Schedule, params: &CostParams) -> Result<f64> {
    exact_cost_at(proc, p.probs(), params)
}

/// [`exact_cost`] evaluated at an arbitrary nonnegative vector, which need
/// not lie on the simplex (used for finite-difference checks).
pub fn exact_cost_at(proc: &GeneratingProcess, probs: &[f64], params: &CostParams) -> Result<f64> {
    check_dim(proc.n(), probs.len())?;
    Ok(proc
        .sets()
        .iter()
        .map(|(s, w)| w * cost_term(mass_of(probs, s), params))
        .sum())
}

pub fn weight_vector(
    proc: &GeneratingProcess,
    p: &Schedule,
    params: &CostParams,
) -> Result<WeightVector> {
    weight_vector_at(proc, p.probs(), params)
}

pub fn weight_vector_at(
    proc: &GeneratingProcess,
    probs: &[f64],
    params: &CostParams,
) -> Result<WeightVector> {
    check_dim(proc.n(), probs.len())?;
    let mut w = vec![0.0; proc.n()];
    for (s, pi) in proc.sets() {
        if *pi == 0.0 {
            continue;
        }
        let v = pi * weight_term(mass_of(probs, s), params);
        for &i in s.members() {
            w[i] += v;
        }
    }
    Ok(WeightVector(w))
}

/// A sample collapsed to distinct sets with occurrence counts, in canonical
/// set order, together with the number of observed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    ell: usize,
    sets: Vec<(NodeSet, u64)>,
}

impl SampleSummary {
    pub fn from_sample(sample: &Sample) -> Result<SampleSummary> {
        if sample.length() == 0 {
            return Err(Error::EmptySample);
        }
        let mut counts: BTreeMap<&NodeSet, u64> = BTreeMap::new();
        for s in sample.steps().iter().flatten() {
            *counts.entry(s).or_default() += 1;
        }
        Ok(SampleSummary {
            ell: sample.length(),
            sets: counts.into_iter().map(|(s, k)| (s.clone(), k)).collect(),
        })
    }

    /// Builds a summary from explicit counts; duplicates are merged.
    pub fn from_counts(ell: usize, counts: Vec<(NodeSet, u64)>) -> Result<SampleSummary> {
        if ell == 0 {
            return Err(Error::EmptySample);
        }
        let mut merged: BTreeMap<NodeSet, u64> = BTreeMap::new();
        for (s, k) in counts {
            if k > 0 {
                *merged.entry(s).or_default() += k;
            }
        }
        Ok(SampleSummary {
            ell,
            sets: merged.into_iter().collect(),
        })
    }

    /// Number of observed steps, the normalizer of every sample quantity.
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn sets(&self) -> &[(NodeSet, u64)] {
        &self.sets
    }

    pub fn occurrences(&self) -> u64 {
        self.sets.iter().map(|(_, k)| k).sum()
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        self.sets.iter().try_for_each(|(s, _)| s.check_bounds(n))
    }
}

/// Empirical θ-cost of `p` over a sample, normalized by the number of
/// observed steps.
pub fn sample_cost(sample: &Sample, p: &Schedule, params: &CostParams) -> Result<f64> {
    let summary = SampleSummary::from_sample(sample)?;
    summary.check_bounds(p.len())?;
    Ok(summary_cost_at(&summary, p.probs(), params))
}

/// Sample cost at an arbitrary vector; ids must already be in range.
pub fn summary_cost_at(summary: &SampleSummary, probs: &[f64], params: &CostParams) -> f64 {
    let total: f64 = summary
        .sets
        .iter()
        .map(|(s, k)| *k as f64 * cost_term(mass_of(probs, s), params))
        .sum();
    total / summary.ell as f64
}

pub fn sample_weight_vector(
    sample: &Sample,
    p: &Schedule,
    params: &CostParams,
) -> Result<WeightVector> {
    let summary = SampleSummary::from_sample(sample)?;
    summary.check_bounds(p.len())?;
    Ok(summary_weight_vector_at(&summary, p.probs(), params))
}

/// Per-occurrence contribution of a set to each member's weight, with the
/// `1/ℓ` normalizer folded in.
#[inline]
pub(crate) fn occurrence_value(mass: f64, params: &CostParams, ell: usize) -> f64 {
    weight_term(mass, params) / ell as f64
}

pub fn summary_weight_vector_at(
    summary: &SampleSummary,
    probs: &[f64],
    params: &CostParams,
) -> WeightVector {
    let mut w = vec![0.0; probs.len()];
    for (s, k) in &summary.sets {
        let v = *k as f64 * occurrence_value(mass_of(probs, s), params, summary.ell);
        for &i in s.members() {
            w[i] += v;
        }
    }
    WeightVector(w)
}

/// Inputs to the sample length bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeParams {
    n: usize,
    epsilon: f64,
    theta: f64,
    r: u32,
}

impl SampleSizeParams {
    pub fn new(n: usize, epsilon: f64, theta: f64, r: u32) -> Result<SampleSizeParams> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0,1], got {epsilon}"
            )));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0,1), got {theta}"
            )));
        }
        if r == 0 {
            return Err(Error::InvalidParameter("r must be >= 1".into()));
        }
        Ok(SampleSizeParams {
            n,
            epsilon,
            theta,
            r,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn r(&self) -> u32 {
        self.r
    }
}

/// `3 (r ln n + ln 4) / (ε² (1 - θ))`: enough steps that, with probability
/// at least `1 - 1/n^r`, the sample cost of both the sample-optimal and the
/// true optimal schedule is within a factor `1 ± ε` of its exact cost.
pub fn sample_length_bound(sp: &SampleSizeParams) -> f64 {
    length_bound(sp, 4.0)
}

/// The same bound for a single fixed schedule (`ln 2` in place of `ln 4`).
pub fn single_schedule_length_bound(sp: &SampleSizeParams) -> f64 {
    length_bound(sp, 2.0)
}

fn length_bound(sp: &SampleSizeParams, tails: f64) -> f64 {
    3.0 * (sp.r as f64 * (sp.n as f64).ln() + tails.ln())
        / (sp.epsilon * sp.epsilon * (1.0 - sp.theta))
}

pub fn required_sample_length(sp: &SampleSizeParams) -> u64 {
    sample_length_bound(sp).ceil() as u64
}
