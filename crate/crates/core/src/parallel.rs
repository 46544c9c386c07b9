//! One iteration of the sample-based solver expressed as map, shuffle,
//! reduce and normalize phases over partitions of the sample, executed on
//! scoped threads.
//!
//! Map tasks emit `(i, v_S)` for every member `i` of every set occurrence.
//! A per-worker combiner folds these into partial sums; the reducer for key
//! `i` adds the partials in worker-index order and scales by `p_i`, and the
//! normalizer divides by the index-ordered sum. Because every merge has a
//! fixed order, results do not depend on thread timing, and a single worker
//! reproduces the serial solver bit for bit.

use std::io::{Read, Write};
use std::ops::Range;

use crate::cost::{
    occurrence_value, summary_cost_at, summary_weight_vector_at, SampleSummary, WeightVector,
};
use crate::error::{Error, Result};
use crate::model::{mass_of, CostParams, NodeSet, Sample, Schedule};
use crate::solver::{iterate_with, normalize_update, FixedPointMap, SolveResult, SolverConfig};

/// A map output pair: node id and its share of one set's weight term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyedContribution {
    pub key: usize,
    pub value: f64,
}

/// Contiguous assignment of distinct-set entries to workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    ranges: Vec<Range<usize>>,
}

impl PartitionPlan {
    pub fn contiguous(items: usize, num_workers: usize) -> Result<PartitionPlan> {
        if num_workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        let base = items / num_workers;
        let extra = items % num_workers;
        let mut start = 0;
        let ranges = (0..num_workers)
            .map(|w| {
                let len = base + usize::from(w < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(PartitionPlan { ranges })
    }

    pub fn num_workers(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn worker_of(&self, item: usize) -> Option<usize> {
        self.ranges.iter().position(|r| r.contains(&item))
    }
}

/// Emits `(i, count · v_S)` for each entry `(S, count)` and each `i ∈ S`,
/// with `v_S = θ c (1 - p(S))^(c-1) / (ℓ (1 - θ (1 - p(S))^c)^2)`.
pub fn map_phase(
    partition: &[(NodeSet, u64)],
    p: &Schedule,
    params: &CostParams,
    ell: usize,
) -> Result<Vec<KeyedContribution>> {
    if ell == 0 {
        return Err(Error::EmptySample);
    }
    Ok(map_probs(partition, p.probs(), params, ell))
}

fn map_probs(
    partition: &[(NodeSet, u64)],
    probs: &[f64],
    params: &CostParams,
    ell: usize,
) -> Vec<KeyedContribution> {
    let mut out = Vec::new();
    for (s, k) in partition {
        let value = *k as f64 * occurrence_value(mass_of(probs, s), params, ell);
        out.extend(
            s.members()
                .iter()
                .map(|&key| KeyedContribution { key, value }),
        );
    }
    out
}

/// Per-worker combiner: folds contributions into per-key partial sums in
/// emission order.
pub fn combine(contribs: &[KeyedContribution], n: usize) -> Vec<f64> {
    let mut partial = vec![0.0; n];
    for c in contribs {
        partial[c.key] += c.value;
    }
    partial
}

/// Groups per-worker partials by key, keeping worker-index order within
/// each group. Keys that received nothing get an empty group.
pub fn shuffle(partials: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut groups = vec![Vec::with_capacity(partials.len()); n];
    for partial in partials {
        for (key, &v) in partial.iter().enumerate() {
            if v != 0.0 {
                groups[key].push(v);
            }
        }
    }
    groups
}

/// `g_i = p_i · Σ values_i`, summing each group in order.
pub fn reduce_phase(groups: &[Vec<f64>], p: &Schedule) -> Result<Vec<f64>> {
    if groups.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: groups.len(),
        });
    }
    Ok(reduce_probs(groups, p.probs()))
}

fn reduce_probs(groups: &[Vec<f64>], probs: &[f64]) -> Vec<f64> {
    groups
        .iter()
        .zip(probs)
        .map(|(vals, p)| p * vals.iter().fold(0.0, |acc, v| acc + v))
        .collect()
}

/// New schedule `p_i = g_i / Σ g_z`.
pub fn normalize_round(g: Vec<f64>) -> Result<Schedule> {
    normalize_update(g, 0)
}

/// Sample objective whose update step runs through the map/reduce phases.
pub struct MapReduceObjective<'a> {
    summary: &'a SampleSummary,
    n: usize,
    params: CostParams,
    plan: PartitionPlan,
}

impl<'a> MapReduceObjective<'a> {
    pub fn new(
        summary: &'a SampleSummary,
        n: usize,
        params: CostParams,
        workers: usize,
    ) -> Result<MapReduceObjective<'a>> {
        let plan = PartitionPlan::contiguous(summary.sets().len(), workers)?;
        Ok(MapReduceObjective {
            summary,
            n,
            params,
            plan,
        })
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    /// One map → combine → shuffle → reduce round; returns the unnormalized
    /// `p_i W_i`.
    pub fn round(&self, probs: &[f64]) -> Vec<f64> {
        let sets = self.summary.sets();
        let ell = self.summary.ell();
        let partials: Vec<Vec<f64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .plan
                .ranges()
                .iter()
                .map(|r| {
                    let chunk = &sets[r.clone()];
                    let params = &self.params;
                    let n = self.n;
                    scope.spawn(move || combine(&map_probs(chunk, probs, params, ell), n))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("map task panicked"))
                .collect()
        });
        reduce_probs(&shuffle(&partials, self.n), probs)
    }
}

impl FixedPointMap for MapReduceObjective<'_> {
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

    fn scaled_weights(&self, probs: &[f64]) -> Vec<f64> {
        self.round(probs)
    }
}

/// The sample-based solver with each iteration spread over `workers` map
/// tasks.
pub fn parallel_wiggins_apx(
    sample: &Sample,
    n: usize,
    params: &CostParams,
    cfg: &SolverConfig,
    workers: usize,
) -> Result<SolveResult> {
    let summary = SampleSummary::from_sample(sample)?;
    summary.check_bounds(n)?;
    parallel_from_summary(&summary, n, params, cfg, workers, Schedule::uniform(n))
}

pub fn parallel_from_summary(
    summary: &SampleSummary,
    n: usize,
    params: &CostParams,
    cfg: &SolverConfig,
    workers: usize,
    start: Schedule,
) -> Result<SolveResult> {
    let engine = MapReduceObjective::new(summary, n, *params, workers)?;
    iterate_with(&engine, start, cfg, |p| engine.round(p))
}

/// Writes contributions as little-endian `(u64 key, f64 value)` records.
pub fn write_spill<W: Write>(contribs: &[KeyedContribution], mut w: W) -> Result<()> {
    for c in contribs {
        w.write_all(&(c.key as u64).to_le_bytes())?;
        w.write_all(&c.value.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spill<R: Read>(mut r: R) -> Result<Vec<KeyedContribution>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::Io(format!(
            "spill length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|rec| KeyedContribution {
            key: u64::from_le_bytes(rec[..8].try_into().expect("8 bytes")) as usize,
            value: f64::from_le_bytes(rec[8..].try_into().expect("8 bytes")),
        })
        .collect())
}
