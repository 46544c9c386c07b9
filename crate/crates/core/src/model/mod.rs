//! Domain types shared by the cost model, the solvers and the simulator.

mod graph;
mod text;

pub use graph::{load_graph, load_graph_with, EdgeListOptions, Graph};
pub use text::{format_f64, parse_process, parse_sample, parse_schedule};

use std::fmt;

use crate::error::{Error, Result};

pub const SCHEDULE_INPUT_TOL: f64 = 1e-9;
pub const SCHEDULE_INTERNAL_TOL: f64 = 1e-12;
pub const NEGATIVE_DUST: f64 = 1e-12;

/// A nonempty, strictly ascending set of node ids.
///
/// The derived ordering (lexicographic on members) is the canonical set
/// order used whenever per-set terms are accumulated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(mut members: Vec<usize>) -> Result<NodeSet> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("node set must be nonempty".into()));
        }
        members.sort_unstable();
        members.dedup();
        Ok(NodeSet(members))
    }

    pub fn singleton(v: usize) -> NodeSet {
        NodeSet(vec![v])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn max_id(&self) -> usize {
        // nonempty by construction
        self.0[self.0.len() - 1]
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        let m = self.max_id();
        if m >= n {
            Err(Error::NodeOutOfRange { id: m, n })
        } else {
            Ok(())
        }
    }

    /// Relabels each member `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> NodeSet {
        let mut members: Vec<usize> = self.0.iter().map(|&v| perm[v]).collect();
        members.sort_unstable();
        NodeSet(members)
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// An explicit generating process: each step, every set is emitted
/// independently with its weight as probability. Weights need not sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingProcess {
    n: usize,
    sets: Vec<(NodeSet, f64)>,
}

impl GeneratingProcess {
    /// Builds a process; sets are stored in canonical order. Duplicate
    /// sets are rejected rather than merged.
    pub fn new(n: usize, mut sets: Vec<(NodeSet, f64)>) -> Result<GeneratingProcess> {
        for (s, w) in &sets {
            if !(0.0..=1.0).contains(w) {
                return Err(Error::InvalidParameter(format!(
                    "weight {w} of set {{{s}}} outside [0,1]"
                )));
            }
            s.check_bounds(n)?;
        }
        sets.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = sets.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateSet(w[0].0.to_string()));
        }
        Ok(GeneratingProcess { n, sets })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[(NodeSet, f64)] {
        &self.sets
    }

    /// Sum of all set weights, the expected number of items per step.
    pub fn total_weight(&self) -> f64 {
        self.sets.iter().map(|(_, w)| w).sum()
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<GeneratingProcess> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        let sets = self
            .sets
            .iter()
            .map(|(s, w)| (s.permuted(perm), *w))
            .collect();
        GeneratingProcess::new(self.n, sets)
    }

    /// Serializes in the process file format, one `<weight> <ids...>` line per set.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, w) in &self.sets {
            out.push_str(&format_f64(*w));
            out.push(' ');
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

/// A c-schedule: a probability distribution over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    probs: Vec<f64>,
}

/// Checks a raw probability vector and turns it into a [`Schedule`].
///
/// Entries down to `-1e-12` are treated as rounding dust and clamped to zero;
/// the vector is then renormalized. The sum must be within `1e-9` of one.
pub fn validate_schedule(raw: Vec<f64>) -> Result<Schedule> {
    if raw.is_empty() {
        return Err(Error::InvalidSchedule {
            index: 0,
            msg: "schedule must have at least one node".into(),
        });
    }
    for (i, &x) in raw.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::InvalidSchedule {
                index: i,
                msg: format!("non-finite entry {x}"),
            });
        }
        if x < -NEGATIVE_DUST {
            return Err(Error::InvalidSchedule {
                index: i,
                msg: format!("negative entry {x}"),
            });
        }
    }
    let mut probs: Vec<f64> = raw.into_iter().map(|x| x.max(0.0)).collect();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SCHEDULE_INPUT_TOL {
        return Err(Error::ScheduleSum { sum });
    }
    for x in &mut probs {
        *x /= sum;
    }
    Ok(Schedule { probs })
}

impl Schedule {
    pub fn uniform(n: usize) -> Schedule {
        assert!(n > 0, "uniform schedule over zero nodes");
        Schedule {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Scales a nonnegative vector with positive sum onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Schedule> {
        if weights.is_empty() {
            return Err(Error::InvalidSchedule {
                index: 0,
                msg: "schedule must have at least one node".into(),
            });
        }
        if let Some(i) = weights.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidSchedule {
                index: i,
                msg: format!("bad weight {}", weights[i]),
            });
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ScheduleSum { sum });
        }
        Ok(Schedule {
            probs: weights.into_iter().map(|x| x / sum).collect(),
        })
    }

    /// Wraps an already-normalized vector produced by an update step.
    pub(crate) fn from_update(probs: Vec<f64>) -> Schedule {
        debug_assert!(probs.iter().all(|x| *x >= 0.0));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SCHEDULE_INPUT_TOL);
        Schedule { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability mass the schedule puts on `s`, clamped to [0,1].
    pub fn set_mass(&self, s: &NodeSet) -> Result<f64> {
        s.check_bounds(self.probs.len())?;
        Ok(mass_of(&self.probs, s).clamp(0.0, 1.0))
    }

    pub fn linf_distance(&self, other: &Schedule) -> f64 {
        linf(&self.probs, &other.probs)
    }

    pub fn total_variation(&self, other: &Schedule) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Serializes in the schedule file format, one `<id> <prob>` line per node.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{i} {}\n", format_f64(*p)));
        }
        out
    }
}

/// Unclamped mass, so that cost functions stay smooth off the simplex.
pub(crate) fn mass_of(probs: &[f64], s: &NodeSet) -> f64 {
    s.members().iter().map(|&v| probs[v]).sum()
}

pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sets observed over consecutive time steps. Each step holds the sets
/// generated at that step; identical sets within a step are kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    steps: Vec<Vec<NodeSet>>,
}

impl Sample {
    pub fn new(steps: Vec<Vec<NodeSet>>) -> Sample {
        Sample { steps }
    }

    pub fn steps(&self) -> &[Vec<NodeSet>] {
        &self.steps
    }

    /// Number of observed steps.
    pub fn length(&self) -> usize {
        self.steps.len()
    }

    pub fn occurrences(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn push_step(&mut self, sets: Vec<NodeSet>) {
        self.steps.push(sets);
    }

    pub fn max_node(&self) -> Option<usize> {
        self.steps.iter().flatten().map(NodeSet::max_id).max()
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        self.steps
            .iter()
            .flatten()
            .try_for_each(|s| s.check_bounds(n))
    }

    /// Serializes in the sample file format: `<t>: <ids> | <ids> ...`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, sets) in self.steps.iter().enumerate() {
            out.push_str(&format!("{t}:"));
            for (k, s) in sets.iter().enumerate() {
                out.push_str(if k == 0 { " " } else { " | " });
                out.push_str(&s.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Decay factor of novelty and the number of probes per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    theta: f64,
    c: u32,
}

impl CostParams {
    pub fn new(theta: f64, c: u32) -> Result<CostParams> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0,1), got {theta}"
            )));
        }
        if c == 0 {
            return Err(Error::InvalidParameter(
                "probe budget c must be >= 1".into(),
            ));
        }
        Ok(CostParams { theta, c })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn c(&self) -> u32 {
        self.c
    }
}
