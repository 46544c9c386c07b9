//! Online frequency estimates for caught sets, a staleness-based drift
//! signal, and the probe / observe / re-solve loop for processes that
//! change over time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cost::{required_sample_length, SampleSizeParams};
use crate::error::{Error, Result};
use crate::model::{CostParams, NodeSet, Sample, Schedule};
use crate::simulate::{generate_items, ItemSource, LoadTrace, ProbeMode, ProbeSampler, Simulator};
use crate::solver::{wiggins_apx, SolverConfig};

pub const DEFAULT_STALENESS_K: f64 = 3.0;
pub const DEFAULT_MIN_COUNT: u64 = 10;
pub const DEFAULT_LRU_CAPACITY: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetRecord {
    pub count: u64,
    pub first_seen: u64,
    pub last_seen: u64,
}

/// Per-set occurrence counts and the birth step of the latest caught item,
/// over the steps observed since `origin`.
#[derive(Debug, Clone)]
pub struct PiEstimate {
    origin: u64,
    latest: Option<u64>,
    records: BTreeMap<NodeSet, SetRecord>,
    recency: BTreeSet<(u64, NodeSet)>,
    capacity: usize,
    evictions: u64,
}

impl PiEstimate {
    pub fn new(origin: u64) -> PiEstimate {
        PiEstimate::with_capacity(origin, DEFAULT_LRU_CAPACITY)
    }

    /// Keeps at most `capacity` sets, evicting the least recently seen.
    pub fn with_capacity(origin: u64, capacity: usize) -> PiEstimate {
        PiEstimate {
            origin,
            latest: None,
            records: BTreeMap::new(),
            recency: BTreeSet::new(),
            capacity: capacity.max(1),
            evictions: 0,
        }
    }

    /// Steps from `origin` through the latest update, inclusive.
    pub fn observed_steps(&self) -> u64 {
        self.latest.map_or(0, |t| t + 1 - self.origin)
    }

    pub fn get(&self, s: &NodeSet) -> Option<&SetRecord> {
        self.records.get(s)
    }

    pub fn pi_hat(&self, s: &NodeSet) -> Option<f64> {
        self.records.get(s).map(|r| self.rate(r))
    }

    fn rate(&self, r: &SetRecord) -> f64 {
        let obs = self.observed_steps();
        if obs == 0 {
            return 0.0;
        }
        (r.count as f64 / obs as f64).min(1.0)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn evictions(&self) -> u64 {
        self.evictions
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeSet, &SetRecord)> {
        self.records.iter()
    }

    fn record(&mut self, born: u64, s: &NodeSet) {
        match self.records.get_mut(s) {
            Some(r) => {
                r.count += 1;
                r.first_seen = r.first_seen.min(born);
                if born > r.last_seen {
                    self.recency.remove(&(r.last_seen, s.clone()));
                    r.last_seen = born;
                    self.recency.insert((born, s.clone()));
                }
            }
            None => {
                self.records.insert(
                    s.clone(),
                    SetRecord {
                        count: 1,
                        first_seen: born,
                        last_seen: born,
                    },
                );
                self.recency.insert((born, s.clone()));
                while self.records.len() > self.capacity {
                    let oldest = self.recency.pop_first().expect("nonempty");
                    self.records.remove(&oldest.1);
                    self.evictions += 1;
                    log::debug!("evicted set {{{}}} last seen at {}", oldest.1, oldest.0);
                }
            }
        }
    }
}

/// Folds caught items `(birth step, set)` into the store and advances the
/// observation window to `now`.
pub fn update_estimates(est: &mut PiEstimate, now: u64, caught: &[(u64, NodeSet)]) -> Result<()> {
    if now < est.origin {
        return Err(Error::TimeRegression {
            last: est.origin,
            got: now,
        });
    }
    if let Some(last) = est.latest {
        if now < last {
            return Err(Error::TimeRegression { last, got: now });
        }
    }
    if let Some((born, _)) = caught.iter().find(|(born, _)| *born > now) {
        return Err(Error::InvalidParameter(format!(
            "item born at {born} reported at step {now}"
        )));
    }
    est.latest = Some(now);
    for (born, s) in caught {
        est.record(*born, s);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    /// A set is stale once unseen for more than `staleness_k / π̃(S)` steps.
    pub staleness_k: f64,
    /// Steps of full observation collected on each re-sample.
    pub resample_length: u64,
    pub epsilon: f64,
    pub r: u32,
    /// Sets seen fewer times than this never raise a drift signal.
    pub min_count: u64,
    pub lru_capacity: usize,
    /// Run the staleness check every this many probing steps.
    pub check_every: u64,
    pub probe_mode: ProbeMode,
}

impl AdaptiveConfig {
    /// Re-sample length from the sample length bound for `(n, ε, θ, r)`.
    pub fn from_bound(n: usize, epsilon: f64, theta: f64, r: u32) -> Result<AdaptiveConfig> {
        let sp = SampleSizeParams::new(n, epsilon, theta, r)?;
        Ok(AdaptiveConfig {
            staleness_k: DEFAULT_STALENESS_K,
            resample_length: required_sample_length(&sp),
            epsilon,
            r,
            min_count: DEFAULT_MIN_COUNT,
            lru_capacity: DEFAULT_LRU_CAPACITY,
            check_every: 1,
            probe_mode: ProbeMode::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.staleness_k >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "staleness factor must be >= 1, got {}",
                self.staleness_k
            )));
        }
        if self.resample_length == 0 || self.check_every == 0 {
            return Err(Error::InvalidParameter(
                "resample_length and check_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sets whose absence since their last sighting exceeds `K / π̃(S)`, in
/// canonical order.
pub fn detect_change(est: &PiEstimate, now: u64, cfg: &AdaptiveConfig) -> Vec<NodeSet> {
    est.records
        .iter()
        .filter(|(_, r)| r.count >= cfg.min_count)
        .filter(|(_, r)| {
            let rate = est.rate(r);
            rate > 0.0 && now.saturating_sub(r.last_seen) as f64 > cfg.staleness_k / rate
        })
        .map(|(s, _)| s.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Perturb,
    Sample,
    Drift,
    Resolve,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Perturb => "perturb",
            EventKind::Sample => "sample",
            EventKind::Drift => "drift",
            EventKind::Resolve => "resolve",
        }
    }

    fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "perturb" => EventKind::Perturb,
            "sample" => EventKind::Sample,
            "drift" => EventKind::Drift,
            "resolve" => EventKind::Resolve,
            _ => return None,
        })
    }
}

/// A logged event; `step` is the first step governed by the new state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub step: u64,
    pub kind: EventKind,
    pub detail: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} event={} detail={}",
            self.step,
            self.kind.as_str(),
            self.detail
        )
    }
}

pub fn format_event_log(events: &[Event]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}

pub fn parse_event_log(text: &str) -> Result<Vec<Event>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let rest = l
                .strip_prefix("step=")
                .ok_or_else(|| bad("missing step="))?;
            let (step, rest) = rest
                .split_once(" event=")
                .ok_or_else(|| bad("missing event="))?;
            let (kind, detail) = rest
                .split_once(" detail=")
                .ok_or_else(|| bad("missing detail="))?;
            Ok(Event {
                step: step.parse().map_err(|_| bad("bad step"))?,
                kind: EventKind::parse(kind).ok_or_else(|| bad("unknown event kind"))?,
                detail: detail.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAverage {
    pub start: u64,
    pub end: u64,
    pub average_load: f64,
}

/// Splits `[0, len)` at every event step and averages the load over each
/// piece.
pub fn phase_averages(events: &[Event], trace: &LoadTrace) -> Vec<PhaseAverage> {
    let len = trace.records.len() as u64;
    let mut cuts: BTreeSet<u64> = events.iter().map(|e| e.step).filter(|&s| s < len).collect();
    cuts.insert(0);
    cuts.insert(len);
    let cuts: Vec<u64> = cuts.into_iter().collect();
    cuts.windows(2)
        .map(|w| PhaseAverage {
            start: w[0],
            end: w[1],
            average_load: trace.window_average(w[0] as usize, w[1] as usize),
        })
        .collect()
}

/// When to disturb the source and when to start observing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhasePlan {
    pub perturb_at: BTreeSet<u64>,
    pub resample_at: BTreeSet<u64>,
    pub detect_drift: bool,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub trace: LoadTrace,
    pub events: Vec<Event>,
    pub phases: Vec<PhaseAverage>,
    pub final_schedule: Schedule,
}

enum Mode {
    Probing,
    Sampling { sample: Sample },
}

/// Probes with `initial`, applying random relabelings of the source at the
/// planned steps. On a drift signal or at a planned observation start it
/// observes for `resample_length` steps (probing uniformly meanwhile) and
/// switches to the sample-optimal schedule.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_loop<R: Rng + ?Sized>(
    src: &mut ItemSource,
    initial: Schedule,
    params: &CostParams,
    cfg: &AdaptiveConfig,
    solver_cfg: &SolverConfig,
    plan: &PhasePlan,
    total_steps: u64,
    rng: &mut R,
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    solver_cfg.validate()?;
    let n = src.n();
    if initial.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: initial.len(),
        });
    }
    if let Some(&t) = plan
        .perturb_at
        .iter()
        .chain(&plan.resample_at)
        .find(|&&t| t >= total_steps)
    {
        return Err(Error::InvalidParameter(format!(
            "phase boundary {t} outside [0, {total_steps})"
        )));
    }

    let mut schedule = initial;
    let mut sampler = ProbeSampler::new(&schedule, params.c(), cfg.probe_mode);
    let observer = ProbeSampler::new(&Schedule::uniform(n), params.c(), cfg.probe_mode);
    let mut sim = Simulator::new(n, params.theta());
    let mut est = PiEstimate::with_capacity(0, cfg.lru_capacity);
    let mut mode = Mode::Probing;
    let mut events = Vec::new();
    let mut since_check = 0u64;

    for t in 0..total_steps {
        if plan.perturb_at.contains(&t) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            *src = src.permuted(&perm)?;
            events.push(Event {
                step: t,
                kind: EventKind::Perturb,
                detail: "relabeled nodes".into(),
            });
        }
        if matches!(mode, Mode::Probing) && plan.resample_at.contains(&t) {
            mode = Mode::Sampling {
                sample: Sample::default(),
            };
            events.push(Event {
                step: t,
                kind: EventKind::Sample,
                detail: format!("observing {} steps", cfg.resample_length),
            });
        }

        let born = generate_items(src, t, rng);
        let probe = match &mut mode {
            Mode::Sampling { sample } => {
                sample.push_step(born.clone());
                observer.draw(rng)
            }
            Mode::Probing => sampler.draw(rng),
        };
        let caught = sim.step(born, &probe);

        match &mut mode {
            Mode::Sampling { sample } => {
                if sample.length() as u64 >= cfg.resample_length {
                    let detail = match wiggins_apx(sample, n, params, solver_cfg) {
                        Ok(res) => {
                            schedule = res.schedule;
                            sampler = ProbeSampler::new(&schedule, params.c(), cfg.probe_mode);
                            format!(
                                "iterations={} converged={} occurrences={}",
                                res.iterations,
                                res.converged,
                                sample.occurrences()
                            )
                        }
                        Err(e) => {
                            log::warn!("re-solve at step {t} failed: {e}");
                            format!("failed: {e}; keeping previous schedule")
                        }
                    };
                    events.push(Event {
                        step: t + 1,
                        kind: EventKind::Resolve,
                        detail,
                    });
                    mode = Mode::Probing;
                    est = PiEstimate::with_capacity(t + 1, cfg.lru_capacity);
                    since_check = 0;
                }
            }
            Mode::Probing => {
                let seen: Vec<(u64, NodeSet)> =
                    caught.into_iter().map(|it| (it.born, it.set)).collect();
                update_estimates(&mut est, t, &seen)?;
                since_check += 1;
                if plan.detect_drift && since_check >= cfg.check_every {
                    since_check = 0;
                    let stale = detect_change(&est, t, cfg);
                    if !stale.is_empty() {
                        events.push(Event {
                            step: t + 1,
                            kind: EventKind::Drift,
                            detail: format!("stale_sets={} first={{{}}}", stale.len(), stale[0]),
                        });
                        mode = Mode::Sampling {
                            sample: Sample::default(),
                        };
                    }
                }
            }
        }
    }

    let trace = sim.into_trace();
    let phases = phase_averages(&events, &trace);
    Ok(AdaptiveRun {
        trace,
        events,
        phases,
        final_schedule: schedule,
    })
}
