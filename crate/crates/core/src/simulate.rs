//! Discrete-time simulation of item generation, probing and load.
//!
//! Each step runs in a fixed order: new items are generated and join the
//! live pool, the θ-load of the pool is recorded, then the probe set is drawn
//! and every live item whose node set it touches is caught. An item thus
//! contributes novelty 1 at its birth step even when caught immediately,
//! which is what makes the long-run average load equal the analytic cost.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{format_f64, GeneratingProcess, Graph, NodeSet, Sample, Schedule};
use crate::numeric::pow_u;

/// Seedable counter-based generator used by every stochastic operation.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Items whose novelty drops below this are dropped from the live pool.
pub const NOVELTY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMode {
    /// `c` independent draws from the schedule, duplicates collapsed.
    #[default]
    WithReplacement,
    /// `c` sequential draws, each excluding the nodes already drawn.
    WithoutReplacement,
}

/// Draws probe sets from a fixed schedule.
#[derive(Debug, Clone)]
pub struct ProbeSampler {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    last_positive: usize,
    c: u32,
    mode: ProbeMode,
}

impl ProbeSampler {
    pub fn new(p: &Schedule, c: u32, mode: ProbeMode) -> ProbeSampler {
        let probs = p.probs().to_vec();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|x| *x > 0.0).unwrap_or(0);
        ProbeSampler {
            probs,
            cumulative,
            last_positive,
            c: c.max(1),
            mode,
        }
    }

    fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&x| x <= u)
            .min(self.last_positive)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeSet {
        match self.mode {
            ProbeMode::WithReplacement => {
                let picks = (0..self.c).map(|_| self.draw_one(rng)).collect();
                NodeSet::new(picks).expect("c >= 1")
            }
            ProbeMode::WithoutReplacement => {
                let mut weights = self.probs.clone();
                let mut picks = Vec::with_capacity(self.c as usize);
                for _ in 0..self.c {
                    let total: f64 = weights.iter().sum();
                    if total <= 0.0 {
                        break;
                    }
                    let u = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, w) in weights.iter().enumerate() {
                        if *w <= 0.0 {
                            continue;
                        }
                        acc += w;
                        pick = Some(i);
                        if u < acc {
                            break;
                        }
                    }
                    let i = pick.expect("positive total");
                    weights[i] = 0.0;
                    picks.push(i);
                }
                NodeSet::new(picks).expect("at least one positive entry")
            }
        }
    }
}

pub fn draw_probe_set<R: Rng + ?Sized>(
    p: &Schedule,
    c: u32,
    mode: ProbeMode,
    rng: &mut R,
) -> NodeSet {
    ProbeSampler::new(p, c, mode).draw(rng)
}

/// Head probability for nodes whose out-degree lies in
/// `[min_outdeg, max_outdeg)`; `max_outdeg = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasBand {
    pub min_outdeg: usize,
    pub max_outdeg: Option<usize>,
    pub head_prob: f64,
}

impl BiasBand {
    pub fn contains(&self, d: usize) -> bool {
        d >= self.min_outdeg && self.max_outdeg.is_none_or(|m| d < m)
    }
}

/// Out-degree classes: `< 100` never start items, `[100,500)` with 0.01,
/// `[500,1000)` with 0.05, `>= 1000` with 0.1.
pub fn default_bands() -> Vec<BiasBand> {
    vec![
        BiasBand {
            min_outdeg: 0,
            max_outdeg: Some(100),
            head_prob: 0.0,
        },
        BiasBand {
            min_outdeg: 100,
            max_outdeg: Some(500),
            head_prob: 0.01,
        },
        BiasBand {
            min_outdeg: 500,
            max_outdeg: Some(1000),
            head_prob: 0.05,
        },
        BiasBand {
            min_outdeg: 1000,
            max_outdeg: None,
            head_prob: 0.1,
        },
    ]
}

/// Sorts bands and checks they are disjoint and cover `[0, ∞)`.
pub fn validate_bands(mut bands: Vec<BiasBand>) -> Result<Vec<BiasBand>> {
    bands.sort_by_key(|b| b.min_outdeg);
    let bad = |msg: String| Err(Error::InvalidParameter(msg));
    if bands.is_empty() {
        return bad("no bias bands".into());
    }
    if bands[0].min_outdeg != 0 {
        return bad(format!("bands start at {}, not 0", bands[0].min_outdeg));
    }
    for (k, b) in bands.iter().enumerate() {
        if !(0.0..=1.0).contains(&b.head_prob) {
            return bad(format!("head probability {} outside [0,1]", b.head_prob));
        }
        match (b.max_outdeg, bands.get(k + 1)) {
            (Some(m), _) if m <= b.min_outdeg => {
                return bad(format!("empty band [{}, {m})", b.min_outdeg));
            }
            (Some(m), Some(next)) if m != next.min_outdeg => {
                return bad(format!("bands leave a gap or overlap at {m}"));
            }
            (Some(m), None) => return bad(format!("bands stop at {m}")),
            (None, Some(_)) => return bad("unbounded band is not last".into()),
            _ => {}
        }
    }
    Ok(bands)
}

/// Independent-Cascade item generator over a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSource {
    graph: Graph,
    bands: Vec<BiasBand>,
    head_probs: Vec<f64>,
    candidates: Vec<usize>,
}

impl CascadeSource {
    pub fn new(graph: Graph, bands: Vec<BiasBand>) -> Result<CascadeSource> {
        let bands = validate_bands(bands)?;
        let head_probs: Vec<f64> = graph
            .out_degree()
            .iter()
            .map(|&d| {
                bands
                    .iter()
                    .find(|b| b.contains(d))
                    .map_or(0.0, |b| b.head_prob)
            })
            .collect();
        let candidates = (0..graph.n()).filter(|&v| head_probs[v] > 0.0).collect();
        Ok(CascadeSource {
            graph,
            bands,
            head_probs,
            candidates,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn bands(&self) -> &[BiasBand] {
        &self.bands
    }

    /// Number of nodes falling in each band.
    pub fn band_sizes(&self) -> Vec<usize> {
        self.bands
            .iter()
            .map(|b| {
                self.graph
                    .out_degree()
                    .iter()
                    .filter(|&&d| b.contains(d))
                    .count()
            })
            .collect()
    }

    /// Expected number of cascades started per step.
    pub fn expected_generation_rate(&self) -> f64 {
        self.band_sizes()
            .iter()
            .zip(&self.bands)
            .map(|(&k, b)| k as f64 * b.head_prob)
            .sum()
    }

    /// Runs one cascade from `seed`: edge `u -> w` fires with probability
    /// `1 / in_degree(w)`, and is tried once, when `u` is first reached.
    pub fn cascade<R: Rng + ?Sized>(&self, seed: usize, rng: &mut R) -> NodeSet {
        let mut reached = HashSet::from([seed]);
        let mut order = vec![seed];
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &w in self.graph.out_neighbors(u) {
                if reached.contains(&w) {
                    continue;
                }
                let fire = 1.0 / self.graph.in_degree()[w] as f64;
                if rng.random::<f64>() < fire {
                    reached.insert(w);
                    order.push(w);
                }
            }
        }
        NodeSet::new(order).expect("contains seed")
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<NodeSet> {
        let mut items = Vec::new();
        for &v in &self.candidates {
            if rng.random::<f64>() < self.head_probs[v] {
                items.push(self.cascade(v, rng));
            }
        }
        items
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<CascadeSource> {
        CascadeSource::new(self.graph.permuted(perm)?, self.bands.clone())
    }
}

/// Where items come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemSource {
    Explicit(GeneratingProcess),
    Cascade(CascadeSource),
}

impl ItemSource {
    pub fn n(&self) -> usize {
        match self {
            ItemSource::Explicit(p) => p.n(),
            ItemSource::Cascade(c) => c.graph.n(),
        }
    }

    /// Expected items per step (`Σ π(S)`, or the expected number of heads).
    pub fn expected_generation_rate(&self) -> f64 {
        match self {
            ItemSource::Explicit(p) => p.total_weight(),
            ItemSource::Cascade(c) => c.expected_generation_rate(),
        }
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<ItemSource> {
        Ok(match self {
            ItemSource::Explicit(p) => ItemSource::Explicit(p.permuted(perm)?),
            ItemSource::Cascade(c) => ItemSource::Cascade(c.permuted(perm)?),
        })
    }
}

/// Sets generated at one step. The process is stationary, so `_t` only
/// labels the call.
pub fn generate_items<R: Rng + ?Sized>(src: &ItemSource, _t: u64, rng: &mut R) -> Vec<NodeSet> {
    match src {
        ItemSource::Explicit(p) => p
            .sets()
            .iter()
            .filter(|(_, pi)| rng.random::<f64>() < *pi)
            .map(|(s, _)| s.clone())
            .collect(),
        ItemSource::Cascade(c) => c.generate(rng),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveItem {
    pub born: u64,
    pub set: NodeSet,
}

/// Per-step record of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub load: f64,
    pub generated: u64,
    pub caught: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadTrace {
    pub records: Vec<StepRecord>,
    pub generated_total: u64,
    pub caught_total: u64,
    pub expired_total: u64,
    pub live_at_end: u64,
}

impl LoadTrace {
    pub fn average_load(&self) -> f64 {
        self.window_average(0, self.records.len())
    }

    /// Mean load over records `from..to` (clamped to the trace).
    pub fn window_average(&self, from: usize, to: usize) -> f64 {
        let to = to.min(self.records.len());
        if from >= to {
            return 0.0;
        }
        self.records[from..to].iter().map(|r| r.load).sum::<f64>() / (to - from) as f64
    }

    pub fn loads(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.load).collect()
    }

    pub fn uncaught_total(&self) -> u64 {
        self.live_at_end + self.expired_total
    }

    /// `step,load,generated,caught` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,load,generated,caught\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.step,
                format_f64(r.load),
                r.generated,
                r.caught
            );
        }
        out
    }
}

/// Live-item pool with load accounting, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Simulator {
    theta: f64,
    t: u64,
    pool: Vec<LiveItem>,
    probe_mark: Vec<u64>,
    trace: LoadTrace,
}

impl Simulator {
    pub fn new(n: usize, theta: f64) -> Simulator {
        Simulator {
            theta,
            t: 0,
            pool: Vec::new(),
            probe_mark: vec![0; n],
            trace: LoadTrace::default(),
        }
    }

    pub fn now(&self) -> u64 {
        self.t
    }

    pub fn pool(&self) -> &[LiveItem] {
        &self.pool
    }

    pub fn trace(&self) -> &LoadTrace {
        &self.trace
    }

    pub fn into_trace(mut self) -> LoadTrace {
        self.trace.live_at_end = self.pool.len() as u64;
        self.trace
    }

    /// Runs one step with the given newly generated sets and probe set;
    /// returns the items caught at this step.
    pub fn step(&mut self, born: Vec<NodeSet>, probe: &NodeSet) -> Vec<LiveItem> {
        let t = self.t;
        let generated = born.len() as u64;
        self.pool
            .extend(born.into_iter().map(|set| LiveItem { born: t, set }));

        let theta = self.theta;
        let before = self.pool.len();
        self.pool
            .retain(|it| pow_u(theta, (t - it.born) as u32) >= NOVELTY_FLOOR);
        self.trace.expired_total += (before - self.pool.len()) as u64;

        let load: f64 = self
            .pool
            .iter()
            .map(|it| pow_u(theta, (t - it.born) as u32))
            .sum();

        let mark = t + 1;
        for &v in probe.members() {
            self.probe_mark[v] = mark;
        }
        let marks = &self.probe_mark;
        let (caught, live): (Vec<LiveItem>, Vec<LiveItem>) = std::mem::take(&mut self.pool)
            .into_iter()
            .partition(|it| it.set.members().iter().any(|&v| marks[v] == mark));
        self.pool = live;

        self.trace.generated_total += generated;
        self.trace.caught_total += caught.len() as u64;
        self.trace.records.push(StepRecord {
            step: t,
            load,
            generated,
            caught: caught.len() as u64,
        });
        self.t += 1;
        caught
    }

    /// `generated == caught + live + expired`.
    pub fn accounting_holds(&self) -> bool {
        self.trace.generated_total
            == self.trace.caught_total + self.pool.len() as u64 + self.trace.expired_total
    }
}

/// Simulates `steps` steps of probing with schedule `p`.
pub fn run_simulation<R: Rng + ?Sized>(
    src: &ItemSource,
    p: &Schedule,
    theta: f64,
    c: u32,
    mode: ProbeMode,
    steps: u64,
    rng: &mut R,
) -> Result<LoadTrace> {
    if p.len() != src.n() {
        return Err(Error::DimensionMismatch {
            expected: src.n(),
            got: p.len(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let sampler = ProbeSampler::new(p, c, mode);
    let mut sim = Simulator::new(src.n(), theta);
    for t in 0..steps {
        let born = generate_items(src, t, rng);
        let probe = sampler.draw(rng);
        sim.step(born, &probe);
    }
    Ok(sim.into_trace())
}

/// Observes every generated set for `steps` steps, without probing.
pub fn collect_sample<R: Rng + ?Sized>(src: &ItemSource, steps: u64, rng: &mut R) -> Sample {
    let mut sample = Sample::default();
    for t in 0..steps {
        sample.push_step(generate_items(src, t, rng));
    }
    sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::exact_cost;
    use crate::model::{validate_schedule, CostParams};

    fn set(v: &[usize]) -> NodeSet {
        NodeSet::new(v.to_vec()).unwrap()
    }

    fn instance_a() -> GeneratingProcess {
        GeneratingProcess::new(
            2,
            vec![(set(&[0]), 0.2), (set(&[1]), 0.3), (set(&[0, 1]), 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn degenerate_probe_distribution() {
        let p = validate_schedule(vec![1.0, 0.0]).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..100 {
            assert_eq!(
                draw_probe_set(&p, 3, ProbeMode::WithReplacement, &mut rng),
                set(&[0])
            );
            assert_eq!(
                draw_probe_set(&p, 3, ProbeMode::WithoutReplacement, &mut rng),
                set(&[0])
            );
        }
    }

    #[test]
    fn zero_mass_tail_never_drawn() {
        let p = validate_schedule(vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        let sampler = ProbeSampler::new(&p, 1, ProbeMode::WithReplacement);
        let mut rng = seeded_rng(2);
        for _ in 0..10_000 {
            let s = sampler.draw(&mut rng);
            assert!(s == set(&[1]) || s == set(&[2]));
        }
    }

    #[test]
    fn without_replacement_covers_everything() {
        let p = Schedule::uniform(6);
        let mut rng = seeded_rng(3);
        let s = draw_probe_set(&p, 6, ProbeMode::WithoutReplacement, &mut rng);
        assert_eq!(s, set(&[0, 1, 2, 3, 4, 5]));
        let s = draw_probe_set(&p, 3, ProbeMode::WithoutReplacement, &mut rng);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn band_validation() {
        assert!(validate_bands(default_bands()).is_ok());
        let mut gap = default_bands();
        gap[1].max_outdeg = Some(400);
        assert!(validate_bands(gap).is_err());
        let mut capped = default_bands();
        capped[3].max_outdeg = Some(5000);
        assert!(validate_bands(capped).is_err());
        let mut late = default_bands();
        late.remove(0);
        assert!(validate_bands(late).is_err());
        let mut bad_prob = default_bands();
        bad_prob[2].head_prob = 1.5;
        assert!(validate_bands(bad_prob).is_err());
    }

    #[test]
    fn band_membership() {
        let b = default_bands();
        assert!(b[0].contains(99) && !b[0].contains(100));
        assert!(b[3].contains(1000) && b[3].contains(usize::MAX));
    }

    #[test]
    fn low_degree_graph_never_generates() {
        let g = Graph::from_edges(50, (1..50).map(|v| (0, v))).unwrap();
        let src = CascadeSource::new(g, default_bands()).unwrap();
        assert_eq!(src.expected_generation_rate(), 0.0);
        let src = ItemSource::Cascade(src);
        let mut rng = seeded_rng(4);
        for t in 0..1000 {
            assert!(generate_items(&src, t, &mut rng).is_empty());
        }
    }

    #[test]
    fn explicit_certain_sets_always_generated() {
        let proc = GeneratingProcess::new(3, vec![(set(&[0]), 1.0), (set(&[1, 2]), 1.0)]).unwrap();
        let src = ItemSource::Explicit(proc);
        let mut rng = seeded_rng(5);
        for t in 0..20 {
            assert_eq!(
                generate_items(&src, t, &mut rng),
                vec![set(&[0]), set(&[1, 2])]
            );
        }
    }

    #[test]
    fn full_coverage_single_node() {
        let proc = GeneratingProcess::new(1, vec![(set(&[0]), 1.0)]).unwrap();
        let mut rng = seeded_rng(6);
        let trace = run_simulation(
            &ItemSource::Explicit(proc),
            &Schedule::uniform(1),
            0.5,
            1,
            ProbeMode::WithReplacement,
            100,
            &mut rng,
        )
        .unwrap();
        assert!(trace.records.iter().all(|r| r.load == 1.0));
        assert_eq!(trace.average_load(), 1.0);
        assert_eq!(trace.caught_total, 100);
    }

    #[test]
    fn uncaught_item_decays_geometrically() {
        let mut sim = Simulator::new(2, 0.5);
        let probe = set(&[1]);
        sim.step(vec![set(&[0])], &probe);
        for _ in 0..20 {
            sim.step(vec![], &probe);
        }
        let loads = sim.trace().loads();
        for (k, l) in loads.iter().enumerate() {
            assert_eq!(*l, 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn catch_happens_at_first_intersecting_probe() {
        let mut sim = Simulator::new(3, 0.9);
        sim.step(vec![set(&[0, 2])], &set(&[1]));
        assert_eq!(sim.pool().len(), 1);
        sim.step(vec![], &set(&[1]));
        assert_eq!(sim.pool().len(), 1);
        let caught = sim.step(vec![set(&[1])], &set(&[2]));
        assert_eq!(
            caught,
            vec![LiveItem {
                born: 0,
                set: set(&[0, 2])
            }]
        );
        assert_eq!(
            sim.pool(),
            &[LiveItem {
                born: 2,
                set: set(&[1])
            }]
        );
        assert!(sim.accounting_holds());
    }

    #[test]
    fn expired_items_are_counted() {
        let mut sim = Simulator::new(2, 0.1);
        sim.step(vec![set(&[0])], &set(&[1]));
        for _ in 0..20 {
            sim.step(vec![], &set(&[1]));
            assert!(sim.accounting_holds());
        }
        assert_eq!(sim.trace().expired_total, 1);
        assert!(sim.pool().is_empty());
    }

    #[test]
    fn simulated_load_matches_exact_cost() {
        let prm = CostParams::new(0.5, 1).unwrap();
        let p = Schedule::uniform(2);
        let want = exact_cost(&instance_a(), &p, &prm).unwrap();
        let mut rng = seeded_rng(7);
        let trace = run_simulation(
            &ItemSource::Explicit(instance_a()),
            &p,
            0.5,
            1,
            ProbeMode::WithReplacement,
            100_000,
            &mut rng,
        )
        .unwrap();
        assert!((trace.average_load() - want).abs() <= 0.01 * want);
        assert_eq!(
            trace.generated_total,
            trace.caught_total + trace.uncaught_total()
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let run = |seed| {
            let mut rng = seeded_rng(seed);
            run_simulation(
                &ItemSource::Explicit(instance_a()),
                &Schedule::uniform(2),
                0.75,
                2,
                ProbeMode::WithReplacement,
                2000,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).to_csv(), run(12).to_csv());
    }

    #[test]
    fn simulation_rejects_bad_input() {
        let mut rng = seeded_rng(8);
        let src = ItemSource::Explicit(instance_a());
        assert!(matches!(
            run_simulation(
                &src,
                &Schedule::uniform(3),
                0.5,
                1,
                ProbeMode::default(),
                10,
                &mut rng
            ),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(run_simulation(
            &src,
            &Schedule::uniform(2),
            0.5,
            1,
            ProbeMode::default(),
            0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn sample_collection_examples() {
        let mut rng = seeded_rng(9);
        let zero = GeneratingProcess::new(2, vec![(set(&[0]), 0.0)]).unwrap();
        let s = collect_sample(&ItemSource::Explicit(zero), 5, &mut rng);
        assert_eq!(s.length(), 5);
        assert_eq!(s.occurrences(), 0);

        let one = GeneratingProcess::new(2, vec![(set(&[0, 1]), 1.0)]).unwrap();
        let s = collect_sample(&ItemSource::Explicit(one), 3, &mut rng);
        assert_eq!(
            s.steps(),
            &[vec![set(&[0, 1])], vec![set(&[0, 1])], vec![set(&[0, 1])]]
        );
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut sim = Simulator::new(1, 0.5);
        sim.step(vec![set(&[0])], &set(&[0]));
        let csv = sim.into_trace().to_csv();
        assert_eq!(csv, "step,load,generated,caught\n0,1.0,1,1\n");
    }

    #[test]
    fn permuted_source_relabels() {
        let src = ItemSource::Explicit(instance_a());
        let swapped = src.permuted(&[1, 0]).unwrap();
        match swapped {
            ItemSource::Explicit(p) => {
                let w: Vec<f64> = p.sets().iter().map(|(_, w)| *w).collect();
                assert_eq!(w, vec![0.3, 0.5, 0.2]);
            }
            _ => unreachable!(),
        }
    }
}
