use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use wiggins::adapt::{adaptive_loop, format_event_log, AdaptiveConfig, PhasePlan};
use wiggins::cost::{exact_cost, required_sample_length, SampleSizeParams};
use wiggins::model::{
    format_f64, load_graph_with, parse_process, parse_sample, parse_schedule, CostParams,
    EdgeListOptions, Graph, Schedule,
};
use wiggins::parallel::parallel_wiggins_apx;
use wiggins::simulate::{
    collect_sample, default_bands, run_simulation, seeded_rng, CascadeSource, ItemSource, ProbeMode,
};
use wiggins::solver::{
    baseline_schedule, compare_schedules, wiggins, wiggins_apx, BaselineKind, SolveResult,
    SolverConfig,
};

use crate::manifest::RunManifest;
use crate::{
    with_suffix, CompareArgs, DynamicArgs, GraphArgs, ReplayArgs, SampleArgs, SimulateArgs,
    SolveArgs, SourceArgs, UsageError, EXIT_NOT_CONVERGED, EXIT_OK,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn read_input(m: &mut RunManifest, role: &str, path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    m.input(role, path, &bytes);
    String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn write_output(m: &mut RunManifest, role: &str, path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    m.output(role, path);
    Ok(())
}

fn load_graph_file(m: &mut RunManifest, path: &Path, opts: &GraphArgs) -> Result<Graph> {
    let text = read_input(m, "graph", path)?;
    m.param("one_based", opts.one_based);
    m.param("undirected", opts.undirected);
    let g = load_graph_with(
        &text,
        EdgeListOptions {
            one_based: opts.one_based,
            undirected: opts.undirected,
        },
    )
    .with_context(|| format!("parsing {}", path.display()))?;
    Ok(g)
}

fn cascade_source(m: &mut RunManifest, graph: Graph, opts: &GraphArgs) -> Result<CascadeSource> {
    let bands = if opts.bias.is_empty() {
        default_bands()
    } else {
        opts.bias.clone()
    };
    let src = CascadeSource::new(graph, bands).map_err(|e| usage(format!("bias bands: {e}")))?;
    let spec: Vec<String> = src
        .bands()
        .iter()
        .map(|b| {
            let max = b.max_outdeg.map(|x| x.to_string()).unwrap_or_default();
            format!("{}:{max}:{}", b.min_outdeg, format_f64(b.head_prob))
        })
        .collect();
    m.param("bias", spec.join(","));
    Ok(src)
}

fn load_source(m: &mut RunManifest, args: &SourceArgs) -> Result<ItemSource> {
    if let Some(path) = &args.process {
        let text = read_input(m, "process", path)?;
        let proc = parse_process(&text, args.nodes)
            .with_context(|| format!("parsing {}", path.display()))?;
        return Ok(ItemSource::Explicit(proc));
    }
    let path = args
        .graph
        .as_ref()
        .ok_or_else(|| usage("one of --process or --graph is required"))?;
    let g = load_graph_file(m, path, &args.graph_opts)?;
    Ok(ItemSource::Cascade(cascade_source(m, g, &args.graph_opts)?))
}

fn cost_params(m: &mut RunManifest, theta: f64, c: u32) -> Result<CostParams> {
    m.param("theta", format_f64(theta));
    m.param("c", c);
    CostParams::new(theta, c).map_err(|e| usage(e.to_string()))
}

fn trace_csv(res: &SolveResult) -> String {
    let mut out = String::from("iteration,cost\n");
    for (i, c) in res.cost_trace.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, format_f64(*c));
    }
    out
}

pub fn solve(a: &SolveArgs, m: &mut RunManifest) -> Result<i32> {
    let params = cost_params(m, a.cost.theta, a.cost.c)?;
    let cfg = SolverConfig {
        max_iters: a.max_iters,
        conv_tol: a.tol,
        record_trace: true,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    m.param("max_iters", a.max_iters);
    m.param("tol", format_f64(a.tol));
    m.set("seed", "none");

    let res = match (&a.process, &a.sample) {
        (Some(path), None) => {
            let text = read_input(m, "process", path)?;
            let proc = parse_process(&text, a.nodes)
                .with_context(|| format!("parsing {}", path.display()))?;
            m.param("nodes", proc.n());
            wiggins(&proc, &params, &cfg)?
        }
        (None, Some(path)) => {
            let n = a.nodes.ok_or_else(|| usage("--sample needs --nodes"))?;
            m.param("nodes", n);
            let text = read_input(m, "sample", path)?;
            let sample =
                parse_sample(&text).with_context(|| format!("parsing {}", path.display()))?;
            match a.workers {
                Some(w) => {
                    m.param("workers", w);
                    parallel_wiggins_apx(&sample, n, &params, &cfg, w)?
                }
                None => wiggins_apx(&sample, n, &params, &cfg)?,
            }
        }
        _ => return Err(usage("exactly one of --process or --sample is required")),
    };

    write_output(m, "schedule", &a.output.out, &res.schedule.to_text())?;
    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output.out, "trace.csv"));
    write_output(m, "trace", &trace_path, &trace_csv(&res))?;
    let final_cost = res.cost_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "converged={} iterations={} cost={}",
        res.converged,
        res.iterations,
        format_f64(final_cost)
    );
    m.set("result.converged", res.converged);
    m.set("result.iterations", res.iterations);
    Ok(if res.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

pub fn sample(a: &SampleArgs, m: &mut RunManifest) -> Result<i32> {
    let src = load_source(m, &a.source)?;
    let steps = if a.auto_steps {
        let sp = SampleSizeParams::new(src.n(), a.epsilon, a.theta, a.r)
            .map_err(|e| usage(e.to_string()))?;
        m.param("epsilon", format_f64(a.epsilon));
        m.param("theta", format_f64(a.theta));
        m.param("r", a.r);
        required_sample_length(&sp)
    } else {
        a.steps
            .ok_or_else(|| usage("--steps or --auto-steps is required"))?
    };
    if steps == 0 {
        return Err(usage("--steps must be >= 1"));
    }
    m.param("steps", steps);
    m.set("seed", a.seed);
    let sample = collect_sample(&src, steps, &mut seeded_rng(a.seed));
    write_output(m, "sample", &a.output.out, &sample.to_text())?;
    println!("steps={} items={}", sample.length(), sample.occurrences());
    Ok(EXIT_OK)
}

pub fn simulate(a: &SimulateArgs, m: &mut RunManifest) -> Result<i32> {
    let src = load_source(m, &a.source)?;
    let params = cost_params(m, a.cost.theta, a.cost.c)?;
    let text = read_input(m, "schedule", &a.schedule)?;
    let p = parse_schedule(&text).with_context(|| format!("parsing {}", a.schedule.display()))?;
    if p.len() != src.n() {
        return Err(usage(format!(
            "schedule has {} nodes but the source has {}",
            p.len(),
            src.n()
        )));
    }
    if a.steps == 0 {
        return Err(usage("--steps must be >= 1"));
    }
    let mode = if a.without_replacement {
        ProbeMode::WithoutReplacement
    } else {
        ProbeMode::WithReplacement
    };
    m.param("steps", a.steps);
    m.param("probe_mode", format!("{mode:?}"));
    m.set("seed", a.seed);
    let trace = run_simulation(
        &src,
        &p,
        params.theta(),
        params.c(),
        mode,
        a.steps,
        &mut seeded_rng(a.seed),
    )?;
    write_output(m, "loads", &a.output.out, &trace.to_csv())?;
    let avg = trace.average_load();
    m.set("result.avg_load", format_f64(avg));
    if let ItemSource::Explicit(proc) = &src {
        let exact = exact_cost(proc, &p, &params)?;
        m.set("result.exact_cost", format_f64(exact));
    }
    println!("avg_load={}", format_f64(avg));
    Ok(EXIT_OK)
}

pub fn compare(a: &CompareArgs, m: &mut RunManifest) -> Result<i32> {
    if a.samples == 0 || a.steps == 0 {
        return Err(usage("--samples and --steps must be >= 1"));
    }
    let params = cost_params(m, a.cost.theta, a.cost.c)?;
    let graph = load_graph_file(m, &a.graph, &a.graph_opts)?;
    let n = graph.n();
    let src = ItemSource::Cascade(cascade_source(m, graph.clone(), &a.graph_opts)?);
    let train_steps = a.train_steps.unwrap_or(a.steps);
    if train_steps == 0 {
        return Err(usage("--train-steps must be >= 1"));
    }
    m.param("samples", a.samples);
    m.param("steps", a.steps);
    m.param("train_steps", train_steps);
    m.param("max_iters", a.max_iters);
    m.set("seed", a.seed);

    let mut rng = seeded_rng(a.seed);
    let train = collect_sample(&src, train_steps, &mut rng);
    let cfg = SolverConfig {
        max_iters: a.max_iters,
        ..SolverConfig::default()
    };
    let learned = wiggins_apx(&train, n, &params, &cfg)?;
    m.set("result.train_iterations", learned.iterations);
    m.set("result.train_converged", learned.converged);
    if let Some(path) = &a.schedule_out {
        write_output(m, "schedule", path, &learned.schedule.to_text())?;
    }
    let evals: Vec<_> = (0..a.samples)
        .map(|_| collect_sample(&src, a.steps, &mut rng))
        .collect();

    let mut schedules = vec![("wiggins-apx".to_string(), learned.schedule)];
    for kind in BaselineKind::ALL {
        schedules.push((kind.name().to_string(), baseline_schedule(kind, &graph)?));
    }
    let mut rows = compare_schedules(&schedules, &evals, &params)?;
    rows.sort_by(|x, y| x.mean_cost.total_cmp(&y.mean_cost));

    let mut csv = String::from("rank,schedule,mean_cost,min_cost,max_cost\n");
    for (i, r) in rows.iter().enumerate() {
        let min = r.costs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = r.costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            i + 1,
            r.name,
            format_f64(r.mean_cost),
            format_f64(min),
            format_f64(max)
        );
        println!(
            "{}. {} mean_cost={}",
            i + 1,
            r.name,
            format_f64(r.mean_cost)
        );
    }
    write_output(m, "table", &a.output.out, &csv)?;
    Ok(EXIT_OK)
}

/// Validated `--phases` string.
fn phase_kinds(spec: &str) -> Result<Vec<char>> {
    let kinds: Vec<char> = spec
        .trim()
        .chars()
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if kinds.is_empty() {
        return Err(usage("--phases must name at least one phase"));
    }
    if let Some(bad) = kinds.iter().find(|c| !matches!(c, 'N' | 'P' | 'S')) {
        return Err(usage(format!(
            "unknown phase letter {bad:?}; use N, P or S"
        )));
    }
    Ok(kinds)
}

pub fn dynamic(a: &DynamicArgs, m: &mut RunManifest) -> Result<i32> {
    let mut src = load_source(m, &a.source)?;
    let n = src.n();
    let params = cost_params(m, a.cost.theta, a.cost.c)?;
    let kinds = phase_kinds(&a.phases)?;
    let mut cfg = AdaptiveConfig::from_bound(n, a.epsilon, params.theta(), a.r)
        .map_err(|e| usage(e.to_string()))?;
    let phase_len = a.phase_length.unwrap_or(cfg.resample_length);
    if let Some(r) = a.resample_length {
        cfg.resample_length = r;
    }
    cfg.staleness_k = a.staleness_k;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if phase_len == 0 {
        return Err(usage("--phase-length must be >= 1"));
    }
    if kinds.contains(&'S') && cfg.resample_length > phase_len {
        return Err(usage(format!(
            "resample length {} exceeds phase length {phase_len}",
            cfg.resample_length
        )));
    }
    m.param("phases", kinds.iter().collect::<String>());
    m.param("phase_length", phase_len);
    m.param("resample_length", cfg.resample_length);
    m.param("epsilon", format_f64(a.epsilon));
    m.param("r", a.r);
    m.param("staleness_k", format_f64(a.staleness_k));
    m.param("detect_drift", a.detect_drift);
    m.param("max_iters", a.max_iters);
    m.set("seed", a.seed);

    let mut plan = PhasePlan {
        perturb_at: BTreeSet::new(),
        resample_at: BTreeSet::new(),
        detect_drift: a.detect_drift,
    };
    for (i, k) in kinds.iter().enumerate() {
        let start = i as u64 * phase_len;
        match k {
            'P' => {
                plan.perturb_at.insert(start);
            }
            'S' => {
                plan.resample_at.insert(start);
            }
            _ => {}
        }
    }
    let total = phase_len * kinds.len() as u64;
    let solver_cfg = SolverConfig {
        max_iters: a.max_iters,
        ..SolverConfig::default()
    };
    let run = adaptive_loop(
        &mut src,
        Schedule::uniform(n),
        &params,
        &cfg,
        &solver_cfg,
        &plan,
        total,
        &mut seeded_rng(a.seed),
    )?;

    write_output(m, "loads", &a.output.out, &run.trace.to_csv())?;
    let events_path = a
        .events
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output.out, "events"));
    write_output(m, "events", &events_path, &format_event_log(&run.events))?;

    let mut csv = String::from("phase,kind,start,end,avg_load\n");
    for (i, k) in kinds.iter().enumerate() {
        let start = i as u64 * phase_len;
        let end = start + phase_len;
        let avg = run.trace.window_average(start as usize, end as usize);
        let _ = writeln!(csv, "{i},{k},{start},{end},{}", format_f64(avg));
        println!(
            "phase={i} kind={k} start={start} end={end} avg_load={}",
            format_f64(avg)
        );
    }
    write_output(m, "phases", &with_suffix(&a.output.out, "phases.csv"), &csv)?;
    Ok(EXIT_OK)
}

pub fn replay(a: &ReplayArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.manifest)
        .with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest = RunManifest::parse(&text)?;
    for (role, path, digest) in manifest.inputs() {
        let bytes =
            fs::read(&path).with_context(|| format!("reading {role} input {}", path.display()))?;
        let now = crate::manifest::sha256_hex(&bytes);
        if now != digest && !a.force {
            bail!(UsageError(format!(
                "{role} input {} changed since the recorded run",
                path.display()
            )));
        }
    }
    let argv = manifest.argv();
    if argv.len() < 2 {
        bail!(UsageError("manifest records no command line".into()));
    }
    if argv[1] == "replay" {
        bail!(UsageError("refusing to replay a replay".into()));
    }
    Ok(crate::run(argv))
}
