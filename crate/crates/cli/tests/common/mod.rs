#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

pub const INSTANCE_A: &str = "0.2 0\n0.3 1\n0.5 0 1\n";

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Runs the CLI in-process with `wiggins` prepended.
pub fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["wiggins"];
    argv.extend_from_slice(args);
    wiggins_cli::run(argv)
}

/// θ-cost written directly from the closed form, independent of the library.
pub fn oracle_cost(sets: &[(Vec<usize>, f64)], p: &[f64], theta: f64, c: i32) -> f64 {
    sets.iter()
        .map(|(members, pi)| {
            let mass: f64 = members.iter().map(|&v| p[v]).sum();
            pi / (1.0 - theta * (1.0 - mass.min(1.0)).powi(c))
        })
        .sum()
}

/// Grid minimum of the cost over the simplex for n = 2 or 3.
pub fn grid_optimum(
    sets: &[(Vec<usize>, f64)],
    n: usize,
    theta: f64,
    c: i32,
    steps: usize,
) -> (Vec<f64>, f64) {
    let mut best = (vec![], f64::INFINITY);
    let h = 1.0 / steps as f64;
    match n {
        2 => {
            for i in 0..=steps {
                let p = vec![i as f64 * h, 1.0 - i as f64 * h];
                let c0 = oracle_cost(sets, &p, theta, c);
                if c0 < best.1 {
                    best = (p, c0);
                }
            }
        }
        3 => {
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let a = i as f64 * h;
                    let b = j as f64 * h;
                    let p = vec![a, b, (1.0 - a - b).max(0.0)];
                    let c0 = oracle_cost(sets, &p, theta, c);
                    if c0 < best.1 {
                        best = (p, c0);
                    }
                }
            }
        }
        _ => panic!("grid search only for n = 2 or 3"),
    }
    best
}

/// Edge list whose out-degree classes have sizes (9, 23, 517) in the bands
/// [1000, ∞), [500, 1000) and [100, 500), over a pool of leaf nodes.
pub fn three_class_graph(leaves: usize) -> String {
    let classes = [(9usize, 1000usize), (23, 500), (517, 100)];
    let hubs: usize = classes.iter().map(|c| c.0).sum();
    let mut out = format!("# nodes {}\n", hubs + leaves);
    let mut hub = 0;
    for (count, deg) in classes {
        for _ in 0..count {
            for k in 0..deg {
                let leaf = hubs + (hub * 7919 + k * 104_729) % leaves;
                out.push_str(&format!("{hub} {leaf}\n"));
            }
            hub += 1;
        }
    }
    out
}

pub fn read_sample_steps(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}
