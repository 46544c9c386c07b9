//! Line-oriented text formats for processes, schedules and samples.

use super::{validate_schedule, GeneratingProcess, NodeSet, Sample, Schedule};
use crate::error::{Error, Result};

/// Shortest decimal form that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_id(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| parse_err(line, format!("bad node id {tok:?}")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses `<weight> <id> <id> ...` lines. The node count is `n` when given,
/// otherwise one past the largest id.
pub fn parse_process(text: &str, n: Option<usize>) -> Result<GeneratingProcess> {
    let mut sets = Vec::new();
    let mut max_id = 0usize;
    for (line, l) in content_lines(text) {
        let mut toks = l.split_whitespace();
        let w_tok = toks
            .next()
            .ok_or_else(|| parse_err(line, "missing weight"))?;
        let w: f64 = w_tok
            .parse()
            .map_err(|_| parse_err(line, format!("bad weight {w_tok:?}")))?;
        if !(0.0..=1.0).contains(&w) {
            return Err(parse_err(line, format!("weight {w} outside [0,1]")));
        }
        let ids = toks
            .map(|t| parse_id(t, line))
            .collect::<Result<Vec<_>>>()?;
        if ids.is_empty() {
            return Err(parse_err(line, "set has no members"));
        }
        let s = NodeSet::new(ids)?;
        max_id = max_id.max(s.max_id());
        sets.push((s, w));
    }
    if sets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = n.unwrap_or(max_id + 1);
    GeneratingProcess::new(n, sets)
}

/// Parses `<id> <prob>` lines with ids `0..n` in ascending order.
pub fn parse_schedule(text: &str) -> Result<Schedule> {
    let mut probs = Vec::new();
    for (line, l) in content_lines(text) {
        let mut toks = l.split_whitespace();
        let (id, p) = match (toks.next(), toks.next(), toks.next()) {
            (Some(id), Some(p), None) => (id, p),
            _ => return Err(parse_err(line, "expected `<id> <prob>`")),
        };
        let id = parse_id(id, line)?;
        if id != probs.len() {
            return Err(parse_err(
                line,
                format!("expected node id {}, got {id}", probs.len()),
            ));
        }
        let p: f64 = p
            .parse()
            .map_err(|_| parse_err(line, format!("bad probability {p:?}")))?;
        probs.push(p);
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    validate_schedule(probs)
}

/// Parses `<t>: <ids> | <ids> ...` lines; step indices must be consecutive.
pub fn parse_sample(text: &str) -> Result<Sample> {
    let mut sample = Sample::default();
    let mut prev: Option<u64> = None;
    for (line, l) in content_lines(text) {
        let (t, rest) = l
            .split_once(':')
            .ok_or_else(|| parse_err(line, "missing `:` after step index"))?;
        let t: u64 = t
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad step index {t:?}")))?;
        if let Some(p) = prev {
            if t != p + 1 {
                return Err(parse_err(line, format!("step {t} does not follow {p}")));
            }
        }
        prev = Some(t);

        let mut sets = Vec::new();
        if !rest.trim().is_empty() {
            for part in rest.split('|') {
                let ids = part
                    .split_whitespace()
                    .map(|tok| parse_id(tok, line))
                    .collect::<Result<Vec<_>>>()?;
                if ids.is_empty() {
                    return Err(parse_err(line, "empty set between separators"));
                }
                sets.push(NodeSet::new(ids)?);
            }
        }
        sample.push_step(sets);
    }
    if sample.length() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(sample)
}
