use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Directed graph over node ids `0..n`, with adjacency kept in both directions.
///
/// Duplicate edges are collapsed at construction and the edge list is kept
/// sorted, so two graphs built from the same edge multiset compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    out_degree: Vec<usize>,
    in_degree: Vec<usize>,
    total_degree: Vec<usize>,
}

/// How to interpret an edge-list file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeListOptions {
    /// Ids in the file start at 1; they are shifted down by one.
    pub one_based: bool,
    /// Every line is an undirected edge and expands to both directions.
    pub undirected: bool,
}

impl Graph {
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
        for &(u, v) in &edges {
            let bad = u.max(v);
            if bad >= n {
                return Err(Error::NodeOutOfRange { id: bad, n });
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            out_adj[u].push(v);
            in_adj[v].push(u);
        }
        let out_degree: Vec<usize> = out_adj.iter().map(Vec::len).collect();
        let in_degree: Vec<usize> = in_adj.iter().map(Vec::len).collect();
        let total_degree = out_degree
            .iter()
            .zip(&in_degree)
            .map(|(o, i)| o + i)
            .collect();
        Ok(Graph {
            n,
            edges,
            out_adj,
            in_adj,
            out_degree,
            in_degree,
            total_degree,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn out_degree(&self) -> &[usize] {
        &self.out_degree
    }

    pub fn in_degree(&self) -> &[usize] {
        &self.in_degree
    }

    pub fn total_degree(&self) -> &[usize] {
        &self.total_degree
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: perm.len(),
            });
        }
        Graph::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// Serializes as an edge list. The leading `# nodes` comment keeps
    /// trailing isolated nodes across a reload.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.edges.len() * 12 + 16);
        let _ = writeln!(out, "# nodes {}", self.n);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

/// Parses a SNAP-style edge list with ids taken literally.
pub fn load_graph(text: &str) -> Result<Graph> {
    load_graph_with(text, EdgeListOptions::default())
}

pub fn load_graph_with(text: &str, opts: EdgeListOptions) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared_n = 0usize;
    let mut max_id: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            if parts.next() == Some("nodes") {
                if let (Some(v), None) = (parts.next(), parts.next()) {
                    if let Ok(n) = v.parse::<usize>() {
                        declared_n = n;
                    }
                }
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (u, v) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected two node ids, got {line:?}"),
                })
            }
        };
        let parse = |s: &str| -> Result<usize> {
            let id = s.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad node id {s:?}"),
            })?;
            if opts.one_based {
                id.checked_sub(1).ok_or(Error::Parse {
                    line: line_no,
                    msg: "node id 0 in a 1-based file".into(),
                })
            } else {
                Ok(id)
            }
        };
        let (u, v) = (parse(u)?, parse(v)?);
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
        if opts.undirected {
            edges.push((v, u));
        }
    }

    let max_id = max_id.ok_or(Error::EmptyInput)?;
    Graph::from_edges(declared_n.max(max_id + 1), edges)
}
