//! Undirected simple graphs with 1-indexed vertices.
//!
//! This is the substrate every problem instance in the crate is built on.
//! Edges are stored normalized as ordered pairs `(u, v)` with `u < v`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Vertex identifier; vertices are numbered `1..=n` as in DIMACS files.
pub type Vertex = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(Vertex, Vertex),
    #[error("vertex {v} out of range 1..={n}")]
    VertexOutOfRange { v: Vertex, n: usize },
    #[error("graph parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An undirected simple graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(Vertex, Vertex)>,
}

impl Graph {
    /// Builds a graph on `n` vertices, normalizing and checking every edge.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (Vertex, Vertex)>,
    ) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            for v in [a, b] {
                if v == 0 || v as usize > n {
                    return Err(GraphError::VertexOutOfRange { v, n });
                }
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
        }
        Ok(Graph { n, edges: set })
    }

    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Complete graph on `n` vertices.
    pub fn complete(n: usize) -> Self {
        let mut edges = BTreeSet::new();
        for u in 1..=n as Vertex {
            for v in (u + 1)..=n as Vertex {
                edges.insert((u, v));
            }
        }
        Graph { n, edges }
    }

    /// Path `1 - 2 - ... - n`.
    pub fn path(n: usize) -> Self {
        let edges = (1..n as Vertex).map(|u| (u, u + 1)).collect();
        Graph { n, edges }
    }

    /// Cycle through `1, 2, ..., n, 1`; requires `n >= 3`.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 vertices");
        let mut g = Self::path(n);
        g.edges.insert((1, n as Vertex));
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        1..=self.n as Vertex
    }

    /// Edges in lexicographic order, each with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (Vertex, Vertex)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        u != v && self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Adjacency lists indexed by vertex (entry 0 unused), each sorted ascending.
    pub fn adjacency(&self) -> Vec<Vec<Vertex>> {
        let mut adj = vec![Vec::new(); self.n + 1];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    pub fn neighbors(&self, u: Vertex) -> Vec<Vertex> {
        let mut out: Vec<Vertex> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_clique(&self, vs: &[Vertex]) -> bool {
        for (i, &u) in vs.iter().enumerate() {
            for &v in &vs[i + 1..] {
                if !self.has_edge(u, v) {
                    return false;
                }
            }
        }
        true
    }

    /// Connected components as sorted vertex lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<Vertex>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n + 1];
        let mut comps = Vec::new();
        for s in 1..=self.n as Vertex {
            if seen[s as usize] {
                continue;
            }
            let mut stack = vec![s];
            seen[s as usize] = true;
            let mut comp = Vec::new();
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &adj[u as usize] {
                    if !seen[v as usize] {
                        seen[v as usize] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    /// Parses the `p edge <n> <m>` format with `e <u> <v>` lines.
    ///
    /// `c` lines are comments; tokens are whitespace separated.
    pub fn parse(input: &str) -> Result<Self, GraphError> {
        let mut n: Option<usize> = None;
        let mut declared_m = 0usize;
        let mut edges = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks[0] {
                "p" => {
                    if toks.len() != 4 || toks[1] != "edge" {
                        return Err(GraphError::Parse {
                            line: lineno,
                            msg: "expected `p edge <n> <m>`".into(),
                        });
                    }
                    n = Some(parse_num(toks[2], lineno)?);
                    declared_m = parse_num(toks[3], lineno)?;
                }
                "e" => {
                    if toks.len() != 3 {
                        return Err(GraphError::Parse {
                            line: lineno,
                            msg: "expected `e <u> <v>`".into(),
                        });
                    }
                    let u: Vertex = parse_num(toks[1], lineno)? as Vertex;
                    let v: Vertex = parse_num(toks[2], lineno)? as Vertex;
                    edges.push((u, v));
                }
                _ => {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: format!("unknown line kind `{}`", toks[0]),
                    });
                }
            }
        }
        let n = n.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing `p edge` header".into(),
        })?;
        if edges.len() != declared_m {
            return Err(GraphError::Parse {
                line: 0,
                msg: format!("header declares {} edges, found {}", declared_m, edges.len()),
            });
        }
        Graph::new(n, edges)
    }

    pub fn to_dimacs(&self) -> String {
        format!("{}", self)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p edge {} {}", self.n, self.edges.len())?;
        for &(u, v) in &self.edges {
            writeln!(f, "e {} {}", u, v)?;
        }
        Ok(())
    }
}

fn parse_num(tok: &str, line: usize) -> Result<usize, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("expected a number, got `{}`", tok),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert_eq!(Graph::new(3, [(1, 1)]).unwrap_err(), GraphError::SelfLoop(1));
        assert_eq!(
            Graph::new(3, [(1, 2), (2, 1)]).unwrap_err(),
            GraphError::DuplicateEdge(1, 2)
        );
        assert!(matches!(
            Graph::new(2, [(1, 3)]).unwrap_err(),
            GraphError::VertexOutOfRange { v: 3, n: 2 }
        ));
    }

    #[test]
    fn normalizes_edge_order() {
        let g = Graph::new(3, [(3, 1)]).unwrap();
        assert!(g.has_edge(1, 3));
        assert!(g.has_edge(3, 1));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 3)]);
    }

    #[test]
    fn parse_round_trip() {
        let g = Graph::new(4, [(1, 2), (2, 3), (1, 4)]).unwrap();
        let text = g.to_dimacs();
        assert_eq!(Graph::parse(&text).unwrap(), g);
    }

    #[test]
    fn parse_rejects_bad_edge_count() {
        let res = Graph::parse("p edge 3 2\ne 1 2\n");
        assert!(res.is_err());
    }

    #[test]
    fn components_of_disconnected_graph() {
        let g = Graph::new(5, [(1, 2), (4, 5)]).unwrap();
        assert_eq!(g.components(), vec![vec![1, 2], vec![3], vec![4, 5]]);
    }
}
