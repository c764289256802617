//! CNF formulas with a named-variable registry, plus the derived
//! primal and incidence graphs.
//!
//! Literals are signed variable indices (`3` / `-3`), variables are
//! 1-indexed. Named variables mark gadget interface points and survive
//! serialization as `c name <index> <label>` comment lines.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::graph::{Graph, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CnfError {
    #[error("clause {0} is empty")]
    EmptyClause(usize),
    #[error("literal {lit} in clause {clause} references no declared variable")]
    LiteralOutOfRange { clause: usize, lit: i64 },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("name `{label}` references undeclared variable {var}")]
    NameOutOfRange { label: String, var: u32 },
    #[error("cnf parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
    named_vars: BTreeMap<String, u32>,
}

impl CnfFormula {
    pub fn new(
        num_vars: usize,
        clauses: Vec<Vec<i32>>,
        named_vars: BTreeMap<String, u32>,
    ) -> Result<Self, CnfError> {
        for (i, cl) in clauses.iter().enumerate() {
            if cl.is_empty() {
                return Err(CnfError::EmptyClause(i));
            }
            for &lit in cl {
                let v = lit.unsigned_abs() as usize;
                if lit == 0 || v > num_vars {
                    return Err(CnfError::LiteralOutOfRange {
                        clause: i,
                        lit: lit as i64,
                    });
                }
            }
        }
        for (label, &var) in &named_vars {
            if var == 0 || var as usize > num_vars {
                return Err(CnfError::NameOutOfRange {
                    label: label.clone(),
                    var,
                });
            }
        }
        Ok(CnfFormula {
            num_vars,
            clauses,
            named_vars,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    pub fn named_vars(&self) -> &BTreeMap<String, u32> {
        &self.named_vars
    }

    pub fn var_of(&self, label: &str) -> Option<u32> {
        self.named_vars.get(label).copied()
    }

    /// Primal (Gaifman) graph: a vertex per variable, an edge between every
    /// pair of variables that appear together in some clause.
    pub fn primal_graph(&self) -> Graph {
        let mut edges = std::collections::BTreeSet::new();
        for cl in &self.clauses {
            let vars: Vec<Vertex> = {
                let mut vs: Vec<Vertex> = cl.iter().map(|l| l.unsigned_abs()).collect();
                vs.sort_unstable();
                vs.dedup();
                vs
            };
            for (i, &u) in vars.iter().enumerate() {
                for &v in &vars[i + 1..] {
                    edges.insert((u, v));
                }
            }
        }
        Graph::new(self.num_vars, edges).expect("primal edges are in range by construction")
    }

    /// Incidence graph: variables are vertices `1..=v`, clauses are vertices
    /// `v+1..=v+c`, each clause adjacent exactly to its variables.
    ///
    /// Returns the graph together with the bipartition tag: the number of
    /// variable vertices.
    pub fn incidence_graph(&self) -> (Graph, usize) {
        let v = self.num_vars;
        let mut edges = std::collections::BTreeSet::new();
        for (i, cl) in self.clauses.iter().enumerate() {
            let cnode = (v + 1 + i) as Vertex;
            for &lit in cl {
                edges.insert((lit.unsigned_abs(), cnode));
            }
        }
        (
            Graph::new(v + self.clauses.len(), edges).expect("incidence edges in range"),
            v,
        )
    }

    /// Parses DIMACS CNF with `c name <index> <label>` comment lines.
    /// Each clause must be terminated by `0`; clauses may span lines.
    pub fn parse(input: &str) -> Result<Self, CnfError> {
        let mut num_vars = None;
        let mut declared_clauses = 0usize;
        let mut clauses: Vec<Vec<i32>> = Vec::new();
        let mut current: Vec<i32> = Vec::new();
        let mut names = BTreeMap::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("c name ") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(CnfError::Parse {
                        line: lineno,
                        msg: "expected `c name <index> <label>`".into(),
                    });
                }
                let var: u32 = toks[0].parse().map_err(|_| CnfError::Parse {
                    line: lineno,
                    msg: format!("bad variable index `{}`", toks[0]),
                })?;
                if names.insert(toks[1].to_string(), var).is_some() {
                    return Err(CnfError::DuplicateName(toks[1].to_string()));
                }
                continue;
            }
            if line.starts_with('c') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("p cnf ") {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(CnfError::Parse {
                        line: lineno,
                        msg: "expected `p cnf <vars> <clauses>`".into(),
                    });
                }
                num_vars = Some(toks[0].parse().map_err(|_| CnfError::Parse {
                    line: lineno,
                    msg: "bad variable count".into(),
                })?);
                declared_clauses = toks[1].parse().map_err(|_| CnfError::Parse {
                    line: lineno,
                    msg: "bad clause count".into(),
                })?;
                continue;
            }
            for tok in line.split_whitespace() {
                let lit: i32 = tok.parse().map_err(|_| CnfError::Parse {
                    line: lineno,
                    msg: format!("bad literal `{}`", tok),
                })?;
                if lit == 0 {
                    clauses.push(std::mem::take(&mut current));
                } else {
                    current.push(lit);
                }
            }
        }
        if !current.is_empty() {
            return Err(CnfError::Parse {
                line: 0,
                msg: "last clause not terminated by 0".into(),
            });
        }
        let num_vars = num_vars.ok_or(CnfError::Parse {
            line: 0,
            msg: "missing `p cnf` header".into(),
        })?;
        if clauses.len() != declared_clauses {
            return Err(CnfError::Parse {
                line: 0,
                msg: format!(
                    "header declares {} clauses, found {}",
                    declared_clauses,
                    clauses.len()
                ),
            });
        }
        CnfFormula::new(num_vars, clauses, names)
    }
}

impl fmt::Display for CnfFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, var) in &self.named_vars {
            writeln!(f, "c name {} {}", var, label)?;
        }
        writeln!(f, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for cl in &self.clauses {
            for lit in cl {
                write!(f, "{} ", lit)?;
            }
            writeln!(f, "0")?;
        }
        Ok(())
    }
}

/// Incremental construction of formulas by the gadget and reduction emitters.
#[derive(Debug, Default, Clone)]
pub struct CnfBuilder {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
    names: BTreeMap<String, u32>,
}

impl CnfBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vars(num_vars: usize) -> Self {
        CnfBuilder {
            num_vars,
            clauses: Vec::new(),
            names: BTreeMap::new(),
        }
    }

    pub fn fresh_var(&mut self) -> u32 {
        self.num_vars += 1;
        self.num_vars as u32
    }

    pub fn fresh_vars(&mut self, k: usize) -> Vec<u32> {
        (0..k).map(|_| self.fresh_var()).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clause(&mut self, lits: &[i32]) {
        debug_assert!(!lits.is_empty());
        self.clauses.push(lits.to_vec());
    }

    /// Unit clause fixing `var` to `value`.
    pub fn fix(&mut self, var: u32, value: bool) {
        let v = var as i32;
        self.clause(&[if value { v } else { -v }]);
    }

    /// Two clauses enforcing `a == b`.
    pub fn equal(&mut self, a: u32, b: u32) {
        let (a, b) = (a as i32, b as i32);
        self.clause(&[-a, b]);
        self.clause(&[a, -b]);
    }

    pub fn name(&mut self, label: impl Into<String>, var: u32) {
        let label = label.into();
        let prev = self.names.insert(label.clone(), var);
        assert!(prev.is_none(), "duplicate name `{}`", label);
    }

    pub fn build(self) -> CnfFormula {
        CnfFormula::new(self.num_vars, self.clauses, self.names)
            .expect("builder maintains the invariants")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(num_vars: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::new(
            num_vars,
            clauses.iter().map(|c| c.to_vec()).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn primal_of_single_clause_is_clique() {
        let g = f(3, &[&[1, 2, 3]]).primal_graph();
        assert_eq!(g.m(), 3);
        assert!(g.has_edge(1, 2) && g.has_edge(2, 3) && g.has_edge(1, 3));
    }

    #[test]
    fn primal_of_unit_clauses_has_no_edges() {
        let g = f(2, &[&[1], &[2]]).primal_graph();
        assert_eq!(g.m(), 0);
    }

    #[test]
    fn primal_of_chain_clauses_is_path() {
        let g = f(3, &[&[1, -2], &[2, 3]]).primal_graph();
        assert_eq!(g.m(), 2);
        assert!(g.has_edge(1, 2) && g.has_edge(2, 3) && !g.has_edge(1, 3));
    }

    #[test]
    fn incidence_star_for_one_clause() {
        let (g, split) = f(2, &[&[1, 2]]).incidence_graph();
        assert_eq!(split, 2);
        assert_eq!(g.n(), 3);
        assert!(g.has_edge(1, 3) && g.has_edge(2, 3) && !g.has_edge(1, 2));
    }

    #[test]
    fn incidence_duplicate_clauses_get_distinct_nodes() {
        let (g, _) = f(1, &[&[1], &[1]]).incidence_graph();
        assert_eq!(g.n(), 3);
        assert!(g.has_edge(1, 2) && g.has_edge(1, 3));
    }

    #[test]
    fn incidence_counts_memberships() {
        let (g, _) = f(3, &[&[1, 2, 3], &[-1, -2]]).incidence_graph();
        assert_eq!(g.n(), 5);
        assert_eq!(g.m(), 5);
    }

    #[test]
    fn rejects_empty_clause_and_bad_literals() {
        assert_eq!(
            CnfFormula::new(1, vec![vec![]], BTreeMap::new()).unwrap_err(),
            CnfError::EmptyClause(0)
        );
        assert!(CnfFormula::new(1, vec![vec![2]], BTreeMap::new()).is_err());
    }

    #[test]
    fn display_parse_round_trip_with_names() {
        let mut b = CnfBuilder::new();
        let x = b.fresh_var();
        let y = b.fresh_var();
        b.clause(&[x as i32, -(y as i32)]);
        b.name("x_0", x);
        b.name("z", y);
        let f = b.build();
        let parsed = CnfFormula::parse(&f.to_string()).unwrap();
        assert_eq!(parsed, f);
    }
}
