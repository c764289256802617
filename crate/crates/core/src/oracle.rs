//! Independent ground-truth oracles: a backtracking SAT solver with unit
//! propagation and exhaustive enumerators for small graph problems.
//!
//! Everything here is deliberately simple and serves as the reference the
//! structured algorithms elsewhere in the crate are tested against. The
//! enumerators hard-cap the instance size and fail loudly instead of running
//! unboundedly.

use num_bigint::BigUint;
use thiserror::Error;

use crate::cnf::CnfFormula;
use crate::graph::Graph;

/// Largest instance the exhaustive enumerators accept.
pub const BRUTE_FORCE_MAX_N: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance has {n} vertices, exhaustive oracle is capped at {max}")]
    TooLarge { n: usize, max: usize },
    #[error("fixed assignment references undeclared variable {0}")]
    UndeclaredVariable(u32),
    #[error("fixed assignment sets variable {0} twice")]
    ContradictoryFix(u32),
}

/// Decides satisfiability of `f` under a fixed partial assignment.
///
/// Chronological backtracking with two-watched-literal unit propagation;
/// returns true iff some total extension of `fixed` satisfies every clause.
pub fn sat_oracle(f: &CnfFormula, fixed: &[(u32, bool)]) -> Result<bool, OracleError> {
    for &(v, _) in fixed {
        if v == 0 || v as usize > f.num_vars() {
            return Err(OracleError::UndeclaredVariable(v));
        }
    }
    let mut seen = vec![false; f.num_vars() + 1];
    for &(v, _) in fixed {
        if seen[v as usize] {
            return Err(OracleError::ContradictoryFix(v));
        }
        seen[v as usize] = true;
    }
    Ok(Solver::new(f).solve(fixed))
}

struct TrailEntry {
    lit: i32,
    decision: bool,
    flipped: bool,
}

struct Solver {
    nvars: usize,
    clauses: Vec<Vec<i32>>,
    /// For each literal code, the clauses currently watching it.
    watches: Vec<Vec<usize>>,
    assign: Vec<i8>,
    trail: Vec<TrailEntry>,
    prop_head: usize,
    units: Vec<i32>,
    trivially_false: bool,
}

fn code(lit: i32) -> usize {
    let v = lit.unsigned_abs() as usize - 1;
    2 * v + usize::from(lit < 0)
}

impl Solver {
    fn new(f: &CnfFormula) -> Self {
        let nvars = f.num_vars();
        let mut clauses = Vec::new();
        let mut units = Vec::new();
        let mut trivially_false = false;
        'outer: for raw in f.clauses() {
            let mut cl = raw.clone();
            cl.sort_unstable_by_key(|l| (l.unsigned_abs(), *l < 0));
            cl.dedup();
            for w in cl.windows(2) {
                if w[0] == -w[1] {
                    continue 'outer; // tautology
                }
            }
            match cl.len() {
                0 => trivially_false = true,
                1 => units.push(cl[0]),
                _ => clauses.push(cl),
            }
        }
        let mut watches = vec![Vec::new(); 2 * nvars];
        for (ci, cl) in clauses.iter().enumerate() {
            watches[code(cl[0])].push(ci);
            watches[code(cl[1])].push(ci);
        }
        Solver {
            nvars,
            clauses,
            watches,
            assign: vec![0; nvars + 1],
            trail: Vec::new(),
            prop_head: 0,
            units,
            trivially_false,
        }
    }

    fn value(&self, lit: i32) -> i8 {
        let a = self.assign[lit.unsigned_abs() as usize];
        if lit > 0 {
            a
        } else {
            -a
        }
    }

    fn enqueue(&mut self, lit: i32, decision: bool) -> bool {
        match self.value(lit) {
            1 => true,
            -1 => false,
            _ => {
                self.assign[lit.unsigned_abs() as usize] = if lit > 0 { 1 } else { -1 };
                self.trail.push(TrailEntry {
                    lit,
                    decision,
                    flipped: false,
                });
                true
            }
        }
    }

    fn propagate(&mut self) -> bool {
        while self.prop_head < self.trail.len() {
            let lit = self.trail[self.prop_head].lit;
            self.prop_head += 1;
            let falsified = -lit;
            let watch_code = code(falsified);
            let mut ws = std::mem::take(&mut self.watches[watch_code]);
            let mut i = 0;
            while i < ws.len() {
                let ci = ws[i];
                // Keep the falsified literal at slot 1.
                if self.clauses[ci][0] == falsified {
                    self.clauses[ci].swap(0, 1);
                }
                if self.value(self.clauses[ci][0]) == 1 {
                    i += 1;
                    continue;
                }
                // Look for a replacement watch.
                let mut moved = false;
                for k in 2..self.clauses[ci].len() {
                    if self.value(self.clauses[ci][k]) != -1 {
                        self.clauses[ci].swap(1, k);
                        let new_code = code(self.clauses[ci][1]);
                        self.watches[new_code].push(ci);
                        ws.swap_remove(i);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                // Clause is unit or conflicting on its first literal.
                let first = self.clauses[ci][0];
                if !self.enqueue(first, false) {
                    self.watches[watch_code] = ws;
                    return false;
                }
                i += 1;
            }
            self.watches[watch_code] = ws;
        }
        true
    }

    /// Undo through the most recent unflipped decision and try its
    /// complement; false when the search space is exhausted.
    fn backtrack(&mut self) -> bool {
        while let Some(entry) = self.trail.pop() {
            self.assign[entry.lit.unsigned_abs() as usize] = 0;
            if entry.decision && !entry.flipped {
                let lit = -entry.lit;
                self.assign[lit.unsigned_abs() as usize] = if lit > 0 { 1 } else { -1 };
                self.trail.push(TrailEntry {
                    lit,
                    decision: true,
                    flipped: true,
                });
                self.prop_head = self.trail.len() - 1;
                return true;
            }
        }
        false
    }

    fn pick_branch(&self) -> Option<i32> {
        (1..=self.nvars as i32).find(|&v| self.assign[v as usize] == 0).map(|v| -v)
    }

    fn solve(&mut self, fixed: &[(u32, bool)]) -> bool {
        if self.trivially_false {
            return false;
        }
        let units = std::mem::take(&mut self.units);
        for lit in units {
            if !self.enqueue(lit, false) {
                return false;
            }
        }
        for &(v, val) in fixed {
            let lit = if val { v as i32 } else { -(v as i32) };
            if !self.enqueue(lit, false) {
                return false;
            }
        }
        loop {
            if self.propagate() {
                match self.pick_branch() {
                    None => return true,
                    Some(lit) => {
                        self.enqueue(lit, true);
                    }
                }
            } else if !self.backtrack() {
                return false;
            }
        }
    }
}

/// Problems the exhaustive oracle answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteForceProblem {
    ThreeCol,
    CountDs,
    MaxIs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteForceAnswer {
    Bool(bool),
    Coefficients(Vec<BigUint>),
    Size(usize),
}

pub fn brute_force_oracle(
    problem: BruteForceProblem,
    g: &Graph,
) -> Result<BruteForceAnswer, OracleError> {
    if g.n() > BRUTE_FORCE_MAX_N {
        return Err(OracleError::TooLarge {
            n: g.n(),
            max: BRUTE_FORCE_MAX_N,
        });
    }
    Ok(match problem {
        BruteForceProblem::ThreeCol => BruteForceAnswer::Bool(brute_three_col(g)),
        BruteForceProblem::CountDs => BruteForceAnswer::Coefficients(brute_count_ds(g)),
        BruteForceProblem::MaxIs => BruteForceAnswer::Size(brute_max_is(g)),
    })
}

/// Existence of a proper 3-coloring, by backtracking over vertices in order.
pub fn brute_three_col(g: &Graph) -> bool {
    fn go(g: &Graph, colors: &mut Vec<u8>, adj: &[Vec<u32>]) -> bool {
        let u = colors.len() + 1;
        if u > g.n() {
            return true;
        }
        for c in 0..3u8 {
            let ok = adj[u]
                .iter()
                .filter(|&&v| (v as usize) < u)
                .all(|&v| colors[v as usize - 1] != c);
            if ok {
                colors.push(c);
                if go(g, colors, adj) {
                    return true;
                }
                colors.pop();
            }
        }
        false
    }
    let adj = g.adjacency();
    go(g, &mut Vec::new(), &adj)
}

/// Dominating-set counts by cardinality: entry `i` is the number of
/// dominating sets of size `i`, enumerated over all `2^n` subsets.
pub fn brute_count_ds(g: &Graph) -> Vec<BigUint> {
    let n = g.n();
    let mut closed = vec![0u64; n];
    for v in 0..n {
        closed[v] |= 1 << v;
    }
    for (u, v) in g.edges() {
        closed[u as usize - 1] |= 1 << (v - 1);
        closed[v as usize - 1] |= 1 << (u - 1);
    }
    let full: u64 = if n == 64 { !0 } else { (1 << n) - 1 };
    let mut counts = vec![0u64; n + 1];
    for subset in 0..(1u64 << n) {
        let mut dominated = 0u64;
        let mut rest = subset;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            dominated |= closed[v];
            rest &= rest - 1;
        }
        if dominated == full {
            counts[subset.count_ones() as usize] += 1;
        }
    }
    counts.into_iter().map(BigUint::from).collect()
}

/// Maximum independent-set cardinality over all subsets.
pub fn brute_max_is(g: &Graph) -> usize {
    let n = g.n();
    let mut adj = vec![0u64; n];
    for (u, v) in g.edges() {
        adj[u as usize - 1] |= 1 << (v - 1);
        adj[v as usize - 1] |= 1 << (u - 1);
    }
    let mut best = 0;
    for subset in 0..(1u64 << n) {
        if subset.count_ones() as usize <= best {
            continue;
        }
        let mut ok = true;
        let mut rest = subset;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            if adj[v] & subset != 0 {
                ok = false;
                break;
            }
            rest &= rest - 1;
        }
        if ok {
            best = subset.count_ones() as usize;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::CnfBuilder;
    use std::collections::BTreeMap;

    fn formula(num_vars: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::new(
            num_vars,
            clauses.iter().map(|c| c.to_vec()).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn enumerate_sat(f: &CnfFormula, fixed: &[(u32, bool)]) -> bool {
        let n = f.num_vars();
        'outer: for bits in 0..(1u32 << n) {
            for &(v, val) in fixed {
                if ((bits >> (v - 1)) & 1 == 1) != val {
                    continue 'outer;
                }
            }
            let ok = f.clauses().iter().all(|cl| {
                cl.iter().any(|&l| {
                    let val = (bits >> (l.unsigned_abs() - 1)) & 1 == 1;
                    (l > 0) == val
                })
            });
            if ok {
                return true;
            }
        }
        false
    }

    #[test]
    fn trivial_units() {
        assert!(sat_oracle(&formula(1, &[&[1]]), &[]).unwrap());
        assert!(!sat_oracle(&formula(1, &[&[1], &[-1]]), &[]).unwrap());
    }

    #[test]
    fn fixed_assignment_blocks_extension() {
        let f = formula(3, &[&[1, 2], &[-1, 2], &[-2, 3]]);
        assert!(!sat_oracle(&f, &[(3, false)]).unwrap());
        assert!(sat_oracle(&f, &[]).unwrap());
    }

    #[test]
    fn rejects_bad_fixed_assignments() {
        let f = formula(2, &[&[1]]);
        assert_eq!(
            sat_oracle(&f, &[(5, true)]).unwrap_err(),
            OracleError::UndeclaredVariable(5)
        );
        assert_eq!(
            sat_oracle(&f, &[(1, true), (1, true)]).unwrap_err(),
            OracleError::ContradictoryFix(1)
        );
    }

    #[test]
    fn agrees_with_exhaustive_enumeration() {
        // Small pseudo-random 3-CNF instances, cross-checked exactly.
        let mut seed = 0x5eed_1234_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as u32
        };
        for _ in 0..200 {
            let nv = 3 + (next() % 8) as usize;
            let nc = 2 + (next() % 14) as usize;
            let mut b = CnfBuilder::with_vars(nv);
            for _ in 0..nc {
                let len = 1 + (next() % 3) as usize;
                let mut cl = Vec::new();
                for _ in 0..len {
                    let v = 1 + (next() % nv as u32) as i32;
                    cl.push(if next() % 2 == 0 { v } else { -v });
                }
                b.clause(&cl);
            }
            let f = b.build();
            assert_eq!(
                sat_oracle(&f, &[]).unwrap(),
                enumerate_sat(&f, &[]),
                "disagreement on {}",
                f
            );
        }
    }

    #[test]
    fn brute_three_col_known_cases() {
        assert!(!brute_three_col(&Graph::complete(4)));
        assert!(brute_three_col(&Graph::complete(3)));
        assert!(brute_three_col(&Graph::cycle(5)));
    }

    #[test]
    fn brute_count_ds_path3() {
        let q = brute_count_ds(&Graph::path(3));
        let expect: Vec<BigUint> =
            [0u32, 1, 3, 1].iter().map(|&x| BigUint::from(x)).collect();
        assert_eq!(q, expect);
    }

    #[test]
    fn brute_max_is_cases() {
        assert_eq!(brute_max_is(&Graph::path(3)), 2);
        assert_eq!(brute_max_is(&Graph::complete(3)), 1);
        assert_eq!(brute_max_is(&Graph::empty(5)), 5);
    }

    #[test]
    fn size_guard_fires() {
        let g = Graph::empty(26);
        assert!(matches!(
            brute_force_oracle(BruteForceProblem::CountDs, &g),
            Err(OracleError::TooLarge { .. })
        ));
    }
}
