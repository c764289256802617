//! Answer-preserving reductions between bounded-width problems that
//! transport the instance's decomposition along with the instance, each
//! emitting a width certificate.
//!
//! Fresh vertices and variables are always numbered after the existing ones
//! in construction order, so outputs are byte-deterministic.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cnf::{CnfBuilder, CnfFormula};
use crate::decomp::{
    extend_clique_attached, lift_via_deconstruction, AnyDecomposition, Deconstruction,
    TransformError,
};
use crate::graph::{Graph, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReduceError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("clause {index} has {len} literals, wider than k = {k}")]
    ClauseTooWide { index: usize, len: usize, k: usize },
    #[error("need k >= 3, got {0}")]
    BadK(usize),
    #[error("graph has an isolated vertex ({0})")]
    IsolatedVertex(Vertex),
    #[error("the formula's incidence graph is disconnected; the global palette cannot be transported")]
    DisconnectedIncidence,
}

/// Width bookkeeping of one reduction: the transported decomposition's
/// measure never exceeds `bound_constant * (input_width + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WidthCertificate {
    pub input_width: i64,
    pub output_width: i64,
    pub bound_constant: i64,
}

impl WidthCertificate {
    fn checked(input_width: i64, output_width: i64, bound_constant: i64) -> Self {
        assert!(
            output_width <= bound_constant * (input_width + 1),
            "certificate violated: {} > {} * ({} + 1)",
            output_width,
            bound_constant,
            input_width
        );
        WidthCertificate {
            input_width,
            output_width,
            bound_constant,
        }
    }

    /// `c widthcert <in> <out> <const>` provenance line.
    pub fn to_line(&self) -> String {
        format!(
            "c widthcert {} {} {}\n",
            self.input_width, self.output_width, self.bound_constant
        )
    }
}

#[derive(Debug, Clone)]
pub struct ReductionOutput<I> {
    pub instance: I,
    pub decomposition: AnyDecomposition,
    pub certificate: WidthCertificate,
}

/// A graph instance with a cardinality threshold (IS / VC / DS queries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdInstance {
    pub graph: Graph,
    pub threshold: usize,
}

impl ThresholdInstance {
    /// Graph file with a `c threshold <k>` line prepended.
    pub fn serialize(&self) -> String {
        format!("c threshold {}\n{}", self.threshold, self.graph.to_dimacs())
    }

    pub fn parse(input: &str) -> Result<Self, TransformError> {
        let mut threshold = None;
        for (i, raw) in input.lines().enumerate() {
            if let Some(rest) = raw.trim().strip_prefix("c threshold ") {
                threshold = Some(rest.trim().parse().map_err(|_| TransformError::Parse {
                    line: i + 1,
                    msg: "bad threshold".into(),
                })?);
            }
        }
        let graph = Graph::parse(input).map_err(|e| TransformError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(ThresholdInstance {
            graph,
            threshold: threshold.ok_or(TransformError::Parse {
                line: 0,
                msg: "missing `c threshold` line".into(),
            })?,
        })
    }
}

// ---------------------------------------------------------------------------
// CNF-SAT -> k-SAT (primal graphs)
// ---------------------------------------------------------------------------

/// Splits wide clauses into chains of width-`k` clauses over fresh linking
/// variables; the decomposition extends over the per-clause chains, which
/// attach to the clause's clique.
pub fn cnf_to_ksat(
    f: &CnfFormula,
    k: usize,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<CnfFormula>, ReduceError> {
    if k < 3 {
        return Err(ReduceError::BadK(k));
    }
    let mut b = CnfBuilder::with_vars(f.num_vars());
    let mut max_chain = 0usize;
    for cl in f.clauses() {
        if cl.len() <= k {
            b.clause(cl);
            continue;
        }
        // (l_1 .. l_{k-1} x), (~x l .. x'), ..., (~x l_rest).
        let mut rest = &cl[..];
        let mut link: Option<u32> = None;
        let mut chain = 0usize;
        while !rest.is_empty() {
            let mut clause: Vec<i32> = Vec::with_capacity(k);
            if let Some(x) = link {
                clause.push(-(x as i32));
            }
            let room = k - clause.len();
            if rest.len() <= room {
                clause.extend_from_slice(rest);
                rest = &[];
            } else {
                clause.extend_from_slice(&rest[..room - 1]);
                rest = &rest[room - 1..];
                let x = b.fresh_var();
                clause.push(x as i32);
                link = Some(x);
                chain += 1;
            }
            b.clause(&clause);
        }
        max_chain = max_chain.max(chain);
    }
    for (label, &var) in f.named_vars() {
        b.name(label.clone(), var);
    }
    let out = b.build();

    let g = f.primal_graph();
    let input_width = d.measure(&g)?;
    // Union of old and new primal graphs, so the old decomposition extends.
    let out_primal = out.primal_graph();
    let mut union_edges: BTreeSet<(Vertex, Vertex)> = g.edges().collect();
    union_edges.extend(out_primal.edges());
    let g2 = Graph::new(out.num_vars(), union_edges).expect("union primal is well-formed");
    let decomposition = if out.num_vars() == f.num_vars() {
        d.clone()
    } else {
        extend_clique_attached(d.kind(), &g, &g2, d, max_chain)?
    };
    let output_width = decomposition.measure(&out_primal)?;
    Ok(ReductionOutput {
        instance: out,
        decomposition,
        certificate: WidthCertificate::checked(input_width, output_width, 2),
    })
}

// ---------------------------------------------------------------------------
// k-SAT decomposition conversion between primal and incidence graphs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvertDirection {
    PrimalToIncidence,
    IncidenceToPrimal,
}

/// The natural width-`k` deconstruction of a formula's primal graph into
/// its incidence graph: a singleton bag per variable, a bag per clause
/// holding the clause's variables.
pub fn primal_into_incidence_deconstruction(f: &CnfFormula) -> Deconstruction {
    let (host, split) = f.incidence_graph();
    let mut bags: Vec<BTreeSet<Vertex>> = (1..=split as Vertex)
        .map(|v| [v].into_iter().collect())
        .collect();
    for cl in f.clauses() {
        bags.push(cl.iter().map(|l| l.unsigned_abs()).collect());
    }
    Deconstruction { host, bags }
}

/// Same formula, decomposition moved to the other derived graph.
pub fn ksat_decomp_convert(
    direction: ConvertDirection,
    f: &CnfFormula,
    k: usize,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<CnfFormula>, ReduceError> {
    for (i, cl) in f.clauses().iter().enumerate() {
        let width = {
            let mut vs: Vec<u32> = cl.iter().map(|l| l.unsigned_abs()).collect();
            vs.sort_unstable();
            vs.dedup();
            vs.len()
        };
        if width > k {
            return Err(ReduceError::ClauseTooWide {
                index: i,
                len: width,
                k,
            });
        }
    }
    let primal = f.primal_graph();
    let (incidence, split) = f.incidence_graph();
    match direction {
        ConvertDirection::PrimalToIncidence => {
            let input_width = d.measure(&primal)?;
            // Attach each clause vertex to the clique of its variables.
            let mut union_edges: BTreeSet<(Vertex, Vertex)> = primal.edges().collect();
            union_edges.extend(incidence.edges());
            let g2 = Graph::new(incidence.n(), union_edges).expect("well-formed");
            let decomposition = extend_clique_attached(d.kind(), &primal, &g2, d, 1)?;
            let output_width = decomposition.measure(&incidence)?;
            let _ = split;
            Ok(ReductionOutput {
                instance: f.clone(),
                decomposition,
                certificate: WidthCertificate::checked(input_width, output_width, 1),
            })
        }
        ConvertDirection::IncidenceToPrimal => {
            let input_width = d.measure(&incidence)?;
            let dc = primal_into_incidence_deconstruction(f);
            let decomposition = lift_via_deconstruction(d.kind(), &primal, &dc, d)?;
            let output_width = decomposition.measure(&primal)?;
            Ok(ReductionOutput {
                instance: f.clone(),
                decomposition,
                certificate: WidthCertificate::checked(input_width, output_width, k as i64),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// 3-SAT -> 3Coloring (incidence decomposition)
// ---------------------------------------------------------------------------

/// Vertex ids of the coloring instance produced by [`sat3_to_3col`].
pub struct ColoringLayout {
    pub num_vars: usize,
    pub num_clauses: usize,
}

impl ColoringLayout {
    pub fn literal(&self, lit: i32) -> Vertex {
        let v = lit.unsigned_abs();
        if lit > 0 {
            2 * v - 1
        } else {
            2 * v
        }
    }

    pub fn gadget_base(&self, clause: usize) -> Vertex {
        (2 * self.num_vars + 6 * clause) as Vertex
    }

    pub fn palette_true(&self) -> Vertex {
        (2 * self.num_vars + 6 * self.num_clauses + 1) as Vertex
    }

    pub fn palette_false(&self) -> Vertex {
        self.palette_true() + 1
    }

    pub fn palette_base(&self) -> Vertex {
        self.palette_true() + 2
    }
}

/// Garey-Johnson-Stockmeyer reduction: a 2-vertex gadget per variable, a
/// 6-vertex OR-gadget per clause, and one global palette triangle; the
/// output graph is 3-colorable exactly when the formula is satisfiable.
///
/// Requires a connected incidence graph (the palette triangle sits in every
/// bag of the transporting deconstruction).
pub fn sat3_to_3col(
    f: &CnfFormula,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<Graph>, ReduceError> {
    for (i, cl) in f.clauses().iter().enumerate() {
        if cl.len() != 3 {
            return Err(ReduceError::ClauseTooWide {
                index: i,
                len: cl.len(),
                k: 3,
            });
        }
    }
    let (incidence, _) = f.incidence_graph();
    if incidence.n() > 0 && incidence.components().len() != 1 {
        return Err(ReduceError::DisconnectedIncidence);
    }
    let input_width = d.measure(&incidence)?;
    let lay = ColoringLayout {
        num_vars: f.num_vars(),
        num_clauses: f.clauses().len(),
    };
    let n_out = 2 * f.num_vars() + 6 * f.clauses().len() + 3;
    let (t, fa, ba) = (lay.palette_true(), lay.palette_false(), lay.palette_base());
    let mut edges: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
    let mut add = |a: Vertex, b: Vertex| {
        edges.insert((a.min(b), a.max(b)));
    };
    add(t, fa);
    add(fa, ba);
    add(t, ba);
    for i in 1..=f.num_vars() as Vertex {
        add(2 * i - 1, 2 * i);
        add(2 * i - 1, ba);
        add(2 * i, ba);
    }
    for (j, cl) in f.clauses().iter().enumerate() {
        let g0 = lay.gadget_base(j);
        let (p, q, r) = (g0 + 1, g0 + 2, g0 + 3);
        let (p2, q2, r2) = (g0 + 4, g0 + 5, g0 + 6);
        for (a, b) in [(p, q), (q, r), (p, r), (p2, q2), (q2, r2), (p2, r2)] {
            add(a, b);
        }
        add(p, lay.literal(cl[0]));
        add(q, lay.literal(cl[1]));
        add(p2, r);
        add(q2, lay.literal(cl[2]));
        // The clause output must be colored like True.
        add(r2, fa);
        add(r2, ba);
    }
    let out = Graph::new(n_out, edges).expect("coloring instance is well-formed");

    // Width-11 deconstruction into the incidence graph: variable and clause
    // bags plus the palette everywhere.
    let palette = [t, fa, ba];
    let mut bags: Vec<BTreeSet<Vertex>> = Vec::new();
    for i in 1..=f.num_vars() as Vertex {
        bags.push([2 * i - 1, 2 * i].iter().chain(&palette).copied().collect());
    }
    for j in 0..f.clauses().len() {
        let g0 = lay.gadget_base(j);
        bags.push((1..=6).map(|o| g0 + o).chain(palette).collect());
    }
    let dc = Deconstruction {
        host: incidence,
        bags,
    };
    let decomposition = lift_via_deconstruction(d.kind(), &out, &dc, d)?;
    let output_width = decomposition.measure(&out)?;
    Ok(ReductionOutput {
        instance: out,
        decomposition,
        certificate: WidthCertificate::checked(input_width, output_width, 11),
    })
}

// ---------------------------------------------------------------------------
// 3Coloring -> 3-SAT (primal decomposition)
// ---------------------------------------------------------------------------

/// Three variables per vertex (one per color) with exactly-one clauses, and
/// three exclusion clauses per edge; transported through the width-6
/// deconstruction that maps each vertex to its variable triple.
pub fn threecol_to_3sat(
    g: &Graph,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<CnfFormula>, ReduceError> {
    let input_width = d.measure(g)?;
    let mut b = CnfBuilder::with_vars(3 * g.n());
    let var = |v: Vertex, c: usize| 3 * (v as i32 - 1) + c as i32 + 1;
    for v in g.vertices() {
        let (x, y, z) = (var(v, 0), var(v, 1), var(v, 2));
        b.clause(&[x, y, z]);
        b.clause(&[-x, -y]);
        b.clause(&[-y, -z]);
        b.clause(&[-z, -x]);
    }
    for (u, v) in g.edges() {
        for c in 0..3 {
            b.clause(&[-var(u, c), -var(v, c)]);
        }
    }
    let out = b.build();
    let primal = out.primal_graph();
    let bags: Vec<BTreeSet<Vertex>> = g
        .vertices()
        .map(|v| (0..3).map(|c| var(v, c) as Vertex).collect())
        .collect();
    let dc = Deconstruction {
        host: g.clone(),
        bags,
    };
    let decomposition = if g.n() == 0 {
        d.clone()
    } else {
        lift_via_deconstruction(d.kind(), &primal, &dc, d)?
    };
    let output_width = decomposition.measure(&primal)?;
    Ok(ReductionOutput {
        instance: out,
        decomposition,
        certificate: WidthCertificate::checked(input_width, output_width, 6),
    })
}

// ---------------------------------------------------------------------------
// 3-SAT -> Independent Set (incidence decomposition)
// ---------------------------------------------------------------------------

/// Two adjacent vertices per variable, a clique per clause labeled by its
/// literal occurrences, occurrence-to-literal wires; the formula is
/// satisfiable exactly when the output graph has an independent set with as
/// many vertices as there are variables and clauses.
pub fn sat3_to_is(
    f: &CnfFormula,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<ThresholdInstance>, ReduceError> {
    for (i, cl) in f.clauses().iter().enumerate() {
        if cl.len() > 3 {
            return Err(ReduceError::ClauseTooWide {
                index: i,
                len: cl.len(),
                k: 3,
            });
        }
    }
    let (incidence, _) = f.incidence_graph();
    let input_width = d.measure(&incidence)?;
    let v = f.num_vars();
    let mut edges: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
    let mut add = |a: Vertex, b: Vertex| {
        edges.insert((a.min(b), a.max(b)));
    };
    for i in 1..=v as Vertex {
        add(2 * i - 1, 2 * i);
    }
    let lit_vertex = |l: i32| -> Vertex {
        let x = l.unsigned_abs();
        if l > 0 {
            2 * x - 1
        } else {
            2 * x
        }
    };
    let mut occ_base = 2 * v as Vertex;
    let mut clause_occs: Vec<Vec<Vertex>> = Vec::new();
    for cl in f.clauses() {
        let occs: Vec<Vertex> = (1..=cl.len() as Vertex).map(|o| occ_base + o).collect();
        for (i, &a) in occs.iter().enumerate() {
            for &b in &occs[i + 1..] {
                add(a, b);
            }
        }
        for (&o, &l) in occs.iter().zip(cl) {
            add(o, lit_vertex(l));
        }
        occ_base += cl.len() as Vertex;
        clause_occs.push(occs);
    }
    let out = Graph::new(occ_base as usize, edges).expect("IS instance is well-formed");
    let threshold = v + f.clauses().len();

    let mut bags: Vec<BTreeSet<Vertex>> = (1..=v as Vertex)
        .map(|i| [2 * i - 1, 2 * i].into_iter().collect())
        .collect();
    for occs in &clause_occs {
        bags.push(occs.iter().copied().collect());
    }
    let dc = Deconstruction {
        host: incidence,
        bags,
    };
    let decomposition = lift_via_deconstruction(d.kind(), &out, &dc, d)?;
    let output_width = decomposition.measure(&out)?;
    Ok(ReductionOutput {
        instance: ThresholdInstance {
            graph: out,
            threshold,
        },
        decomposition,
        certificate: WidthCertificate::checked(input_width, output_width, 5),
    })
}

// ---------------------------------------------------------------------------
// Independent Set -> Vertex Cover, Vertex Cover -> Dominating Set
// ---------------------------------------------------------------------------

/// Complements the threshold: a size-`k` independent set exists exactly
/// when a vertex cover of size `n - k` does. Graph and decomposition pass
/// through unchanged.
pub fn is_to_vc(
    g: &Graph,
    k: usize,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<ThresholdInstance>, ReduceError> {
    let w = d.measure(g)?;
    Ok(ReductionOutput {
        instance: ThresholdInstance {
            graph: g.clone(),
            threshold: g.n().saturating_sub(k),
        },
        decomposition: d.clone(),
        certificate: WidthCertificate::checked(w, w, 1),
    })
}

/// Adds one vertex per edge adjacent to both endpoints (the edge itself is
/// kept): the new graph has a dominating set of size `k` exactly when the
/// original has a vertex cover of size `k`. Rejected on graphs with
/// isolated vertices, which can never be covered by this correspondence.
pub fn vc_to_ds(
    g: &Graph,
    k: usize,
    d: &AnyDecomposition,
) -> Result<ReductionOutput<ThresholdInstance>, ReduceError> {
    let adj = g.adjacency();
    for v in g.vertices() {
        if adj[v as usize].is_empty() {
            return Err(ReduceError::IsolatedVertex(v));
        }
    }
    let input_width = d.measure(g)?;
    let mut edges: BTreeSet<(Vertex, Vertex)> = g.edges().collect();
    for (i, (u, v)) in g.edges().enumerate() {
        let w = (g.n() + 1 + i) as Vertex;
        edges.insert((u, w));
        edges.insert((v, w));
    }
    let out = Graph::new(g.n() + g.m(), edges).expect("DS instance is well-formed");
    let decomposition = extend_clique_attached(d.kind(), g, &out, d, 1)?;
    let output_width = decomposition.measure(&out)?;
    Ok(ReductionOutput {
        instance: ThresholdInstance {
            graph: out,
            threshold: k,
        },
        decomposition,
        certificate: WidthCertificate::checked(input_width, output_width, 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{dfs_tdd, td_to_path};
    use crate::oracle::{brute_count_ds, brute_max_is, brute_three_col, sat_oracle};
    use num_traits::Zero;
    use std::collections::BTreeMap;

    fn formula(num_vars: usize, clauses: &[&[i32]]) -> CnfFormula {
        CnfFormula::new(
            num_vars,
            clauses.iter().map(|c| c.to_vec()).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn primal_tdd(f: &CnfFormula) -> AnyDecomposition {
        AnyDecomposition::TreeDepth(dfs_tdd(&f.primal_graph()))
    }

    fn incidence_tdd(f: &CnfFormula) -> AnyDecomposition {
        AnyDecomposition::TreeDepth(dfs_tdd(&f.incidence_graph().0))
    }

    fn ds_at_most(g: &Graph, k: usize) -> bool {
        brute_count_ds(g)[..=k.min(g.n())].iter().any(|q| !q.is_zero())
    }

    fn vc_at_most(g: &Graph, k: usize) -> bool {
        g.n() - brute_max_is(g) <= k
    }

    #[test]
    fn cnf_to_ksat_splits_wide_clause() {
        let f = formula(4, &[&[1, 2, 3, 4]]);
        let out = cnf_to_ksat(&f, 3, &primal_tdd(&f)).unwrap();
        assert_eq!(out.instance.num_vars(), 5);
        assert_eq!(
            out.instance.clauses(),
            &[vec![1, 2, 5], vec![-5, 3, 4]][..]
        );
        assert_eq!(
            sat_oracle(&f, &[]).unwrap(),
            sat_oracle(&out.instance, &[]).unwrap()
        );
    }

    #[test]
    fn cnf_to_ksat_keeps_narrow_formulas() {
        let f = formula(3, &[&[1, -2], &[2, 3]]);
        let out = cnf_to_ksat(&f, 3, &primal_tdd(&f)).unwrap();
        assert_eq!(out.instance, f);
    }

    #[test]
    fn cnf_to_ksat_equisatisfiable_randomized() {
        let mut seed = 0xabcd_ef01_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as usize
        };
        for _ in 0..60 {
            let nv = 3 + next() % 6;
            let nc = 1 + next() % 5;
            let mut clauses = Vec::new();
            for _ in 0..nc {
                let len = 1 + next() % 6;
                let cl: Vec<i32> = (0..len)
                    .map(|_| {
                        let v = 1 + (next() % nv) as i32;
                        if next() % 2 == 0 {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                clauses.push(cl);
            }
            let f = CnfFormula::new(nv, clauses, BTreeMap::new()).unwrap();
            let out = cnf_to_ksat(&f, 3, &primal_tdd(&f)).unwrap();
            assert!(out.instance.clauses().iter().all(|c| c.len() <= 3));
            assert_eq!(
                sat_oracle(&f, &[]).unwrap(),
                sat_oracle(&out.instance, &[]).unwrap(),
                "{}",
                f
            );
        }
    }

    #[test]
    fn decomp_convert_round_trip() {
        let f = formula(3, &[&[1, 2, 3], &[-1, -2]]);
        let d = primal_tdd(&f);
        let there = ksat_decomp_convert(ConvertDirection::PrimalToIncidence, &f, 3, &d).unwrap();
        let back = ksat_decomp_convert(
            ConvertDirection::IncidenceToPrimal,
            &f,
            3,
            &there.decomposition,
        )
        .unwrap();
        assert_eq!(back.instance, f);
        assert!(back.certificate.output_width <= 3 * (there.certificate.output_width + 1));
    }

    #[test]
    fn decomp_convert_rejects_wide_clause() {
        let f = formula(4, &[&[1, 2, 3, 4]]);
        let d = primal_tdd(&f);
        assert!(matches!(
            ksat_decomp_convert(ConvertDirection::PrimalToIncidence, &f, 3, &d),
            Err(ReduceError::ClauseTooWide { .. })
        ));
    }

    #[test]
    fn sat3_to_3col_positive_and_negative() {
        let f = formula(1, &[&[1, 1, 1]]);
        let out = sat3_to_3col(&f, &incidence_tdd(&f)).unwrap();
        assert!(brute_three_col(&out.instance));

        let g = formula(1, &[&[1, 1, 1], &[-1, -1, -1]]);
        let out = sat3_to_3col(&g, &incidence_tdd(&g)).unwrap();
        assert!(!brute_three_col(&out.instance));
    }

    #[test]
    fn sat3_to_3col_random_agreement() {
        let mut seed = 0x1357_9bdf_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as usize
        };
        let mut done = 0;
        while done < 25 {
            let nv = 2 + next() % 3;
            let nc = 1 + next() % 3;
            let clauses: Vec<Vec<i32>> = (0..nc)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            let v = 1 + (next() % nv) as i32;
                            if next() % 2 == 0 {
                                v
                            } else {
                                -v
                            }
                        })
                        .collect()
                })
                .collect();
            let f = CnfFormula::new(nv, clauses, BTreeMap::new()).unwrap();
            let res = sat3_to_3col(&f, &incidence_tdd(&f));
            let Ok(out) = res else {
                continue; // disconnected incidence graph; skip
            };
            assert_eq!(
                sat_oracle(&f, &[]).unwrap(),
                brute_three_col(&out.instance),
                "{}",
                f
            );
            done += 1;
        }
    }

    #[test]
    fn threecol_to_3sat_known_graphs() {
        for (g, expect) in [
            (Graph::complete(3), true),
            (Graph::complete(4), false),
            (Graph::cycle(5), true),
        ] {
            let d = AnyDecomposition::TreeDepth(dfs_tdd(&g));
            let out = threecol_to_3sat(&g, &d).unwrap();
            assert_eq!(sat_oracle(&out.instance, &[]).unwrap(), expect);
            assert_eq!(out.certificate.bound_constant, 6);
        }
    }

    #[test]
    fn threecol_to_3sat_path_kind() {
        let g = Graph::cycle(4);
        let tdd = dfs_tdd(&g);
        let pd = td_to_path(&g, &tdd).unwrap();
        let out = threecol_to_3sat(&g, &AnyDecomposition::TreeLike(pd)).unwrap();
        assert!(sat_oracle(&out.instance, &[]).unwrap());
        assert!(matches!(out.decomposition, AnyDecomposition::TreeLike(ref t) if t.is_path));
    }

    #[test]
    fn sat3_to_is_examples() {
        let f = formula(3, &[&[1, 2, 3]]);
        let out = sat3_to_is(&f, &incidence_tdd(&f)).unwrap();
        assert_eq!(out.instance.graph.n(), 9);
        assert_eq!(out.instance.threshold, 4);
        assert!(brute_max_is(&out.instance.graph) >= out.instance.threshold);

        let g = formula(1, &[&[1], &[-1]]);
        let out = sat3_to_is(&g, &incidence_tdd(&g)).unwrap();
        assert!(brute_max_is(&out.instance.graph) < out.instance.threshold);
    }

    #[test]
    fn is_to_vc_examples() {
        let p3 = Graph::path(3);
        let d = AnyDecomposition::TreeDepth(dfs_tdd(&p3));
        let out = is_to_vc(&p3, 2, &d).unwrap();
        assert_eq!(out.instance.threshold, 1);
        assert!(vc_at_most(&out.instance.graph, out.instance.threshold));
        let k3 = Graph::complete(3);
        let d = AnyDecomposition::TreeDepth(dfs_tdd(&k3));
        let out = is_to_vc(&k3, 1, &d).unwrap();
        assert_eq!(out.instance.threshold, 2);
        let out = is_to_vc(&k3, 3, &d).unwrap();
        assert_eq!(out.instance.threshold, 0);
    }

    #[test]
    fn vc_to_ds_examples() {
        let p3 = Graph::path(3);
        let d = AnyDecomposition::TreeDepth(dfs_tdd(&p3));
        let out = vc_to_ds(&p3, 1, &d).unwrap();
        assert!(ds_at_most(&out.instance.graph, 1));
        assert!(vc_at_most(&p3, 1));

        let k3 = Graph::complete(3);
        let d = AnyDecomposition::TreeDepth(dfs_tdd(&k3));
        let out = vc_to_ds(&k3, 1, &d).unwrap();
        assert!(!ds_at_most(&out.instance.graph, 1));
        assert!(!vc_at_most(&k3, 1));

        let iso = Graph::empty(2);
        let d = AnyDecomposition::TreeDepth(dfs_tdd(&iso));
        assert!(matches!(
            vc_to_ds(&iso, 1, &d),
            Err(ReduceError::IsolatedVertex(1))
        ));
    }

    #[test]
    fn threshold_instance_round_trip() {
        let inst = ThresholdInstance {
            graph: Graph::path(3),
            threshold: 2,
        };
        assert_eq!(ThresholdInstance::parse(&inst.serialize()).unwrap(), inst);
    }
}
