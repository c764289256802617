//! CNF gadget generators: the random-access (selector) gadget and the
//! bounded-space machine-computation gadget, each emitted together with a
//! path decomposition and a tree-depth decomposition of its primal graph.
//!
//! The computation gadget fixes an explicit variable-block layout (the
//! repo's ABI for named blocks): one-hot state bits, then the three head
//! indices in binary (LSB first), then the work-tape cells binary-coded in
//! alphabet order. Cross-implementation CNF equality is not promised; any
//! consumer of named blocks must use this layout.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cnf::{CnfBuilder, CnfFormula};
use crate::decomp::{
    ceil_lg, tree_to_tdd, validate_tdd, validate_tree_or_path, TreeDecomposition,
    TreedepthDecomposition,
};
use crate::graph::{Graph, Vertex};
use crate::turing::{Configuration, Transition, TuringMachine};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GadgetError {
    #[error("bad gadget parameters: {0}")]
    BadParams(String),
    #[error("machine reads non-binary symbol `{0}` from the input tape")]
    NonBinaryInput(String),
    #[error("size hypothesis violated: lg n + lg h = {got} exceeds {bound} = C * s")]
    Hypothesis { got: usize, bound: usize },
}

/// A formula with named interface variables plus decompositions of its
/// primal graph.
#[derive(Debug, Clone)]
pub struct GadgetBundle {
    pub formula: CnfFormula,
    pub path_decomp: TreeDecomposition,
    pub tdd: TreedepthDecomposition,
}

// ---------------------------------------------------------------------------
// Multiplexer (random-access selector tree)
// ---------------------------------------------------------------------------

/// Result of emitting one selector tree: the output variable plus the tree
/// structure needed to build decompositions around it.
#[derive(Debug, Clone)]
pub(crate) struct MuxEmission {
    pub output: u32,
    /// (child, parent) pairs over the tree variables, leaves included.
    pub parent_edges: Vec<(u32, u32)>,
    /// Root-to-leaf variable paths in left-to-right leaf order.
    pub leaf_paths: Vec<Vec<u32>>,
}

/// Emits a full binary selector tree over `slots`, addressed by
/// `index_bits` (LSB first): the output variable equals the slot at the
/// index, and 0 for indexes at or beyond `slots.len()`.
pub(crate) fn emit_multiplexer(
    b: &mut CnfBuilder,
    slots: &[u32],
    index_bits: &[u32],
) -> MuxEmission {
    let levels = index_bits.len();
    let total = 1usize << levels;
    assert!(!slots.is_empty() && slots.len() <= total);
    if levels == 0 {
        return MuxEmission {
            output: slots[0],
            parent_edges: vec![],
            leaf_paths: vec![vec![slots[0]]],
        };
    }
    let mut level: Vec<u32> = (0..total)
        .map(|i| {
            if i < slots.len() {
                slots[i]
            } else {
                let v = b.fresh_var();
                b.fix(v, false);
                v
            }
        })
        .collect();
    let leaves = level.clone();
    let mut parent_edges = Vec::new();
    let mut parent_of = std::collections::HashMap::new();
    // Collapse levels bottom-up; the node at depth d tests the index bit
    // with significance levels-1-d, so leaf positions read MSB-first.
    for depth in (0..levels).rev() {
        let y = index_bits[levels - 1 - depth];
        let mut next = Vec::with_capacity(level.len() / 2);
        for pair in level.chunks(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let v = b.fresh_var();
            let (yv, vv, lov, hiv) = (y as i32, v as i32, lo as i32, hi as i32);
            b.clause(&[yv, -vv, lov]);
            b.clause(&[yv, vv, -lov]);
            b.clause(&[-yv, -vv, hiv]);
            b.clause(&[-yv, vv, -hiv]);
            parent_edges.push((lo, v));
            parent_edges.push((hi, v));
            parent_of.insert(lo, v);
            parent_of.insert(hi, v);
            next.push(v);
        }
        level = next;
    }
    let output = level[0];
    let leaf_paths = leaves
        .iter()
        .map(|&leaf| {
            let mut path = vec![leaf];
            let mut cur = leaf;
            while let Some(&p) = parent_of.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            path
        })
        .collect();
    MuxEmission {
        output,
        parent_edges,
        leaf_paths,
    }
}

// ---------------------------------------------------------------------------
// Random access gadget
// ---------------------------------------------------------------------------

/// Depth multiplier documented for the random-access gadget: the emitted
/// tree-depth decomposition has depth at most
/// `RAM_TDD_C * ceil_lg(n) + ceil_lg(n)`.
pub const RAM_TDD_C: usize = 2;

/// Documented bound on the gadget's variable count: at most `RAM_VARS_C * n`
/// variables in total.
pub const RAM_VARS_C: usize = 5;

/// 3-CNF selector with named variables `x_0..x_{n-1}`, `y_0..y_{lg n - 1}`
/// and `z`: an assignment of the named variables extends to a satisfying
/// assignment exactly when `z` equals the indexed input bit (with `z = 0`
/// for indexes at or beyond `n`).
pub fn ram_gadget(n: usize) -> Result<GadgetBundle, GadgetError> {
    if n < 1 {
        return Err(GadgetError::BadParams("ram gadget needs n >= 1".into()));
    }
    let levels = if n == 1 { 0 } else { ceil_lg(n) };
    let mut b = CnfBuilder::new();
    let xs = b.fresh_vars(n);
    for (i, &x) in xs.iter().enumerate() {
        b.name(format!("x_{}", i), x);
    }
    let ys = b.fresh_vars(levels);
    for (j, &y) in ys.iter().enumerate() {
        b.name(format!("y_{}", j), y);
    }
    let mux = emit_multiplexer(&mut b, &xs, &ys);
    b.name("z", mux.output);
    let formula = b.build();

    // Path decomposition: one bag per leaf (root-to-leaf path plus all the
    // index variables), in leaf order.
    let path_decomp = TreeDecomposition {
        bags: mux
            .leaf_paths
            .iter()
            .map(|p| {
                p.iter()
                    .chain(ys.iter())
                    .map(|&v| v as Vertex)
                    .collect::<BTreeSet<Vertex>>()
            })
            .collect(),
        tree_edges: (1..mux.leaf_paths.len()).map(|i| (i - 1, i)).collect(),
        is_path: true,
    };

    // Tree-depth decomposition: the index chain on top of the selector tree.
    let nvars = formula.num_vars();
    let mut tdd = TreedepthDecomposition::new(nvars);
    for w in ys.windows(2) {
        tdd.parent[w[1] as usize] = w[0];
    }
    let above_root = ys.last().copied().unwrap_or(0);
    tdd.parent[mux.output as usize] = above_root;
    for &(child, parent) in &mux.parent_edges {
        tdd.parent[child as usize] = parent;
    }

    let primal = formula.primal_graph();
    let width = validate_tree_or_path(&primal, &path_decomp)
        .expect("ram gadget path decomposition is valid by construction");
    let depth =
        validate_tdd(&primal, &tdd).expect("ram gadget tree-depth decomposition is valid");
    assert!(depth <= RAM_TDD_C * ceil_lg(n) + ceil_lg(n));
    assert!(width as usize + 1 <= 2 * ceil_lg(n) + 2);
    assert!(nvars <= RAM_VARS_C * n);
    assert!(formula.clauses().iter().all(|c| c.len() <= 3));
    Ok(GadgetBundle {
        formula,
        path_decomp,
        tdd,
    })
}

// ---------------------------------------------------------------------------
// Computation gadget
// ---------------------------------------------------------------------------

/// Hypothesis multiplier: the gadget requires
/// `bits(n+1) + bits(h+1) <= COMP_HYP_C * s`.
pub const COMP_HYP_C: usize = 8;

/// How machine states are written into configuration blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StateCoding {
    OneHot,
    Binary,
}

/// Variable layout of one configuration block.
#[derive(Debug, Clone)]
pub(crate) struct BlockLayout {
    pub coding: StateCoding,
    pub q_count: usize,
    pub state_bits: usize,
    pub bits_in: usize,
    pub bits_stk: usize,
    pub bits_wk: usize,
    pub bsym: usize,
    pub s: usize,
}

impl BlockLayout {
    pub fn new(m: &TuringMachine, coding: StateCoding, n: usize, h: usize, s: usize) -> Self {
        let q_count = m.states.len();
        let state_bits = match coding {
            StateCoding::OneHot => q_count,
            StateCoding::Binary => ceil_lg(q_count),
        };
        BlockLayout {
            coding,
            q_count,
            state_bits,
            bits_in: ceil_lg(n + 1),
            bits_stk: ceil_lg(h + 1),
            bits_wk: ceil_lg(s),
            bsym: ceil_lg(m.alphabet.len()),
            s,
        }
    }

    /// Widens the auxiliary head-index field so blocks of gadgets with
    /// different `h` share one layout.
    pub fn widen_bits_stk(mut self, bits: usize) -> Self {
        assert!(bits >= self.bits_stk);
        self.bits_stk = bits;
        self
    }

    pub fn size(&self) -> usize {
        self.state_bits + self.bits_in + self.bits_stk + self.bits_wk + self.s * self.bsym
    }

    pub fn state(&self) -> std::ops::Range<usize> {
        0..self.state_bits
    }

    pub fn pos_in(&self) -> std::ops::Range<usize> {
        let o = self.state_bits;
        o..o + self.bits_in
    }

    pub fn pos_stk(&self) -> std::ops::Range<usize> {
        let o = self.state_bits + self.bits_in;
        o..o + self.bits_stk
    }

    pub fn pos_wk(&self) -> std::ops::Range<usize> {
        let o = self.state_bits + self.bits_in + self.bits_stk;
        o..o + self.bits_wk
    }

    pub fn cell(&self, j: usize) -> std::ops::Range<usize> {
        let o = self.state_bits + self.bits_in + self.bits_stk + self.bits_wk + j * self.bsym;
        o..o + self.bsym
    }

    /// Bit assignment (offset, value) pairs encoding a full configuration.
    pub fn encode(&self, c: &Configuration) -> Vec<(usize, bool)> {
        let mut out = Vec::with_capacity(self.size());
        match self.coding {
            StateCoding::OneHot => {
                for q in 0..self.q_count {
                    out.push((q, q == c.state));
                }
            }
            StateCoding::Binary => {
                for k in 0..self.state_bits {
                    out.push((k, c.state >> k & 1 == 1));
                }
            }
        }
        for (range, value) in [
            (self.pos_in(), c.pos_in),
            (self.pos_stk(), c.pos_stk),
            (self.pos_wk(), c.pos_wk),
        ] {
            for (k, off) in range.enumerate() {
                out.push((off, value >> k & 1 == 1));
            }
        }
        for j in 0..self.s {
            let sym = c.work.get(j).copied().unwrap_or(0);
            for (k, off) in self.cell(j).enumerate() {
                out.push((off, sym >> k & 1 == 1));
            }
        }
        out
    }
}

/// Everything the public gadget and the hardness compiler need from one
/// emitted computation gadget.
#[derive(Debug, Clone)]
pub(crate) struct CompEmission {
    pub blocks: Vec<Vec<u32>>,
    pub w_vars: Vec<u32>,
    /// Bags of the path decomposition, in path order, `w` variables
    /// included.
    pub path_bags: Vec<BTreeSet<u32>>,
}

pub(crate) struct CompSpec<'a> {
    pub machine: &'a TuringMachine,
    pub alpha: &'a [u8],
    pub s: usize,
    /// Number of transition slots; the gadget has `steps + 1` blocks.
    pub steps: usize,
    pub h: usize,
    pub coding: StateCoding,
    /// Optional widening of the auxiliary head-index field.
    pub bits_stk: Option<usize>,
}

/// Transitions sharing effect and differing only in read symbols, emitted
/// behind a single selector when their reads cover everything the machine
/// ever distinguishes.
struct DeltaGroup {
    state: usize,
    next: usize,
    write_wk: usize,
    mv_in: i8,
    mv_stk: i8,
    mv_wk: i8,
    reads: Vec<(usize, usize, usize)>,
    /// When the read set is a product of per-tape sets: the per-tape value
    /// lists, `None` for a tape covered completely.
    #[allow(clippy::type_complexity)]
    factored: Option<(Option<Vec<usize>>, Option<Vec<usize>>, Option<Vec<usize>>)>,
}

fn group_deltas(m: &TuringMachine, deltas: &[&Transition]) -> Vec<DeltaGroup> {
    let mut r_in: BTreeSet<usize> = [m.blank].into_iter().collect();
    let mut r_stk: BTreeSet<usize> = [m.blank].into_iter().collect();
    let mut r_wk: BTreeSet<usize> = [m.blank].into_iter().collect();
    for t in &m.transitions {
        r_in.insert(t.read_in);
        r_stk.insert(t.read_stk);
        r_wk.insert(t.read_wk);
        r_wk.insert(t.write_wk);
    }
    let mut groups: Vec<DeltaGroup> = Vec::new();
    let mut index: std::collections::HashMap<(usize, usize, usize, i8, i8, i8), usize> =
        std::collections::HashMap::new();
    for t in deltas {
        let key = (t.state, t.next, t.write_wk, t.mv_in, t.mv_stk, t.mv_wk);
        let gi = *index.entry(key).or_insert_with(|| {
            groups.push(DeltaGroup {
                state: t.state,
                next: t.next,
                write_wk: t.write_wk,
                mv_in: t.mv_in,
                mv_stk: t.mv_stk,
                mv_wk: t.mv_wk,
                reads: Vec::new(),
                factored: None,
            });
            groups.len() - 1
        });
        groups[gi].reads.push((t.read_in, t.read_stk, t.read_wk));
    }
    for g in &mut groups {
        let distinct: BTreeSet<(usize, usize, usize)> = g.reads.iter().copied().collect();
        let ins: BTreeSet<usize> = distinct.iter().map(|r| r.0).collect();
        let stks: BTreeSet<usize> = distinct.iter().map(|r| r.1).collect();
        let wks: BTreeSet<usize> = distinct.iter().map(|r| r.2).collect();
        if distinct.len() == ins.len() * stks.len() * wks.len() {
            let project = |set: &BTreeSet<usize>, all: &BTreeSet<usize>| {
                if set == all {
                    None
                } else {
                    Some(set.iter().copied().collect::<Vec<usize>>())
                }
            };
            g.factored = Some((
                project(&ins, &r_in),
                project(&stks, &r_stk),
                project(&wks, &r_wk),
            ));
        }
    }
    groups
}

/// Clause literals forcing `bits` (LSB first) to differ from `value`.
fn neq_const_lits(bits: &[u32], value: usize) -> Vec<i32> {
    bits.iter()
        .enumerate()
        .map(|(k, &v)| {
            if value >> k & 1 == 1 {
                -(v as i32)
            } else {
                v as i32
            }
        })
        .collect()
}

/// Unit-style literals forcing `bits == value`, to be emitted one clause
/// per bit (optionally guarded).
fn eq_const_lits(bits: &[u32], value: usize) -> Vec<i32> {
    bits.iter()
        .enumerate()
        .map(|(k, &v)| {
            if value >> k & 1 == 1 {
                v as i32
            } else {
                -(v as i32)
            }
        })
        .collect()
}

/// Emits `value(bits) <= c`, optionally guarded by `-guard`.
pub(crate) fn emit_le_const(b: &mut CnfBuilder, bits: &[u32], c: usize, guard: Option<u32>) {
    for k in 0..bits.len() {
        if c >> k & 1 == 0 {
            let mut lits = vec![-(bits[k] as i32)];
            for (j, &bj) in bits.iter().enumerate().skip(k + 1) {
                if c >> j & 1 == 1 {
                    lits.push(-(bj as i32));
                }
            }
            if let Some(g) = guard {
                lits.insert(0, -(g as i32));
            }
            b.clause(&lits);
        }
    }
}

/// Core emitter shared by the public computation gadget and the hardness
/// compiler. When block variable vectors are supplied they are identified
/// instead of freshly allocated.
pub(crate) fn emit_computation(
    b: &mut CnfBuilder,
    spec: &CompSpec<'_>,
    supplied_first: Option<&[u32]>,
    supplied_last: Option<&[u32]>,
    supplied_w: Option<&[u32]>,
) -> Result<CompEmission, GadgetError> {
    let m = spec.machine;
    let n = spec.alpha.len();
    let h = spec.h;
    let s = spec.s;
    if s == 0 || spec.steps == 0 {
        return Err(GadgetError::BadParams(
            "computation gadget needs s >= 1 and steps >= 1".into(),
        ));
    }
    let mut layout = BlockLayout::new(m, spec.coding, n, h, s);
    if let Some(bits) = spec.bits_stk {
        layout = layout.widen_bits_stk(bits);
    }
    let hyp = layout.bits_in + layout.bits_stk;
    if hyp > COMP_HYP_C * s {
        return Err(GadgetError::Hypothesis {
            got: hyp,
            bound: COMP_HYP_C * s,
        });
    }
    let nblocks = spec.steps + 1;
    let sz = layout.size();
    // Blocks are allocated step by step, after each step's helper
    // variables: backtracking search then only ever decides selector
    // variables, with the rest filled in by propagation.
    let mut blocks: Vec<Vec<u32>> = Vec::with_capacity(nblocks);
    blocks.push(match supplied_first {
        Some(u) => {
            assert_eq!(u.len(), sz);
            u.to_vec()
        }
        None => b.fresh_vars(sz),
    });
    let w_vars: Vec<u32> = match supplied_w {
        Some(w) => {
            assert_eq!(w.len(), h * layout.bsym);
            w.to_vec()
        }
        None => b.fresh_vars(h * layout.bsym),
    };

    let emit_block_validity = |b: &mut CnfBuilder, blk: &Vec<u32>| {
        match layout.coding {
            StateCoding::OneHot => {
                let st: Vec<i32> = layout.state().map(|o| blk[o] as i32).collect();
                b.clause(&st);
                for i in 0..st.len() {
                    for j in i + 1..st.len() {
                        b.clause(&[-st[i], -st[j]]);
                    }
                }
            }
            StateCoding::Binary => {
                let bits: Vec<u32> = layout.state().map(|o| blk[o]).collect();
                emit_le_const(b, &bits, layout.q_count - 1, None);
            }
        }
        let pin: Vec<u32> = layout.pos_in().map(|o| blk[o]).collect();
        emit_le_const(b, &pin, n, None);
        let pstk: Vec<u32> = layout.pos_stk().map(|o| blk[o]).collect();
        emit_le_const(b, &pstk, h, None);
        let pwk: Vec<u32> = layout.pos_wk().map(|o| blk[o]).collect();
        emit_le_const(b, &pwk, s - 1, None);
        for j in 0..s {
            let cell: Vec<u32> = layout.cell(j).map(|o| blk[o]).collect();
            emit_le_const(b, &cell, m.alphabet.len() - 1, None);
        }
    };
    emit_block_validity(b, &blocks[0]);
    // Valid symbol codes on the auxiliary word.
    for p in 0..h {
        let bits: Vec<u32> = (0..layout.bsym).map(|k| w_vars[p * layout.bsym + k]).collect();
        emit_le_const(b, &bits, m.alphabet.len() - 1, None);
    }

    // Transitions whose input-tape read can actually occur on a binary
    // word, collapsed into selector units: a group whose reads cover every
    // distinguished symbol triple needs no read constraints at all.
    let mut deltas: Vec<&Transition> = Vec::new();
    for t in &m.transitions {
        let tok = &m.alphabet[t.read_in];
        if tok == "0" || tok == "1" || tok == "_" {
            deltas.push(t);
        }
    }
    struct SelUnit {
        state: usize,
        next: usize,
        write_wk: usize,
        mv_in: i8,
        mv_stk: i8,
        mv_wk: i8,
        /// Per-tape read constraints; `None` = the group covers every
        /// symbol the machine distinguishes on that tape.
        read_in: Option<usize>,
        read_stk: Option<usize>,
        read_wk: Option<usize>,
    }
    let mut units: Vec<SelUnit> = Vec::new();
    for g in group_deltas(m, &deltas) {
        let base = |ri, rs, rw| SelUnit {
            state: g.state,
            next: g.next,
            write_wk: g.write_wk,
            mv_in: g.mv_in,
            mv_stk: g.mv_stk,
            mv_wk: g.mv_wk,
            read_in: ri,
            read_stk: rs,
            read_wk: rw,
        };
        match &g.factored {
            Some((ins, stks, wks)) => {
                for &ri in ins.as_deref().unwrap_or(&[usize::MAX]) {
                    for &rs in stks.as_deref().unwrap_or(&[usize::MAX]) {
                        for &rw in wks.as_deref().unwrap_or(&[usize::MAX]) {
                            units.push(base(
                                (ri != usize::MAX).then_some(ri),
                                (rs != usize::MAX).then_some(rs),
                                (rw != usize::MAX).then_some(rw),
                            ));
                        }
                    }
                }
            }
            None => {
                for &(ri, rs, rw) in &g.reads {
                    units.push(base(Some(ri), Some(rs), Some(rw)));
                }
            }
        }
    }

    let mut path_bags: Vec<BTreeSet<u32>> = Vec::new();
    let mut prev_stay: Option<u32> = None;
    for i in 0..spec.steps {
        let cur = blocks[i].clone();
        let cur = &cur;
        let mut helpers: Vec<u32> = Vec::new();

        // Work-head one-hot indicators for the current block.
        let pwk: Vec<u32> = layout.pos_wk().map(|o| cur[o]).collect();
        let w_ind = b.fresh_vars(s);
        helpers.extend(&w_ind);
        for (j, &wj) in w_ind.iter().enumerate() {
            let mut back = vec![wj as i32];
            for (k, &bit) in pwk.iter().enumerate() {
                let lit = if j >> k & 1 == 1 {
                    bit as i32
                } else {
                    -(bit as i32)
                };
                b.clause(&[-(wj as i32), lit]);
                back.push(-lit);
            }
            b.clause(&back);
        }

        // Carry / borrow chains for the binary input-tape head counters.
        let make_chains = |b: &mut CnfBuilder, bits: &[u32]| -> (Vec<u32>, Vec<u32>) {
            let mut carries = Vec::new(); // carry into bit k, k >= 1
            let mut borrows = Vec::new();
            let mut prev_c: Option<u32> = None;
            let mut prev_b: Option<u32> = None;
            for k in 1..bits.len() {
                let c = b.fresh_var();
                let bo = b.fresh_var();
                let low = bits[k - 1] as i32;
                match prev_c {
                    None => {
                        // carry_1 = bit_0
                        b.clause(&[-(c as i32), low]);
                        b.clause(&[c as i32, -low]);
                    }
                    Some(pc) => {
                        b.clause(&[-(c as i32), low]);
                        b.clause(&[-(c as i32), pc as i32]);
                        b.clause(&[c as i32, -low, -(pc as i32)]);
                    }
                }
                match prev_b {
                    None => {
                        b.clause(&[-(bo as i32), -low]);
                        b.clause(&[bo as i32, low]);
                    }
                    Some(pb) => {
                        b.clause(&[-(bo as i32), -low]);
                        b.clause(&[-(bo as i32), pb as i32]);
                        b.clause(&[bo as i32, low, -(pb as i32)]);
                    }
                }
                carries.push(c);
                borrows.push(bo);
                prev_c = Some(c);
                prev_b = Some(bo);
            }
            (carries, borrows)
        };
        let pin: Vec<u32> = layout.pos_in().map(|o| cur[o]).collect();
        let pstk: Vec<u32> = layout.pos_stk().map(|o| cur[o]).collect();
        let (in_c, in_b) = make_chains(b, &pin);
        let (stk_c, stk_b) = make_chains(b, &pstk);
        helpers.extend(in_c.iter().chain(&in_b).chain(&stk_c).chain(&stk_b));

        // Read-access trees for the two input tapes.
        let mut mux_runs: Vec<MuxEmission> = Vec::new();
        let z_in: Option<u32> = if n > 0 {
            let slots = b.fresh_vars(n);
            for (p, &v) in slots.iter().enumerate() {
                b.fix(v, spec.alpha[p] == 1);
            }
            let mux = emit_multiplexer(b, &slots, &pin);
            let z = mux.output;
            helpers.push(z);
            helpers.extend(&slots);
            mux_runs.push(mux);
            Some(z)
        } else {
            None
        };
        let z_stk: Vec<u32> = if h > 0 {
            (0..layout.bsym)
                .map(|bit| {
                    let slots: Vec<u32> =
                        (0..h).map(|p| w_vars[p * layout.bsym + bit]).collect();
                    let mux = emit_multiplexer(b, &slots, &pstk);
                    let z = mux.output;
                    helpers.push(z);
                    mux_runs.push(mux);
                    z
                })
                .collect()
        } else {
            Vec::new()
        };

        // Selector variables: stay plus one per selector unit.
        let stay = b.fresh_var();
        let sels = b.fresh_vars(units.len());
        helpers.push(stay);
        helpers.extend(&sels);
        let mut at_least_one: Vec<i32> = vec![stay as i32];
        at_least_one.extend(sels.iter().map(|&t| t as i32));
        b.clause(&at_least_one);
        // Canonical padding: all stay steps sit at the end of the run, and
        // a staying step fires no other transition.
        if let Some(ps) = prev_stay {
            b.clause(&[-(ps as i32), stay as i32]);
            // The chaining clause must live in this step's bags.
            helpers.push(ps);
        }
        prev_stay = Some(stay);
        for &t in &sels {
            b.clause(&[-(stay as i32), -(t as i32)]);
        }

        // Only now allocate the next block, so its contents sit after the
        // selectors in decision order.
        let nxt: Vec<u32> = if i + 1 == spec.steps {
            match supplied_last {
                Some(v) => {
                    assert_eq!(v.len(), sz);
                    v.to_vec()
                }
                None => b.fresh_vars(sz),
            }
        } else {
            b.fresh_vars(sz)
        };
        emit_block_validity(b, &nxt);
        blocks.push(nxt);
        let nxt = blocks.last().expect("just pushed");

        // Frame axioms: cells away from the head never change.
        for j in 0..s {
            for (oc, on) in layout.cell(j).zip(layout.cell(j)) {
                let (c, nx) = (cur[oc] as i32, nxt[on] as i32);
                b.clause(&[w_ind[j] as i32, -c, nx]);
                b.clause(&[w_ind[j] as i32, c, -nx]);
            }
        }

        // Stay: the two blocks coincide.
        for off in 0..sz {
            let (c, nx) = (cur[off] as i32, nxt[off] as i32);
            b.clause(&[-(stay as i32), -c, nx]);
            b.clause(&[-(stay as i32), c, -nx]);
        }

        let guard = |t: u32, mut lits: Vec<i32>| {
            lits.insert(0, -(t as i32));
            lits
        };

        for (&t, unit) in sels.iter().zip(&units) {
            // State of the current and next block.
            match layout.coding {
                StateCoding::OneHot => {
                    b.clause(&guard(t, vec![cur[unit.state] as i32]));
                    b.clause(&guard(t, vec![nxt[unit.next] as i32]));
                }
                StateCoding::Binary => {
                    let sb: Vec<u32> = layout.state().map(|o| cur[o]).collect();
                    for lit in eq_const_lits(&sb, unit.state) {
                        b.clause(&guard(t, vec![lit]));
                    }
                    let nb: Vec<u32> = layout.state().map(|o| nxt[o]).collect();
                    for lit in eq_const_lits(&nb, unit.next) {
                        b.clause(&guard(t, vec![lit]));
                    }
                }
            }
            if let Some(read_in) = unit.read_in {
                // Input tape read.
                let tok = m.alphabet[read_in].as_str();
                match tok {
                    "_" => {
                        for lit in eq_const_lits(&pin, n) {
                            b.clause(&guard(t, vec![lit]));
                        }
                    }
                    bitc => {
                        // Position strictly inside the word, reading the bit.
                        b.clause(&guard(t, neq_const_lits(&pin, n)));
                        if let Some(z) = z_in {
                            let zl = if bitc == "1" { z as i32 } else { -(z as i32) };
                            b.clause(&guard(t, vec![zl]));
                        } else {
                            // n = 0: nothing to read, the transition can't fire.
                            b.clause(&[-(t as i32)]);
                        }
                    }
                }
            }
            if let Some(read_stk) = unit.read_stk {
                // Auxiliary (stack) tape read, block-coded.
                if m.alphabet[read_stk] == "_" {
                    for lit in eq_const_lits(&pstk, h) {
                        b.clause(&guard(t, vec![lit]));
                    }
                } else {
                    b.clause(&guard(t, neq_const_lits(&pstk, h)));
                    if h == 0 {
                        b.clause(&[-(t as i32)]);
                    } else {
                        for (bit, &z) in z_stk.iter().enumerate() {
                            let want = read_stk >> bit & 1 == 1;
                            let zl = if want { z as i32 } else { -(z as i32) };
                            b.clause(&guard(t, vec![zl]));
                        }
                    }
                }
            }
            if let Some(read_wk) = unit.read_wk {
                // Work read under the head.
                for j in 0..s {
                    let wj = w_ind[j] as i32;
                    let rc: Vec<u32> = layout.cell(j).map(|o| cur[o]).collect();
                    for lit in eq_const_lits(&rc, read_wk) {
                        b.clause(&[-(t as i32), -wj, lit]);
                    }
                }
            }
            // Work write under the head, plus the head move.
            for j in 0..s {
                let wj = w_ind[j] as i32;
                let wc: Vec<u32> = layout.cell(j).map(|o| nxt[o]).collect();
                for lit in eq_const_lits(&wc, unit.write_wk) {
                    b.clause(&[-(t as i32), -wj, lit]);
                }
                let dest = j as i64 + unit.mv_wk as i64;
                if dest < 0 || dest >= s as i64 {
                    b.clause(&[-(t as i32), -wj]);
                } else {
                    let nb: Vec<u32> = layout.pos_wk().map(|o| nxt[o]).collect();
                    for lit in eq_const_lits(&nb, dest as usize) {
                        b.clause(&[-(t as i32), -wj, lit]);
                    }
                }
            }
            // Input and auxiliary head moves as conditioned adder chains.
            let emit_move = |b: &mut CnfBuilder,
                                 bits: &[u32],
                                 nbits: &[u32],
                                 carries: &[u32],
                                 borrows: &[u32],
                                 mv: i8,
                                 limit: usize| {
                match mv {
                    0 => {
                        for (k, &bit) in bits.iter().enumerate() {
                            let (c, nx) = (bit as i32, nbits[k] as i32);
                            b.clause(&[-(t as i32), -c, nx]);
                            b.clause(&[-(t as i32), c, -nx]);
                        }
                    }
                    1 => {
                        b.clause(&guard(t, neq_const_lits(bits, limit)));
                        for k in 0..bits.len() {
                            let x = bits[k] as i32;
                            let y = nbits[k] as i32;
                            if k == 0 {
                                // y = !x
                                b.clause(&[-(t as i32), -y, -x]);
                                b.clause(&[-(t as i32), y, x]);
                            } else {
                                let c = carries[k - 1] as i32;
                                // y = x xor c
                                b.clause(&[-(t as i32), -y, x, c]);
                                b.clause(&[-(t as i32), -y, -x, -c]);
                                b.clause(&[-(t as i32), y, -x, c]);
                                b.clause(&[-(t as i32), y, x, -c]);
                            }
                        }
                    }
                    -1 => {
                        b.clause(&guard(t, neq_const_lits(bits, 0)));
                        for k in 0..bits.len() {
                            let x = bits[k] as i32;
                            let y = nbits[k] as i32;
                            if k == 0 {
                                b.clause(&[-(t as i32), -y, -x]);
                                b.clause(&[-(t as i32), y, x]);
                            } else {
                                let bo = borrows[k - 1] as i32;
                                b.clause(&[-(t as i32), -y, x, bo]);
                                b.clause(&[-(t as i32), -y, -x, -bo]);
                                b.clause(&[-(t as i32), y, -x, bo]);
                                b.clause(&[-(t as i32), y, x, -bo]);
                            }
                        }
                    }
                    _ => unreachable!(),
                }
            };
            let npin: Vec<u32> = layout.pos_in().map(|o| nxt[o]).collect();
            emit_move(b, &pin, &npin, &in_c, &in_b, unit.mv_in, n);
            let npstk: Vec<u32> = layout.pos_stk().map(|o| nxt[o]).collect();
            emit_move(b, &pstk, &npstk, &stk_c, &stk_b, unit.mv_stk, h);
        }

        // Bags: the step core (both blocks, the word, the helpers), then
        // one bag per selector-tree path appended after it.
        let core: BTreeSet<u32> = cur
            .iter()
            .chain(nxt.iter())
            .chain(w_vars.iter())
            .chain(helpers.iter())
            .copied()
            .collect();
        path_bags.push(core.clone());
        for mux in &mux_runs {
            for path in &mux.leaf_paths {
                let mut bag = core.clone();
                bag.extend(path.iter().copied());
                path_bags.push(bag);
            }
        }
    }
    Ok(CompEmission {
        blocks,
        w_vars,
        path_bags,
    })
}

/// Documented width bound asserted on every computation-gadget emission;
/// the machine-size factor reflects the per-step helper variables.
pub fn comp_width_bound(m: &TuringMachine, s: usize, h: usize) -> usize {
    let mach = m.states.len() + m.transitions.len() + ceil_lg(m.alphabet.len()) + 4;
    10 * mach * (s + h + 1)
}

/// Documented tree-depth bound asserted on every computation-gadget
/// emission.
pub fn comp_depth_bound(m: &TuringMachine, n: usize, s: usize, t: usize, h: usize) -> usize {
    let mach = m.states.len() + m.transitions.len() + ceil_lg(m.alphabet.len()) + 4;
    40 * mach * (s * ceil_lg(n + s + t + h + 2) + h + 1)
}

/// Emits the bounded-space computation gadget for machine `m` on input
/// `alpha` (a binary word): named blocks `u_*`, `v_*` describe two
/// configurations and `w_*` a word on the auxiliary read-only tape, and an
/// assignment of the named variables extends to a satisfying one exactly
/// when the machine can go from `u` to `v` within `t` steps using `s` work
/// cells.
pub fn computation_gadget(
    m: &TuringMachine,
    alpha: &[u8],
    s: usize,
    t: usize,
    h: usize,
) -> Result<GadgetBundle, GadgetError> {
    m.validate()
        .map_err(|e| GadgetError::BadParams(e.to_string()))?;
    if t < 1 {
        return Err(GadgetError::BadParams("need t >= 1".into()));
    }
    if alpha.iter().any(|&b| b > 1) {
        return Err(GadgetError::NonBinaryInput("alpha must be 0/1".into()));
    }
    let mut b = CnfBuilder::new();
    let spec = CompSpec {
        machine: m,
        alpha,
        s,
        steps: t,
        h,
        coding: StateCoding::OneHot,
        bits_stk: None,
    };
    let em = emit_computation(&mut b, &spec, None, None, None)?;
    for (i, &v) in em.blocks[0].iter().enumerate() {
        b.name(format!("u_{}", i + 1), v);
    }
    for (i, &v) in em.blocks[em.blocks.len() - 1].iter().enumerate() {
        b.name(format!("v_{}", i + 1), v);
    }
    for (i, &v) in em.w_vars.iter().enumerate() {
        b.name(format!("w_{}", i + 1), v);
    }
    let formula = b.build();
    let primal = formula.primal_graph();

    let path_decomp = TreeDecomposition {
        bags: em
            .path_bags
            .iter()
            .map(|b| b.iter().map(|&v| v as Vertex).collect())
            .collect(),
        tree_edges: (1..em.path_bags.len()).map(|i| (i - 1, i)).collect(),
        is_path: true,
    };
    let width = validate_tree_or_path(&primal, &path_decomp)
        .expect("computation gadget path decomposition is valid by construction");
    assert!(
        (width as usize) < comp_width_bound(m, s, h),
        "width {} out of documented bound",
        width
    );

    let tdd = gadget_tdd(&primal, &em)?;
    let depth = validate_tdd(&primal, &tdd).expect("computation gadget tdd is valid");
    assert!(
        depth <= comp_depth_bound(m, alpha.len(), s, t, h),
        "depth {} out of documented bound",
        depth
    );
    Ok(GadgetBundle {
        formula,
        path_decomp,
        tdd,
    })
}

/// Tree-depth decomposition of a computation emission: drop the `w`
/// variables from the path decomposition, re-decompose the rest by centroid
/// splitting, then chain the `w` variables on top.
pub(crate) fn gadget_tdd(
    primal: &Graph,
    em: &CompEmission,
) -> Result<TreedepthDecomposition, GadgetError> {
    let nvars = primal.n();
    let wset: BTreeSet<u32> = em.w_vars.iter().copied().collect();
    // Relabel the non-w variables compactly.
    let mut to_new = vec![0u32; nvars + 1];
    let mut to_old = Vec::new();
    for v in 1..=nvars as u32 {
        if !wset.contains(&v) {
            to_old.push(v);
            to_new[v as usize] = to_old.len() as u32;
        }
    }
    let sub_edges: Vec<(Vertex, Vertex)> = primal
        .edges()
        .filter(|&(a, b)| !wset.contains(&a) && !wset.contains(&b))
        .map(|(a, b)| (to_new[a as usize], to_new[b as usize]))
        .collect();
    let sub = Graph::new(to_old.len(), sub_edges).expect("relabeled subgraph is well-formed");
    let bags: Vec<BTreeSet<Vertex>> = em
        .path_bags
        .iter()
        .map(|bag| {
            bag.iter()
                .filter(|v| !wset.contains(v))
                .map(|&v| to_new[v as usize])
                .collect()
        })
        .collect();
    let pd = TreeDecomposition {
        tree_edges: (1..bags.len()).map(|i| (i - 1, i)).collect(),
        bags,
        is_path: true,
    };
    let sub_tdd = tree_to_tdd(&sub, &pd)
        .map_err(|e| GadgetError::BadParams(format!("internal re-decomposition failed: {}", e)))?;
    // Chain the w variables above every root of the sub-decomposition.
    let mut tdd = TreedepthDecomposition::new(nvars);
    for w in em.w_vars.windows(2) {
        tdd.parent[w[1] as usize] = w[0];
    }
    let top = em.w_vars.last().copied().unwrap_or(0);
    for (new_idx, &old) in to_old.iter().enumerate() {
        let p = sub_tdd.parent[new_idx + 1];
        tdd.parent[old as usize] = if p == 0 { top } else { to_old[p as usize - 1] };
    }
    Ok(tdd)
}

/// Fixed named-variable assignment describing configuration `c` in the
/// `u_*` or `v_*` block of a gadget emitted by [`computation_gadget`].
pub fn config_assignment(
    m: &TuringMachine,
    n: usize,
    s: usize,
    h: usize,
    prefix: &str,
    c: &Configuration,
) -> Vec<(String, bool)> {
    let layout = BlockLayout::new(m, StateCoding::OneHot, n, h, s);
    layout
        .encode(c)
        .into_iter()
        .map(|(off, val)| (format!("{}_{}", prefix, off + 1), val))
        .collect()
}

/// Fixed named-variable assignment describing the auxiliary word `w`.
pub fn word_assignment(m: &TuringMachine, word: &[usize]) -> Vec<(String, bool)> {
    let bsym = ceil_lg(m.alphabet.len());
    let mut out = Vec::new();
    for (p, &sym) in word.iter().enumerate() {
        for k in 0..bsym {
            out.push((format!("w_{}", p * bsym + k + 1), sym >> k & 1 == 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::sat_oracle;

    /// Extendability of a named-variable assignment; conflicting labels on
    /// one variable mean it is not extendable.
    fn extendable(f: &CnfFormula, named: &[(String, bool)]) -> bool {
        let mut fixed: Vec<(u32, bool)> = Vec::new();
        for (label, val) in named {
            let var = f.var_of(label).expect("label exists");
            if let Some(&(_, prev)) = fixed.iter().find(|&&(v, _)| v == var) {
                if prev != *val {
                    return false;
                }
            } else {
                fixed.push((var, *val));
            }
        }
        sat_oracle(f, &fixed).unwrap()
    }

    fn ram_named(n: usize, xs: &[bool], y: usize, z: bool) -> Vec<(String, bool)> {
        let levels = if n == 1 { 0 } else { ceil_lg(n) };
        let mut named: Vec<(String, bool)> = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("x_{}", i), v))
            .collect();
        for j in 0..levels {
            named.push((format!("y_{}", j), y >> j & 1 == 1));
        }
        named.push(("z".to_string(), z));
        named
    }

    #[test]
    fn ram_gadget_n1() {
        let gb = ram_gadget(1).unwrap();
        assert!(extendable(&gb.formula, &ram_named(1, &[true], 0, true)));
        assert!(!extendable(&gb.formula, &ram_named(1, &[true], 0, false)));
    }

    #[test]
    fn ram_gadget_n2_selects() {
        let gb = ram_gadget(2).unwrap();
        // x_0 = 1, x_1 = 0, index 0 -> z must be 1.
        assert!(extendable(&gb.formula, &ram_named(2, &[true, false], 0, true)));
        assert!(!extendable(&gb.formula, &ram_named(2, &[true, false], 0, false)));
        assert!(extendable(&gb.formula, &ram_named(2, &[true, false], 1, false)));
    }

    #[test]
    fn ram_gadget_exhaustive_small() {
        for n in 1..=6usize {
            let gb = ram_gadget(n).unwrap();
            let levels = if n == 1 { 0 } else { ceil_lg(n) };
            for xm in 0..(1u32 << n) {
                let xs: Vec<bool> = (0..n).map(|i| xm >> i & 1 == 1).collect();
                for y in 0..(1usize << levels) {
                    let expect = if y < n { xs[y] } else { false };
                    for z in [false, true] {
                        assert_eq!(
                            extendable(&gb.formula, &ram_named(n, &xs, y, z)),
                            z == expect,
                            "n={} xs={:?} y={} z={}",
                            n,
                            xs,
                            y,
                            z
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ram_gadget_structure_bounds() {
        for n in 1..=9usize {
            let gb = ram_gadget(n).unwrap();
            assert!(gb.formula.clauses().iter().all(|c| c.len() <= 3));
            assert!(gb.formula.num_vars() <= RAM_VARS_C * n);
            let primal = gb.formula.primal_graph();
            let depth = validate_tdd(&primal, &gb.tdd).unwrap();
            assert!(depth <= RAM_TDD_C * ceil_lg(n) + ceil_lg(n));
            validate_tree_or_path(&primal, &gb.path_decomp).unwrap();
        }
    }

    const WRITER: &str = "\
states: q0 q1
alphabet: 0 1 X _
init: q0
accept: q1
q0 _ _ _ -> q1 X 0 0 0
";

    #[test]
    fn computation_gadget_one_symbol_writer() {
        let m = TuringMachine::parse(WRITER).unwrap();
        let gb = computation_gadget(&m, &[], 2, 2, 0).unwrap();
        let init = m.initial_configuration(2);
        let x = m.symbol_index("X").unwrap();
        let written = Configuration {
            state: 1,
            work: vec![x, m.blank],
            ..init.clone()
        };
        let unwritten = Configuration {
            state: 1,
            ..init.clone()
        };
        let mut named = config_assignment(&m, 0, 2, 0, "u", &init);
        named.extend(config_assignment(&m, 0, 2, 0, "v", &written));
        assert!(extendable(&gb.formula, &named));
        let mut named = config_assignment(&m, 0, 2, 0, "u", &init);
        named.extend(config_assignment(&m, 0, 2, 0, "v", &unwritten));
        assert!(!extendable(&gb.formula, &named));
        // Staying in place is always allowed.
        let mut named = config_assignment(&m, 0, 2, 0, "u", &init);
        named.extend(config_assignment(&m, 0, 2, 0, "v", &init));
        assert!(extendable(&gb.formula, &named));
    }

    #[test]
    fn computation_gadget_matches_bfs_reachability() {
        // A machine that walks right over its input and records the last
        // bit it saw in the work cell.
        let src = "\
states: a b
alphabet: 0 1 _
init: a
accept: b
a 0 _ _ -> a 0 +1 0 0
a 1 _ _ -> a 1 +1 0 0
a _ _ _ -> b _ 0 0 0
";
        let m = TuringMachine::parse(src).unwrap();
        let alpha = [1u8, 0, 1];
        let alpha_syms: Vec<usize> = alpha
            .iter()
            .map(|&b| m.symbol_index(if b == 0 { "0" } else { "1" }).unwrap())
            .collect();
        let t = 6;
        let gb = computation_gadget(&m, &alpha, 1, t, 0).unwrap();
        let init = m.initial_configuration(1);
        let reach = m.reachable_within(&init, &alpha_syms, &[], t);
        // Sweep all (state, pos_in, work) target configurations.
        for state in 0..2usize {
            for pos_in in 0..=3usize {
                for wk in 0..3usize {
                    let v = Configuration {
                        state,
                        pos_in,
                        pos_stk: 0,
                        pos_wk: 0,
                        work: vec![wk],
                    };
                    let mut named = config_assignment(&m, 3, 1, 0, "u", &init);
                    named.extend(config_assignment(&m, 3, 1, 0, "v", &v));
                    let sat = extendable(&gb.formula, &named);
                    assert_eq!(
                        sat,
                        reach.contains_key(&v),
                        "state={} pos={} wk={}",
                        state,
                        pos_in,
                        wk
                    );
                }
            }
        }
    }

    #[test]
    fn computation_gadget_reads_aux_tape() {
        // Copies the symbol under the auxiliary head into the work cell.
        let src = "\
states: a b
alphabet: 0 1 _
init: a
accept: b
a _ 0 _ -> b 0 0 0 0
a _ 1 _ -> b 1 0 0 0
";
        let m = TuringMachine::parse(src).unwrap();
        let gb = computation_gadget(&m, &[], 1, 2, 2).unwrap();
        let sym1 = m.symbol_index("1").unwrap();
        let sym0 = m.symbol_index("0").unwrap();
        let init = m.initial_configuration(1);
        for (word, expect_sym) in [(vec![sym1, sym0], sym1), (vec![sym0, sym1], sym0)] {
            let v = Configuration {
                state: 1,
                work: vec![expect_sym],
                ..init.clone()
            };
            let mut named = config_assignment(&m, 0, 1, 2, "u", &init);
            named.extend(config_assignment(&m, 0, 1, 2, "v", &v));
            named.extend(word_assignment(&m, &word));
            assert!(extendable(&gb.formula, &named), "word {:?}", word);
            let bad = Configuration {
                state: 1,
                work: vec![if expect_sym == sym1 { sym0 } else { sym1 }],
                ..init.clone()
            };
            let mut named = config_assignment(&m, 0, 1, 2, "u", &init);
            named.extend(config_assignment(&m, 0, 1, 2, "v", &bad));
            named.extend(word_assignment(&m, &word));
            assert!(!extendable(&gb.formula, &named), "word {:?}", word);
        }
    }

    #[test]
    fn gadget_rejects_bad_params() {
        let m = TuringMachine::parse(WRITER).unwrap();
        assert!(computation_gadget(&m, &[], 0, 2, 0).is_err());
        assert!(computation_gadget(&m, &[2], 1, 2, 0).is_err());
        assert!(ram_gadget(0).is_err());
    }
}
