//! Nondeterministic machines with an auxiliary stack: simulation, push-pop
//! trees, regularity restrictions, regularization, and compilation of
//! regular machines into CNF of bounded tree-depth.
//!
//! The stack is a tape that can be read anywhere but written only by
//! pushing and popping at the top. Simulation is an explicit breadth-first
//! search over configurations, memoizing visited ones; bounds guard memory
//! and acceptance is all that matters here, not the theoretical space
//! discipline.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::cnf::CnfBuilder;
use crate::decomp::{ceil_lg, validate_tdd, TreedepthDecomposition};
use crate::gadgets::{
    emit_computation, BlockLayout, CompSpec, GadgetBundle, GadgetError, StateCoding,
};
use crate::graph::{Graph, Vertex};
use crate::turing::{
    fmt_move, MachineError, SectionedMachine, Transition, TuringMachine,
};

/// Configurations the breadth-first simulation will memoize before bailing.
pub const SIMULATE_VISITED_CAP: usize = 4_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuxError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("configuration space exceeded the {0}-state simulation guard")]
    BoundExceeded(usize),
    #[error("push/pop sequence is unbalanced at step {0}")]
    Unbalanced(usize),
    #[error("stack operations do not group into blocks of {b}: {msg}")]
    NotBlocked { b: usize, msg: String },
    #[error("machine metadata missing field `{0}`")]
    MissingMeta(&'static str),
    #[error("tree depth {depth} exceeds lg of its size {size}")]
    DepthPrecondition { depth: usize, size: usize },
    #[error("transcript invalid at step {step}: {msg}")]
    BadTranscript { step: usize, msg: String },
    #[error("input encoding invalid: {0}")]
    BadEncoding(String),
    #[error("invalid decomposition: {0}")]
    InvalidTdd(#[from] crate::decomp::TddViolation),
    #[error("machine not supported by this transformation: {0}")]
    Unsupported(String),
    #[error("machine violates regularity: {0}")]
    NotRegular(String),
    #[error(transparent)]
    Gadget(#[from] GadgetError),
}

// ---------------------------------------------------------------------------
// Stack machine model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StackOp {
    None,
    Push(usize),
    Pop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackTransition {
    pub base: Transition,
    pub op: StackOp,
}

/// Declared resource bounds and regularity metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MachineMeta {
    /// Regular block size `b`.
    pub block_size: Option<usize>,
    /// Regularity constant `c`: accepting push-pop trees are full binary of
    /// depth exactly `c * ceil_lg(n)`.
    pub tree_depth_constant: Option<usize>,
    /// Step bound; for regularized machines this bounds one op-free segment.
    pub step_bound: Option<usize>,
    /// Declared stack-height bound.
    pub stack_bound: Option<usize>,
    /// Declared work-tape cells.
    pub work_bound: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: usize,
    pub init: usize,
    pub accept: BTreeSet<usize>,
    pub transitions: Vec<StackTransition>,
    pub meta: MachineMeta,
}

/// A full stack-machine configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StackConfig {
    pub state: usize,
    pub pos_in: usize,
    pub pos_stk: usize,
    pub pos_wk: usize,
    pub work: Vec<usize>,
    pub stack: Vec<usize>,
}

impl StackMachine {
    pub fn validate(&self) -> Result<(), MachineError> {
        self.turing_view().validate()?;
        for (i, t) in self.transitions.iter().enumerate() {
            if let StackOp::Push(s) = t.op {
                if s >= self.alphabet.len() || s == self.blank {
                    return Err(MachineError::Undeclared {
                        index: i,
                        what: "push symbol",
                        token: format!("#{}", s),
                    });
                }
            }
        }
        Ok(())
    }

    /// The machine with stack operations stripped; segment semantics for
    /// the computation gadget.
    pub fn turing_view(&self) -> TuringMachine {
        TuringMachine {
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            blank: self.blank,
            init: self.init,
            accept: self.accept.clone(),
            transitions: self.transitions.iter().map(|t| t.base).collect(),
        }
    }

    /// Only the op-free transitions, for encoding op-free segments.
    pub fn segment_view(&self) -> TuringMachine {
        let mut tm = self.turing_view();
        tm.transitions = self
            .transitions
            .iter()
            .filter(|t| t.op == StackOp::None)
            .map(|t| t.base)
            .collect();
        tm
    }

    pub fn symbol_index(&self, token: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == token)
    }

    pub fn initial_config(&self, work_cells: usize) -> StackConfig {
        StackConfig {
            state: self.init,
            pos_in: 0,
            pos_stk: 0,
            pos_wk: 0,
            work: vec![self.blank; work_cells],
            stack: Vec::new(),
        }
    }

    fn read(word: &[usize], pos: usize, blank: usize) -> usize {
        word.get(pos).copied().unwrap_or(blank)
    }

    /// Lookup table from (state, reads) to transition indices; build once
    /// when stepping many configurations.
    pub fn transition_index(&self) -> HashMap<(usize, usize, usize, usize), Vec<usize>> {
        let mut idx: HashMap<(usize, usize, usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            let b = &t.base;
            idx.entry((b.state, b.read_in, b.read_stk, b.read_wk))
                .or_default()
                .push(ti);
        }
        idx
    }

    /// One-step successors under the declared bounds.
    pub fn successors(
        &self,
        c: &StackConfig,
        input: &[usize],
        max_stack: usize,
    ) -> Vec<(usize, StackConfig)> {
        let all: Vec<usize> = (0..self.transitions.len()).collect();
        self.successors_from(c, input, max_stack, &all)
    }

    fn successors_from(
        &self,
        c: &StackConfig,
        input: &[usize],
        max_stack: usize,
        candidates: &[usize],
    ) -> Vec<(usize, StackConfig)> {
        let mut out = Vec::new();
        let a_in = Self::read(input, c.pos_in, self.blank);
        let a_stk = Self::read(&c.stack, c.pos_stk, self.blank);
        let a_wk = if c.work.is_empty() {
            self.blank
        } else {
            c.work[c.pos_wk]
        };
        for &ti in candidates {
            let t = &self.transitions[ti];
            let b = &t.base;
            if b.state != c.state || b.read_in != a_in || b.read_stk != a_stk || b.read_wk != a_wk
            {
                continue;
            }
            match t.op {
                StackOp::Push(_) if c.stack.len() >= max_stack => continue,
                StackOp::Pop if c.stack.is_empty() => continue,
                _ => {}
            }
            let ni = c.pos_in as i64 + b.mv_in as i64;
            let ns = c.pos_stk as i64 + b.mv_stk as i64;
            let nw = c.pos_wk as i64 + b.mv_wk as i64;
            if ni < 0 || ni > input.len() as i64 || ns < 0 || ns > max_stack as i64 {
                continue;
            }
            if c.work.is_empty() {
                if nw != 0 {
                    continue;
                }
            } else if nw < 0 || nw >= c.work.len() as i64 {
                continue;
            }
            let mut work = c.work.clone();
            if !work.is_empty() {
                work[c.pos_wk] = b.write_wk;
            }
            let mut stack = c.stack.clone();
            match t.op {
                StackOp::Push(s) => stack.push(s),
                StackOp::Pop => {
                    stack.pop();
                }
                StackOp::None => {}
            }
            out.push((
                ti,
                StackConfig {
                    state: b.next,
                    pos_in: ni as usize,
                    pos_stk: ns as usize,
                    pos_wk: nw as usize,
                    work,
                    stack,
                },
            ));
        }
        out
    }

    /// Section-based text format: the TuringMachine grammar with a trailing
    /// stack-op token (`push:<sym>` | `pop` | `-`) per transition and a
    /// `meta:` section of `key=value` pairs for
    /// `{b, c, steps, stack, work}`.
    pub fn parse(input: &str) -> Result<Self, MachineError> {
        let body = SectionedMachine::parse(input, true)?;
        let mut meta = MachineMeta::default();
        for (k, v) in &body.meta {
            let val: usize = v.parse().map_err(|_| MachineError::Parse {
                line: 0,
                msg: format!("bad meta value `{}`", v),
            })?;
            match k.as_str() {
                "b" => meta.block_size = Some(val),
                "c" => meta.tree_depth_constant = Some(val),
                "steps" => meta.step_bound = Some(val),
                "stack" => meta.stack_bound = Some(val),
                "work" => meta.work_bound = Some(val),
                _ => {
                    return Err(MachineError::Parse {
                        line: 0,
                        msg: format!("unknown meta key `{}`", k),
                    })
                }
            }
        }
        let ops: Vec<Option<String>> = body.rows.iter().map(|(_, _, op)| op.clone()).collect();
        let lines: Vec<usize> = body.rows.iter().map(|(l, _, _)| *l).collect();
        let tm = body.into_turing()?;
        let mut transitions = Vec::new();
        for ((base, op), line) in tm.transitions.iter().zip(&ops).zip(&lines) {
            let op = match op.as_deref() {
                Some("-") => StackOp::None,
                Some("pop") => StackOp::Pop,
                Some(tok) if tok.starts_with("push:") => {
                    let sym = &tok[5..];
                    let idx = tm.symbol_index(sym).ok_or(MachineError::Parse {
                        line: *line,
                        msg: format!("undeclared push symbol `{}`", sym),
                    })?;
                    StackOp::Push(idx)
                }
                other => {
                    return Err(MachineError::Parse {
                        line: *line,
                        msg: format!("bad stack-op token `{:?}`", other),
                    })
                }
            };
            transitions.push(StackTransition { base: *base, op });
        }
        let m = StackMachine {
            states: tm.states,
            alphabet: tm.alphabet,
            blank: tm.blank,
            init: tm.init,
            accept: tm.accept,
            transitions,
            meta,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("states: {}\n", self.states.join(" ")));
        out.push_str(&format!("alphabet: {}\n", self.alphabet.join(" ")));
        out.push_str(&format!("init: {}\n", self.states[self.init]));
        let acc: Vec<&str> = self.accept.iter().map(|&i| self.states[i].as_str()).collect();
        out.push_str(&format!("accept: {}\n", acc.join(" ")));
        let mut meta = Vec::new();
        if let Some(v) = self.meta.block_size {
            meta.push(format!("b={}", v));
        }
        if let Some(v) = self.meta.tree_depth_constant {
            meta.push(format!("c={}", v));
        }
        if let Some(v) = self.meta.step_bound {
            meta.push(format!("steps={}", v));
        }
        if let Some(v) = self.meta.stack_bound {
            meta.push(format!("stack={}", v));
        }
        if let Some(v) = self.meta.work_bound {
            meta.push(format!("work={}", v));
        }
        if !meta.is_empty() {
            out.push_str(&format!("meta: {}\n", meta.join(" ")));
        }
        for t in &self.transitions {
            let b = &t.base;
            let op = match t.op {
                StackOp::None => "-".to_string(),
                StackOp::Pop => "pop".to_string(),
                StackOp::Push(s) => format!("push:{}", self.alphabet[s]),
            };
            out.push_str(&format!(
                "{} {} {} {} -> {} {} {} {} {} {}\n",
                self.states[b.state],
                self.alphabet[b.read_in],
                self.alphabet[b.read_stk],
                self.alphabet[b.read_wk],
                self.states[b.next],
                self.alphabet[b.write_wk],
                fmt_move(b.mv_in),
                fmt_move(b.mv_stk),
                fmt_move(b.mv_wk),
                op,
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// One executed step: the configuration before the step and the index of
/// the transition taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTranscript {
    pub steps: Vec<(StackConfig, usize)>,
    pub final_config: StackConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutcome {
    pub accepts: bool,
    pub witness: Option<RunTranscript>,
}

/// Breadth-first acceptance check: accepts iff an accepting state is
/// reachable within `max_steps` steps and stack height `max_stack`; the
/// witness is a shortest accepting transcript.
pub fn simulate(
    m: &StackMachine,
    input: &[usize],
    max_steps: usize,
    max_stack: usize,
) -> Result<SimOutcome, AuxError> {
    m.validate()?;
    // Undeclared work bounds default to one cell per input symbol.
    let work_cells = m.meta.work_bound.unwrap_or(input.len() + 1);
    let start = m.initial_config(work_cells);
    let mut dist: HashMap<StackConfig, usize> = HashMap::new();
    let mut parent: HashMap<StackConfig, (StackConfig, usize)> = HashMap::new();
    dist.insert(start.clone(), 0);
    let mut queue = VecDeque::new();
    queue.push_back(start.clone());
    let mut accepting: Option<StackConfig> = None;
    if m.accept.contains(&start.state) {
        accepting = Some(start.clone());
    }
    let index = m.transition_index();
    let empty: Vec<usize> = Vec::new();
    while let Some(c) = queue.pop_front() {
        if accepting.is_some() {
            break;
        }
        let d = dist[&c];
        if d == max_steps {
            continue;
        }
        let a_in = c.pos_in.min(input.len());
        let a_in = input.get(a_in).copied().unwrap_or(m.blank);
        let a_stk = c.stack.get(c.pos_stk).copied().unwrap_or(m.blank);
        let a_wk = if c.work.is_empty() {
            m.blank
        } else {
            c.work[c.pos_wk]
        };
        let candidates = index.get(&(c.state, a_in, a_stk, a_wk)).unwrap_or(&empty);
        for (ti, nc) in m.successors_from(&c, input, max_stack, candidates) {
            if dist.contains_key(&nc) {
                continue;
            }
            if dist.len() >= SIMULATE_VISITED_CAP {
                return Err(AuxError::BoundExceeded(SIMULATE_VISITED_CAP));
            }
            dist.insert(nc.clone(), d + 1);
            parent.insert(nc.clone(), (c.clone(), ti));
            if m.accept.contains(&nc.state) {
                accepting = Some(nc.clone());
                break;
            }
            queue.push_back(nc);
        }
    }
    match accepting {
        None => Ok(SimOutcome {
            accepts: false,
            witness: None,
        }),
        Some(acc) => {
            let mut steps = Vec::new();
            let mut cur = acc.clone();
            while let Some((prev, ti)) = parent.get(&cur) {
                steps.push((prev.clone(), *ti));
                cur = prev.clone();
            }
            steps.reverse();
            Ok(SimOutcome {
                accepts: true,
                witness: Some(RunTranscript {
                    steps,
                    final_config: acc,
                }),
            })
        }
    }
}

/// Replays a transcript step by step, confirming that consecutive
/// configurations are related by the declared transition.
pub fn replay(
    m: &StackMachine,
    input: &[usize],
    max_stack: usize,
    t: &RunTranscript,
) -> Result<(), AuxError> {
    let mut prev: Option<&StackConfig> = None;
    for (i, (config, ti)) in t.steps.iter().enumerate() {
        if let Some(p) = prev {
            if p != config {
                return Err(AuxError::BadTranscript {
                    step: i,
                    msg: "configuration mismatch".into(),
                });
            }
        }
        let succ = m.successors(config, input, max_stack);
        let next = succ
            .iter()
            .find(|(j, _)| j == ti)
            .map(|(_, nc)| nc.clone())
            .ok_or(AuxError::BadTranscript {
                step: i,
                msg: format!("transition {} unavailable", ti),
            })?;
        if i + 1 == t.steps.len() {
            if next != t.final_config {
                return Err(AuxError::BadTranscript {
                    step: i,
                    msg: "final configuration mismatch".into(),
                });
            }
        }
        prev = None;
        let _ = prev;
        prev = Some(&t.steps.get(i + 1).map(|(c, _)| c).unwrap_or(&t.final_config));
    }
    Ok(())
}

impl RunTranscript {
    /// Stack operations of the run, in order.
    pub fn ops(&self, m: &StackMachine) -> Vec<StackOp> {
        self.steps
            .iter()
            .map(|&(_, ti)| m.transitions[ti].op)
            .filter(|op| *op != StackOp::None)
            .collect()
    }

    /// One step per line: `<state> <pos_in> <pos_stk> <pos_wk> w=<work>
    /// s=<stack> t=<transition>`, then a final line for the last
    /// configuration.
    pub fn serialize(&self, m: &StackMachine) -> String {
        let rend = |c: &StackConfig| {
            let work: Vec<&str> = c.work.iter().map(|&s| m.alphabet[s].as_str()).collect();
            let stack: Vec<&str> = c.stack.iter().map(|&s| m.alphabet[s].as_str()).collect();
            format!(
                "{} {} {} {} w={} s={}",
                m.states[c.state],
                c.pos_in,
                c.pos_stk,
                c.pos_wk,
                if work.is_empty() { "-".into() } else { work.join(",") },
                if stack.is_empty() { "-".into() } else { stack.join(",") },
            )
        };
        let mut out = String::new();
        for (c, ti) in &self.steps {
            out.push_str(&format!("{} t={}\n", rend(c), ti));
        }
        out.push_str(&format!("{} end\n", rend(&self.final_config)));
        out
    }
}

// ---------------------------------------------------------------------------
// Push-pop trees
// ---------------------------------------------------------------------------

/// Ordered rooted tree abstracting a balanced push/pop sequence; node 0 is
/// the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PushPopTree {
    pub children: Vec<Vec<usize>>,
}

impl PushPopTree {
    pub fn single() -> Self {
        PushPopTree {
            children: vec![vec![]],
        }
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Depth in edges.
    pub fn depth(&self) -> usize {
        fn go(t: &PushPopTree, u: usize) -> usize {
            t.children[u].iter().map(|&c| 1 + go(t, c)).max().unwrap_or(0)
        }
        go(self, 0)
    }

    /// The canonical push/pop sequence whose tree this is.
    pub fn canonical_sequence(&self) -> Vec<bool> {
        fn go(t: &PushPopTree, u: usize, out: &mut Vec<bool>) {
            for &c in &t.children[u] {
                out.push(true);
                go(t, c, out);
                out.push(false);
            }
        }
        let mut out = Vec::new();
        go(self, 0, &mut out);
        out
    }

    /// Depth if the tree is full binary with all leaves at one level.
    pub fn full_binary_depth(&self) -> Option<usize> {
        let mut leaf_depth = None;
        fn go(
            t: &PushPopTree,
            u: usize,
            d: usize,
            leaf_depth: &mut Option<usize>,
        ) -> bool {
            match t.children[u].len() {
                0 => match *leaf_depth {
                    None => {
                        *leaf_depth = Some(d);
                        true
                    }
                    Some(ld) => ld == d,
                },
                2 => t.children[u].iter().all(|&c| go(t, c, d + 1, leaf_depth)),
                _ => false,
            }
        }
        if go(self, 0, 0, &mut leaf_depth) {
            leaf_depth
        } else {
            None
        }
    }

    /// DFS preorder of all nodes.
    pub fn preorder(&self) -> Vec<usize> {
        fn go(t: &PushPopTree, u: usize, out: &mut Vec<usize>) {
            out.push(u);
            for &c in &t.children[u] {
                go(t, c, out);
            }
        }
        let mut out = Vec::new();
        go(self, 0, &mut out);
        out
    }

    pub fn parent_map(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.children.len()];
        for (u, ch) in self.children.iter().enumerate() {
            for &c in ch {
                parent[c] = Some(u);
            }
        }
        parent
    }
}

/// Tree of a balanced push/pop sequence: a push opens a child, a pop
/// returns to the parent.
pub fn tree_of_sequence(ops: &[bool]) -> Result<PushPopTree, AuxError> {
    let mut children: Vec<Vec<usize>> = vec![vec![]];
    let mut stack = vec![0usize];
    for (i, &push) in ops.iter().enumerate() {
        if push {
            let node = children.len();
            children.push(vec![]);
            let &cur = stack.last().expect("root present");
            children[cur].push(node);
            stack.push(node);
        } else {
            stack.pop();
            if stack.is_empty() {
                return Err(AuxError::Unbalanced(i));
            }
        }
    }
    if stack.len() != 1 {
        return Err(AuxError::Unbalanced(ops.len()));
    }
    Ok(PushPopTree { children })
}

/// Push-pop tree of a transcript whose stack starts and ends empty.
pub fn pushpop_tree_of(m: &StackMachine, t: &RunTranscript) -> Result<PushPopTree, AuxError> {
    if !t.final_config.stack.is_empty() {
        return Err(AuxError::Unbalanced(t.steps.len()));
    }
    let ops: Vec<bool> = t
        .ops(m)
        .into_iter()
        .map(|op| matches!(op, StackOp::Push(_)))
        .collect();
    tree_of_sequence(&ops)
}

/// Push-pop tree with whole blocks of `b` consecutive identical operations
/// treated as atomic.
pub fn pushpop_tree_blocks(
    m: &StackMachine,
    t: &RunTranscript,
    b: usize,
) -> Result<PushPopTree, AuxError> {
    let ops = t.ops(m);
    let mut grouped = Vec::new();
    let mut i = 0;
    while i < ops.len() {
        let push = matches!(ops[i], StackOp::Push(_));
        let mut j = i;
        while j < ops.len()
            && matches!(ops[j], StackOp::Push(_)) == push
            && j - i < b
        {
            j += 1;
        }
        if j - i != b {
            return Err(AuxError::NotBlocked {
                b,
                msg: format!("run of {} at op {}", j - i, i),
            });
        }
        grouped.push(push);
        i = j;
    }
    tree_of_sequence(&grouped)
}

// ---------------------------------------------------------------------------
// Full binary tree embedding
// ---------------------------------------------------------------------------

/// Exact ceiling of lg, with `ceil_lg_exact(1) = 0`.
pub fn ceil_lg_exact(n: usize) -> usize {
    assert!(n >= 1);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// Embedding of an ordered tree into the full binary tree of depth exactly
/// `4 * ceil_lg(|t|)`: node `u` maps to heap index `mapping[u]` (root = 1).
/// Preserves ancestry in both directions and the traversal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeEmbedding {
    pub target_depth: usize,
    pub mapping: Vec<u64>,
}

pub fn embed_full_binary(t: &PushPopTree) -> Result<TreeEmbedding, AuxError> {
    let n = t.len();
    let depth = t.depth();
    if n == 0 || (depth > 0 && (1usize << depth.min(63)) > n) {
        return Err(AuxError::DepthPrecondition { depth, size: n });
    }
    let target_depth = 4 * ceil_lg_exact(n);
    let mut mapping = vec![0u64; n];
    let sizes = {
        let mut sz = vec![1usize; n];
        for &u in t.preorder().iter().rev() {
            for &c in &t.children[u] {
                sz[u] += sz[c];
            }
        }
        sz
    };
    mapping[0] = 1;
    // Weight-balanced allocation: the ordered children of u are split into
    // two halves by subtree weight, recursing into the two subtrees of the
    // allocation slot until a single child owns the slot.
    fn alloc(
        t: &PushPopTree,
        sizes: &[usize],
        list: &[usize],
        slot: u64,
        target_depth: usize,
        mapping: &mut Vec<u64>,
    ) -> Result<(), AuxError> {
        let slot_depth = (63 - slot.leading_zeros()) as usize;
        if slot_depth > target_depth {
            return Err(AuxError::DepthPrecondition {
                depth: slot_depth,
                size: mapping.len(),
            });
        }
        if list.len() == 1 {
            let u = list[0];
            mapping[u] = slot;
            if !t.children[u].is_empty() {
                alloc(t, sizes, &t.children[u], 2 * slot, target_depth, mapping)?;
            }
            return Ok(());
        }
        let total: usize = list.iter().map(|&u| sizes[u]).sum();
        let mut acc = 0usize;
        let mut cut = 0usize;
        for (i, &u) in list.iter().enumerate() {
            acc += sizes[u];
            if 2 * acc >= total && i + 1 < list.len() {
                cut = i + 1;
                break;
            }
        }
        if cut == 0 {
            cut = list.len() - 1;
        }
        alloc(t, sizes, &list[..cut], 2 * slot, target_depth, mapping)?;
        alloc(t, sizes, &list[cut..], 2 * slot + 1, target_depth, mapping)
    }
    if !t.children[0].is_empty() {
        alloc(t, &sizes, &t.children[0], 2, target_depth, &mut mapping)
            .map_err(|_| AuxError::DepthPrecondition { depth, size: n })?;
    }
    // Structural checks: injectivity, two-way ancestry, traversal order.
    let heap_is_ancestor = |a: u64, mut b: u64| -> bool {
        while b > a {
            b /= 2;
        }
        a == b
    };
    let mut seen = BTreeSet::new();
    for &h in &mapping {
        assert!(h >= 1 && seen.insert(h), "embedding must be injective");
        assert!(((63 - h.leading_zeros()) as usize) <= target_depth);
    }
    let parent = t.parent_map();
    for u in 0..n {
        if let Some(p) = parent[u] {
            assert!(heap_is_ancestor(mapping[p], mapping[u]));
        }
    }
    for u in 0..n {
        for v in 0..n {
            if u != v && heap_is_ancestor(mapping[u], mapping[v]) {
                assert!(
                    is_tree_ancestor(&parent, u, v),
                    "embedding must reflect ancestry"
                );
            }
        }
    }
    Ok(TreeEmbedding {
        target_depth,
        mapping,
    })
}

fn is_tree_ancestor(parent: &[Option<usize>], anc: usize, mut v: usize) -> bool {
    loop {
        if v == anc {
            return true;
        }
        match parent[v] {
            Some(p) => v = p,
            None => return false,
        }
    }
}

// ---------------------------------------------------------------------------
// Regularity restrictions
// ---------------------------------------------------------------------------

/// Outcome of checking the three regularity restrictions. The block and
/// state-only restrictions are syntactic properties of the transition
/// relation; the tree-shape restriction is a property of accepting runs and
/// can only be certified per transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularityReport {
    /// (a): stack operations group into uninterrupted runs of exactly `b`.
    pub blocks: Result<(), String>,
    /// (b): op transitions only change state, and op availability is
    /// independent of the symbols under the heads.
    pub state_only: Result<(), String>,
    /// (c): the transcript's block push-pop tree is the full binary tree of
    /// depth exactly `c * ceil_lg(n)`; carries that depth when it is.
    pub tree_shape: Option<Result<usize, String>>,
}

impl RegularityReport {
    pub fn all_pass(&self) -> bool {
        self.blocks.is_ok()
            && self.state_only.is_ok()
            && self.tree_shape.as_ref().map_or(true, |t| t.is_ok())
    }
}

/// Read alphabets the relation actually distinguishes, one per tape; the
/// symbol-independence check quantifies over their product.
fn occurring_reads(m: &StackMachine) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut a_in: BTreeSet<usize> = [m.blank].into_iter().collect();
    let mut a_stk: BTreeSet<usize> = [m.blank].into_iter().collect();
    let mut a_wk: BTreeSet<usize> = [m.blank].into_iter().collect();
    for t in &m.transitions {
        a_in.insert(t.base.read_in);
        a_stk.insert(t.base.read_stk);
        a_wk.insert(t.base.read_wk);
        a_wk.insert(t.base.write_wk);
        if let StackOp::Push(s) = t.op {
            a_stk.insert(s);
        }
    }
    (
        a_in.into_iter().collect(),
        a_stk.into_iter().collect(),
        a_wk.into_iter().collect(),
    )
}

/// Checks restrictions (a) and (b) on the transition relation and, when a
/// transcript is supplied, restriction (c) on its block push-pop tree.
pub fn check_regular(
    m: &StackMachine,
    n: usize,
    transcript: Option<&RunTranscript>,
) -> Result<RegularityReport, AuxError> {
    let b = m.meta.block_size.ok_or(AuxError::MissingMeta("b"))?;
    let c = m
        .meta
        .tree_depth_constant
        .ok_or(AuxError::MissingMeta("c"))?;

    // (b) first: per-transition shape, then symbol independence.
    let mut state_only = Ok(());
    'b_check: {
        for (i, t) in m.transitions.iter().enumerate() {
            if t.op == StackOp::None {
                continue;
            }
            if t.base.mv_in != 0 || t.base.mv_stk != 0 || t.base.mv_wk != 0 {
                state_only = Err(format!("op transition {} moves a head", i));
                break 'b_check;
            }
            if t.base.write_wk != t.base.read_wk {
                state_only = Err(format!("op transition {} writes the work tape", i));
                break 'b_check;
            }
        }
        let (sin, sstk, swk) = occurring_reads(m);
        for q in 0..m.states.len() {
            let sig = |ai: usize, as_: usize, aw: usize| -> BTreeSet<(StackOp, usize)> {
                m.transitions
                    .iter()
                    .filter(|t| {
                        t.op != StackOp::None
                            && t.base.state == q
                            && t.base.read_in == ai
                            && t.base.read_stk == as_
                            && t.base.read_wk == aw
                    })
                    .map(|t| (t.op, t.base.next))
                    .collect()
            };
            let mut reference: Option<BTreeSet<(StackOp, usize)>> = None;
            for &ai in &sin {
                for &as_ in &sstk {
                    for &aw in &swk {
                        let s = sig(ai, as_, aw);
                        match &reference {
                            None => reference = Some(s),
                            Some(r) => {
                                if *r != s {
                                    state_only = Err(format!(
                                        "state {} offers different stack ops depending on the read symbols",
                                        m.states[q]
                                    ));
                                    break 'b_check;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // (a): propagate block-phase labels from the initial state.
    #[derive(Clone, Copy, PartialEq, Eq, Debug)]
    enum Phase {
        Free,
        In(bool, usize), // (is_push, ops already done in the block)
    }
    let mut blocks = Ok(());
    let mut label: Vec<Option<Phase>> = vec![None; m.states.len()];
    label[m.init] = Some(Phase::Free);
    let mut queue: VecDeque<usize> = [m.init].into();
    'a_check: while let Some(q) = queue.pop_front() {
        let lq = label[q].expect("queued states are labeled");
        for (i, t) in m.transitions.iter().enumerate() {
            if t.base.state != q {
                continue;
            }
            let target = match (lq, t.op) {
                (Phase::Free, StackOp::None) => Phase::Free,
                (Phase::Free, op) => {
                    let push = matches!(op, StackOp::Push(_));
                    if b == 1 {
                        Phase::Free
                    } else {
                        Phase::In(push, 1)
                    }
                }
                (Phase::In(..), StackOp::None) => {
                    blocks = Err(format!(
                        "transition {} leaves a block after fewer than {} ops",
                        i, b
                    ));
                    break 'a_check;
                }
                (Phase::In(push, j), op) => {
                    if matches!(op, StackOp::Push(_)) != push {
                        blocks = Err(format!("transition {} mixes push and pop in one block", i));
                        break 'a_check;
                    }
                    if j + 1 == b {
                        Phase::Free
                    } else {
                        Phase::In(push, j + 1)
                    }
                }
            };
            match label[t.base.next] {
                None => {
                    label[t.base.next] = Some(target);
                    queue.push_back(t.base.next);
                }
                Some(prev) => {
                    if prev != target {
                        blocks = Err(format!(
                            "state {} is reachable at inconsistent block phases",
                            m.states[t.base.next]
                        ));
                        break 'a_check;
                    }
                }
            }
        }
    }
    if blocks.is_ok() {
        if let Some(s) = m.meta.stack_bound {
            let want = s.div_ceil(ceil_lg(n));
            if b != want {
                blocks = Err(format!(
                    "declared block size {} differs from ceil(s / lg n) = {}",
                    b, want
                ));
            }
        }
    }

    let tree_shape = transcript.map(|t| {
        let expect = c * ceil_lg(n);
        let tree = pushpop_tree_blocks(m, t, b).map_err(|e| e.to_string())?;
        match tree.full_binary_depth() {
            Some(d) if d == expect => Ok(d),
            Some(d) => Err(format!("full binary of depth {}, expected {}", d, expect)),
            None => Err("block push-pop tree is not a full binary tree".into()),
        }
    });

    Ok(RegularityReport {
        blocks,
        state_only,
        tree_shape,
    })
}

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

/// States the reachable product construction can be in. The original
/// machine's state, the block buffer, the logical stack-head mode and the
/// Euler-tour position of the full binary tree all live in the product
/// state; the physical stack holds whole blocks (real or dummy-filled).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Hd {
    /// Logical head in the buffer region, offset from the buffer base.
    Buf(u8),
    /// Logical head on the top-most real symbol of the physical stack (the
    /// physical head is parked there too).
    PhysTop,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Core {
    q: u16,
    buf: Vec<u8>,
    hd: Hd,
    /// Packed Euler position: node * 4 + stage.
    pos: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum RState {
    Sim(Core),
    /// Walk up to the first blank, then down to the top real symbol.
    SeekTopUp(Core),
    SeekTopDown(Core),
    /// Pushing `content[j..]`; resumes at `core`.
    PushChain { core: Core, content: Vec<u8>, j: u8 },
    /// Refill: locate the top block, read it, pop it into the buffer.
    ScanUpRefill(Core),
    ScanDownRefill { core: Core, acc: Vec<u8> },
    PopChainRefill { core: Core, acc: Vec<u8>, j: u8 },
    /// Dummy block disposal: verify the top block is all-dummy, pop it.
    ScanUpDummy(Core),
    ScanDownDummy { core: Core, j: u8 },
    PopChainDummy { core: Core, j: u8 },
    /// Original machine accepted: finish the Euler tour, dropping content.
    Drain { pos: u32 },
    DrainPush { pos: u32, j: u8 },
    DrainPop { pos: u32, j: u8 },
    Accept,
}

const STAGE_FIRST: u32 = 0;
const STAGE_MID: u32 = 1;
const STAGE_DONE: u32 = 2;

fn pack(node: u32, stage: u32) -> u32 {
    node * 4 + stage
}

fn unpack(pos: u32) -> (u32, u32) {
    (pos / 4, pos % 4)
}

struct Tree0 {
    depth: usize,
}

impl Tree0 {
    fn is_leaf(&self, node: u32) -> bool {
        node >= 1 << self.depth
    }

    /// Euler descent available from `pos`, and the child position entered.
    fn descend(&self, pos: u32) -> Option<u32> {
        let (node, stage) = unpack(pos);
        if self.is_leaf(node) || stage > STAGE_MID {
            return None;
        }
        let child = 2 * node + stage; // stage 0 -> left, 1 -> right
        Some(pack(child, STAGE_FIRST))
    }

    /// Euler ascent available from `pos` (the subtree below is finished),
    /// and the parent position resumed.
    fn ascend(&self, pos: u32) -> Option<u32> {
        let (node, stage) = unpack(pos);
        if node == 1 {
            return None;
        }
        let done = if self.is_leaf(node) {
            stage == STAGE_FIRST
        } else {
            stage == STAGE_DONE
        };
        if !done {
            return None;
        }
        let parent = node / 2;
        let stage = if node % 2 == 0 { STAGE_MID } else { STAGE_DONE };
        Some(pack(parent, stage))
    }
}

struct RegBuilder<'a> {
    m: &'a StackMachine,
    tree: Tree0,
    b: usize,
    dummy: u8,
    sigma_in: Vec<usize>,
    sigma_stk: Vec<usize>,
    states: Vec<RState>,
    index: HashMap<RState, usize>,
    rows: Vec<(usize, usize, usize, usize, usize, i8, i8, StackOp)>,
    queue: VecDeque<usize>,
}

/// Hard cap on the product construction.
const REGULARIZE_STATE_CAP: usize = 250_000;

impl<'a> RegBuilder<'a> {
    fn intern(&mut self, s: RState) -> Result<usize, AuxError> {
        if let Some(&i) = self.index.get(&s) {
            return Ok(i);
        }
        if self.states.len() >= REGULARIZE_STATE_CAP {
            return Err(AuxError::Unsupported(format!(
                "regularized product exceeds {} states",
                REGULARIZE_STATE_CAP
            )));
        }
        let i = self.states.len();
        self.states.push(s.clone());
        self.index.insert(s, i);
        self.queue.push_back(i);
        Ok(i)
    }

    /// Emits one row; `a_stk`/`a_in` of `None` mean "wildcard over the
    /// occurring read set".
    fn row(
        &mut self,
        from: usize,
        a_in: Option<usize>,
        a_stk: Option<usize>,
        to: RState,
        d_in: i8,
        d_stk: i8,
        op: StackOp,
    ) -> Result<(), AuxError> {
        let to = self.intern(to)?;
        let blank = self.m.blank;
        let ins: Vec<usize> = match a_in {
            Some(a) => vec![a],
            None => self.sigma_in.clone(),
        };
        let stks: Vec<usize> = match a_stk {
            Some(a) => vec![a],
            None => self.sigma_stk.clone(),
        };
        for &ai in &ins {
            for &astk in &stks {
                self.rows.push((from, ai, astk, blank, to, d_in, d_stk, op));
            }
        }
        Ok(())
    }

    /// Logical move of the original stack head; `None` means the move needs
    /// a multi-step walk to the physical top.
    fn move_hd(&self, hd: &Hd, mv: i8, buf_len: usize) -> Option<Result<Hd, ()>> {
        let b = self.b as u8;
        let _ = buf_len;
        Some(match (hd, mv) {
            (h, 0) => Ok(h.clone()),
            (Hd::Buf(o), 1) => {
                if o + 1 <= b {
                    Ok(Hd::Buf(o + 1))
                } else {
                    Err(())
                }
            }
            (Hd::Buf(0), -1) => return None,
            (Hd::Buf(o), -1) => Ok(Hd::Buf(o - 1)),
            (Hd::PhysTop, 1) => Ok(Hd::Buf(0)),
            (Hd::PhysTop, -1) => Err(()),
            _ => unreachable!(),
        })
    }

    fn emit_sim(&mut self, si: usize, core: &Core) -> Result<(), AuxError> {
        let blank = self.m.blank;
        let dummy = self.dummy as usize;
        // Original transitions.
        let transitions = self.m.transitions.clone();
        for delta in transitions.iter().filter(|t| t.base.state == core.q as usize) {
            let d = &delta.base;
            // Logical read on the stack tape.
            let (a_stk_row, logical_ok): (Option<usize>, bool) = match core.hd {
                Hd::Buf(o) => {
                    let logical = core
                        .buf
                        .get(o as usize)
                        .map(|&s| s as usize)
                        .unwrap_or(blank);
                    (None, logical == d.read_stk)
                }
                Hd::PhysTop => (Some(d.read_stk), d.read_stk != blank && d.read_stk != dummy),
            };
            if !logical_ok {
                continue;
            }
            match delta.op {
                StackOp::None => {
                    let Some(hd2) = self.move_hd(&core.hd, d.mv_stk, core.buf.len()) else {
                        // Crossing below the buffer: seek the physical top.
                        let target = Core {
                            q: d.next as u16,
                            hd: Hd::PhysTop,
                            ..core.clone()
                        };
                        self.row(si, Some(d.read_in), a_stk_row, RState::SeekTopUp(target), d.mv_in, 0, StackOp::None)?;
                        continue;
                    };
                    let Ok(hd2) = hd2 else { continue };
                    let target = Core {
                        q: d.next as u16,
                        hd: hd2,
                        ..core.clone()
                    };
                    self.row(si, Some(d.read_in), a_stk_row, RState::Sim(target), d.mv_in, 0, StackOp::None)?;
                }
                StackOp::Push(sym) => {
                    if core.buf.len() < self.b - 1 {
                        let mut buf2 = core.buf.clone();
                        buf2.push(sym as u8);
                        let Some(hd2) = self.move_hd(&core.hd, d.mv_stk, buf2.len()) else {
                            let target = Core {
                                q: d.next as u16,
                                buf: buf2,
                                hd: Hd::PhysTop,
                                pos: core.pos,
                            };
                            self.row(si, Some(d.read_in), a_stk_row, RState::SeekTopUp(target), d.mv_in, 0, StackOp::None)?;
                            continue;
                        };
                        let Ok(hd2) = hd2 else { continue };
                        let target = Core {
                            q: d.next as u16,
                            buf: buf2,
                            hd: hd2,
                            pos: core.pos,
                        };
                        self.row(si, Some(d.read_in), a_stk_row, RState::Sim(target), d.mv_in, 0, StackOp::None)?;
                    } else {
                        // Flush: the filled buffer descends an Euler edge.
                        let Some(pos2) = self.tree.descend(core.pos) else {
                            continue;
                        };
                        // The head must land exactly on the new buffer base.
                        let Hd::Buf(o) = core.hd else { continue };
                        if o as i64 + d.mv_stk as i64 != self.b as i64 {
                            continue;
                        }
                        let mut content = core.buf.clone();
                        content.push(sym as u8);
                        let target = Core {
                            q: d.next as u16,
                            buf: Vec::new(),
                            hd: Hd::Buf(0),
                            pos: pos2,
                        };
                        self.row(
                            si,
                            Some(d.read_in),
                            a_stk_row,
                            RState::PushChain {
                                core: target,
                                content,
                                j: 0,
                            },
                            d.mv_in,
                            0,
                            StackOp::None,
                        )?;
                    }
                }
                StackOp::Pop => {
                    if core.buf.is_empty() {
                        continue; // served through the refill path
                    }
                    let mut buf2 = core.buf.clone();
                    buf2.pop();
                    let Some(hd2) = self.move_hd(&core.hd, d.mv_stk, buf2.len()) else {
                        let target = Core {
                            q: d.next as u16,
                            buf: buf2,
                            hd: Hd::PhysTop,
                            pos: core.pos,
                        };
                        self.row(si, Some(d.read_in), a_stk_row, RState::SeekTopUp(target), d.mv_in, 0, StackOp::None)?;
                        continue;
                    };
                    let Ok(hd2) = hd2 else { continue };
                    let target = Core {
                        q: d.next as u16,
                        buf: buf2,
                        hd: hd2,
                        pos: core.pos,
                    };
                    self.row(si, Some(d.read_in), a_stk_row, RState::Sim(target), d.mv_in, 0, StackOp::None)?;
                }
            }
        }
        // Dummy block descent, available wherever the tour can go deeper.
        if let Some(pos2) = self.tree.descend(core.pos) {
            let target = Core {
                pos: pos2,
                ..core.clone()
            };
            let content = vec![self.dummy; self.b];
            let to = if self.b == 1 {
                RState::Sim(target)
            } else {
                RState::PushChain {
                    core: target,
                    content,
                    j: 1,
                }
            };
            self.row(si, None, None, to, 0, 0, StackOp::Push(self.dummy as usize))?;
        }
        if let Some(pos2) = self.tree.ascend(core.pos) {
            // Dummy block disposal.
            let target = Core {
                pos: pos2,
                ..core.clone()
            };
            self.row(si, None, None, RState::ScanUpDummy(target), 0, 0, StackOp::None)?;
            // Refill: pop the top real block into the (empty) buffer.
            if core.buf.is_empty() {
                let hd2 = match core.hd {
                    Hd::PhysTop => Some(Hd::Buf(self.b as u8 - 1)),
                    Hd::Buf(0) => Some(Hd::Buf(self.b as u8)),
                    Hd::Buf(_) => None,
                };
                if let Some(hd2) = hd2 {
                    let target = Core {
                        q: core.q,
                        buf: Vec::new(),
                        hd: hd2,
                        pos: pos2,
                    };
                    self.row(si, None, None, RState::ScanUpRefill(target), 0, 0, StackOp::None)?;
                }
            }
        }
        // The original machine accepted: drain the tour.
        if self.m.accept.contains(&(core.q as usize)) {
            self.row(si, None, None, RState::Drain { pos: core.pos }, 0, 0, StackOp::None)?;
        }
        Ok(())
    }

    fn emit_state(&mut self, si: usize) -> Result<(), AuxError> {
        let state = self.states[si].clone();
        let blank = self.m.blank;
        let dummy = self.dummy as usize;
        let reals: Vec<usize> = self
            .sigma_stk
            .clone()
            .into_iter()
            .filter(|&s| s != blank && s != dummy)
            .collect();
        match state {
            RState::Sim(core) => self.emit_sim(si, &core)?,
            RState::SeekTopUp(core) => {
                for &s in &self.sigma_stk.clone() {
                    if s == blank {
                        self.row(si, None, Some(s), RState::SeekTopDown(core.clone()), 0, -1, StackOp::None)?;
                    } else {
                        self.row(si, None, Some(s), RState::SeekTopUp(core.clone()), 0, 1, StackOp::None)?;
                    }
                }
            }
            RState::SeekTopDown(core) => {
                self.row(si, None, Some(dummy), RState::SeekTopDown(core.clone()), 0, -1, StackOp::None)?;
                for &s in &reals {
                    self.row(si, None, Some(s), RState::Sim(core.clone()), 0, 0, StackOp::None)?;
                }
            }
            RState::PushChain { core, content, j } => {
                let sym = content[j as usize] as usize;
                let to = if j as usize + 1 == self.b {
                    RState::Sim(core)
                } else {
                    RState::PushChain {
                        core,
                        content,
                        j: j + 1,
                    }
                };
                self.row(si, None, None, to, 0, 0, StackOp::Push(sym))?;
            }
            RState::ScanUpRefill(core) => {
                for &s in &self.sigma_stk.clone() {
                    if s == blank {
                        self.row(
                            si,
                            None,
                            Some(s),
                            RState::ScanDownRefill {
                                core: core.clone(),
                                acc: Vec::new(),
                            },
                            0,
                            -1,
                            StackOp::None,
                        )?;
                    } else {
                        self.row(si, None, Some(s), RState::ScanUpRefill(core.clone()), 0, 1, StackOp::None)?;
                    }
                }
            }
            RState::ScanDownRefill { core, acc } => {
                for &s in &reals {
                    let mut acc2 = acc.clone();
                    acc2.push(s as u8);
                    if acc2.len() == self.b {
                        self.row(
                            si,
                            None,
                            Some(s),
                            RState::PopChainRefill {
                                core: core.clone(),
                                acc: acc2,
                                j: 0,
                            },
                            0,
                            0,
                            StackOp::None,
                        )?;
                    } else {
                        self.row(
                            si,
                            None,
                            Some(s),
                            RState::ScanDownRefill {
                                core: core.clone(),
                                acc: acc2,
                            },
                            0,
                            -1,
                            StackOp::None,
                        )?;
                    }
                }
            }
            RState::PopChainRefill { core, acc, j } => {
                let to = if j as usize + 1 == self.b {
                    let mut buf: Vec<u8> = acc.clone();
                    buf.reverse();
                    RState::Sim(Core { buf, ..core })
                } else {
                    RState::PopChainRefill { core, acc, j: j + 1 }
                };
                self.row(si, None, None, to, 0, 0, StackOp::Pop)?;
            }
            RState::ScanUpDummy(core) => {
                for &s in &self.sigma_stk.clone() {
                    if s == blank {
                        self.row(
                            si,
                            None,
                            Some(s),
                            RState::ScanDownDummy {
                                core: core.clone(),
                                j: 0,
                            },
                            0,
                            -1,
                            StackOp::None,
                        )?;
                    } else {
                        self.row(si, None, Some(s), RState::ScanUpDummy(core.clone()), 0, 1, StackOp::None)?;
                    }
                }
            }
            RState::ScanDownDummy { core, j } => {
                if j as usize + 1 == self.b {
                    self.row(
                        si,
                        None,
                        Some(dummy),
                        RState::PopChainDummy { core, j: 0 },
                        0,
                        0,
                        StackOp::None,
                    )?;
                } else {
                    self.row(
                        si,
                        None,
                        Some(dummy),
                        RState::ScanDownDummy { core, j: j + 1 },
                        0,
                        -1,
                        StackOp::None,
                    )?;
                }
            }
            RState::PopChainDummy { core, j } => {
                let to = if j as usize + 1 == self.b {
                    match core.hd {
                        Hd::PhysTop => RState::SeekTopUp(core),
                        Hd::Buf(_) => RState::Sim(core),
                    }
                } else {
                    RState::PopChainDummy { core, j: j + 1 }
                };
                self.row(si, None, None, to, 0, 0, StackOp::Pop)?;
            }
            RState::Drain { pos } => {
                if let Some(pos2) = self.tree.descend(pos) {
                    let to = if self.b == 1 {
                        RState::Drain { pos: pos2 }
                    } else {
                        RState::DrainPush { pos: pos2, j: 1 }
                    };
                    self.row(si, None, None, to, 0, 0, StackOp::Push(dummy))?;
                }
                if let Some(pos2) = self.tree.ascend(pos) {
                    let to = if self.b == 1 {
                        RState::Drain { pos: pos2 }
                    } else {
                        RState::DrainPop { pos: pos2, j: 1 }
                    };
                    self.row(si, None, None, to, 0, 0, StackOp::Pop)?;
                }
                let (node, stage) = unpack(pos);
                if node == 1 && stage == STAGE_DONE {
                    self.row(si, None, Some(blank), RState::Accept, 0, 0, StackOp::None)?;
                }
            }
            RState::DrainPush { pos, j } => {
                let to = if j as usize + 1 == self.b {
                    RState::Drain { pos }
                } else {
                    RState::DrainPush { pos, j: j + 1 }
                };
                self.row(si, None, None, to, 0, 0, StackOp::Push(dummy))?;
            }
            RState::DrainPop { pos, j } => {
                let to = if j as usize + 1 == self.b {
                    RState::Drain { pos }
                } else {
                    RState::DrainPop { pos, j: j + 1 }
                };
                self.row(si, None, None, to, 0, 0, StackOp::Pop)?;
            }
            RState::Accept => {}
        }
        Ok(())
    }
}

fn rstate_name(s: &RState) -> String {
    let hd = |h: &Hd| match h {
        Hd::Buf(o) => format!("b{}", o),
        Hd::PhysTop => "pt".into(),
    };
    let buf = |b: &[u8]| {
        if b.is_empty() {
            "e".to_string()
        } else {
            b.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(".")
        }
    };
    let core = |c: &Core| format!("q{}~{}~{}~p{}", c.q, buf(&c.buf), hd(&c.hd), c.pos);
    match s {
        RState::Sim(c) => format!("sim({})", core(c)),
        RState::SeekTopUp(c) => format!("seeku({})", core(c)),
        RState::SeekTopDown(c) => format!("seekd({})", core(c)),
        RState::PushChain { core: c, content, j } => {
            format!("pushc({};{};{})", core(c), buf(content), j)
        }
        RState::ScanUpRefill(c) => format!("rflu({})", core(c)),
        RState::ScanDownRefill { core: c, acc } => format!("rfld({};{})", core(c), buf(acc)),
        RState::PopChainRefill { core: c, acc, j } => {
            format!("rflp({};{};{})", core(c), buf(acc), j)
        }
        RState::ScanUpDummy(c) => format!("dmyu({})", core(c)),
        RState::ScanDownDummy { core: c, j } => format!("dmyd({};{})", core(c), j),
        RState::PopChainDummy { core: c, j } => format!("dmyp({};{})", core(c), j),
        RState::Drain { pos } => format!("drain(p{})", pos),
        RState::DrainPush { pos, j } => format!("drnpu(p{};{})", pos, j),
        RState::DrainPop { pos, j } => format!("drnpo(p{};{})", pos, j),
        RState::Accept => "accfinal".into(),
    }
}

/// Quotients a machine by strong bisimulation: states with the same
/// acceptance status and, recursively, the same observable moves are
/// merged. The language, the block structure of stack operations and the
/// symbol-independence of ops are all preserved, and the transition table
/// shrinks accordingly.
fn minimize(m: &StackMachine) -> StackMachine {
    let nq = m.states.len();
    let mut class: Vec<usize> = (0..nq)
        .map(|q| usize::from(m.accept.contains(&q)))
        .collect();
    let mut rows_by_state: Vec<Vec<&StackTransition>> = vec![Vec::new(); nq];
    for t in &m.transitions {
        rows_by_state[t.base.state].push(t);
    }
    let mut count = 2;
    loop {
        let mut sig_ids: HashMap<(usize, Vec<(usize, usize, usize, i8, i8, StackOp, usize)>), usize> =
            HashMap::new();
        let mut next_class = vec![0usize; nq];
        for q in 0..nq {
            let mut sig: Vec<(usize, usize, usize, i8, i8, StackOp, usize)> = rows_by_state[q]
                .iter()
                .map(|t| {
                    (
                        t.base.read_in,
                        t.base.read_stk,
                        t.base.read_wk,
                        t.base.mv_in,
                        t.base.mv_stk,
                        t.op,
                        class[t.base.next],
                    )
                })
                .collect();
            sig.sort_unstable();
            sig.dedup();
            let key = (class[q], sig);
            let id = sig_ids.len();
            let id = *sig_ids.entry(key).or_insert(id);
            next_class[q] = id;
        }
        let next_count = sig_ids.len();
        class = next_class;
        if next_count == count {
            break;
        }
        count = next_count;
    }
    // Representative (lowest index) per class keeps its name.
    let mut rep: Vec<Option<usize>> = vec![None; count];
    for q in 0..nq {
        if rep[class[q]].is_none() {
            rep[class[q]] = Some(q);
        }
    }
    let states: Vec<String> = (0..count)
        .map(|c| m.states[rep[c].expect("every class has a member")].clone())
        .collect();
    let mut seen = BTreeSet::new();
    let mut transitions = Vec::new();
    for t in &m.transitions {
        if rep[class[t.base.state]] != Some(t.base.state) {
            continue;
        }
        let mut nt = *t;
        nt.base.state = class[t.base.state];
        nt.base.next = class[t.base.next];
        if seen.insert((
            nt.base.state,
            nt.base.read_in,
            nt.base.read_stk,
            nt.base.read_wk,
            nt.base.next,
            nt.base.mv_in,
            nt.base.mv_stk,
            nt.op,
        )) {
            transitions.push(nt);
        }
    }
    StackMachine {
        states,
        alphabet: m.alphabet.clone(),
        blank: m.blank,
        init: class[m.init],
        accept: m.accept.iter().map(|&q| class[q]).collect::<BTreeSet<_>>(),
        transitions,
        meta: m.meta.clone(),
    }
}

/// Rebuilds `m` so that its accepting runs satisfy the regularity
/// restrictions for inputs of length `n` under the stack bound `s`: stack
/// operations come in blocks of `b = ceil(s / lg n)`, op transitions only
/// change state, and every accepting run's block push-pop tree is the full
/// binary tree of depth exactly `c * ceil_lg(n)`.
///
/// The output is specialized to the input length: buffer, head mode and
/// tour position are folded into product states explored lazily from the
/// initial configuration. Machines that use their work tape, or whose
/// stack head strays outside the buffered top region when popping, are
/// rejected as unsupported.
pub fn regularize_machine(
    m: &StackMachine,
    s: usize,
    n: usize,
) -> Result<StackMachine, AuxError> {
    m.validate()?;
    if s < 1 || n < 1 {
        return Err(AuxError::BadEncoding("need s >= 1 and n >= 1".into()));
    }
    for t in &m.transitions {
        if t.base.read_wk != m.blank || t.base.write_wk != m.blank || t.base.mv_wk != 0 {
            return Err(AuxError::Unsupported(
                "regularization handles machines that do not use the work tape".into(),
            ));
        }
    }
    // Already-regular machines pass through unchanged.
    if m.meta.block_size.is_some() && m.meta.tree_depth_constant.is_some() {
        if let Ok(report) = check_regular(m, n, None) {
            if report.blocks.is_ok() && report.state_only.is_ok() {
                return Ok(m.clone());
            }
        }
    }
    let lgn = ceil_lg(n);
    let b = s.div_ceil(lgn);
    let c = m
        .meta
        .tree_depth_constant
        .unwrap_or_else(|| (s.div_ceil(b)).div_ceil(lgn).max(1));
    let depth = c * lgn;
    if m.alphabet.iter().any(|t| t == "%") {
        return Err(AuxError::Unsupported("alphabet already uses `%`".into()));
    }
    let dummy = m.alphabet.len() as u8;
    let (sin, sstk_orig, _) = occurring_reads(m);
    let mut sstk = sstk_orig;
    sstk.push(dummy as usize);
    sstk.sort_unstable();

    let mut builder = RegBuilder {
        m,
        tree: Tree0 { depth },
        b,
        dummy,
        sigma_in: sin,
        sigma_stk: sstk,
        states: Vec::new(),
        index: HashMap::new(),
        rows: Vec::new(),
        queue: VecDeque::new(),
    };
    let init = RState::Sim(Core {
        q: m.init as u16,
        buf: Vec::new(),
        hd: Hd::Buf(0),
        pos: pack(1, STAGE_FIRST),
    });
    builder.intern(init)?;
    while let Some(si) = builder.queue.pop_front() {
        builder.emit_state(si)?;
    }

    let mut alphabet = m.alphabet.clone();
    alphabet.push("%".to_string());
    let states: Vec<String> = builder.states.iter().map(rstate_name).collect();
    let accept_idx = builder
        .index
        .get(&RState::Accept)
        .copied()
        .into_iter()
        .collect::<BTreeSet<usize>>();
    let transitions: Vec<StackTransition> = builder
        .rows
        .iter()
        .map(|&(from, a_in, a_stk, a_wk, to, d_in, d_stk, op)| StackTransition {
            base: Transition {
                state: from,
                read_in: a_in,
                read_stk: a_stk,
                read_wk: a_wk,
                next: to,
                write_wk: a_wk,
                mv_in: d_in,
                mv_stk: d_stk,
                mv_wk: 0,
            },
            op,
        })
        .collect();
    let out = StackMachine {
        states,
        alphabet,
        blank: m.blank,
        init: 0,
        accept: accept_idx,
        transitions,
        meta: MachineMeta {
            block_size: Some(b),
            tree_depth_constant: Some(c),
            // Segment budget: the seek/scan walks plus a block's worth of
            // original steps between consecutive block operations.
            step_bound: Some(2 * b * depth + 2 * b + 12),
            stack_bound: Some(s),
            work_bound: Some(0),
        },
    };
    let out = minimize(&out);
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hardness compiler
// ---------------------------------------------------------------------------

/// Documented depth-bound factor for [`compile_hardness`]: the emitted
/// decomposition has depth at most
/// `COMPILE_DEPTH_C * machf * (s + ceil_lg(n) + b + 1)` where
/// `machf = ceil_lg(|states|) + ceil_lg(|alphabet|) + 6` — linear in the
/// declared stack bound `s` for a fixed machine.
pub const COMPILE_DEPTH_C: usize = 48;

pub fn compile_depth_bound(m: &StackMachine, n: usize, s_decl: usize) -> usize {
    let b = m.meta.block_size.unwrap_or(1);
    let machf = ceil_lg(m.states.len()) + ceil_lg(m.alphabet.len()) + 6;
    COMPILE_DEPTH_C * machf * (s_decl + ceil_lg(n) + b + 1)
}

/// Maximal runs of exactly `b` identical stack operations through the
/// transition table: `(start_state, symbols, end_state)`. Wildcard rows are
/// deduplicated by효 (state, op, next).
fn op_chains(m: &StackMachine, b: usize, push: bool) -> Vec<(usize, Vec<usize>, usize)> {
    let mut edges: BTreeSet<(usize, usize, usize)> = BTreeSet::new(); // (state, sym-or-0, next)
    for t in &m.transitions {
        match (t.op, push) {
            (StackOp::Push(s), true) => {
                edges.insert((t.base.state, s, t.base.next));
            }
            (StackOp::Pop, false) => {
                edges.insert((t.base.state, 0, t.base.next));
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    fn go(
        edges: &BTreeSet<(usize, usize, usize)>,
        start: usize,
        cur: usize,
        syms: &mut Vec<usize>,
        b: usize,
        out: &mut Vec<(usize, Vec<usize>, usize)>,
    ) {
        if syms.len() == b {
            out.push((start, syms.clone(), cur));
            return;
        }
        for &(q, s, q2) in edges.range((cur, 0, 0)..(cur + 1, 0, 0)) {
            debug_assert_eq!(q, cur);
            syms.push(s);
            go(edges, start, q2, syms, b, out);
            syms.pop();
        }
    }
    let starts: BTreeSet<usize> = edges.iter().map(|&(q, _, _)| q).collect();
    for &q in &starts {
        let mut syms = Vec::new();
        go(&edges, q, q, &mut syms, b, &mut out);
    }
    out
}

/// In-place simplification of a clause list: unit propagation plus merging
/// of variables connected by equality clauses. Preserves satisfiability
/// exactly and keeps the variable numbering, so decompositions of the
/// original primal graph stay valid.
fn simplify_clauses(num_vars: usize, clauses: Vec<Vec<i32>>) -> Vec<Vec<i32>> {
    // Union-find over literals: repr[v] = representative literal for var v.
    let mut repr: Vec<i32> = (0..=num_vars as i32).collect();
    fn find(repr: &mut Vec<i32>, lit: i32) -> i32 {
        let v = lit.unsigned_abs() as usize;
        let r = repr[v];
        if r.unsigned_abs() as usize == v {
            return if lit > 0 { r } else { -r };
        }
        let root = find(repr, r);
        repr[v] = root;
        if lit > 0 {
            root
        } else {
            -root
        }
    }
    let mut assign: Vec<i8> = vec![0; num_vars + 1]; // on representatives
    let mut clauses = clauses;
    loop {
        let mut changed = false;
        let mut next: Vec<Vec<i32>> = Vec::with_capacity(clauses.len());
        'clause: for cl in clauses.drain(..) {
            let mut mapped: Vec<i32> = Vec::with_capacity(cl.len());
            for lit in cl {
                let r = find(&mut repr, lit);
                let v = r.unsigned_abs() as usize;
                let val = if r > 0 { assign[v] } else { -assign[v] };
                match val {
                    1 => {
                        changed = true;
                        continue 'clause;
                    }
                    -1 => {
                        changed = true;
                        continue;
                    }
                    _ => mapped.push(r),
                }
            }
            mapped.sort_unstable_by_key(|l| (l.unsigned_abs(), *l < 0));
            mapped.dedup();
            for w in mapped.windows(2) {
                if w[0] == -w[1] {
                    changed = true;
                    continue 'clause;
                }
            }
            match mapped.len() {
                0 => return vec![vec![1], vec![-1]], // unsatisfiable
                1 => {
                    let r = mapped[0];
                    let v = r.unsigned_abs() as usize;
                    let want = if r > 0 { 1 } else { -1 };
                    if assign[v] == -want {
                        return vec![vec![1], vec![-1]];
                    }
                    if assign[v] == 0 {
                        assign[v] = want;
                        changed = true;
                    }
                    next.push(vec![r]);
                }
                _ => next.push(mapped),
            }
        }
        // Equality merging: (-a v b) and (a v -b) present means a == b.
        let mut pairs: BTreeSet<(i32, i32)> = BTreeSet::new();
        for cl in &next {
            if cl.len() == 2 {
                pairs.insert((cl[0], cl[1]));
            }
        }
        for &(x, y) in &pairs {
            // (x v y) together with (-x v -y) forces x == -y.
            if !pairs.contains(&(-x, -y)) {
                continue;
            }
            // (x v y) & (-x v -y) => x == -y.
            let a = find(&mut repr, x);
            let b = find(&mut repr, -y);
            if a.unsigned_abs() == b.unsigned_abs() {
                continue;
            }
            // Merge the larger variable into the smaller one.
            let (keep, gone) = if a.unsigned_abs() < b.unsigned_abs() {
                (a, b)
            } else {
                (b, a)
            };
            let gv = gone.unsigned_abs() as usize;
            repr[gv] = if gone > 0 { keep } else { -keep };
            // Migrate any assignment.
            if assign[gv] != 0 {
                let kv = keep.unsigned_abs() as usize;
                let val = if gone > 0 { assign[gv] } else { -assign[gv] };
                let val = if keep > 0 { val } else { -val };
                assign[kv] = val;
            }
            assign[gv] = 0;
            changed = true;
        }
        clauses = next;
        if !changed {
            break;
        }
    }
    // Deduplicate clauses.
    let mut seen = BTreeSet::new();
    clauses.retain(|cl| seen.insert(cl.clone()));
    clauses
}

/// Compiles an accepting-run search for a regular machine on one input into
/// CNF with a bounded-depth tree-depth decomposition.
///
/// One `stack(e)` block per tree edge holds the symbols pushed over that
/// edge; four configuration blocks per edge frame the push and pop
/// operations; computation gadgets encode the op-free segments at every
/// node with the stack contents identified with the `stack` blocks on the
/// root path; push validation ties the chain's symbols to `stack(e)`.
pub fn compile_hardness(m: &StackMachine, input: &[u8]) -> Result<GadgetBundle, AuxError> {
    m.validate()?;
    let n = input.len();
    if n < 1 {
        return Err(AuxError::BadEncoding("need a nonempty input".into()));
    }
    if input.iter().any(|&b| b > 1) {
        return Err(AuxError::BadEncoding("input must be binary".into()));
    }
    let report = check_regular(m, n, None)?;
    if report.blocks.is_err() || report.state_only.is_err() {
        return Err(AuxError::NotRegular(format!(
            "{:?} / {:?}",
            report.blocks, report.state_only
        )));
    }
    let b = m.meta.block_size.ok_or(AuxError::MissingMeta("b"))?;
    let c = m
        .meta
        .tree_depth_constant
        .ok_or(AuxError::MissingMeta("c"))?;
    let t_seg = m.meta.step_bound.ok_or(AuxError::MissingMeta("steps"))?;
    let s_decl = m.meta.stack_bound.ok_or(AuxError::MissingMeta("stack"))?;
    let depth = c * ceil_lg(n);
    let tree = Tree0 { depth };
    let h_max = b * depth;
    let seg_machine = m.segment_view();
    let at_node = reachable_nodes(m, &tree);
    let bsym = ceil_lg(m.alphabet.len());
    let bits_stk = ceil_lg(h_max + 1);
    let layout = BlockLayout::new(&seg_machine, StateCoding::Binary, n, h_max, 1)
        .widen_bits_stk(bits_stk);
    let sz = layout.size();
    let push_chains = op_chains(m, b, true);
    let pop_chains = op_chains(m, b, false);

    // Everything is emitted along the Euler tour of the tree, so variable
    // indices follow the temporal order of the run the formula describes.
    struct Ctx<'a> {
        builder: CnfBuilder,
        m: &'a StackMachine,
        seg_machine: &'a TuringMachine,
        at_node: &'a [BTreeSet<u32>],
        layout: &'a BlockLayout,
        tree: &'a Tree0,
        input: &'a [u8],
        b: usize,
        bsym: usize,
        bits_stk: usize,
        t_seg: usize,
        push_chains: &'a [(usize, Vec<usize>, usize)],
        pop_chains: &'a [(usize, Vec<usize>, usize)],
        // Outputs for the decomposition assembly.
        chain_members: HashMap<u32, Vec<u32>>,
        gadget_info: Vec<(u32, crate::gadgets::CompEmission)>,
    }

    impl Ctx<'_> {
        fn eq_guarded(&mut self, sel: u32, bits: &[u32], value: usize) {
            for (k, &v) in bits.iter().enumerate() {
                let lit = if value >> k & 1 == 1 {
                    v as i32
                } else {
                    -(v as i32)
                };
                self.builder.clause(&[-(sel as i32), lit]);
            }
        }

        /// One op-free segment at `node` out of an existing block; the
        /// freshly allocated final block is returned.
        fn segment(
            &mut self,
            node: u32,
            from: &[u32],
            w_ids: &[u32],
        ) -> Result<Vec<u32>, AuxError> {
            let node_depth = (31 - node.leading_zeros()) as usize;
            let h = self.b * node_depth;
            debug_assert_eq!(w_ids.len(), h * self.bsym);
            let mut seg_m = self.seg_machine.clone();
            seg_m.transitions = self
                .m
                .transitions
                .iter()
                .filter(|t| t.op == StackOp::None)
                .map(|t| t.base)
                .filter(|t| {
                    self.at_node[t.state].contains(&node) && self.at_node[t.next].contains(&node)
                })
                .collect();
            // Segment budget grows with the walk distance at this depth.
            let steps = (2 * h + 2 * self.b + 12).min(self.t_seg.max(1));
            let spec = CompSpec {
                machine: &seg_m,
                alpha: self.input,
                s: 1,
                steps,
                h,
                coding: StateCoding::Binary,
                bits_stk: Some(self.bits_stk),
            };
            let em = emit_computation(&mut self.builder, &spec, Some(from), None, Some(w_ids))?;
            let to = em.blocks.last().expect("at least two blocks").clone();
            self.gadget_info.push((node, em));
            Ok(to)
        }

        /// Push or pop validation over one tree edge: selectors pick a
        /// length-`b` op chain; allocates selectors first, then fresh
        /// stack/after blocks, so decisions drive propagation forward.
        /// Returns (after_block, stack_vars_if_push).
        fn validate_op(
            &mut self,
            child: u32,
            before: &[u32],
            push: bool,
            chains: &[(usize, Vec<usize>, usize)],
        ) -> (Vec<u32>, Option<Vec<u32>>) {
            let sz = self.layout.size();
            let chains = chains.to_vec();
            let sels = self.builder.fresh_vars(chains.len());
            let stack_vars = push.then(|| self.builder.fresh_vars(self.b * self.bsym));
            let after = self.builder.fresh_vars(sz);
            self.chain_members
                .entry(child)
                .or_default()
                .extend(sels.iter().copied());
            for off in self.layout.state().end..sz {
                self.builder
                    .clause(&[-(before[off] as i32), after[off] as i32]);
                self.builder
                    .clause(&[before[off] as i32, -(after[off] as i32)]);
            }
            if let Some(stk) = &stack_vars {
                for p in 0..self.b {
                    let bits: Vec<u32> =
                        (0..self.bsym).map(|k| stk[p * self.bsym + k]).collect();
                    let limit = self.m.alphabet.len() - 1;
                    crate::gadgets::emit_le_const(&mut self.builder, &bits, limit, None);
                }
            }
            let sbits_b: Vec<u32> = self.layout.state().map(|o| before[o]).collect();
            let sbits_a: Vec<u32> = self.layout.state().map(|o| after[o]).collect();
            let mut any = Vec::new();
            for (&sel, (q0, syms, q1)) in sels.iter().zip(&chains) {
                any.push(sel as i32);
                self.eq_guarded(sel, &sbits_b, *q0);
                self.eq_guarded(sel, &sbits_a, *q1);
                if let Some(stk) = &stack_vars {
                    for (i, &sym) in syms.iter().enumerate() {
                        let bits: Vec<u32> =
                            (0..self.bsym).map(|k| stk[i * self.bsym + k]).collect();
                        self.eq_guarded(sel, &bits, sym);
                    }
                }
            }
            if any.is_empty() {
                let x = self.builder.fresh_var();
                self.builder.fix(x, true);
                self.builder.fix(x, false);
            } else {
                self.builder.clause(&any);
            }
            (after, stack_vars)
        }

        /// Emits the whole subtree below the edge into `child`, starting
        /// from `entry` (the configuration before the push onto that edge)
        /// and ending in the returned block (the configuration after the
        /// matching pop).
        fn descend(
            &mut self,
            child: u32,
            entry: &[u32],
            w_above: &[u32],
        ) -> Result<Vec<u32>, AuxError> {
            let push_chains = self.push_chains.to_vec();
            let pop_chains = self.pop_chains.to_vec();
            let (ap, stack_vars) = self.validate_op(child, entry, true, &push_chains);
            let stack_vars = stack_vars.expect("push validation allocates the block");
            let mut w_here: Vec<u32> = w_above.to_vec();
            w_here.extend(stack_vars.iter().copied());
            let mut members: Vec<u32> = Vec::new();
            members.extend(stack_vars.iter().copied());
            members.extend(ap.iter().copied());

            let bpop = if self.tree.is_leaf(child) {
                self.segment(child, &ap, &w_here)?
            } else {
                let bp_l = self.segment(child, &ap, &w_here)?;
                let apop_l = self.descend(2 * child, &bp_l, &w_here)?;
                let bp_r = self.segment(child, &apop_l, &w_here)?;
                let apop_r = self.descend(2 * child + 1, &bp_r, &w_here)?;
                members.extend(bp_l.iter().copied());
                members.extend(apop_l.iter().copied());
                members.extend(bp_r.iter().copied());
                members.extend(apop_r.iter().copied());
                self.segment(child, &apop_r, &w_here)?
            };
            let (apop, _) = self.validate_op(child, &bpop, false, &pop_chains);
            members.extend(bpop.iter().copied());
            // The after-pop block belongs to the parent side of the edge.
            self.chain_members.entry(child).or_default().extend(members);
            Ok(apop)
        }
    }

    let mut ctx = Ctx {
        builder: CnfBuilder::new(),
        m,
        seg_machine: &seg_machine,
        at_node: &at_node,
        layout: &layout,
        tree: &tree,
        input,
        b,
        bsym,
        bits_stk,
        t_seg,
        push_chains: &push_chains,
        pop_chains: &pop_chains,
        chain_members: HashMap::new(),
        gadget_info: Vec::new(),
    };

    // Root wiring: init -> push(left subtree) -> between -> push(right
    // subtree) -> final.
    let init_block = ctx.builder.fresh_vars(sz);
    let init_cfg = crate::turing::Configuration {
        state: m.init,
        pos_in: 0,
        pos_stk: 0,
        pos_wk: 0,
        work: vec![m.blank],
    };
    for (off, val) in layout.encode(&init_cfg) {
        ctx.builder.fix(init_block[off], val);
    }
    let mut root_members: Vec<u32> = init_block.clone();
    let bp_l = ctx.segment(1, &init_block, &[])?;
    let apop_l = ctx.descend(2, &bp_l, &[])?;
    let bp_r = ctx.segment(1, &apop_l, &[])?;
    let apop_r = ctx.descend(3, &bp_r, &[])?;
    let final_block = ctx.segment(1, &apop_r, &[])?;
    for q in 0..m.states.len() {
        if m.accept.contains(&q) {
            continue;
        }
        let bits: Vec<u32> = layout.state().map(|o| final_block[o]).collect();
        let lits: Vec<i32> = bits
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if q >> k & 1 == 1 {
                    -(v as i32)
                } else {
                    v as i32
                }
            })
            .collect();
        ctx.builder.clause(&lits);
    }
    root_members.extend(bp_l);
    root_members.extend(apop_l);
    root_members.extend(bp_r);
    root_members.extend(apop_r);
    root_members.extend(final_block);
    ctx.chain_members.insert(1, root_members);

    let gadget_info = std::mem::take(&mut ctx.gadget_info);
    let chain_members = std::mem::take(&mut ctx.chain_members);
    let num_vars = ctx.builder.num_vars();
    let f_raw = ctx.builder.build();
    if std::env::var("TDLAB_COMPILE_TRACE").is_ok() {
        eprintln!(
            "compile: raw vars={} clauses={}",
            num_vars,
            f_raw.clauses().len()
        );
    }
    let simplified = simplify_clauses(num_vars, f_raw.clauses().to_vec());
    if std::env::var("TDLAB_COMPILE_TRACE").is_ok() {
        eprintln!("compile: simplified clauses={}", simplified.len());
    }
    let formula = crate::cnf::CnfFormula::new(num_vars, simplified, Default::default())
        .expect("simplified formula stays well-formed");
    let trace = std::env::var("TDLAB_COMPILE_TRACE").is_ok();
    if trace {
        eprintln!("compile: formula built");
    }

    // Tree-depth decomposition: a chain of the blocks owned by each tree
    // node, wired like the tree; gadget internals hang below their node.
    let mut tdd = TreedepthDecomposition::new(num_vars);
    let mut node_chain: HashMap<u32, (u32, u32)> = HashMap::new();
    for (&node, members) in &chain_members {
        let mut members: Vec<u32> = members.clone();
        members.sort_unstable();
        members.dedup();
        let top = members[0];
        let mut cur = 0u32;
        for &x in &members {
            tdd.parent[x as usize] = cur;
            cur = x;
        }
        node_chain.insert(node, (top, cur));
    }
    for (&node, &(top, _)) in &node_chain {
        if node == 1 {
            continue;
        }
        let (_, parent_bottom) = node_chain[&(node / 2)];
        tdd.parent[top as usize] = parent_bottom;
    }
    let primal = formula.primal_graph();
    if trace {
        eprintln!("compile: primal n={} m={}", primal.n(), primal.m());
    }
    for (node, em) in &gadget_info {
        let (_, bottom) = node_chain[node];
        let interface: BTreeSet<u32> = em.blocks[0]
            .iter()
            .chain(em.blocks[em.blocks.len() - 1].iter())
            .chain(em.w_vars.iter())
            .copied()
            .collect();
        attach_sub_tdd(&primal, &em.path_bags, &interface, bottom, &mut tdd);
    }

    if trace {
        eprintln!("compile: gadget decompositions attached");
    }
    let measured = validate_tdd(&primal, &tdd)?;
    let bound = compile_depth_bound(m, n, s_decl);
    assert!(
        measured <= bound,
        "compiled decomposition depth {} exceeded the documented bound {}",
        measured,
        bound
    );
    if trace {
        eprintln!("compile: decomposition depth {} within {}", measured, bound);
    }
    let path_decomp = crate::decomp::td_to_path(&primal, &tdd)
        .expect("path view of a valid decomposition");
    Ok(GadgetBundle {
        formula,
        path_decomp,
        tdd,
    })
}

/// Which tree nodes each state can be at, over-approximated by walking the
/// op structure over the tree: non-ops stay, pushes descend, pops ascend.
fn reachable_nodes(m: &StackMachine, tree: &Tree0) -> Vec<BTreeSet<u32>> {
    let mut reach: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); m.states.len()];
    let mut queue = VecDeque::new();
    reach[m.init].insert(1);
    queue.push_back((m.init, 1u32));
    // Mid-chain heights are fractional tree positions; track (state, node,
    // offset-within-block) to stay exact.
    let b = m.meta.block_size.unwrap_or(1);
    let mut seen: BTreeSet<(usize, u32, usize)> = BTreeSet::new();
    seen.insert((m.init, 1, 0));
    let mut fine: VecDeque<(usize, u32, usize)> = [(m.init, 1u32, 0usize)].into();
    while let Some((q, node, off)) = fine.pop_front() {
        for t in &m.transitions {
            if t.base.state != q {
                continue;
            }
            let next = match t.op {
                StackOp::None => {
                    if off != 0 {
                        continue;
                    }
                    Some((t.base.next, node, 0))
                }
                StackOp::Push(_) => {
                    if off + 1 == b {
                        // Block completed: we are now at some child.
                        None
                    } else {
                        Some((t.base.next, node, off + 1))
                    }
                }
                StackOp::Pop => {
                    if off + 1 == b {
                        None
                    } else {
                        Some((t.base.next, node, off + 1))
                    }
                }
            };
            let targets: Vec<(usize, u32, usize)> = match (next, t.op) {
                (Some(x), _) => vec![x],
                (None, StackOp::Push(_)) => {
                    if tree.is_leaf(node) {
                        vec![]
                    } else {
                        vec![(t.base.next, 2 * node, 0), (t.base.next, 2 * node + 1, 0)]
                    }
                }
                (None, StackOp::Pop) => {
                    if node == 1 {
                        vec![]
                    } else {
                        vec![(t.base.next, node / 2, 0)]
                    }
                }
                (None, StackOp::None) => unreachable!(),
            };
            for tgt in targets {
                if seen.insert(tgt) {
                    if tgt.2 == 0 {
                        reach[tgt.0].insert(tgt.1);
                    }
                    fine.push_back(tgt);
                }
            }
        }
    }
    // States never seen at a block boundary keep their full-queue entries
    // only; also record mid-chain states at their origin node so pushes in
    // progress stay encodable.
    for &(q, node, _) in &seen {
        reach[q].insert(node);
    }
    let _ = queue;
    reach
}

/// Re-decomposes a gadget's internal variables (interface removed) and
/// attaches the resulting forest below `anchor`.
fn attach_sub_tdd(
    primal: &Graph,
    bags: &[BTreeSet<u32>],
    interface: &BTreeSet<u32>,
    anchor: u32,
    tdd: &mut TreedepthDecomposition,
) {
    use crate::decomp::{tree_to_tdd, TreeDecomposition};
    let mut kept: Vec<u32> = bags
        .iter()
        .flat_map(|bag| bag.iter().copied())
        .filter(|v| !interface.contains(v))
        .collect();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() {
        return;
    }
    let mut to_new: HashMap<u32, u32> = HashMap::new();
    for (i, &v) in kept.iter().enumerate() {
        to_new.insert(v, (i + 1) as u32);
    }
    let keptset: BTreeSet<u32> = kept.iter().copied().collect();
    let sub_edges: Vec<(Vertex, Vertex)> = primal
        .edges()
        .filter(|&(a, b)| keptset.contains(&a) && keptset.contains(&b))
        .map(|(a, b)| (to_new[&a], to_new[&b]))
        .collect();
    let sub = Graph::new(kept.len(), sub_edges).expect("relabeled internal graph");
    let sub_bags: Vec<BTreeSet<Vertex>> = bags
        .iter()
        .map(|bag| {
            bag.iter()
                .filter_map(|v| to_new.get(v).copied())
                .collect()
        })
        .collect();
    let pd = TreeDecomposition {
        tree_edges: (1..sub_bags.len()).map(|i| (i - 1, i)).collect(),
        bags: sub_bags,
        is_path: true,
    };
    let sub_tdd = tree_to_tdd(&sub, &pd).expect("internal decomposition is coherent");
    for (idx, &orig) in kept.iter().enumerate() {
        let p = sub_tdd.parent[idx + 1];
        tdd.parent[orig as usize] = if p == 0 { anchor } else { kept[p as usize - 1] };
    }
}

// ---------------------------------------------------------------------------
// Builtin programs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinKind {
    ThreeCol,
    MaxIsThreshold,
}

/// Euler-tour encoding shared by the builtin programs: for every vertex in
/// depth-first order, a `D` token followed by one adjacency bit per
/// ancestor (root first), the subtree, then a `U` token.
fn euler_tokens(g: &Graph, d: &TreedepthDecomposition) -> Result<Vec<String>, AuxError> {
    validate_tdd(g, d)?;
    let children = d.children();
    let mut out = Vec::new();
    fn dfs(
        v: Vertex,
        path: &mut Vec<Vertex>,
        g: &Graph,
        children: &[Vec<Vertex>],
        out: &mut Vec<String>,
    ) {
        out.push("D".into());
        for &a in path.iter() {
            out.push(if g.has_edge(a, v) { "1".into() } else { "0".into() });
        }
        path.push(v);
        for &c in &children[v as usize] {
            dfs(c, path, g, children, out);
        }
        path.pop();
        out.push("U".into());
    }
    let mut path = Vec::new();
    for r in d.roots() {
        dfs(r, &mut path, g, &children, &mut out);
    }
    Ok(out)
}

/// Input word for the 3-coloring program.
pub fn encode_three_col_input(
    g: &Graph,
    d: &TreedepthDecomposition,
) -> Result<Vec<String>, AuxError> {
    euler_tokens(g, d)
}

/// Input word for the threshold independent-set program: the Euler tour,
/// a `T` separator, then the threshold in unary.
pub fn encode_max_is_input(
    g: &Graph,
    d: &TreedepthDecomposition,
    threshold: usize,
) -> Result<Vec<String>, AuxError> {
    let mut out = euler_tokens(g, d)?;
    out.push("T".into());
    for _ in 0..threshold {
        out.push("1".into());
    }
    Ok(out)
}

/// Maps symbol tokens to their indices in the machine's alphabet.
pub fn tokens_to_input(m: &StackMachine, tokens: &[String]) -> Result<Vec<usize>, AuxError> {
    tokens
        .iter()
        .map(|t| {
            m.symbol_index(t)
                .ok_or_else(|| AuxError::BadEncoding(format!("unknown symbol `{}`", t)))
        })
        .collect()
}

/// Stack-machine templates over the Euler-tour input encoding.
///
/// The 3-coloring program guesses a color on every descent, pushing it onto
/// the stack, and checks each adjacency bit against the ancestor color
/// residing at the matching stack cell; stack height stays within
/// depth + 1. The independent-set program guesses in/out instead and counts
/// taken vertices in unary on the work tape, comparing against the unary
/// threshold at the end of the input.
pub fn make_builtin_program(kind: BuiltinKind) -> StackMachine {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut add = |line: &str| rows.push((String::new(), line.to_string()));
    match kind {
        BuiltinKind::ThreeCol => {
            let colors = ["R", "G", "B"];
            let stack_syms = ["R", "G", "B", "$"];
            // Bottom marker, then park the head at cell 1.
            for a in ["D", "_"] {
                add(&format!("qstart {} _ _ -> qready _ 0 +1 0 push:$", a));
            }
            for stk in ["R", "G", "B", "$", "_"] {
                // Guess a color on descent.
                for c in colors {
                    add(&format!("qready D {} _ -> qscan{} _ +1 0 0 -", stk, c));
                }
                // Leave a vertex.
                add(&format!("qready U {} _ -> qready _ +1 0 0 pop", stk));
                // End of input.
                add(&format!("qready _ {} _ -> qacc _ 0 0 0 -", stk));
            }
            for c in colors {
                for stk in stack_syms {
                    // Bit 0: no constraint against this ancestor.
                    add(&format!("qscan{} 0 {} _ -> qscan{} _ +1 +1 0 -", c, stk, c));
                    // Bit 1: the ancestor color must differ.
                    if stk != c {
                        add(&format!("qscan{} 1 {} _ -> qscan{} _ +1 +1 0 -", c, stk, c));
                    }
                }
                // Bits exhausted (head on the blank top): commit the guess.
                for tok in ["D", "U", "_"] {
                    add(&format!(
                        "qscan{} {} _ _ -> qrewind _ 0 0 0 push:{}",
                        c, tok, c
                    ));
                }
            }
            for tok in ["D", "U", "0", "1", "_"] {
                for c in colors {
                    add(&format!("qrewind {} {} _ -> qrewind _ 0 -1 0 -", tok, c));
                }
                add(&format!("qrewind {} $ _ -> qready _ 0 +1 0 -", tok));
            }
            let body: String = rows.iter().map(|(_, l)| format!("{}\n", l)).collect();
            let src = format!(
                "states: qstart qready qscanR qscanG qscanB qrewind qacc\n\
                 alphabet: D U 0 1 R G B $ _\n\
                 init: qstart\naccept: qacc\n{}",
                body
            );
            StackMachine::parse(&src).expect("builtin 3-coloring program is well-formed")
        }
        BuiltinKind::MaxIsThreshold => {
            let stack_syms = ["I", "O", "$"];
            for a in ["D", "T", "_"] {
                add(&format!("qstart {} _ _ -> qready _ 0 +1 0 push:$", a));
            }
            for stk in ["I", "O", "$", "_"] {
                for lab in ["I", "O"] {
                    add(&format!("qready D {} _ -> qscan{} _ +1 0 0 -", stk, lab));
                }
                add(&format!("qready U {} _ -> qready _ +1 0 0 pop", stk));
                add(&format!("qready T {} _ -> qcmp _ +1 0 0 -", stk));
            }
            for stk in ["I", "O"] {
                // Taken: adjacent ancestors must be out.
                add(&format!("qscanI 0 {} _ -> qscanI _ +1 +1 0 -", stk));
                if *stk != *"I" {
                    add(&format!("qscanI 1 {} _ -> qscanI _ +1 +1 0 -", stk));
                }
                // Out: bits are irrelevant.
                for bit in ["0", "1"] {
                    add(&format!("qscanO {} {} _ -> qscanO _ +1 +1 0 -", bit, stk));
                }
            }
            for tok in ["D", "U", "T", "_"] {
                // Commit: push the label; count taken vertices in unary.
                add(&format!("qscanI {} _ _ -> qrewind 1 0 0 +1 push:I", tok));
                add(&format!("qscanO {} _ _ -> qrewind _ 0 0 0 push:O", tok));
            }
            for tok in ["D", "U", "T", "0", "1", "_"] {
                for s in stack_syms {
                    if s != "$" {
                        add(&format!("qrewind {} {} _ -> qrewind _ 0 -1 0 -", tok, s));
                    }
                }
                add(&format!("qrewind {} $ _ -> qready _ 0 +1 0 -", tok));
            }
            // Threshold comparison: one unary work mark per input `1`.
            for stk in ["I", "O", "$", "_"] {
                for wk in ["1", "_"] {
                    add(&format!("qcmp _ {} {} -> qacc {} 0 0 0 -", stk, wk, wk));
                    add(&format!("qcmp 1 {} {} -> qcmpdn {} 0 0 -1 -", stk, wk, wk));
                }
                add(&format!("qcmpdn 1 {} 1 -> qcmp 1 +1 0 0 -", stk));
            }
            let body: String = rows.iter().map(|(_, l)| format!("{}\n", l)).collect();
            let src = format!(
                "states: qstart qready qscanI qscanO qrewind qcmp qcmpdn qacc\n\
                 alphabet: D U 0 1 T I O $ _\n\
                 init: qstart\naccept: qacc\n{}",
                body
            );
            StackMachine::parse(&src).expect("builtin independent-set program is well-formed")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(super) const PARITY: &str = "\
states: qstart qpush qpop0 qpop1 qacc
alphabet: 0 1 $ _
init: qstart
accept: qacc
meta: stack=8 steps=64 work=0
qstart _ _ _ -> qpush _ 0 +1 0 push:$
qstart 0 _ _ -> qpush _ 0 +1 0 push:$
qstart 1 _ _ -> qpush _ 0 +1 0 push:$
qpush 0 _ _ -> qpush _ +1 +1 0 push:0
qpush 1 _ _ -> qpush _ +1 +1 0 push:1
qpush _ _ _ -> qpop0 _ 0 -1 0 -
qpop0 _ 0 _ -> qpop0 _ 0 -1 0 pop
qpop0 _ 1 _ -> qpop1 _ 0 -1 0 pop
qpop1 _ 0 _ -> qpop1 _ 0 -1 0 pop
qpop1 _ 1 _ -> qpop0 _ 0 -1 0 pop
qpop0 _ $ _ -> qacc _ 0 0 0 -
";

    pub(super) fn parity_machine() -> StackMachine {
        StackMachine::parse(PARITY).unwrap()
    }

    pub(super) fn parity_input(m: &StackMachine, bits: &[u8]) -> Vec<usize> {
        bits.iter()
            .map(|&b| m.symbol_index(if b == 0 { "0" } else { "1" }).unwrap())
            .collect()
    }

    #[test]
    fn machine_file_round_trip() {
        let m = parity_machine();
        let again = StackMachine::parse(&m.serialize()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn trivial_accepting_machine() {
        let src = "\
states: a
alphabet: _
init: a
accept: a
";
        let m = StackMachine::parse(src).unwrap();
        let out = simulate(&m, &[], 5, 2).unwrap();
        assert!(out.accepts);
        assert!(out.witness.unwrap().steps.is_empty());
    }

    #[test]
    fn push_pop_round_trip_machine() {
        let src = "\
states: a b c
alphabet: x _
init: a
accept: c
a _ _ _ -> b _ 0 0 0 push:x
b _ x _ -> c _ 0 0 0 pop
";
        // Head stays at 0, reading the pushed symbol.
        let m = StackMachine::parse(src).unwrap();
        let out = simulate(&m, &[], 5, 2).unwrap();
        assert!(out.accepts);
        let w = out.witness.unwrap();
        assert_eq!(w.steps.len(), 2);
        assert!(replay(&m, &[], 2, &w).is_ok());
        let tree = pushpop_tree_of(&m, &w).unwrap();
        assert_eq!(tree.len(), 2);
    }

    #[test]
    fn stack_bound_excludes_deep_runs() {
        let src = "\
states: a b c d e
alphabet: x _
init: a
accept: e
a _ _ _ -> b _ 0 +1 0 push:x
b _ _ _ -> c _ 0 +1 0 push:x
c _ _ _ -> d _ 0 +1 0 push:x
d _ _ _ -> e _ 0 0 0 -
";
        let m = StackMachine::parse(src).unwrap();
        assert!(simulate(&m, &[], 10, 3).unwrap().accepts);
        assert!(!simulate(&m, &[], 10, 2).unwrap().accepts);
    }

    #[test]
    fn parity_machine_language() {
        let m = parity_machine();
        for len in 0..=6usize {
            for word in 0..(1u32 << len) {
                let bits: Vec<u8> = (0..len).map(|i| (word >> i & 1) as u8).collect();
                let input = parity_input(&m, &bits);
                let expect = bits.iter().filter(|&&b| b == 1).count() % 2 == 0;
                let got = simulate(&m, &input, 6 * len + 12, len + 1).unwrap().accepts;
                assert_eq!(got, expect, "bits {:?}", bits);
            }
        }
    }

    #[test]
    fn transcript_replays_and_detects_tampering() {
        let m = parity_machine();
        let input = parity_input(&m, &[1, 1]);
        let out = simulate(&m, &input, 40, 4).unwrap();
        assert!(out.accepts);
        let mut w = out.witness.unwrap();
        assert!(replay(&m, &input, 4, &w).is_ok());
        w.final_config.state = 0;
        assert!(replay(&m, &input, 4, &w).is_err());
    }

    #[test]
    fn tau_of_simple_sequences() {
        // Empty sequence: single root node.
        assert_eq!(tree_of_sequence(&[]).unwrap(), PushPopTree::single());
        // push push pop pop: a chain of three nodes.
        let t = tree_of_sequence(&[true, true, false, false]).unwrap();
        assert_eq!(t.children, vec![vec![1], vec![2], vec![]]);
        // push pop push pop: root with two children.
        let t = tree_of_sequence(&[true, false, true, false]).unwrap();
        assert_eq!(t.children, vec![vec![1, 2], vec![], vec![]]);
        assert!(tree_of_sequence(&[false]).is_err());
        assert!(tree_of_sequence(&[true]).is_err());
    }

    #[test]
    fn tau_round_trip_exhaustive() {
        // All balanced sequences of length <= 16 reproduce themselves.
        fn gen(len: usize) -> Vec<Vec<bool>> {
            let mut out = vec![vec![]];
            for _ in 0..len {
                let mut next = Vec::new();
                for s in &out {
                    let depth: i64 = s.iter().map(|&p| if p { 1 } else { -1 }).sum();
                    let mut a = s.clone();
                    a.push(true);
                    next.push(a);
                    if depth > 0 {
                        let mut b = s.clone();
                        b.push(false);
                        next.push(b);
                    }
                }
                out = next;
            }
            out.into_iter()
                .filter(|s| s.iter().map(|&p| if p { 1i64 } else { -1 }).sum::<i64>() == 0)
                .collect()
        }
        for len in [0usize, 2, 4, 6, 8] {
            for seq in gen(len) {
                let t = tree_of_sequence(&seq).unwrap();
                assert_eq!(t.canonical_sequence(), seq);
            }
        }
    }

    #[test]
    fn embedding_single_node_and_star() {
        let t = PushPopTree::single();
        let e = embed_full_binary(&t).unwrap();
        assert_eq!(e.target_depth, 0);
        assert_eq!(e.mapping, vec![1]);

        let star = PushPopTree {
            children: vec![vec![1, 2, 3], vec![], vec![], vec![]],
        };
        let e = embed_full_binary(&star).unwrap();
        assert_eq!(e.target_depth, 4 * 2);
        assert_eq!(e.mapping[0], 1);
    }

    #[test]
    fn embedding_rejects_deep_chains() {
        // Chain of 3 nodes has depth 2 > lg 3.
        let chain = PushPopTree {
            children: vec![vec![1], vec![2], vec![]],
        };
        assert!(matches!(
            embed_full_binary(&chain),
            Err(AuxError::DepthPrecondition { .. })
        ));
    }

    #[test]
    fn embedding_exhaustive_small_trees() {
        // All ordered trees with <= 8 nodes, filtered by the depth bound;
        // structural assertions run inside embed_full_binary.
        fn trees(n: usize) -> Vec<PushPopTree> {
            if n == 1 {
                return vec![PushPopTree::single()];
            }
            let mut out = Vec::new();
            // Compose a first subtree of k nodes with a remainder tree.
            for k in 1..n {
                for first in trees(k) {
                    for rest in trees(n - k) {
                        // rest's root children become later children of the root.
                        let mut children = vec![Vec::new()];
                        let mut map_first = vec![0usize; first.len()];
                        for u in 0..first.len() {
                            map_first[u] = children.len();
                            children.push(Vec::new());
                        }
                        for u in 0..first.len() {
                            for &c in &first.children[u] {
                                let pu = map_first[u];
                                let pc = map_first[c];
                                children[pu].push(pc);
                            }
                        }
                        children[0].push(map_first[0]);
                        let mut map_rest = vec![0usize; rest.len()];
                        map_rest[0] = 0;
                        for u in 1..rest.len() {
                            map_rest[u] = children.len();
                            children.push(Vec::new());
                        }
                        for u in 0..rest.len() {
                            for &c in &rest.children[u] {
                                let pu = map_rest[u];
                                let pc = map_rest[c];
                                children[pu].push(pc);
                            }
                        }
                        out.push(PushPopTree { children });
                    }
                }
            }
            out
        }
        let mut checked = 0;
        for n in 1..=8usize {
            for t in trees(n) {
                let depth = t.depth();
                if depth > 0 && (1usize << depth) > n {
                    continue;
                }
                let e = embed_full_binary(&t).unwrap();
                assert_eq!(e.target_depth, 4 * ceil_lg_exact(n));
                // Traversal order preserved.
                let pre = t.preorder();
                let mut order: Vec<u64> = pre.iter().map(|&u| heap_dfs_key(e.mapping[u])).collect();
                let mut sorted = order.clone();
                sorted.sort_unstable();
                assert_eq!(order, sorted, "DFS order must be preserved");
                order.clear();
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn builtin_three_col_matches_oracle() {
        use crate::decomp::dfs_tdd;
        use crate::oracle::brute_three_col;
        let m = make_builtin_program(BuiltinKind::ThreeCol);
        for (g, _) in [
            (Graph::complete(3), true),
            (Graph::complete(4), false),
            (Graph::path(3), true),
            (Graph::cycle(5), true),
            (Graph::empty(2), true),
        ] {
            let d = dfs_tdd(&g);
            let tokens = encode_three_col_input(&g, &d).unwrap();
            let input = tokens_to_input(&m, &tokens).unwrap();
            let depth = validate_tdd(&g, &d).unwrap();
            let out = simulate(&m, &input, 8 * input.len() + 16, depth + 1).unwrap();
            assert_eq!(out.accepts, brute_three_col(&g), "{:?}", g);
        }
    }

    #[test]
    fn builtin_three_col_stack_height_bound() {
        use crate::decomp::dfs_tdd;
        let g = Graph::path(5);
        let d = dfs_tdd(&g);
        let m = make_builtin_program(BuiltinKind::ThreeCol);
        let tokens = encode_three_col_input(&g, &d).unwrap();
        let input = tokens_to_input(&m, &tokens).unwrap();
        let depth = validate_tdd(&g, &d).unwrap();
        let out = simulate(&m, &input, 8 * input.len() + 16, depth + 1).unwrap();
        assert!(out.accepts);
        let w = out.witness.unwrap();
        let peak = w
            .steps
            .iter()
            .map(|(c, _)| c.stack.len())
            .chain([w.final_config.stack.len()])
            .max()
            .unwrap();
        assert!(peak <= 2 * depth, "stack peak {} vs depth {}", peak, depth);
    }

    #[test]
    fn builtin_max_is_thresholds() {
        use crate::decomp::dfs_tdd;
        let m = make_builtin_program(BuiltinKind::MaxIsThreshold);
        let g = Graph::path(3);
        let mut d = TreedepthDecomposition::new(3);
        d.parent[1] = 2;
        d.parent[3] = 2;
        for (threshold, expect) in [(0, true), (1, true), (2, true), (3, false)] {
            let tokens = encode_max_is_input(&g, &d, threshold).unwrap();
            let input = tokens_to_input(&m, &tokens).unwrap();
            let out = simulate(&m, &input, 10 * input.len() + 20, 4).unwrap();
            assert_eq!(out.accepts, expect, "threshold {}", threshold);
        }
    }

    #[test]
    fn check_regular_flags_moving_push() {
        let src = "\
states: a b
alphabet: x _
init: a
accept: b
meta: b=1 c=1
a _ _ _ -> b _ +1 0 0 push:x
";
        let m = StackMachine::parse(src).unwrap();
        let report = check_regular(&m, 4, None).unwrap();
        assert!(report.state_only.is_err());
    }

    #[test]
    fn check_regular_flags_partial_blocks() {
        // b = 2 but the machine pushes a single symbol then stops.
        let src = "\
states: a b c
alphabet: x _
init: a
accept: c
meta: b=2 c=1
a _ _ _ -> b _ 0 0 0 push:x
b _ _ _ -> c _ 0 0 0 -
";
        let m = StackMachine::parse(src).unwrap();
        let report = check_regular(&m, 4, None).unwrap();
        assert!(report.blocks.is_err());
    }

    #[test]
    fn check_regular_chain_tree_fails_shape() {
        let m = parity_machine();
        let input = parity_input(&m, &[1, 1]);
        let out = simulate(&m, &input, 40, 4).unwrap();
        let w = out.witness.unwrap();
        let mut m2 = m.clone();
        m2.meta.block_size = Some(1);
        m2.meta.tree_depth_constant = Some(1);
        m2.meta.stack_bound = None;
        let report = check_regular(&m2, 2, Some(&w)).unwrap();
        // The parity run's single-op tree is a chain, not a full binary tree.
        assert!(report.tree_shape.unwrap().is_err());
    }

    pub(super) fn reg_sim_bounds(m: &StackMachine, input_len: usize) -> (usize, usize) {
        let b = m.meta.block_size.unwrap();
        let c = m.meta.tree_depth_constant.unwrap();
        let depth = c * ceil_lg(input_len.max(1));
        let nodes = (1usize << (depth + 1)) - 1;
        let seg = m.meta.step_bound.unwrap();
        ((seg + 2 * b) * (3 * nodes + 2), b * depth)
    }

    #[test]
    fn regularize_preserves_parity_language() {
        let m = parity_machine();
        for len in 1..=6usize {
            let reg = regularize_machine(&m, len + 1, len).unwrap();
            let report = check_regular(&reg, len, None).unwrap();
            assert!(report.blocks.is_ok(), "{:?}", report.blocks);
            assert!(report.state_only.is_ok(), "{:?}", report.state_only);
            let (max_steps, max_stack) = reg_sim_bounds(&reg, len);
            for word in 0..(1u32 << len) {
                let bits: Vec<u8> = (0..len).map(|i| (word >> i & 1) as u8).collect();
                let input = parity_input(&m, &bits);
                let expect = bits.iter().filter(|&&b| b == 1).count() % 2 == 0;
                let got = simulate(&reg, &input, max_steps, max_stack).unwrap();
                assert_eq!(got.accepts, expect, "len={} bits={:?}", len, bits);
                if let Some(w) = got.witness {
                    let report = check_regular(&reg, len, Some(&w)).unwrap();
                    assert!(report.all_pass(), "{:?}", report);
                }
            }
        }
    }

    #[test]
    fn regularize_leaves_regular_machines_alone() {
        let m = parity_machine();
        let reg = regularize_machine(&m, 5, 4).unwrap();
        let again = regularize_machine(&reg, 5, 4).unwrap();
        assert_eq!(reg, again);
    }

    #[test]
    fn compile_hardness_matches_simulation_small() {
        use crate::oracle::sat_oracle;
        let m = parity_machine();
        for len in 1..=2usize {
            let reg = regularize_machine(&m, len + 1, len).unwrap();
            let (max_steps, max_stack) = reg_sim_bounds(&reg, len);
            for word in 0..(1u32 << len) {
                let bits: Vec<u8> = (0..len).map(|i| (word >> i & 1) as u8).collect();
                let input = parity_input(&m, &bits);
                let accepts = simulate(&reg, &input, max_steps, max_stack).unwrap().accepts;
                let t0 = std::time::Instant::now();
                let bundle = compile_hardness(&reg, &bits).unwrap();
                let sat = sat_oracle(&bundle.formula, &[]).unwrap();
                eprintln!(
                    "len={} bits={:?} vars={} clauses={} compile+solve={:?}",
                    len,
                    bits,
                    bundle.formula.num_vars(),
                    bundle.formula.clauses().len(),
                    t0.elapsed()
                );
                assert_eq!(sat, accepts, "len={} bits={:?}", len, bits);
            }
        }
    }

    /// Key that sorts heap indices in DFS order of the infinite binary tree.
    fn heap_dfs_key(h: u64) -> u64 {
        // Path bits (from the root) padded with a sentinel; lexicographic
        // comparison of the bit path equals DFS order when a prefix sorts
        // before its extensions.
        let depth = 63 - h.leading_zeros() as u64;
        let path = h - (1 << depth);
        // Left-align the path in 32 bits, then append depth to break ties
        // (ancestors first).
        (path << (32 - depth)) << 16 | depth
    }
}

#[cfg(test)]
mod probe {
    use super::*;

    #[test]
    #[ignore]
    fn probe_sizes() {
        let m = tests::parity_machine();
        for len in 1..=6usize {
            let t0 = std::time::Instant::now();
            let reg = regularize_machine(&m, len + 1, len).unwrap();
            eprintln!(
                "len={} states={} rows={} build={:?}",
                len,
                reg.states.len(),
                reg.transitions.len(),
                t0.elapsed()
            );
            let (max_steps, max_stack) = tests::reg_sim_bounds(&reg, len);
            let bits: Vec<u8> = vec![0; len];
            let input = tests::parity_input(&m, &bits);
            let t1 = std::time::Instant::now();
            let out = simulate(&reg, &input, max_steps, max_stack).unwrap();
            eprintln!(
                "len={} accepts={} sim={:?} steps_bound={} stack_bound={}",
                len, out.accepts, t1.elapsed(), max_steps, max_stack
            );
        }
    }
}
