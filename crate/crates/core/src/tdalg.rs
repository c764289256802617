//! Recursive dynamic programs over tree-depth decompositions, instrumented
//! with a space meter, plus the exponential-space path-decomposition
//! baseline they are contrasted with.
//!
//! The recursions run on an explicit frame stack and never memoize: the
//! whole point is that live memory stays proportional to the decomposition
//! depth, and the meter measures exactly that.

use num_bigint::BigUint;
use num_traits::{CheckedSub, One, Zero};
use thiserror::Error;

use crate::decomp::{
    validate_tdd, validate_tree_or_path, TddViolation, TreeDecomposition, TreedepthDecomposition,
};
use crate::graph::{Graph, Vertex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TdAlgError {
    #[error("invalid tree-depth decomposition: {0}")]
    InvalidTdd(#[from] TddViolation),
    #[error("invalid path decomposition: {0}")]
    InvalidPath(#[from] crate::decomp::DecompViolation),
    #[error("expected a path decomposition (is_path tag not set)")]
    NotAPath,
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("evaluation point {a} is not a residue mod {p}")]
    BadResidue { a: u64, p: u64 },
}

/// Multiplier in the auxiliary-cell bound asserted for the tree-depth
/// recursions: `peak_aux_cells <= METER_C0 * (depth + ceil_lg(n))`.
pub const METER_C0: usize = 8;

/// Words of bookkeeping charged per live recursion frame.
const FRAME_WORDS: usize = 4;

/// Peak memory shape of one algorithm run.
///
/// `peak_frames` counts simultaneously live recursion frames;
/// `peak_aux_cells` counts auxiliary memory words (frame bookkeeping for the
/// recursive algorithms, enumeration-table entries for the baseline sweep).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpaceMeter {
    pub peak_frames: usize,
    pub peak_aux_cells: usize,
}

impl SpaceMeter {
    fn observe(&mut self, frames: usize, cells: usize) {
        self.peak_frames = self.peak_frames.max(frames);
        self.peak_aux_cells = self.peak_aux_cells.max(cells);
    }
}

/// A root-to-node sequence of labeled vertices, the live tail of the
/// recursion. Vertices form a strictly descending ancestor chain of the
/// active decomposition, each appearing once.
#[derive(Debug, Clone, Default)]
pub struct TailAssignment<L> {
    entries: Vec<(Vertex, L)>,
}

impl<L: Copy> TailAssignment<L> {
    pub fn new() -> Self {
        TailAssignment { entries: Vec::new() }
    }

    pub fn push(&mut self, v: Vertex, label: L) {
        debug_assert!(self.entries.iter().all(|&(u, _)| u != v));
        self.entries.push((v, label));
    }

    pub fn pop(&mut self) -> Option<(Vertex, L)> {
        self.entries.pop()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Vertex, L)> {
        self.entries.iter()
    }
}

// ---------------------------------------------------------------------------
// 3-coloring on a tree-depth decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColoringRun {
    pub colorable: bool,
    pub meter: SpaceMeter,
}

/// Decides 3-colorability by descending the decomposition, trying the three
/// colors of each vertex against its adjacent ancestors and recursing into
/// children; time `3^s * poly(n)`, live memory `O(s + log n)`.
pub fn solve_3col_td(g: &Graph, d: &TreedepthDecomposition) -> Result<ColoringRun, TdAlgError> {
    let depth = validate_tdd(g, d)?;
    let children = d.children();
    let adj = g.adjacency();
    let mut meter = SpaceMeter::default();
    let id_words = crate::decomp::ceil_lg(g.n());

    struct Frame {
        u: Vertex,
        color: u8,
        child_idx: usize,
        entered: bool,
    }

    let mut colorable = true;
    let mut tail: TailAssignment<u8> = TailAssignment::new();
    'roots: for r in d.roots() {
        let mut frames = vec![Frame {
            u: r,
            color: 0,
            child_idx: 0,
            entered: false,
        }];
        let mut ret: Option<bool> = None;
        while !frames.is_empty() {
            meter.observe(frames.len(), frames.len() * FRAME_WORDS + id_words);
            let top = frames.last_mut().expect("nonempty");
            if let Some(r) = ret.take() {
                // A child frame finished.
                if r {
                    top.child_idx += 1;
                } else {
                    tail.pop();
                    top.entered = false;
                    top.color += 1;
                }
            }
            if !top.entered {
                // Find the next feasible color for top.u.
                let mut c = top.color;
                while c < 3 {
                    let clash = tail
                        .iter()
                        .any(|&(v, vc)| vc == c && adj[top.u as usize].contains(&v));
                    if !clash {
                        break;
                    }
                    c += 1;
                }
                top.color = c;
                if c == 3 {
                    frames.pop();
                    ret = Some(false);
                    continue;
                }
                tail.push(top.u, c);
                top.entered = true;
                top.child_idx = 0;
            }
            let u = top.u;
            if top.child_idx < children[u as usize].len() {
                let v = children[u as usize][top.child_idx];
                frames.push(Frame {
                    u: v,
                    color: 0,
                    child_idx: 0,
                    entered: false,
                });
            } else {
                tail.pop();
                frames.pop();
                ret = Some(true);
            }
        }
        if ret != Some(true) {
            colorable = false;
            break 'roots;
        }
    }
    debug_assert!(meter.peak_frames <= depth + 1);
    debug_assert!(meter.peak_aux_cells <= METER_C0 * (depth + id_words).max(1));
    Ok(ColoringRun { colorable, meter })
}

/// Exponential-space baseline: sweeps a path decomposition bag by bag,
/// enumerating all `3^|bag|` colorings of each bag and keeping the ones
/// consistent with the survivors of the previous bag. The meter records the
/// largest enumerated table.
pub fn solve_3col_pw_baseline(
    g: &Graph,
    d: &TreeDecomposition,
) -> Result<ColoringRun, TdAlgError> {
    validate_tree_or_path(g, d)?;
    if !d.is_path {
        return Err(TdAlgError::NotAPath);
    }
    let mut meter = SpaceMeter::default();
    if d.bags.is_empty() {
        meter.observe(1, 1);
        return Ok(ColoringRun {
            colorable: g.n() == 0,
            meter,
        });
    }
    let order = path_order(d);
    // Survivor projections carried between consecutive bags, keyed by the
    // shared vertices in ascending order.
    let mut carry: Option<(Vec<Vertex>, std::collections::BTreeSet<Vec<u8>>)> = None;
    for (step, &bi) in order.iter().enumerate() {
        let bag: Vec<Vertex> = d.bags[bi].iter().copied().collect();
        let table_size = 3usize.pow(bag.len() as u32);
        meter.observe(1, table_size);
        let inner_edges: Vec<(usize, usize)> = {
            let mut es = Vec::new();
            for (i, &u) in bag.iter().enumerate() {
                for (j, &v) in bag.iter().enumerate().skip(i + 1) {
                    if g.has_edge(u, v) {
                        es.push((i, j));
                    }
                }
            }
            es
        };
        let mut survivors: Vec<Vec<u8>> = Vec::new();
        let mut coloring = vec![0u8; bag.len()];
        for code in 0..table_size {
            let mut c = code;
            for slot in coloring.iter_mut() {
                *slot = (c % 3) as u8;
                c /= 3;
            }
            if inner_edges
                .iter()
                .any(|&(i, j)| coloring[i] == coloring[j])
            {
                continue;
            }
            if let Some((shared, prev)) = &carry {
                let key: Vec<u8> = shared
                    .iter()
                    .map(|v| coloring[bag.binary_search(v).unwrap()])
                    .collect();
                if !prev.contains(&key) {
                    continue;
                }
            }
            survivors.push(coloring.clone());
        }
        if survivors.is_empty() {
            return Ok(ColoringRun {
                colorable: false,
                meter,
            });
        }
        // Project onto the overlap with the next bag.
        let shared: Vec<Vertex> = match order.get(step + 1) {
            Some(&next) => bag
                .iter()
                .copied()
                .filter(|v| d.bags[next].contains(v))
                .collect(),
            None => Vec::new(),
        };
        let proj: std::collections::BTreeSet<Vec<u8>> = survivors
            .iter()
            .map(|col| {
                shared
                    .iter()
                    .map(|v| col[bag.binary_search(v).unwrap()])
                    .collect()
            })
            .collect();
        carry = Some((shared, proj));
    }
    Ok(ColoringRun {
        colorable: true,
        meter,
    })
}

/// Bag ids of a path decomposition in path order, starting from the
/// endpoint with the smaller id.
fn path_order(d: &TreeDecomposition) -> Vec<usize> {
    let b = d.bags.len();
    if b == 1 {
        return vec![0];
    }
    let mut adj = vec![Vec::new(); b];
    for &(x, y) in &d.tree_edges {
        adj[x].push(y);
        adj[y].push(x);
    }
    let start = (0..b).find(|&i| adj[i].len() <= 1).expect("a path has endpoints");
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut cur = start;
    while order.len() < b {
        let next = *adj[cur].iter().find(|&&x| x != prev).expect("path continues");
        order.push(next);
        prev = cur;
        cur = next;
    }
    order
}

// ---------------------------------------------------------------------------
// Maximum independent set on a tree-depth decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxIsRun {
    pub size: usize,
    pub meter: SpaceMeter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IsLabel {
    In,
    Out,
}

/// Maximum independent-set cardinality via an in/out tail recursion over
/// the decomposition; live memory `O(s + log n)`.
pub fn max_is_td(g: &Graph, d: &TreedepthDecomposition) -> Result<MaxIsRun, TdAlgError> {
    let depth = validate_tdd(g, d)?;
    let children = d.children();
    let adj = g.adjacency();
    let mut meter = SpaceMeter::default();
    let id_words = crate::decomp::ceil_lg(g.n());

    struct Frame {
        u: Vertex,
        phase: u8, // 0: try In, 1: try Out, 2: done
        child_idx: usize,
        acc: usize,
        best: Option<usize>,
    }

    let mut total = 0usize;
    let mut tail: TailAssignment<IsLabel> = TailAssignment::new();
    for r in d.roots() {
        let mut frames = vec![Frame {
            u: r,
            phase: 0,
            child_idx: 0,
            acc: 0,
            best: None,
        }];
        let mut ret: Option<usize> = None;
        let mut entered = false;
        while !frames.is_empty() {
            meter.observe(frames.len(), frames.len() * FRAME_WORDS + id_words);
            let top = frames.last_mut().expect("nonempty");
            if let Some(r) = ret.take() {
                top.acc += r;
                top.child_idx += 1;
                entered = true;
            }
            if !entered {
                if top.phase == 0 {
                    let blocked = tail
                        .iter()
                        .any(|&(v, l)| l == IsLabel::In && adj[top.u as usize].contains(&v));
                    if blocked {
                        top.phase = 1;
                    }
                }
                if top.phase == 2 {
                    let value = top.best.expect("the Out phase always completes");
                    frames.pop();
                    ret = Some(value);
                    continue;
                }
                let label = if top.phase == 0 { IsLabel::In } else { IsLabel::Out };
                top.acc = usize::from(label == IsLabel::In);
                top.child_idx = 0;
                tail.push(top.u, label);
            }
            let u = top.u;
            if top.child_idx < children[u as usize].len() {
                let v = children[u as usize][top.child_idx];
                frames.push(Frame {
                    u: v,
                    phase: 0,
                    child_idx: 0,
                    acc: 0,
                    best: None,
                });
                entered = false;
            } else {
                tail.pop();
                let better = match top.best {
                    None => true,
                    Some(b) => top.acc > b,
                };
                if better {
                    top.best = Some(top.acc);
                }
                top.phase += 1;
                if top.phase >= 2 {
                    let value = top.best.expect("at least one phase ran");
                    frames.pop();
                    ret = Some(value);
                    entered = true;
                } else {
                    entered = false;
                }
            }
        }
        total += ret.expect("root frame produced a value");
    }
    debug_assert!(meter.peak_frames <= depth + 1);
    Ok(MaxIsRun { size: total, meter })
}

// ---------------------------------------------------------------------------
// Dominating-set counting
// ---------------------------------------------------------------------------

/// Coefficient vector of the domination polynomial: entry `i` counts the
/// dominating sets of cardinality `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominationPolynomial {
    coeffs: Vec<BigUint>,
}

impl DominationPolynomial {
    pub fn from_coeffs(coeffs: Vec<BigUint>) -> Self {
        assert!(!coeffs.is_empty());
        DominationPolynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[BigUint] {
        &self.coeffs
    }

    /// Degree bound `n`; the vector has length `n + 1`.
    pub fn n(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluation modulo `p` at point `a`, by Horner's rule.
    pub fn eval_mod(&self, a: u64, p: u64) -> u64 {
        let a = a % p;
        let mut acc = 0u64;
        for c in self.coeffs.iter().rev() {
            let r = (c % p).to_u64_digits().first().copied().unwrap_or(0);
            acc = (acc * a + r) % p;
        }
        acc
    }

    /// Checks the structural invariants: `q_i <= C(n, i)` and `q_n = 1` for
    /// nonempty graphs.
    pub fn check_invariants(&self) -> bool {
        let n = self.n();
        let mut binom = BigUint::one();
        for (i, q) in self.coeffs.iter().enumerate() {
            if *q > binom {
                return false;
            }
            if i < n {
                binom = binom * BigUint::from(n - i) / BigUint::from(i + 1);
            }
        }
        n == 0 || self.coeffs[n] == BigUint::one()
    }

    /// One `q <i> <value>` line per coefficient.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (i, q) in self.coeffs.iter().enumerate() {
            out.push_str(&format!("q {} {}\n", i, q));
        }
        out
    }
}

/// The three tail labels of the counting recursion: a vertex can be still
/// undecided (`Allowed`), excluded and required to be dominated elsewhere
/// (`Forbidden`), or in the dominating set (`Taken`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsLabel {
    Allowed,
    Forbidden,
    Taken,
}

/// Value domain the counting recursion runs in: dense integer polynomials
/// for the exact count, single residues for the modular evaluation.
trait DsDomain {
    type Value: Clone;
    fn one(&self) -> Self::Value;
    fn zero(&self) -> Self::Value;
    fn mul(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    /// `g_allowed - g_forbidden + x * g_taken`, where `x` is the formal
    /// cardinality variable or its evaluation point.
    fn combine(&self, ga: Self::Value, gf: Self::Value, gt: Self::Value) -> Self::Value;
}

struct PolyDomain {
    n: usize,
}

impl DsDomain for PolyDomain {
    type Value = Vec<BigUint>;

    fn one(&self) -> Vec<BigUint> {
        vec![BigUint::one()]
    }

    fn zero(&self) -> Vec<BigUint> {
        vec![BigUint::zero()]
    }

    fn mul(&self, a: &Vec<BigUint>, b: &Vec<BigUint>) -> Vec<BigUint> {
        let deg = (a.len() + b.len() - 2).min(self.n);
        let mut out = vec![BigUint::zero(); deg + 1];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                if i + j <= deg {
                    out[i + j] += x * y;
                }
            }
        }
        out
    }

    fn combine(&self, ga: Vec<BigUint>, gf: Vec<BigUint>, gt: Vec<BigUint>) -> Vec<BigUint> {
        let deg = ga.len().max(gf.len()).max(gt.len() + 1).min(self.n + 1) - 1;
        let mut out = vec![BigUint::zero(); deg + 1];
        for (i, x) in ga.iter().enumerate() {
            out[i] += x;
        }
        for (i, x) in gt.iter().enumerate() {
            if i + 1 <= deg {
                out[i + 1] += x;
            }
        }
        for (i, x) in gf.iter().enumerate() {
            // Every set counted under the Forbidden extension is also
            // counted under the Allowed one, so this stays nonnegative.
            out[i] = std::mem::take(&mut out[i])
                .checked_sub(x)
                .expect("allowed counts dominate forbidden counts");
        }
        out
    }
}

struct ModDomain {
    p: u64,
    a: u64,
}

impl DsDomain for ModDomain {
    type Value = u64;

    fn one(&self) -> u64 {
        1 % self.p
    }

    fn zero(&self) -> u64 {
        0
    }

    fn mul(&self, a: &u64, b: &u64) -> u64 {
        a * b % self.p
    }

    fn combine(&self, ga: u64, gf: u64, gt: u64) -> u64 {
        (ga + self.p - gf + self.a * gt % self.p) % self.p
    }
}

/// Shared engine for the mutually recursive `f`/`g` evaluation, on an
/// explicit stack of alternating frames and without memoization. The tail
/// labels live on one shared [`TailAssignment`].
///
/// `f(u, tail)` combines the three `g` values with `u` labeled Allowed,
/// Forbidden, Taken; `g(u, tail[u])` is the product of `f` over the
/// children, with the leaf base case checking for a Taken-Forbidden edge
/// inside the tail.
fn count_ds_engine<D: DsDomain>(
    g: &Graph,
    d: &TreedepthDecomposition,
    dom: &D,
    meter: &mut SpaceMeter,
) -> Result<D::Value, TdAlgError> {
    let depth = validate_tdd(g, d)?;
    let children = d.children();

    enum Frame<V> {
        F {
            u: Vertex,
            phase: u8,
            ga: Option<V>,
            gf: Option<V>,
        },
        G {
            u: Vertex,
            child_idx: usize,
            acc: V,
        },
    }

    let mut tail: TailAssignment<DsLabel> = TailAssignment::new();
    let mut result = dom.one();
    for r in d.roots() {
        let mut frames: Vec<Frame<D::Value>> = vec![Frame::F {
            u: r,
            phase: 0,
            ga: None,
            gf: None,
        }];
        let mut ret: Option<D::Value> = None;
        while !frames.is_empty() {
            meter.observe(frames.len(), frames.len() * FRAME_WORDS);
            let top = frames.last_mut().expect("nonempty");
            match top {
                Frame::F { u, phase, ga, gf } => {
                    if let Some(r) = ret.take() {
                        tail.pop();
                        match *phase {
                            1 => *ga = Some(r),
                            2 => *gf = Some(r),
                            3 => {
                                let value = dom.combine(
                                    ga.take().expect("phase 1 stored"),
                                    gf.take().expect("phase 2 stored"),
                                    r,
                                );
                                frames.pop();
                                ret = Some(value);
                                continue;
                            }
                            _ => unreachable!(),
                        }
                    }
                    let label = match *phase {
                        0 => DsLabel::Allowed,
                        1 => DsLabel::Forbidden,
                        2 => DsLabel::Taken,
                        _ => unreachable!(),
                    };
                    *phase += 1;
                    let u = *u;
                    tail.push(u, label);
                    frames.push(Frame::G {
                        u,
                        child_idx: 0,
                        acc: dom.one(),
                    });
                }
                Frame::G { u, child_idx, acc } => {
                    if let Some(r) = ret.take() {
                        *acc = dom.mul(acc, &r);
                        *child_idx += 1;
                    }
                    let u = *u;
                    let kids = &children[u as usize];
                    if kids.is_empty() {
                        let conflict = tail.iter().any(|&(v, l)| {
                            l == DsLabel::Taken
                                && tail.iter().any(|&(w, m)| {
                                    m == DsLabel::Forbidden && g.has_edge(v, w)
                                })
                        });
                        let value = if conflict { dom.zero() } else { dom.one() };
                        frames.pop();
                        ret = Some(value);
                    } else if *child_idx < kids.len() {
                        let v = kids[*child_idx];
                        frames.push(Frame::F {
                            u: v,
                            phase: 0,
                            ga: None,
                            gf: None,
                        });
                    } else {
                        let value = acc.clone();
                        frames.pop();
                        ret = Some(value);
                    }
                }
            }
        }
        let value = ret.expect("root evaluation completed");
        result = dom.mul(&result, &value);
    }
    debug_assert!(meter.peak_frames <= 2 * depth + 1);
    Ok(result)
}

/// Exact dominating-set counts by cardinality, computed over `Z[x]` with
/// arbitrary-precision coefficients. Children are visited in ascending
/// vertex order; the result is order-independent.
pub fn count_ds_exact(
    g: &Graph,
    d: &TreedepthDecomposition,
) -> Result<DominationPolynomial, TdAlgError> {
    let mut meter = SpaceMeter::default();
    count_ds_exact_metered(g, d, &mut meter)
}

pub fn count_ds_exact_metered(
    g: &Graph,
    d: &TreedepthDecomposition,
    meter: &mut SpaceMeter,
) -> Result<DominationPolynomial, TdAlgError> {
    let dom = PolyDomain { n: g.n() };
    let mut coeffs = count_ds_engine(g, d, &dom, meter)?;
    coeffs.resize(g.n() + 1, BigUint::zero());
    Ok(DominationPolynomial::from_coeffs(coeffs))
}

/// Evaluation of the domination polynomial at `a` modulo the prime `p`,
/// with one residue of live state per recursion level.
pub fn eval_ds_mod(
    g: &Graph,
    d: &TreedepthDecomposition,
    p: u64,
    a: u64,
) -> Result<u64, TdAlgError> {
    let mut meter = SpaceMeter::default();
    eval_ds_mod_metered(g, d, p, a, &mut meter)
}

pub fn eval_ds_mod_metered(
    g: &Graph,
    d: &TreedepthDecomposition,
    p: u64,
    a: u64,
    meter: &mut SpaceMeter,
) -> Result<u64, TdAlgError> {
    if !crate::modcount::is_prime(p) {
        return Err(TdAlgError::NotPrime(p));
    }
    if a >= p {
        return Err(TdAlgError::BadResidue { a, p });
    }
    let dom = ModDomain { p, a };
    count_ds_engine(g, d, &dom, meter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::dfs_tdd;
    use crate::oracle::{brute_count_ds, brute_max_is, brute_three_col};

    fn chain_tdd(n: usize) -> TreedepthDecomposition {
        let mut d = TreedepthDecomposition::new(n);
        for v in 2..=n {
            d.parent[v] = (v - 1) as Vertex;
        }
        d
    }

    fn root2_p3() -> TreedepthDecomposition {
        let mut d = TreedepthDecomposition::new(3);
        d.parent[1] = 2;
        d.parent[3] = 2;
        d
    }

    fn poly(xs: &[u32]) -> Vec<BigUint> {
        xs.iter().map(|&x| BigUint::from(x)).collect()
    }

    fn graphs_on(n: usize, step: usize) -> impl Iterator<Item = Graph> {
        let pairs: Vec<(Vertex, Vertex)> = (1..=n as Vertex)
            .flat_map(|u| ((u + 1)..=n as Vertex).map(move |v| (u, v)))
            .collect();
        (0..(1u32 << pairs.len())).step_by(step).map(move |mask| {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            Graph::new(n, edges).unwrap()
        })
    }

    #[test]
    fn three_col_k3_and_k4() {
        let k3 = Graph::complete(3);
        let run = solve_3col_td(&k3, &chain_tdd(3)).unwrap();
        assert!(run.colorable);
        assert!(run.meter.peak_frames <= 4);

        let k4 = Graph::complete(4);
        let run = solve_3col_td(&k4, &chain_tdd(4)).unwrap();
        assert!(!run.colorable);
    }

    #[test]
    fn three_col_matches_oracle_on_small_graphs() {
        for n in 1..=5usize {
            for g in graphs_on(n, 1) {
                let d = dfs_tdd(&g);
                let run = solve_3col_td(&g, &d).unwrap();
                assert_eq!(run.colorable, brute_three_col(&g), "{:?}", g);
                let depth = validate_tdd(&g, &d).unwrap();
                assert!(run.meter.peak_frames <= depth + 1);
            }
        }
    }

    #[test]
    fn pw_baseline_single_bag_clique() {
        let k3 = Graph::complete(3);
        let d = TreeDecomposition {
            bags: vec![(1..=3).collect()],
            tree_edges: vec![],
            is_path: true,
        };
        let run = solve_3col_pw_baseline(&k3, &d).unwrap();
        assert!(run.colorable);
        assert_eq!(run.meter.peak_aux_cells, 27);

        let k4 = Graph::complete(4);
        let d4 = TreeDecomposition {
            bags: vec![(1..=4).collect()],
            tree_edges: vec![],
            is_path: true,
        };
        assert!(!solve_3col_pw_baseline(&k4, &d4).unwrap().colorable);
    }

    #[test]
    fn pw_baseline_agrees_with_td_solver() {
        for n in 1..=5usize {
            for g in graphs_on(n, 3) {
                let tdd = dfs_tdd(&g);
                let path = crate::decomp::td_to_path(&g, &tdd).unwrap();
                let a = solve_3col_td(&g, &tdd).unwrap().colorable;
                let b = solve_3col_pw_baseline(&g, &path).unwrap().colorable;
                assert_eq!(a, b, "{:?}", g);
            }
        }
    }

    #[test]
    fn baseline_rejects_non_path() {
        let g = Graph::path(3);
        let d = TreeDecomposition {
            bags: vec![(1..=2).collect(), (2..=3).collect()],
            tree_edges: vec![(0, 1)],
            is_path: false,
        };
        assert_eq!(solve_3col_pw_baseline(&g, &d), Err(TdAlgError::NotAPath));
    }

    #[test]
    fn max_is_known_cases() {
        assert_eq!(max_is_td(&Graph::complete(3), &chain_tdd(3)).unwrap().size, 1);
        assert_eq!(max_is_td(&Graph::path(3), &root2_p3()).unwrap().size, 2);
        assert_eq!(
            max_is_td(&Graph::empty(5), &dfs_tdd(&Graph::empty(5))).unwrap().size,
            5
        );
    }

    #[test]
    fn max_is_matches_oracle() {
        for n in 1..=5usize {
            for g in graphs_on(n, 5) {
                let run = max_is_td(&g, &dfs_tdd(&g)).unwrap();
                assert_eq!(run.size, brute_max_is(&g), "{:?}", g);
            }
        }
    }

    #[test]
    fn count_ds_path3() {
        let g = Graph::path(3);
        let p = count_ds_exact(&g, &root2_p3()).unwrap();
        assert_eq!(p.coeffs(), &poly(&[0, 1, 3, 1])[..]);
        assert!(p.check_invariants());
    }

    #[test]
    fn count_ds_k3_and_single_vertex() {
        let p = count_ds_exact(&Graph::complete(3), &chain_tdd(3)).unwrap();
        assert_eq!(p.coeffs(), &poly(&[0, 3, 3, 1])[..]);
        let p1 = count_ds_exact(&Graph::empty(1), &chain_tdd(1)).unwrap();
        assert_eq!(p1.coeffs(), &poly(&[0, 1])[..]);
    }

    #[test]
    fn count_ds_matches_oracle_and_meter_bound() {
        for n in 1..=5usize {
            for g in graphs_on(n, 7) {
                let d = dfs_tdd(&g);
                let mut meter = SpaceMeter::default();
                let p = count_ds_exact_metered(&g, &d, &mut meter).unwrap();
                let expect = brute_count_ds(&g);
                assert_eq!(p.coeffs(), &expect[..], "{:?}", g);
                let depth = validate_tdd(&g, &d).unwrap();
                assert!(meter.peak_frames <= 2 * depth + 1);
            }
        }
    }

    #[test]
    fn count_ds_invariant_under_child_relabeling() {
        // The star on 4 vertices has an automorphism swapping leaves; the
        // product over children must be insensitive to their order.
        let g = Graph::new(4, [(2, 1), (2, 3), (2, 4)]).unwrap();
        let mut d = TreedepthDecomposition::new(4);
        d.parent[1] = 2;
        d.parent[3] = 2;
        d.parent[4] = 2;
        let p = count_ds_exact(&g, &d).unwrap();
        let swapped = Graph::new(4, [(2, 4), (2, 3), (2, 1)]).unwrap();
        let q = count_ds_exact(&swapped, &d).unwrap();
        assert_eq!(p, q);
        assert_eq!(
            p.coeffs()
                .iter()
                .fold(BigUint::zero(), |acc, c| acc + c),
            brute_count_ds(&g)
                .iter()
                .fold(BigUint::zero(), |acc, c| acc + c)
        );
    }

    #[test]
    fn eval_matches_exact_evaluation() {
        let g = Graph::path(3);
        let d = root2_p3();
        let p = count_ds_exact(&g, &d).unwrap();
        for prime in [5u64, 7, 11] {
            for a in 0..prime {
                assert_eq!(
                    eval_ds_mod(&g, &d, prime, a).unwrap(),
                    p.eval_mod(a, prime),
                    "p={} a={}",
                    prime,
                    a
                );
            }
        }
        // path 1-2-3 at a=1 mod 5: 1+3+1 = 5 = 0.
        assert_eq!(eval_ds_mod(&g, &d, 5, 1).unwrap(), 0);
    }

    #[test]
    fn eval_rejects_composite_modulus() {
        let g = Graph::path(3);
        assert_eq!(
            eval_ds_mod(&g, &root2_p3(), 6, 1),
            Err(TdAlgError::NotPrime(6))
        );
    }

    #[test]
    fn eval_at_zero_is_q0() {
        for n in 1..=4usize {
            let g = Graph::path(n);
            let d = dfs_tdd(&g);
            assert_eq!(eval_ds_mod(&g, &d, 7, 0).unwrap(), 0, "q_0 = 0 for n >= 1");
        }
    }
}
