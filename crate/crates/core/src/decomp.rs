//! Decomposition data types, validators, and the transforms between them.
//!
//! Three certifying structures are supported: tree decompositions (with a
//! path tag), tree-depth decompositions (rooted forests with a vertex
//! bijection), and deconstructions (bag families indexed by a host graph,
//! used to transport decompositions across reductions).
//!
//! Validators return the first violation in a deterministic order —
//! structural problems first, then vertices ascending, then edges
//! lexicographic — so failing tests are reproducible.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::graph::{Graph, Vertex};

/// Width of a tree decomposition; `-1` for a decomposition whose largest
/// bag is empty, matching `max |X_t| - 1`.
pub type Width = i64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    /// Bag contents, indexed by bag node id `0..bags.len()`.
    pub bags: Vec<BTreeSet<Vertex>>,
    /// Undirected edges of the bag tree.
    pub tree_edges: Vec<(usize, usize)>,
    /// Declared path tag; validated structurally when set.
    pub is_path: bool,
}

/// Rooted forest over exactly the graph's vertices: `parent[v] = 0` marks a
/// root. Entry 0 is unused padding so vertices index directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreedepthDecomposition {
    pub parent: Vec<Vertex>,
}

/// A family of bags over a subject graph, indexed by the vertices of a host
/// graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deconstruction {
    pub host: Graph,
    /// `bags[h - 1]` is the bag of host vertex `h`.
    pub bags: Vec<BTreeSet<Vertex>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompViolation {
    #[error("bag tree is not a tree (disconnected or cyclic)")]
    NotATree,
    #[error("decomposition is tagged as a path but the bag tree is not a simple path")]
    NotAPath,
    #[error("bag {bag} contains out-of-range vertex {v}")]
    BadBagVertex { bag: usize, v: Vertex },
    #[error("bag-tree edge ({a}, {b}) references a missing bag")]
    BadTreeEdge { a: usize, b: usize },
    #[error("vertex {0} is in no bag")]
    UncoveredVertex(Vertex),
    #[error("edge ({0}, {1}) is covered by no bag")]
    UncoveredEdge(Vertex, Vertex),
    #[error("occurrences of vertex {0} do not induce a connected subtree")]
    DisconnectedOccurrence(Vertex),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TddViolation {
    #[error("decomposition has {got} entries but the graph has {want} vertices")]
    WrongSize { got: usize, want: usize },
    #[error("vertex {v} has out-of-range parent {parent}")]
    BadParent { v: Vertex, parent: Vertex },
    #[error("parent relation has a cycle through vertex {0}")]
    ParentCycle(Vertex),
    #[error("edge ({0}, {1}) joins vertices that are not in ancestor-descendant relation")]
    EdgeNotCovered(Vertex, Vertex),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeconViolation {
    #[error("host vertex {host} bag contains out-of-range vertex {v}")]
    BadBagVertex { host: Vertex, v: Vertex },
    #[error("bag list has {got} entries but the host has {want} vertices")]
    WrongSize { got: usize, want: usize },
    #[error("vertex {0} is in no bag")]
    UncoveredVertex(Vertex),
    #[error("edge ({0}, {1}) is not inside one bag or two host-adjacent bags")]
    UncoveredEdge(Vertex, Vertex),
    #[error("occurrences of vertex {0} are not connected in the host")]
    DisconnectedOccurrence(Vertex),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("input tree decomposition invalid: {0}")]
    InvalidTree(#[from] DecompViolation),
    #[error("input tree-depth decomposition invalid: {0}")]
    InvalidTdd(#[from] TddViolation),
    #[error("input deconstruction invalid: {0}")]
    InvalidDeconstruction(#[from] DeconViolation),
    #[error("decomposition kind does not match the requested transform")]
    KindMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("decomposition parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

/// Checks a tree (or tagged path) decomposition of `g` and returns its width.
pub fn validate_tree_or_path(g: &Graph, d: &TreeDecomposition) -> Result<Width, DecompViolation> {
    let b = d.bags.len();
    for (i, bag) in d.bags.iter().enumerate() {
        for &v in bag {
            if v == 0 || v as usize > g.n() {
                return Err(DecompViolation::BadBagVertex { bag: i, v });
            }
        }
    }
    for &(a, bb) in &d.tree_edges {
        if a >= b || bb >= b {
            return Err(DecompViolation::BadTreeEdge { a, b: bb });
        }
    }
    // A tree on b nodes has b-1 edges and is connected.
    if b > 0 {
        if d.tree_edges.len() != b - 1 {
            return Err(DecompViolation::NotATree);
        }
        let mut adj = vec![Vec::new(); b];
        for &(x, y) in &d.tree_edges {
            adj[x].push(y);
            adj[y].push(x);
        }
        let mut seen = vec![false; b];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut cnt = 1;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    cnt += 1;
                    stack.push(y);
                }
            }
        }
        if cnt != b {
            return Err(DecompViolation::NotATree);
        }
        if d.is_path && adj.iter().any(|l| l.len() > 2) {
            return Err(DecompViolation::NotAPath);
        }
    }
    // Vertex coverage, ascending.
    let mut covered = vec![false; g.n() + 1];
    for bag in &d.bags {
        for &v in bag {
            covered[v as usize] = true;
        }
    }
    for v in 1..=g.n() as Vertex {
        if !covered[v as usize] {
            return Err(DecompViolation::UncoveredVertex(v));
        }
    }
    // Edge coverage, lexicographic.
    for (u, v) in g.edges() {
        if !d.bags.iter().any(|bag| bag.contains(&u) && bag.contains(&v)) {
            return Err(DecompViolation::UncoveredEdge(u, v));
        }
    }
    // Occurrence connectivity, vertices ascending.
    let mut adj = vec![Vec::new(); b];
    for &(x, y) in &d.tree_edges {
        adj[x].push(y);
        adj[y].push(x);
    }
    for v in 1..=g.n() as Vertex {
        let occ: Vec<usize> = (0..b).filter(|&i| d.bags[i].contains(&v)).collect();
        if occ.len() <= 1 {
            continue;
        }
        let inocc = {
            let mut m = vec![false; b];
            for &i in &occ {
                m[i] = true;
            }
            m
        };
        let mut seen = vec![false; b];
        let mut stack = vec![occ[0]];
        seen[occ[0]] = true;
        let mut cnt = 1;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if inocc[y] && !seen[y] {
                    seen[y] = true;
                    cnt += 1;
                    stack.push(y);
                }
            }
        }
        if cnt != occ.len() {
            return Err(DecompViolation::DisconnectedOccurrence(v));
        }
    }
    Ok(d.bags.iter().map(|b| b.len() as Width).max().unwrap_or(0) - 1)
}

/// Checks a tree-depth decomposition of `g` and returns its depth (maximum
/// number of nodes on a root-to-leaf path; 0 for the empty graph).
pub fn validate_tdd(g: &Graph, d: &TreedepthDecomposition) -> Result<usize, TddViolation> {
    let n = g.n();
    if d.parent.len() != n + 1 {
        return Err(TddViolation::WrongSize {
            got: d.parent.len().saturating_sub(1),
            want: n,
        });
    }
    for v in 1..=n as Vertex {
        let p = d.parent[v as usize];
        if p as usize > n || p == v {
            return Err(TddViolation::BadParent { v, parent: p });
        }
    }
    // Depth of every vertex, detecting cycles; reports the smallest vertex
    // from which a cycle is reachable.
    let mut depth = vec![0usize; n + 1];
    for v in 1..=n as Vertex {
        if depth[v as usize] != 0 {
            continue;
        }
        let mut chain = Vec::new();
        let mut cur = v;
        while cur != 0 && depth[cur as usize] == 0 {
            chain.push(cur);
            if chain.len() > n {
                return Err(TddViolation::ParentCycle(v));
            }
            cur = d.parent[cur as usize];
        }
        let mut base = if cur == 0 { 0 } else { depth[cur as usize] };
        for &u in chain.iter().rev() {
            base += 1;
            depth[u as usize] = base;
        }
    }
    for (u, v) in g.edges() {
        if !(is_ancestor_with(&d.parent, u, v) || is_ancestor_with(&d.parent, v, u)) {
            return Err(TddViolation::EdgeNotCovered(u, v));
        }
    }
    Ok(depth.iter().copied().max().unwrap_or(0))
}

fn is_ancestor_with(parent: &[Vertex], anc: Vertex, mut v: Vertex) -> bool {
    while v != 0 {
        if v == anc {
            return true;
        }
        v = parent[v as usize];
    }
    false
}

/// Checks a deconstruction of `g` and returns its width: the maximum size of
/// a bag or of the union of two host-adjacent bags.
pub fn validate_deconstruction(g: &Graph, dc: &Deconstruction) -> Result<usize, DeconViolation> {
    let hn = dc.host.n();
    if dc.bags.len() != hn {
        return Err(DeconViolation::WrongSize {
            got: dc.bags.len(),
            want: hn,
        });
    }
    for (i, bag) in dc.bags.iter().enumerate() {
        for &v in bag {
            if v == 0 || v as usize > g.n() {
                return Err(DeconViolation::BadBagVertex {
                    host: (i + 1) as Vertex,
                    v,
                });
            }
        }
    }
    let mut covered = vec![false; g.n() + 1];
    for bag in &dc.bags {
        for &v in bag {
            covered[v as usize] = true;
        }
    }
    for v in 1..=g.n() as Vertex {
        if !covered[v as usize] {
            return Err(DeconViolation::UncoveredVertex(v));
        }
    }
    for (u, v) in g.edges() {
        let single = dc.bags.iter().any(|b| b.contains(&u) && b.contains(&v));
        let pair = single
            || dc.host.edges().any(|(h1, h2)| {
                let b1 = &dc.bags[h1 as usize - 1];
                let b2 = &dc.bags[h2 as usize - 1];
                (b1.contains(&u) && b2.contains(&v)) || (b1.contains(&v) && b2.contains(&u))
            });
        if !pair {
            return Err(DeconViolation::UncoveredEdge(u, v));
        }
    }
    let host_adj = dc.host.adjacency();
    for v in 1..=g.n() as Vertex {
        let occ: Vec<Vertex> = (1..=hn as Vertex)
            .filter(|&h| dc.bags[h as usize - 1].contains(&v))
            .collect();
        if occ.len() <= 1 {
            continue;
        }
        let inocc = {
            let mut m = vec![false; hn + 1];
            for &h in &occ {
                m[h as usize] = true;
            }
            m
        };
        let mut seen = vec![false; hn + 1];
        let mut stack = vec![occ[0]];
        seen[occ[0] as usize] = true;
        let mut cnt = 1;
        while let Some(h) = stack.pop() {
            for &h2 in &host_adj[h as usize] {
                if inocc[h2 as usize] && !seen[h2 as usize] {
                    seen[h2 as usize] = true;
                    cnt += 1;
                    stack.push(h2);
                }
            }
        }
        if cnt != occ.len() {
            return Err(DeconViolation::DisconnectedOccurrence(v));
        }
    }
    let mut width = dc.bags.iter().map(|b| b.len()).max().unwrap_or(0);
    for (h1, h2) in dc.host.edges() {
        let u: BTreeSet<Vertex> = dc.bags[h1 as usize - 1]
            .union(&dc.bags[h2 as usize - 1])
            .copied()
            .collect();
        width = width.max(u.len());
    }
    Ok(width)
}

// ---------------------------------------------------------------------------
// Helpers on tree-depth decompositions
// ---------------------------------------------------------------------------

impl TreedepthDecomposition {
    pub fn new(n: usize) -> Self {
        TreedepthDecomposition {
            parent: vec![0; n + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.parent.len().saturating_sub(1)
    }

    pub fn roots(&self) -> Vec<Vertex> {
        (1..self.parent.len() as Vertex)
            .filter(|&v| self.parent[v as usize] == 0)
            .collect()
    }

    /// Children lists indexed by vertex, sorted ascending.
    pub fn children(&self) -> Vec<Vec<Vertex>> {
        let mut ch = vec![Vec::new(); self.parent.len()];
        for v in 1..self.parent.len() as Vertex {
            let p = self.parent[v as usize];
            if p != 0 {
                ch[p as usize].push(v);
            }
        }
        ch
    }

    /// Structural depth, ignoring any subject graph; None if cyclic.
    pub fn depth(&self) -> Option<usize> {
        let n = self.n();
        let mut depth = vec![0usize; n + 1];
        for v in 1..=n as Vertex {
            if depth[v as usize] != 0 {
                continue;
            }
            let mut chain = Vec::new();
            let mut cur = v;
            while cur != 0 && depth[cur as usize] == 0 {
                chain.push(cur);
                if chain.len() > n {
                    return None;
                }
                cur = self.parent[cur as usize];
            }
            let mut base = if cur == 0 { 0 } else { depth[cur as usize] };
            for &u in chain.iter().rev() {
                base += 1;
                depth[u as usize] = base;
            }
        }
        Some(depth.iter().copied().max().unwrap_or(0))
    }

    pub fn is_ancestor(&self, anc: Vertex, v: Vertex) -> bool {
        is_ancestor_with(&self.parent, anc, v)
    }

    /// Path from `v` up to its root, inclusive.
    pub fn path_to_root(&self, mut v: Vertex) -> Vec<Vertex> {
        let mut path = Vec::new();
        while v != 0 {
            path.push(v);
            v = self.parent[v as usize];
        }
        path
    }
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Turns a tree-depth decomposition into a path decomposition whose bags are
/// the vertex sets of all root-to-leaf paths, in left-to-right depth-first
/// order. The resulting width is at most depth - 1.
pub fn td_to_path(g: &Graph, d: &TreedepthDecomposition) -> Result<TreeDecomposition, TransformError> {
    validate_tdd(g, d)?;
    if g.n() == 0 {
        return Ok(TreeDecomposition {
            bags: vec![BTreeSet::new()],
            tree_edges: vec![],
            is_path: true,
        });
    }
    let children = d.children();
    let mut bags = Vec::new();
    let mut stack: Vec<Vertex> = Vec::new();
    fn dfs(
        v: Vertex,
        children: &[Vec<Vertex>],
        stack: &mut Vec<Vertex>,
        bags: &mut Vec<BTreeSet<Vertex>>,
    ) {
        stack.push(v);
        if children[v as usize].is_empty() {
            bags.push(stack.iter().copied().collect());
        } else {
            for &c in &children[v as usize] {
                dfs(c, children, stack, bags);
            }
        }
        stack.pop();
    }
    for r in d.roots() {
        dfs(r, &children, &mut stack, &mut bags);
    }
    let tree_edges = (1..bags.len()).map(|i| (i - 1, i)).collect();
    Ok(TreeDecomposition {
        bags,
        tree_edges,
        is_path: true,
    })
}

/// Constant in the depth bound of [`tree_to_tdd`]: the output depth is at
/// most `TREE_TO_TDD_C * (w + 1) * ceil(lg(max(2, n)))`.
pub const TREE_TO_TDD_C: usize = 4;

pub fn ceil_lg(x: usize) -> usize {
    let x = x.max(2);
    usize::BITS as usize - (x - 1).leading_zeros() as usize
}

/// Builds a tree-depth decomposition from a tree decomposition by centroid
/// splitting of the bag tree: the centroid's bag vertices are stacked as a
/// chain and the split components are recursed below it.
pub fn tree_to_tdd(g: &Graph, d: &TreeDecomposition) -> Result<TreedepthDecomposition, TransformError> {
    let width = validate_tree_or_path(g, d)?;
    if g.n() == 0 {
        return Ok(TreedepthDecomposition::new(0));
    }
    let pruned = prune_tree_decomposition(g, d)?;
    let b = pruned.bags.len();
    let mut adj = vec![Vec::new(); b];
    for &(x, y) in &pruned.tree_edges {
        adj[x].push(y);
        adj[y].push(x);
    }
    let mut out = TreedepthDecomposition::new(g.n());
    let mut placed = vec![false; g.n() + 1];

    // Recursion over live bag-node sets, attaching chains below `attach`.
    fn split(
        nodes: &[usize],
        adj: &[Vec<usize>],
        bags: &[BTreeSet<Vertex>],
        attach: Vertex,
        placed: &mut [bool],
        out: &mut TreedepthDecomposition,
    ) {
        if nodes.is_empty() {
            return;
        }
        let live = {
            let mut m = vec![false; adj.len()];
            for &x in nodes {
                m[x] = true;
            }
            m
        };
        // Centroid: minimizes the largest component after removal.
        let mut best = (usize::MAX, usize::MAX);
        for &c in nodes {
            let mut seen = vec![false; adj.len()];
            seen[c] = true;
            let mut worst = 0usize;
            for &s in nodes {
                if seen[s] {
                    continue;
                }
                let mut cnt = 0usize;
                let mut stack = vec![s];
                seen[s] = true;
                while let Some(x) = stack.pop() {
                    cnt += 1;
                    for &y in &adj[x] {
                        if live[y] && !seen[y] {
                            seen[y] = true;
                            stack.push(y);
                        }
                    }
                }
                worst = worst.max(cnt);
            }
            if (worst, c) < best {
                best = (worst, c);
            }
        }
        let centroid = best.1;
        let mut cur = attach;
        for &v in &bags[centroid] {
            if !placed[v as usize] {
                placed[v as usize] = true;
                out.parent[v as usize] = cur;
                cur = v;
            }
        }
        // Recurse into the components of the live set minus the centroid.
        let mut seen = vec![false; adj.len()];
        seen[centroid] = true;
        for &s in nodes {
            if seen[s] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(x) = stack.pop() {
                comp.push(x);
                for &y in &adj[x] {
                    if live[y] && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
            comp.sort_unstable();
            split(&comp, adj, bags, cur, placed, out);
        }
    }

    // The pruned bag tree may be a forest view over components of g; it is a
    // single tree by construction, but vertices uncovered by any component
    // cannot occur since the input was valid.
    let all: Vec<usize> = (0..b).collect();
    split(&all, &adj, &pruned.bags, 0, &mut placed, &mut out);

    let depth = validate_tdd(g, &out).expect("centroid construction yields a valid decomposition");
    let bound = TREE_TO_TDD_C * (width.max(0) as usize + 1) * ceil_lg(g.n());
    assert!(
        depth <= bound,
        "centroid depth {} exceeded bound {} (w={}, n={})",
        depth,
        bound,
        width,
        g.n()
    );
    Ok(out)
}

/// Repeatedly merges a bag into a neighbor that contains it. The result has
/// at most `n + 1` bags (every surviving non-root bag introduces a vertex),
/// comfortably within the `2 n^2` contract.
pub fn prune_tree_decomposition(
    g: &Graph,
    d: &TreeDecomposition,
) -> Result<TreeDecomposition, TransformError> {
    validate_tree_or_path(g, d)?;
    if g.n() == 0 {
        return Ok(TreeDecomposition {
            bags: vec![],
            tree_edges: vec![],
            is_path: d.is_path,
        });
    }
    let mut bags = d.bags.clone();
    let mut edges: BTreeSet<(usize, usize)> = d
        .tree_edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    let mut alive = vec![true; bags.len()];
    loop {
        // First mergeable edge in ascending order; the subset bag is
        // absorbed into its neighbor, ties to the smaller id.
        let mut todo = None;
        for &(a, b) in &edges {
            if bags[a].is_subset(&bags[b]) {
                todo = Some((a, b));
                break;
            }
            if bags[b].is_subset(&bags[a]) {
                todo = Some((b, a));
                break;
            }
        }
        let Some((gone, keep)) = todo else { break };
        alive[gone] = false;
        let mut new_edges = BTreeSet::new();
        for &(a, b) in &edges {
            let (a, b) = (
                if a == gone { keep } else { a },
                if b == gone { keep } else { b },
            );
            if a != b {
                new_edges.insert((a.min(b), a.max(b)));
            }
        }
        edges = new_edges;
    }
    // Compact ids.
    let mut remap = vec![usize::MAX; bags.len()];
    let mut new_bags = Vec::new();
    for (i, bag) in bags.iter_mut().enumerate() {
        if alive[i] {
            remap[i] = new_bags.len();
            new_bags.push(std::mem::take(bag));
        }
    }
    let tree_edges: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(a, b)| (remap[a], remap[b]))
        .collect();
    let out = TreeDecomposition {
        bags: new_bags,
        tree_edges,
        is_path: d.is_path,
    };
    debug_assert!(validate_tree_or_path(g, &out).is_ok());
    Ok(out)
}

/// Which parameter a transform or reduction is transporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    Tw,
    Pw,
    Td,
}

/// A decomposition of any of the three kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyDecomposition {
    TreeLike(TreeDecomposition),
    TreeDepth(TreedepthDecomposition),
}

impl AnyDecomposition {
    pub fn kind(&self) -> LiftKind {
        match self {
            AnyDecomposition::TreeLike(t) if t.is_path => LiftKind::Pw,
            AnyDecomposition::TreeLike(_) => LiftKind::Tw,
            AnyDecomposition::TreeDepth(_) => LiftKind::Td,
        }
    }

    /// Width for tree/path kinds, depth for tree-depth, as validated
    /// against `g`.
    pub fn measure(&self, g: &Graph) -> Result<i64, TransformError> {
        match self {
            AnyDecomposition::TreeLike(t) => Ok(validate_tree_or_path(g, t)?),
            AnyDecomposition::TreeDepth(t) => Ok(validate_tdd(g, t)? as i64),
        }
    }
}

/// Transports a decomposition of the host graph through a deconstruction,
/// yielding a decomposition of the subject graph.
///
/// For TW/PW the host bags are replaced by unions of deconstruction bags;
/// for TD every subject vertex is placed at the lowest common ancestor of
/// its host occurrences and host nodes are expanded into chains.
pub fn lift_via_deconstruction(
    kind: LiftKind,
    g: &Graph,
    dc: &Deconstruction,
    d_host: &AnyDecomposition,
) -> Result<AnyDecomposition, TransformError> {
    let w = validate_deconstruction(g, dc)?;
    match (kind, d_host) {
        (LiftKind::Tw, AnyDecomposition::TreeLike(t)) | (LiftKind::Pw, AnyDecomposition::TreeLike(t)) => {
            if kind == LiftKind::Pw && !t.is_path {
                return Err(TransformError::KindMismatch);
            }
            let wh = validate_tree_or_path(&dc.host, t)?;
            let bags: Vec<BTreeSet<Vertex>> = t
                .bags
                .iter()
                .map(|hb| {
                    hb.iter()
                        .flat_map(|&h| dc.bags[h as usize - 1].iter().copied())
                        .collect()
                })
                .collect();
            let out = TreeDecomposition {
                bags,
                tree_edges: t.tree_edges.clone(),
                is_path: t.is_path,
            };
            let wo = validate_tree_or_path(g, &out)?;
            assert!(
                wo + 1 <= (w as i64) * (wh + 1),
                "lift width {} exceeded deconstruction bound {}",
                wo + 1,
                (w as i64) * (wh + 1)
            );
            Ok(AnyDecomposition::TreeLike(out))
        }
        (LiftKind::Td, AnyDecomposition::TreeDepth(t)) => {
            let dh = validate_tdd(&dc.host, t)?;
            let hn = dc.host.n();
            // Walk-up depths in the host decomposition.
            let hdepth: Vec<usize> = (0..=hn)
                .map(|h| {
                    if h == 0 {
                        0
                    } else {
                        t.path_to_root(h as Vertex).len()
                    }
                })
                .collect();
            let lca = |mut a: Vertex, mut b: Vertex| -> Vertex {
                while a != b {
                    if hdepth[a as usize] >= hdepth[b as usize] {
                        a = t.parent[a as usize];
                    } else {
                        b = t.parent[b as usize];
                    }
                    if a == 0 || b == 0 {
                        return 0;
                    }
                }
                a
            };
            let mut members: Vec<Vec<Vertex>> = vec![Vec::new(); hn + 1];
            for v in 1..=g.n() as Vertex {
                let occ: Vec<Vertex> = (1..=hn as Vertex)
                    .filter(|&h| dc.bags[h as usize - 1].contains(&v))
                    .collect();
                let mut anchor = occ[0];
                for &h in &occ[1..] {
                    anchor = lca(anchor, h);
                }
                debug_assert!(
                    anchor != 0 && dc.bags[anchor as usize - 1].contains(&v),
                    "deconstruction coherence places every vertex at its occurrence LCA"
                );
                members[anchor as usize].push(v);
            }
            // Expand each host node into a chain; children hang below the
            // last chain element, or below the nearest ancestor with a
            // nonempty chain when a node is empty.
            let mut out = TreedepthDecomposition::new(g.n());
            let children = t.children();
            fn expand(
                h: Vertex,
                attach: Vertex,
                members: &[Vec<Vertex>],
                children: &[Vec<Vertex>],
                out: &mut TreedepthDecomposition,
            ) {
                let mut cur = attach;
                for &v in &members[h as usize] {
                    out.parent[v as usize] = cur;
                    cur = v;
                }
                for &c in &children[h as usize] {
                    expand(c, cur, members, children, out);
                }
            }
            for r in t.roots() {
                expand(r, 0, &members, &children, &mut out);
            }
            let depth = validate_tdd(g, &out)?;
            assert!(
                depth <= w * dh,
                "lift depth {} exceeded deconstruction bound {}",
                depth,
                w * dh
            );
            Ok(AnyDecomposition::TreeDepth(out))
        }
        _ => Err(TransformError::KindMismatch),
    }
}

/// Extends a decomposition of an induced subgraph `g` to the supergraph
/// `g2`, where every new component has at most `c` vertices and a clique
/// neighborhood; the width/depth grows by at most `c`.
pub fn extend_clique_attached(
    kind: LiftKind,
    g: &Graph,
    g2: &Graph,
    d: &AnyDecomposition,
    c: usize,
) -> Result<AnyDecomposition, TransformError> {
    if g2.n() < g.n() {
        return Err(TransformError::Precondition(
            "supergraph is smaller than the base graph".into(),
        ));
    }
    // g must be the induced subgraph of g2 on 1..=g.n().
    for (u, v) in g.edges() {
        if !g2.has_edge(u, v) {
            return Err(TransformError::Precondition(format!(
                "edge ({}, {}) of the base graph is missing in the supergraph",
                u, v
            )));
        }
    }
    for (u, v) in g2.edges() {
        if v as usize <= g.n() && !g.has_edge(u, v) {
            return Err(TransformError::Precondition(format!(
                "supergraph edge ({}, {}) is not in the induced base graph",
                u, v
            )));
        }
    }
    if d.kind() != kind {
        return Err(TransformError::KindMismatch);
    }
    // Components of g2 - V(g), ascending by smallest member.
    let adj2 = g2.adjacency();
    let mut seen = vec![false; g2.n() + 1];
    let mut comps: Vec<Vec<Vertex>> = Vec::new();
    for s in (g.n() + 1) as Vertex..=g2.n() as Vertex {
        if seen[s as usize] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![s];
        seen[s as usize] = true;
        while let Some(u) = stack.pop() {
            comp.push(u);
            for &v in &adj2[u as usize] {
                if v as usize > g.n() && !seen[v as usize] {
                    seen[v as usize] = true;
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    let mut hoods: Vec<Vec<Vertex>> = Vec::new();
    for comp in &comps {
        if comp.len() > c {
            return Err(TransformError::Precondition(format!(
                "component of {} new vertices exceeds the declared bound {}",
                comp.len(),
                c
            )));
        }
        let mut hood: BTreeSet<Vertex> = BTreeSet::new();
        for &u in comp {
            for &v in &adj2[u as usize] {
                if v as usize <= g.n() {
                    hood.insert(v);
                }
            }
        }
        let hood: Vec<Vertex> = hood.into_iter().collect();
        if !g.is_clique(&hood) {
            return Err(TransformError::Precondition(format!(
                "neighborhood of component starting at {} is not a clique",
                comp[0]
            )));
        }
        hoods.push(hood);
    }
    let before = d.measure(g)?;
    let out = match d {
        AnyDecomposition::TreeLike(t) => {
            let mut bags = t.bags.clone();
            let mut edges = t.tree_edges.clone();
            // Adjacency-as-successor for the path case: remember the path
            // order so inserted copies keep it a path.
            for (comp, hood) in comps.iter().zip(&hoods) {
                let hood_set: BTreeSet<Vertex> = hood.iter().copied().collect();
                let at = bags
                    .iter()
                    .position(|b| hood_set.is_subset(b))
                    .ok_or_else(|| {
                        TransformError::Precondition(
                            "no bag contains the attachment clique".into(),
                        )
                    })?;
                let mut nb = bags[at].clone();
                nb.extend(comp.iter().copied());
                let nid = bags.len();
                bags.push(nb);
                if t.is_path {
                    // Splice between `at` and its successor to stay a path.
                    if let Some(pos) = edges.iter().position(|&(a, b)| a == at && b > at || b == at && a > at) {
                        let (a, b) = edges[pos];
                        let other = if a == at { b } else { a };
                        edges[pos] = (at, nid);
                        edges.push((nid, other));
                    } else {
                        edges.push((at, nid));
                    }
                } else {
                    edges.push((at, nid));
                }
            }
            AnyDecomposition::TreeLike(TreeDecomposition {
                bags,
                tree_edges: edges,
                is_path: t.is_path,
            })
        }
        AnyDecomposition::TreeDepth(t) => {
            let mut out = TreedepthDecomposition::new(g2.n());
            out.parent[1..=g.n()].copy_from_slice(&t.parent[1..=g.n()]);
            for (comp, hood) in comps.iter().zip(&hoods) {
                // Lowest clique vertex in the decomposition; the clique is
                // totally ordered by ancestry.
                let mut lowest = 0;
                for &h in hood {
                    if lowest == 0 || t.is_ancestor(lowest, h) {
                        lowest = h;
                    }
                }
                let mut cur = lowest;
                for &v in comp {
                    out.parent[v as usize] = cur;
                    cur = v;
                }
            }
            AnyDecomposition::TreeDepth(out)
        }
    };
    let after = out.measure(g2)?;
    assert!(
        after <= before + c as i64,
        "extension grew the parameter by more than {}",
        c
    );
    Ok(out)
}

/// Depth-first spanning forest of `g`; always a valid tree-depth
/// decomposition since every non-tree edge is a back edge.
pub fn dfs_tdd(g: &Graph) -> TreedepthDecomposition {
    let adj = g.adjacency();
    let mut out = TreedepthDecomposition::new(g.n());
    let mut seen = vec![false; g.n() + 1];
    for r in 1..=g.n() as Vertex {
        if seen[r as usize] {
            continue;
        }
        seen[r as usize] = true;
        // Iterative DFS preserving ascending neighbor order.
        let mut stack = vec![(r, 0usize)];
        while let Some(&mut (u, ref mut idx)) = stack.last_mut() {
            if *idx < adj[u as usize].len() {
                let v = adj[u as usize][*idx];
                *idx += 1;
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    out.parent[v as usize] = u;
                    stack.push((v, 0));
                }
            } else {
                stack.pop();
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

impl TreeDecomposition {
    /// PACE-2017 style: `s td <#bags> <max_bag_size> <n>`, `b <id> <v...>`
    /// lines, then one bag-tree edge per line. A `c path` comment line marks
    /// the path tag.
    pub fn serialize(&self, n: usize) -> String {
        let mut out = String::new();
        if self.is_path {
            out.push_str("c path\n");
        }
        let maxbag = self.bags.iter().map(|b| b.len()).max().unwrap_or(0);
        out.push_str(&format!("s td {} {} {}\n", self.bags.len(), maxbag, n));
        for (i, bag) in self.bags.iter().enumerate() {
            out.push_str(&format!("b {}", i + 1));
            for v in bag {
                out.push_str(&format!(" {}", v));
            }
            out.push('\n');
        }
        for &(a, b) in &self.tree_edges {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, TransformError> {
        let mut is_path = false;
        let mut bags: Vec<BTreeSet<Vertex>> = Vec::new();
        let mut declared = None;
        let mut edges = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if line == "c path" {
                is_path = true;
                continue;
            }
            if line.starts_with('c') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "s" {
                if toks.len() != 5 || toks[1] != "td" {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: "expected `s td <#bags> <max_bag_size> <n>`".into(),
                    });
                }
                let nb: usize = parse_tok(toks[2], lineno)?;
                declared = Some(nb);
                bags = vec![BTreeSet::new(); nb];
            } else if toks[0] == "b" {
                let id: usize = parse_tok(toks[1], lineno)?;
                if id == 0 || id > bags.len() {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: format!("bag id {} out of range", id),
                    });
                }
                for t in &toks[2..] {
                    bags[id - 1].insert(parse_tok::<Vertex>(t, lineno)?);
                }
            } else {
                if toks.len() != 2 {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: "expected a bag-tree edge `<id1> <id2>`".into(),
                    });
                }
                let a: usize = parse_tok(toks[0], lineno)?;
                let b: usize = parse_tok(toks[1], lineno)?;
                if a == 0 || b == 0 || a > bags.len() || b > bags.len() {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: format!("edge ({}, {}) out of range", a, b),
                    });
                }
                edges.push((a - 1, b - 1));
            }
        }
        if declared.is_none() {
            return Err(TransformError::Parse {
                line: 0,
                msg: "missing `s td` header".into(),
            });
        }
        Ok(TreeDecomposition {
            bags,
            tree_edges: edges,
            is_path,
        })
    }
}

impl TreedepthDecomposition {
    /// `s tdd <n> <depth>` followed by `<vertex> <parent>` lines, parent 0
    /// for roots.
    pub fn serialize(&self) -> String {
        let mut out = format!("s tdd {} {}\n", self.n(), self.depth().unwrap_or(0));
        for v in 1..=self.n() {
            out.push_str(&format!("{} {}\n", v, self.parent[v]));
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, TransformError> {
        let mut parent: Option<Vec<Vertex>> = None;
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "s" {
                if toks.len() != 4 || toks[1] != "tdd" {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: "expected `s tdd <n> <depth>`".into(),
                    });
                }
                let n: usize = parse_tok(toks[2], lineno)?;
                parent = Some(vec![0; n + 1]);
            } else {
                let p = parent.as_mut().ok_or(TransformError::Parse {
                    line: lineno,
                    msg: "vertex line before `s tdd` header".into(),
                })?;
                if toks.len() != 2 {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: "expected `<vertex> <parent>`".into(),
                    });
                }
                let v: usize = parse_tok(toks[0], lineno)?;
                if v == 0 || v >= p.len() {
                    return Err(TransformError::Parse {
                        line: lineno,
                        msg: format!("vertex {} out of range", v),
                    });
                }
                p[v] = parse_tok(toks[1], lineno)?;
            }
        }
        parent
            .map(|parent| TreedepthDecomposition { parent })
            .ok_or(TransformError::Parse {
                line: 0,
                msg: "missing `s tdd` header".into(),
            })
    }
}

impl Deconstruction {
    /// Host graph in the DIMACS graph format followed by `b <host_vertex>
    /// <v...>` bag lines.
    pub fn serialize(&self) -> String {
        let mut out = self.host.to_dimacs();
        for (i, bag) in self.bags.iter().enumerate() {
            out.push_str(&format!("b {}", i + 1));
            for v in bag {
                out.push_str(&format!(" {}", v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(input: &str) -> Result<Self, TransformError> {
        let graph_part: String = input
            .lines()
            .filter(|l| !l.trim_start().starts_with('b'))
            .collect::<Vec<_>>()
            .join("\n");
        let host = Graph::parse(&graph_part).map_err(|e| TransformError::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        let mut bags = vec![BTreeSet::new(); host.n()];
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if !line.starts_with('b') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let h: usize = parse_tok(toks[1], lineno)?;
            if h == 0 || h > host.n() {
                return Err(TransformError::Parse {
                    line: lineno,
                    msg: format!("host vertex {} out of range", h),
                });
            }
            for t in &toks[2..] {
                bags[h - 1].insert(parse_tok::<Vertex>(t, lineno)?);
            }
        }
        Ok(Deconstruction { host, bags })
    }
}

fn parse_tok<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, TransformError> {
    tok.parse().map_err(|_| TransformError::Parse {
        line,
        msg: format!("bad token `{}`", tok),
    })
}

impl fmt::Display for TreedepthDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(vs: &[Vertex]) -> BTreeSet<Vertex> {
        vs.iter().copied().collect()
    }

    fn chain_tdd(n: usize) -> TreedepthDecomposition {
        let mut d = TreedepthDecomposition::new(n);
        for v in 2..=n {
            d.parent[v] = (v - 1) as Vertex;
        }
        d
    }

    #[test]
    fn single_bag_triangle_is_valid() {
        let g = Graph::complete(3);
        let d = TreeDecomposition {
            bags: vec![bag(&[1, 2, 3])],
            tree_edges: vec![],
            is_path: false,
        };
        assert_eq!(validate_tree_or_path(&g, &d), Ok(2));
    }

    #[test]
    fn two_bag_path_decomposition_of_p3() {
        let g = Graph::path(3);
        let d = TreeDecomposition {
            bags: vec![bag(&[1, 2]), bag(&[2, 3])],
            tree_edges: vec![(0, 1)],
            is_path: true,
        };
        assert_eq!(validate_tree_or_path(&g, &d), Ok(1));
    }

    #[test]
    fn singleton_bags_miss_an_edge() {
        let g = Graph::path(3);
        let d = TreeDecomposition {
            bags: vec![bag(&[1]), bag(&[2]), bag(&[3])],
            tree_edges: vec![(0, 1), (1, 2)],
            is_path: true,
        };
        assert_eq!(
            validate_tree_or_path(&g, &d),
            Err(DecompViolation::UncoveredEdge(1, 2))
        );
    }

    #[test]
    fn disconnected_occurrence_detected() {
        let g = Graph::empty(1);
        let d = TreeDecomposition {
            bags: vec![bag(&[1]), bag(&[]), bag(&[1])],
            tree_edges: vec![(0, 1), (1, 2)],
            is_path: true,
        };
        assert_eq!(
            validate_tree_or_path(&g, &d),
            Err(DecompViolation::DisconnectedOccurrence(1))
        );
    }

    #[test]
    fn tdd_of_triangle_chain() {
        let g = Graph::complete(3);
        assert_eq!(validate_tdd(&g, &chain_tdd(3)), Ok(3));
    }

    #[test]
    fn tdd_root2_of_p3() {
        let g = Graph::path(3);
        let mut d = TreedepthDecomposition::new(3);
        d.parent[1] = 2;
        d.parent[3] = 2;
        assert_eq!(validate_tdd(&g, &d), Ok(2));
    }

    #[test]
    fn tdd_star_rooted_at_1_misses_edge_23() {
        let g = Graph::new(3, [(1, 2), (2, 3)]).unwrap();
        let mut d = TreedepthDecomposition::new(g.n());
        d.parent[2] = 1;
        d.parent[3] = 1;
        assert_eq!(validate_tdd(&g, &d), Err(TddViolation::EdgeNotCovered(2, 3)));
    }

    #[test]
    fn tdd_cycle_detected() {
        let g = Graph::empty(2);
        let d = TreedepthDecomposition {
            parent: vec![0, 2, 1],
        };
        assert_eq!(validate_tdd(&g, &d), Err(TddViolation::ParentCycle(1)));
    }

    #[test]
    fn identity_deconstruction_width_two() {
        let g = Graph::path(3);
        let dc = Deconstruction {
            host: g.clone(),
            bags: vec![bag(&[1]), bag(&[2]), bag(&[3])],
        };
        assert_eq!(validate_deconstruction(&g, &dc), Ok(2));
    }

    #[test]
    fn deconstruction_missing_edge_cover() {
        let g = Graph::path(3);
        let dc = Deconstruction {
            host: Graph::empty(3),
            bags: vec![bag(&[1]), bag(&[2]), bag(&[3])],
        };
        assert_eq!(
            validate_deconstruction(&g, &dc),
            Err(DeconViolation::UncoveredEdge(1, 2))
        );
    }

    #[test]
    fn td_to_path_star() {
        // Star: center 1, leaves 2, 3, 4; decomposition rooted at 1.
        let g = Graph::new(4, [(1, 2), (1, 3), (1, 4)]).unwrap();
        let mut d = TreedepthDecomposition::new(4);
        d.parent[2] = 1;
        d.parent[3] = 1;
        d.parent[4] = 1;
        let p = td_to_path(&g, &d).unwrap();
        assert_eq!(p.bags, vec![bag(&[1, 2]), bag(&[1, 3]), bag(&[1, 4])]);
        assert_eq!(validate_tree_or_path(&g, &p), Ok(1));
    }

    #[test]
    fn td_to_path_single_vertex_and_chain() {
        let g1 = Graph::empty(1);
        let p1 = td_to_path(&g1, &chain_tdd(1)).unwrap();
        assert_eq!(p1.bags, vec![bag(&[1])]);
        let g3 = Graph::complete(3);
        let p3 = td_to_path(&g3, &chain_tdd(3)).unwrap();
        assert_eq!(p3.bags, vec![bag(&[1, 2, 3])]);
        assert_eq!(validate_tree_or_path(&g3, &p3), Ok(2));
    }

    #[test]
    fn tree_to_tdd_on_path_graph() {
        let g = Graph::path(8);
        let d = TreeDecomposition {
            bags: (1..8).map(|i| bag(&[i as Vertex, i as Vertex + 1])).collect(),
            tree_edges: (1..7).map(|i| (i - 1, i)).collect(),
            is_path: true,
        };
        let t = tree_to_tdd(&g, &d).unwrap();
        let depth = validate_tdd(&g, &t).unwrap();
        assert!(depth <= TREE_TO_TDD_C * 2 * ceil_lg(8), "depth {}", depth);
    }

    #[test]
    fn tree_to_tdd_single_bag_k3() {
        let g = Graph::complete(3);
        let d = TreeDecomposition {
            bags: vec![bag(&[1, 2, 3])],
            tree_edges: vec![],
            is_path: false,
        };
        let t = tree_to_tdd(&g, &d).unwrap();
        assert_eq!(validate_tdd(&g, &t), Ok(3));
    }

    #[test]
    fn prune_merges_subset_bags() {
        let g = Graph::path(3);
        let d = TreeDecomposition {
            bags: vec![bag(&[1, 2]), bag(&[1, 2]), bag(&[2]), bag(&[2, 3])],
            tree_edges: vec![(0, 1), (1, 2), (2, 3)],
            is_path: true,
        };
        let p = prune_tree_decomposition(&g, &d).unwrap();
        assert_eq!(p.bags.len(), 2);
        assert_eq!(validate_tree_or_path(&g, &p), Ok(1));
        let pp = prune_tree_decomposition(&g, &p).unwrap();
        assert_eq!(pp.bags, p.bags);
    }

    #[test]
    fn dfs_tdd_path_and_empty() {
        let g = Graph::path(3);
        let d = dfs_tdd(&g);
        assert_eq!(validate_tdd(&g, &d), Ok(3));
        let e = Graph::empty(3);
        let de = dfs_tdd(&e);
        assert_eq!(validate_tdd(&e, &de), Ok(1));
        assert_eq!(de.roots(), vec![1, 2, 3]);
    }

    #[test]
    fn lift_identity_deconstruction() {
        let g = Graph::path(3);
        let dc = Deconstruction {
            host: g.clone(),
            bags: vec![bag(&[1]), bag(&[2]), bag(&[3])],
        };
        let mut dh = TreedepthDecomposition::new(3);
        dh.parent[1] = 2;
        dh.parent[3] = 2;
        let lifted = lift_via_deconstruction(
            LiftKind::Td,
            &g,
            &dc,
            &AnyDecomposition::TreeDepth(dh),
        )
        .unwrap();
        assert_eq!(lifted.measure(&g).unwrap(), 2);
    }

    #[test]
    fn extend_with_isolated_vertex() {
        let g = Graph::complete(3);
        let g2 = Graph::new(4, [(1, 2), (1, 3), (2, 3)]).unwrap();
        let d = AnyDecomposition::TreeDepth(chain_tdd(3));
        let out = extend_clique_attached(LiftKind::Td, &g, &g2, &d, 1).unwrap();
        assert!(out.measure(&g2).unwrap() <= 4);
    }

    #[test]
    fn extend_rejects_non_clique_neighborhood() {
        let g = Graph::path(3); // 1-2-3, vertices 1 and 3 not adjacent
        let g2 = Graph::new(4, [(1, 2), (2, 3), (4, 1), (4, 3)]).unwrap();
        let d = AnyDecomposition::TreeDepth(chain_tdd(3));
        assert!(matches!(
            extend_clique_attached(LiftKind::Td, &g, &g2, &d, 1),
            Err(TransformError::Precondition(_))
        ));
    }

    #[test]
    fn file_round_trips() {
        let td = TreeDecomposition {
            bags: vec![bag(&[1, 2]), bag(&[2, 3])],
            tree_edges: vec![(0, 1)],
            is_path: true,
        };
        assert_eq!(TreeDecomposition::parse(&td.serialize(3)).unwrap(), td);

        let tdd = chain_tdd(4);
        assert_eq!(TreedepthDecomposition::parse(&tdd.serialize()).unwrap(), tdd);

        let dc = Deconstruction {
            host: Graph::path(2),
            bags: vec![bag(&[1, 2]), bag(&[3])],
        };
        assert_eq!(Deconstruction::parse(&dc.serialize()).unwrap(), dc);
    }
}
