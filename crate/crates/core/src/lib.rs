//! Algorithms on graph decompositions with small memory footprints.
//!
//! The crate is organized around a shared problem substrate ([`graph`],
//! [`cnf`], [`turing`]) and the machinery built on top of it:
//!
//! * [`decomp`] — tree, path and tree-depth decompositions, validators, and
//!   the transforms between them (including deconstruction-based lifting);
//! * [`tdalg`] — recursive dynamic programs over tree-depth decompositions
//!   (3-coloring, independent set, dominating-set counting) together with a
//!   space meter and the exponential-space path-decomposition baseline;
//! * [`modcount`] — modular evaluation, coefficient recovery over prime
//!   fields and Chinese-remainder reconstruction for low-space counting;
//! * [`gadgets`] — CNF generators for random-access and bounded-space
//!   machine-computation gadgets, emitted with width-bounded decompositions;
//! * [`reduce`] — answer-preserving instance reductions that transport
//!   decompositions along with the instance;
//! * [`auxsa`] — nondeterministic stack machines, their simulation,
//!   push-pop trees, regularization, and compilation into CNF of bounded
//!   tree-depth.
//!
//! All operations are pure over immutable inputs and safe to call
//! concurrently.

pub mod auxsa;
pub mod cnf;
pub mod decomp;
pub mod gadgets;
pub mod graph;
pub mod modcount;
pub mod oracle;
pub mod reduce;
pub mod tdalg;
pub mod turing;

pub use cnf::{CnfBuilder, CnfError, CnfFormula};
pub use decomp::{Deconstruction, TreeDecomposition, TreedepthDecomposition};
pub use graph::{Graph, GraphError, Vertex};
pub use tdalg::{DominationPolynomial, SpaceMeter};
pub use turing::TuringMachine;
