//! Logic on finite structures of bounded tree-depth.
//!
//! The crate covers finite structures and their tree-depth, first-order and
//! monadic second-order formulas, exhaustive model checking, rank-`q` types
//! with symbolic composition, canonical `q`-orders, and the translations that
//! turn order-invariant sentences into order-free ones on classes of bounded
//! tree-depth. Supporting modules build the tree-encoding lower-bound family,
//! FO-definable elimination forests and the counter-machine reduction.

pub mod budget;
pub mod canon;
pub mod cm2fo;
pub mod enumerate;
pub mod error;
pub mod eval;
pub mod fodecomp;
pub mod formulas;
pub mod lowerbound;
pub mod qorder;
pub mod translate;
pub mod structures;
pub mod treedepth;
pub mod types;
pub mod words;

pub use budget::Budget;
pub use error::{Error, Result};
pub use eval::{eval, eval_sentence, Env, Value};
pub use formulas::{parse_formula, render, Formula, Fresh, Var};
pub use structures::{parse_structure, AtomicType, Signature, Structure};
