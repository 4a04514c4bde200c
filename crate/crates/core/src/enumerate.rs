//! Exhaustive enumeration of structures up to isomorphism.
//!
//! Structures of size `n` are generated from the classes of size `n - 1` by
//! adding one element together with every possible set of tuples touching
//! it, then deduplicated by canonical form. Every structure arises this way
//! from one of its induced substructures, and connected ones from a connected
//! substructure (drop a leaf of a spanning tree), so both filters can be
//! applied level by level.

use crate::budget::Budget;
use crate::canon::{canonical_labelling, CanonicalForm};
use crate::error::{Error, Result};
use crate::structures::{Signature, Structure};
use crate::treedepth::tree_depth;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct EnumOptions {
    pub min_size: usize,
    pub max_size: usize,
    pub connected_only: bool,
    pub td_bound: Option<usize>,
    /// Single binary symbol read as an undirected simple graph.
    pub graph_mode: bool,
}

impl EnumOptions {
    pub fn new(max_size: usize) -> Self {
        EnumOptions { min_size: 0, max_size, connected_only: false, td_bound: None, graph_mode: false }
    }

    pub fn graphs(max_size: usize) -> Self {
        EnumOptions { graph_mode: true, ..EnumOptions::new(max_size) }
    }

    pub fn connected(mut self) -> Self {
        self.connected_only = true;
        self
    }

    pub fn td(mut self, d: usize) -> Self {
        self.td_bound = Some(d);
        self
    }

    pub fn min(mut self, n: usize) -> Self {
        self.min_size = n;
        self
    }
}

/// Cap on candidate extensions per parent.
const MAX_NEW_TUPLES: usize = 20;

/// All isomorphism classes allowed by `opts`, ascending by size and then by
/// canonical form. Representatives are canonically labelled.
pub fn enum_structures(sig: &Signature, opts: EnumOptions, budget: &Budget) -> Result<Vec<Structure>> {
    if opts.graph_mode && (sig.len() != 1 || sig.arity(0) != 2) {
        return Err(Error::invalid("graph mode needs a single binary symbol"));
    }
    let mut out = Vec::new();
    let empty = Structure::new(sig.clone(), 0);
    if opts.min_size == 0 && !opts.connected_only {
        out.push(empty.clone());
    }
    let mut level = vec![empty];
    for n in 1..=opts.max_size {
        budget.check("structure enumeration")?;
        let mut next: BTreeMap<CanonicalForm, Structure> = BTreeMap::new();
        for parent in &level {
            for child in extensions(parent, opts.graph_mode)? {
                if opts.connected_only && !child.is_connected() {
                    continue;
                }
                if let Some(d) = opts.td_bound {
                    if tree_depth(&child)? > d {
                        continue;
                    }
                }
                let (form, perm) = canonical_labelling(&child)?;
                if !next.contains_key(&form) {
                    next.insert(form, child.relabel(&perm)?);
                }
            }
            budget.check("structure enumeration")?;
        }
        level = next.into_values().collect();
        if n >= opts.min_size {
            out.extend(level.iter().cloned());
        }
    }
    Ok(out)
}

fn extensions(parent: &Structure, graph_mode: bool) -> Result<Vec<Structure>> {
    let n = parent.size() + 1;
    let new = n - 1;
    let sig = parent.sig().clone();
    let mut base = Structure::new(sig.clone(), n);
    for ri in 0..sig.len() {
        for t in parent.relation(ri) {
            base.add_tuple(ri, t.clone())?;
        }
    }
    let mut out = Vec::new();
    if graph_mode {
        if new > MAX_NEW_TUPLES {
            return Err(Error::budget("too many extension candidates"));
        }
        for mask in 0u64..(1u64 << new) {
            let mut s = base.clone();
            for b in 0..new {
                if mask >> b & 1 == 1 {
                    s.add_tuple(0, vec![b, new])?;
                    s.add_tuple(0, vec![new, b])?;
                }
            }
            out.push(s);
        }
        return Ok(out);
    }
    let mut fresh: Vec<(usize, Vec<usize>)> = Vec::new();
    for ri in 0..sig.len() {
        let k = sig.arity(ri);
        let total = n.pow(k as u32);
        for code in 0..total {
            let mut t = Vec::with_capacity(k);
            let mut c = code;
            for _ in 0..k {
                t.push(c % n);
                c /= n;
            }
            t.reverse();
            if t.contains(&new) {
                fresh.push((ri, t));
            }
        }
    }
    if fresh.len() > MAX_NEW_TUPLES {
        return Err(Error::budget(format!("{} candidate tuples per new element", fresh.len())));
    }
    for mask in 0u64..(1u64 << fresh.len()) {
        let mut s = base.clone();
        for (i, (ri, t)) in fresh.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s.add_tuple(*ri, t.clone())?;
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// Every linear order of `0..n`, as element lists in ascending position.
pub fn all_orders(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            rec(k + 1, cur, out);
            cur.swap(k, i);
        }
    }
    rec(0, &mut cur, &mut out);
    out.sort();
    out
}
