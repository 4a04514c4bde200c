//! Canonical forms of unordered structures.
//!
//! Colour refinement splits the universe into isomorphism-invariant cells;
//! the canonical form is then the minimum encoding over all labellings that
//! respect the cell order. This is exact: refinement only prunes labellings
//! that can never be optimal for every isomorphic copy alike.

use crate::error::{Error, Result};
use crate::structures::Structure;
use std::collections::BTreeMap;

/// Labellings tried before giving up.
pub const MAX_LABELLINGS: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm {
    pub n: usize,
    pub words: Vec<u64>,
}

impl CanonicalForm {
    pub fn to_hex(&self) -> String {
        let mut s = format!("{:x}:", self.n);
        for w in &self.words {
            s.push_str(&format!("{w:016x}"));
        }
        s
    }
}

pub fn canonical_form(a: &Structure) -> Result<CanonicalForm> {
    canonical_labelling(a).map(|(c, _)| c)
}

/// Returns the canonical form and a permutation `perm` (old -> new) attaining it.
pub fn canonical_labelling(a: &Structure) -> Result<(CanonicalForm, Vec<usize>)> {
    let n = a.size();
    let cells = refined_cells(a);
    let mut count: u128 = 1;
    for c in &cells {
        for k in 1..=c.len() as u128 {
            count = count.saturating_mul(k);
        }
    }
    if count > MAX_LABELLINGS {
        return Err(Error::budget(format!("canonical form needs {count} labellings")));
    }
    let layout = Layout::new(a);
    let mut best: Option<(Vec<u64>, Vec<usize>)> = None;
    let mut perm = vec![usize::MAX; n];
    let mut cell_perms: Vec<Vec<Vec<usize>>> = Vec::new();
    for c in &cells {
        cell_perms.push(permutations(c));
    }
    let mut choice = vec![0usize; cells.len()];
    loop {
        let mut next = 0;
        for (ci, ps) in cell_perms.iter().enumerate() {
            for &e in &ps[choice[ci]] {
                perm[e] = next;
                next += 1;
            }
        }
        let enc = layout.encode(a, &perm);
        match &best {
            Some((b, _)) if *b <= enc => {}
            _ => best = Some((enc, perm.clone())),
        }
        let mut i = 0;
        loop {
            if i == cells.len() {
                let (words, p) = best.unwrap_or((Vec::new(), Vec::new()));
                return Ok((CanonicalForm { n, words }, p));
            }
            choice[i] += 1;
            if choice[i] < cell_perms[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

struct Layout {
    offsets: Vec<usize>,
    total: usize,
    n: usize,
}

impl Layout {
    fn new(a: &Structure) -> Self {
        let n = a.size();
        let mut offsets = Vec::new();
        let mut total = 0usize;
        for i in 0..a.sig().len() {
            offsets.push(total);
            total += n.pow(a.sig().arity(i) as u32);
        }
        Layout { offsets, total, n }
    }

    fn encode(&self, a: &Structure, perm: &[usize]) -> Vec<u64> {
        let mut words = vec![0u64; self.total.div_ceil(64)];
        for ri in 0..a.sig().len() {
            for t in a.relation(ri) {
                let idx = t.iter().fold(0usize, |acc, &e| acc * self.n + perm[e]);
                let bit = self.offsets[ri] + idx;
                // Most significant first so that word order is lexicographic.
                words[bit / 64] |= 1u64 << (63 - bit % 64);
            }
        }
        // Invert so the minimum prefers present tuples early.
        for w in words.iter_mut() {
            *w = !*w;
        }
        words
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = items.to_vec();
    heap_permute(cur.len(), &mut cur, &mut out);
    out
}

fn heap_permute(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k - 1 {
        heap_permute(k - 1, a, out);
        if k % 2 == 0 {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    heap_permute(k - 1, a, out);
}

/// Ordered cells of the stable colouring.
pub fn refined_cells(a: &Structure) -> Vec<Vec<usize>> {
    let n = a.size();
    let mut colour: Vec<usize> = {
        let keys: Vec<_> = (0..n).map(|e| a.atomic_type(e).0).collect();
        rank(&keys)
    };
    let mut classes = count_classes(&colour);
    loop {
        let mut sigs: Vec<(usize, Vec<(usize, u32, Vec<usize>)>)> =
            (0..n).map(|e| (colour[e], Vec::new())).collect();
        for ri in 0..a.sig().len() {
            for t in a.relation(ri) {
                let cols: Vec<usize> = t.iter().map(|&e| colour[e]).collect();
                let mut done = Vec::new();
                for &e in t {
                    if done.contains(&e) {
                        continue;
                    }
                    done.push(e);
                    let mask = t.iter().enumerate().fold(0u32, |m, (i, &x)| if x == e { m | 1 << i } else { m });
                    sigs[e].1.push((ri, mask, cols.clone()));
                }
            }
        }
        for s in sigs.iter_mut() {
            s.1.sort();
        }
        let next = rank(&sigs);
        let nc = count_classes(&next);
        colour = next;
        if nc == classes {
            break;
        }
        classes = nc;
    }
    let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..n {
        cells.entry(colour[e]).or_default().push(e);
    }
    cells.into_values().collect()
}

fn rank<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter().map(|k| sorted.binary_search(k).unwrap()).collect()
}

fn count_classes(c: &[usize]) -> usize {
    let mut v = c.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::Signature;

    #[test]
    fn isomorphic_graphs_share_a_form() {
        let sig = Signature::of(&[("E", 2)]);
        let a = Structure::graph(&sig, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let b = Structure::graph(&sig, 4, &[(3, 0), (0, 2), (2, 1)]).unwrap();
        let c = Structure::graph(&sig, 4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(canonical_form(&a).unwrap(), canonical_form(&b).unwrap());
        assert_ne!(canonical_form(&a).unwrap(), canonical_form(&c).unwrap());
    }

    #[test]
    fn labelling_reproduces_form() {
        let sig = Signature::of(&[("E", 2), ("P", 1)]);
        let mut a = Structure::graph(&Signature::of(&[("E", 2)]), 3, &[(0, 1)]).unwrap();
        a = {
            let mut s = Structure::new(sig.clone(), 3);
            for t in a.relation(0) {
                s.add_tuple(0, t.clone()).unwrap();
            }
            s.add("P", &[2]).unwrap();
            s
        };
        let (form, perm) = canonical_labelling(&a).unwrap();
        let b = a.relabel(&perm).unwrap();
        let (form2, _) = canonical_labelling(&b).unwrap();
        assert_eq!(form, form2);
    }
}
