//! Size, quantifier rank, alternation depth and free variables.

use super::{to_nnf, Formula, Node, Var};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metrics {
    /// Node count of the syntax tree (shared subformulas counted per use).
    pub size: u64,
    pub qr: usize,
    pub qad: usize,
    pub free_vars: BTreeSet<Var>,
    pub uses_order: bool,
    pub uses_sets: bool,
    pub uses_mod: bool,
}

pub fn metrics(f: &Formula) -> Metrics {
    let mut uses_order = false;
    let mut uses_sets = false;
    let mut uses_mod = false;
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![f.clone()];
    while let Some(g) = stack.pop() {
        if !seen.insert(g.ptr()) {
            continue;
        }
        match g.node() {
            Node::Leq(..) => uses_order = true,
            Node::ExistsSet(..) | Node::ForallSet(..) | Node::SetAtom(..) => uses_sets = true,
            Node::ExistsMod(..) => uses_mod = true,
            _ => {}
        }
        stack.extend(g.children().into_iter().cloned());
    }
    Metrics {
        size: size(f),
        qr: quantifier_rank(f),
        qad: qad(f),
        free_vars: free_vars(f),
        uses_order,
        uses_sets,
        uses_mod,
    }
}

pub fn size(f: &Formula) -> u64 {
    fn go(f: &Formula, memo: &mut HashMap<usize, u64>) -> u64 {
        if let Some(&s) = memo.get(&f.ptr()) {
            return s;
        }
        let s = f.children().into_iter().fold(1u64, |acc, c| acc.saturating_add(go(c, memo)));
        memo.insert(f.ptr(), s);
        s
    }
    go(f, &mut HashMap::new())
}

pub fn quantifier_rank(f: &Formula) -> usize {
    fn go(f: &Formula, memo: &mut HashMap<usize, usize>) -> usize {
        if let Some(&s) = memo.get(&f.ptr()) {
            return s;
        }
        let below = f.children().into_iter().map(|c| go(c, memo)).max().unwrap_or(0);
        let own = match f.node() {
            Node::Exists(..) | Node::Forall(..) | Node::ExistsSet(..) | Node::ForallSet(..) | Node::ExistsMod(..) => 1,
            _ => 0,
        };
        memo.insert(f.ptr(), below + own);
        below + own
    }
    go(f, &mut HashMap::new())
}

/// Quantifier alternation depth of the negation normal form. Counting
/// quantifiers are neither existential nor universal and do not reset the
/// current polarity.
pub fn qad(f: &Formula) -> usize {
    let g = to_nnf(f);
    // polarity: 0 none yet, 1 existential, 2 universal
    fn go(f: &Formula, pol: u8, memo: &mut HashMap<(usize, u8), usize>) -> usize {
        if let Some(&s) = memo.get(&(f.ptr(), pol)) {
            return s;
        }
        let (step, next) = match f.node() {
            Node::Exists(..) | Node::ExistsSet(..) => (usize::from(pol == 2), 1),
            Node::Forall(..) | Node::ForallSet(..) => (usize::from(pol == 1), 2),
            _ => (0, pol),
        };
        let below = f.children().into_iter().map(|c| go(c, next, memo)).max().unwrap_or(0);
        memo.insert((f.ptr(), pol), step + below);
        step + below
    }
    go(&g, 0, &mut HashMap::new())
}

/// Free element and set variables.
pub fn free_vars(f: &Formula) -> BTreeSet<Var> {
    fn go(f: &Formula, memo: &mut HashMap<usize, BTreeSet<Var>>) -> BTreeSet<Var> {
        if let Some(s) = memo.get(&f.ptr()) {
            return s.clone();
        }
        let s: BTreeSet<Var> = match f.node() {
            Node::True | Node::False => BTreeSet::new(),
            Node::Atom(_, args) => args.iter().cloned().collect(),
            Node::Eq(a, b) | Node::Leq(a, b) | Node::SetAtom(a, b) => [a.clone(), b.clone()].into_iter().collect(),
            Node::Exists(x, b)
            | Node::Forall(x, b)
            | Node::ExistsSet(x, b)
            | Node::ForallSet(x, b)
            | Node::ExistsMod(_, _, x, b) => {
                let mut s = go(b, memo);
                s.remove(x);
                s
            }
            _ => {
                let mut s = BTreeSet::new();
                for c in f.children() {
                    s.extend(go(c, memo));
                }
                s
            }
        };
        memo.insert(f.ptr(), s.clone());
        s
    }
    go(f, &mut HashMap::new())
}
