//! Shallow trees encoding huge numbers, and the coloured forests on which a
//! short MSO sentence needs FO quantifier rank `tower(d)`.

use crate::error::{Error, Result};
use crate::formulas::{relativise, Formula, Fresh, Var};
use crate::structures::{Signature, Structure};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeSet;

/// Rooted tree with node 0 as the root and every node coloured red or blue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    red: Vec<bool>,
}

impl RootedTree {
    pub fn leaf(red: bool) -> Self {
        RootedTree { parent: vec![None], red: vec![red] }
    }

    /// New root of the given colour above the given subtrees.
    pub fn join(kids: &[RootedTree], red: bool) -> Self {
        let mut t = RootedTree::leaf(red);
        for k in kids {
            let off = t.size();
            for (i, p) in k.parent.iter().enumerate() {
                t.parent.push(Some(p.map_or(0, |q| q + off)));
                t.red.push(k.red[i]);
            }
        }
        t
    }

    /// Parent array with `None` exactly at node 0.
    pub fn from_parents(parent: Vec<Option<usize>>, red: Vec<bool>) -> Result<Self> {
        if parent.is_empty() || parent[0].is_some() || parent.len() != red.len() {
            return Err(Error::invalid("node 0 must be the only root"));
        }
        for (i, p) in parent.iter().enumerate().skip(1) {
            match p {
                Some(q) if *q < i => {}
                _ => return Err(Error::invalid("parents must precede their children")),
            }
        }
        Ok(RootedTree { parent, red })
    }

    pub fn size(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn is_red(&self, v: usize) -> bool {
        self.red[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.size()).filter(|&c| self.parent[c] == Some(v)).collect()
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut h = vec![1usize; self.size()];
        for v in 1..self.size() {
            h[v] = h[self.parent[v].unwrap()] + 1;
        }
        h.into_iter().max().unwrap_or(0)
    }

    pub fn coloured(&self, red: bool) -> Self {
        RootedTree { parent: self.parent.clone(), red: vec![red; self.size()] }
    }

    /// The subtree below `v`, renumbered with `v` as node 0.
    pub fn subtree(&self, v: usize) -> RootedTree {
        let kids: Vec<RootedTree> = self.children(v).into_iter().map(|c| self.subtree(c)).collect();
        RootedTree::join(&kids, self.red[v])
    }

    /// Canonical string of the uncoloured shape below `v`.
    fn shape(&self, v: usize) -> String {
        let mut kids: Vec<String> = self.children(v).into_iter().map(|c| self.shape(c)).collect();
        kids.sort();
        format!("({})", kids.concat())
    }

    /// Isomorphism of the uncoloured rooted trees.
    pub fn same_shape(&self, other: &RootedTree) -> bool {
        self.shape(0) == other.shape(0)
    }

    pub fn to_structure(&self) -> Structure {
        forest(std::slice::from_ref(self))
    }
}

/// `{E/2, R/1, B/1}` with edges pointing away from the roots.
pub fn sigma() -> Signature {
    Signature::of(&[("E", 2), ("R", 1), ("B", 1)])
}

/// Disjoint union of the trees, numbered consecutively; returns the forest.
pub fn forest(trees: &[RootedTree]) -> Structure {
    let n = trees.iter().map(|t| t.size()).sum();
    let mut a = Structure::new(sigma(), n);
    let mut off = 0;
    for t in trees {
        for v in 0..t.size() {
            if let Some(p) = t.parent[v] {
                a.add("E", &[p + off, v + off]).expect("in range");
            }
            a.add(if t.red[v] { "R" } else { "B" }, &[v + off]).expect("in range");
        }
        off += t.size();
    }
    a
}

/// Roots of the trees of `forest(trees)`.
pub fn forest_roots(trees: &[RootedTree]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut off = 0;
    for t in trees {
        out.push(off);
        off += t.size();
    }
    out
}

/// A root with children `enc(i)` for every set bit `i` of `n`; red.
pub fn enc(n: u64) -> RootedTree {
    if n == 0 {
        return RootedTree::leaf(true);
    }
    let kids: Vec<RootedTree> = (0..64).filter(|i| n >> i & 1 == 1).map(enc).collect();
    RootedTree::join(&kids, true)
}

/// Bottom-up reduction to a number encoding: children are reduced first, and
/// of several children with the same reduced shape only one is kept.
pub fn num(t: &RootedTree) -> RootedTree {
    fn go(t: &RootedTree, v: usize) -> RootedTree {
        let mut kids: Vec<(String, RootedTree)> = Vec::new();
        for c in t.children(v) {
            let k = go(t, c);
            let s = k.shape(0);
            if !kids.iter().any(|(s2, _)| *s2 == s) {
                kids.push((s, k));
            }
        }
        kids.sort_by(|a, b| a.0.cmp(&b.0));
        let kids: Vec<RootedTree> = kids.into_iter().map(|k| k.1).collect();
        RootedTree::join(&kids, t.red[v])
    }
    go(t, 0)
}

/// No node has two children with isomorphic subtrees.
pub fn is_number_encoding(t: &RootedTree) -> bool {
    (0..t.size()).all(|v| {
        let shapes: Vec<String> = t.children(v).into_iter().map(|c| t.shape(c)).collect();
        shapes.iter().collect::<BTreeSet<_>>().len() == shapes.len()
    })
}

/// The number encoded by `t`.
pub fn decode(t: &RootedTree) -> Result<BigUint> {
    if !is_number_encoding(t) {
        return Err(Error::invalid("tree has isomorphic sibling subtrees"));
    }
    fn go(t: &RootedTree, v: usize) -> Result<BigUint> {
        let mut n = BigUint::zero();
        for c in t.children(v) {
            let bit = go(t, c)?.to_usize().filter(|&b| b < 1 << 20).ok_or_else(|| Error::budget("bit position too large"))?;
            n |= BigUint::one() << bit;
        }
        Ok(n)
    }
    go(t, 0)
}

/// `d`-fold iterated exponential of 0; refused above 6.
pub fn tower(d: usize) -> Result<BigUint> {
    if d > 6 {
        return Err(Error::budget(format!("tower({d}) is too large to write down")));
    }
    let mut n = BigUint::zero();
    for _ in 0..d {
        let e = n.to_usize().expect("bounded by tower(5)");
        n = BigUint::one() << e;
    }
    Ok(n)
}

pub fn tower_u64(d: usize) -> Option<u64> {
    tower(d).ok()?.to_u64()
}

// ---------------------------------------------------------------------------
// Formulas.

fn e(x: &Var, y: &Var) -> Formula {
    Formula::atom("E", &[x.clone(), y.clone()])
}

/// Every child of `u` has a child of `v` that is `sub`-equal to it.
fn covered(u: &Var, v: &Var, sub: impl Fn(&Var, &Var, &mut Fresh) -> Formula, fresh: &mut Fresh) -> Formula {
    let u1 = fresh.var();
    let v1 = fresh.var();
    let inner = sub(&u1, &v1, fresh);
    Formula::forall(&u1, Formula::implies(e(u, &u1), Formula::exists(&v1, Formula::and2(e(v, &v1), inner))))
}

/// `eq_d(x, y)`: the trees below `x` and `y` reduce to the same number, for
/// trees of height at most `d`. One recursive occurrence per level, shared by
/// both inclusion directions, keeps the size linear in `d`.
pub fn build_eq(d: usize, x: &Var, y: &Var, fresh: &mut Fresh) -> Formula {
    if d == 0 {
        return Formula::tt();
    }
    let u = fresh.var();
    let v = fresh.var();
    let pair = Formula::or2(
        Formula::and2(Formula::eq(&u, x), Formula::eq(&v, y)),
        Formula::and2(Formula::eq(&u, y), Formula::eq(&v, x)),
    );
    let body = covered(&u, &v, |a, b, f| build_eq(d - 1, a, b, f), fresh);
    Formula::forall_many(&[u.clone(), v.clone()], Formula::implies(pair, body))
}

/// Reference version with two recursive occurrences per level.
pub fn build_eq_naive(d: usize, x: &Var, y: &Var, fresh: &mut Fresh) -> Formula {
    if d == 0 {
        return Formula::tt();
    }
    let a = covered(x, y, |p, q, f| build_eq_naive(d - 1, p, q, f), fresh);
    let b = covered(y, x, |p, q, f| build_eq_naive(d - 1, p, q, f), fresh);
    Formula::and2(a, b)
}

/// `x` is in `m` and its parent is not.
pub fn root_in(x: &Var, m: &Var, fresh: &mut Fresh) -> Formula {
    let z = fresh.var();
    Formula::and2(
        Formula::set_atom(m, x),
        Formula::not(Formula::exists(&z, Formula::and2(Formula::set_atom(m, &z), e(&z, x)))),
    )
}

/// Within every tree, `m` induces a connected part: two distinct tops of `m`
/// are separated by a set closed under edges in both directions.
pub fn conn(m: &Var, fresh: &mut Fresh) -> Formula {
    let x = fresh.var();
    let y = fresh.var();
    let s = fresh.set_var();
    let u = fresh.var();
    let v = fresh.var();
    let closed = Formula::forall_many(
        &[u.clone(), v.clone()],
        Formula::implies(e(&u, &v), Formula::iff(Formula::set_atom(&s, &u), Formula::set_atom(&s, &v))),
    );
    let apart =
        Formula::exists_set(&s, Formula::and(vec![Formula::set_atom(&s, &x), Formula::not(Formula::set_atom(&s, &y)), closed]));
    let tops = Formula::and(vec![root_in(&x, m, fresh), root_in(&y, m, fresh), Formula::neq(&x, &y)]);
    Formula::forall_many(&[x, y], Formula::implies(tops, apart))
}

/// True on `F_d^n` iff `n >= tower(d)`: some set `m` containing the red
/// trees, connected inside each tree, matches every red root with a blue
/// top of `m` carrying the same number.
pub fn build_phi_lower(d: usize) -> Formula {
    let mut fresh = Fresh::new();
    let m = fresh.set_var();
    let x = fresh.var();
    let y = fresh.var();
    let w = fresh.var();
    let red_in = Formula::forall(&w, Formula::implies(Formula::atom("R", &[w.clone()]), Formula::set_atom(&m, &w)));
    let gv = fresh.var();
    let eq = build_eq(d, &x, &y, &mut fresh);
    let eq_m = relativise(&eq, &Formula::set_atom(&m, &gv), &gv, &mut fresh);
    let matched = Formula::exists(
        &y,
        Formula::and(vec![root_in(&y, &m, &mut fresh), Formula::atom("B", &[y.clone()]), eq_m]),
    );
    let red_root = Formula::and2(Formula::atom("R", &[x.clone()]), root_in(&x, &m, &mut fresh));
    let all = Formula::forall(&x, Formula::implies(red_root, matched));
    let c = conn(&m, &mut fresh);
    Formula::exists_set(&m, Formula::and(vec![red_in, c, all]))
}

// ---------------------------------------------------------------------------
// The forest family.

/// Largest `d` for which the family is built.
pub const MAX_FAMILY_D: usize = 3;

/// Red trees `enc(0), ..., enc(tower(d) - 1)`.
pub fn red_forest(d: usize) -> Result<Vec<RootedTree>> {
    if d == 0 || d > MAX_FAMILY_D {
        return Err(Error::budget(format!("family for d = {d} (supported: 1..={MAX_FAMILY_D})")));
    }
    let t = tower_u64(d).expect("small tower");
    Ok((0..t).map(enc).collect())
}

/// Blue complete `k`-ary tree of height `d` with `k = max(1, tower(d) - 1)`.
pub fn build_witness_tree(d: usize) -> Result<RootedTree> {
    if d == 0 || d > MAX_FAMILY_D {
        return Err(Error::budget(format!("witness tree for d = {d} (supported: 1..={MAX_FAMILY_D})")));
    }
    let k = (tower_u64(d).unwrap() as usize).saturating_sub(1).max(1);
    fn full(k: usize, h: usize) -> RootedTree {
        if h == 1 {
            return RootedTree::leaf(false);
        }
        let kid = full(k, h - 1);
        RootedTree::join(&vec![kid; k], false)
    }
    Ok(full(k, d))
}

/// Trees of `F_d^n`: the red forest followed by `n` blue witness trees.
pub fn family_trees(d: usize, n: usize) -> Result<Vec<RootedTree>> {
    let mut trees = red_forest(d)?;
    let w = build_witness_tree(d)?;
    trees.extend(std::iter::repeat_n(w, n));
    Ok(trees)
}

pub fn build_family(d: usize, n: usize) -> Result<Structure> {
    Ok(forest(&family_trees(d, n)?))
}

/// `pattern` maps into `host` root to root, children injectively to children.
pub fn embeds_at_root(pattern: &RootedTree, host: &RootedTree) -> bool {
    fn go(p: &RootedTree, pv: usize, h: &RootedTree, hv: usize) -> bool {
        let pk = p.children(pv);
        let hk = h.children(hv);
        if pk.len() > hk.len() {
            return false;
        }
        fn assign(i: usize, pk: &[usize], hk: &[usize], used: &mut Vec<bool>, p: &RootedTree, h: &RootedTree) -> bool {
            if i == pk.len() {
                return true;
            }
            for j in 0..hk.len() {
                if !used[j] && go(p, pk[i], h, hk[j]) {
                    used[j] = true;
                    if assign(i + 1, pk, hk, used, p, h) {
                        return true;
                    }
                    used[j] = false;
                }
            }
            false
        }
        assign(0, &pk, &hk, &mut vec![false; hk.len()], p, h)
    }
    go(pattern, 0, host, 0)
}
