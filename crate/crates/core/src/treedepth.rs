//! Tree-depth, roots, and the sentences that define bounded tree-depth.

use crate::budget::Budget;
use crate::enumerate::{enum_structures, EnumOptions};
use crate::error::{Error, Result};
use crate::formulas::{dist_le, distinct, gaifman_adj, relativise, Formula, Fresh, Var};
use crate::structures::{Signature, Structure};
use rustc_hash::FxHashMap;

/// Tree-depth of the Gaifman graph (0 for the empty structure).
pub fn tree_depth(a: &Structure) -> Result<usize> {
    let mut best = 0;
    for comp in a.components() {
        if comp.len() > 64 {
            return Err(Error::budget(format!("component with {} elements", comp.len())));
        }
        let sub = a.induced(&comp);
        let masks = sub.gaifman_masks()?;
        let full = if comp.len() == 64 { u64::MAX } else { (1u64 << comp.len()) - 1 };
        let mut memo = FxHashMap::default();
        best = best.max(td_set(&masks, full, &mut memo));
    }
    Ok(best)
}

/// Tree-depth of the subgraph induced on `set`.
fn td_set(adj: &[u64], set: u64, memo: &mut FxHashMap<u64, usize>) -> usize {
    if set == 0 {
        return 0;
    }
    if let Some(&v) = memo.get(&set) {
        return v;
    }
    let comps = split_components(adj, set);
    let v = if comps.len() > 1 {
        comps.iter().map(|&c| td_set(adj, c, memo)).max().unwrap_or(0)
    } else if set.count_ones() == 1 {
        1
    } else {
        let mut best = usize::MAX;
        let mut rest = set;
        while rest != 0 {
            let v = rest.trailing_zeros();
            rest &= rest - 1;
            let t = td_set(adj, set & !(1u64 << v), memo);
            best = best.min(t);
            if best + 1 <= lower_bound(set) {
                break;
            }
        }
        best + 1
    };
    memo.insert(set, v);
    v
}

/// `ceil(log2(|S| + 1))` is a lower bound only for paths; for a connected
/// set the safe bound is 2 once it has an edge.
fn lower_bound(set: u64) -> usize {
    if set.count_ones() >= 2 {
        2
    } else {
        1
    }
}

fn split_components(adj: &[u64], set: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut rest = set;
    while rest != 0 {
        let start = rest & rest.wrapping_neg();
        let mut comp = start;
        let mut frontier = start;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let nb = adj[v] & set & !comp;
            comp |= nb;
            frontier |= nb;
        }
        out.push(comp);
        rest &= !comp;
    }
    out
}

/// Tree-depth roots of a connected structure: elements whose removal lowers
/// the tree-depth. A singleton is its own root.
pub fn roots_of(a: &Structure) -> Result<Vec<usize>> {
    if !a.is_connected() {
        return Err(Error::invalid("roots are defined for connected structures"));
    }
    if a.size() == 1 {
        return Ok(vec![0]);
    }
    let masks = a.gaifman_masks()?;
    let full = if a.size() == 64 { u64::MAX } else { (1u64 << a.size()) - 1 };
    let mut memo = FxHashMap::default();
    let td = td_set(&masks, full, &mut memo);
    Ok((0..a.size()).filter(|&r| td_set(&masks, full & !(1u64 << r), &mut memo) + 1 == td).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdMode {
    /// Recursive definition through a root of each component; size linear in
    /// `2^d`, alternation depth linear in `d`.
    Inductive,
    /// Universal sentence forbidding the minimal obstructions, found by
    /// exhaustive search over connected graphs with at most `cap` vertices.
    Obstructions { cap: usize },
}

impl TdMode {
    pub fn obstructions_default(d: usize) -> TdMode {
        TdMode::Obstructions { cap: 1usize << (d + 1).min(20) }
    }
}

/// Sentence true exactly on the structures of tree-depth at most `d`.
pub fn build_td_leq(sig: &Signature, d: usize, mode: TdMode, fresh: &mut Fresh) -> Result<Formula> {
    match mode {
        TdMode::Inductive => {
            let x = fresh.var();
            let c = component_td_le(sig, d, &x, fresh);
            Ok(Formula::forall(&x, c))
        }
        TdMode::Obstructions { cap } => obstruction_sentence(sig, d, cap, fresh),
    }
}

/// `td = j` (for `j = 0`: the structure is empty).
pub fn build_td_eq(sig: &Signature, j: usize, fresh: &mut Fresh) -> Result<Formula> {
    let le = build_td_leq(sig, j, TdMode::Inductive, fresh)?;
    if j == 0 {
        return Ok(le);
    }
    let below = build_td_leq(sig, j - 1, TdMode::Inductive, fresh)?;
    Ok(Formula::and2(le, Formula::not(below)))
}

/// "The component of `x` has tree-depth at most `d`".
fn component_td_le(sig: &Signature, d: usize, x: &Var, fresh: &mut Fresh) -> Formula {
    match d {
        0 => Formula::ff(),
        1 => {
            let y = fresh.var();
            Formula::forall(&y, Formula::not(gaifman_adj(sig, x, &y, fresh)))
        }
        _ => {
            let l = 1u64 << d.min(62);
            // The ball of radius 2^d around x is closed, hence the component.
            let y0 = fresh.var();
            let far = dist_le(sig, l + 1, x, &y0, fresh);
            let near = dist_le(sig, l, x, &y0, fresh);
            let closed = Formula::not(Formula::exists(&y0, Formula::and2(far, Formula::not(near))));
            let r = fresh.var();
            let y = fresh.var();
            let inner = component_td_le(sig, d - 1, &y, fresh);
            let w = fresh.var();
            let inner = relativise(&inner, &Formula::neq(&w, &r), &w, fresh);
            let in_r = dist_le(sig, l, x, &r, fresh);
            let in_y = dist_le(sig, l, x, &y, fresh);
            let body = Formula::exists(
                &r,
                Formula::and2(
                    in_r,
                    Formula::forall(&y, Formula::implies(Formula::and2(in_y, Formula::neq(&y, &r)), inner)),
                ),
            );
            Formula::and2(closed, body)
        }
    }
}

/// Minimal obstructions for tree-depth at most `d` have at most
/// `2^(2^(d-1))` vertices; below that the search would be incomplete.
pub fn obstruction_size_bound(d: usize) -> Option<usize> {
    if d == 0 {
        return Some(1);
    }
    let e = 1u32.checked_shl((d - 1) as u32)?;
    1usize.checked_shl(e)
}

/// Largest obstruction search we attempt.
pub const MAX_OBSTRUCTION_SEARCH: usize = 8;

/// Minimal connected graphs of tree-depth `d + 1`, i.e. every proper
/// subgraph has tree-depth at most `d`.
pub fn minimal_obstructions(d: usize, cap: usize) -> Result<Vec<Structure>> {
    let bound = obstruction_size_bound(d).ok_or_else(|| Error::budget("obstruction bound overflows"))?;
    if cap < bound {
        return Err(Error::unsupported(format!(
            "obstruction cap {cap} is below {bound}, the largest possible minimal obstruction for td <= {d}"
        )));
    }
    if bound > MAX_OBSTRUCTION_SEARCH {
        return Err(Error::budget(format!("obstruction search over graphs with {bound} vertices")));
    }
    let sig = Signature::of(&[("E", 2)]);
    let graphs = enum_structures(&sig, EnumOptions::graphs(bound).connected().td(d + 1), &Budget::unlimited())?;
    let mut out = Vec::new();
    for g in graphs {
        if tree_depth(&g)? != d + 1 {
            continue;
        }
        let mut minimal = true;
        for t in g.relation(0).iter().filter(|t| t[0] < t[1]) {
            let mut h = Structure::new(sig.clone(), g.size());
            for u in g.relation(0) {
                if !(u[0] == t[0] && u[1] == t[1] || u[0] == t[1] && u[1] == t[0]) {
                    h.add_tuple(0, u.clone())?;
                }
            }
            if tree_depth(&h)? > d {
                minimal = false;
                break;
            }
        }
        if minimal {
            out.push(g);
        }
    }
    Ok(out)
}

fn obstruction_sentence(sig: &Signature, d: usize, cap: usize, fresh: &mut Fresh) -> Result<Formula> {
    if d == 0 {
        let x = fresh.var();
        return Ok(Formula::forall(&x, Formula::ff()));
    }
    let obs = minimal_obstructions(d, cap)?;
    let mut alts = Vec::new();
    for h in &obs {
        let xs = fresh.vars(h.size());
        let mut parts = vec![distinct(&xs)];
        for t in h.relation(0).iter().filter(|t| t[0] < t[1]) {
            parts.push(gaifman_adj(sig, &xs[t[0]], &xs[t[1]], fresh));
        }
        alts.push(Formula::exists_many(&xs, Formula::and(parts)));
    }
    Ok(Formula::not(Formula::or(alts)))
}

/// `roots_d(x)`: some `c < d` has `td > c` while removing `x` leaves
/// `td <= c`. With `c = 0` included, the element of a singleton is a root.
pub fn build_roots(sig: &Signature, d: usize, x: &Var, fresh: &mut Fresh) -> Result<Formula> {
    let mut alts = Vec::new();
    for c in 0..d {
        let above = Formula::not(build_td_leq(sig, c, TdMode::Inductive, fresh)?);
        let le = build_td_leq(sig, c, TdMode::Inductive, fresh)?;
        let w = fresh.var();
        let without = relativise(&le, &Formula::neq(&w, x), &w, fresh);
        alts.push(Formula::and2(above, without));
    }
    Ok(Formula::or(alts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{eval_sentence, eval_unary};

    fn g(n: usize, e: &[(usize, usize)]) -> Structure {
        Structure::graph(&Signature::of(&[("E", 2)]), n, e).unwrap()
    }

    #[test]
    fn known_tree_depths() {
        let path = |n: usize| g(n, &(1..n).map(|i| (i - 1, i)).collect::<Vec<_>>());
        // Paths: ceil(log2(n + 1)).
        for (n, td) in [(1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4), (15, 4), (16, 5)] {
            assert_eq!(tree_depth(&path(n)).unwrap(), td, "path {n}");
        }
        let k4 = g(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(tree_depth(&k4).unwrap(), 4);
        let star = g(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(tree_depth(&star).unwrap(), 2);
        assert_eq!(roots_of(&star).unwrap(), vec![0]);
        assert_eq!(tree_depth(&g(0, &[])).unwrap(), 0);
    }

    #[test]
    fn small_obstruction_sets() {
        assert_eq!(minimal_obstructions(1, 4).unwrap().len(), 1);
        let two = minimal_obstructions(2, 8).unwrap();
        let sizes: Vec<usize> = two.iter().map(|s| s.size()).collect();
        // Triangle and the path on four vertices.
        assert_eq!(sizes, vec![3, 4]);
        assert!(minimal_obstructions(2, 3).is_err());
        assert!(matches!(minimal_obstructions(3, 16), Err(Error::Budget(_))));
    }

    #[test]
    fn roots_formula_on_paths() {
        let sig = Signature::of(&[("E", 2)]);
        let mut fresh = Fresh::new();
        let x = fresh.var();
        let f = build_roots(&sig, 3, &x, &mut fresh).unwrap();
        assert_eq!(eval_unary(&g(3, &[(0, 1), (1, 2)]), &f, &x).unwrap(), vec![1]);
        assert_eq!(eval_unary(&g(1, &[]), &f, &x).unwrap(), vec![0]);
        assert_eq!(eval_unary(&g(2, &[(0, 1)]), &f, &x).unwrap(), vec![0, 1]);
        let td2 = build_td_leq(&sig, 2, TdMode::Inductive, &mut fresh).unwrap();
        assert!(eval_sentence(&g(3, &[(0, 1), (1, 2)]), &td2).unwrap());
        assert!(!eval_sentence(&g(4, &[(0, 1), (1, 2), (2, 3)]), &td2).unwrap());
    }
}
