//! Small formula builders shared by the constructions.

use super::{Formula, Fresh, Var};
use crate::structures::{AtomicType, Signature};

/// `x != y` and `x`, `y` occur together in some tuple (Gaifman adjacency).
pub fn gaifman_adj(sig: &Signature, x: &Var, y: &Var, fresh: &mut Fresh) -> Formula {
    let mut alts = Vec::new();
    for (name, k) in sig.symbols() {
        for i in 0..*k {
            for j in 0..*k {
                if i == j {
                    continue;
                }
                let others: Vec<usize> = (0..*k).filter(|&p| p != i && p != j).collect();
                let ws = fresh.vars(others.len());
                let mut args: Vec<Var> = vec![x.clone(); *k];
                args[i] = x.clone();
                args[j] = y.clone();
                for (w, &p) in ws.iter().zip(&others) {
                    args[p] = w.clone();
                }
                alts.push(Formula::exists_many(&ws, Formula::atom(name, &args)));
            }
        }
    }
    Formula::and2(Formula::neq(x, y), Formula::or(alts))
}

/// Distance at most `l` in the Gaifman graph, by path halving; the tree
/// size is linear in `l` and the formula is existential.
pub fn dist_le(sig: &Signature, l: u64, x: &Var, y: &Var, fresh: &mut Fresh) -> Formula {
    match l {
        0 => Formula::eq(x, y),
        1 => Formula::or2(Formula::eq(x, y), gaifman_adj(sig, x, y, fresh)),
        _ => {
            let m = fresh.var();
            let a = dist_le(sig, l.div_ceil(2), x, &m, fresh);
            let b = dist_le(sig, l / 2, &m, y, fresh);
            Formula::exists(&m, Formula::and2(a, b))
        }
    }
}

/// `reach_d(x, y)`: distance at most `2^d`. On structures of tree-depth at
/// most `d` this is exactly "same component".
pub fn reach(sig: &Signature, d: usize, x: &Var, y: &Var, fresh: &mut Fresh) -> Formula {
    dist_le(sig, 1u64 << d.min(62), x, y, fresh)
}

/// The atomic type `alpha` as a formula in `x`.
pub fn atomic_type_formula(sig: &Signature, alpha: &AtomicType, x: &Var) -> Formula {
    let parts = sig
        .symbols()
        .iter()
        .zip(&alpha.0)
        .map(|((name, k), &b)| {
            let a = Formula::atom(name, &vec![x.clone(); *k]);
            if b {
                a
            } else {
                Formula::not(a)
            }
        })
        .collect();
    Formula::and(parts)
}

pub fn distinct(xs: &[Var]) -> Formula {
    let mut parts = Vec::new();
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            parts.push(Formula::neq(&xs[i], &xs[j]));
        }
    }
    Formula::and(parts)
}

/// `exists x. x = x`.
pub fn nonempty(fresh: &mut Fresh) -> Formula {
    let x = fresh.var();
    Formula::exists(&x, Formula::eq(&x, &x))
}
