//! Capture-avoiding substitution, relativisation and the removal
//! interpretation.

use super::{free_vars, var, Formula, Fresh, Node, Var};
use crate::error::{Error, Result};
use crate::structures::split_expanded_name;
use std::collections::{BTreeMap, BTreeSet, HashMap};

type FvMemo = HashMap<usize, BTreeSet<Var>>;

fn fv_cached(f: &Formula, memo: &mut FvMemo) -> BTreeSet<Var> {
    if let Some(s) = memo.get(&f.ptr()) {
        return s.clone();
    }
    let s = free_vars(f);
    memo.insert(f.ptr(), s.clone());
    s
}

/// Simultaneous capture-avoiding renaming of free variables. Bound variables
/// that would capture a substituted name are renamed with fresh names.
pub fn substitute(f: &Formula, map: &BTreeMap<Var, Var>, fresh: &mut Fresh) -> Formula {
    if map.is_empty() {
        return f.clone();
    }
    let mut st = Subst { fresh, memo: HashMap::new(), fv: HashMap::new() };
    st.go(f, map)
}

pub fn rename_free(f: &Formula, from: &Var, to: &Var, fresh: &mut Fresh) -> Formula {
    let mut m = BTreeMap::new();
    m.insert(from.clone(), to.clone());
    substitute(f, &m, fresh)
}

struct Subst<'a> {
    fresh: &'a mut Fresh,
    memo: HashMap<(usize, Vec<(Var, Var)>), Formula>,
    fv: FvMemo,
}

impl Subst<'_> {
    fn go(&mut self, f: &Formula, map: &BTreeMap<Var, Var>) -> Formula {
        let fv = fv_cached(f, &mut self.fv);
        let local: Vec<(Var, Var)> =
            map.iter().filter(|(k, v)| fv.contains(*k) && k != v).map(|(k, v)| (k.clone(), v.clone())).collect();
        if local.is_empty() {
            return f.clone();
        }
        let key = (f.ptr(), local.clone());
        if let Some(g) = self.memo.get(&key) {
            return g.clone();
        }
        let m: BTreeMap<Var, Var> = local.into_iter().collect();
        let sub = |v: &Var| m.get(v).cloned().unwrap_or_else(|| v.clone());
        let out = match f.node() {
            Node::True | Node::False => f.clone(),
            Node::Atom(r, args) => Formula::atom(r, &args.iter().map(sub).collect::<Vec<_>>()),
            Node::Eq(a, b) => Formula::eq(&sub(a), &sub(b)),
            Node::Leq(a, b) => Formula::leq(&sub(a), &sub(b)),
            Node::SetAtom(x, a) => Formula::set_atom(&sub(x), &sub(a)),
            Node::Exists(x, b)
            | Node::Forall(x, b)
            | Node::ExistsSet(x, b)
            | Node::ForallSet(x, b)
            | Node::ExistsMod(_, _, x, b) => {
                let mut inner = m.clone();
                inner.remove(x);
                let body_fv = fv_cached(b, &mut self.fv);
                let captures = inner.iter().any(|(k, v)| v == x && body_fv.contains(k));
                let (nx, body) = if captures {
                    let nx = if super::is_set_var_name(x) { self.fresh.set_var() } else { self.fresh.var() };
                    inner.insert(x.clone(), nx.clone());
                    (nx, self.go(b, &inner))
                } else {
                    (x.clone(), self.go(b, &inner))
                };
                rebind(f, &nx, body)
            }
            _ => {
                let kids: Vec<Formula> = f.children().into_iter().map(|c| self.go(c, &m)).collect();
                f.with_children(kids)
            }
        };
        self.memo.insert(key, out.clone());
        out
    }
}

fn rebind(f: &Formula, x: &Var, body: Formula) -> Formula {
    match f.node() {
        Node::Exists(..) => Formula::exists(x, body),
        Node::Forall(..) => Formula::forall(x, body),
        Node::ExistsSet(..) => Formula::exists_set(x, body),
        Node::ForallSet(..) => Formula::forall_set(x, body),
        Node::ExistsMod(i, p, _, _) => Formula::exists_mod(*i, *p, x, body),
        _ => unreachable!("rebind on a non-binder"),
    }
}

/// Renames every binder in `f` whose name is in `avoid`.
fn rename_binders(f: &Formula, avoid: &BTreeSet<Var>, fresh: &mut Fresh) -> Formula {
    fn binds_any(f: &Formula, avoid: &BTreeSet<Var>, memo: &mut HashMap<usize, bool>) -> bool {
        if let Some(&b) = memo.get(&f.ptr()) {
            return b;
        }
        let own = match f.node() {
            Node::Exists(x, _)
            | Node::Forall(x, _)
            | Node::ExistsSet(x, _)
            | Node::ForallSet(x, _)
            | Node::ExistsMod(_, _, x, _) => avoid.contains(x),
            _ => false,
        };
        let r = own || f.children().into_iter().any(|c| binds_any(c, avoid, memo));
        memo.insert(f.ptr(), r);
        r
    }
    fn go(
        f: &Formula,
        avoid: &BTreeSet<Var>,
        fresh: &mut Fresh,
        flags: &mut HashMap<usize, bool>,
        memo: &mut HashMap<usize, Formula>,
    ) -> Formula {
        if !binds_any(f, avoid, flags) {
            return f.clone();
        }
        if let Some(g) = memo.get(&f.ptr()) {
            return g.clone();
        }
        let out = match f.node() {
            Node::Exists(x, b)
            | Node::Forall(x, b)
            | Node::ExistsSet(x, b)
            | Node::ForallSet(x, b)
            | Node::ExistsMod(_, _, x, b) => {
                let body = go(b, avoid, fresh, flags, memo);
                if avoid.contains(x) {
                    let nx = if super::is_set_var_name(x) { fresh.set_var() } else { fresh.var() };
                    let body = super::rename_free(&body, x, &nx, fresh);
                    rebind(f, &nx, body)
                } else {
                    rebind(f, x, body)
                }
            }
            _ => {
                let kids: Vec<Formula> = f.children().into_iter().map(|c| go(c, avoid, fresh, flags, memo)).collect();
                f.with_children(kids)
            }
        };
        memo.insert(f.ptr(), out.clone());
        out
    }
    go(f, avoid, fresh, &mut HashMap::new(), &mut HashMap::new())
}

/// Relativises every quantifier of `f` to the elements satisfying `guard`,
/// where `gv` is the guard's designated variable. Other free variables of
/// the guard act as parameters and are never captured. Set quantifiers range
/// over subsets of the guarded elements.
pub fn relativise(f: &Formula, guard: &Formula, gv: &Var, fresh: &mut Fresh) -> Formula {
    let mut params = free_vars(guard);
    params.remove(gv);
    let f = rename_binders(f, &params, fresh);
    let mut st = Rel { guard: guard.clone(), gv: gv.clone(), inst: HashMap::new(), memo: HashMap::new() };
    st.go(&f, fresh)
}

struct Rel {
    guard: Formula,
    gv: Var,
    inst: HashMap<Var, Formula>,
    memo: HashMap<usize, Formula>,
}

impl Rel {
    fn at(&mut self, y: &Var, fresh: &mut Fresh) -> Formula {
        if let Some(g) = self.inst.get(y) {
            return g.clone();
        }
        let g = rename_free(&self.guard, &self.gv, y, fresh);
        self.inst.insert(y.clone(), g.clone());
        g
    }

    fn go(&mut self, f: &Formula, fresh: &mut Fresh) -> Formula {
        if let Some(g) = self.memo.get(&f.ptr()) {
            return g.clone();
        }
        let out = match f.node() {
            Node::Exists(y, b) => {
                let body = self.go(b, fresh);
                Formula::exists(y, Formula::and2(self.at(y, fresh), body))
            }
            Node::Forall(y, b) => {
                let body = self.go(b, fresh);
                Formula::forall(y, Formula::implies(self.at(y, fresh), body))
            }
            Node::ExistsMod(i, p, y, b) => {
                let body = self.go(b, fresh);
                Formula::exists_mod(*i, *p, y, Formula::and2(self.at(y, fresh), body))
            }
            Node::ExistsSet(x, b) | Node::ForallSet(x, b) => {
                let body = self.go(b, fresh);
                let w = fresh.var();
                let inside = Formula::forall(&w, Formula::implies(Formula::set_atom(x, &w), self.at(&w, fresh)));
                if matches!(f.node(), Node::ExistsSet(..)) {
                    Formula::exists_set(x, Formula::and2(inside, body))
                } else {
                    Formula::forall_set(x, Formula::implies(inside, body))
                }
            }
            Node::True | Node::False | Node::Atom(..) | Node::Eq(..) | Node::Leq(..) | Node::SetAtom(..) => f.clone(),
            _ => {
                let kids: Vec<Formula> = f.children().into_iter().map(|c| self.go(c, fresh)).collect();
                f.with_children(kids)
            }
        };
        self.memo.insert(f.ptr(), out.clone());
        out
    }
}

/// Translates a formula over the expanded signature into one over the base
/// signature with the removed element as the free variable `z`: quantifiers
/// skip `z`, and `R__{I}(ys)` becomes `R` with `z` outside the positions `I`.
pub fn interpret_removed(f: &Formula, z: &Var, arities: &BTreeMap<String, usize>, fresh: &mut Fresh) -> Result<Formula> {
    fn atoms(
        f: &Formula,
        z: &Var,
        arities: &BTreeMap<String, usize>,
        memo: &mut HashMap<usize, Formula>,
    ) -> Result<Formula> {
        if let Some(g) = memo.get(&f.ptr()) {
            return Ok(g.clone());
        }
        let out = match f.node() {
            Node::Atom(r, args) => {
                let (base, idx) =
                    split_expanded_name(r).ok_or_else(|| Error::UnknownSymbol(format!("{r} is not an expanded symbol")))?;
                let k = *arities.get(base).ok_or_else(|| Error::UnknownSymbol(base.to_string()))?;
                if idx.len() != args.len() || idx.iter().any(|&i| i >= k) {
                    return Err(Error::Arity { name: r.to_string(), expected: idx.len(), got: args.len() });
                }
                let mut full = vec![z.clone(); k];
                for (j, &i) in idx.iter().enumerate() {
                    full[i] = args[j].clone();
                }
                Formula::atom(base, &full)
            }
            Node::SetAtom(..) | Node::ExistsSet(..) | Node::ForallSet(..) => {
                return Err(Error::unsupported("removal interpretation of set quantifiers"));
            }
            Node::True | Node::False | Node::Eq(..) | Node::Leq(..) => f.clone(),
            _ => {
                let mut kids = Vec::new();
                for c in f.children() {
                    kids.push(atoms(c, z, arities, memo)?);
                }
                f.with_children(kids)
            }
        };
        memo.insert(f.ptr(), out.clone());
        Ok(out)
    }
    if free_vars(f).contains(z) {
        return Err(Error::invalid(format!("`{z}` is already free in the formula")));
    }
    let f = rename_binders(f, &[z.clone()].into_iter().collect(), fresh);
    let mapped = atoms(&f, z, arities, &mut HashMap::new())?;
    let w = var("__w");
    let guard = Formula::neq(&w, z);
    let out = relativise(&mapped, &guard, &w, fresh);
    Ok(out)
}

/// Replaces every atom `name(a_1, .., a_k)` by `def` with `params[i]` renamed
/// to `a_i`.
pub fn inline_relation(f: &Formula, name: &str, params: &[Var], def: &Formula, fresh: &mut Fresh) -> Formula {
    fn go(
        f: &Formula,
        name: &str,
        params: &[Var],
        def: &Formula,
        fresh: &mut Fresh,
        memo: &mut HashMap<usize, Formula>,
    ) -> Formula {
        if let Some(g) = memo.get(&f.ptr()) {
            return g.clone();
        }
        let out = match f.node() {
            Node::Atom(r, args) if &**r == name && args.len() == params.len() => {
                let m: BTreeMap<Var, Var> = params.iter().cloned().zip(args.iter().cloned()).collect();
                substitute(def, &m, fresh)
            }
            Node::True | Node::False | Node::Atom(..) | Node::Eq(..) | Node::Leq(..) | Node::SetAtom(..) => f.clone(),
            _ => {
                let kids: Vec<Formula> = f.children().into_iter().map(|c| go(c, name, params, def, fresh, memo)).collect();
                f.with_children(kids)
            }
        };
        memo.insert(f.ptr(), out.clone());
        out
    }
    go(f, name, params, def, fresh, &mut HashMap::new())
}
