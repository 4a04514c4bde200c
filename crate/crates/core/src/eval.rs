//! Model checking by exhaustive search.
//!
//! A formula is compiled into an indexed DAG (one node per shared subformula).
//! Quantifier nodes are memoised on the values of their free variables for
//! the lifetime of a [`Compiled`] query. Blocks of like quantifiers over a
//! conjunction are evaluated by backtracking, checking each conjunct as soon
//! as its variables are bound.

use crate::error::{Error, Result};
use crate::formulas::{free_vars, Formula, Node, Var};
use crate::structures::Structure;
use rustc_hash::FxHashMap;
use smallvec::SmallVec;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Elem(usize),
    /// Bit mask over the universe (at most 64 elements).
    Set(u64),
}

pub type Env = BTreeMap<String, Value>;

/// Largest universe over which set quantifiers are enumerated.
pub const MAX_SET_UNIVERSE: usize = 24;

pub fn eval(a: &Structure, f: &Formula, env: &Env) -> Result<bool> {
    Compiled::new(a, f, env)?.eval(env)
}

pub fn eval_sentence(a: &Structure, f: &Formula) -> Result<bool> {
    eval(a, f, &Env::new())
}

/// Elements `x` with `A |= f(x)`.
pub fn eval_unary(a: &Structure, f: &Formula, x: &str) -> Result<Vec<usize>> {
    let mut env = Env::new();
    env.insert(x.to_string(), Value::Elem(0));
    let mut c = Compiled::new(a, f, &env)?;
    let mut out = Vec::new();
    for e in 0..a.size() {
        env.insert(x.to_string(), Value::Elem(e));
        if c.eval(&env)? {
            out.push(e);
        }
    }
    Ok(out)
}

pub(crate) enum RelIndex {
    Unary(Vec<bool>),
    Dense { n: usize, bits: Vec<bool> },
    Sparse(rustc_hash::FxHashSet<Vec<usize>>),
}

impl RelIndex {
    pub(crate) fn build(a: &Structure, ri: usize) -> RelIndex {
        let n = a.size();
        let k = a.sig().arity(ri);
        if k == 1 {
            let mut v = vec![false; n];
            for t in a.relation(ri) {
                v[t[0]] = true;
            }
            return RelIndex::Unary(v);
        }
        let cells = (n as u128).pow(k as u32);
        if cells <= 1 << 22 {
            let mut bits = vec![false; cells as usize];
            for t in a.relation(ri) {
                bits[t.iter().fold(0, |acc, &e| acc * n + e)] = true;
            }
            RelIndex::Dense { n, bits }
        } else {
            RelIndex::Sparse(a.relation(ri).iter().cloned().collect())
        }
    }

    pub(crate) fn holds(&self, args: &[usize]) -> bool {
        match self {
            RelIndex::Unary(v) => v[args[0]],
            RelIndex::Dense { n, bits } => bits[args.iter().fold(0, |acc, &e| acc * n + e)],
            RelIndex::Sparse(s) => s.contains(args),
        }
    }
}

#[derive(Clone)]
enum Op {
    True,
    False,
    Rel(usize, Vec<u32>),
    Eq(u32, u32),
    Leq(u32, u32),
    Mem(u32, u32),
    Not(u32),
    And(Vec<u32>),
    Or(Vec<u32>),
    Implies(u32, u32),
    /// Block of element quantifiers. `lits[i]` holds (node, polarity) pairs
    /// checked once the first `i` variables are bound. A universal block is
    /// evaluated as the negation of the existential search.
    Chain { vars: Vec<u32>, lits: Vec<Vec<(u32, bool)>>, universal: bool },
    ExistsSet(u32, u32),
    ForallSet(u32, u32),
    Mod(u32, u32, u32, u32),
}

struct CNode {
    op: Op,
    free: SmallVec<[u32; 4]>,
    memo: bool,
}

type Key = SmallVec<[u64; 4]>;

/// A formula compiled against one structure; memo tables persist across
/// calls to [`Compiled::eval`].
pub struct Compiled<'a> {
    a: &'a Structure,
    rels: Vec<RelIndex>,
    pos: Option<Vec<usize>>,
    nodes: Vec<CNode>,
    root: u32,
    var_ids: FxHashMap<Var, u32>,
    env: Vec<u64>,
    memo: Vec<FxHashMap<Key, bool>>,
    top_free: Vec<(Var, u32)>,
}

impl<'a> Compiled<'a> {
    /// Compiles `f`; names bound to sets in `env` are treated as free set
    /// variables when they occur as relation atoms.
    pub fn new(a: &'a Structure, f: &Formula, env: &Env) -> Result<Self> {
        let free_sets: Vec<String> =
            env.iter().filter(|(_, v)| matches!(v, Value::Set(_))).map(|(k, _)| k.clone()).collect();
        let mut c = Compiled {
            a,
            rels: (0..a.sig().len()).map(|i| RelIndex::build(a, i)).collect(),
            pos: a.order_positions(),
            nodes: Vec::new(),
            root: 0,
            var_ids: FxHashMap::default(),
            env: Vec::new(),
            memo: Vec::new(),
            top_free: Vec::new(),
        };
        let mut ptr_map = FxHashMap::default();
        c.root = c.compile(f, &free_sets, &mut ptr_map)?;
        for v in free_vars(f) {
            let id = c.var_id(&v);
            c.top_free.push((v, id));
        }
        c.env = vec![0; c.var_ids.len()];
        c.memo = (0..c.nodes.len()).map(|_| FxHashMap::default()).collect();
        Ok(c)
    }

    fn var_id(&mut self, v: &Var) -> u32 {
        if let Some(&id) = self.var_ids.get(v) {
            return id;
        }
        let id = self.var_ids.len() as u32;
        self.var_ids.insert(v.clone(), id);
        id
    }

    fn push(&mut self, op: Op, free: SmallVec<[u32; 4]>, memo: bool) -> u32 {
        self.nodes.push(CNode { op, free, memo });
        (self.nodes.len() - 1) as u32
    }

    fn union_free(&self, kids: &[u32]) -> SmallVec<[u32; 4]> {
        let mut s: SmallVec<[u32; 4]> = SmallVec::new();
        for &k in kids {
            s.extend(self.nodes[k as usize].free.iter().copied());
        }
        s.sort_unstable();
        s.dedup();
        s
    }

    fn compile(&mut self, f: &Formula, free_sets: &[String], ptr_map: &mut FxHashMap<usize, u32>) -> Result<u32> {
        if let Some(&i) = ptr_map.get(&f.ptr()) {
            return Ok(i);
        }
        let idx = match f.node() {
            Node::True => self.push(Op::True, SmallVec::new(), false),
            Node::False => self.push(Op::False, SmallVec::new(), false),
            Node::Atom(r, args) => {
                let ids: Vec<u32> = args.iter().map(|v| self.var_id(v)).collect();
                let mut free: SmallVec<[u32; 4]> = ids.iter().copied().collect();
                free.sort_unstable();
                free.dedup();
                match self.a.sig().index_of(r) {
                    Some(ri) => {
                        if self.a.sig().arity(ri) != ids.len() {
                            return Err(Error::Arity {
                                name: r.to_string(),
                                expected: self.a.sig().arity(ri),
                                got: ids.len(),
                            });
                        }
                        self.push(Op::Rel(ri, ids), free, false)
                    }
                    None if ids.len() == 1 && free_sets.iter().any(|s| **s == **r) => {
                        let sv = self.var_id(r);
                        let mut free = free;
                        free.push(sv);
                        free.sort_unstable();
                        self.push(Op::Mem(sv, ids[0]), free, false)
                    }
                    None => return Err(Error::UnknownSymbol(r.to_string())),
                }
            }
            Node::Eq(x, y) | Node::Leq(x, y) => {
                let (a, b) = (self.var_id(x), self.var_id(y));
                let mut free: SmallVec<[u32; 4]> = [a, b].into_iter().collect();
                free.sort_unstable();
                free.dedup();
                if matches!(f.node(), Node::Eq(..)) {
                    self.push(Op::Eq(a, b), free, false)
                } else {
                    if self.pos.is_none() {
                        return Err(Error::MissingOrder);
                    }
                    self.push(Op::Leq(a, b), free, false)
                }
            }
            Node::SetAtom(x, y) => {
                let (a, b) = (self.var_id(x), self.var_id(y));
                let mut free: SmallVec<[u32; 4]> = [a, b].into_iter().collect();
                free.sort_unstable();
                self.push(Op::Mem(a, b), free, false)
            }
            Node::Not(g) => {
                let k = self.compile(g, free_sets, ptr_map)?;
                let free = self.nodes[k as usize].free.clone();
                self.push(Op::Not(k), free, false)
            }
            Node::And(parts) | Node::Or(parts) => {
                let mut kids = Vec::with_capacity(parts.len());
                for p in parts {
                    kids.push(self.compile(p, free_sets, ptr_map)?);
                }
                let free = self.union_free(&kids);
                let memo = kids.len() > 8;
                let op = if matches!(f.node(), Node::And(_)) { Op::And(kids) } else { Op::Or(kids) };
                self.push(op, free, memo)
            }
            Node::Implies(a, b) => {
                let ka = self.compile(a, free_sets, ptr_map)?;
                let kb = self.compile(b, free_sets, ptr_map)?;
                let free = self.union_free(&[ka, kb]);
                self.push(Op::Implies(ka, kb), free, false)
            }
            Node::Exists(..) | Node::Forall(..) => self.compile_chain(f, free_sets, ptr_map)?,
            Node::ExistsSet(x, b) | Node::ForallSet(x, b) => {
                let kb = self.compile(b, free_sets, ptr_map)?;
                let xv = self.var_id(x);
                let free: SmallVec<[u32; 4]> = self.nodes[kb as usize].free.iter().copied().filter(|&v| v != xv).collect();
                let op = if matches!(f.node(), Node::ExistsSet(..)) { Op::ExistsSet(xv, kb) } else { Op::ForallSet(xv, kb) };
                self.push(op, free, true)
            }
            Node::ExistsMod(i, p, x, b) => {
                let kb = self.compile(b, free_sets, ptr_map)?;
                let xv = self.var_id(x);
                let free: SmallVec<[u32; 4]> = self.nodes[kb as usize].free.iter().copied().filter(|&v| v != xv).collect();
                self.push(Op::Mod(*i, *p, xv, kb), free, true)
            }
        };
        ptr_map.insert(f.ptr(), idx);
        Ok(idx)
    }

    fn compile_chain(&mut self, f: &Formula, free_sets: &[String], ptr_map: &mut FxHashMap<usize, u32>) -> Result<u32> {
        let universal = matches!(f.node(), Node::Forall(..));
        let mut vars: Vec<Var> = Vec::new();
        let mut cur = f.clone();
        loop {
            let next = match (cur.node(), universal) {
                (Node::Exists(x, b), false) | (Node::Forall(x, b), true) if !vars.contains(x) => {
                    vars.push(x.clone());
                    b.clone()
                }
                _ => break,
            };
            cur = next;
        }
        // Literals of the matrix: conjuncts (existential) or, for a universal
        // block, the conjuncts of the negated matrix.
        let mut lits: Vec<(Formula, bool)> = Vec::new();
        if universal {
            match cur.node() {
                Node::Implies(a, b) => {
                    flatten(a, true, &mut lits, true);
                    flatten(b, false, &mut lits, false);
                }
                Node::Or(_) => flatten(&cur, false, &mut lits, false),
                _ => lits.push((cur.clone(), false)),
            }
        } else {
            flatten(&cur, true, &mut lits, true);
        }
        let var_ids: Vec<u32> = vars.iter().map(|v| self.var_id(v)).collect();
        let mut levels: Vec<Vec<(u32, bool)>> = vec![Vec::new(); var_ids.len() + 1];
        let mut all_free: SmallVec<[u32; 4]> = SmallVec::new();
        for (g, pol) in lits {
            let k = self.compile(&g, free_sets, ptr_map)?;
            let free = &self.nodes[k as usize].free;
            let lvl = var_ids.iter().rposition(|v| free.contains(v)).map_or(0, |p| p + 1);
            all_free.extend(free.iter().copied());
            levels[lvl].push((k, pol));
        }
        all_free.sort_unstable();
        all_free.dedup();
        all_free.retain(|v| !var_ids.contains(v));
        Ok(self.push(Op::Chain { vars: var_ids, lits: levels, universal }, all_free, true))
    }

    /// Evaluates under `env`, which must bind every free variable.
    pub fn eval(&mut self, env: &Env) -> Result<bool> {
        for (name, _) in &self.top_free {
            if !env.contains_key(&**name) {
                return Err(Error::UnboundVariable(name.to_string()));
            }
        }
        for (name, v) in env {
            let Some(&id) = self.var_ids.get(name.as_str()) else { continue };
            self.env[id as usize] = match *v {
                Value::Elem(e) => {
                    if e >= self.a.size() {
                        return Err(Error::ElementOutOfRange(e));
                    }
                    e as u64
                }
                Value::Set(s) => s,
            };
        }
        if self.a.size() > MAX_SET_UNIVERSE && self.uses_sets() {
            return Err(Error::budget(format!(
                "set quantification over {} elements (limit {MAX_SET_UNIVERSE})",
                self.a.size()
            )));
        }
        let mut ex = Exec {
            nodes: &self.nodes,
            rels: &self.rels,
            pos: self.pos.as_deref(),
            n: self.a.size(),
            env: &mut self.env,
            memo: &mut self.memo,
            subsets: None,
        };
        Ok(ex.run(self.root))
    }

    fn uses_sets(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, Op::ExistsSet(..) | Op::ForallSet(..)))
    }
}

struct Exec<'p> {
    nodes: &'p [CNode],
    rels: &'p [RelIndex],
    pos: Option<&'p [usize]>,
    n: usize,
    env: &'p mut Vec<u64>,
    memo: &'p mut Vec<FxHashMap<Key, bool>>,
    subsets: Option<Vec<u64>>,
}

impl<'p> Exec<'p> {
    fn key(&self, i: u32) -> Key {
        self.nodes[i as usize].free.iter().map(|&v| self.env[v as usize]).collect()
    }

    fn run(&mut self, i: u32) -> bool {
        if !self.nodes[i as usize].memo {
            return self.step(i);
        }
        let key = self.key(i);
        if let Some(&b) = self.memo[i as usize].get(&key) {
            return b;
        }
        let b = self.step(i);
        self.memo[i as usize].insert(key, b);
        b
    }

    fn step(&mut self, i: u32) -> bool {
        let nodes = self.nodes;
        let n = self.n;
        match &nodes[i as usize].op {
            Op::True => true,
            Op::False => false,
            Op::Rel(ri, args) => {
                let vals: SmallVec<[usize; 4]> = args.iter().map(|&v| self.env[v as usize] as usize).collect();
                self.rels[*ri].holds(&vals)
            }
            Op::Eq(a, b) => self.env[*a as usize] == self.env[*b as usize],
            Op::Leq(a, b) => {
                let pos = self.pos.expect("order checked at compile time");
                pos[self.env[*a as usize] as usize] <= pos[self.env[*b as usize] as usize]
            }
            Op::Mem(s, e) => self.env[*s as usize] >> self.env[*e as usize] & 1 == 1,
            Op::Not(k) => !self.run(*k),
            Op::And(kids) => kids.iter().all(|&k| self.run(k)),
            Op::Or(kids) => kids.iter().any(|&k| self.run(k)),
            Op::Implies(a, b) => !self.run(*a) || self.run(*b),
            Op::Chain { vars, lits, universal } => {
                let saved: SmallVec<[u64; 4]> = vars.iter().map(|&v| self.env[v as usize]).collect();
                let found = self.lits_hold(&lits[0]) && self.search(vars, lits, 0, n);
                for (&v, &s) in vars.iter().zip(&saved) {
                    self.env[v as usize] = s;
                }
                found != *universal
            }
            Op::ExistsSet(x, b) | Op::ForallSet(x, b) => {
                let want = matches!(nodes[i as usize].op, Op::ExistsSet(..));
                let (x, b) = (*x as usize, *b);
                let saved = self.env[x];
                if self.subsets.is_none() {
                    self.subsets = Some(subsets_by_size(n));
                }
                let mut result = !want;
                let total = 1usize << n;
                for idx in 0..total {
                    let s = self.subsets.as_ref().unwrap()[idx];
                    self.env[x] = s;
                    if self.run(b) == want {
                        result = want;
                        break;
                    }
                }
                self.env[x] = saved;
                result
            }
            Op::Mod(r, p, x, b) => {
                let (x, b) = (*x as usize, *b);
                let saved = self.env[x];
                let mut count = 0u64;
                for e in 0..n {
                    self.env[x] = e as u64;
                    if self.run(b) {
                        count += 1;
                    }
                }
                self.env[x] = saved;
                count % *p as u64 == *r as u64
            }
        }
    }

    fn lits_hold(&mut self, lits: &[(u32, bool)]) -> bool {
        lits.iter().all(|&(k, pol)| self.run(k) == pol)
    }

    fn search(&mut self, vars: &[u32], lits: &[Vec<(u32, bool)>], depth: usize, n: usize) -> bool {
        if depth == vars.len() {
            return true;
        }
        for e in 0..n {
            self.env[vars[depth] as usize] = e as u64;
            if self.lits_hold(&lits[depth + 1]) && self.search(vars, lits, depth + 1, n) {
                return true;
            }
        }
        false
    }
}

fn flatten(f: &Formula, conj: bool, out: &mut Vec<(Formula, bool)>, pol: bool) {
    match f.node() {
        Node::And(parts) if conj => parts.iter().for_each(|p| flatten(p, conj, out, pol)),
        Node::Or(parts) if !conj => parts.iter().for_each(|p| flatten(p, conj, out, pol)),
        _ => out.push((f.clone(), pol)),
    }
}

/// All subsets of `0..n` ordered by size, then by numeric value.
pub fn subsets_by_size(n: usize) -> Vec<u64> {
    assert!(n <= MAX_SET_UNIVERSE, "subset enumeration over {n} elements");
    let mut v: Vec<u64> = (0..1u64 << n).collect();
    v.sort_by_key(|&s| (s.count_ones(), s));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::parse_formula;
    use crate::structures::Signature;

    fn path(n: usize) -> Structure {
        let e: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Structure::graph(&Signature::of(&[("E", 2)]), n, &e).unwrap()
    }

    #[test]
    fn first_order_basics() {
        let p = path(3);
        let f = parse_formula("exists x. forall y. x = y | E(x,y)").unwrap();
        assert!(eval_sentence(&p, &f).unwrap());
        let g = parse_formula("forall x. exists y. E(x,y) & exists z. E(y,z) & !z = x").unwrap();
        assert!(!eval_sentence(&p, &g).unwrap());
    }

    #[test]
    fn order_required_for_leq() {
        let f = parse_formula("exists x. forall y. x <= y").unwrap();
        assert_eq!(eval_sentence(&path(2), &f), Err(Error::MissingOrder));
        assert!(eval_sentence(&path(2).with_natural_order(), &f).unwrap());
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let f = parse_formula("E(x,y)").unwrap();
        assert!(matches!(eval_sentence(&path(2), &f), Err(Error::UnboundVariable(_))));
    }

    #[test]
    fn set_and_modular_quantifiers() {
        // Two-colourability of a path.
        let f = parse_formula("existsSet X. forall x. forall y. E(x,y) -> (X(x) -> !X(y)) & (!X(x) -> X(y))").unwrap();
        assert!(eval_sentence(&path(4), &f).unwrap());
        let even = parse_formula("existsMod[0,2] x. x = x").unwrap();
        assert!(eval_sentence(&path(4), &even).unwrap());
        assert!(!eval_sentence(&path(3), &even).unwrap());
    }

    #[test]
    fn free_set_variable_from_env() {
        let f = parse_formula("forall x. M(x)").unwrap();
        let mut env = Env::new();
        env.insert("M".into(), Value::Set(0b111));
        assert!(eval(&path(3), &f, &env).unwrap());
        env.insert("M".into(), Value::Set(0b101));
        assert!(!eval(&path(3), &f, &env).unwrap());
    }

    #[test]
    fn subsets_ordered_by_popcount() {
        assert_eq!(subsets_by_size(2), vec![0, 1, 2, 3]);
        assert_eq!(subsets_by_size(3)[4..], [3, 5, 6, 7]);
    }
}
