//! Formulas of FO, MSO and FO with modular counting quantifiers.
//!
//! Formulas are immutable DAGs: children sit behind `Arc`, and builders reuse
//! subformulas freely. Size measures count tree nodes, so sharing never hides
//! blow-up from the metrics.

mod builders;
mod metrics;
mod nnf;
mod parse;
mod render;
mod transform;

pub use builders::*;
pub use metrics::{free_vars, metrics, qad, quantifier_rank, size, Metrics};
pub use nnf::to_nnf;
pub use parse::{parse_formula, parse_formula_with_sets};
pub use render::render;
pub use transform::{inline_relation, interpret_removed, relativise, rename_free, substitute};

use std::fmt;
use std::sync::Arc;

pub type Var = Arc<str>;

pub fn var(name: &str) -> Var {
    Arc::from(name)
}

#[derive(Debug)]
pub enum Node {
    True,
    False,
    Atom(Arc<str>, Vec<Var>),
    Eq(Var, Var),
    Leq(Var, Var),
    /// `X(x)`: membership of an element variable in a set variable.
    SetAtom(Var, Var),
    Not(Formula),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Formula, Formula),
    Exists(Var, Formula),
    Forall(Var, Formula),
    ExistsSet(Var, Formula),
    ForallSet(Var, Formula),
    /// `existsMod[i,p] x. body`: the number of witnesses is `i` modulo `p`.
    ExistsMod(u32, u32, Var, Formula),
}

#[derive(Debug, Clone)]
pub struct Formula(Arc<Node>);

impl Formula {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ptr_eq(&self, other: &Formula) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn mk(n: Node) -> Formula {
        Formula(Arc::new(n))
    }

    pub fn tt() -> Formula {
        Formula::mk(Node::True)
    }

    pub fn ff() -> Formula {
        Formula::mk(Node::False)
    }

    pub fn atom(rel: &str, args: &[Var]) -> Formula {
        Formula::mk(Node::Atom(Arc::from(rel), args.to_vec()))
    }

    pub fn eq(x: &Var, y: &Var) -> Formula {
        Formula::mk(Node::Eq(x.clone(), y.clone()))
    }

    pub fn neq(x: &Var, y: &Var) -> Formula {
        Formula::not(Formula::eq(x, y))
    }

    pub fn leq(x: &Var, y: &Var) -> Formula {
        Formula::mk(Node::Leq(x.clone(), y.clone()))
    }

    pub fn set_atom(set: &Var, x: &Var) -> Formula {
        Formula::mk(Node::SetAtom(set.clone(), x.clone()))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::mk(Node::Not(f))
    }

    /// Conjunction; nested conjunctions are flattened, `[]` is `true` and a
    /// single conjunct is returned as is.
    pub fn and(parts: Vec<Formula>) -> Formula {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p.node() {
                Node::And(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(p),
            }
        }
        match flat.len() {
            0 => Formula::tt(),
            1 => flat.pop().unwrap(),
            _ => Formula::mk(Node::And(flat)),
        }
    }

    pub fn and2(a: Formula, b: Formula) -> Formula {
        Formula::and(vec![a, b])
    }

    /// Disjunction; flattened like [`Formula::and`], `[]` is `false`.
    pub fn or(parts: Vec<Formula>) -> Formula {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p.node() {
                Node::Or(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(p),
            }
        }
        match flat.len() {
            0 => Formula::ff(),
            1 => flat.pop().unwrap(),
            _ => Formula::mk(Node::Or(flat)),
        }
    }

    pub fn or2(a: Formula, b: Formula) -> Formula {
        Formula::or(vec![a, b])
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::mk(Node::Implies(a, b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::and2(Formula::implies(a.clone(), b.clone()), Formula::implies(b, a))
    }

    pub fn exists(x: &Var, body: Formula) -> Formula {
        Formula::mk(Node::Exists(x.clone(), body))
    }

    pub fn forall(x: &Var, body: Formula) -> Formula {
        Formula::mk(Node::Forall(x.clone(), body))
    }

    pub fn exists_many(xs: &[Var], body: Formula) -> Formula {
        xs.iter().rev().fold(body, |acc, x| Formula::exists(x, acc))
    }

    pub fn forall_many(xs: &[Var], body: Formula) -> Formula {
        xs.iter().rev().fold(body, |acc, x| Formula::forall(x, acc))
    }

    pub fn exists_set(x: &Var, body: Formula) -> Formula {
        Formula::mk(Node::ExistsSet(x.clone(), body))
    }

    pub fn forall_set(x: &Var, body: Formula) -> Formula {
        Formula::mk(Node::ForallSet(x.clone(), body))
    }

    /// `existsMod[residue, modulus]`; the residue is reduced modulo `modulus`.
    pub fn exists_mod(residue: u32, modulus: u32, x: &Var, body: Formula) -> Formula {
        assert!(modulus >= 1, "modulus must be positive");
        Formula::mk(Node::ExistsMod(residue % modulus, modulus, x.clone(), body))
    }

    /// Rebuilds this node with new children, keeping its kind and binders.
    pub(crate) fn with_children(&self, kids: Vec<Formula>) -> Formula {
        match self.node() {
            Node::Not(_) => Formula::not(kids.into_iter().next().unwrap()),
            Node::And(_) => Formula::and(kids),
            Node::Or(_) => Formula::or(kids),
            Node::Implies(_, _) => {
                let mut it = kids.into_iter();
                Formula::implies(it.next().unwrap(), it.next().unwrap())
            }
            Node::Exists(x, _) => Formula::exists(x, kids.into_iter().next().unwrap()),
            Node::Forall(x, _) => Formula::forall(x, kids.into_iter().next().unwrap()),
            Node::ExistsSet(x, _) => Formula::exists_set(x, kids.into_iter().next().unwrap()),
            Node::ForallSet(x, _) => Formula::forall_set(x, kids.into_iter().next().unwrap()),
            Node::ExistsMod(i, p, x, _) => Formula::exists_mod(*i, *p, x, kids.into_iter().next().unwrap()),
            _ => self.clone(),
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self.node() {
            Node::Not(a) => vec![a],
            Node::And(v) | Node::Or(v) => v.iter().collect(),
            Node::Implies(a, b) => vec![a, b],
            Node::Exists(_, b)
            | Node::Forall(_, b)
            | Node::ExistsSet(_, b)
            | Node::ForallSet(_, b)
            | Node::ExistsMod(_, _, _, b) => vec![b],
            _ => vec![],
        }
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        use Node::*;
        match (self.node(), other.node()) {
            (True, True) | (False, False) => true,
            (Atom(r, a), Atom(s, b)) => r == s && a == b,
            (Eq(a, b), Eq(c, d)) | (Leq(a, b), Leq(c, d)) | (SetAtom(a, b), SetAtom(c, d)) => a == c && b == d,
            (Not(a), Not(b)) => a == b,
            (And(a), And(b)) | (Or(a), Or(b)) => a == b,
            (Implies(a, b), Implies(c, d)) => a == c && b == d,
            (Exists(x, a), Exists(y, b))
            | (Forall(x, a), Forall(y, b))
            | (ExistsSet(x, a), ExistsSet(y, b))
            | (ForallSet(x, a), ForallSet(y, b)) => x == y && a == b,
            (ExistsMod(i, p, x, a), ExistsMod(j, q, y, b)) => i == j && p == q && x == y && a == b,
            _ => false,
        }
    }
}

impl Eq for Formula {}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

/// Source of fresh variable names `v0, v1, ...` (element) and `V0, V1, ...`
/// (set). The counter is threaded explicitly through every builder.
#[derive(Debug, Clone, Default)]
pub struct Fresh {
    next: usize,
}

impl Fresh {
    pub fn new() -> Self {
        Fresh { next: 0 }
    }

    /// Starts after every `v<k>`/`V<k>` name already used in `f`.
    pub fn avoiding(f: &Formula) -> Self {
        let mut fresh = Fresh::new();
        fresh.bump_past(f);
        fresh
    }

    pub fn bump_past(&mut self, f: &Formula) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![f.clone()];
        while let Some(g) = stack.pop() {
            if !seen.insert(g.ptr()) {
                continue;
            }
            let mut names: Vec<&Var> = Vec::new();
            match g.node() {
                Node::Atom(_, args) => names.extend(args.iter()),
                Node::Eq(a, b) | Node::Leq(a, b) | Node::SetAtom(a, b) => names.extend([a, b]),
                Node::Exists(x, _)
                | Node::Forall(x, _)
                | Node::ExistsSet(x, _)
                | Node::ForallSet(x, _)
                | Node::ExistsMod(_, _, x, _) => names.push(x),
                _ => {}
            }
            for n in names {
                if let Some(k) = n.strip_prefix('v').or_else(|| n.strip_prefix('V')).and_then(|s| s.parse::<usize>().ok()) {
                    self.next = self.next.max(k + 1);
                }
            }
            stack.extend(g.children().into_iter().cloned());
        }
    }

    pub fn var(&mut self) -> Var {
        let v = var(&format!("v{}", self.next));
        self.next += 1;
        v
    }

    pub fn set_var(&mut self) -> Var {
        let v = var(&format!("V{}", self.next));
        self.next += 1;
        v
    }

    pub fn vars(&mut self, k: usize) -> Vec<Var> {
        (0..k).map(|_| self.var()).collect()
    }

    pub fn peek(&self) -> usize {
        self.next
    }
}

/// Names of set variables start with an uppercase letter.
pub fn is_set_var_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}
