//! Translating order-invariant and monadic second-order sentences into
//! order-free first-order ones on structures of bounded tree-depth.
//!
//! Every pipeline has the same shape. Connected structures of tree-depth at
//! most `d` are enumerated and grouped by rank-`q` type; each type gets a
//! defining sentence built recursively through the expanded signature of a
//! removed root; the set of count vectors whose assembled type satisfies the
//! input sentence is computed; and a counting sentence over the definers
//! selects exactly those vectors.

use crate::budget::Budget;
use crate::enumerate::{all_orders, enum_structures, EnumOptions};
use crate::error::{Error, Result};
use crate::eval::eval_sentence;
use crate::formulas::{
    atomic_type_formula, distinct, interpret_removed, metrics, reach, relativise, Formula, Fresh, Metrics, Var,
};
use crate::qorder::{alpha_of, q_order, rtp, tp_ordered};
use crate::structures::{AtomicType, Signature, Structure};
use crate::treedepth::{build_roots, build_td_leq, roots_of, TdMode};
use crate::types::{atomic_compare, compose, empty_type, eval_on_type, lcm, power_cycle, tp, Logic, QType};
use crate::words::{compile_sentence, letter_of};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Upper limit on the number of count vectors a level may enumerate.
pub const MAX_VECTORS: usize = 2_000_000;

/// Longest power sequence followed when looking for thresholds and periods.
const MAX_POWER: usize = 64;

// ---------------------------------------------------------------------------
// Count vectors.

/// Number of components satisfying each sentence of a fixed list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountVector(pub Vec<usize>);

impl CountVector {
    /// Counts with everything at or above `t` replaced by `t`.
    pub fn capped(&self, t: usize) -> Vec<usize> {
        self.0.iter().map(|&n| n.min(t)).collect()
    }

    pub fn residues(&self, p: usize) -> Vec<usize> {
        self.0.iter().map(|&n| n % p).collect()
    }
}

pub fn count_components(a: &Structure, phis: &[Formula]) -> Result<CountVector> {
    let mut out = vec![0; phis.len()];
    for comp in a.components() {
        let k = a.induced(&comp);
        for (i, f) in phis.iter().enumerate() {
            if eval_sentence(&k, f)? {
                out[i] += 1;
            }
        }
    }
    Ok(CountVector(out))
}

// ---------------------------------------------------------------------------
// Counting sentences.

/// Builds threshold counting sentences over a fixed list of component
/// sentences. Witness variables and relativised copies are allocated once so
/// that sentences for different vector sets share subformulas.
pub struct Counter {
    sig: Signature,
    d: usize,
    t: usize,
    grid: Vec<Vec<Var>>,
    y: Var,
    tilde: Vec<Vec<Formula>>,
    tilde_y: Vec<Formula>,
    reach_memo: HashMap<(Var, Var), Formula>,
    parts: HashMap<(usize, usize), Formula>,
}

/// `phi` relativised to the component of `x`.
fn local(sig: &Signature, d: usize, phi: &Formula, x: &Var, fresh: &mut Fresh) -> Formula {
    let gv = fresh.var();
    let guard = reach(sig, d, x, &gv, fresh);
    relativise(phi, &guard, &gv, fresh)
}

impl Counter {
    pub fn new(sig: &Signature, d: usize, phis: &[Formula], t: usize, fresh: &mut Fresh) -> Result<Counter> {
        if t == 0 {
            return Err(Error::invalid("threshold must be positive"));
        }
        let grid: Vec<Vec<Var>> = phis.iter().map(|_| fresh.vars(t)).collect();
        let y = fresh.var();
        let mut tilde = Vec::new();
        for (i, f) in phis.iter().enumerate() {
            tilde.push(grid[i].iter().map(|x| local(sig, d, f, x, fresh)).collect());
        }
        let tilde_y = phis.iter().map(|f| local(sig, d, f, &y, fresh)).collect();
        Ok(Counter {
            sig: sig.clone(),
            d,
            t,
            grid,
            y,
            tilde,
            tilde_y,
            reach_memo: HashMap::new(),
            parts: HashMap::new(),
        })
    }

    pub fn threshold(&self) -> usize {
        self.t
    }

    pub fn width(&self) -> usize {
        self.grid.len()
    }

    fn reach(&mut self, a: &Var, b: &Var, fresh: &mut Fresh) -> Formula {
        let key = (a.clone(), b.clone());
        if let Some(f) = self.reach_memo.get(&key) {
            return f.clone();
        }
        let f = reach(&self.sig, self.d, a, b, fresh);
        self.reach_memo.insert(key, f.clone());
        f
    }

    /// Exactly `n` components satisfy sentence `i` (at least `n` when `n = t`),
    /// witnessed by the first `n` grid variables of row `i`.
    fn part(&mut self, i: usize, n: usize, fresh: &mut Fresh) -> Formula {
        if let Some(f) = self.parts.get(&(i, n)) {
            return f.clone();
        }
        let f = if n == 0 {
            Formula::forall(&self.y, Formula::not(self.tilde_y[i].clone()))
        } else {
            let xs = self.grid[i][..n].to_vec();
            let mut conj: Vec<Formula> = self.tilde[i][..n].to_vec();
            for j in 0..n {
                for k in 0..n {
                    if j != k {
                        conj.push(Formula::not(self.reach(&xs[j], &xs[k], fresh)));
                    }
                }
            }
            if n < self.t {
                let y = self.y.clone();
                let near: Vec<Formula> = xs.iter().map(|x| self.reach(&y, x, fresh)).collect();
                conj.push(Formula::forall(&y, Formula::implies(self.tilde_y[i].clone(), Formula::or(near))));
            }
            Formula::and(conj)
        };
        self.parts.insert((i, n), f.clone());
        f
    }

    fn check_vector(&self, v: &[usize]) -> Result<()> {
        if v.len() != self.width() {
            return Err(Error::invalid(format!("vector of length {} for {} sentences", v.len(), self.width())));
        }
        if let Some(n) = v.iter().find(|&&n| n > self.t) {
            return Err(Error::invalid(format!("entry {n} exceeds the threshold {}", self.t)));
        }
        Ok(())
    }

    /// The capped count vector is `v`.
    pub fn exactly(&mut self, v: &[usize], fresh: &mut Fresh) -> Result<Formula> {
        self.check_vector(v)?;
        let mut vars = Vec::new();
        let mut conj = Vec::new();
        for (i, &n) in v.iter().enumerate() {
            vars.extend_from_slice(&self.grid[i][..n]);
            conj.push(self.part(i, n, fresh));
        }
        Ok(Formula::exists_many(&vars, Formula::and(conj)))
    }

    /// The capped count vector lies in `r`.
    pub fn formula(&mut self, r: &[Vec<usize>], fresh: &mut Fresh) -> Result<Formula> {
        let mut alts = Vec::new();
        for v in r {
            alts.push(self.exactly(v, fresh)?);
        }
        Ok(Formula::or(alts))
    }
}

/// Sentence true on a structure of tree-depth at most `d` iff its component
/// counts for `phis`, capped at `t`, form a vector in `r`.
pub fn count_formula(
    sig: &Signature,
    d: usize,
    phis: &[Formula],
    r: &[Vec<usize>],
    t: usize,
    fresh: &mut Fresh,
) -> Result<Formula> {
    Counter::new(sig, d, phis, t, fresh)?.formula(r, fresh)
}

/// Modulo counting on top of [`Counter`] with threshold `p`.
///
/// A component with `k` roots contributes `k` elements satisfying the root
/// test, so the number of such components is known modulo `p` once the
/// number of those elements is known modulo `k * p`.
pub struct ModCounter {
    base: Counter,
    p: usize,
    b: usize,
    /// Per sentence and root count `k`, the formula in `x` selecting the roots
    /// of matching components that have exactly `k` roots.
    exact_roots: Vec<Vec<Formula>>,
    x: Var,
    residue_memo: HashMap<(usize, usize), Formula>,
}

impl ModCounter {
    pub fn new(sig: &Signature, d: usize, phis: &[Formula], p: usize, b: usize, fresh: &mut Fresh) -> Result<ModCounter> {
        if b == 0 {
            return Err(Error::invalid("root bound must be positive"));
        }
        let base = Counter::new(sig, d, phis, p, fresh)?;
        let roots_local = |v: &Var, fresh: &mut Fresh| -> Result<Formula> {
            let r = build_roots(sig, d, v, fresh)?;
            Ok(local(sig, d, &r, v, fresh))
        };
        let x = fresh.var();
        let rx = roots_local(&x, fresh)?;
        let mut exact_roots = Vec::new();
        for f in phis {
            let fx = local(sig, d, f, &x, fresh);
            let mut row = Vec::new();
            for k in 1..=b {
                let xs = fresh.vars(k);
                let y = fresh.var();
                let mut conj = Vec::new();
                for xj in &xs {
                    conj.push(roots_local(xj, fresh)?);
                    conj.push(reach(sig, d, xj, &x, fresh));
                }
                conj.push(distinct(&xs));
                let mut guard = vec![roots_local(&y, fresh)?];
                guard.extend(xs.iter().map(|xj| Formula::neq(&y, xj)));
                conj.push(Formula::forall(
                    &y,
                    Formula::implies(Formula::and(guard), Formula::not(reach(sig, d, &y, &x, fresh))),
                ));
                row.push(Formula::and(vec![fx.clone(), rx.clone(), Formula::exists_many(&xs, Formula::and(conj))]));
            }
            exact_roots.push(row);
        }
        Ok(ModCounter { base, p, b, exact_roots, x, residue_memo: HashMap::new() })
    }

    pub fn period(&self) -> usize {
        self.p
    }

    /// The number of components satisfying sentence `i` is `r` modulo `p`.
    fn residue(&mut self, i: usize, r: usize) -> Formula {
        if let Some(f) = self.residue_memo.get(&(i, r)) {
            return f.clone();
        }
        let (p, b) = (self.p, self.b);
        let mut alts = Vec::new();
        // a[k - 1]: components with k roots, modulo p.
        let mut a = vec![0usize; b];
        loop {
            if a.iter().sum::<usize>() % p == r {
                let conj = (1..=b)
                    .map(|k| {
                        let m = (k * p) as u32;
                        Formula::exists_mod((k * a[k - 1]) as u32, m, &self.x, self.exact_roots[i][k - 1].clone())
                    })
                    .collect();
                alts.push(Formula::and(conj));
            }
            let mut pos = 0;
            while pos < b && a[pos] + 1 == p {
                a[pos] = 0;
                pos += 1;
            }
            if pos == b {
                break;
            }
            a[pos] += 1;
        }
        let f = Formula::or(alts);
        self.residue_memo.insert((i, r), f.clone());
        f
    }

    /// The pair (counts capped at `p`, counts modulo `p`) lies in `r`.
    pub fn formula(&mut self, r: &[(Vec<usize>, Vec<usize>)], fresh: &mut Fresh) -> Result<Formula> {
        let mut alts = Vec::new();
        for (cap, res) in r {
            if res.len() != cap.len() || res.iter().any(|&x| x >= self.p) {
                return Err(Error::invalid("residue vector out of range"));
            }
            let mut conj = vec![self.base.exactly(cap, fresh)?];
            for (i, &ri) in res.iter().enumerate() {
                conj.push(self.residue(i, ri));
            }
            alts.push(Formula::and(conj));
        }
        Ok(Formula::or(alts))
    }
}

/// Sentence true on a structure of tree-depth at most `d` iff the pair of
/// capped and residue count vectors lies in `r`. Components may have at most
/// `b` roots.
pub fn mod_count_formula(
    sig: &Signature,
    d: usize,
    phis: &[Formula],
    r: &[(Vec<usize>, Vec<usize>)],
    p: usize,
    b: usize,
    fresh: &mut Fresh,
) -> Result<Formula> {
    ModCounter::new(sig, d, phis, p, b, fresh)?.formula(r, fresh)
}

/// Largest number of roots of a connected graph of tree-depth at most `d`
/// with at most `max_size` vertices.
pub fn measured_root_bound(d: usize, max_size: usize, budget: &Budget) -> Result<usize> {
    let sig = Signature::of(&[("E", 2)]);
    let gs = enum_structures(&sig, EnumOptions::graphs(max_size).connected().td(d).min(1), budget)?;
    let counts: Result<Vec<usize>> = gs.par_iter().map(|g| roots_of(g).map(|r| r.len())).collect();
    Ok(counts?.into_iter().max().unwrap_or(1).max(1))
}

// ---------------------------------------------------------------------------
// Type levels.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// Largest stabilization index of the connected types.
    Empirical,
    /// The closed-form bound: `2^q + 1` for ordered first-order types and
    /// `2^(k q)` with `k` the largest component size otherwise.
    ClosedForm,
}

impl ThresholdMode {
    pub fn parse(s: &str) -> Result<ThresholdMode> {
        match s {
            "empirical" => Ok(ThresholdMode::Empirical),
            "paper" => Ok(ThresholdMode::ClosedForm),
            _ => Err(Error::invalid(format!("unknown threshold mode `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdMode::Empirical => "empirical",
            ThresholdMode::ClosedForm => "paper",
        }
    }
}

/// Where the modulo-counting period of the top level comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodSource {
    /// Power cycles of the connected types.
    Types,
    /// Letter cycles of the minimal automaton of the sentence (tree-depth 1
    /// only, where structures are words).
    WordAutomaton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Counting {
    Threshold,
    Modular,
}

/// Capped counts and, in modular levels, residues.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Key {
    cap: Vec<usize>,
    res: Vec<usize>,
}

struct ConnType {
    ty: QType,
    members: Vec<Structure>,
}

struct Level {
    sig: Signature,
    d: usize,
    conn: Vec<ConnType>,
    cap: usize,
    b: usize,
    definers: Vec<Formula>,
    pows: Vec<Vec<QType>>,
    empty: QType,
    pairs: usize,
    child: Option<Box<Level>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelReport {
    pub d: usize,
    pub signature: String,
    pub connected_types: usize,
    pub structures: usize,
    /// `t` for threshold levels, `p` for modular ones.
    pub cap: usize,
    pub root_bound: Option<usize>,
    pub definer_pairs: usize,
}

struct Builder<'a> {
    logic: Logic,
    q: u32,
    ordered: bool,
    counting: Counting,
    mode: ThresholdMode,
    budget: &'a Budget,
    fresh: Fresh,
    b_max: usize,
}

impl Builder<'_> {
    fn type_of(&self, a: &Structure) -> Result<QType> {
        if self.ordered {
            tp_ordered(self.logic, self.q, a)
        } else {
            tp(self.logic, self.q, a)
        }
    }

    fn group(&self, structs: Vec<Structure>) -> Result<Vec<ConnType>> {
        let typed: Result<Vec<(QType, Structure)>> =
            structs.into_par_iter().map(|s| Ok((self.type_of(&s)?, s))).collect();
        let mut map: BTreeMap<QType, Vec<Structure>> = BTreeMap::new();
        for (t, s) in typed? {
            map.entry(t).or_default().push(s);
        }
        Ok(map.into_iter().map(|(ty, members)| ConnType { ty, members }).collect())
    }

    fn cap_for(&self, conn: &[ConnType], fixed: Option<usize>) -> Result<usize> {
        if let Some(p) = fixed {
            return Ok(p);
        }
        match self.counting {
            Counting::Modular => {
                let mut l = 1;
                let mut pre = 1;
                for c in conn {
                    let (m, pi) = power_cycle(&c.ty, MAX_POWER, self.budget)?;
                    l = lcm(l, pi);
                    pre = pre.max(m);
                }
                Ok(pre.div_ceil(l).max(1) * l)
            }
            Counting::Threshold => match self.mode {
                ThresholdMode::ClosedForm => {
                    if self.ordered && self.logic == Logic::FO {
                        Ok((1usize << self.q) + 1)
                    } else {
                        let k = conn.iter().flat_map(|c| c.members.iter().map(|m| m.size())).max().unwrap_or(1);
                        let e = k * self.q as usize;
                        if e >= 32 {
                            return Err(Error::budget(format!("threshold 2^{e} is out of reach")));
                        }
                        Ok(1usize << e)
                    }
                }
                ThresholdMode::Empirical => {
                    let mut t = 1;
                    for c in conn {
                        let (m, pi) = power_cycle(&c.ty, MAX_POWER, self.budget)?;
                        if pi != 1 {
                            return Err(Error::invalid(format!(
                                "type {} has power period {pi}; threshold counting cannot separate it",
                                c.ty.short_id()
                            )));
                        }
                        t = t.max(m);
                    }
                    Ok(t)
                }
            },
        }
    }

    /// Builds the level for the connected structures `structs` of tree-depth
    /// at most `d` over `sig`.
    fn level(&mut self, sig: &Signature, d: usize, structs: Vec<Structure>, fixed: Option<usize>) -> Result<Level> {
        self.budget.check("type level")?;
        let conn = self.group(structs)?;
        let cap = self.cap_for(&conn, fixed)?;
        let empty = empty_type(sig, self.logic, self.q, self.ordered);
        let top = match self.counting {
            Counting::Threshold => cap,
            Counting::Modular => 2 * cap - 1,
        };
        let mut pows = Vec::new();
        for c in &conn {
            let mut row = vec![empty.clone()];
            for n in 1..=top {
                row.push(compose(&row[n - 1], &c.ty));
            }
            pows.push(row);
        }
        let b = if self.counting == Counting::Modular { self.b_max } else { 0 };
        let mut lvl = Level {
            sig: sig.clone(),
            d,
            conn,
            cap,
            b,
            definers: Vec::new(),
            pows,
            empty,
            pairs: 0,
            child: None,
        };
        if d == 1 || lvl.conn.iter().all(|c| c.members.iter().all(|m| m.size() == 1)) {
            self.base_definers(&mut lvl)?;
        } else {
            self.step_definers(&mut lvl)?;
        }
        Ok(lvl)
    }

    fn base_definers(&mut self, lvl: &mut Level) -> Result<()> {
        for c in &lvl.conn {
            let m = &c.members[0];
            if m.size() != 1 {
                return Err(Error::invalid("a connected structure of tree-depth 1 has one element"));
            }
            let x = self.fresh.var();
            lvl.definers.push(Formula::exists(&x, atomic_type_formula(&lvl.sig, &m.atomic_type(0), &x)));
        }
        Ok(())
    }

    fn step_definers(&mut self, lvl: &mut Level) -> Result<()> {
        let sig = lvl.sig.clone();
        let d = lvl.d;
        // Components left after removing any root of any member.
        let mut seen = BTreeSet::new();
        let mut child_structs = Vec::new();
        let mut removals: Vec<Vec<(Vec<bool>, Structure)>> = Vec::new();
        for c in &lvl.conn {
            let mut rs = Vec::new();
            for m in &c.members {
                if m.size() <= 1 {
                    continue;
                }
                for r in roots_of(m)? {
                    let (b, _) = m.remove_and_expand(r)?;
                    for comp in b.components() {
                        let k = b.induced(&comp);
                        if seen.insert(k.canonical_form()?) {
                            child_structs.push(k);
                        }
                    }
                    rs.push((m.atomic_type(r).0, b));
                }
            }
            removals.push(rs);
        }
        let child_sig = sig.expand();
        let child = self.level(&child_sig, d - 1, child_structs, None)?;
        let table = child.table(self.counting, self.budget)?;
        let mut whole: BTreeMap<QType, Formula> = BTreeMap::new();
        let mut counter = Counters::new(&child, self.counting, &mut self.fresh)?;

        let arities: BTreeMap<String, usize> = sig.symbols().iter().cloned().collect();
        let x = self.fresh.var();
        let roots_x = build_roots(&sig, d, &x, &mut self.fresh)?;
        let td1 = build_td_leq(&sig, 1, TdMode::Inductive, &mut self.fresh)?;
        let mut interp: BTreeMap<QType, Formula> = BTreeMap::new();
        let mut interpreted = |th: &QType, fresh: &mut Fresh, counter: &mut Counters| -> Result<Formula> {
            if let Some(f) = interp.get(th) {
                return Ok(f.clone());
            }
            let keys = table.get(th).ok_or_else(|| {
                Error::invalid(format!("type {} of a removal is missing from the table", th.short_id()))
            })?;
            let psi = match whole.get(th) {
                Some(f) => f.clone(),
                None => {
                    let f = counter.formula(keys, fresh)?;
                    whole.insert(th.clone(), f.clone());
                    f
                }
            };
            let f = interpret_removed(&psi, &x, &arities, fresh)?;
            interp.insert(th.clone(), f.clone());
            Ok(f)
        };
        let alphas = all_atomic_types(&sig);
        let alpha_f = |a: &AtomicType| atomic_type_formula(&sig, a, &x);

        let mut definers = Vec::new();
        let mut n_pairs = 0;
        for (ci, c) in lvl.conn.iter().enumerate() {
            let hat = match c.members.iter().find(|m| m.size() == 1) {
                Some(m) => {
                    let y = self.fresh.var();
                    Formula::exists(&y, atomic_type_formula(&sig, &m.atomic_type(0), &y))
                }
                None => Formula::ff(),
            };
            let small = Formula::and2(td1.clone(), hat);
            let mut alts = Vec::new();
            if self.ordered {
                let mut pairs: BTreeSet<(Vec<bool>, QType)> = BTreeSet::new();
                for m in c.members.iter().filter(|m| m.size() > 1) {
                    pairs.insert((alpha_of(self.logic, self.q, m)?.0, rtp(self.logic, self.q, m)?));
                }
                n_pairs += pairs.len();
                for (a, th) in pairs {
                    let alpha = AtomicType(a);
                    let below: Vec<Formula> = alphas
                        .iter()
                        .filter(|b| atomic_compare(&sig, b, &alpha) != std::cmp::Ordering::Greater)
                        .map(&alpha_f)
                        .collect();
                    let xi = Formula::and2(
                        Formula::exists(&x, Formula::and2(roots_x.clone(), alpha_f(&alpha))),
                        Formula::forall(&x, Formula::implies(roots_x.clone(), Formula::or(below))),
                    );
                    let mut lower = Vec::new();
                    for th2 in table.keys().filter(|t| **t <= th) {
                        lower.push(interpreted(th2, &mut self.fresh, &mut counter)?);
                    }
                    let chi = Formula::and2(
                        Formula::forall(
                            &x,
                            Formula::implies(Formula::and2(roots_x.clone(), alpha_f(&alpha)), Formula::or(lower)),
                        ),
                        Formula::exists(
                            &x,
                            Formula::and(vec![
                                roots_x.clone(),
                                alpha_f(&alpha),
                                interpreted(&th, &mut self.fresh, &mut counter)?,
                            ]),
                        ),
                    );
                    alts.push(Formula::and2(xi, chi));
                }
                let big = Formula::and2(Formula::not(td1.clone()), Formula::or(alts));
                definers.push(Formula::or2(small, big));
            } else {
                let mut pairs: BTreeSet<(QType, Vec<bool>)> = BTreeSet::new();
                for (a, b) in &removals[ci] {
                    pairs.insert((tp(self.logic, self.q, b)?, a.clone()));
                }
                n_pairs += pairs.len();
                for (th, a) in pairs {
                    let body = Formula::and(vec![
                        roots_x.clone(),
                        alpha_f(&AtomicType(a)),
                        interpreted(&th, &mut self.fresh, &mut counter)?,
                    ]);
                    alts.push(Formula::exists(&x, body));
                }
                definers.push(Formula::or2(small, Formula::or(alts)));
            }
            self.budget.check("connected definers")?;
        }
        lvl.definers = definers;
        lvl.pairs = n_pairs;
        lvl.child = Some(Box::new(child));
        Ok(())
    }
}

/// Every atomic type over `sig`, in ascending atomic order.
fn all_atomic_types(sig: &Signature) -> Vec<AtomicType> {
    let n = sig.len();
    let mut out: Vec<AtomicType> = (0..1u64 << n).map(|m| AtomicType((0..n).map(|i| m >> i & 1 == 1).collect())).collect();
    out.sort_by(|a, b| atomic_compare(sig, a, b));
    out
}

enum Counters {
    Threshold(Counter),
    Modular(ModCounter),
}

impl Counters {
    fn new(lvl: &Level, counting: Counting, fresh: &mut Fresh) -> Result<Counters> {
        Ok(match counting {
            Counting::Threshold => Counters::Threshold(Counter::new(&lvl.sig, lvl.d, &lvl.definers, lvl.cap, fresh)?),
            Counting::Modular => {
                Counters::Modular(ModCounter::new(&lvl.sig, lvl.d, &lvl.definers, lvl.cap, lvl.b, fresh)?)
            }
        })
    }

    fn formula(&mut self, keys: &[Key], fresh: &mut Fresh) -> Result<Formula> {
        match self {
            Counters::Threshold(c) => c.formula(&keys.iter().map(|k| k.cap.clone()).collect::<Vec<_>>(), fresh),
            Counters::Modular(c) => {
                c.formula(&keys.iter().map(|k| (k.cap.clone(), k.res.clone())).collect::<Vec<_>>(), fresh)
            }
        }
    }
}

impl Level {
    fn count_range(&self, counting: Counting) -> usize {
        match counting {
            Counting::Threshold => self.cap + 1,
            Counting::Modular => 2 * self.cap,
        }
    }

    fn key_of(&self, counting: Counting, n: &[usize]) -> Key {
        match counting {
            Counting::Threshold => Key { cap: n.to_vec(), res: Vec::new() },
            Counting::Modular => {
                Key { cap: n.iter().map(|&x| x.min(self.cap)).collect(), res: n.iter().map(|&x| x % self.cap).collect() }
            }
        }
    }

    /// Type of the sorted union with `n[i]` copies of connected type `i`.
    fn assemble(&self, n: &[usize]) -> QType {
        let mut acc = self.empty.clone();
        for (i, &k) in n.iter().enumerate() {
            if k > 0 {
                acc = compose(&acc, &self.pows[i][k]);
            }
        }
        acc
    }

    fn vectors(&self, counting: Counting) -> Result<Vec<Vec<usize>>> {
        let range = self.count_range(counting);
        let l = self.conn.len();
        let total = (0..l).try_fold(1usize, |acc, _| acc.checked_mul(range)).filter(|&t| t <= MAX_VECTORS);
        if total.is_none() {
            return Err(Error::budget(format!("{range}^{l} count vectors")));
        }
        let mut out = Vec::new();
        let mut n = vec![0usize; l];
        loop {
            out.push(n.clone());
            let mut pos = 0;
            while pos < l && n[pos] + 1 == range {
                n[pos] = 0;
                pos += 1;
            }
            if pos == l {
                break;
            }
            n[pos] += 1;
        }
        Ok(out)
    }

    /// Every type assembled from connected types, with the keys producing it.
    fn table(&self, counting: Counting, budget: &Budget) -> Result<BTreeMap<QType, Vec<Key>>> {
        let mut out: BTreeMap<QType, BTreeSet<Key>> = BTreeMap::new();
        for (i, n) in self.vectors(counting)?.into_iter().enumerate() {
            if i % 4096 == 0 {
                budget.check("type table")?;
            }
            out.entry(self.assemble(&n)).or_default().insert(self.key_of(counting, &n));
        }
        Ok(out.into_iter().map(|(t, ks)| (t, ks.into_iter().collect())).collect())
    }

    /// Ordered union of one member per connected type with the given counts,
    /// each member carrying its own `q`-order.
    fn representative(&self, n: &[usize], logic: Logic, q: u32, ordered: bool) -> Result<Structure> {
        let mut parts = Vec::new();
        for (i, &k) in n.iter().enumerate() {
            let m = &self.conn[i].members[0];
            let m = if ordered { q_order(logic, q, m)? } else { m.clone() };
            for _ in 0..k {
                parts.push(m.clone());
            }
        }
        Structure::union_all(&self.sig, &parts, ordered)
    }

    fn reports(&self, out: &mut Vec<LevelReport>) {
        out.push(LevelReport {
            d: self.d,
            signature: self.sig.to_string(),
            connected_types: self.conn.len(),
            structures: self.conn.iter().map(|c| c.members.len()).sum(),
            cap: self.cap,
            root_bound: (self.b > 0).then_some(self.b),
            definer_pairs: self.pairs,
        });
        if let Some(c) = &self.child {
            c.reports(out);
        }
    }
}

// ---------------------------------------------------------------------------
// Pipelines.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Order-invariant first-order sentences to first-order ones.
    OrderInvariantFo,
    /// Monadic second-order sentences to first-order ones.
    Mso,
    /// Order-invariant monadic second-order sentences to first-order ones
    /// with modulo counting.
    OrderInvariantMso,
}

impl Pipeline {
    pub fn parse(s: &str) -> Result<Pipeline> {
        match s {
            "oifo" => Ok(Pipeline::OrderInvariantFo),
            "mso" => Ok(Pipeline::Mso),
            "oimso" => Ok(Pipeline::OrderInvariantMso),
            _ => Err(Error::invalid(format!("unknown pipeline `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::OrderInvariantFo => "oifo",
            Pipeline::Mso => "mso",
            Pipeline::OrderInvariantMso => "oimso",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    pub d: usize,
    /// Connected structures up to this size populate the type tables.
    pub max_size: usize,
    pub graph_mode: bool,
    pub threshold_mode: ThresholdMode,
    pub period_source: PeriodSource,
    /// Root-count bound for modulo counting; measured when absent.
    pub root_bound: Option<usize>,
    /// Time allowed for the type-based period when the automaton supplies it.
    pub type_period_ms: u64,
}

impl TranslateOptions {
    pub fn new(d: usize, max_size: usize) -> Self {
        TranslateOptions {
            d,
            max_size,
            graph_mode: false,
            threshold_mode: ThresholdMode::Empirical,
            period_source: PeriodSource::Types,
            root_bound: None,
            type_period_ms: 2000,
        }
    }

    pub fn graphs(mut self) -> Self {
        self.graph_mode = true;
        self
    }

    pub fn threshold(mut self, mode: ThresholdMode) -> Self {
        self.threshold_mode = mode;
        self
    }

    pub fn period(mut self, source: PeriodSource) -> Self {
        self.period_source = source;
        self
    }
}

#[derive(Debug, Clone)]
pub struct TranslationReport {
    pub pipeline: Pipeline,
    pub logic: Logic,
    pub q: u32,
    pub d: usize,
    pub threshold_mode: ThresholdMode,
    pub t: Option<usize>,
    pub p: Option<usize>,
    pub root_bound: Option<usize>,
    pub period_source: Option<PeriodSource>,
    /// Period from type powers when the automaton supplied `p`; `Err` holds
    /// why it could not be computed.
    pub type_period: Option<std::result::Result<usize, String>>,
    pub connected_types: Vec<String>,
    pub structures: usize,
    pub max_size: usize,
    pub r_size: usize,
    pub vectors: usize,
    pub levels: Vec<LevelReport>,
    pub input: Metrics,
    pub output: Metrics,
}

#[derive(Debug, Clone)]
pub struct Translation {
    pub formula: Formula,
    pub report: TranslationReport,
}

/// Order-invariant FO to FO: the result answers `phi` on the canonical
/// `q`-ordered expansion.
pub fn translate_oifo(sig: &Signature, phi: &Formula, opts: &TranslateOptions, budget: &Budget) -> Result<Translation> {
    translate(Pipeline::OrderInvariantFo, sig, phi, opts, budget)
}

/// MSO to FO on structures of tree-depth at most `d`.
pub fn translate_mso(sig: &Signature, phi: &Formula, opts: &TranslateOptions, budget: &Budget) -> Result<Translation> {
    translate(Pipeline::Mso, sig, phi, opts, budget)
}

/// Order-invariant MSO to FO with modulo counting.
pub fn translate_oimso(sig: &Signature, phi: &Formula, opts: &TranslateOptions, budget: &Budget) -> Result<Translation> {
    translate(Pipeline::OrderInvariantMso, sig, phi, opts, budget)
}

pub fn translate(
    pipeline: Pipeline,
    sig: &Signature,
    phi: &Formula,
    opts: &TranslateOptions,
    budget: &Budget,
) -> Result<Translation> {
    let input = metrics(phi);
    if !input.free_vars.is_empty() {
        return Err(Error::invalid("the input must be a sentence"));
    }
    if opts.d == 0 {
        return Err(Error::invalid("tree-depth bound must be positive"));
    }
    let (logic, ordered, counting) = match pipeline {
        Pipeline::OrderInvariantFo => (Logic::FO, true, Counting::Threshold),
        Pipeline::Mso => (Logic::MSO, false, Counting::Threshold),
        Pipeline::OrderInvariantMso => (Logic::MSO, true, Counting::Modular),
    };
    if pipeline == Pipeline::OrderInvariantFo && input.uses_sets {
        return Err(Error::invalid("set quantifiers in a first-order input"));
    }
    if pipeline == Pipeline::Mso && input.uses_order {
        return Err(Error::invalid("the unordered pipeline does not accept the order symbol"));
    }
    if input.uses_mod {
        return Err(Error::unsupported("modulo counting quantifiers in the input"));
    }
    let q = input.qr.max(1) as u32;
    let structs = enum_structures(
        sig,
        EnumOptions { graph_mode: opts.graph_mode, ..EnumOptions::new(opts.max_size) }.connected().td(opts.d).min(1),
        budget,
    )?;
    let n_structs = structs.len();
    let b_max = match (counting, opts.root_bound) {
        (Counting::Modular, Some(b)) => b,
        (Counting::Modular, None) => measured_root_bound(opts.d, 8, budget)?,
        _ => 0,
    };
    let mut builder = Builder {
        logic,
        q,
        ordered,
        counting,
        mode: opts.threshold_mode,
        budget,
        fresh: Fresh::avoiding(phi),
        b_max,
    };

    // The automaton period is computed before the level so it can fix `p`.
    let mut automaton = None;
    let mut fixed = None;
    let mut type_period = None;
    if counting == Counting::Modular && opts.period_source == PeriodSource::WordAutomaton {
        if opts.d != 1 {
            return Err(Error::unsupported("automaton periods need tree-depth 1"));
        }
        let aut = compile_sentence(sig, phi, budget)?;
        let letters: BTreeSet<usize> = structs.iter().map(|s| letter_of(s, 0)).collect();
        fixed = Some(aut.pumping_period(&letters.into_iter().collect::<Vec<_>>()));
        automaton = Some(aut);
    }
    let top = builder.level(sig, opts.d, structs, fixed)?;
    if automaton.is_some() {
        let sub = Budget::millis(opts.type_period_ms);
        let mut l = 1;
        let mut pre = 1;
        let mut res = Ok(());
        for c in &top.conn {
            match power_cycle(&c.ty, MAX_POWER, &sub) {
                Ok((m, pi)) => {
                    l = lcm(l, pi);
                    pre = pre.max(m);
                }
                Err(e) => {
                    res = Err(e.to_string());
                    break;
                }
            }
        }
        type_period = Some(res.map(|_| pre.div_ceil(l).max(1) * l));
    }

    // The set of keys whose assembled structure satisfies phi.
    let vectors = top.vectors(counting)?;
    let n_vectors = vectors.len();
    let verdicts: Result<Vec<bool>> = vectors
        .par_iter()
        .map(|n| {
            budget.check("selecting count vectors")?;
            match &automaton {
                Some(aut) => {
                    let rep = top.representative(n, logic, q, ordered)?;
                    let word: Vec<usize> = rep.order().unwrap().iter().map(|&e| letter_of(&rep, e)).collect();
                    Ok(aut.accepts(&word))
                }
                None => eval_on_type(&top.assemble(n), phi),
            }
        })
        .collect();
    let mut keys: BTreeSet<Key> = BTreeSet::new();
    for (n, ok) in vectors.iter().zip(verdicts?) {
        if ok {
            keys.insert(top.key_of(counting, n));
        }
    }
    let keys: Vec<Key> = keys.into_iter().collect();
    let mut counter = Counters::new(&top, counting, &mut builder.fresh)?;
    let formula = counter.formula(&keys, &mut builder.fresh)?;
    let mut levels = Vec::new();
    top.reports(&mut levels);
    let report = TranslationReport {
        pipeline,
        logic,
        q,
        d: opts.d,
        threshold_mode: opts.threshold_mode,
        t: (counting == Counting::Threshold).then_some(top.cap),
        p: (counting == Counting::Modular).then_some(top.cap),
        root_bound: (counting == Counting::Modular).then_some(b_max),
        period_source: (counting == Counting::Modular).then_some(opts.period_source),
        type_period,
        connected_types: top.conn.iter().map(|c| c.ty.short_id()).collect(),
        structures: n_structs,
        max_size: opts.max_size,
        r_size: keys.len(),
        vectors: n_vectors,
        levels,
        input,
        output: metrics(&formula),
    };
    Ok(Translation { formula, report })
}

// ---------------------------------------------------------------------------
// Checking.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    /// Position in the canonical enumeration.
    pub index: usize,
    pub structure: Structure,
    pub expected: bool,
    pub got: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub checked: usize,
    pub max_size: usize,
    pub d: usize,
    pub mismatch: Option<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Value of `phi` on `a`, read on the canonical `q`-ordered expansion when
/// `phi` mentions the order.
pub fn eval_canonical(a: &Structure, phi: &Formula) -> Result<bool> {
    let m = metrics(phi);
    if m.uses_order {
        let logic = if m.uses_sets { Logic::MSO } else { Logic::FO };
        eval_sentence(&q_order(logic, m.qr.max(1) as u32, a)?, phi)
    } else {
        eval_sentence(&a.without_order(), phi)
    }
}

/// Compares `psi` with `phi` on every structure of tree-depth at most `d`
/// with at most `max_size` elements.
pub fn verify_equivalence(
    sig: &Signature,
    phi: &Formula,
    psi: &Formula,
    d: usize,
    max_size: usize,
    graph_mode: bool,
    budget: &Budget,
) -> Result<VerifyReport> {
    let all = enum_structures(sig, EnumOptions { graph_mode, ..EnumOptions::new(max_size) }.td(d), budget)?;
    let results: Result<Vec<Option<(bool, bool)>>> = all
        .par_iter()
        .map(|a| {
            budget.check("verification")?;
            let want = eval_canonical(a, phi)?;
            let got = eval_sentence(a, psi)?;
            Ok((want != got).then_some((want, got)))
        })
        .collect();
    let mismatch = results?
        .into_iter()
        .enumerate()
        .find_map(|(i, r)| r.map(|(expected, got)| Mismatch { index: i, structure: all[i].clone(), expected, got }));
    Ok(VerifyReport { checked: all.len(), max_size, d, mismatch })
}

/// Two orders of `a` on which `phi` disagrees, if any.
pub fn check_order_invariance(
    a: &Structure,
    phi: &Formula,
    budget: &Budget,
) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
    if a.size() > 8 {
        return Err(Error::budget("order invariance is checked on at most 8 elements"));
    }
    let base = a.without_order();
    let mut first: Option<(Vec<usize>, bool)> = None;
    for ord in all_orders(a.size()) {
        budget.check("order invariance")?;
        let v = eval_sentence(&base.with_order(ord.clone())?, phi)?;
        match &first {
            None => first = Some((ord, v)),
            Some((o, w)) if *w != v => return Ok(Some((o.clone(), ord))),
            _ => {}
        }
    }
    Ok(None)
}

/// First model of `phi` in canonical enumeration order.
pub fn find_model(sig: &Signature, phi: &Formula, opts: EnumOptions, budget: &Budget) -> Result<Option<Structure>> {
    for a in enum_structures(sig, opts, budget)? {
        budget.check("model search")?;
        if eval_canonical(&a, phi)? {
            return Ok(Some(a));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests;
