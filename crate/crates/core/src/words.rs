//! Finite automata for MSO sentences over words.
//!
//! An ordered structure of tree-depth 1 is a word: each element is a letter,
//! namely the bitmask of relation symbols holding on its diagonal tuple.
//! Sentences of MSO over such words compile to minimal DFAs by the classical
//! construction (one track per variable, projection for quantifiers). The
//! transition monoid of the minimal DFA is the syntactic monoid of the
//! sentence, which yields exact thresholds and periods for letter powers.

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::formulas::{Formula, Node};
use crate::structures::{Signature, Structure};
use std::collections::{BTreeMap, HashMap};

/// Complete DFA over `letters * 2^tracks` symbols.
#[derive(Debug, Clone)]
pub struct Dfa {
    pub symbols: usize,
    pub start: usize,
    pub delta: Vec<Vec<usize>>,
    pub accept: Vec<bool>,
}

/// Limit on variable tracks.
pub const MAX_TRACKS: usize = 12;
/// Limit on states produced by a subset construction.
pub const MAX_STATES: usize = 200_000;

impl Dfa {
    fn constant(symbols: usize, accept: bool) -> Dfa {
        Dfa { symbols, start: 0, delta: vec![vec![0; symbols]], accept: vec![accept] }
    }

    pub fn states(&self) -> usize {
        self.delta.len()
    }

    pub fn run(&self, word: &[usize]) -> bool {
        self.accept[word.iter().fold(self.start, |s, &a| self.delta[s][a])]
    }

    fn complement(mut self) -> Dfa {
        for a in self.accept.iter_mut() {
            *a = !*a;
        }
        self
    }

    fn product(&self, other: &Dfa, f: impl Fn(bool, bool) -> bool) -> Dfa {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = vec![(self.start, other.start)];
        index.insert(pairs[0], 0);
        let mut delta = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let (p, q) = pairs[i];
            let mut row = Vec::with_capacity(self.symbols);
            for s in 0..self.symbols {
                let nxt = (self.delta[p][s], other.delta[q][s]);
                let id = *index.entry(nxt).or_insert_with(|| {
                    pairs.push(nxt);
                    pairs.len() - 1
                });
                row.push(id);
            }
            delta.push(row);
            i += 1;
        }
        let accept = pairs.iter().map(|&(p, q)| f(self.accept[p], other.accept[q])).collect();
        Dfa { symbols: self.symbols, start: 0, delta, accept }.minimize()
    }

    /// Existential projection of bit `bit` of every symbol.
    fn project(&self, bit: usize, budget: &Budget) -> Result<Dfa> {
        let mask = 1usize << bit;
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut sets = vec![vec![self.start]];
        index.insert(sets[0].clone(), 0);
        let mut delta = Vec::new();
        let mut i = 0;
        while i < sets.len() {
            if sets.len() > MAX_STATES {
                return Err(Error::budget("subset construction exceeded the state limit"));
            }
            if i % 256 == 0 {
                budget.check("automaton projection")?;
            }
            let cur = sets[i].clone();
            let mut row = Vec::with_capacity(self.symbols);
            for s in 0..self.symbols {
                let mut nxt: Vec<usize> = Vec::with_capacity(cur.len() * 2);
                for &p in &cur {
                    nxt.push(self.delta[p][s & !mask]);
                    nxt.push(self.delta[p][s | mask]);
                }
                nxt.sort_unstable();
                nxt.dedup();
                let id = match index.get(&nxt) {
                    Some(&id) => id,
                    None => {
                        sets.push(nxt.clone());
                        index.insert(nxt, sets.len() - 1);
                        sets.len() - 1
                    }
                };
                row.push(id);
            }
            delta.push(row);
            i += 1;
        }
        let accept = sets.iter().map(|s| s.iter().any(|&p| self.accept[p])).collect();
        Ok(Dfa { symbols: self.symbols, start: 0, delta, accept }.minimize())
    }

    /// Minimal equivalent DFA by partition refinement on the reachable part.
    pub fn minimize(&self) -> Dfa {
        let mut reach = vec![usize::MAX; self.states()];
        let mut order = vec![self.start];
        reach[self.start] = 0;
        let mut i = 0;
        while i < order.len() {
            for &t in &self.delta[order[i]] {
                if reach[t] == usize::MAX {
                    reach[t] = order.len();
                    order.push(t);
                }
            }
            i += 1;
        }
        let mut class: Vec<usize> = order.iter().map(|&s| self.accept[s] as usize).collect();
        let mut count = 0;
        loop {
            let mut sig_index: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let mut next = Vec::with_capacity(order.len());
            for (k, &s) in order.iter().enumerate() {
                let row: Vec<usize> = self.delta[s].iter().map(|&t| class[reach[t]]).collect();
                let n = sig_index.len();
                next.push(*sig_index.entry((class[k], row)).or_insert(n));
            }
            let n = sig_index.len();
            class = next;
            if n == count {
                break;
            }
            count = n;
        }
        let mut delta = vec![Vec::new(); count];
        let mut accept = vec![false; count];
        for (k, &s) in order.iter().enumerate() {
            let c = class[k];
            if delta[c].is_empty() {
                delta[c] = self.delta[s].iter().map(|&t| class[reach[t]]).collect();
                accept[c] = self.accept[s];
            }
        }
        Dfa { symbols: self.symbols, start: class[0], delta, accept }
    }

    /// Keeps only the symbols whose track bits are all zero.
    fn restrict_to_letters(&self, tracks: usize, letters: usize) -> Dfa {
        let delta = self.delta.iter().map(|row| (0..letters).map(|l| row[l << tracks]).collect()).collect();
        Dfa { symbols: letters, start: self.start, delta, accept: self.accept.clone() }.minimize()
    }

    /// Pre-period `m >= 1` and period of the transformation induced by `letter`.
    pub fn letter_cycle(&self, letter: usize) -> (usize, usize) {
        let step: Vec<usize> = self.delta.iter().map(|r| r[letter]).collect();
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut cur = step.clone();
        let mut n = 1;
        loop {
            if let Some(&j) = seen.get(&cur) {
                return (j, n - j);
            }
            seen.insert(cur.clone(), n);
            cur = cur.iter().map(|&s| step[s]).collect();
            n += 1;
        }
    }
}

/// A sentence compiled to a minimal DFA over letters of `sig`.
#[derive(Debug, Clone)]
pub struct WordAutomaton {
    pub sig: Signature,
    pub dfa: Dfa,
}

impl WordAutomaton {
    pub fn letters(&self) -> usize {
        1 << self.sig.len()
    }

    pub fn accepts(&self, word: &[usize]) -> bool {
        self.dfa.run(word)
    }

    /// Least `p >= 1` with `w^p` and `w^(2p)` acting alike for every letter `w`.
    pub fn pumping_period(&self, letters: &[usize]) -> usize {
        let mut l = 1;
        let mut pre = 1;
        for &a in letters {
            let (m, pi) = self.dfa.letter_cycle(a);
            l = crate::types::lcm(l, pi);
            pre = pre.max(m);
        }
        pre.div_ceil(l).max(1) * l
    }
}

/// Letter of an element: bit `i` set iff symbol `i` holds on its diagonal.
pub fn letter_of(a: &Structure, e: usize) -> usize {
    a.atomic_type(e).0.iter().enumerate().fold(0, |acc, (i, &b)| acc | (b as usize) << i)
}

/// The word of an ordered structure without Gaifman edges.
pub fn word_of(a: &Structure) -> Result<Vec<usize>> {
    let order = a.order().ok_or(Error::MissingOrder)?;
    if a.gaifman().iter().any(|n| !n.is_empty()) {
        return Err(Error::invalid("structure has Gaifman edges and is not a word"));
    }
    Ok(order.iter().map(|&e| letter_of(a, e)).collect())
}

pub fn compile_sentence(sig: &Signature, f: &Formula, budget: &Budget) -> Result<WordAutomaton> {
    if sig.len() > 4 {
        return Err(Error::budget("word automata support at most 4 relation symbols"));
    }
    let tracks = count_binders(f);
    if tracks > MAX_TRACKS {
        return Err(Error::budget(format!("{tracks} variable tracks (limit {MAX_TRACKS})")));
    }
    let mut c = Compiler { sig, tracks, symbols: (1 << sig.len()) << tracks, next: 0, budget };
    let dfa = c.compile(f, &BTreeMap::new())?;
    Ok(WordAutomaton { sig: sig.clone(), dfa: dfa.restrict_to_letters(tracks, 1 << sig.len()) })
}

fn count_binders(f: &Formula) -> usize {
    let own = matches!(
        f.node(),
        Node::Exists(..) | Node::Forall(..) | Node::ExistsSet(..) | Node::ForallSet(..) | Node::ExistsMod(..)
    ) as usize;
    own + f.children().into_iter().map(count_binders).sum::<usize>()
}

struct Compiler<'a> {
    sig: &'a Signature,
    tracks: usize,
    symbols: usize,
    next: usize,
    budget: &'a Budget,
}

impl Compiler<'_> {
    fn bit(s: usize, t: usize) -> bool {
        s >> t & 1 == 1
    }

    /// Two states (ok, dead) with a per-symbol test.
    fn local(&self, ok: impl Fn(usize) -> bool) -> Dfa {
        let mut delta = vec![vec![1; self.symbols], vec![1; self.symbols]];
        for s in 0..self.symbols {
            if ok(s) {
                delta[0][s] = 0;
            }
        }
        Dfa { symbols: self.symbols, start: 0, delta, accept: vec![true, false] }
    }

    /// Exactly one position carries bit `t`.
    fn singleton(&self, t: usize) -> Dfa {
        let mut delta = vec![vec![0; self.symbols], vec![1; self.symbols], vec![2; self.symbols]];
        for s in 0..self.symbols {
            if Self::bit(s, t) {
                delta[0][s] = 1;
                delta[1][s] = 2;
            }
        }
        Dfa { symbols: self.symbols, start: 0, delta, accept: vec![false, true, false] }
    }

    fn track(env: &BTreeMap<String, usize>, v: &str) -> Result<usize> {
        env.get(v).copied().ok_or_else(|| Error::UnboundVariable(v.to_string()))
    }

    fn compile(&mut self, f: &Formula, env: &BTreeMap<String, usize>) -> Result<Dfa> {
        self.budget.check("automaton compilation")?;
        Ok(match f.node() {
            Node::True => Dfa::constant(self.symbols, true),
            Node::False => Dfa::constant(self.symbols, false),
            Node::Atom(r, args) => {
                let ri = self.sig.index_of(r).ok_or_else(|| Error::UnknownSymbol(r.to_string()))?;
                if args.len() != self.sig.arity(ri) {
                    return Err(Error::Arity { name: r.to_string(), expected: self.sig.arity(ri), got: args.len() });
                }
                let ts = args.iter().map(|v| Self::track(env, v)).collect::<Result<Vec<_>>>()?;
                let tracks = self.tracks;
                // Tuples of a word structure sit on the diagonal.
                self.local(move |s| {
                    let set = ts.iter().filter(|&&t| Self::bit(s, t)).count();
                    set == 0 || (set == ts.len() && (s >> tracks) >> ri & 1 == 1)
                })
            }
            Node::Eq(x, y) => {
                let (a, b) = (Self::track(env, x)?, Self::track(env, y)?);
                self.local(move |s| Self::bit(s, a) == Self::bit(s, b))
            }
            Node::Leq(x, y) => {
                let (a, b) = (Self::track(env, x)?, Self::track(env, y)?);
                if a == b {
                    return Ok(Dfa::constant(self.symbols, true));
                }
                // 0: none seen, 1: x seen, 2: accepted, 3: y before x.
                let mut delta = vec![vec![0; self.symbols], vec![1; self.symbols], vec![2; self.symbols], vec![3; self.symbols]];
                for s in 0..self.symbols {
                    let (bx, by) = (Self::bit(s, a), Self::bit(s, b));
                    delta[0][s] = match (bx, by) {
                        (true, true) => 2,
                        (true, false) => 1,
                        (false, true) => 3,
                        _ => 0,
                    };
                    if by {
                        delta[1][s] = 2;
                    }
                }
                Dfa { symbols: self.symbols, start: 0, delta, accept: vec![false, false, true, false] }
            }
            Node::SetAtom(x, y) => {
                let (a, b) = (Self::track(env, x)?, Self::track(env, y)?);
                self.local(move |s| !Self::bit(s, b) || Self::bit(s, a))
            }
            Node::Not(a) => self.compile(a, env)?.complement(),
            Node::And(parts) | Node::Or(parts) => {
                let conj = matches!(f.node(), Node::And(_));
                let mut acc = Dfa::constant(self.symbols, conj);
                for p in parts {
                    let d = self.compile(p, env)?;
                    acc = acc.product(&d, |x, y| if conj { x && y } else { x || y });
                }
                acc
            }
            Node::Implies(a, b) => {
                let (x, y) = (self.compile(a, env)?, self.compile(b, env)?);
                x.product(&y, |p, q| !p || q)
            }
            Node::Exists(v, b) | Node::Forall(v, b) | Node::ExistsSet(v, b) | Node::ForallSet(v, b) => {
                let t = self.next;
                self.next += 1;
                let mut inner = env.clone();
                inner.insert(v.to_string(), t);
                let body = self.compile(b, &inner)?;
                let elem = matches!(f.node(), Node::Exists(..) | Node::Forall(..));
                let universal = matches!(f.node(), Node::Forall(..) | Node::ForallSet(..));
                let body = if universal { body.complement() } else { body };
                let body = if elem { body.product(&self.singleton(t), |x, y| x && y) } else { body };
                let out = body.project(t, self.budget)?;
                if universal {
                    out.complement()
                } else {
                    out
                }
            }
            Node::ExistsMod(..) => return Err(Error::unsupported("counting quantifiers in word automata")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulas::parse_formula;

    #[test]
    fn even_length_has_period_two() {
        let sig = Signature::of(&[("P", 1)]);
        let f = parse_formula(
            "existsSet X. (forall x. (forall y. x <= y) -> X(x)) & (forall x. (forall y. y <= x) -> !X(x)) \
             & forall x. forall y. (x <= y & !x = y & forall z. (z <= x | y <= z)) -> ((X(x) -> !X(y)) & (!X(y) -> X(x)))",
        )
        .unwrap();
        let w = compile_sentence(&sig, &f, &Budget::unlimited()).unwrap();
        for n in 0..9 {
            assert_eq!(w.accepts(&vec![n % 2; n]), n % 2 == 0, "length {n}");
        }
        assert_eq!(w.pumping_period(&[0, 1]), 2);
    }
}
