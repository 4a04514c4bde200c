//! Two-counter machines and their reduction to satisfiability on ordered
//! coloured graphs of tree-depth 2.
//!
//! A run is written as a word over `1L 1R 2L 2R` and one colour per
//! instruction. Matching edges between consecutive configuration blocks
//! witness each step, and [`build_sentence`] defines exactly those graphs.

use std::fmt;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::eval::eval_sentence;
use crate::formulas::{Formula, Fresh, Var};
use crate::structures::{Signature, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Inc(u8),
    /// `Dec(i, j0, j1)`: on zero go to `j0`, otherwise decrement and go to `j1`.
    Dec(u8, usize, usize),
    Halt,
}

/// Instructions are numbered from 1; the last one is the only `Halt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterProgram {
    instrs: Vec<Instr>,
}

impl CounterProgram {
    pub fn new(instrs: Vec<Instr>) -> Result<Self> {
        let l = instrs.len();
        if l == 0 || instrs[l - 1] != Instr::Halt {
            return Err(Error::invalid("program must end with halt"));
        }
        for (k, ins) in instrs.iter().enumerate() {
            match *ins {
                Instr::Halt if k + 1 != l => return Err(Error::invalid(format!("halt at line {} before the end", k + 1))),
                Instr::Inc(c) | Instr::Dec(c, _, _) if c != 1 && c != 2 => {
                    return Err(Error::invalid(format!("line {}: counter {c} is not 1 or 2", k + 1)))
                }
                Instr::Dec(_, j0, j1) if !(1..=l).contains(&j0) || !(1..=l).contains(&j1) => {
                    return Err(Error::invalid(format!("line {}: jump target out of range", k + 1)))
                }
                _ => {}
            }
        }
        Ok(CounterProgram { instrs })
    }

    /// One instruction per line: `inc 1`, `dec 1 3 2`, `halt`. `#` starts a
    /// comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut instrs = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse { line: k + 1, col: 1, msg: format!("bad number `{s}`") });
            let ins = match parts.as_slice() {
                ["inc", c] => Instr::Inc(num(c)? as u8),
                ["dec", c, j0, j1] => Instr::Dec(num(c)? as u8, num(j0)?, num(j1)?),
                ["halt"] => Instr::Halt,
                _ => return Err(Error::Parse { line: k + 1, col: 1, msg: format!("unknown instruction `{line}`") }),
            };
            instrs.push(ins);
        }
        CounterProgram::new(instrs)
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Instruction `j`, counted from 1.
    pub fn get(&self, j: usize) -> Instr {
        self.instrs[j - 1]
    }
}

impl fmt::Display for CounterProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instrs {
            match ins {
                Instr::Inc(c) => writeln!(f, "inc {c}")?,
                Instr::Dec(c, j0, j1) => writeln!(f, "dec {c} {j0} {j1}")?,
                Instr::Halt => writeln!(f, "halt")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Config {
    pub n1: usize,
    pub n2: usize,
    pub j: usize,
}

impl Config {
    pub fn new(n1: usize, n2: usize, j: usize) -> Self {
        Config { n1, n2, j }
    }

    fn count(&self, c: u8) -> usize {
        if c == 1 {
            self.n1
        } else {
            self.n2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub configs: Vec<Config>,
    pub halted: bool,
}

/// Runs from `(0, 0, 1)` for at most `max_steps` transitions.
pub fn run_machine(p: &CounterProgram, max_steps: usize) -> Run {
    let mut c = Config::new(0, 0, 1);
    let mut configs = vec![c];
    for _ in 0..max_steps {
        c = match p.get(c.j) {
            Instr::Halt => break,
            Instr::Inc(1) => Config::new(c.n1 + 1, c.n2, c.j + 1),
            Instr::Inc(_) => Config::new(c.n1, c.n2 + 1, c.j + 1),
            Instr::Dec(k, j0, j1) => match (k, c.count(k)) {
                (_, 0) => Config::new(c.n1, c.n2, j0),
                (1, _) => Config::new(c.n1 - 1, c.n2, j1),
                _ => Config::new(c.n1, c.n2 - 1, j1),
            },
        };
        configs.push(c);
    }
    let halted = p.get(c.j) == Instr::Halt;
    Run { configs, halted }
}

/// Letters of a run word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    L(u8),
    R(u8),
    /// Instruction colour, counted from 1.
    I(usize),
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Letter::L(c) => write!(f, "{c}_L"),
            Letter::R(c) => write!(f, "{c}_R"),
            Letter::I(j) => write!(f, "{j}"),
        }
    }
}

pub fn show_word(w: &[Letter]) -> String {
    w.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn encode_config(c: &Config) -> Vec<Letter> {
    let mut w = Vec::new();
    for _ in 0..c.n1 {
        w.extend([Letter::L(1), Letter::R(1)]);
    }
    for _ in 0..c.n2 {
        w.extend([Letter::L(2), Letter::R(2)]);
    }
    w.push(Letter::I(c.j));
    w
}

pub fn encode_run(configs: &[Config]) -> Vec<Letter> {
    configs.iter().flat_map(encode_config).collect()
}

/// `{E/2, C1L, C1R, C2L, C2R, I1, .., Il}` for a program of length `l`.
pub fn signature(l: usize) -> Signature {
    let mut syms = vec![("E".to_string(), 2)];
    for c in 1..=2 {
        syms.push((format!("C{c}L"), 1));
        syms.push((format!("C{c}R"), 1));
    }
    for j in 1..=l {
        syms.push((format!("I{j}"), 1));
    }
    Signature::new(syms).expect("fixed signature")
}

fn colour(l: &Letter) -> String {
    match l {
        Letter::L(c) => format!("C{c}L"),
        Letter::R(c) => format!("C{c}R"),
        Letter::I(j) => format!("I{j}"),
    }
}

/// The word as an edgeless structure ordered by position.
pub fn word_structure(w: &[Letter], l: usize) -> Result<Structure> {
    let mut a = Structure::new(signature(l), w.len());
    for (k, letter) in w.iter().enumerate() {
        if let Letter::I(j) = letter {
            if *j == 0 || *j > l {
                return Err(Error::invalid(format!("instruction colour {j} out of range")));
            }
        }
        a.add(&colour(letter), &[k])?;
    }
    Ok(a.with_natural_order())
}

/// Blocks as position ranges, each ending at an instruction letter.
fn blocks(w: &[Letter]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (k, l) in w.iter().enumerate() {
        if matches!(l, Letter::I(_)) {
            out.push((start, k));
            start = k + 1;
        }
    }
    if start != w.len() {
        return Err(Error::invalid("word does not end with an instruction letter"));
    }
    Ok(out)
}

/// Reads the configurations back from a word.
pub fn decode_word(w: &[Letter]) -> Result<Vec<Config>> {
    let mut out = Vec::new();
    for (s, e) in blocks(w)? {
        let Letter::I(j) = w[e] else { unreachable!() };
        let body = &w[s..e];
        let n1 = body.iter().take_while(|&&l| l == Letter::L(1) || l == Letter::R(1)).count();
        let n2 = body.len() - n1;
        let ok = n1 % 2 == 0
            && n2 % 2 == 0
            && body[..n1].chunks(2).all(|p| p == [Letter::L(1), Letter::R(1)])
            && body[n1..].chunks(2).all(|p| p == [Letter::L(2), Letter::R(2)]);
        if !ok {
            return Err(Error::invalid(format!("malformed block `{}`", show_word(&w[s..=e]))));
        }
        out.push(Config::new(n1 / 2, n2 / 2, j));
    }
    Ok(out)
}

/// Positions of letter `l` inside block `b`.
fn positions(w: &[Letter], b: (usize, usize), l: Letter) -> Vec<usize> {
    (b.0..=b.1).filter(|&k| w[k] == l).collect()
}

/// The canonical matching extension: for each step and counter, the `k`-th
/// left vertex of one block is matched with the `k`-th right vertex of the
/// next, as far as both exist.
pub fn build_matching_extension(w: &[Letter], p: &CounterProgram) -> Result<Structure> {
    let configs = decode_word(w)?;
    let run = run_machine(p, configs.len().saturating_sub(1));
    if !run.halted || run.configs != configs {
        return Err(Error::invalid("word is not the encoding of a halting run"));
    }
    let mut a = word_structure(w, p.len())?;
    let bs = blocks(w)?;
    for pair in bs.windows(2) {
        for c in 1..=2u8 {
            let left = positions(w, pair[0], Letter::L(c));
            let right = positions(w, pair[1], Letter::R(c));
            for (&u, &v) in left.iter().zip(&right) {
                a.add("E", &[u, v])?;
                a.add("E", &[v, u])?;
            }
        }
    }
    Ok(a)
}

struct Words<'a> {
    fresh: Fresh,
    l: usize,
    p: &'a CounterProgram,
}

impl Words<'_> {
    fn v(&mut self) -> Var {
        self.fresh.var()
    }

    fn is(&self, name: &str, x: &Var) -> Formula {
        Formula::atom(name, &[x.clone()])
    }

    fn instr(&self, x: &Var) -> Formula {
        Formula::or((1..=self.l).map(|j| self.is(&format!("I{j}"), x)).collect())
    }

    fn lt(&self, a: &Var, b: &Var) -> Formula {
        Formula::and2(Formula::leq(a, b), Formula::neq(a, b))
    }

    fn succ(&mut self, a: &Var, b: &Var) -> Formula {
        let z = self.v();
        Formula::and2(self.lt(a, b), Formula::not(Formula::exists(&z, Formula::and2(self.lt(a, &z), self.lt(&z, b)))))
    }

    /// `x` lies in the block whose instruction vertex is `i`.
    fn within(&mut self, x: &Var, i: &Var) -> Formula {
        let z = self.v();
        let earlier = Formula::and(vec![self.instr(&z), Formula::leq(x, &z), self.lt(&z, i)]);
        Formula::and2(Formula::leq(x, i), Formula::not(Formula::exists(&z, earlier)))
    }

    /// `i` and `k` are consecutive instruction vertices.
    fn next(&mut self, i: &Var, k: &Var) -> Formula {
        let z = self.v();
        let between = Formula::and(vec![self.instr(&z), self.lt(i, &z), self.lt(&z, k)]);
        Formula::and(vec![self.instr(i), self.instr(k), self.lt(i, k), Formula::not(Formula::exists(&z, between))])
    }

    fn matched(&mut self, x: &Var) -> Formula {
        let z = self.v();
        Formula::exists(&z, Formula::atom("E", &[x.clone(), z.clone()]))
    }

    fn any(&mut self, name: &str, i: &Var) -> Formula {
        let x = self.v();
        let inside = self.within(&x, i);
        Formula::exists(&x, Formula::and2(inside, self.is(name, &x)))
    }

    fn all_matched(&mut self, name: &str, i: &Var) -> Formula {
        let x = self.v();
        let inside = self.within(&x, i);
        let m = self.matched(&x);
        Formula::forall(&x, Formula::implies(Formula::and2(inside, self.is(name, &x)), m))
    }

    fn one_unmatched(&mut self, name: &str, i: &Var) -> Formula {
        let (x, y) = (self.v(), self.v());
        let (ix, iy) = (self.within(&x, i), self.within(&y, i));
        let (mx, my) = (self.matched(&x), self.matched(&y));
        let other = Formula::implies(Formula::and(vec![iy, self.is(name, &y), Formula::not(my)]), Formula::eq(&y, &x));
        Formula::exists(&x, Formula::and(vec![ix, self.is(name, &x), Formula::not(mx), Formula::forall(&y, other)]))
    }

    /// Left vertices of counter `c` in block `i` are matched bijectively with
    /// right vertices in block `k`.
    fn carried(&mut self, c: u8, i: &Var, k: &Var) -> Formula {
        Formula::and2(self.all_matched(&format!("C{c}L"), i), self.all_matched(&format!("C{c}R"), k))
    }

    fn step(&mut self, j: usize, i: &Var, k: &Var) -> Formula {
        match self.p.get(j) {
            Instr::Inc(c) => {
                let o = 3 - c;
                Formula::and(vec![
                    self.is(&format!("I{}", j + 1), k),
                    self.all_matched(&format!("C{c}L"), i),
                    self.one_unmatched(&format!("C{c}R"), k),
                    self.carried(o, i, k),
                ])
            }
            Instr::Dec(c, j0, j1) => {
                let o = 3 - c;
                let l = format!("C{c}L");
                let zero = Formula::and(vec![
                    Formula::not(self.any(&l, i)),
                    Formula::not(self.any(&l, k)),
                    self.is(&format!("I{j0}"), k),
                ]);
                let pos = Formula::and(vec![
                    self.any(&l, i),
                    self.all_matched(&format!("C{c}R"), k),
                    self.one_unmatched(&l, i),
                    self.is(&format!("I{j1}"), k),
                ]);
                Formula::and2(self.carried(o, i, k), Formula::or2(zero, pos))
            }
            Instr::Halt => Formula::ff(),
        }
    }
}

fn letters(l: usize) -> Vec<Letter> {
    let mut out = vec![Letter::L(1), Letter::R(1), Letter::L(2), Letter::R(2)];
    out.extend((1..=l).map(Letter::I));
    out
}

/// A sentence over `signature(l)` with order whose models are exactly the
/// matching extensions of the run word of `p`.
pub fn build_sentence(p: &CounterProgram) -> Formula {
    let (shape, steps) = sentence_parts(p);
    Formula::and2(shape, steps)
}

/// The shape conjuncts (colouring, degree, word form, edge placement) and the
/// step conjuncts.
fn sentence_parts(p: &CounterProgram) -> (Formula, Formula) {
    let l = p.len();
    let mut b = Words { fresh: Fresh::new(), l, p };
    let (x, y, z) = (b.v(), b.v(), b.v());
    let names: Vec<String> = letters(l).iter().map(colour).collect();
    let mut shape = Vec::new();

    let one_colour: Vec<Formula> = names
        .iter()
        .map(|a| {
            let others = names.iter().filter(|o| *o != a).map(|o| Formula::not(b.is(o, &x)));
            Formula::and(std::iter::once(b.is(a, &x)).chain(others).collect())
        })
        .collect();
    shape.push(Formula::forall(&x, Formula::or(one_colour)));
    let exy = Formula::atom("E", &[x.clone(), y.clone()]);
    shape.push(Formula::forall_many(
        &[x.clone(), y.clone()],
        Formula::implies(exy.clone(), Formula::and2(Formula::atom("E", &[y.clone(), x.clone()]), Formula::neq(&x, &y))),
    ));
    shape.push(Formula::forall_many(
        &[x.clone(), y.clone(), z.clone()],
        Formula::implies(Formula::and2(exy.clone(), Formula::atom("E", &[x.clone(), z.clone()])), Formula::eq(&y, &z)),
    ));

    let first = Formula::forall(&y, Formula::leq(&x, &y));
    let last = Formula::forall(&y, Formula::leq(&y, &x));
    shape.push(Formula::exists(&x, Formula::and2(first.clone(), b.is("I1", &x))));
    shape.push(Formula::exists(&x, Formula::and2(last.clone(), b.is(&format!("I{l}"), &x))));
    shape.push(Formula::forall(&x, Formula::implies(b.is(&format!("I{l}"), &x), last)));

    let s = b.succ(&x, &y);
    let after_unit = |b: &Words, c: u8| {
        let mut alts = vec![b.is("C2L", &y), b.instr(&y)];
        if c == 1 {
            alts.push(b.is("C1L", &y));
        }
        Formula::or(alts)
    };
    let rules = Formula::and(vec![
        Formula::implies(b.is("C1L", &x), b.is("C1R", &y)),
        Formula::implies(b.is("C2L", &x), b.is("C2R", &y)),
        Formula::implies(b.is("C1R", &x), after_unit(&b, 1)),
        Formula::implies(b.is("C2R", &x), after_unit(&b, 2)),
        Formula::implies(b.instr(&x), after_unit(&b, 1)),
    ]);
    shape.push(Formula::forall_many(&[x.clone(), y.clone()], Formula::implies(s, rules)));

    // Edges join a left vertex with the same counter's right vertex in the
    // next block.
    let (i, k) = (b.v(), b.v());
    let mut placements = Vec::new();
    for c in 1..=2u8 {
        for (u, v) in [(&x, &y), (&y, &x)] {
            let (iu, kv) = (b.within(u, &i), b.within(v, &k));
            placements.push(Formula::and(vec![b.is(&format!("C{c}L"), u), iu, b.is(&format!("C{c}R"), v), kv]));
        }
    }
    let nik = b.next(&i, &k);
    let placed = Formula::exists_many(&[i.clone(), k.clone()], Formula::and2(nik, Formula::or(placements)));
    shape.push(Formula::forall_many(&[x.clone(), y.clone()], Formula::implies(exy, placed)));

    let mut steps = Vec::new();
    for j in 1..l {
        let (i, k) = (b.v(), b.v());
        let head = Formula::and2(b.is(&format!("I{j}"), &i), b.next(&i, &k));
        let body = b.step(j, &i, &k);
        steps.push(Formula::forall_many(&[i, k], Formula::implies(head, body)));
    }
    (Formula::and(shape), Formula::and(steps))
}

/// `phi & exists x. forall y. (x <= y & P(x))` over the signature extended by
/// a fresh unary `P`.
pub fn invariance_reduction(sig: &Signature, phi: &Formula) -> Result<(Signature, Formula)> {
    if sig.index_of("P").is_some() {
        return Err(Error::invalid("symbol `P` already in the signature"));
    }
    let mut syms = sig.symbols().to_vec();
    syms.push(("P".to_string(), 1));
    let mut fresh = Fresh::avoiding(phi);
    let (x, y) = (fresh.var(), fresh.var());
    let marked_first =
        Formula::exists(&x, Formula::forall(&y, Formula::and2(Formula::leq(&x, &y), Formula::atom("P", &[x.clone()]))));
    Ok((Signature::new(syms)?, Formula::and2(phi.clone(), marked_first)))
}

/// The run word of a halting `p`, read off a model.
pub fn decode_model(a: &Structure) -> Result<Vec<Letter>> {
    let order = a.order().ok_or(Error::MissingOrder)?;
    let l = a.sig().len() - 5;
    let mut w = Vec::new();
    for &e in order {
        let found: Vec<Letter> = letters(l).into_iter().filter(|t| a.holds(a.sig().index_of(&colour(t)).unwrap(), &[e])).collect();
        match found.as_slice() {
            [t] => w.push(*t),
            _ => return Err(Error::invalid(format!("element {e} does not carry exactly one colour"))),
        }
    }
    Ok(w)
}

/// Outcome of a bounded model search.
#[derive(Debug, Clone)]
pub struct Search {
    pub model: Option<Structure>,
    pub words: usize,
    pub candidates: usize,
    pub max_size: usize,
}

/// Words of length at most `max` satisfying the shape conjuncts.
fn shaped_words(l: usize, max: usize) -> Vec<Vec<Letter>> {
    let mut out = Vec::new();
    let mut stack: Vec<Vec<Letter>> = vec![vec![Letter::I(1)]];
    while let Some(w) = stack.pop() {
        if w.last() == Some(&Letter::I(l)) {
            out.push(w);
            continue;
        }
        let room = max.saturating_sub(w.len());
        // Append one block: (1L 1R)^a (2L 2R)^b j.
        for a in 0..=room / 2 {
            for b in 0..=room / 2 {
                if 2 * a + 2 * b + 1 > room {
                    continue;
                }
                for j in 1..=l {
                    let mut nw = w.clone();
                    nw.extend(encode_config(&Config::new(a, b, j)));
                    stack.push(nw);
                }
            }
        }
    }
    if l == 1 {
        out.retain(|w| w.len() == 1);
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out.dedup();
    out
}

/// All partial matchings between `left` and `right`.
fn matchings(left: &[usize], right: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let Some((&u, rest)) = left.split_first() else { return vec![Vec::new()] };
    let mut out = matchings(rest, right);
    for (k, &v) in right.iter().enumerate() {
        let mut others = right.to_vec();
        others.remove(k);
        for mut m in matchings(rest, &others) {
            m.push((u, v));
            out.push(m);
        }
    }
    out
}

/// Searches models of `build_sentence(p)` with at most `max_size` elements.
/// Only structures meeting the shape conjuncts are generated, which every
/// model does; the full sentence is then evaluated on each.
pub fn find_model(p: &CounterProgram, max_size: usize, budget: &Budget) -> Result<Search> {
    let phi = build_sentence(p);
    let words = shaped_words(p.len(), max_size);
    let mut candidates = 0;
    for w in &words {
        let base = word_structure(w, p.len())?;
        let bs = blocks(w)?;
        let mut slots: Vec<Vec<Vec<(usize, usize)>>> = Vec::new();
        for pair in bs.windows(2) {
            for c in 1..=2u8 {
                slots.push(matchings(&positions(w, pair[0], Letter::L(c)), &positions(w, pair[1], Letter::R(c))));
            }
        }
        let mut pick = vec![0usize; slots.len()];
        loop {
            budget.check("model search")?;
            candidates += 1;
            let mut a = base.clone();
            for (s, &k) in slots.iter().zip(&pick) {
                for &(u, v) in &s[k] {
                    a.add("E", &[u, v])?;
                    a.add("E", &[v, u])?;
                }
            }
            if eval_sentence(&a, &phi)? {
                return Ok(Search { model: Some(a), words: words.len(), candidates, max_size });
            }
            let mut pos = 0;
            while pos < pick.len() {
                pick[pos] += 1;
                if pick[pos] < slots[pos].len() {
                    break;
                }
                pick[pos] = 0;
                pos += 1;
            }
            if pos == pick.len() {
                break;
            }
        }
    }
    Ok(Search { model: None, words: words.len(), candidates, max_size })
}
