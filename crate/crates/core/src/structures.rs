//! Finite relational structures, signatures and the removal expansion.
//!
//! A [`Structure`] has universe `0..n`, one tuple set per symbol of its
//! [`Signature`], and optionally a linear order given as the list of elements
//! in ascending position.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// Ordered list of relation symbols with arities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    symbols: Arc<Vec<(String, usize)>>,
}

impl Signature {
    pub fn new(symbols: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (name, arity) in &symbols {
            if *arity == 0 {
                return Err(Error::invalid(format!("symbol `{name}` has arity 0")));
            }
            if !valid_symbol_name(name) {
                return Err(Error::invalid(format!("bad symbol name `{name}`")));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate symbol `{name}`")));
            }
        }
        Ok(Signature { symbols: Arc::new(symbols) })
    }

    /// Convenience constructor for literal signatures; panics on bad input.
    pub fn of(symbols: &[(&str, usize)]) -> Self {
        Signature::new(symbols.iter().map(|(n, a)| (n.to_string(), *a)).collect())
            .expect("valid signature literal")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[(String, usize)] {
        &self.symbols
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|(n, _)| n == name)
    }

    pub fn arity(&self, idx: usize) -> usize {
        self.symbols[idx].1
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.symbols[idx].0
    }

    /// The signature of removal expansions: one symbol `R__{I}` of arity |I|
    /// for every symbol `R` and nonempty position set `I`.
    pub fn expand(&self) -> Signature {
        let mut out = Vec::new();
        for (name, k) in self.symbols.iter() {
            for mask in 1u32..(1u32 << k) {
                let idx: Vec<usize> = (0..*k).filter(|i| mask >> i & 1 == 1).collect();
                out.push((expanded_name(name, &idx), idx.len()));
            }
        }
        Signature { symbols: Arc::new(out) }
    }

    pub fn max_arity(&self) -> usize {
        self.symbols.iter().map(|s| s.1).max().unwrap_or(0)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.symbols.iter().map(|(n, a)| format!("{n}/{a}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Name of the expanded symbol for `name` and zero-based positions `idx`.
pub fn expanded_name(name: &str, idx: &[usize]) -> String {
    let inner: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
    format!("{name}__{{{}}}", inner.join(","))
}

/// Splits `R__{1,3}` into (`R`, [0, 2]). Only the outermost suffix is removed.
pub fn split_expanded_name(name: &str) -> Option<(&str, Vec<usize>)> {
    if !name.ends_with('}') {
        return None;
    }
    let open = name.rfind("__{")?;
    let base = &name[..open];
    let inner = &name[open + 3..name.len() - 1];
    let mut idx = Vec::new();
    for part in inner.split(',') {
        let v: usize = part.parse().ok()?;
        if v == 0 {
            return None;
        }
        idx.push(v - 1);
    }
    if base.is_empty() {
        return None;
    }
    Some((base, idx))
}

/// Symbol names: an uppercase letter followed by alphanumerics or `_`, then
/// any number of `__{i,j,..}` suffixes.
pub fn valid_symbol_name(name: &str) -> bool {
    let mut rest = name;
    while let Some((base, _)) = split_expanded_name(rest) {
        rest = base;
    }
    let mut chars = rest.chars();
    match chars.next() {
        Some(c) if c.is_ascii_uppercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Atomic type of a single element: which `R(a,..,a)` hold, per symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomicType(pub Vec<bool>);

impl AtomicType {
    pub fn render(&self, sig: &Signature) -> String {
        let parts: Vec<String> = sig
            .symbols()
            .iter()
            .zip(&self.0)
            .map(|((n, _), b)| format!("{}{}", if *b { "" } else { "!" }, n))
            .collect();
        format!("[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Structure {
    sig: Signature,
    n: usize,
    rels: Vec<BTreeSet<Vec<usize>>>,
    order: Option<Vec<usize>>,
}

impl Structure {
    pub fn new(sig: Signature, n: usize) -> Self {
        let rels = vec![BTreeSet::new(); sig.len()];
        Structure { sig, n, rels, order: None }
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn relation(&self, idx: usize) -> &BTreeSet<Vec<usize>> {
        &self.rels[idx]
    }

    pub fn relation_by_name(&self, name: &str) -> Option<&BTreeSet<Vec<usize>>> {
        self.sig.index_of(name).map(|i| &self.rels[i])
    }

    pub fn add_tuple(&mut self, idx: usize, tuple: Vec<usize>) -> Result<()> {
        let arity = self.sig.arity(idx);
        if tuple.len() != arity {
            return Err(Error::Arity {
                name: self.sig.name(idx).to_string(),
                expected: arity,
                got: tuple.len(),
            });
        }
        if let Some(&bad) = tuple.iter().find(|&&e| e >= self.n) {
            return Err(Error::ElementOutOfRange(bad));
        }
        self.rels[idx].insert(tuple);
        Ok(())
    }

    pub fn add(&mut self, name: &str, tuple: &[usize]) -> Result<()> {
        let idx = self.sig.index_of(name).ok_or_else(|| Error::UnknownSymbol(name.to_string()))?;
        self.add_tuple(idx, tuple.to_vec())
    }

    pub fn holds(&self, idx: usize, tuple: &[usize]) -> bool {
        self.rels[idx].contains(tuple)
    }

    pub fn tuple_count(&self) -> usize {
        self.rels.iter().map(|r| r.len()).sum()
    }

    /// Elements in ascending order position, if ordered.
    pub fn order(&self) -> Option<&[usize]> {
        self.order.as_deref()
    }

    pub fn is_ordered(&self) -> bool {
        self.order.is_some()
    }

    /// Position of each element in the order.
    pub fn order_positions(&self) -> Option<Vec<usize>> {
        self.order.as_ref().map(|ord| {
            let mut pos = vec![0; self.n];
            for (i, &e) in ord.iter().enumerate() {
                pos[e] = i;
            }
            pos
        })
    }

    pub fn with_order(&self, order: Vec<usize>) -> Result<Structure> {
        check_permutation(&order, self.n)?;
        let mut s = self.clone();
        s.order = Some(order);
        Ok(s)
    }

    pub fn with_natural_order(&self) -> Structure {
        let mut s = self.clone();
        s.order = Some((0..self.n).collect());
        s
    }

    pub fn without_order(&self) -> Structure {
        let mut s = self.clone();
        s.order = None;
        s
    }

    pub fn atomic_type(&self, a: usize) -> AtomicType {
        AtomicType(
            (0..self.sig.len())
                .map(|i| self.rels[i].contains(&vec![a; self.sig.arity(i)]))
                .collect(),
        )
    }

    /// Gaifman graph as sorted neighbour lists (no self loops).
    pub fn gaifman(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n];
        for rel in &self.rels {
            for t in rel {
                for &a in t {
                    for &b in t {
                        if a != b {
                            adj[a].insert(b);
                        }
                    }
                }
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Gaifman graph as bit masks; requires at most 64 elements.
    pub fn gaifman_masks(&self) -> Result<Vec<u64>> {
        if self.n > 64 {
            return Err(Error::budget(format!("structure with {} elements exceeds 64", self.n)));
        }
        Ok(self
            .gaifman()
            .into_iter()
            .map(|nb| nb.into_iter().fold(0u64, |m, b| m | 1 << b))
            .collect())
    }

    /// Connected components of the Gaifman graph, each sorted, listed by
    /// smallest element.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.gaifman();
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut i = 0;
            while i < comp.len() {
                let v = comp[i];
                i += 1;
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.n > 0 && self.components().len() == 1
    }

    /// Induced substructure on `elems` (kept in the given order as new labels
    /// 0..). The order, if any, is restricted.
    pub fn induced(&self, elems: &[usize]) -> Structure {
        let mut map = vec![usize::MAX; self.n];
        for (i, &e) in elems.iter().enumerate() {
            map[e] = i;
        }
        let mut s = Structure::new(self.sig.clone(), elems.len());
        for (ri, rel) in self.rels.iter().enumerate() {
            for t in rel {
                if t.iter().all(|&a| map[a] != usize::MAX) {
                    s.rels[ri].insert(t.iter().map(|&a| map[a]).collect());
                }
            }
        }
        if let Some(ord) = &self.order {
            s.order = Some(ord.iter().filter(|&&a| map[a] != usize::MAX).map(|&a| map[a]).collect());
        }
        s
    }

    /// The removal expansion `A^[r]` over the expanded signature, together
    /// with the map from new labels to old elements. The order, if any, is
    /// restricted.
    pub fn remove_and_expand(&self, r: usize) -> Result<(Structure, Vec<usize>)> {
        if r >= self.n {
            return Err(Error::ElementOutOfRange(r));
        }
        let sig2 = self.sig.expand();
        let keep: Vec<usize> = (0..self.n).filter(|&a| a != r).collect();
        let mut map = vec![usize::MAX; self.n];
        for (i, &e) in keep.iter().enumerate() {
            map[e] = i;
        }
        let mut s = Structure::new(sig2.clone(), keep.len());
        for (ri, rel) in self.rels.iter().enumerate() {
            let name = self.sig.name(ri);
            for t in rel {
                let idx: Vec<usize> = (0..t.len()).filter(|&i| t[i] != r).collect();
                if idx.is_empty() {
                    continue;
                }
                let sym = sig2.index_of(&expanded_name(name, &idx)).expect("expanded symbol");
                s.rels[sym].insert(idx.iter().map(|&i| map[t[i]]).collect());
            }
        }
        if let Some(ord) = &self.order {
            s.order = Some(ord.iter().filter(|&&a| a != r).map(|&a| map[a]).collect());
        }
        Ok((s, keep))
    }

    /// Disjoint union; elements of `other` are shifted by `self.size()`.
    /// If both are ordered the result is the ordered sum.
    pub fn disjoint_union(&self, other: &Structure) -> Result<Structure> {
        if self.sig != other.sig {
            return Err(Error::invalid("disjoint union of structures over different signatures"));
        }
        let off = self.n;
        let mut s = self.clone();
        s.n += other.n;
        for (ri, rel) in other.rels.iter().enumerate() {
            for t in rel {
                s.rels[ri].insert(t.iter().map(|a| a + off).collect());
            }
        }
        s.order = match (&self.order, &other.order) {
            (Some(a), Some(b)) => Some(a.iter().copied().chain(b.iter().map(|x| x + off)).collect()),
            (None, None) => None,
            _ => return Err(Error::invalid("union of an ordered and an unordered structure")),
        };
        Ok(s)
    }

    /// `n` disjoint copies (ordered sum when ordered).
    pub fn power(&self, n: usize) -> Structure {
        let mut s = Structure::new(self.sig.clone(), 0);
        if self.order.is_some() {
            s.order = Some(Vec::new());
        }
        for _ in 0..n {
            s = s.disjoint_union(self).expect("same signature");
        }
        s
    }

    pub fn union_all(sig: &Signature, parts: &[Structure], ordered: bool) -> Result<Structure> {
        let mut s = Structure::new(sig.clone(), 0);
        if ordered {
            s.order = Some(Vec::new());
        }
        for p in parts {
            s = s.disjoint_union(p)?;
        }
        Ok(s)
    }

    /// Relabels elements: element `a` becomes `perm[a]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Structure> {
        check_permutation(perm, self.n)?;
        let mut s = Structure::new(self.sig.clone(), self.n);
        for (ri, rel) in self.rels.iter().enumerate() {
            for t in rel {
                s.rels[ri].insert(t.iter().map(|&a| perm[a]).collect());
            }
        }
        s.order = self.order.as_ref().map(|o| o.iter().map(|&a| perm[a]).collect());
        Ok(s)
    }

    /// Graph mode: a single binary symbol interpreted symmetrically and
    /// irreflexively.
    pub fn is_graph(&self) -> bool {
        if self.sig.len() != 1 || self.sig.arity(0) != 2 {
            return false;
        }
        self.rels[0].iter().all(|t| t[0] != t[1] && self.rels[0].contains(&vec![t[1], t[0]]))
    }

    /// Builds a graph-mode structure from an undirected edge list.
    pub fn graph(sig: &Signature, n: usize, edges: &[(usize, usize)]) -> Result<Structure> {
        if sig.len() != 1 || sig.arity(0) != 2 {
            return Err(Error::invalid("graph mode needs a single binary symbol"));
        }
        let mut s = Structure::new(sig.clone(), n);
        for &(a, b) in edges {
            if a == b {
                return Err(Error::invalid("graph mode forbids loops"));
            }
            s.add_tuple(0, vec![a, b])?;
            s.add_tuple(0, vec![b, a])?;
        }
        Ok(s)
    }

    /// Canonical text rendering (see [`parse_structure`]).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, k) in self.sig.symbols() {
            out.push_str(&format!("sig {name} {k}\n"));
        }
        out.push_str(&format!("universe {}\n", self.n));
        for (ri, rel) in self.rels.iter().enumerate() {
            for t in rel {
                let parts: Vec<String> = t.iter().map(|a| a.to_string()).collect();
                out.push_str(&format!("rel {} {}\n", self.sig.name(ri), parts.join(" ")));
            }
        }
        if let Some(ord) = &self.order {
            let parts: Vec<String> = ord.iter().map(|a| a.to_string()).collect();
            if parts.is_empty() {
                out.push_str("order\n");
            } else {
                out.push_str(&format!("order {}\n", parts.join(" ")));
            }
        }
        out
    }

    /// Canonical form under isomorphism of the unordered structure.
    pub fn canonical_form(&self) -> Result<CanonicalForm> {
        crate::canon::canonical_form(self)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub use crate::canon::CanonicalForm;

fn check_permutation(p: &[usize], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::invalid(format!("expected a permutation of {n} elements, got {}", p.len())));
    }
    let mut seen = vec![false; n];
    for &a in p {
        if a >= n || seen[a] {
            return Err(Error::invalid("not a permutation"));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Parses the structure text format:
///
/// ```text
/// # comment
/// sig E 2
/// universe 3
/// rel E 0 1
/// order 2 0 1
/// ```
pub fn parse_structure(text: &str) -> Result<Structure> {
    let mut symbols = Vec::new();
    let mut universe: Option<usize> = None;
    let mut rels: Vec<(usize, String, Vec<usize>)> = Vec::new();
    let mut order: Option<Vec<usize>> = None;
    let perr = |line: usize, msg: String| Error::Parse { line, col: 1, msg };
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let nums = |ts: &[&str]| -> Result<Vec<usize>> {
            ts.iter()
                .map(|t| t.parse::<usize>().map_err(|_| perr(line_no, format!("expected a number, got `{t}`"))))
                .collect()
        };
        match toks[0] {
            "sig" => {
                if toks.len() != 3 {
                    return Err(perr(line_no, "expected `sig NAME ARITY`".into()));
                }
                if universe.is_some() {
                    return Err(perr(line_no, "`sig` after `universe`".into()));
                }
                let k = nums(&toks[2..3])?[0];
                symbols.push((toks[1].to_string(), k));
            }
            "universe" => {
                if toks.len() != 2 || universe.is_some() {
                    return Err(perr(line_no, "expected a single `universe N`".into()));
                }
                universe = Some(nums(&toks[1..2])?[0]);
            }
            "rel" => {
                if toks.len() < 2 {
                    return Err(perr(line_no, "expected `rel NAME e...`".into()));
                }
                rels.push((line_no, toks[1].to_string(), nums(&toks[2..])?));
            }
            "order" => {
                if order.is_some() {
                    return Err(perr(line_no, "duplicate `order`".into()));
                }
                order = Some(nums(&toks[1..])?);
            }
            other => return Err(perr(line_no, format!("unknown directive `{other}`"))),
        }
    }
    let n = universe.ok_or_else(|| perr(0, "missing `universe`".into()))?;
    let sig = Signature::new(symbols)?;
    let mut s = Structure::new(sig, n);
    for (line_no, name, tuple) in rels {
        s.add(&name, &tuple).map_err(|e| perr(line_no, e.to_string()))?;
    }
    if let Some(ord) = order {
        s = s.with_order(ord)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Structure {
        Structure::graph(&Signature::of(&[("E", 2)]), 3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn expanded_signature_of_binary_symbol() {
        let s = Signature::of(&[("E", 2)]).expand();
        let names: Vec<_> = s.symbols().iter().map(|(n, a)| format!("{n}/{a}")).collect();
        assert_eq!(names, vec!["E__{1}/1", "E__{2}/1", "E__{1,2}/2"]);
        assert!(valid_symbol_name("E__{1,2}__{1}"));
        assert_eq!(split_expanded_name("E__{1,2}__{1}"), Some(("E__{1,2}", vec![0])));
    }

    #[test]
    fn removal_expansion_of_path_centre() {
        let (b, map) = path3().remove_and_expand(1).unwrap();
        assert_eq!(map, vec![0, 2]);
        assert_eq!(b.size(), 2);
        let e1 = b.relation_by_name("E__{1}").unwrap();
        let e2 = b.relation_by_name("E__{2}").unwrap();
        assert!(e1.contains(&vec![0]) && e1.contains(&vec![1]));
        assert!(e2.contains(&vec![0]) && e2.contains(&vec![1]));
        assert!(b.relation_by_name("E__{1,2}").unwrap().is_empty());
    }

    #[test]
    fn text_round_trip() {
        let a = path3().with_order(vec![2, 0, 1]).unwrap();
        let text = a.render();
        let b = parse_structure(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.render(), text);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(parse_structure("sig E 2\nuniverse 2\nrel E 0 5\n").is_err());
        assert!(parse_structure("sig E 2\nuniverse 2\nrel E 0\n").is_err());
        assert!(parse_structure("sig E 2\nuniverse 2\norder 0 0\n").is_err());
        assert!(parse_structure("sig E 2\n").is_err());
    }

    #[test]
    fn components_and_union() {
        let p = path3();
        let u = p.disjoint_union(&p).unwrap();
        assert_eq!(u.components(), vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(!u.is_connected());
        assert!(p.is_connected());
    }
}
