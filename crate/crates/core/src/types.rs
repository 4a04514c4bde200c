//! Rank-`q` types.
//!
//! A type is the tree of Ehrenfeucht–Fraïssé moves: the atomic diagram of
//! the current parameters, the set of types (one rank lower) reachable by
//! adding an element, and for MSO the set reachable by adding a set. Two
//! parametrised structures have the same rank-`q` type iff they are
//! `q`-equivalent. Nodes are hash-consed, so equality is pointer equality.
//!
//! Types of disjoint unions and ordered sums are computed symbolically by
//! [`compose`]: a parameter slot may be *absent*, meaning it lives in the
//! other summand, and the composite is assembled from the summands' trees.

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::eval::{subsets_by_size, RelIndex};
use crate::formulas::{Formula, Node};
use crate::structures::{AtomicType, Signature, Structure};
use rustc_hash::{FxHashMap, FxHasher};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Logic {
    FO,
    MSO,
}

impl Logic {
    pub fn name(self) -> &'static str {
        match self {
            Logic::FO => "FO",
            Logic::MSO => "MSO",
        }
    }

    pub fn parse(s: &str) -> Result<Logic> {
        match s.to_ascii_uppercase().as_str() {
            "FO" => Ok(Logic::FO),
            "MSO" => Ok(Logic::MSO),
            _ => Err(Error::invalid(format!("unknown logic `{s}`"))),
        }
    }
}

/// Signature, logic and whether the types carry an order.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct TypeCtx {
    pub sig: Signature,
    pub logic: Logic,
    pub ordered: bool,
}

fn ctx_of(sig: &Signature, logic: Logic, ordered: bool) -> Arc<TypeCtx> {
    static CTXS: OnceLock<Mutex<Vec<Arc<TypeCtx>>>> = OnceLock::new();
    let mut v = CTXS.get_or_init(Default::default).lock().unwrap();
    let want = TypeCtx { sig: sig.clone(), logic, ordered };
    if let Some(c) = v.iter().find(|c| ***c == want) {
        return c.clone();
    }
    let c = Arc::new(want);
    v.push(c.clone());
    c
}

pub struct TNode {
    ctx: Arc<TypeCtx>,
    q: u32,
    k: u16,
    m: u16,
    base: Box<[u64]>,
    elem: Box<[QType]>,
    sets: Box<[QType]>,
    hash: u64,
}

/// An interned rank-`q` type.
#[derive(Clone)]
pub struct QType(Arc<TNode>);

impl QType {
    fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn ctx(&self) -> &TypeCtx {
        &self.0.ctx
    }

    pub fn rank(&self) -> u32 {
        self.0.q
    }

    pub fn logic(&self) -> Logic {
        self.0.ctx.logic
    }

    pub fn is_ordered(&self) -> bool {
        self.0.ctx.ordered
    }

    /// Element parameter slots.
    pub fn elem_params(&self) -> usize {
        self.0.k as usize
    }

    pub fn set_params(&self) -> usize {
        self.0.m as usize
    }

    pub fn elem_children(&self) -> &[QType] {
        &self.0.elem
    }

    pub fn set_children(&self) -> &[QType] {
        &self.0.sets
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.0.ctx, self.0.k as usize, self.0.m as usize)
    }

    /// Canonical text form. Its lexicographic order is the fixed type order.
    /// Exponential in the rank; use [`QType::digest`] for identifiers.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.write_ser(&mut s);
        s
    }

    fn write_ser(&self, out: &mut String) {
        let n = &self.0;
        out.push_str(if n.ctx.logic == Logic::FO { "F" } else { "M" });
        out.push_str(&format!("{}[", n.q));
        for w in n.base.iter() {
            out.push_str(&format!("{w:016x}"));
        }
        out.push_str("](");
        for (i, c) in n.elem.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            c.write_ser(out);
        }
        out.push_str("){");
        for (i, c) in n.sets.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            c.write_ser(out);
        }
        out.push('}');
    }

    /// SHA-256 over the tree, hex encoded.
    pub fn digest(&self) -> String {
        static MEMO: OnceLock<Sharded<usize, String>> = OnceLock::new();
        let memo = MEMO.get_or_init(Sharded::new);
        if let Some(d) = memo.get(&self.id()) {
            return d;
        }
        let n = &self.0;
        let mut h = Sha256::new();
        h.update(format!("{}{}:{}:{}[", n.ctx.logic.name(), n.q, n.k, n.m));
        for w in n.base.iter() {
            h.update(w.to_be_bytes());
        }
        h.update(b"(");
        for c in n.elem.iter() {
            h.update(c.digest());
        }
        h.update(b"){");
        for c in n.sets.iter() {
            h.update(c.digest());
        }
        let d = hex::encode(h.finalize());
        memo.insert(self.id(), d.clone());
        d
    }

    /// Short identifier for listings.
    pub fn short_id(&self) -> String {
        self.digest()[..12].to_string()
    }

    /// Number of distinct nodes in the tree.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if seen.insert(t.id()) {
                stack.extend(t.0.elem.iter().cloned());
                stack.extend(t.0.sets.iter().cloned());
            }
        }
        seen.len()
    }
}

impl PartialEq for QType {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl Eq for QType {}

impl Hash for QType {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for QType {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QType {
    /// The fixed linear order on types: lexicographic on [`QType::serialize`],
    /// computed recursively without materialising the strings.
    fn cmp(&self, other: &Self) -> Ordering {
        type_compare(self, other)
    }
}

impl std::fmt::Debug for QType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "QType({}{}:{})", self.logic().name(), self.rank(), self.short_id())
    }
}

pub fn type_compare(a: &QType, b: &QType) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    let (x, y) = (&a.0, &b.0);
    // Header: logic letter then rank digits; then the hex diagram.
    let hx = (if x.ctx.logic == Logic::FO { 'F' } else { 'M' }, x.q.to_string());
    let hy = (if y.ctx.logic == Logic::FO { 'F' } else { 'M' }, y.q.to_string());
    hx.cmp(&hy)
        .then_with(|| x.base.len().cmp(&y.base.len()).reverse().then(Ordering::Equal))
        .then_with(|| cmp_words(&x.base, &y.base))
        .then_with(|| cmp_lists(&x.elem, &y.elem))
        .then_with(|| cmp_lists(&x.sets, &y.sets))
}

fn cmp_words(a: &[u64], b: &[u64]) -> Ordering {
    // Equal lengths in practice; hex strings compare like the words.
    for (x, y) in a.iter().zip(b) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn cmp_lists(a: &[QType], b: &[QType]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match type_compare(x, y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

// ---------------------------------------------------------------------------
// Interning and global memo tables.

const SHARDS: usize = 64;

struct Sharded<K, V> {
    shards: Vec<Mutex<FxHashMap<K, V>>>,
}

impl<K: Hash + Eq, V: Clone> Sharded<K, V> {
    fn new() -> Self {
        Sharded { shards: (0..SHARDS).map(|_| Mutex::new(FxHashMap::default())).collect() }
    }

    fn shard(&self, k: &K) -> &Mutex<FxHashMap<K, V>> {
        let mut h = FxHasher::default();
        k.hash(&mut h);
        &self.shards[(h.finish() >> 7) as usize % SHARDS]
    }

    fn get(&self, k: &K) -> Option<V> {
        self.shard(k).lock().unwrap().get(k).cloned()
    }

    fn insert(&self, k: K, v: V) {
        self.shard(&k).lock().unwrap().insert(k, v);
    }
}

fn interner() -> &'static Vec<Mutex<FxHashMap<u64, Vec<Arc<TNode>>>>> {
    static I: OnceLock<Vec<Mutex<FxHashMap<u64, Vec<Arc<TNode>>>>>> = OnceLock::new();
    I.get_or_init(|| (0..SHARDS).map(|_| Mutex::new(FxHashMap::default())).collect())
}

/// Total number of interned type nodes.
pub fn interned_nodes() -> usize {
    interner().iter().map(|s| s.lock().unwrap().values().map(|v| v.len()).sum::<usize>()).sum()
}

fn intern(ctx: Arc<TypeCtx>, q: u32, k: usize, m: usize, base: Vec<u64>, mut elem: Vec<QType>, mut sets: Vec<QType>) -> QType {
    elem.sort();
    elem.dedup();
    sets.sort();
    sets.dedup();
    let mut h = FxHasher::default();
    (Arc::as_ptr(&ctx) as usize, q, k, m).hash(&mut h);
    base.hash(&mut h);
    for c in &elem {
        h.write_u64(c.0.hash);
    }
    h.write_u8(0xfe);
    for c in &sets {
        h.write_u64(c.0.hash);
    }
    let hash = h.finish();
    let shard = &interner()[(hash >> 7) as usize % SHARDS];
    let mut map = shard.lock().unwrap();
    let bucket = map.entry(hash).or_default();
    for n in bucket.iter() {
        if Arc::ptr_eq(&n.ctx, &ctx)
            && n.q == q
            && n.k as usize == k
            && n.m as usize == m
            && *n.base == *base
            && *n.elem == *elem
            && *n.sets == *sets
        {
            return QType(n.clone());
        }
    }
    let node = Arc::new(TNode {
        ctx,
        q,
        k: k as u16,
        m: m as u16,
        base: base.into_boxed_slice(),
        elem: elem.into_boxed_slice(),
        sets: sets.into_boxed_slice(),
        hash,
    });
    bucket.push(node.clone());
    QType(node)
}

// ---------------------------------------------------------------------------
// Atomic diagrams.

/// Bit layout of the atomic diagram over `k` element and `m` set slots:
/// presence, equality (`k*k`), order (`k*k`, if ordered), one block of
/// `k^arity` per relation, membership (`m*k`).
#[derive(Clone)]
struct Layout {
    k: usize,
    m: usize,
    ordered: bool,
    arities: Vec<usize>,
    eq_off: usize,
    leq_off: usize,
    rel_off: Vec<usize>,
    mem_off: usize,
    total: usize,
}

impl Layout {
    fn new(ctx: &TypeCtx, k: usize, m: usize) -> Layout {
        let arities: Vec<usize> = ctx.sig.symbols().iter().map(|s| s.1).collect();
        let eq_off = k;
        let leq_off = eq_off + k * k;
        let mut off = leq_off + if ctx.ordered { k * k } else { 0 };
        let mut rel_off = Vec::new();
        for &a in &arities {
            rel_off.push(off);
            off += k.pow(a as u32);
        }
        let mem_off = off;
        let total = mem_off + m * k;
        Layout { k, m, ordered: ctx.ordered, arities, eq_off, leq_off, rel_off, mem_off, total }
    }

    fn words(&self) -> usize {
        self.total.div_ceil(64).max(1)
    }

    fn tuple_index(&self, t: &[usize]) -> usize {
        t.iter().fold(0, |acc, &s| acc * self.k + s)
    }

    /// Decodes a bit index into its property and slots.
    fn decode(&self, bit: usize) -> Prop {
        let k = self.k;
        if bit < self.eq_off {
            return Prop::Present(bit);
        }
        if bit < self.leq_off {
            let r = bit - self.eq_off;
            return Prop::Eq(r / k, r % k);
        }
        if bit < self.rel_off.first().copied().unwrap_or(self.mem_off) {
            let r = bit - self.leq_off;
            return Prop::Leq(r / k, r % k);
        }
        for (ri, &off) in self.rel_off.iter().enumerate().rev() {
            if bit >= off && bit < self.mem_off {
                let mut r = bit - off;
                let a = self.arities[ri];
                let mut t = vec![0; a];
                for i in (0..a).rev() {
                    t[i] = r % k;
                    r /= k;
                }
                return Prop::Rel(ri, t);
            }
        }
        let r = bit - self.mem_off;
        Prop::Mem(r / k, r % k)
    }

    fn encode(&self, p: &Prop) -> usize {
        match p {
            Prop::Present(i) => *i,
            Prop::Eq(i, j) => self.eq_off + i * self.k + j,
            Prop::Leq(i, j) => self.leq_off + i * self.k + j,
            Prop::Rel(ri, t) => self.rel_off[*ri] + self.tuple_index(t),
            Prop::Mem(x, i) => self.mem_off + x * self.k + i,
        }
    }
}

#[derive(Debug, Clone)]
enum Prop {
    Present(usize),
    Eq(usize, usize),
    Leq(usize, usize),
    Rel(usize, Vec<usize>),
    Mem(usize, usize),
}

fn get_bit(w: &[u64], i: usize) -> bool {
    w[i / 64] >> (i % 64) & 1 == 1
}

fn set_bit(w: &mut [u64], i: usize) {
    w[i / 64] |= 1 << (i % 64);
}

fn set_bits(w: &[u64]) -> impl Iterator<Item = usize> + '_ {
    w.iter().enumerate().flat_map(|(wi, &word)| {
        let mut x = word;
        std::iter::from_fn(move || {
            if x == 0 {
                return None;
            }
            let b = x.trailing_zeros() as usize;
            x &= x - 1;
            Some(wi * 64 + b)
        })
    })
}

struct StructView<'a> {
    a: &'a Structure,
    rels: Vec<RelIndex>,
    pos: Option<Vec<usize>>,
}

impl<'a> StructView<'a> {
    fn new(a: &'a Structure) -> Self {
        StructView { a, rels: (0..a.sig().len()).map(|i| RelIndex::build(a, i)).collect(), pos: a.order_positions() }
    }

    fn diagram(&self, lay: &Layout, elems: &[usize], sets: &[u64]) -> Vec<u64> {
        let k = lay.k;
        let mut w = vec![0u64; lay.words()];
        for i in 0..k {
            set_bit(&mut w, lay.encode(&Prop::Present(i)));
            for j in 0..k {
                if i < j && elems[i] == elems[j] {
                    set_bit(&mut w, lay.encode(&Prop::Eq(i, j)));
                }
                if lay.ordered && i != j {
                    let pos = self.pos.as_ref().expect("ordered view");
                    if pos[elems[i]] <= pos[elems[j]] {
                        set_bit(&mut w, lay.encode(&Prop::Leq(i, j)));
                    }
                }
            }
        }
        for (ri, &ar) in lay.arities.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let mut slots = vec![0usize; ar];
            let mut vals = vec![0usize; ar];
            loop {
                for (v, &s) in vals.iter_mut().zip(&slots) {
                    *v = elems[s];
                }
                if self.rels[ri].holds(&vals) {
                    set_bit(&mut w, lay.encode(&Prop::Rel(ri, slots.clone())));
                }
                let mut i = ar;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    slots[i] += 1;
                    if slots[i] < k {
                        break;
                    }
                    slots[i] = 0;
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
        }
        for (x, &s) in sets.iter().enumerate() {
            for (i, &e) in elems.iter().enumerate() {
                if s >> e & 1 == 1 {
                    set_bit(&mut w, lay.encode(&Prop::Mem(x, i)));
                }
            }
        }
        w
    }
}

// ---------------------------------------------------------------------------
// Brute-force types.

/// Rank-`q` type of `a` with element parameters `elems` and set parameters
/// `sets`, by exhaustive recursion. The type is ordered iff `a` is.
pub fn tp_with(logic: Logic, q: u32, a: &Structure, elems: &[usize], sets: &[u64]) -> Result<QType> {
    if logic == Logic::MSO && a.size() > crate::eval::MAX_SET_UNIVERSE {
        return Err(Error::budget(format!("MSO types over {} elements", a.size())));
    }
    if let Some(&e) = elems.iter().find(|&&e| e >= a.size()) {
        return Err(Error::ElementOutOfRange(e));
    }
    let ctx = ctx_of(a.sig(), logic, a.is_ordered());
    let view = StructView::new(a);
    let subsets = if logic == Logic::MSO { subsets_by_size(a.size()) } else { Vec::new() };
    let mut el = elems.to_vec();
    let mut st = sets.to_vec();
    Ok(tp_rec(&ctx, &view, &subsets, q, &mut el, &mut st))
}

pub fn tp(logic: Logic, q: u32, a: &Structure) -> Result<QType> {
    tp_with(logic, q, a, &[], &[])
}

fn tp_rec(ctx: &Arc<TypeCtx>, view: &StructView, subsets: &[u64], q: u32, el: &mut Vec<usize>, st: &mut Vec<u64>) -> QType {
    let lay = Layout::new(ctx, el.len(), st.len());
    let base = view.diagram(&lay, el, st);
    let mut elem = Vec::new();
    let mut sets = Vec::new();
    if q > 0 {
        for a in 0..view.a.size() {
            el.push(a);
            elem.push(tp_rec(ctx, view, subsets, q - 1, el, st));
            el.pop();
        }
        for &s in subsets {
            st.push(s);
            sets.push(tp_rec(ctx, view, subsets, q - 1, el, st));
            st.pop();
        }
    }
    intern(ctx.clone(), q, el.len(), st.len(), base, elem, sets)
}

/// Type of the empty structure.
pub fn empty_type(sig: &Signature, logic: Logic, q: u32, ordered: bool) -> QType {
    let mut e = Structure::new(sig.clone(), 0);
    if ordered {
        e = e.with_order(vec![]).expect("empty order");
    }
    tp(logic, q, &e).expect("empty structure")
}

// ---------------------------------------------------------------------------
// Symbolic operations.

/// Drops the last rank.
pub fn truncate(t: &QType) -> QType {
    assert!(t.rank() > 0, "cannot truncate a rank-0 type");
    static MEMO: OnceLock<Sharded<usize, QType>> = OnceLock::new();
    let memo = MEMO.get_or_init(Sharded::new);
    if let Some(r) = memo.get(&t.id()) {
        return r;
    }
    let n = &t.0;
    let (elem, sets) = if n.q > 1 {
        (n.elem.iter().map(truncate).collect(), n.sets.iter().map(truncate).collect())
    } else {
        (Vec::new(), Vec::new())
    };
    let r = intern(n.ctx.clone(), n.q - 1, n.k as usize, n.m as usize, n.base.to_vec(), elem, sets);
    memo.insert(t.id(), r.clone());
    r
}

/// Inserts an absent element slot at index `pos` (throughout the tree).
fn insert_absent(t: &QType, pos: usize) -> QType {
    static MEMO: OnceLock<Sharded<(usize, usize), QType>> = OnceLock::new();
    let memo = MEMO.get_or_init(Sharded::new);
    if let Some(r) = memo.get(&(t.id(), pos)) {
        return r;
    }
    let n = &t.0;
    let old = t.layout();
    let new = Layout::new(&n.ctx, n.k as usize + 1, n.m as usize);
    let shift = |s: usize| if s >= pos { s + 1 } else { s };
    let mut w = vec![0u64; new.words()];
    for bit in set_bits(&n.base) {
        let p = match old.decode(bit) {
            Prop::Present(i) => Prop::Present(shift(i)),
            Prop::Eq(i, j) => Prop::Eq(shift(i), shift(j)),
            Prop::Leq(i, j) => Prop::Leq(shift(i), shift(j)),
            Prop::Rel(ri, tu) => Prop::Rel(ri, tu.into_iter().map(shift).collect()),
            Prop::Mem(x, i) => Prop::Mem(x, shift(i)),
        };
        set_bit(&mut w, new.encode(&p));
    }
    let elem = n.elem.iter().map(|c| insert_absent(c, pos)).collect();
    let sets = n.sets.iter().map(|c| insert_absent(c, pos)).collect();
    let r = intern(n.ctx.clone(), n.q, n.k as usize + 1, n.m as usize, w, elem, sets);
    memo.insert((t.id(), pos), r.clone());
    r
}

fn absent_next(t: &QType) -> QType {
    insert_absent(&truncate(t), t.elem_params())
}

/// Type of the disjoint union (or, for ordered types, the ordered sum with
/// `a` first) of two structures given by their types. Parameter slots must
/// be present in at most one summand.
pub fn compose(a: &QType, b: &QType) -> QType {
    assert!(Arc::ptr_eq(&a.0.ctx, &b.0.ctx), "compose across contexts");
    assert!(a.0.q == b.0.q && a.0.k == b.0.k && a.0.m == b.0.m, "compose shape mismatch");
    static MEMO: OnceLock<Sharded<(usize, usize), QType>> = OnceLock::new();
    let memo = MEMO.get_or_init(Sharded::new);
    if let Some(r) = memo.get(&(a.id(), b.id())) {
        return r;
    }
    let lay = a.layout();
    let k = lay.k;
    let mut w = vec![0u64; lay.words()];
    for (x, y) in w.iter_mut().zip(a.0.base.iter().zip(b.0.base.iter())) {
        *x = y.0 | y.1;
    }
    let pa: Vec<bool> = (0..k).map(|i| get_bit(&a.0.base, i)).collect();
    let pb: Vec<bool> = (0..k).map(|i| get_bit(&b.0.base, i)).collect();
    debug_assert!(pa.iter().zip(&pb).all(|(x, y)| !(x & y)), "slot present in both summands");
    if lay.ordered {
        for i in 0..k {
            for j in 0..k {
                if pa[i] && pb[j] {
                    set_bit(&mut w, lay.encode(&Prop::Leq(i, j)));
                }
            }
        }
    }
    let q = a.0.q;
    let (mut elem, mut sets) = (Vec::new(), Vec::new());
    if q > 0 {
        let rb = absent_next(b);
        let ra = absent_next(a);
        elem.extend(a.0.elem.iter().map(|c| compose(c, &rb)));
        elem.extend(b.0.elem.iter().map(|c| compose(&ra, c)));
        for c1 in a.0.sets.iter() {
            for c2 in b.0.sets.iter() {
                sets.push(compose(c1, c2));
            }
        }
    }
    let r = intern(a.0.ctx.clone(), q, k, lay.m, w, elem, sets);
    memo.insert((a.id(), b.id()), r.clone());
    r
}

/// `t^n`: `n` copies, composed left to right.
pub fn power(t: &QType, n: usize) -> QType {
    let mut acc = empty_like(t);
    for _ in 0..n {
        acc = compose(&acc, t);
    }
    acc
}

/// Type of the empty structure in the same context and rank as `t`.
pub fn empty_like(t: &QType) -> QType {
    assert!(t.elem_params() == 0 && t.set_params() == 0, "empty_like on a parametrised type");
    empty_type(&t.ctx().sig, t.logic(), t.rank(), t.is_ordered())
}

/// Product of a sequence of types in the given order.
pub fn product(parts: &[QType], empty: &QType) -> QType {
    parts.iter().fold(empty.clone(), |acc, t| compose(&acc, t))
}

/// Pre-period `m >= 1` and period `pi` of `t^1, t^2, ...`: `t^m = t^(m+pi)`
/// with both minimal.
pub fn power_cycle(t: &QType, max_n: usize, budget: &Budget) -> Result<(usize, usize)> {
    let mut seen: FxHashMap<QType, usize> = FxHashMap::default();
    let mut cur = t.clone();
    for n in 1..=max_n {
        if let Some(&j) = seen.get(&cur) {
            return Ok((j, n - j));
        }
        seen.insert(cur.clone(), n);
        budget.check("power sequence")?;
        cur = compose(&cur, t);
    }
    Err(Error::budget(format!("power sequence did not repeat within {max_n} steps")))
}

/// Least `n >= 1` with `t^n = t^(n+1)`, if the powers become constant.
pub fn stabilization_threshold(t: &QType, max_n: usize, budget: &Budget) -> Result<Option<usize>> {
    let (m, pi) = power_cycle(t, max_n, budget)?;
    Ok(if pi == 1 { Some(m) } else { None })
}

/// Least `p >= 1` with `t^p = t^(2p)` for every `t` in `types`.
pub fn pumping_period(types: &[QType], max_n: usize, budget: &Budget) -> Result<usize> {
    let mut l = 1usize;
    let mut pre = 1usize;
    for t in types {
        let (m, pi) = power_cycle(t, max_n, budget)?;
        l = lcm(l, pi);
        pre = pre.max(m);
    }
    Ok(pre.div_ceil(l).max(1) * l)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

// ---------------------------------------------------------------------------
// Evaluating sentences on types.

/// Decides `t |= f` for a sentence of quantifier rank at most `rank(t)`.
pub fn eval_on_type(t: &QType, f: &Formula) -> Result<bool> {
    if t.elem_params() != 0 || t.set_params() != 0 {
        return Err(Error::invalid("eval_on_type expects a type without parameters"));
    }
    let mut env: BTreeMap<String, usize> = BTreeMap::new();
    type_eval(t, f, &mut env)
}

fn type_eval(t: &QType, f: &Formula, env: &mut BTreeMap<String, usize>) -> Result<bool> {
    let lay = t.layout();
    let slot = |env: &BTreeMap<String, usize>, v: &str| env.get(v).copied().ok_or_else(|| Error::UnboundVariable(v.to_string()));
    match f.node() {
        Node::True => Ok(true),
        Node::False => Ok(false),
        Node::Atom(r, args) => {
            let ri = t.ctx().sig.index_of(r).ok_or_else(|| Error::UnknownSymbol(r.to_string()))?;
            let slots = args.iter().map(|v| slot(env, v)).collect::<Result<Vec<_>>>()?;
            if slots.len() != lay.arities[ri] {
                return Err(Error::Arity { name: r.to_string(), expected: lay.arities[ri], got: slots.len() });
            }
            Ok(get_bit(&t.0.base, lay.encode(&Prop::Rel(ri, slots))))
        }
        Node::Eq(x, y) => {
            let (i, j) = (slot(env, x)?, slot(env, y)?);
            Ok(i == j || get_bit(&t.0.base, lay.encode(&Prop::Eq(i.min(j), i.max(j)))))
        }
        Node::Leq(x, y) => {
            if !lay.ordered {
                return Err(Error::MissingOrder);
            }
            let (i, j) = (slot(env, x)?, slot(env, y)?);
            Ok(i == j
                || get_bit(&t.0.base, lay.encode(&Prop::Leq(i, j)))
                || get_bit(&t.0.base, lay.encode(&Prop::Eq(i.min(j), i.max(j)))))
        }
        Node::SetAtom(x, y) => {
            let (s, i) = (slot(env, x)?, slot(env, y)?);
            Ok(get_bit(&t.0.base, lay.encode(&Prop::Mem(s, i))))
        }
        Node::Not(a) => Ok(!type_eval(t, a, env)?),
        Node::And(parts) => {
            for p in parts {
                if !type_eval(t, p, env)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Node::Or(parts) => {
            for p in parts {
                if type_eval(t, p, env)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Node::Implies(a, b) => Ok(!type_eval(t, a, env)? || type_eval(t, b, env)?),
        Node::Exists(x, b) | Node::Forall(x, b) | Node::ExistsSet(x, b) | Node::ForallSet(x, b) => {
            if t.rank() == 0 {
                return Err(Error::invalid("formula rank exceeds the type rank"));
            }
            let set = matches!(f.node(), Node::ExistsSet(..) | Node::ForallSet(..));
            if set && t.logic() != Logic::MSO {
                return Err(Error::invalid("set quantifier evaluated on a first-order type"));
            }
            let want = matches!(f.node(), Node::Exists(..) | Node::ExistsSet(..));
            let (kids, idx) = if set { (t.set_children(), t.set_params()) } else { (t.elem_children(), t.elem_params()) };
            let old = env.insert(x.to_string(), idx);
            let mut result = !want;
            for c in kids {
                if type_eval(c, b, env)? == want {
                    result = want;
                    break;
                }
            }
            match old {
                Some(o) => env.insert(x.to_string(), o),
                None => env.remove(&**x),
            };
            Ok(result)
        }
        Node::ExistsMod(..) => Err(Error::unsupported("counting quantifiers cannot be decided from a type")),
    }
}

// ---------------------------------------------------------------------------
// Atomic types.

/// Fixed order on atomic types: compare the sorted lists of symbols that
/// hold, shorter list first, then lexicographically.
pub fn atomic_compare(sig: &Signature, a: &AtomicType, b: &AtomicType) -> Ordering {
    let names = |t: &AtomicType| {
        let mut v: Vec<&str> = sig.symbols().iter().zip(&t.0).filter(|(_, &h)| h).map(|(s, _)| s.0.as_str()).collect();
        v.sort_unstable();
        v
    };
    let (x, y) = (names(a), names(b));
    x.len().cmp(&y.len()).then_with(|| x.cmp(&y))
}

// ---------------------------------------------------------------------------
// Type tables.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Types of unordered structures, closed under disjoint union.
    Unordered,
    /// Types of structures with their canonical `q`-order.
    QOrdered,
    /// Ordered sums of arbitrarily ordered connected structures.
    ComponentOrdered,
}

#[derive(Debug, Clone)]
pub struct TableEntry {
    pub ty: QType,
    pub rep: Structure,
}

#[derive(Debug, Clone)]
pub struct TypeTable {
    pub sig: Signature,
    pub logic: Logic,
    pub q: u32,
    pub d: usize,
    pub kind: TableKind,
    /// Types of connected structures, ascending in the type order.
    pub connected: Vec<TableEntry>,
    /// Every type found, ascending in the type order.
    pub all: Vec<TableEntry>,
    pub closed_under_union: bool,
    /// Largest connected structure enumerated.
    pub max_size: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub max_size: usize,
    pub graph_mode: bool,
    pub max_entries: usize,
    /// Skip the closure and only collect connected types.
    pub connected_only: bool,
}

impl TableOptions {
    pub fn new(max_size: usize) -> Self {
        TableOptions { max_size, graph_mode: false, max_entries: 20_000, connected_only: false }
    }

    pub fn graphs(max_size: usize) -> Self {
        TableOptions { graph_mode: true, ..TableOptions::new(max_size) }
    }
}

impl TypeTable {
    pub fn connected_types(&self) -> Vec<QType> {
        self.connected.iter().map(|e| e.ty.clone()).collect()
    }

    pub fn types(&self) -> Vec<QType> {
        self.all.iter().map(|e| e.ty.clone()).collect()
    }

    pub fn rep_of(&self, t: &QType) -> Option<&Structure> {
        self.all.iter().chain(&self.connected).find(|e| e.ty == *t).map(|e| &e.rep)
    }
}

fn connected_types_of(a: &Structure, logic: Logic, q: u32, kind: TableKind) -> Result<Vec<(QType, Structure)>> {
    Ok(match kind {
        TableKind::Unordered => vec![(tp(logic, q, a)?, a.clone())],
        TableKind::QOrdered => {
            let o = crate::qorder::q_order(logic, q, a)?;
            vec![(tp(logic, q, &o)?, o)]
        }
        TableKind::ComponentOrdered => {
            let mut v = Vec::new();
            for ord in crate::enumerate::all_orders(a.size()) {
                let o = a.with_order(ord)?;
                v.push((tp(logic, q, &o)?, o));
            }
            v
        }
    })
}

/// Types realised by structures of tree-depth at most `d`: connected ones
/// from exhaustive enumeration up to `opts.max_size`, then the closure under
/// composition. A closure cut short by `max_entries` or the budget is
/// returned with `closed_under_union` unset.
pub fn realized_types(
    sig: &Signature,
    logic: Logic,
    q: u32,
    d: usize,
    kind: TableKind,
    opts: TableOptions,
    budget: &Budget,
) -> Result<TypeTable> {
    let mut eopts = crate::enumerate::EnumOptions::new(opts.max_size).connected().td(d).min(1);
    eopts.graph_mode = opts.graph_mode;
    let structs = crate::enumerate::enum_structures(sig, eopts, budget)?;
    let mut conn: BTreeMap<QType, Structure> = BTreeMap::new();
    for a in &structs {
        budget.check("type table")?;
        for (t, rep) in connected_types_of(a, logic, q, kind)? {
            conn.entry(t).or_insert(rep);
        }
    }
    let connected: Vec<TableEntry> = conn.iter().map(|(t, r)| TableEntry { ty: t.clone(), rep: r.clone() }).collect();
    let ordered = kind != TableKind::Unordered;
    let mut table = TypeTable {
        sig: sig.clone(),
        logic,
        q,
        d,
        kind,
        connected,
        all: Vec::new(),
        closed_under_union: false,
        max_size: opts.max_size,
    };
    if opts.connected_only {
        return Ok(table);
    }
    let mut empty_rep = Structure::new(sig.clone(), 0);
    if ordered {
        empty_rep = empty_rep.with_order(vec![])?;
    }
    let empty = tp(logic, q, &empty_rep)?;
    let mut all: BTreeMap<QType, Structure> = BTreeMap::new();
    all.insert(empty.clone(), empty_rep.clone());
    let mut closed = true;
    match kind {
        TableKind::Unordered | TableKind::ComponentOrdered => {
            let mut queue = vec![(empty, empty_rep)];
            'bfs: while let Some((t, rep)) = queue.pop() {
                for g in &table.connected {
                    let u = compose(&t, &g.ty);
                    if all.contains_key(&u) {
                        continue;
                    }
                    if all.len() >= opts.max_entries || budget.exhausted() {
                        closed = false;
                        break 'bfs;
                    }
                    let r = rep.disjoint_union(&g.rep)?;
                    all.insert(u.clone(), r.clone());
                    queue.insert(0, (u, r));
                }
            }
        }
        TableKind::QOrdered => {
            // Sorted products with every multiplicity below pre-period plus period.
            let mut caps = Vec::new();
            for g in &table.connected {
                let (m, pi) = power_cycle(&g.ty, 4096, budget)?;
                caps.push(m + pi);
            }
            let total: f64 = caps.iter().map(|&c| c as f64).product();
            if total > opts.max_entries as f64 {
                closed = false;
            }
            let mut counts = vec![0usize; caps.len()];
            'vec: loop {
                if all.len() >= opts.max_entries || budget.exhausted() {
                    closed = false;
                    break;
                }
                let mut t = empty.clone();
                let mut parts = Vec::new();
                for (g, &c) in table.connected.iter().zip(&counts) {
                    for _ in 0..c {
                        t = compose(&t, &g.ty);
                        parts.push(g.rep.clone());
                    }
                }
                if !all.contains_key(&t) {
                    all.insert(t, Structure::union_all(sig, &parts, true)?);
                }
                for i in 0..counts.len() {
                    counts[i] += 1;
                    if counts[i] < caps[i] {
                        continue 'vec;
                    }
                    counts[i] = 0;
                }
                break;
            }
        }
    }
    table.all = all.into_iter().map(|(t, r)| TableEntry { ty: t, rep: r }).collect();
    table.closed_under_union = closed;
    Ok(table)
}

// ---------------------------------------------------------------------------
// Shrinking.

/// Threshold used to cap component multiplicities when shrinking.
fn union_threshold(t: &QType, budget: &Budget) -> Result<usize> {
    stabilization_threshold(t, 4096, budget)?
        .ok_or_else(|| Error::invalid("unordered powers of a type failed to stabilise"))
}

/// Induced substructure with the same rank-`q` type and at most the input
/// size: recurse through a root of each connected part and keep at most
/// threshold-many components of each type. The result is certified by
/// recomputing its type.
pub fn shrink_model(a: &Structure, logic: Logic, q: u32, budget: &Budget) -> Result<(Structure, Vec<usize>)> {
    if a.is_ordered() {
        return Err(Error::invalid("shrink_model works on unordered structures"));
    }
    let keep = shrink_elems(a, logic, q, budget)?;
    let b = a.induced(&keep);
    if tp(logic, q, &b)? != tp(logic, q, a)? {
        return Err(Error::Verification("shrunk structure changed its type".into()));
    }
    Ok((b, keep))
}

fn shrink_elems(a: &Structure, logic: Logic, q: u32, budget: &Budget) -> Result<Vec<usize>> {
    budget.check("shrink_model")?;
    let comps = a.components();
    if comps.len() == 1 {
        if a.size() == 1 {
            return Ok(vec![0]);
        }
        let roots = crate::treedepth::roots_of(a)?;
        let r = roots[0];
        let (b, map) = a.remove_and_expand(r)?;
        let inner = shrink_elems(&b, logic, q, budget)?;
        let mut keep: Vec<usize> = inner.into_iter().map(|i| map[i]).collect();
        keep.push(r);
        keep.sort_unstable();
        return Ok(keep);
    }
    let mut by_type: BTreeMap<QType, Vec<Vec<usize>>> = BTreeMap::new();
    for c in comps {
        let sub = a.induced(&c);
        let kept = shrink_elems(&sub, logic, q, budget)?;
        let kept_global: Vec<usize> = kept.iter().map(|&i| c[i]).collect();
        let t = tp(logic, q, &a.induced(&kept_global))?;
        by_type.entry(t).or_default().push(kept_global);
    }
    let mut keep = Vec::new();
    for (t, group) in by_type {
        let cap = union_threshold(&t, budget)?;
        for g in group.into_iter().take(cap) {
            keep.extend(g);
        }
    }
    keep.sort_unstable();
    Ok(keep)
}
