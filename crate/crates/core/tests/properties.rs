//! Properties of the public API checked against small independent oracles.

use std::collections::HashMap;

use proptest::prelude::*;

use tdll::enumerate::{enum_structures, EnumOptions};
use tdll::formulas::var;
use tdll::treedepth::tree_depth;
use tdll::types::{tp, Logic};
use tdll::{eval_sentence, parse_formula, parse_structure, render, Budget, Formula, Signature, Structure};

fn graphs() -> Signature {
    Signature::of(&[("E", 2)])
}

fn graph_from_mask(n: usize, mask: u64) -> Structure {
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask >> bit & 1 == 1 {
                edges.push((i, j));
            }
            bit += 1;
        }
    }
    Structure::graph(&graphs(), n, &edges).unwrap()
}

fn adjacency(a: &Structure) -> Vec<u64> {
    let mut adj = vec![0u64; a.size()];
    for i in 0..a.sig().len() {
        for t in a.relation(i) {
            for &x in t {
                for &y in t {
                    if x != y {
                        adj[x] |= 1 << y;
                    }
                }
            }
        }
    }
    adj
}

/// Tree-depth straight from the recursive definition, memoised on vertex sets.
fn td_oracle(adj: &[u64], set: u64, memo: &mut HashMap<u64, usize>) -> usize {
    if set == 0 {
        return 0;
    }
    if let Some(&v) = memo.get(&set) {
        return v;
    }
    let start = set.trailing_zeros() as usize;
    let mut comp = 1u64 << start;
    loop {
        let mut next = comp;
        for v in 0..adj.len() {
            if comp >> v & 1 == 1 {
                next |= adj[v] & set;
            }
        }
        if next == comp {
            break;
        }
        comp = next;
    }
    let res = if comp != set {
        td_oracle(adj, comp, memo).max(td_oracle(adj, set & !comp, memo))
    } else {
        1 + (0..adj.len()).filter(|v| set >> v & 1 == 1).map(|v| td_oracle(adj, set & !(1 << v), memo)).min().unwrap()
    };
    memo.insert(set, res);
    res
}

fn longest_path_edges(adj: &[u64]) -> usize {
    fn go(adj: &[u64], v: usize, seen: u64) -> usize {
        let mut best = 0;
        for w in 0..adj.len() {
            if adj[v] >> w & 1 == 1 && seen >> w & 1 == 0 {
                best = best.max(1 + go(adj, w, seen | 1 << w));
            }
        }
        best
    }
    (0..adj.len()).map(|v| go(adj, v, 1 << v)).max().unwrap_or(0)
}

/// Ehrenfeucht-Fraisse game for first-order logic with `q` rounds.
fn duplicator_wins(a: &Structure, b: &Structure, xs: &mut Vec<usize>, ys: &mut Vec<usize>, q: u32) -> bool {
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if (xs[i] == xs[j]) != (ys[i] == ys[j]) {
                return false;
            }
            for r in 0..a.sig().len() {
                if a.holds(r, &[xs[i], xs[j]]) != b.holds(r, &[ys[i], ys[j]]) {
                    return false;
                }
            }
        }
    }
    if q == 0 {
        return true;
    }
    for side in 0..2 {
        let (s, d) = if side == 0 { (a, b) } else { (b, a) };
        for x in 0..s.size() {
            let mut answered = false;
            for y in 0..d.size() {
                let (nx, ny) = if side == 0 { (x, y) } else { (y, x) };
                xs.push(nx);
                ys.push(ny);
                answered = duplicator_wins(a, b, xs, ys, q - 1);
                xs.pop();
                ys.pop();
                if answered {
                    break;
                }
            }
            if !answered {
                return false;
            }
        }
    }
    true
}

#[test]
fn graph_counts_match_known_sequences() {
    // Graphs and connected graphs on n unlabelled vertices, n = 0..=6.
    let all = [1, 1, 2, 4, 11, 34, 156];
    let connected = [0, 1, 1, 2, 6, 21, 112];
    let b = Budget::unlimited();
    for n in 0..=6 {
        let g = enum_structures(&graphs(), EnumOptions::graphs(n).min(n), &b).unwrap();
        assert_eq!(g.len(), all[n], "graphs on {n} vertices");
        let c = enum_structures(&graphs(), EnumOptions::graphs(n).min(n).connected(), &b).unwrap();
        assert_eq!(c.len(), connected[n], "connected graphs on {n} vertices");
    }
    // Directed graphs with loops on up to three elements: 1, 2, 10, 104.
    let d = enum_structures(&graphs(), EnumOptions::new(3), &b).unwrap();
    assert_eq!(d.len(), 1 + 2 + 10 + 104);
}

#[test]
fn tree_depth_matches_the_definition_on_all_small_graphs() {
    for a in enum_structures(&graphs(), EnumOptions::graphs(7), &Budget::unlimited()).unwrap() {
        let adj = adjacency(&a);
        let full = if a.size() == 64 { u64::MAX } else { (1u64 << a.size()) - 1 };
        assert_eq!(tree_depth(&a).unwrap(), td_oracle(&adj, full, &mut HashMap::new()), "{a}");
    }
}

#[test]
fn bounded_tree_depth_excludes_long_paths() {
    for d in 1..=3 {
        for a in enum_structures(&graphs(), EnumOptions::graphs(8).td(d), &Budget::unlimited()).unwrap() {
            assert!(longest_path_edges(&adjacency(&a)) < 1 << d, "path of {} edges with td <= {d}", 1 << d);
        }
    }
}

#[test]
fn first_order_types_match_the_game() {
    let b = Budget::unlimited();
    let mut pool = enum_structures(&graphs(), EnumOptions::new(3), &b).unwrap();
    pool.extend(enum_structures(&graphs(), EnumOptions::graphs(5).min(4), &b).unwrap());
    for q in 0..=2 {
        let types: Vec<_> = pool.iter().map(|a| tp(Logic::FO, q, a).unwrap()).collect();
        for i in 0..pool.len() {
            for j in i + 1..pool.len() {
                let game = duplicator_wins(&pool[i], &pool[j], &mut vec![], &mut vec![], q);
                assert_eq!(types[i] == types[j], game, "q={q}\n{}\n{}", pool[i], pool[j]);
            }
        }
    }
}

#[test]
fn removal_expansion_restricts_to_the_induced_substructure() {
    let sig = Signature::of(&[("E", 2), ("T", 3)]);
    let mut a = Structure::new(sig.clone(), 4);
    for t in [[0, 1, 0], [1, 2, 3], [3, 3, 3], [2, 0, 1]] {
        a.add("T", &t).unwrap();
    }
    a.add("E", &[1, 3]).unwrap();
    a.add("E", &[2, 2]).unwrap();
    for r in 0..a.size() {
        let (b, keep) = a.remove_and_expand(r).unwrap();
        let induced = a.induced(&keep);
        for (i, (name, k)) in sig.symbols().iter().enumerate() {
            let full = b.relation_by_name(&tdll::structures::expanded_name(name, &(0..*k).collect::<Vec<_>>())).unwrap();
            assert_eq!(full, induced.relation(i));
        }
    }
}

fn arb_graph() -> impl Strategy<Value = Structure> {
    (0usize..=7, any::<u64>()).prop_map(|(n, m)| graph_from_mask(n, m))
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let names = ["x", "y", "z"];
    let leaf = prop_oneof![
        (0usize..3, 0usize..3).prop_map(move |(i, j)| Formula::atom("E", &[var(names[i]), var(names[j])])),
        (0usize..3, 0usize..3).prop_map(move |(i, j)| Formula::eq(&var(names[i]), &var(names[j]))),
        (0usize..3, 0usize..3).prop_map(move |(i, j)| Formula::leq(&var(names[i]), &var(names[j]))),
        Just(Formula::tt()),
        Just(Formula::ff()),
    ];
    leaf.prop_recursive(5, 40, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::and),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::or),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (0usize..3, inner.clone()).prop_map(move |(i, f)| Formula::exists(&var(names[i]), f)),
            (0usize..3, inner.clone()).prop_map(move |(i, f)| Formula::forall(&var(names[i]), f)),
            (0u32..3, 2u32..4, 0usize..3, inner).prop_map(move |(r, p, i, f)| Formula::exists_mod(r % p, p, &var(names[i]), f)),
        ]
    })
}

fn close(f: Formula) -> Formula {
    Formula::forall_many(&[var("x"), var("y"), var("z")], f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structure_text_round_trips(a in arb_graph(), ordered in any::<bool>()) {
        let a = if ordered { a.with_natural_order() } else { a };
        let text = a.render();
        let b = parse_structure(&text).unwrap();
        prop_assert_eq!(&b, &a);
        prop_assert_eq!(b.render(), text);
    }

    #[test]
    fn canonical_form_ignores_labels(a in arb_graph(), seed in any::<u64>()) {
        let n = a.size();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = a.relabel(&perm).unwrap();
        prop_assert_eq!(a.canonical_form().unwrap(), b.canonical_form().unwrap());
        prop_assert_eq!(tree_depth(&a).unwrap(), tree_depth(&b).unwrap());
    }

    #[test]
    fn formula_text_round_trips_with_its_meaning(f in arb_formula(), a in arb_graph()) {
        let f = close(f);
        let text = render(&f);
        let g = parse_formula(&text).unwrap();
        prop_assert_eq!(render(&g), text);
        let a = a.with_natural_order();
        prop_assert_eq!(eval_sentence(&a, &f).unwrap(), eval_sentence(&a, &g).unwrap());
    }

    #[test]
    fn union_tree_depth_is_the_maximum(a in arb_graph(), b in arb_graph()) {
        let u = a.disjoint_union(&b).unwrap();
        prop_assert_eq!(tree_depth(&u).unwrap(), tree_depth(&a).unwrap().max(tree_depth(&b).unwrap()));
    }
}
