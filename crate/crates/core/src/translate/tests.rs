use super::*;
use crate::formulas::parse_formula;

fn graphs() -> Signature {
    Signature::of(&[("E", 2)])
}

/// Number of components by union-find over the raw tuples.
fn components_by_tuples(a: &Structure) -> Vec<Vec<usize>> {
    let n = a.size();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for i in 0..a.sig().len() {
        for t in a.relation(i) {
            for w in t.windows(2) {
                let (x, y) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[x] = y;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in 0..n {
        let r = find(&mut parent, e);
        groups.entry(r).or_default().push(e);
    }
    groups.into_values().collect()
}

#[test]
fn exactly_one_marked_component() {
    let sig = Signature::of(&[("E", 2), ("R", 1)]);
    let mut fresh = Fresh::new();
    let phi = parse_formula("exists x. R(x)").unwrap();
    let psi = count_formula(&sig, 2, &[phi], &[vec![1]], 2, &mut fresh).unwrap();
    let all = enum_structures(&sig, EnumOptions::new(4).td(2), &Budget::unlimited()).unwrap();
    assert!(all.len() > 100);
    for a in &all {
        let marked = components_by_tuples(a)
            .iter()
            .filter(|c| c.iter().any(|&e| a.holds(1, &[e])))
            .count();
        assert_eq!(eval_sentence(a, &psi).unwrap(), marked == 1, "{a}");
    }
    assert!(metrics(&psi).qad <= 1 + 2);
}

#[test]
fn empty_and_full_vector_sets() {
    let sig = graphs();
    let mut fresh = Fresh::new();
    let phis = [parse_formula("exists x. exists y. E(x,y)").unwrap(), parse_formula("forall x. forall y. !E(x,y)").unwrap()];
    let none = count_formula(&sig, 2, &phis, &[], 2, &mut fresh).unwrap();
    let cube: Vec<Vec<usize>> = (0..3).flat_map(|a| (0..3).map(move |b| vec![a, b])).collect();
    let all = count_formula(&sig, 2, &phis, &cube, 2, &mut fresh).unwrap();
    for a in enum_structures(&sig, EnumOptions::graphs(5).td(2), &Budget::unlimited()).unwrap() {
        assert!(!eval_sentence(&a, &none).unwrap());
        assert!(eval_sentence(&a, &all).unwrap());
    }
    assert!(count_formula(&sig, 2, &phis, &[vec![3, 0]], 2, &mut fresh).is_err());
}

#[test]
fn parity_of_component_count() {
    let sig = graphs();
    let mut fresh = Fresh::new();
    let phi = parse_formula("exists x. x = x").unwrap();
    let b = measured_root_bound(2, 8, &Budget::unlimited()).unwrap();
    assert_eq!(b, 2);
    let r = vec![(vec![0], vec![0]), (vec![2], vec![0])];
    let psi = mod_count_formula(&sig, 2, &[phi], &r, 2, b, &mut fresh).unwrap();
    let all = enum_structures(&sig, EnumOptions::graphs(6).td(2), &Budget::unlimited()).unwrap();
    for a in &all {
        let even = components_by_tuples(a).len() % 2 == 0;
        assert_eq!(eval_sentence(a, &psi).unwrap(), even, "{a}");
    }
}

#[test]
fn single_edges_counted_modulo_two() {
    // Each edge component has two roots, which a residue taken modulo p alone
    // cannot see.
    let sig = graphs();
    let mut fresh = Fresh::new();
    let edge = parse_formula("exists x. exists y. E(x,y)").unwrap();
    let r = vec![(vec![1], vec![1]), (vec![2], vec![1])];
    let psi = mod_count_formula(&sig, 2, &[edge], &r, 2, 2, &mut fresh).unwrap();
    for k in 0..5 {
        let edges: Vec<(usize, usize)> = (0..k).map(|i| (2 * i, 2 * i + 1)).collect();
        let a = Structure::graph(&sig, 2 * k, &edges).unwrap();
        assert_eq!(eval_sentence(&a, &psi).unwrap(), k % 2 == 1, "{k} edges");
    }
}

fn builder(logic: Logic, q: u32, ordered: bool, budget: &Budget) -> Builder<'_> {
    Builder {
        logic,
        q,
        ordered,
        counting: Counting::Threshold,
        mode: ThresholdMode::Empirical,
        budget,
        fresh: Fresh::new(),
        b_max: 0,
    }
}

fn check_definers(logic: Logic, q: u32, ordered: bool) {
    let budget = Budget::unlimited();
    let sig = graphs();
    let conn = enum_structures(&sig, EnumOptions::graphs(5).connected().td(2).min(1), &budget).unwrap();
    let mut b = builder(logic, q, ordered, &budget);
    let lvl = b.level(&sig, 2, conn.clone(), None).unwrap();
    assert!(lvl.conn.len() >= 3);
    for a in &conn {
        let want = if ordered { tp_ordered(logic, q, a).unwrap() } else { tp(logic, q, a).unwrap() };
        let hits: Vec<usize> =
            (0..lvl.conn.len()).filter(|&i| eval_sentence(a, &lvl.definers[i]).unwrap()).collect();
        assert_eq!(hits.len(), 1, "{a}");
        assert_eq!(lvl.conn[hits[0]].ty, want, "{a}");
    }
}

#[test]
fn ordered_definers_partition_connected_graphs() {
    check_definers(Logic::FO, 2, true);
}

#[test]
fn unordered_definers_partition_connected_graphs() {
    check_definers(Logic::FO, 2, false);
}

#[test]
fn singleton_definer_names_the_atomic_type() {
    let budget = Budget::unlimited();
    let sig = Signature::of(&[("R", 1)]);
    let conn = enum_structures(&sig, EnumOptions::new(1).connected().td(1).min(1), &budget).unwrap();
    let mut b = builder(Logic::FO, 1, true, &budget);
    let lvl = b.level(&sig, 1, conn, None).unwrap();
    let shown: Vec<String> = lvl.definers.iter().map(|f| f.to_string()).collect();
    assert_eq!(shown.len(), 2);
    assert!(shown.iter().any(|s| s.contains("!R(")));
    assert!(shown.iter().all(|s| s.starts_with("exists")));
}

#[test]
fn nonemptiness_through_the_order() {
    let sig = graphs();
    let phi = parse_formula("exists x. forall y. x <= y").unwrap();
    let opts = TranslateOptions::new(2, 4).graphs();
    let budget = Budget::unlimited();
    let tr = translate_oifo(&sig, &phi, &opts, &budget).unwrap();
    let rep = verify_equivalence(&sig, &phi, &tr.formula, 2, 5, true, &budget).unwrap();
    assert!(rep.ok(), "{:?}", rep.mismatch);
    assert!(rep.checked > 10);
    assert!(tr.report.output.qad <= 6, "qad {}", tr.report.output.qad);
}

#[test]
fn isolated_vertex_in_mso() {
    let sig = graphs();
    let phi = parse_formula(
        "existsSet X. (exists x. X(x)) & (forall x. forall y. X(x) & X(y) -> x = y) & forall x. forall y. X(x) & E(x,y) -> X(y)",
    )
    .unwrap();
    let opts = TranslateOptions::new(2, 4).graphs();
    let budget = Budget::unlimited();
    let tr = translate_mso(&sig, &phi, &opts, &budget).unwrap();
    let rep = verify_equivalence(&sig, &phi, &tr.formula, 2, 5, true, &budget).unwrap();
    assert!(rep.ok(), "{:?}", rep.mismatch);
    assert!(!tr.report.output.uses_sets);
}

pub(crate) const EVEN: &str = "existsSet X. (forall x. (forall y. x <= y) -> X(x)) & (forall x. (forall y. y <= x) -> !X(x)) \
    & forall x. forall y. (x <= y & !x = y & !(exists z. x <= z & z <= y & !z = x & !z = y)) -> ((X(x) -> !X(y)) & (!X(x) -> X(y)))";

#[test]
fn even_length_through_an_automaton() {
    let sig = Signature::of(&[("R", 1)]);
    let phi = parse_formula(EVEN).unwrap();
    assert_eq!(metrics(&phi).qr, 4);
    let opts = TranslateOptions { type_period_ms: 200, ..TranslateOptions::new(1, 1) }.period(PeriodSource::WordAutomaton);
    let budget = Budget::unlimited();
    let tr = translate_oimso(&sig, &phi, &opts, &budget).unwrap();
    assert_eq!(tr.report.p, Some(2));
    assert!(tr.report.output.uses_mod);
    let rep = verify_equivalence(&sig, &phi, &tr.formula, 1, 7, false, &budget).unwrap();
    assert!(rep.ok(), "{:?}", rep.mismatch);
    for n in 0..8 {
        let a = Structure::new(sig.clone(), n);
        assert_eq!(eval_sentence(&a, &tr.formula).unwrap(), n % 2 == 0);
    }
}

#[test]
fn counterexample_to_invariance() {
    let sig = Signature::of(&[("R", 1)]);
    let mut a = Structure::new(sig, 2);
    a.add("R", &[0]).unwrap();
    let first_marked = parse_formula("exists x. R(x) & forall y. x <= y").unwrap();
    assert!(check_order_invariance(&a, &first_marked, &Budget::unlimited()).unwrap().is_some());
    let some_marked = parse_formula("exists x. R(x)").unwrap();
    assert!(check_order_invariance(&a, &some_marked, &Budget::unlimited()).unwrap().is_none());
}

#[test]
fn trivial_verification_outcomes() {
    let sig = graphs();
    let t = Formula::tt();
    let f = Formula::ff();
    let rep = verify_equivalence(&sig, &t, &f, 2, 3, true, &Budget::unlimited()).unwrap();
    assert_eq!(rep.mismatch.as_ref().map(|m| m.index), Some(0));
}
