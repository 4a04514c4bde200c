//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines show up in `cargo test` output. Every
//! criterion is exact; the only tolerances are the pinned constants below.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tdll::cm2fo::{self, CounterProgram};
use tdll::enumerate::{all_orders, enum_structures, EnumOptions};
use tdll::fodecomp::{build_decomp_formulas, decompose, decompose_direct, verify_decomposition, Reading};
use tdll::formulas::{metrics, qad, size, var};
use tdll::lowerbound::{self as lb, RootedTree};
use tdll::qorder::{alpha_of, is_q_order, q_order, rtp, tp_ordered};
use tdll::translate::{
    check_order_invariance, count_formula, mod_count_formula, translate_mso, translate_oifo, translate_oimso,
    verify_equivalence, PeriodSource, TranslateOptions,
};
use tdll::treedepth::{roots_of, tree_depth};
use tdll::types::{compose, power, pumping_period, realized_types, shrink_model, tp, Logic, QType, TableKind, TableOptions};
use tdll::{eval, eval_sentence, parse_formula, Budget, Env, Formula, Fresh, Signature, Structure, Value};

// Pinned tolerances and targets.
const MISMATCHES_ALLOWED: usize = 0;
const QAD_BOUND_D2: usize = 3 * 2;
const C1_TARGET: Duration = Duration::from_secs(10 * 60);
const C2_TARGET: Duration = Duration::from_secs(30 * 60);
const C3_TARGET: Duration = Duration::from_secs(30 * 60);
const C4_TARGET: Duration = Duration::from_secs(15 * 60);
const C7_TARGET: Duration = Duration::from_secs(20 * 60);
const C8_TARGET: Duration = Duration::from_secs(30 * 60);
const C9_TARGET: Duration = Duration::from_secs(15 * 60);
const PUMP_SAMPLES: usize = 20;
const RANDOM_FORESTS: usize = 200;
const SEARCH_BOUND: usize = 12;
const SEED: u64 = 0x7d11;

type Outcome = Result<String, String>;

fn graphs() -> Signature {
    Signature::of(&[("E", 2)])
}

fn all_graphs(max: usize, d: Option<usize>) -> Vec<Structure> {
    let mut o = EnumOptions::graphs(max);
    o.td_bound = d;
    enum_structures(&graphs(), o, &Budget::unlimited()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Debug>(x: T) -> String {
    format!("{x:?}")
}

fn has_edge(a: &Structure) -> bool {
    !a.relation(0).is_empty()
}

fn has_isolated(a: &Structure) -> bool {
    (0..a.size()).any(|v| a.relation(0).iter().all(|t| !t.contains(&v)))
}

// 1. Repetition threshold for q-ordered types.
fn repetition_threshold() -> Outcome {
    let mut lines = Vec::new();
    for q in 1..=2u32 {
        let t = (1usize << q) + 1;
        let mut reps: BTreeMap<QType, Structure> = BTreeMap::new();
        for k in enum_structures(&graphs(), EnumOptions::graphs(4).connected().td(2).min(1), &Budget::unlimited()).unwrap() {
            reps.entry(tp_ordered(Logic::FO, q, &k).map_err(e)?).or_insert(k);
        }
        for k in reps.values() {
            let a = tp_ordered(Logic::FO, q, &k.power(t)).map_err(e)?;
            let b = tp_ordered(Logic::FO, q, &k.power(t + 1)).map_err(e)?;
            ensure(a == b, || format!("q={q}: K^{t} and K^{} differ for K =\n{k}", t + 1))?;
        }
        lines.push(format!("q={q} t={t} types={}", reps.len()));
    }
    Ok(lines.join(", "))
}

// 2. MSO to FO, isolated vertex.
const ISOLATED: &str = "existsSet X. (exists x. X(x)) & (forall x. forall y. X(x) & X(y) -> x = y) & forall x. forall y. X(x) & E(x,y) -> X(y)";

fn mso_to_fo() -> Outcome {
    let sig = graphs();
    let phi = parse_formula(ISOLATED).map_err(e)?;
    let budget = Budget::unlimited();
    let tr = translate_mso(&sig, &phi, &TranslateOptions::new(2, 4).graphs(), &budget).map_err(e)?;
    let rep = verify_equivalence(&sig, &phi, &tr.formula, 2, 5, true, &budget).map_err(e)?;
    ensure(rep.ok(), || format!("mismatch {:?}", rep.mismatch))?;
    let mut bad = 0;
    for a in all_graphs(5, Some(2)) {
        if eval_sentence(&a, &tr.formula).map_err(e)? != has_isolated(&a) {
            bad += 1;
        }
    }
    ensure(bad <= MISMATCHES_ALLOWED, || format!("{bad} disagreements with the isolated-vertex oracle"))?;
    let m = tr.report.output;
    ensure(!m.uses_sets && !m.uses_order, || "output is not plain FO".into())?;
    ensure(m.qad <= QAD_BOUND_D2, || format!("qad {} > {QAD_BOUND_D2}", m.qad))?;
    Ok(format!("checked {} structures <= 5, qad {} <= {QAD_BOUND_D2}, size {}", rep.checked, m.qad, m.size))
}

// 3. Order-invariant FO to FO.
fn invariant_fo_to_fo() -> Outcome {
    let sig = graphs();
    let budget = Budget::unlimited();
    let mut parts = Vec::new();
    let cases: [(&str, fn(&Structure) -> bool); 2] =
        [("exists x. forall y. x <= y", |a| a.size() > 0), ("exists x. exists y. E(x,y)", has_edge)];
    for (src, oracle) in cases {
        let phi = parse_formula(src).map_err(e)?;
        let tr = translate_oifo(&sig, &phi, &TranslateOptions::new(2, 4).graphs(), &budget).map_err(e)?;
        let rep = verify_equivalence(&sig, &phi, &tr.formula, 2, 5, true, &budget).map_err(e)?;
        ensure(rep.ok(), || format!("`{src}`: mismatch {:?}", rep.mismatch))?;
        for a in all_graphs(5, Some(2)) {
            ensure(eval_sentence(&a, &tr.formula).map_err(e)? == oracle(&a), || format!("`{src}` wrong on\n{a}"))?;
        }
        let m = tr.report.output;
        ensure(!m.uses_order, || format!("`{src}`: output uses the order"))?;
        ensure(m.qad <= QAD_BOUND_D2, || format!("`{src}`: qad {} > {QAD_BOUND_D2}", m.qad))?;
        parts.push(format!("`{src}` qad {} checked {}", m.qad, rep.checked));
    }
    Ok(parts.join("; "))
}

// 4. Order-invariant MSO to FO+MOD, even cardinality.
const EVEN: &str = "existsSet X. (forall x. (forall y. x <= y) -> X(x)) & (forall x. (forall y. y <= x) -> !X(x)) \
    & forall x. forall y. (x <= y & !x = y & !(exists z. x <= z & z <= y & !z = x & !z = y)) -> ((X(x) -> !X(y)) & (!X(x) -> X(y)))";

fn invariant_mso_to_fo_mod() -> Outcome {
    let sig = Signature::of(&[("R", 1)]);
    let phi = parse_formula(EVEN).map_err(e)?;
    let budget = Budget::unlimited();
    let small = enum_structures(&sig, EnumOptions::new(6), &budget).map_err(e)?;
    for a in &small {
        ensure(check_order_invariance(a, &phi, &budget).map_err(e)?.is_none(), || format!("not invariant on\n{a}"))?;
    }
    let opts = TranslateOptions { type_period_ms: 200, ..TranslateOptions::new(1, 1) }.period(PeriodSource::WordAutomaton);
    let tr = translate_oimso(&sig, &phi, &opts, &budget).map_err(e)?;
    let p = tr.report.p.ok_or("no period reported")?;
    ensure(p % 2 == 0, || format!("period {p} is odd"))?;
    let all = enum_structures(&sig, EnumOptions::new(8), &budget).map_err(e)?;
    for a in &all {
        ensure(eval_sentence(a, &tr.formula).map_err(e)? == (a.size() % 2 == 0), || format!("parity wrong at size {}", a.size()))?;
    }
    Ok(format!(
        "invariant on {} structures <= 6, parity exact on {} structures <= 8, p = {p}, qad {}",
        small.len(),
        all.len(),
        tr.report.output.qad
    ))
}

// 5. Pumping.
fn pumping() -> Outcome {
    let budget = Budget::unlimited();
    let mut opts = TableOptions::graphs(3);
    opts.connected_only = true;
    let table = realized_types(&graphs(), Logic::MSO, 2, 2, TableKind::ComponentOrdered, opts, &budget).map_err(e)?;
    let p = pumping_period(&table.connected_types(), 4096, &budget).map_err(e)?;
    let pieces = all_graphs(3, None).into_iter().filter(|g| g.size() > 0 && g.is_connected()).collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for s in 0..PUMP_SAMPLES {
        let k = rng.gen_range(1..=3);
        let mut parts = Vec::new();
        for _ in 0..k {
            let g = pieces.choose(&mut rng).unwrap();
            let mut ord: Vec<usize> = (0..g.size()).collect();
            ord.shuffle(&mut rng);
            parts.push(g.with_order(ord).map_err(e)?);
        }
        let a = Structure::union_all(&graphs(), &parts, true).map_err(e)?;
        let t = tp(Logic::MSO, 2, &a).map_err(e)?;
        ensure(power(&t, 1 + p) == power(&t, 1 + 2 * p), || format!("sample {s} fails to pump:\n{a}"))?;
    }
    Ok(format!("p = {p} from {} connected types, {PUMP_SAMPLES} samples", table.connected.len()))
}

// 6. Shrinking.
fn shrinking() -> Outcome {
    let budget = Budget::unlimited();
    let mut pool = all_graphs(6, Some(2));
    pool.extend(enum_structures(&graphs(), EnumOptions::new(3).td(2), &budget).map_err(e)?);
    let mut parts = Vec::new();
    for logic in [Logic::FO, Logic::MSO] {
        let mut max_shrunk = 0;
        for a in &pool {
            let (b, keep) = shrink_model(a, logic, 2, &budget).map_err(e)?;
            ensure(b == a.induced(&keep), || "result is not the induced substructure".into())?;
            ensure(b.size() <= a.size(), || format!("grew from {} to {}", a.size(), b.size()))?;
            ensure(tp(logic, 2, &b).map_err(e)? == tp(logic, 2, a).map_err(e)?, || format!("type changed on\n{a}"))?;
            max_shrunk = max_shrunk.max(b.size());
        }
        parts.push(format!("({},q=2,d=2) max shrunk size {max_shrunk}", logic.name()));
    }
    Ok(format!("{} structures; {}", pool.len(), parts.join(", ")))
}

/// Hereditarily finite set denoted by the subtree at `v`.
fn hf(t: &RootedTree, v: usize) -> String {
    let mut kids: Vec<String> = t.children(v).into_iter().map(|c| hf(t, c)).collect();
    kids.sort();
    kids.dedup();
    format!("{{{}}}", kids.join(""))
}

fn eq_agrees(trees: &[RootedTree], d: usize) -> Result<(), String> {
    let f = lb::forest(trees);
    let roots = lb::forest_roots(trees);
    let (x, y) = (var("x"), var("y"));
    let eq = lb::build_eq(d, &x, &y, &mut Fresh::new());
    for i in 0..trees.len() {
        for j in 0..trees.len() {
            let mut env = Env::new();
            env.insert(x.to_string(), Value::Elem(roots[i]));
            env.insert(y.to_string(), Value::Elem(roots[j]));
            let want = hf(&trees[i], 0) == hf(&trees[j], 0);
            ensure(eval(&f, &eq, &env).map_err(e)? == want, || format!("eq_{d} wrong on trees {i}, {j}"))?;
        }
    }
    Ok(())
}

fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize, height: usize) -> RootedTree {
    let n = rng.gen_range(1..=max_nodes);
    let mut parent = vec![None];
    let mut depth = vec![0];
    for v in 1..n {
        let cands: Vec<usize> = (0..v).filter(|&u| depth[u] < height).collect();
        let Some(&p) = cands.choose(rng) else { break };
        parent.push(Some(p));
        depth.push(depth[p] + 1);
    }
    let red = vec![false; parent.len()];
    RootedTree::from_parents(parent, red).unwrap()
}

// 7. Tree encodings and the separating family.
fn lower_bound() -> Outcome {
    // Number encodings of height <= 3 with at most 8 nodes, as forests.
    let encs: Vec<RootedTree> = (0..16u64).map(lb::enc).filter(|t| t.height() <= 3 && t.size() <= 8).collect();
    let mut forests = 0;
    let mut stack: Vec<(Vec<usize>, usize)> = vec![(Vec::new(), 0)];
    while let Some((picked, nodes)) = stack.pop() {
        if !picked.is_empty() {
            let trees: Vec<RootedTree> = picked.iter().map(|&i| encs[i].clone()).collect();
            eq_agrees(&trees, 3)?;
            for (t, &i) in trees.iter().zip(&picked) {
                ensure(lb::decode(t).map_err(e)? == (i as u64).into(), || format!("decode of enc({i})"))?;
            }
            forests += 1;
        }
        let start = picked.last().copied().unwrap_or(0);
        for i in start..encs.len() {
            if nodes + encs[i].size() <= 8 {
                let mut next = picked.clone();
                next.push(i);
                stack.push((next, nodes + encs[i].size()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..RANDOM_FORESTS {
        let d = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let trees: Vec<RootedTree> = (0..k).map(|_| random_tree(&mut rng, 7, d)).collect();
        eq_agrees(&trees, d)?;
    }

    let tower = |d: usize| (0..d).fold(0u32, |acc, _| 1u32 << acc);
    for d in 1..=2 {
        let phi = lb::build_phi_lower(d);
        for n in 0..=4 {
            let a = lb::build_family(d, n).map_err(e)?;
            let want = n as u32 >= tower(d);
            ensure(eval_sentence(&a, &phi).map_err(e)? == want, || format!("F_{d}^{n}: expected {want}"))?;
        }
    }

    for q in 1..=2u32 {
        for k in q as usize..=4 {
            let a = tp(Logic::FO, q, &lb::build_family(2, k).map_err(e)?).map_err(e)?;
            let b = tp(Logic::FO, q, &lb::build_family(2, k + 1).map_err(e)?).map_err(e)?;
            ensure(a == b, || format!("FO rank {q} separates F_2^{k} and F_2^{}", k + 1))?;
        }
    }

    let sizes: Vec<u64> = (1..=5).map(|d| size(&lb::build_eq(d, &var("x"), &var("y"), &mut Fresh::new()))).collect();
    let steps: BTreeSet<u64> = sizes.windows(2).map(|w| w[1] - w[0]).collect();
    ensure(steps.len() == 1, || format!("eq sizes {sizes:?} are not linear"))?;
    Ok(format!(
        "{forests} encoding forests + {RANDOM_FORESTS} random forests; family separation exact; eq sizes {sizes:?} (slope {})",
        steps.iter().next().unwrap()
    ))
}

// 8. Definable decompositions.
fn decompositions() -> Outcome {
    let f = build_decomp_formulas(&graphs(), 3, Reading::ComponentLocal).map_err(e)?;
    let all = all_graphs(7, Some(3));
    let mut max_height = 0;
    for a in &all {
        let dec = decompose(a, &f).map_err(|x| format!("{x} on\n{a}"))?;
        ensure(dec.tree == decompose_direct(a).map_err(e)?, || format!("paths disagree on\n{a}"))?;
        let rep = verify_decomposition(a, &dec.tree, &dec.evaluated, 3).map_err(e)?;
        ensure(rep.ok(), || format!("{:?} on\n{a}", rep.failures()))?;
        ensure(dec.tree.height() <= tree_depth(a).map_err(e)?, || "height above tree-depth".into())?;
        max_height = max_height.max(dec.tree.height());
    }
    // Negative controls.
    let p = Structure::graph(&graphs(), 4, &[(0, 1), (1, 2)]).map_err(e)?;
    let dec = decompose(&p, &f).map_err(e)?;
    let mut broken = dec.tree.clone();
    broken.parent[0] = Some(0);
    ensure(!verify_decomposition(&p, &broken, &dec.evaluated, 3).map_err(e)?.ok(), || "corrupted parent accepted".into())?;
    let mut merged = dec.tree.clone();
    let last = merged.classes.pop().unwrap();
    merged.parent.pop();
    merged.levels.pop();
    merged.classes[0].extend(last);
    ensure(!verify_decomposition(&p, &merged, &dec.evaluated, 3).map_err(e)?.ok(), || "merged class accepted".into())?;
    Ok(format!("{} graphs <= 7 with td <= 3, max height {max_height}, negative controls rejected", all.len()))
}

// 9. Counter machines.
const HALTING: [(&str, (usize, usize, usize)); 4] = [
    ("inc 1\nhalt", (1, 0, 2)),
    ("inc 1\ninc 1\nhalt", (2, 0, 3)),
    ("inc 2\ndec 2 3 2\nhalt", (0, 0, 3)),
    ("inc 1\ninc 1\ndec 1 4 3\nhalt", (0, 0, 4)),
];
const LOOPING: [&str; 2] = ["dec 1 1 1\nhalt", "inc 1\ndec 1 1 1\nhalt"];

/// Two orders of the marked model on which the wrapper differs.
fn wrapper_witness(model: &Structure, wrapper: &Formula, sig: &Signature) -> Result<bool, String> {
    let order = model.order().ok_or("model without order")?.to_vec();
    let mut a = Structure::new(sig.clone(), model.size());
    for i in 0..model.sig().len() {
        for t in model.relation(i) {
            a.add_tuple(i, t.clone()).map_err(e)?;
        }
    }
    a.add("P", &[order[0]]).map_err(e)?;
    let mut swapped = order.clone();
    swapped.swap(0, 1);
    let x = eval_sentence(&a.with_order(order).map_err(e)?, wrapper).map_err(e)?;
    let y = eval_sentence(&a.with_order(swapped).map_err(e)?, wrapper).map_err(e)?;
    Ok(x != y)
}

fn counter_machines() -> Outcome {
    let budget = Budget::unlimited();
    let mut sizes = Vec::new();
    for (src, (n1, n2, j)) in HALTING {
        let p = CounterProgram::parse(src).map_err(e)?;
        let run = cm2fo::run_machine(&p, 100);
        let last = run.configs.last().unwrap();
        ensure(run.halted && (last.n1, last.n2, last.j) == (n1, n2, j), || format!("`{src}` ends in {last:?}"))?;
        let w = cm2fo::encode_run(&run.configs);
        let m = cm2fo::build_matching_extension(&w, &p).map_err(e)?;
        let phi = cm2fo::build_sentence(&p);
        ensure(eval_sentence(&m, &phi).map_err(e)?, || format!("`{src}`: extension is not a model"))?;
        ensure(tree_depth(&m.without_order()).map_err(e)? <= 2, || format!("`{src}`: tree-depth above 2"))?;
        ensure(cm2fo::decode_word(&cm2fo::decode_model(&m).map_err(e)?).map_err(e)? == run.configs, || "decode".into())?;
        let (sig2, wrapper) = cm2fo::invariance_reduction(m.sig(), &phi).map_err(e)?;
        ensure(wrapper_witness(&m, &wrapper, &sig2)?, || format!("`{src}`: wrapper looks invariant"))?;
        sizes.push(m.size());
    }
    let mut searched = Vec::new();
    for src in LOOPING {
        let p = CounterProgram::parse(src).map_err(e)?;
        ensure(!cm2fo::run_machine(&p, 1000).halted, || format!("`{src}` halts"))?;
        let s = cm2fo::find_model(&p, SEARCH_BOUND, &budget).map_err(e)?;
        ensure(s.model.is_none(), || format!("`{src}` has a model"))?;
        searched.push(s.candidates);
    }
    Ok(format!(
        "{} halting programs (model sizes {sizes:?}, wrapper non-invariant), {} looping programs without models <= {SEARCH_BOUND} ({searched:?} candidates; wrapper constantly false there)",
        HALTING.len(),
        LOOPING.len()
    ))
}

// 10. Property suites.
fn removal_determines_type(pool: &[Structure]) -> Result<usize, String> {
    let mut checked = 0;
    for logic in [Logic::FO, Logic::MSO] {
        for q in 1..=2u32 {
            let mut seen: BTreeMap<(tdll::AtomicType, QType), QType> = BTreeMap::new();
            for a in pool {
                let whole = tp(logic, q, a).map_err(e)?;
                for r in 0..a.size() {
                    let (b, _) = a.remove_and_expand(r).map_err(e)?;
                    let key = (a.atomic_type(r), tp(logic, q, &b).map_err(e)?);
                    let prev = seen.entry(key).or_insert_with(|| whole.clone());
                    ensure(*prev == whole, || format!("{} q={q}: removal type does not determine\n{a}", logic.name()))?;
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

fn root_removal_determines_type(pool: &[Structure]) -> Result<usize, String> {
    let mut seen: BTreeMap<(tdll::AtomicType, QType), QType> = BTreeMap::new();
    let mut checked = 0;
    for a in pool.iter().filter(|a| a.is_connected() && a.size() > 1) {
        if tree_depth(a).map_err(e)? <= 1 {
            continue;
        }
        let whole = tp(Logic::MSO, 2, a).map_err(e)?;
        for r in roots_of(a).map_err(e)? {
            let (b, _) = a.remove_and_expand(r).map_err(e)?;
            let prev = seen.entry((a.atomic_type(r), tp(Logic::MSO, 2, &b).map_err(e)?)).or_insert_with(|| whole.clone());
            ensure(*prev == whole, || format!("root removal does not determine\n{a}"))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn composition(ordered: bool) -> Result<usize, String> {
    let budget = Budget::unlimited();
    let base = if ordered {
        enum_structures(&graphs(), EnumOptions::new(2), &budget).map_err(e)?
    } else {
        enum_structures(&graphs(), EnumOptions::new(3), &budget).map_err(e)?
    };
    let mut items = Vec::new();
    for a in base {
        if ordered {
            for o in all_orders(a.size()) {
                items.push(a.with_order(o).map_err(e)?);
            }
        } else {
            items.push(a);
        }
    }
    let mut checked = 0;
    for logic in [Logic::FO, Logic::MSO] {
        for q in 1..=2u32 {
            let tps: Vec<QType> = items.iter().map(|a| tp(logic, q, a)).collect::<Result<_, _>>().map_err(e)?;
            let mut seen: BTreeMap<(QType, QType), QType> = BTreeMap::new();
            for (a, ta) in items.iter().zip(&tps) {
                for (b, tb) in items.iter().zip(&tps) {
                    let sum = tp(logic, q, &a.disjoint_union(b).map_err(e)?).map_err(e)?;
                    ensure(compose(ta, tb) == sum, || format!("compose differs on\n{a}\n{b}"))?;
                    let prev = seen.entry((ta.clone(), tb.clone())).or_insert_with(|| sum.clone());
                    ensure(*prev == sum, || "sum type not determined by summand types".into())?;
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}

fn q_orders_agree(pool: &[Structure]) -> Result<usize, String> {
    let mut orders_seen = 0;
    for logic in [Logic::FO, Logic::MSO] {
        for q in 1..=2u32 {
            for a in pool {
                let canon = q_order(logic, q, a).map_err(e)?;
                ensure(is_q_order(logic, q, a, canon.order().unwrap()).map_err(e)?, || format!("constructed order rejected on\n{a}"))?;
                let want = tp(logic, q, &canon).map_err(e)?;
                let root_case = a.size() > 1 && a.is_connected() && tree_depth(a).map_err(e)? > 1;
                let want_rtp = if root_case { Some(rtp(logic, q, a).map_err(e)?) } else { None };
                for ord in all_orders(a.size()) {
                    if !is_q_order(logic, q, a, &ord).map_err(e)? {
                        continue;
                    }
                    orders_seen += 1;
                    ensure(tp(logic, q, &a.with_order(ord.clone()).map_err(e)?).map_err(e)? == want, || {
                        format!("{} q={q}: two q-orders differ on\n{a}", logic.name())
                    })?;
                    if let Some(w) = &want_rtp {
                        let (b, keep) = a.remove_and_expand(ord[0]).map_err(e)?;
                        let rest: Vec<usize> = ord[1..].iter().map(|v| keep.iter().position(|k| k == v).unwrap()).collect();
                        ensure(tp(logic, q, &b.with_order(rest).map_err(e)?).map_err(e)? == *w, || format!("root types differ on\n{a}"))?;
                    }
                }
            }
        }
    }
    Ok(orders_seen)
}

fn connected_type_count() -> Result<String, String> {
    let budget = Budget::unlimited();
    let tilde = graphs().expand();
    let mut parts = Vec::new();
    for q in 1..=2u32 {
        let conn = enum_structures(&graphs(), EnumOptions::graphs(5).connected().td(2).min(1), &budget).map_err(e)?;
        // The connected type is determined by the root's atomic type and the
        // type of what is left after removing it.
        let mut by_key: BTreeMap<(tdll::AtomicType, QType), QType> = BTreeMap::new();
        let mut lhs = BTreeSet::new();
        for k in &conn {
            let t = tp_ordered(Logic::FO, q, k).map_err(e)?;
            lhs.insert(t.clone());
            if k.size() > 1 {
                let key = (alpha_of(Logic::FO, q, k).map_err(e)?, rtp(Logic::FO, q, k).map_err(e)?);
                let prev = by_key.entry(key).or_insert_with(|| t.clone());
                ensure(*prev == t, || format!("q={q}: root data does not determine the type of\n{k}"))?;
            }
        }
        // A closure cut short still undercounts the right-hand side.
        let table = realized_types(&tilde, Logic::FO, q, 1, TableKind::QOrdered, TableOptions::new(2), &budget).map_err(e)?;
        let rhs = (1usize << tilde.len()) * table.all.len();
        ensure(lhs.len() <= rhs, || format!("q={q}: {} > {rhs}", lhs.len()))?;
        parts.push(format!(
            "q={q}: {} <= 2^{} * {}{}",
            lhs.len(),
            tilde.len(),
            table.all.len(),
            if table.closed_under_union { "" } else { " (partial closure)" }
        ));
    }
    Ok(parts.join(", "))
}

fn qad_bounds() -> Result<String, String> {
    let sig = graphs();
    let mut worst = (0i64, 0i64);
    for src in ["exists x. x = x", "exists x. forall y. E(x,y)", "forall x. exists y. E(x,y) & forall z. z = z"] {
        let phi = parse_formula(src).map_err(e)?;
        let base = qad(&phi) as i64;
        for d in 1..=3usize {
            let mut f = Fresh::new();
            let c = count_formula(&sig, d, &[phi.clone()], &[vec![1]], 2, &mut f).map_err(e)?;
            let m = mod_count_formula(&sig, d, &[phi.clone()], &[(vec![1], vec![1])], 2, 2, &mut f).map_err(e)?;
            let (qc, qm) = (metrics(&c).qad as i64, metrics(&m).qad as i64);
            let bound17 = (base + 2).max(2 * (d as i64 - 1) + 1);
            ensure(qc <= base + 2, || format!("counting qad {qc} > {}", base + 2))?;
            ensure(qm <= bound17, || format!("modular qad {qm} > {bound17} (d={d})"))?;
            worst = (worst.0.max(qc - (base + 2)), worst.1.max(qm - bound17));
        }
    }
    Ok(format!("qad slack: counting {}, modular {}", -worst.0, -worst.1))
}

fn properties() -> Outcome {
    let budget = Budget::unlimited();
    let mut pool = all_graphs(4, None);
    pool.extend(enum_structures(&graphs(), EnumOptions::new(3), &budget).map_err(e)?);
    let rm = removal_determines_type(&pool)?;
    let rr = root_removal_determines_type(&all_graphs(5, None))?;
    let co = composition(true)?;
    let cu = composition(false)?;
    let qo = q_orders_agree(&pool)?;
    let cc = connected_type_count()?;
    let qb = qad_bounds()?;
    Ok(format!(
        "removal {rm} pairs, root removal {rr}, ordered sums {co}, unions {cu}, q-orders {qo} over {} structures; {cc}; {qb}",
        pool.len()
    ))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Option<Duration>)> = vec![
        ("repetition-threshold", repetition_threshold, Some(C1_TARGET)),
        ("mso-to-fo-isolated-vertex", mso_to_fo, Some(C2_TARGET)),
        ("order-invariant-fo", invariant_fo_to_fo, Some(C3_TARGET)),
        ("even-cardinality-fo-mod", invariant_mso_to_fo_mod, Some(C4_TARGET)),
        ("pumping", pumping, None),
        ("shrinking", shrinking, None),
        ("lower-bound-family", lower_bound, Some(C7_TARGET)),
        ("definable-decomposition", decompositions, Some(C8_TARGET)),
        ("counter-machines", counter_machines, Some(C9_TARGET)),
        ("property-suites", properties, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, target)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let res = match (res, target) {
            (Ok(msg), Some(t)) if took > t => Err(format!("{msg}; took {took:.1?} over target {t:?}")),
            (r, _) => r,
        };
        match res {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{took:.1?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{took:.1?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
