//! First-order definable tree-decompositions of bounded depth.
//!
//! All roots of every component go into one bag, and the construction
//! recurses on the components that remain. The same decomposition is
//! computed twice: by evaluating the defining formulas and directly.

use crate::error::{Error, Result};
use crate::eval::{Compiled, Env, Value};
use crate::formulas::{gaifman_adj, inline_relation, reach, relativise, var, Formula, Fresh, Var};
use crate::structures::{Signature, Structure};
use crate::treedepth::{build_td_eq, roots_of, tree_depth};

/// How the level formulas scope their tree-depth tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reading {
    /// Tree-depth of the remaining component of `x`.
    ComponentLocal,
    /// Tree-depth of everything remaining.
    Global,
}

/// One defined relation: `name(params)` abbreviates `body`, which may use the
/// relations defined before it.
#[derive(Debug, Clone)]
pub struct Stage {
    pub name: String,
    pub params: Vec<Var>,
    pub body: Formula,
}

/// The defining formulas, built in stages over auxiliary relation names.
/// `Lvl{i}(x)` places `x` on level `i`, `Comp{i}(x, y)` says `x` and `y` share a
/// component once the levels below `i` are removed, and `Same(x, y)` is the
/// class equivalence.
#[derive(Debug, Clone)]
pub struct DecompFormulas {
    pub d: usize,
    pub reading: Reading,
    pub x: Var,
    pub y: Var,
    pub stages: Vec<Stage>,
    /// `alpha(x, y)`: the class of `x` is the parent of the class of `y`.
    pub alpha: Formula,
    fresh: Fresh,
}

fn lvl(i: usize) -> String {
    format!("Lvl{i}")
}

fn comp(i: usize) -> String {
    format!("Comp{i}")
}

const SAME: &str = "Same";

pub fn build_decomp_formulas(sig: &Signature, d: usize, reading: Reading) -> Result<DecompFormulas> {
    if d == 0 {
        return Err(Error::invalid("depth must be positive"));
    }
    for (name, _) in sig.symbols() {
        if name == SAME || name.starts_with("Lvl") || name.starts_with("Comp") {
            return Err(Error::invalid(format!("symbol `{name}` clashes with an auxiliary relation")));
        }
    }
    let mut fresh = Fresh::new();
    let x = var("x");
    let y = var("y");
    let mut stages = Vec::new();
    for i in 1..=d {
        let g = fresh.var();
        let unplaced = |v: &Var| Formula::and((1..i).map(|j| Formula::not(Formula::atom(&lvl(j), &[v.clone()]))).collect());
        let free = unplaced(&g);
        let r = reach(sig, d - i + 2, &x, &y, &mut fresh);
        // Relativisation leaves the free endpoints unguarded.
        let psi = Formula::and(vec![unplaced(&x), unplaced(&y), relativise(&r, &free, &g, &mut fresh)]);
        stages.push(Stage { name: comp(i), params: vec![x.clone(), y.clone()], body: psi });
        let guard = match reading {
            Reading::Global => free.clone(),
            Reading::ComponentLocal => Formula::and2(free.clone(), Formula::atom(&comp(i), &[x.clone(), g.clone()])),
        };
        let without_x = Formula::and2(guard.clone(), Formula::neq(&g, &x));
        let mut alts = Vec::new();
        for j in 0..=d - i {
            let upper = relativise(&build_td_eq(sig, j + 1, &mut fresh)?, &guard, &g, &mut fresh);
            let lower = relativise(&build_td_eq(sig, j, &mut fresh)?, &without_x, &g, &mut fresh);
            alts.push(Formula::and2(upper, lower));
        }
        let phi = Formula::and2(unplaced(&x), Formula::or(alts));
        stages.push(Stage { name: lvl(i), params: vec![x.clone()], body: phi });
    }
    let at = |name: String, args: &[&Var]| Formula::atom(&name, &args.iter().map(|v| (*v).clone()).collect::<Vec<_>>());
    let eps = Formula::or((1..=d).map(|i| Formula::and(vec![at(lvl(i), &[&x]), at(lvl(i), &[&y]), at(comp(i), &[&x, &y])])).collect());
    stages.push(Stage { name: SAME.to_string(), params: vec![x.clone(), y.clone()], body: eps });
    let (u, v) = (fresh.var(), fresh.var());
    let mut alpha_alts = Vec::new();
    for i in 1..d {
        let link = Formula::exists_many(
            &[u.clone(), v.clone()],
            Formula::and(vec![gaifman_adj(sig, &u, &v, &mut fresh), at(SAME.to_string(), &[&x, &u]), at(comp(i + 1), &[&y, &v])]),
        );
        alpha_alts.push(Formula::and(vec![at(lvl(i), &[&x]), at(lvl(i + 1), &[&y]), link]));
    }
    let alpha = Formula::or(alpha_alts);
    Ok(DecompFormulas { d, reading, x, y, stages, alpha, fresh })
}

impl DecompFormulas {
    /// Replaces the auxiliary relations in `f` by their definitions.
    pub fn expand(&self, f: &Formula) -> Formula {
        let mut fresh = self.fresh.clone();
        fresh.bump_past(f);
        let mut out = f.clone();
        for st in self.stages.iter().rev() {
            out = inline_relation(&out, &st.name, &st.params, &st.body, &mut fresh);
        }
        out
    }

    fn stage(&self, name: &str) -> &Stage {
        self.stages.iter().find(|s| s.name == name).expect("stage exists")
    }

    /// `x` on level `i`, counted from 1, over the base signature.
    pub fn level(&self, i: usize) -> Formula {
        self.expand(&self.stage(&lvl(i)).body)
    }

    pub fn psi(&self, i: usize) -> Formula {
        self.expand(&self.stage(&comp(i)).body)
    }

    pub fn eps(&self) -> Formula {
        self.expand(&self.stage(SAME).body)
    }

    pub fn alpha(&self) -> Formula {
        self.expand(&self.alpha)
    }
}

/// Classes of elements with a parent map and levels starting at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub classes: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    pub levels: Vec<usize>,
}

impl TreeDecomposition {
    pub fn class_of(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (c, els) in self.classes.iter().enumerate() {
            for &e in els {
                out[e] = c;
            }
        }
        out
    }

    /// Classes from `c` up to its root.
    pub fn ancestors(&self, c: usize) -> Vec<usize> {
        let mut out = vec![c];
        let mut cur = c;
        while let Some(p) = self.parent[cur] {
            if out.contains(&p) || out.len() > self.classes.len() {
                break;
            }
            out.push(p);
            cur = p;
        }
        out
    }

    /// Elements of `c` and of all its ancestors.
    pub fn bag(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.ancestors(c).into_iter().flat_map(|a| self.classes[a].clone()).collect();
        out.sort_unstable();
        out
    }

    pub fn height(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Sorts classes by smallest element so equal decompositions compare equal.
    pub fn normalised(&self) -> TreeDecomposition {
        let mut idx: Vec<usize> = (0..self.classes.len()).collect();
        let mut classes = self.classes.clone();
        for c in classes.iter_mut() {
            c.sort_unstable();
        }
        idx.sort_by_key(|&i| classes[i].first().copied());
        let mut new_of = vec![0; idx.len()];
        for (new, &old) in idx.iter().enumerate() {
            new_of[old] = new;
        }
        TreeDecomposition {
            classes: idx.iter().map(|&i| classes[i].clone()).collect(),
            parent: idx.iter().map(|&i| self.parent[i].map(|p| new_of[p])).collect(),
            levels: idx.iter().map(|&i| self.levels[i]).collect(),
        }
    }
}

/// Direct computation: the roots of every remaining component form a class.
pub fn decompose_direct(a: &Structure) -> Result<TreeDecomposition> {
    let mut td = TreeDecomposition { classes: Vec::new(), parent: Vec::new(), levels: Vec::new() };
    // (elements of a remaining component, parent class, level)
    let mut work: Vec<(Vec<usize>, Option<usize>, usize)> =
        a.components().into_iter().map(|c| (c, None, 1)).collect();
    while let Some((comp, parent, level)) = work.pop() {
        let sub = a.induced(&comp);
        let roots: Vec<usize> = roots_of(&sub)?.into_iter().map(|r| comp[r]).collect();
        let id = td.classes.len();
        td.classes.push(roots.clone());
        td.parent.push(parent);
        td.levels.push(level);
        let rest: Vec<usize> = comp.iter().copied().filter(|e| !roots.contains(e)).collect();
        let rest_s = a.induced(&rest);
        for c in rest_s.components() {
            work.push((c.into_iter().map(|i| rest[i]).collect(), Some(id), level + 1));
        }
    }
    Ok(td.normalised())
}

fn unary(a: &Structure, f: &Formula, x: &Var) -> Result<Vec<bool>> {
    let mut env = Env::new();
    env.insert(x.to_string(), Value::Elem(0));
    let mut c = Compiled::new(a, f, &env)?;
    let mut out = Vec::new();
    for e in 0..a.size() {
        env.insert(x.to_string(), Value::Elem(e));
        out.push(c.eval(&env)?);
    }
    Ok(out)
}

fn binary(a: &Structure, f: &Formula, x: &Var, y: &Var) -> Result<Vec<Vec<bool>>> {
    let mut env = Env::new();
    env.insert(x.to_string(), Value::Elem(0));
    env.insert(y.to_string(), Value::Elem(0));
    let mut c = Compiled::new(a, f, &env)?;
    let mut out = vec![vec![false; a.size()]; a.size()];
    for (u, row) in out.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            env.insert(x.to_string(), Value::Elem(u));
            env.insert(y.to_string(), Value::Elem(v));
            *cell = c.eval(&env)?;
        }
    }
    Ok(out)
}

/// The relations the formulas define on one structure.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub level: Vec<Option<usize>>,
    pub eps: Vec<Vec<bool>>,
    pub alpha: Vec<Vec<bool>>,
}

/// Copy of `a` over a larger signature, keeping its relations.
fn widen(a: &Structure, sig: Signature) -> Result<Structure> {
    let mut out = Structure::new(sig, a.size());
    for i in 0..a.sig().len() {
        for t in a.relation(i) {
            out.add_tuple(i, t.clone())?;
        }
    }
    Ok(out)
}

fn collect(level_rows: Vec<Vec<bool>>, eps: Vec<Vec<bool>>, alpha: Vec<Vec<bool>>) -> Result<Evaluated> {
    let mut level = vec![None; eps.len()];
    for (i, row) in level_rows.iter().enumerate() {
        for (e, &on) in row.iter().enumerate() {
            if on {
                if level[e].is_some() {
                    return Err(Error::Verification(format!("element {e} is on two levels")));
                }
                level[e] = Some(i + 1);
            }
        }
    }
    Ok(Evaluated { level, eps, alpha })
}

/// Evaluates the stages in order, adding each defined relation to the
/// structure before the next stage is evaluated.
pub fn evaluate(a: &Structure, f: &DecompFormulas) -> Result<Evaluated> {
    let mut symbols = a.sig().symbols().to_vec();
    let mut cur = a.without_order();
    let mut levels = Vec::new();
    let mut eps = Vec::new();
    for st in &f.stages {
        let rows: Vec<Vec<bool>> = match st.params.len() {
            1 => vec![unary(&cur, &st.body, &st.params[0])?],
            _ => binary(&cur, &st.body, &st.params[0], &st.params[1])?,
        };
        symbols.push((st.name.clone(), st.params.len()));
        let mut next = widen(&cur, Signature::new(symbols.clone())?)?;
        let idx = symbols.len() - 1;
        for (u, row) in rows.iter().enumerate() {
            for (v, &on) in row.iter().enumerate() {
                if on {
                    next.add_tuple(idx, if st.params.len() == 1 { vec![v] } else { vec![u, v] })?;
                }
            }
        }
        cur = next;
        if st.name.starts_with("Lvl") {
            levels.push(rows.into_iter().next().unwrap_or_default());
        } else if st.name == SAME {
            eps = rows;
        }
    }
    let alpha = binary(&cur, &f.alpha, &f.x, &f.y)?;
    collect(levels, eps, alpha)
}

/// Evaluates the fully expanded formulas over the base signature.
pub fn evaluate_expanded(a: &Structure, f: &DecompFormulas) -> Result<Evaluated> {
    let a = a.without_order();
    let mut levels = Vec::new();
    for i in 1..=f.d {
        levels.push(unary(&a, &f.level(i), &f.x)?);
    }
    collect(levels, binary(&a, &f.eps(), &f.x, &f.y)?, binary(&a, &f.alpha(), &f.x, &f.y)?)
}

/// Quotient by the formula-defined equivalence, with parents from `alpha`.
pub fn decompose_by_formulas(a: &Structure, f: &DecompFormulas) -> Result<(TreeDecomposition, Evaluated)> {
    let ev = evaluate(a, f)?;
    let n = a.size();
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for u in 0..n {
        if class_of[u] != usize::MAX {
            continue;
        }
        let c: Vec<usize> = (0..n).filter(|&v| ev.eps[u][v]).collect();
        if !c.contains(&u) {
            return Err(Error::Verification(format!("element {u} is not equivalent to itself")));
        }
        for &v in &c {
            class_of[v] = classes.len();
        }
        classes.push(c);
    }
    let mut parent = vec![None; classes.len()];
    for u in 0..n {
        for v in 0..n {
            if ev.alpha[u][v] {
                let (cu, cv) = (class_of[u], class_of[v]);
                match parent[cv] {
                    Some(p) if p != cu => {
                        return Err(Error::Verification(format!("class of {v} has two parents")));
                    }
                    _ => parent[cv] = Some(cu),
                }
            }
        }
    }
    let mut levels = Vec::new();
    for c in &classes {
        levels.push(ev.level[c[0]].ok_or_else(|| Error::Verification(format!("element {} has no level", c[0])))?);
    }
    Ok((TreeDecomposition { classes, parent, levels }.normalised(), ev))
}

/// Outcome of both computations.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub tree: TreeDecomposition,
    pub evaluated: Evaluated,
    pub paths_agree: bool,
}

/// Decomposes `a`, which must have tree-depth at most `f.d`, and checks that
/// the formula path and the direct path agree.
pub fn decompose(a: &Structure, f: &DecompFormulas) -> Result<Decomposition> {
    let td = tree_depth(a)?;
    if td > f.d {
        return Err(Error::invalid(format!("tree-depth {td} exceeds {}", f.d)));
    }
    let direct = decompose_direct(a)?;
    let (by_formulas, evaluated) = decompose_by_formulas(a, f)?;
    if direct != by_formulas {
        return Err(Error::Verification(format!(
            "formula path {:?} differs from direct path {:?}",
            by_formulas, direct
        )));
    }
    Ok(Decomposition { tree: direct, evaluated, paths_agree: true })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct DecompReport {
    pub checks: Vec<Check>,
}

impl DecompReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.ok).collect()
    }
}

/// Checks `t` against `a`; `ev` supplies the formula-defined relations.
pub fn verify_decomposition(a: &Structure, t: &TreeDecomposition, ev: &Evaluated, d: usize) -> Result<DecompReport> {
    let n = a.size();
    let mut checks = Vec::new();
    let mut add = |name: &'static str, ok: bool, detail: String| checks.push(Check { name, ok, detail });

    let mut partition = vec![0usize; n];
    let mut covered = vec![false; n];
    let mut part_ok = true;
    for (ci, c) in t.classes.iter().enumerate() {
        for &e in c {
            part_ok &= e < n && !covered[e];
            if e < n {
                covered[e] = true;
                partition[e] = ci;
            }
        }
    }
    part_ok &= covered.iter().all(|&b| b) && t.parent.len() == t.classes.len() && t.levels.len() == t.classes.len();
    add("partition", part_ok, String::new());
    if !part_ok {
        return Ok(DecompReport { checks });
    }

    // The formula relation is an equivalence whose classes are those of t.
    let mut eq_ok = true;
    let mut detail = String::new();
    for u in 0..n {
        for v in 0..n {
            let same = partition[u] == partition[v];
            if ev.eps[u][v] != same {
                eq_ok = false;
                detail = format!("({u}, {v})");
            }
        }
    }
    add("equivalence", eq_ok, detail);

    let mut inv_ok = true;
    for u in 0..n {
        for v in 0..n {
            for u2 in 0..n {
                for v2 in 0..n {
                    if ev.eps[u][u2] && ev.eps[v][v2] && ev.alpha[u][v] != ev.alpha[u2][v2] {
                        inv_ok = false;
                    }
                }
            }
        }
    }
    add("alpha_invariance", inv_ok, String::new());

    let mut forest_ok = true;
    for (c, p) in t.parent.iter().enumerate() {
        match p {
            None => forest_ok &= t.levels[c] == 1,
            Some(p) => forest_ok &= *p < t.classes.len() && t.levels[*p] + 1 == t.levels[c],
        }
    }
    add("rooted_forest", forest_ok, String::new());

    let anc: Vec<Vec<usize>> = (0..t.classes.len()).map(|c| t.ancestors(c)).collect();
    let related = |a: usize, b: usize| anc[a].contains(&b) || anc[b].contains(&a);
    let g = a.gaifman();
    let mut adj_ok = true;
    let mut detail = String::new();
    for u in 0..n {
        for &v in &g[u] {
            if !related(partition[u], partition[v]) {
                adj_ok = false;
                detail = format!("edge ({u}, {v})");
            }
        }
    }
    add("adjacency_ancestor", adj_ok, detail);

    let td = tree_depth(a)?;
    add("height", t.height() <= td && td <= d, format!("height {} td {td} d {d}", t.height()));

    let mut roots_ok = true;
    for (c, els) in t.classes.iter().enumerate() {
        let placed_above: Vec<usize> =
            (0..n).filter(|&e| t.levels[partition[e]] < t.levels[c]).collect();
        let rest: Vec<usize> = (0..n).filter(|e| !placed_above.contains(e)).collect();
        let sub = a.induced(&rest);
        let Some(comp) = sub.components().into_iter().find(|k| k.iter().any(|&i| rest[i] == els[0])) else {
            roots_ok = false;
            continue;
        };
        let comp_els: Vec<usize> = comp.iter().map(|&i| rest[i]).collect();
        let mut want: Vec<usize> = roots_of(&a.induced(&comp_els))?.into_iter().map(|r| comp_els[r]).collect();
        want.sort_unstable();
        let mut have = els.clone();
        have.sort_unstable();
        roots_ok &= want == have;
    }
    add("class_is_roots", roots_ok, String::new());

    // Classical decomposition: edges inside bags, occurrences connected.
    let bags: Vec<Vec<usize>> = (0..t.classes.len()).map(|c| t.bag(c)).collect();
    let mut bag_ok = true;
    for u in 0..n {
        for &v in &g[u] {
            bag_ok &= bags.iter().any(|b| b.contains(&u) && b.contains(&v));
        }
    }
    for e in 0..n {
        let nodes: Vec<usize> = (0..bags.len()).filter(|&c| bags[c].contains(&e)).collect();
        // Connected in the tree: exactly one node has its parent outside.
        let tops = nodes.iter().filter(|&&c| t.parent[c].is_none_or(|p| !nodes.contains(&p))).count();
        bag_ok &= tops == 1;
    }
    add("bags", bag_ok, String::new());

    Ok(DecompReport { checks })
}
