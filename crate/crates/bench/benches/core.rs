use criterion::{black_box, criterion_group, criterion_main, Criterion};

use tdll::enumerate::{enum_structures, EnumOptions};
use tdll::fodecomp::{build_decomp_formulas, decompose, Reading};
use tdll::formulas::var;
use tdll::lowerbound::build_eq;
use tdll::treedepth::tree_depth;
use tdll::types::{tp, Logic};
use tdll::{eval_sentence, parse_formula, Budget, Fresh, Signature, Structure};

fn graphs() -> Signature {
    Signature::of(&[("E", 2)])
}

fn path(n: usize) -> Structure {
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    Structure::graph(&graphs(), n, &edges).unwrap()
}

fn enumeration(c: &mut Criterion) {
    c.bench_function("enum graphs <= 6", |b| {
        b.iter(|| enum_structures(&graphs(), EnumOptions::graphs(black_box(6)), &Budget::unlimited()).unwrap())
    });
}

fn treedepth(c: &mut Criterion) {
    let p = path(10);
    c.bench_function("tree_depth P10", |b| b.iter(|| tree_depth(black_box(&p)).unwrap()));
}

fn types(c: &mut Criterion) {
    let p = path(6);
    c.bench_function("tp FO q=3 P6", |b| b.iter(|| tp(Logic::FO, 3, black_box(&p)).unwrap()));
    c.bench_function("tp MSO q=2 P6", |b| b.iter(|| tp(Logic::MSO, 2, black_box(&p)).unwrap()));
}

fn evaluation(c: &mut Criterion) {
    let p = path(8);
    let f = parse_formula("forall x. exists y. exists z. E(x,y) & E(y,z) & !x = z").unwrap();
    c.bench_function("eval rank-3 sentence P8", |b| b.iter(|| eval_sentence(black_box(&p), &f).unwrap()));
    let eq = build_eq(4, &var("x"), &var("y"), &mut Fresh::new());
    c.bench_function("build eq_4", |b| b.iter(|| build_eq(black_box(4), &var("x"), &var("y"), &mut Fresh::new())));
    black_box(eq);
}

fn decomposition(c: &mut Criterion) {
    let f = build_decomp_formulas(&graphs(), 3, Reading::ComponentLocal).unwrap();
    let p = path(7);
    c.bench_function("decompose P7 d=3", |b| b.iter(|| decompose(black_box(&p), &f).unwrap()));
}

criterion_group!(benches, enumeration, treedepth, types, evaluation, decomposition);
criterion_main!(benches);
