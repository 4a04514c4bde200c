//! `tdll` command-line front end.
//!
//! Every subcommand reads its inputs from files, writes artifacts where asked
//! and prints either a short human summary or, with `--json`, one JSON object
//! that carries a run manifest. Exit codes: 0 success, 1 verification failure,
//! 2 usage error, 3 budget exceeded.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use tdll::budget::BUDGET_ENV;
use tdll::cm2fo::{self, CounterProgram};
use tdll::enumerate::{enum_structures, EnumOptions};
use tdll::fodecomp::{build_decomp_formulas, decompose, verify_decomposition, Reading};
use tdll::formulas::metrics;
use tdll::lowerbound as lb;
use tdll::qorder::q_order;
use tdll::translate::{translate, verify_equivalence, PeriodSource, Pipeline, ThresholdMode, TranslateOptions};
use tdll::treedepth::{roots_of, tree_depth};
use tdll::types::{realized_types, stabilization_threshold, Logic, TableKind, TableOptions};
use tdll::{eval, parse_formula, parse_structure, render, Budget, Env, Error, Signature, Structure, Value};

#[derive(Parser)]
#[command(name = "tdll", version, about = "Logics on structures of bounded tree-depth")]
struct Cli {
    /// Print one JSON object instead of plain text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a formula on a structure.
    Eval(EvalArgs),
    /// Enumerate structures up to isomorphism.
    Enum(EnumArgs),
    /// Tree-depth of a structure.
    Td(StructArg),
    /// Elements whose removal lowers the tree-depth.
    Roots(StructArg),
    /// Table of realized types.
    Types(TypesArgs),
    /// Canonical q-order of a structure.
    Qorder(QorderArgs),
    /// Translate a sentence to first-order logic.
    Translate(TranslateArgs),
    /// Compare two sentences on all small structures of bounded tree-depth.
    Verify(VerifyArgs),
    /// Emit the separating family and its sentence.
    Lower(LowerArgs),
    /// Definable tree decomposition of a structure.
    Decompose(DecomposeArgs),
    /// Counter-machine sentence, model search and model construction.
    Cm2fo(Cm2foArgs),
}

#[derive(Args)]
struct StructArg {
    #[arg(long)]
    structure: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    formula: PathBuf,
    /// Assignments such as `x=3,X={0,1}`.
    #[arg(long)]
    env: Option<String>,
}

#[derive(Args)]
struct EnumArgs {
    /// Signature such as `E:2,R:1`.
    #[arg(long)]
    sigma: String,
    #[arg(long)]
    max_size: usize,
    #[arg(long, default_value_t = 0)]
    min_size: usize,
    #[arg(long)]
    td: Option<usize>,
    #[arg(long)]
    connected: bool,
    #[arg(long)]
    graph_mode: bool,
    /// Directory receiving one file per structure.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TypesArgs {
    #[arg(long)]
    sigma: String,
    #[arg(short = 'L', long = "logic", default_value = "fo")]
    logic: String,
    #[arg(short, long)]
    q: u32,
    #[arg(short, long)]
    d: usize,
    /// Largest connected structure enumerated.
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    /// Wall-time budget in milliseconds.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    connected: bool,
    #[arg(long)]
    graph_mode: bool,
    /// unordered, qordered or component.
    #[arg(long, default_value = "unordered")]
    kind: String,
    /// Directory receiving one representative per type.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QorderArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(short = 'L', long = "logic", default_value = "fo")]
    logic: String,
    #[arg(short, long)]
    q: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TranslateArgs {
    /// oifo, mso or oimso.
    #[arg(long)]
    from: String,
    #[arg(short, long)]
    d: usize,
    #[arg(long)]
    formula: PathBuf,
    #[arg(long, default_value = "E:2")]
    sigma: String,
    #[arg(long)]
    graph_mode: bool,
    /// Largest connected structure in the type tables.
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    #[arg(long, default_value = "empirical")]
    threshold_mode: String,
    /// types or automaton.
    #[arg(long, default_value = "types")]
    period: String,
    #[arg(long)]
    budget: Option<u64>,
    /// Verify the output on all structures up to this size (0 skips).
    #[arg(long, default_value_t = 4)]
    verify: usize,
    #[arg(long)]
    emit: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    formula: PathBuf,
    /// Candidate equivalent on structures of tree-depth at most `d`.
    #[arg(long)]
    against: PathBuf,
    #[arg(short, long)]
    d: usize,
    #[arg(long, default_value = "E:2")]
    sigma: String,
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    #[arg(long)]
    graph_mode: bool,
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct LowerArgs {
    #[arg(short, long)]
    d: usize,
    #[arg(short, long)]
    n: usize,
    #[arg(long)]
    emit_family: Option<PathBuf>,
    #[arg(long)]
    emit_phi: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(short, long)]
    d: usize,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct Cm2foArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Search for a model with at most this many elements.
    #[arg(long)]
    find_model: Option<usize>,
    /// Run the machine and build the model of its halting run.
    #[arg(long)]
    build_model: bool,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    /// Where to write a model found or built.
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u64>,
}

/// Failure carrying its exit code.
struct Fail {
    code: u8,
    msg: String,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget(_) => 3,
            Error::Verification(_) => 1,
            _ => 2,
        };
        Fail { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Fail {
    Fail { code: 2, msg: msg.into() }
}

/// Result of one command: text, JSON body and exit status.
struct Out {
    text: String,
    json: Json,
    code: u8,
}

impl Out {
    fn ok(text: String, json: Json) -> Self {
        Out { text, json, code: 0 }
    }
}

/// Content hashes of inputs and outputs plus every parameter.
struct Manifest {
    command: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    params: serde_json::Map<String, Json>,
}

impl Manifest {
    fn new(command: &'static str) -> Self {
        Manifest { command, inputs: BTreeMap::new(), outputs: BTreeMap::new(), params: serde_json::Map::new() }
    }

    fn param(&mut self, k: &str, v: impl Into<Json>) {
        self.params.insert(k.to_string(), v.into());
    }

    fn read(&mut self, role: &str, path: &Path) -> Result<String, Fail> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(role.to_string(), sha256(&text));
        Ok(text)
    }

    fn write(&mut self, role: &str, path: &Path, text: &str) -> Result<(), Fail> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
        }
        fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.insert(role.to_string(), sha256(text));
        Ok(())
    }

    fn to_json(&self) -> Json {
        json!({
            "tool": "tdll",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "inputs": self.inputs,
            "params": self.params,
            "outputs": self.outputs,
        })
    }
}

fn sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The smaller of `--budget` and `TDLL_BUDGET_MS`.
fn budget_ms(flag: Option<u64>) -> Option<u64> {
    let env = std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse::<u64>().ok());
    match (flag, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn make_budget(ms: Option<u64>) -> Budget {
    ms.map_or_else(Budget::unlimited, Budget::millis)
}

fn parse_sigma(s: &str) -> Result<Signature, Fail> {
    let mut syms = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, ar) = part.split_once(':').ok_or_else(|| usage(format!("expected NAME:ARITY, got `{part}`")))?;
        let ar = ar.parse::<usize>().map_err(|_| usage(format!("bad arity in `{part}`")))?;
        syms.push((name.to_string(), ar));
    }
    Ok(Signature::new(syms)?)
}

fn sigma_string(sig: &Signature) -> String {
    sig.symbols().iter().map(|(n, k)| format!("{n}:{k}")).collect::<Vec<_>>().join(",")
}

fn parse_logic(s: &str) -> Result<Logic, Fail> {
    Ok(Logic::parse(s)?)
}

/// Splits `x=3,X={0,1}` at commas outside braces.
fn parse_env(s: &str) -> Result<Env, Fail> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    let mut env = Env::new();
    for p in parts.into_iter().map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = p.split_once('=').ok_or_else(|| usage(format!("expected NAME=VALUE, got `{p}`")))?;
        let v = v.trim();
        let val = if let Some(inner) = v.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            let mut mask = 0u64;
            for e in inner.split(',').map(str::trim).filter(|e| !e.is_empty()) {
                let e: u32 = e.parse().map_err(|_| usage(format!("bad element `{e}`")))?;
                if e >= 64 {
                    return Err(usage(format!("set element {e} out of range")));
                }
                mask |= 1 << e;
            }
            Value::Set(mask)
        } else {
            Value::Elem(v.parse().map_err(|_| usage(format!("bad element `{v}`")))?)
        };
        env.insert(k.trim().to_string(), val);
    }
    Ok(env)
}

fn read_structure(m: &mut Manifest, role: &str, path: &Path) -> Result<Structure, Fail> {
    Ok(parse_structure(&m.read(role, path)?)?)
}

fn cmd_eval(a: &EvalArgs, m: &mut Manifest) -> Result<Out, Fail> {
    let s = read_structure(m, "structure", &a.structure)?;
    let f = parse_formula(&m.read("formula", &a.formula)?)?;
    let env = match &a.env {
        Some(e) => parse_env(e)?,
        None => Env::new(),
    };
    m.param("env", a.env.clone().unwrap_or_default());
    let v = eval(&s, &f, &env)?;
    Ok(Out::ok(v.to_string(), json!({ "value": v })))
}

fn cmd_enum(a: &EnumArgs, m: &mut Manifest, budget: &Budget) -> Result<Out, Fail> {
    let sig = parse_sigma(&a.sigma)?;
    m.param("sigma", sigma_string(&sig));
    m.param("max_size", a.max_size);
    m.param("min_size", a.min_size);
    m.param("td", a.td);
    m.param("connected", a.connected);
    m.param("graph_mode", a.graph_mode);
    let opts = EnumOptions {
        min_size: a.min_size,
        max_size: a.max_size,
        connected_only: a.connected,
        td_bound: a.td,
        graph_mode: a.graph_mode,
    };
    let all = enum_structures(&sig, opts, budget)?;
    let mut files = Vec::new();
    if let Some(dir) = &a.out {
        for (i, s) in all.iter().enumerate() {
            let name = format!("s{:05}_n{}.struct", i, s.size());
            m.write(&name, &dir.join(&name), &s.render())?;
            files.push(name);
        }
    }
    let mut counts = BTreeMap::new();
    for s in &all {
        *counts.entry(s.size()).or_insert(0usize) += 1;
    }
    let mut text = format!("{} structures", all.len());
    for (n, c) in &counts {
        text.push_str(&format!("\n  size {n}: {c}"));
    }
    if a.out.is_none() {
        for s in &all {
            text.push_str("\n---\n");
            text.push_str(s.render().trim_end());
        }
    }
    let by_size: BTreeMap<String, usize> = counts.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Ok(Out::ok(text, json!({ "count": all.len(), "by_size": by_size, "files": files })))
}

fn cmd_td(a: &StructArg, m: &mut Manifest) -> Result<Out, Fail> {
    let s = read_structure(m, "structure", &a.structure)?;
    let td = tree_depth(&s)?;
    Ok(Out::ok(td.to_string(), json!({ "td": td })))
}

fn cmd_roots(a: &StructArg, m: &mut Manifest) -> Result<Out, Fail> {
    let s = read_structure(m, "structure", &a.structure)?;
    let roots = roots_of(&s)?;
    let text = roots.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" ");
    Ok(Out::ok(text, json!({ "roots": roots })))
}

fn cmd_types(a: &TypesArgs, m: &mut Manifest, budget: &Budget) -> Result<Out, Fail> {
    let sig = parse_sigma(&a.sigma)?;
    let logic = parse_logic(&a.logic)?;
    let kind = match a.kind.as_str() {
        "unordered" => TableKind::Unordered,
        "qordered" => TableKind::QOrdered,
        "component" => TableKind::ComponentOrdered,
        k => return Err(usage(format!("unknown table kind `{k}`"))),
    };
    m.param("sigma", sigma_string(&sig));
    m.param("logic", logic.name());
    m.param("q", a.q);
    m.param("d", a.d);
    m.param("max_size", a.max_size);
    m.param("connected", a.connected);
    m.param("graph_mode", a.graph_mode);
    m.param("kind", a.kind.clone());
    let opts = TableOptions { graph_mode: a.graph_mode, connected_only: a.connected, ..TableOptions::new(a.max_size) };
    let table = realized_types(&sig, logic, a.q, a.d, kind, opts, budget)?;
    let entries = if a.connected { &table.connected } else { &table.all };
    let mut rows = Vec::new();
    let mut text = format!(
        "{} connected types, {} types, closed under union: {}",
        table.connected.len(),
        table.all.len(),
        table.closed_under_union
    );
    for e in entries {
        let threshold = stabilization_threshold(&e.ty, 64, budget)?;
        let file = match &a.out {
            Some(dir) => {
                let name = format!("{}.struct", e.ty.short_id());
                m.write(&name, &dir.join(&name), &e.rep.render())?;
                Some(name)
            }
            None => None,
        };
        let shown = threshold.map_or("-".to_string(), |t| t.to_string());
        text.push_str(&format!("\n{} size={} threshold={shown}", e.ty.digest(), e.rep.size()));
        if let Some(f) = &file {
            text.push_str(&format!(" {f}"));
        }
        rows.push(json!({
            "type": e.ty.digest(),
            "representative": file,
            "rep_size": e.rep.size(),
            "threshold": threshold,
        }));
    }
    Ok(Out::ok(
        text,
        json!({
            "connected": table.connected.len(),
            "all": table.all.len(),
            "closed_under_union": table.closed_under_union,
            "types": rows,
        }),
    ))
}

fn cmd_qorder(a: &QorderArgs, m: &mut Manifest) -> Result<Out, Fail> {
    let s = read_structure(m, "structure", &a.structure)?;
    let logic = parse_logic(&a.logic)?;
    m.param("logic", logic.name());
    m.param("q", a.q);
    let o = q_order(logic, a.q, &s)?;
    let text = o.render();
    if let Some(p) = &a.out {
        m.write("ordered", p, &text)?;
    }
    Ok(Out::ok(text.trim_end().to_string(), json!({ "order": o.order() })))
}

fn cmd_translate(a: &TranslateArgs, m: &mut Manifest, budget_ms: Option<u64>) -> Result<Out, Fail> {
    let sig = parse_sigma(&a.sigma)?;
    let pipeline = Pipeline::parse(&a.from)?;
    let threshold = ThresholdMode::parse(&a.threshold_mode)?;
    let period = match a.period.as_str() {
        "types" => PeriodSource::Types,
        "automaton" => PeriodSource::WordAutomaton,
        p => return Err(usage(format!("unknown period source `{p}`"))),
    };
    let phi = parse_formula(&m.read("formula", &a.formula)?)?;
    m.param("from", pipeline.name());
    m.param("sigma", sigma_string(&sig));
    m.param("d", a.d);
    m.param("graph_mode", a.graph_mode);
    m.param("max_size", a.max_size);
    m.param("threshold_mode", threshold.name());
    m.param("period", a.period.clone());
    m.param("budget_ms", budget_ms);
    m.param("verify", a.verify);
    let opts = TranslateOptions { graph_mode: a.graph_mode, ..TranslateOptions::new(a.d, a.max_size) }
        .threshold(threshold)
        .period(period);
    let budget = make_budget(budget_ms);
    let tr = translate(pipeline, &sig, &phi, &opts, &budget)?;
    let r = &tr.report;
    m.param("q", r.q);
    m.param("t", r.t);
    m.param("p", r.p);
    m.param("b", r.root_bound);
    let rendered = render(&tr.formula);
    if let Some(p) = &a.emit {
        m.write("formula", p, &format!("{rendered}\n"))?;
    }
    let verification = if a.verify > 0 {
        let v = verify_equivalence(&sig, &phi, &tr.formula, a.d, a.verify, a.graph_mode, &budget)?;
        Some(v)
    } else {
        None
    };
    let ok = verification.as_ref().map_or(true, |v| v.ok());
    let levels: Vec<Json> = r
        .levels
        .iter()
        .map(|l| {
            json!({
                "d": l.d,
                "signature": l.signature,
                "connected_types": l.connected_types,
                "structures": l.structures,
                "cap": l.cap,
                "root_bound": l.root_bound,
                "definer_pairs": l.definer_pairs,
            })
        })
        .collect();
    let type_period = match &r.type_period {
        None => Json::Null,
        Some(Ok(p)) => json!(p),
        Some(Err(e)) => json!({ "error": e }),
    };
    let report = json!({
        "pipeline": pipeline.name(),
        "logic": r.logic.name(),
        "q": r.q,
        "d": r.d,
        "threshold_mode": r.threshold_mode.name(),
        "t": r.t,
        "p": r.p,
        "b": r.root_bound,
        "type_period": type_period,
        "connected_types": r.connected_types.len(),
        "connected_type_ids": r.connected_types,
        "structures": r.structures,
        "max_size": r.max_size,
        "r_size": r.r_size,
        "levels": levels,
        "input": { "qr": r.input.qr, "qad": r.input.qad, "size": r.input.size },
        "output": {
            "qr": r.output.qr,
            "qad": r.output.qad,
            "size": r.output.size,
            "uses_order": r.output.uses_order,
            "uses_sets": r.output.uses_sets,
            "uses_mod": r.output.uses_mod,
        },
        "verification": verification.as_ref().map(|v| json!({
            "max_size": v.max_size,
            "d": v.d,
            "checked": v.checked,
            "ok": v.ok(),
            "mismatch": v.mismatch.as_ref().map(|x| json!({
                "structure": x.structure.render(),
                "expected": x.expected,
                "got": x.got,
            })),
        })),
    });
    if let Some(p) = &a.report {
        let mut full = report.clone();
        full["manifest"] = m.to_json();
        m.write("report", p, &format!("{}\n", serde_json::to_string_pretty(&full).unwrap()))?;
    }
    let mut text = format!(
        "{} d={} q={} t={} p={} |T^conn|={} qr={} qad={} size={}",
        pipeline.name(),
        r.d,
        r.q,
        r.t.map_or("-".into(), |t| t.to_string()),
        r.p.map_or("-".into(), |p| p.to_string()),
        r.connected_types.len(),
        r.output.qr,
        r.output.qad,
        r.output.size
    );
    if let Some(v) = &verification {
        text.push_str(&format!("\nverified on {} structures <= {}: {}", v.checked, v.max_size, if v.ok() { "ok" } else { "MISMATCH" }));
    }
    if a.emit.is_none() {
        text.push('\n');
        text.push_str(&rendered);
    }
    Ok(Out { text, json: report, code: if ok { 0 } else { 1 } })
}

fn cmd_verify(a: &VerifyArgs, m: &mut Manifest, budget: &Budget) -> Result<Out, Fail> {
    let sig = parse_sigma(&a.sigma)?;
    let phi = parse_formula(&m.read("formula", &a.formula)?)?;
    let psi = parse_formula(&m.read("against", &a.against)?)?;
    m.param("sigma", sigma_string(&sig));
    m.param("d", a.d);
    m.param("max_size", a.max_size);
    m.param("graph_mode", a.graph_mode);
    let v = verify_equivalence(&sig, &phi, &psi, a.d, a.max_size, a.graph_mode, budget)?;
    let mut text = format!("checked {} structures <= {} with td <= {}: {}", v.checked, a.max_size, a.d, if v.ok() { "equivalent" } else { "MISMATCH" });
    if let Some(x) = &v.mismatch {
        text.push_str(&format!("\nexpected {} got {} on\n{}", x.expected, x.got, x.structure.render().trim_end()));
    }
    let body = json!({
        "checked": v.checked,
        "ok": v.ok(),
        "mismatch": v.mismatch.as_ref().map(|x| json!({ "structure": x.structure.render(), "expected": x.expected, "got": x.got })),
    });
    Ok(Out { text, json: body, code: if v.ok() { 0 } else { 1 } })
}

fn cmd_lower(a: &LowerArgs, m: &mut Manifest) -> Result<Out, Fail> {
    m.param("d", a.d);
    m.param("n", a.n);
    let fam = lb::build_family(a.d, a.n)?;
    let phi = lb::build_phi_lower(a.d);
    let holds = tdll::eval_sentence(&fam, &phi)?;
    let tower = lb::tower(a.d)?;
    if let Some(dir) = &a.emit_family {
        let name = format!("family_d{}_n{}.struct", a.d, a.n);
        m.write("family", &dir.join(name), &fam.render())?;
    }
    if let Some(p) = &a.emit_phi {
        m.write("phi", p, &format!("{}\n", render(&phi)))?;
    }
    let mt = metrics(&phi);
    let text = format!(
        "F_{}^{}: {} elements, phi_{} {} (tower({}) = {tower}), phi size {} qr {}",
        a.d,
        a.n,
        fam.size(),
        a.d,
        holds,
        a.d,
        mt.size,
        mt.qr
    );
    Ok(Out::ok(
        text,
        json!({
            "elements": fam.size(),
            "holds": holds,
            "tower": tower.to_string(),
            "phi": { "size": mt.size, "qr": mt.qr, "qad": mt.qad },
        }),
    ))
}

fn cmd_decompose(a: &DecomposeArgs, m: &mut Manifest) -> Result<Out, Fail> {
    let s = read_structure(m, "structure", &a.structure)?;
    m.param("d", a.d);
    let f = build_decomp_formulas(s.sig(), a.d, Reading::ComponentLocal)?;
    let dec = decompose(&s, &f)?;
    let rep = verify_decomposition(&s, &dec.tree, &dec.evaluated, a.d)?;
    let t = &dec.tree;
    let bags: Vec<Vec<usize>> = (0..t.classes.len()).map(|c| t.bag(c)).collect();
    let checks: Vec<Json> = rep.checks.iter().map(|c| json!({ "name": c.name, "ok": c.ok, "detail": c.detail })).collect();
    let body = json!({
        "classes": t.classes,
        "parents": t.parent,
        "levels": t.levels,
        "bags": bags,
        "height": t.height(),
        "paths_agree": dec.paths_agree,
        "checks": checks,
        "ok": rep.ok(),
    });
    if let Some(p) = &a.emit {
        m.write("decomposition", p, &format!("{}\n", serde_json::to_string_pretty(&body).unwrap()))?;
    }
    let mut text = format!("{} classes, height {}", t.classes.len(), t.height());
    for (c, class) in t.classes.iter().enumerate() {
        let parent = t.parent[c].map_or("-".to_string(), |p| p.to_string());
        text.push_str(&format!("\n{c}: level {} parent {parent} class {:?} bag {:?}", t.levels[c], class, bags[c]));
    }
    for c in rep.failures() {
        text.push_str(&format!("\ncheck {} FAILED: {}", c.name, c.detail));
    }
    Ok(Out { text, json: body, code: if rep.ok() { 0 } else { 1 } })
}

fn cmd_cm2fo(a: &Cm2foArgs, m: &mut Manifest, budget: &Budget) -> Result<Out, Fail> {
    let prog = CounterProgram::parse(&m.read("program", &a.program)?)?;
    m.param("find_model", a.find_model);
    m.param("build_model", a.build_model);
    m.param("max_steps", a.max_steps);
    let phi = cm2fo::build_sentence(&prog);
    let mt = metrics(&phi);
    if let Some(p) = &a.emit {
        m.write("phi", p, &format!("{}\n", render(&phi)))?;
    }
    let mut text = format!("{} instructions, sentence size {} qr {}", prog.len(), mt.size, mt.qr);
    let mut body = json!({ "instructions": prog.len(), "phi": { "size": mt.size, "qr": mt.qr } });
    let mut code = 0;
    let mut model: Option<Structure> = None;
    if a.build_model {
        let run = cm2fo::run_machine(&prog, a.max_steps);
        if run.halted {
            let w = cm2fo::encode_run(&run.configs);
            let ext = cm2fo::build_matching_extension(&w, &prog)?;
            let sat = tdll::eval_sentence(&ext, &phi)?;
            let td = tree_depth(&ext.without_order())?;
            text.push_str(&format!(
                "\nhalts after {} steps; model of {} elements, satisfies phi: {sat}, tree-depth {td}\nword {}",
                run.configs.len() - 1,
                ext.size(),
                cm2fo::show_word(&w)
            ));
            body["build"] = json!({ "halted": true, "steps": run.configs.len() - 1, "size": ext.size(), "satisfies": sat, "td": td });
            if !sat || td > 2 {
                code = 1;
            }
            model = Some(ext);
        } else {
            text.push_str(&format!("\nno halt within {} steps", a.max_steps));
            body["build"] = json!({ "halted": false });
            code = 1;
        }
    }
    if let Some(n) = a.find_model {
        let s = cm2fo::find_model(&prog, n, budget)?;
        match &s.model {
            Some(found) => text.push_str(&format!("\nmodel with {} elements (searched {} candidates)", found.size(), s.candidates)),
            None => text.push_str(&format!("\nno model with at most {n} elements (searched {} candidates)", s.candidates)),
        }
        body["search"] = json!({
            "max_size": n,
            "words": s.words,
            "candidates": s.candidates,
            "model_size": s.model.as_ref().map(|x| x.size()),
        });
        if model.is_none() {
            model = s.model;
        }
    }
    if let (Some(p), Some(x)) = (&a.model_out, &model) {
        m.write("model", p, &x.render())?;
    }
    Ok(Out { text, json: body, code })
}

fn run(cli: &Cli) -> Result<(Out, Manifest), Fail> {
    let (name, flag): (&'static str, Option<u64>) = match &cli.cmd {
        Cmd::Eval(_) => ("eval", None),
        Cmd::Enum(_) => ("enum", None),
        Cmd::Td(_) => ("td", None),
        Cmd::Roots(_) => ("roots", None),
        Cmd::Types(a) => ("types", a.budget),
        Cmd::Qorder(_) => ("qorder", None),
        Cmd::Translate(a) => ("translate", a.budget),
        Cmd::Verify(a) => ("verify", a.budget),
        Cmd::Lower(_) => ("lower", None),
        Cmd::Decompose(_) => ("decompose", None),
        Cmd::Cm2fo(a) => ("cm2fo", a.budget),
    };
    let ms = budget_ms(flag);
    let budget = make_budget(ms);
    let mut m = Manifest::new(name);
    m.param("budget_ms", ms);
    let out = match &cli.cmd {
        Cmd::Eval(a) => cmd_eval(a, &mut m)?,
        Cmd::Enum(a) => cmd_enum(a, &mut m, &budget)?,
        Cmd::Td(a) => cmd_td(a, &mut m)?,
        Cmd::Roots(a) => cmd_roots(a, &mut m)?,
        Cmd::Types(a) => cmd_types(a, &mut m, &budget)?,
        Cmd::Qorder(a) => cmd_qorder(a, &mut m)?,
        Cmd::Translate(a) => cmd_translate(a, &mut m, ms)?,
        Cmd::Verify(a) => cmd_verify(a, &mut m, &budget)?,
        Cmd::Lower(a) => cmd_lower(a, &mut m)?,
        Cmd::Decompose(a) => cmd_decompose(a, &mut m)?,
        Cmd::Cm2fo(a) => cmd_cm2fo(a, &mut m, &budget)?,
    };
    if budget.exhausted() {
        return Err(Fail { code: 3, msg: "wall-time budget exhausted".into() });
    }
    Ok((out, m))
}

/// Prints a line, ignoring a closed stdout.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok((out, m)) => {
            if cli.json {
                let mut body = out.json;
                if let Json::Object(map) = &mut body {
                    map.insert("exit_code".into(), json!(out.code));
                    map.insert("manifest".into(), m.to_json());
                }
                emit(&serde_json::to_string_pretty(&body).unwrap());
            } else {
                emit(&out.text);
            }
            ExitCode::from(out.code)
        }
        Err(f) => {
            if cli.json {
                emit(&json!({ "error": f.msg, "exit_code": f.code }).to_string());
            }
            eprintln!("tdll: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
