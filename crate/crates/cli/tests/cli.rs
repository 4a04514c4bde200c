use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

const P3: &str = "sig E 2\nuniverse 3\nrel E 0 1\nrel E 1 0\nrel E 1 2\nrel E 2 1\n";
const NONEMPTY: &str = "exists x. forall y. x <= y\n";

fn tdll(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdll"))
        .args(args)
        .current_dir(dir)
        .env_remove("TDLL_BUDGET_MS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p3.struct"), P3).unwrap();
    fs::write(dir.path().join("ne.fml"), NONEMPTY).unwrap();
    dir
}

#[test]
fn td_of_path_is_two() {
    let dir = setup();
    let o = tdll(dir.path(), &["td", "--structure", "p3.struct"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "2");
    let o = tdll(dir.path(), &["roots", "--structure", "p3.struct"]);
    assert_eq!(stdout(&o).trim(), "1");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = setup();
    let o = tdll(dir.path(), &["td", "--structure", "p3.struct", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = tdll(dir.path(), &["td", "--structure", "missing.struct"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_reads_assignments() {
    let dir = setup();
    fs::write(dir.path().join("f.fml"), "exists y. E(x,y) & X(y)").unwrap();
    let run = |env: &str| stdout(&tdll(dir.path(), &["eval", "--structure", "p3.struct", "--formula", "f.fml", "--env", env]));
    assert_eq!(run("x=0,X={1}").trim(), "true");
    assert_eq!(run("x=0,X={0,2}").trim(), "false");
}

#[test]
fn translate_report_has_the_documented_fields() {
    let dir = setup();
    let o = tdll(
        dir.path(),
        &["translate", "--from", "oifo", "-d", "2", "--formula", "ne.fml", "--graph-mode", "--emit", "out.fml", "--report", "r.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    for k in ["q", "d", "t", "p", "connected_types"] {
        assert!(r.get(k).is_some(), "missing {k}");
    }
    for k in ["qr", "qad", "size"] {
        assert!(r["output"][k].is_u64(), "missing output.{k}");
    }
    assert_eq!(r["d"], 2);
    assert_eq!(r["output"]["uses_order"], false);
    assert_eq!(r["verification"]["ok"], true);
    assert!(r["verification"]["checked"].as_u64().unwrap() > 0);
    assert_eq!(r["manifest"]["command"], "translate");
    let emitted = fs::read_to_string(dir.path().join("out.fml")).unwrap();
    assert_eq!(r["manifest"]["outputs"]["formula"], hex::encode(Sha256::digest(emitted.as_bytes())));
    assert_eq!(r["manifest"]["inputs"]["formula"], hex::encode(Sha256::digest(NONEMPTY.as_bytes())));
}

#[test]
fn runs_are_deterministic_and_budgets_are_recorded() {
    let dir = setup();
    let args = ["--json", "translate", "--from", "oifo", "-d", "2", "--formula", "ne.fml", "--graph-mode", "--emit", "a.fml"];
    let a = tdll(dir.path(), &args);
    let first = fs::read(dir.path().join("a.fml")).unwrap();
    let b = tdll(dir.path(), &args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, fs::read(dir.path().join("a.fml")).unwrap());

    let mut with_budget = args.to_vec();
    with_budget.extend(["--budget", "600000"]);
    let c = tdll(dir.path(), &with_budget);
    assert_eq!(c.status.code(), Some(0));
    assert_ne!(json(&a)["manifest"], json(&c)["manifest"]);
    assert_eq!(json(&c)["manifest"]["params"]["budget_ms"], 600000);
}

#[test]
fn manifest_replays_a_translation() {
    let dir = setup();
    let o = tdll(dir.path(), &["--json", "translate", "--from", "oifo", "-d", "2", "--formula", "ne.fml", "--graph-mode", "--emit", "x.fml"]);
    let m = json(&o)["manifest"].clone();
    let p = &m["params"];
    let mut args: Vec<String> = vec!["--json".into(), "translate".into()];
    args.extend(["--from".into(), p["from"].as_str().unwrap().into()]);
    args.extend(["-d".into(), p["d"].to_string()]);
    args.extend(["--sigma".into(), p["sigma"].as_str().unwrap().into()]);
    args.extend(["--max-size".into(), p["max_size"].to_string()]);
    args.extend(["--threshold-mode".into(), p["threshold_mode"].as_str().unwrap().into()]);
    args.extend(["--period".into(), p["period"].as_str().unwrap().into()]);
    args.extend(["--verify".into(), p["verify"].to_string()]);
    if p["graph_mode"] == true {
        args.push("--graph-mode".into());
    }
    args.extend(["--formula".into(), "ne.fml".into(), "--emit".into(), "y.fml".into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let replay = tdll(dir.path(), &refs);
    assert_eq!(json(&replay)["manifest"], m);
    assert_eq!(fs::read(dir.path().join("x.fml")).unwrap(), fs::read(dir.path().join("y.fml")).unwrap());
}

#[test]
fn exhausted_budget_exits_with_three() {
    let dir = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_tdll"))
        .args(["enum", "--sigma", "E:2", "--max-size", "5"])
        .current_dir(dir.path())
        .env("TDLL_BUDGET_MS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn verify_reports_mismatches_with_one() {
    let dir = setup();
    fs::write(dir.path().join("edge.fml"), "exists x. exists y. E(x,y)").unwrap();
    let o = tdll(dir.path(), &["verify", "--formula", "ne.fml", "--against", "edge.fml", "-d", "2", "--graph-mode"]);
    assert_eq!(o.status.code(), Some(1));
    fs::write(dir.path().join("ne2.fml"), "exists x. x = x").unwrap();
    let o = tdll(dir.path(), &["verify", "--formula", "ne.fml", "--against", "ne2.fml", "-d", "2", "--graph-mode"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn enum_writes_one_file_per_graph() {
    let dir = setup();
    let o = tdll(dir.path(), &["--json", "enum", "--sigma", "E:2", "--max-size", "4", "--graph-mode", "--out", "g"]);
    // 1 + 1 + 2 + 4 + 11 graphs on at most four vertices.
    assert_eq!(json(&o)["count"], 19);
    assert_eq!(fs::read_dir(dir.path().join("g")).unwrap().count(), 19);
}

#[test]
fn decompose_emits_bags() {
    let dir = setup();
    let o = tdll(dir.path(), &["decompose", "--structure", "p3.struct", "-d", "2", "--emit", "td.json"]);
    assert_eq!(o.status.code(), Some(0));
    let t: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("td.json")).unwrap()).unwrap();
    assert_eq!(t["ok"], true);
    assert_eq!(t["height"], 2);
    // The middle vertex is the only root; each end hangs below it.
    let bags: Vec<Vec<u64>> = serde_json::from_value(t["bags"].clone()).unwrap();
    let mut sorted: Vec<Vec<u64>> = bags;
    sorted.sort();
    assert_eq!(sorted, vec![vec![0, 1], vec![1], vec![1, 2]]);
    let o = tdll(dir.path(), &["decompose", "--structure", "p3.struct", "-d", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lower_family_and_sentence() {
    let dir = setup();
    let o = tdll(dir.path(), &["--json", "lower", "-d", "2", "-n", "1", "--emit-family", "fam", "--emit-phi", "phi.fml"]);
    let v = json(&o);
    assert_eq!(v["holds"], false);
    assert_eq!(v["tower"], "2");
    assert!(dir.path().join("fam/family_d2_n1.struct").exists());
    let o = tdll(dir.path(), &["eval", "--structure", "fam/family_d2_n1.struct", "--formula", "phi.fml"]);
    assert_eq!(stdout(&o).trim(), "false");
}

#[test]
fn cm2fo_builds_and_finds_models() {
    let dir = setup();
    fs::write(dir.path().join("p.cm"), "inc 1\nhalt\n").unwrap();
    let o = tdll(
        dir.path(),
        &["--json", "cm2fo", "--program", "p.cm", "--emit", "phi.fml", "--build-model", "--find-model", "5", "--model-out", "m.struct"],
    );
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["build"]["satisfies"], true);
    assert_eq!(v["search"]["model_size"], 4);
    let o = tdll(dir.path(), &["eval", "--structure", "m.struct", "--formula", "phi.fml"]);
    assert_eq!(stdout(&o).trim(), "true");

    fs::write(dir.path().join("loop.cm"), "dec 1 1 1\nhalt\n").unwrap();
    let o = tdll(dir.path(), &["--json", "cm2fo", "--program", "loop.cm", "--find-model", "6"]);
    assert_eq!(json(&o)["search"]["model_size"], Value::Null);
    let o = tdll(dir.path(), &["cm2fo", "--program", "loop.cm", "--build-model", "--max-steps", "50"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn types_and_qorder() {
    let dir = setup();
    let o = tdll(dir.path(), &["--json", "types", "--sigma", "E:2", "-L", "fo", "-q", "1", "-d", "1", "--max-size", "2", "--graph-mode", "--out", "reps"]);
    let v = json(&o);
    assert_eq!(v["closed_under_union"], true);
    // Empty and nonempty edgeless graphs.
    assert_eq!(v["all"], 2);
    let o = tdll(dir.path(), &["qorder", "--structure", "p3.struct", "-L", "fo", "-q", "2", "--out", "o.struct"]);
    assert_eq!(o.status.code(), Some(0));
    let ordered = fs::read_to_string(dir.path().join("o.struct")).unwrap();
    // The root comes first.
    assert!(ordered.contains("order 1 "), "{ordered}");
}
