use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn programs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

fn owlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owlc")).args(args).env("OWLC_COLOR", "0").current_dir(programs()).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn check_accepts_the_samples() {
    for f in ["list.owl", "point.owl", "hashmap_closed.owl", "list_nohash.owl"] {
        let o = owlc(&["check", f]);
        assert_eq!(code(&o), 0, "{f}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn check_reports_ownership_errors() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_tmp(
        &dir,
        "bad.owl",
        "fn main() -> i32 {\n    let a: Box<i32> = Box(1);\n    let b: Box<i32> = a;\n    return *a;\n}\n",
    );
    let o = owlc(&["check", &f]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.owl:4:") && err.contains("error[OWN001]"), "{err}");
    assert!(!err.contains('\x1b'));

    let o = owlc(&["check", "--json", &f]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["schema"], "owlc/1");
    assert_eq!(v["diagnostics"][0]["code"], "OWN001");
    assert_eq!(v["diagnostics"][0]["line"], 4);
}

#[test]
fn usage_and_io_errors_exit_2() {
    assert_eq!(code(&owlc(&["frobnicate"])), 2);
    assert_eq!(code(&owlc(&["check", "does-not-exist.owl"])), 2);
    assert_eq!(code(&owlc(&["dump", "list.owl"])), 2);
    assert_eq!(code(&owlc(&["--version"])), 0);
}

#[test]
fn dump_ownst_shows_find_process() {
    let o = owlc(&["dump", "--emit-ownst", "list.owl"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    let body: Vec<&str> = out.lines().skip_while(|l| *l != "fn find_process:").collect();
    assert!(body[1].contains("if *l is Nil") && body[1].ends_with("{l, *l}"), "{out}");
    assert!(body.iter().any(|l| l.contains("__t0 = <ret>") && l.ends_with("{l, node.next}")), "{out}");

    let v = json(&owlc(&["dump", "--emit-ownst", "--json", "list.owl"]));
    let f = v["ownst"].as_array().unwrap().iter().find(|f| f["function"] == "find_process").unwrap();
    assert_eq!(f["points"][0]["ownst"], serde_json::json!(["l", "*l"]));
}

#[test]
fn dump_elab_shows_drop_flags() {
    let o = owlc(&["dump", "--emit-elab", "point.owl"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("if __df_p_x { drop(p.x); }"), "{out}");
    let o = owlc(&["dump", "--emit-ir", "point.owl"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("L0:"));
}

#[test]
fn run_passes_arguments() {
    let o = owlc(&["run", "list.owl", "--entry", "hash", "--arg", "-3", "--arg", "4", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["outcome"]["kind"], "final");
    assert_eq!(v["outcome"]["value"], "1");
}

#[test]
fn run_unchecked_reports_memory_errors() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_tmp(&dir, "df.owl", "fn sink(x: Box<i32>) { return; }\nfn main() -> i32 { let a: Box<i32> = Box(1); sink(a); sink(a); return 0; }\n");
    assert_eq!(code(&owlc(&["run", &f])), 1);
    let o = owlc(&["run", "--unchecked", "--json", &f]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["outcome"]["class"], "double-free");
}

#[test]
fn explore_hash_map() {
    let o = owlc(&["explore", "hashmap_closed.owl", "--hosts", "buks.toml", "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["verdict"]["kind"], "safe");
    assert_eq!(v["leaks"], 0);
    assert_eq!(v["results"], serde_json::json!(["254", "280", "302"]));

    let o = owlc(&["explore", "hashmap_closed.owl", "--hosts", "buks_free_other.toml", "--json"]);
    assert_eq!(code(&o), 1);
    let v = json(&o);
    assert_eq!(v["verdict"]["kind"], "violation");
    assert_eq!(v["verdict"]["violation"]["rule"], "frame-touched");
    assert!(!v["witness"].as_array().unwrap().is_empty());

    let o = owlc(&["explore", "list_nohash.owl", "--hosts", "buks_hash_overflow.toml", "--no-monitor", "--json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["verdict"]["kind"], "mem-err");
}

#[test]
fn explore_point_has_two_finals() {
    let o = owlc(&["explore", "point.owl", "--entry", "test", "--hosts", "point.toml", "--json"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["finals"], 2);
    assert_eq!(v["leaks"], 0);
}

#[test]
fn build_writes_c_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("list.c");
    let o = owlc(&["build", "list.owl", "-o", out.to_str().unwrap(), "--runtime-header"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = std::fs::read_to_string(&out).unwrap();
    assert!(c.contains("owl_List* owl_list_find_process(owl_List* l_l, int32_t l_k)"));
    assert!(dir.path().join("owl_runtime.h").exists());

    let bad = write_tmp(&dir, "bad.owl", "fn main() -> i32 { let a: Box<i32>; return *a; }\n");
    let o = owlc(&["build", &bad, "-o", dir.path().join("bad.c").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("bad.c").exists());
}
