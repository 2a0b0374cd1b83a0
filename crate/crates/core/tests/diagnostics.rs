mod common;

use owl_core::pipeline::compile_str;

/// First diagnostic code the pipeline reports, parse and wf errors first.
fn first_code(text: &str) -> Option<String> {
    match compile_str(text) {
        Err(d) => d.first().map(|d| d.code.to_string()),
        Ok(c) => c.report.diagnostics().first().map(|d| d.code.to_string()),
    }
}

const CASES: &[(&str, &str)] = &[
    ("P001", "fn main() -> i32 { return 1 + ; }"),
    ("P002", "enum E { A, B }\nfn main() -> i32 { let e: E = E::A; match e { E::A => {} } return 0; }"),
    ("WF001", "fn f() { return; }\nfn f() { return; }"),
    ("WF002", "struct S { a: i32 }\nstruct S { b: i32 }"),
    ("WF003", "fn f(x: Box<Nope>) { return; }"),
    ("WF004", "struct S { s: S }"),
    ("WF006", "fn main() -> i32 { let x: i32 = g(); return x; }"),
    ("WF012", "fn main() -> i32 { let b: bool = true; return b; }"),
    ("WF013", "struct S { a: i32 }\nfn f(s: S) { return; }"),
    ("WF014", "fn g(a: i32) -> i32 { return a; }\nfn main() -> i32 { return g(1, 2); }"),
    ("OWN001", "fn main() -> i32 { let a: Box<i32> = Box(1); let b: Box<i32> = a; return *a; }"),
    (
        "OWN002",
        "fn sink(x: Box<i32>) { return; }\nfn main() -> i32 { let a: Box<i32> = Box(1); sink(a); sink(a); return 0; }",
    ),
    ("OWN004", "fn main() -> i32 { let a: Box<i32>; return *a; }"),
];

#[test]
fn each_error_gets_its_code() {
    let mut wrong = Vec::new();
    for (code, text) in CASES {
        let got = first_code(text);
        if got.as_deref() != Some(*code) {
            wrong.push(format!("{code}: got {got:?} for {text}"));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn sample_programs_check_clean() {
    for name in ["list.owl", "point.owl", "hashmap_closed.owl", "list_nohash.owl"] {
        let c = common::compile_program(name);
        assert!(c.is_checked(), "{name}: {:?}", c.report.errors);
    }
}

#[test]
fn moves_after_branches_are_rejected_only_on_the_moved_path() {
    let ok = "extern fn rand() -> bool;\nfn main() -> i32 { let a: Box<i32> = Box(1); let b: Box<i32>; if rand() { b = a; a = Box(2); } else { b = Box(3); } return *a + *b; }";
    assert_eq!(first_code(ok), None);
    let bad = "extern fn rand() -> bool;\nfn main() -> i32 { let a: Box<i32> = Box(1); let b: Box<i32>; if rand() { b = a; } else { b = Box(3); } return *a + *b; }";
    assert_eq!(first_code(bad).as_deref(), Some("OWN001"));
}

#[test]
fn rendered_diagnostic_points_at_the_source() {
    let src =
        owl_core::parse::SourceFile::new("bad.owl", "fn main() -> i32 {\n    let a: Box<i32>;\n    return *a;\n}\n");
    let c = owl_core::pipeline::compile(&src).unwrap();
    let d = &c.report.diagnostics()[0];
    let text = d.render("bad.owl", false);
    assert!(text.starts_with("bad.owl:3:"), "{text}");
    assert!(text.contains("OWN004"), "{text}");
    let json = d.to_json("bad.owl");
    assert_eq!(json["code"], "OWN004");
    assert_eq!(json["line"], 3);
}

#[test]
fn memerr_taxonomy() {
    for (want, text) in common::criteria::TAXONOMY {
        assert_eq!(common::criteria::taxonomy_class(text), *want, "{text}");
    }
}
