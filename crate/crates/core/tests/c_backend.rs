//! Emitted C against the interpreter. Needs a C compiler (`CC`, default
//! `cc`); the tests are skipped without one.

mod common;

use std::path::Path;
use std::process::Command;

use common::*;
use owl_core::ast::{CompositeKind, Module, Type};
use owl_core::cgen::{emit, RUNTIME_HEADER};
use owl_core::mem::layout::{field_offset, size_of};
use owl_core::sem::Outcome;

const FLAGS: &[&str] = &["-std=c99", "-Wall", "-Wextra", "-pedantic", "-Werror", "-O1"];

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

/// Compiles `main.c` (which includes `prog.c`) with the runtime in its own
/// translation unit, so hosts may define functions with libc names.
fn build(dir: &Path, cc: &str, prog: &str, host: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("owl_runtime.h"), RUNTIME_HEADER).unwrap();
    std::fs::write(dir.join("runtime.c"), "#define OWL_RUNTIME_IMPL\n#include \"owl_runtime.h\"\n").unwrap();
    std::fs::write(dir.join("prog.c"), prog).unwrap();
    std::fs::write(dir.join("main.c"), host).unwrap();
    let bin = dir.join("prog");
    let out = Command::new(cc)
        .args(FLAGS)
        .arg("-o")
        .arg(&bin)
        .arg(dir.join("main.c"))
        .arg(dir.join("runtime.c"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}\n{prog}\n{host}", String::from_utf8_lossy(&out.stderr));
    bin
}

fn run(bin: &Path, args: &[String]) -> String {
    let out = Command::new(bin).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

fn c_source(m: &Module) -> String {
    emit(m).unwrap()
}

#[test]
fn point_runs_natively_without_leaks() {
    let Some(cc) = cc() else { return eprintln!("no C compiler; skipped") };
    let comp = compile_program("point.owl");
    let host = r#"#include <stdio.h>
#include "prog.c"
int atoi(const char *);
static uint8_t coin;
uint8_t rand(void) { return coin; }
int main(int argc, char **argv) {
    (void)argc;
    coin = (uint8_t)atoi(argv[1]);
    owl_point_test();
    printf("%ld\n", owl_live_blocks);
    return 0;
}
"#;
    let dir = tempfile::tempdir().unwrap();
    let bin = build(dir.path(), &cc, &c_source(&comp.elaborated), host);
    for coin in [true, false] {
        let obs = observe_entry(&comp.elaborated, "test", &[coin]);
        assert_eq!(obs.outcome, Outcome::Final { value: "()".into() });
        assert!(obs.leaks.is_empty());
        assert_eq!(run(&bin, &[(coin as u8).to_string()]), "0");
    }
}

/// The hash map host written in C against the emitted list module.
const BUKS_HOST: &str = r#"#include <stdio.h>
#include "prog.c"
#define BUCKETS 4
typedef struct { int32_t range; owl_List *buckets[BUCKETS]; } hmap;
static const int32_t entries[6][2] = {{1, 10}, {2, 20}, {5, 50}, {6, 60}, {9, 90}, {-3, 30}};
int32_t *process(int32_t *v) { *v ^= 42; return v; }
static owl_List **find_bucket(hmap *h, int32_t k) { return &h->buckets[owl_hashmap_closed_hash(k, h->range)]; }
static void hmap_process(hmap *h, int32_t k) { owl_List **slot = find_bucket(h, k); *slot = owl_hashmap_closed_find_process(*slot, k); }
int atoi(const char *);
int main(int argc, char **argv) {
    hmap *h = owl_alloc(sizeof *h);
    int32_t sum = 0;
    int i;
    (void)argc;
    h->range = BUCKETS;
    for (i = 0; i < BUCKETS; i++) h->buckets[i] = owl_hashmap_closed_empty();
    for (i = 0; i < 6; i++) {
        owl_List **slot = find_bucket(h, entries[i][0]);
        *slot = owl_hashmap_closed_insert(*slot, entries[i][0], entries[i][1]);
    }
    hmap_process(h, atoi(argv[1]));
    for (i = 0; i < BUCKETS; i++) {
        owl_List *l = h->buckets[i];
        while (l->tag == 1) {
            sum += l->body.v_Cons.f_key + *l->body.v_Cons.f_val;
            l = l->body.v_Cons.f_next;
        }
    }
    for (i = 0; i < BUCKETS; i++) owl_hashmap_closed_free_list(h->buckets[i]);
    owl_free(h);
    printf("%d %ld\n", sum, owl_live_blocks);
    return 0;
}
"#;

#[test]
fn hash_map_matches_the_linked_interpreter() {
    let Some(cc) = cc() else { return eprintln!("no C compiler; skipped") };
    let comp = compile_program("hashmap_closed.owl");
    let dir = tempfile::tempdir().unwrap();
    let bin = build(dir.path(), &cc, &c_source(&comp.elaborated), BUKS_HOST);
    for k in [1, 5, 9, 3, -7] {
        let want = owl_core::link::host::natives::expected_checksum(k);
        assert_eq!(run(&bin, &[k.to_string()]), format!("{want} 0"), "key {k}");
    }
}

/// Sizes and field offsets the interpreter uses, as C sees them.
#[test]
fn layouts_agree_with_c() {
    let Some(cc) = cc() else { return eprintln!("no C compiler; skipped") };
    let mut text = String::from(PRELUDE);
    text.push_str("struct Mixed { b: bool, x: i32, f: f32, p: Box<i32>, u: (), o: Opt }\n");
    text.push_str(&program_text("list.owl"));
    let comp = compile_text(&text.replace("extern fn process(v: Box<i32>) -> Box<i32>;\n\nfn hash", "fn hash"));
    let cenv = &comp.elaborated.composites;
    let mut probe = String::from("#include <stdio.h>\n#include <stddef.h>\n#include \"prog.c\"\nint main(void) {\n");
    let mut want = Vec::new();
    for c in cenv.iter() {
        let name = &c.name;
        let t = match c.kind {
            CompositeKind::Struct => Type::Struct(name.clone()),
            CompositeKind::Enum => Type::Enum(name.clone()),
        };
        probe.push_str(&format!("    printf(\"%u\\n\", (unsigned)sizeof(owl_{name}));\n"));
        want.push(size_of(cenv, &t).to_string());
        if c.kind == CompositeKind::Struct {
            for (l, _) in &c.fields {
                probe.push_str(&format!("    printf(\"%u\\n\", (unsigned)offsetof(owl_{name}, f_{l}));\n"));
                want.push(field_offset(cenv, name, l).unwrap().0.to_string());
            }
        }
    }
    probe.push_str("    return 0;\n}\n");
    let src = c_source(&comp.elaborated);
    let host = format!("{probe}\nint32_t *process(int32_t *v) {{ return v; }}\nuint8_t rand(void) {{ return 0; }}\n");
    let dir = tempfile::tempdir().unwrap();
    let bin = build(dir.path(), &cc, &src, &host);
    assert_eq!(run(&bin, &[]), want.join("\n"));
}

/// Generated checked programs: native result and leak count against the
/// interpreter, with the same coin flips.
#[test]
fn generated_programs_match_natively() {
    let Some(cc) = cc() else { return eprintln!("no C compiler; skipped") };
    let c = corpus(11, 40, 0);
    let dir = tempfile::tempdir().unwrap();
    for (i, (text, comp)) in c.checked.iter().enumerate() {
        let host = r#"#include <stdio.h>
#include "prog.c"
static const char *flips;
uint8_t rand(void) { return *flips ? (uint8_t)(*flips++ == '1') : 0; }
int32_t *process(int32_t *v) { *v ^= 42; return v; }
int main(int argc, char **argv) {
    int32_t r;
    flips = argc > 1 ? argv[1] : "";
    r = owl_gen_main();
    printf("%d %ld\n", r, owl_live_blocks);
    return 0;
}
"#;
        let sub = dir.path().join(i.to_string());
        std::fs::create_dir(&sub).unwrap();
        let bin = build(&sub, &cc, &c_source(&comp.elaborated), host);
        for script in [vec![], vec![true; 12], vec![true, false, true, true, false, false, true]] {
            let obs = observe(&comp.elaborated, &script);
            let Outcome::Final { value } = obs.outcome else { continue };
            let flips: String = script.iter().map(|b| if *b { '1' } else { '0' }).collect();
            assert_eq!(run(&bin, &[flips]), format!("{value} {}", obs.leaks.len()), "{text}");
        }
    }
}

#[test]
fn division_by_zero_aborts_natively() {
    let Some(cc) = cc() else { return eprintln!("no C compiler; skipped") };
    let comp = compile_text("fn main() -> i32 { let z: i32 = 0; return 1 / z; }");
    let host = "#include \"prog.c\"\nint main(void) { return (int)owl_gen_main(); }\n";
    let dir = tempfile::tempdir().unwrap();
    let bin = build(dir.path(), &cc, &c_source(&comp.elaborated), host);
    let out = Command::new(&bin).output().unwrap();
    assert!(!out.status.success());
}
