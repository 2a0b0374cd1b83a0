//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the lines.

mod common;

use common::corpus;
use common::criteria::*;

#[test]
fn acceptance() {
    let corpus = corpus(CORPUS_SEED, 1000, 200);
    type Run<'a> = Box<dyn Fn() -> Check + 'a>;
    let checks: Vec<(&str, Run)> = vec![
        ("ownst-figure", Box::new(ownst_figure)),
        ("point-elaboration", Box::new(point_elaboration)),
        ("checked-programs-memory-safe", Box::new(|| checked_programs_safe(&corpus))),
        ("rejected-programs-misbehave", Box::new(|| rejected_programs_fail(&corpus))),
        ("preservation", Box::new(|| preservation(&corpus))),
        ("kildall-vs-oracle", Box::new(kildall_oracle)),
        ("hashmap-safe-and-mutants-blamed", Box::new(hashmap_and_mutants)),
        ("memerr-taxonomy", Box::new(memerr_taxonomy)),
    ];
    let mut failed = Vec::new();
    for (name, run) in &checks {
        let c = run();
        println!("{} {name}: {}", if c.ok { "PASS" } else { "FAIL" }, c.detail);
        if !c.ok {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
