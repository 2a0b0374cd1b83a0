mod common;

use std::collections::{BTreeSet, HashSet};

use common::*;
use owl_core::link::explore::{closing_query, explore, ExploreConfig, ExploreReport, Verdict};
use owl_core::link::manifest::link_program;
use owl_core::link::monitor::Blame;
use owl_core::link::{CState, Component, Status};
use owl_core::sem::Interp;

/// Keys and values the host inserts, and the keys `main` may look up.
const ENTRIES: [(i32, i32); 6] = [(1, 10), (2, 20), (5, 50), (6, 60), (9, 90), (-3, 30)];
const LOOKUPS: [i32; 5] = [1, 5, 9, 3, -7];

/// Sum of keys and values after `process` XORs the looked-up value.
fn checksum(lookup: i32) -> i32 {
    ENTRIES.iter().map(|&(k, v)| k + if k == lookup { v ^ 42 } else { v }).sum()
}

fn run(owl: &str, hosts: &str, monitor: bool) -> (Component, ExploreReport) {
    let comp = compile_program(owl);
    assert!(comp.is_checked(), "{:?}", comp.report.errors);
    let interp = Interp::new(&comp.elaborated);
    let man = manifest(hosts);
    let linked = link_program(interp.clone(), &man).unwrap();
    let q = closing_query(&linked, "main").unwrap();
    let cfg = ExploreConfig { depth: 200_000, monitor: monitor.then(|| man.monitor().unwrap()) };
    let report = explore(&linked, interp.cenv(), &q, &cfg);
    (linked, report)
}

#[test]
fn every_lookup_yields_its_checksum() {
    let (_, r) = run("hashmap_closed.owl", "buks.toml", true);
    assert!(matches!(r.verdict, Verdict::Safe { truncated: false, .. }), "{:?}", r.verdict);
    assert_eq!(r.leaks(), 0);
    let want: BTreeSet<String> = LOOKUPS.iter().map(|&k| checksum(k).to_string()).collect();
    assert_eq!(r.results, want);
    assert_eq!(r.finals, LOOKUPS.len());
    for k in LOOKUPS {
        assert_eq!(owl_core::link::host::natives::expected_checksum(k), checksum(k));
    }
}

#[test]
fn free_other_is_a_use_after_free_without_the_monitor() {
    let (_, r) = run("hashmap_closed.owl", "buks_free_other.toml", true);
    match &r.verdict {
        Verdict::Violation { violation } => {
            assert_eq!(violation.rule, "frame-touched");
            assert_eq!(violation.blame, Blame::Callee);
            assert_eq!(violation.callee, "process");
        }
        v => panic!("{v:?}"),
    }
    assert!(!r.witness.is_empty());
    let (_, r) = run("hashmap_closed.owl", "buks_free_other.toml", false);
    assert!(matches!(&r.verdict, Verdict::MemErr { class, .. } if class == "use-after-free"), "{:?}", r.verdict);
}

#[test]
fn hash_overflow_is_out_of_bounds_without_the_monitor() {
    let (_, r) = run("list_nohash.owl", "buks_hash_overflow.toml", true);
    assert!(
        matches!(&r.verdict, Verdict::Violation { violation } if violation.rule == "hash-range-post" && violation.blame == Blame::Callee),
        "{:?}",
        r.verdict
    );
    let (_, r) = run("list_nohash.owl", "buks_hash_overflow.toml", false);
    assert!(matches!(&r.verdict, Verdict::MemErr { class, .. } if class == "out-of-bounds"), "{:?}", r.verdict);
}

/// Every reachable state, found by a plain worklist over exact states.
fn naive_states(c: &Component, init: Vec<CState>) -> (HashSet<CState>, BTreeSet<String>) {
    let mut seen: HashSet<CState> = HashSet::new();
    let mut results = BTreeSet::new();
    let mut stack = init;
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        match c.status(&s) {
            Status::Final(r) => {
                results.insert(r.value.to_string());
            }
            Status::Running => stack.extend(c.step(&s).into_iter().map(|succ| succ.state)),
            other => panic!("{other:?}"),
        }
    }
    (seen, results)
}

#[test]
fn explorer_visits_exactly_the_reachable_states() {
    let (linked, r) = run("hashmap_closed.owl", "buks.toml", false);
    let q = closing_query(&linked, "main").unwrap();
    let (states, results) = naive_states(&linked, linked.init(&q).unwrap());
    assert_eq!(r.states_visited, states.len());
    assert_eq!(r.results, results);
}

#[test]
fn point_explores_both_branches_without_leaks() {
    let comp = compile_program("point.owl");
    let interp = Interp::new(&comp.elaborated);
    let man = manifest("point.toml");
    let linked = link_program(interp.clone(), &man).unwrap();
    let q = closing_query(&linked, "test").unwrap();
    let r =
        explore(&linked, interp.cenv(), &q, &ExploreConfig { depth: 10_000, monitor: Some(man.monitor().unwrap()) });
    assert!(r.verdict.is_safe());
    assert_eq!(r.finals, 2);
    assert_eq!(r.leaks(), 0);
    let (states, _) = naive_states(&linked, linked.init(&q).unwrap());
    assert_eq!(r.states_visited, states.len());
}

#[test]
fn depth_bound_truncates() {
    let comp = compile_program("hashmap_closed.owl");
    let interp = Interp::new(&comp.elaborated);
    let linked = link_program(interp.clone(), &manifest("buks.toml")).unwrap();
    let q = closing_query(&linked, "main").unwrap();
    let r = explore(&linked, interp.cenv(), &q, &ExploreConfig { depth: 10, monitor: None });
    assert_eq!(r.verdict, Verdict::Safe { bound: 10, truncated: true });
    assert_eq!(r.finals, 0);
}

/// `process` through the host component: XOR 42 in place, same box back.
#[test]
fn process_xors_in_place() {
    use owl_core::mem::{Chunk, Memory, Value};
    use owl_core::sem::Query;
    let man = manifest("buks.toml");
    let comp = compile_program("hashmap_closed.owl");
    let hosts = man.hosts(&comp.elaborated.composites).unwrap();
    let host = Component::Host(std::sync::Arc::new(hosts.into_iter().next().unwrap()));
    for (input, output) in [(7, 45), (0, 42)] {
        let mut mem = Memory::new();
        let b = mem.alloc(4);
        mem.store(b, 0, Chunk::I32, Value::Int(input)).unwrap();
        let q = Query {
            callee: "process".into(),
            sig: host.signature("process").unwrap(),
            args: vec![Value::Ptr(b, 0)],
            mem,
        };
        let (status, _) = host.run_first(&q, 1000, &mut |_| {}).unwrap();
        let Status::Final(r) = status else { panic!("{status:?}") };
        assert_eq!(r.value, Value::Ptr(b, 0));
        assert_eq!(r.mem.load(b, 0, Chunk::I32).unwrap(), Value::Int(output));
    }
}
