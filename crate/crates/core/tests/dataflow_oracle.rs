mod common;

use common::oracle::*;
use common::rng;
use owl_core::dataflow::{analyze, init_analysis};

#[test]
fn solver_matches_all_paths_oracle_on_random_graphs() {
    let cenv = cenv();
    let u = universe(&cenv);
    let mut r = rng(0x6b1d);
    let mut joins = 0;
    for i in 0..500 {
        let cfg = random_cfg(&mut r, 12, false);
        let entry = random_entry(&mut r, &u);
        let sets = reachable_sets(&u, &cfg, &entry);
        let bad = disagreements(&u, &cfg, &entry, &sets);
        assert!(bad.is_empty(), "graph {i}: nodes {bad:?}\n{cfg:#?}");
        joins += sets.iter().filter(|s| s.len() > 1).count();
    }
    // The graphs must actually merge distinct facts.
    assert!(joins > 200, "only {joins} merge points");
}

#[test]
fn acyclic_oracle_is_exact_on_dags() {
    let cenv = cenv();
    let u = universe(&cenv);
    let mut r = rng(0xda6);
    for _ in 0..300 {
        let cfg = random_cfg(&mut r, 12, true);
        let entry = random_entry(&mut r, &u);
        assert_eq!(acyclic_sets(&u, &cfg, &entry), reachable_sets(&u, &cfg, &entry));
        let sets = acyclic_sets(&u, &cfg, &entry);
        assert!(disagreements(&u, &cfg, &entry, &sets).is_empty());
    }
}

#[test]
fn acyclic_oracle_misses_facts_on_cycles() {
    let cenv = cenv();
    let u = universe(&cenv);
    let x = u.index_of(&owl_core::ast::Place::var("x")).unwrap();
    let entry = u.full_set();

    let (cfg, v) = must_counterexample();
    let simple = must(&acyclic_sets(&u, &cfg, &entry)[v]).unwrap();
    let exact = must(&reachable_sets(&u, &cfg, &entry)[v]).unwrap();
    assert!(simple.contains(x) && !exact.contains(x));
    assert_eq!(own_facts(&u, &cfg, &entry)[v].as_ref(), Some(&exact));

    let (cfg, v) = may_counterexample();
    let simple = may(&u, &acyclic_sets(&u, &cfg, &entry)[v]).unwrap();
    let exact = may(&u, &reachable_sets(&u, &cfg, &entry)[v]).unwrap();
    assert!(!simple.owned.contains(x) && exact.owned.contains(x));
    assert_eq!(init_facts(&u, &cfg, &entry)[v].as_ref(), Some(&exact));
}

#[test]
fn analyses_on_real_functions_match_oracle() {
    let comp = common::compile_program("list.owl");
    let cenv = &comp.ir.composites;
    for f in comp.ir.functions.iter().filter(|f| f.body.is_some()) {
        let facts = analyze(cenv, f);
        let init = init_analysis(cenv, f);
        let entry = owl_core::dataflow::param_atoms(&facts.universe, f);
        let sets = reachable_sets(&facts.universe, &facts.cfg, &entry);
        for (n, reach) in sets.iter().enumerate() {
            assert_eq!(facts.before[n], must(reach), "{} node {n}", f.name);
            assert_eq!(init.before[n], may(&facts.universe, reach), "{} node {n}", f.name);
        }
    }
}
