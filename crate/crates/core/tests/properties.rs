mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::oracle;
use common::*;
use owl_core::ast::print::print_module;
use owl_core::ast::Type;
use owl_core::dataflow::{Analysis, InitAnalysis, InitState, OwnAnalysis};
use owl_core::mem::footprint::footprint;
use owl_core::mem::{Memory, Value};
use owl_core::ownership::AtomSet;
use owl_core::parse::parse_str;
use owl_core::sem::{HostFail, Interp, Mode, Query};

fn set_from(bits: &[bool]) -> AtomSet {
    let mut s = AtomSet(fixedbitset::FixedBitSet::with_capacity(bits.len()));
    for (i, b) in bits.iter().enumerate() {
        if *b {
            s.insert(i);
        }
    }
    s
}

fn atom_count() -> usize {
    oracle::universe(&oracle::cenv()).len()
}

fn atom_set() -> impl Strategy<Value = AtomSet> {
    prop::collection::vec(any::<bool>(), atom_count()).prop_map(|v| set_from(&v))
}

/// Calls `name` to completion with no host, returning the result and memory.
fn call(interp: &Interp, name: &str, args: Vec<Value>, mem: Memory) -> (Value, Memory) {
    let q = Query { callee: name.into(), sig: interp.signature(name).unwrap(), args, mem };
    let mut s = interp.init(&q).unwrap();
    interp.run(&mut s, FUEL as u64, &mut |_| Err(HostFail::Unhandled));
    match s.mode {
        Mode::Final(v) => (v, s.mem),
        m => panic!("{name}: {m:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_is_a_fixpoint(seed in any::<u64>()) {
        let text = Gen::new(&mut rng(seed)).program();
        let once = print_module(&parse_str(&text).unwrap());
        let twice = print_module(&parse_str(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn reparsed_program_checks_and_runs_alike(seed in any::<u64>(), script in prop::collection::vec(any::<bool>(), 0..12)) {
        let text = Gen::new(&mut rng(seed)).program();
        let a = compile_text(&text);
        let b = compile_text(&print_module(&a.surface));
        prop_assert_eq!(a.is_checked(), b.is_checked());
        if a.is_checked() {
            prop_assert_eq!(observe(&a.elaborated, &script), observe(&b.elaborated, &script));
        }
    }

    #[test]
    fn compilation_is_deterministic(seed in any::<u64>()) {
        let text = Gen::new(&mut rng(seed)).program();
        let a = compile_text(&text);
        let b = compile_text(&text);
        prop_assert_eq!(print_module(&a.elaborated), print_module(&b.elaborated));
        prop_assert_eq!(a.report.errors.len(), b.report.errors.len());
    }

    #[test]
    fn joins_are_semilattice_operations(a in atom_set(), b in atom_set(), c in atom_set()) {
        let cenv = oracle::cenv();
        let u = oracle::universe(&cenv);
        let own = OwnAnalysis { universe: &u, entry: u.empty_set() };
        let join = |x: &AtomSet, y: &AtomSet| { let mut z = x.clone(); own.join(&mut z, y); z };
        prop_assert_eq!(join(&a, &b), join(&b, &a));
        prop_assert_eq!(join(&join(&a, &b), &c), join(&a, &join(&b, &c)));
        prop_assert_eq!(join(&a, &a), a.clone());
        let init = InitAnalysis { universe: &u, entry: u.empty_set() };
        let st = |x: &AtomSet, y: &AtomSet| InitState { owned: x.clone(), unowned: y.clone() };
        let ijoin = |x: &InitState, y: &InitState| { let mut z = x.clone(); init.join(&mut z, y); z };
        prop_assert_eq!(ijoin(&st(&a, &b), &st(&b, &c)), ijoin(&st(&b, &c), &st(&a, &b)));
        prop_assert_eq!(ijoin(&st(&a, &b), &st(&a, &b)), st(&a, &b));
    }

    /// Transfer functions are monotone, which the fixpoint relies on.
    #[test]
    fn transfers_are_monotone(seed in any::<u64>(), a in atom_set(), b in atom_set()) {
        let cenv = oracle::cenv();
        let u = oracle::universe(&cenv);
        let cfg = oracle::random_cfg(&mut rng(seed), 12, false);
        let mut small = a.clone();
        small.intersect_with(&b);
        for n in &cfg.nodes {
            let own = OwnAnalysis { universe: &u, entry: u.empty_set() };
            let (mut x, mut y) = (small.clone(), a.clone());
            own.transfer(&n.instr, &mut x);
            own.transfer(&n.instr, &mut y);
            prop_assert!(x.is_subset(&y));
            let init = InitAnalysis { universe: &u, entry: u.empty_set() };
            let mut p = InitState { owned: small.clone(), unowned: small.clone() };
            let mut q = InitState { owned: a.clone(), unowned: a.clone() };
            init.transfer(&n.instr, &mut p);
            init.transfer(&n.instr, &mut q);
            prop_assert!(p.owned.is_subset(&q.owned) && p.unowned.is_subset(&q.unowned));
        }
    }

    /// A list of n entries owns its n+1 list boxes and n value boxes, which
    /// are all the live heap there is.
    #[test]
    fn list_footprint_counts_every_block(keys in prop::collection::vec(-50i32..50, 0..20)) {
        let comp = compile_program("list.owl");
        let interp = Interp::new(&comp.elaborated);
        let (mut l, mut mem) = call(&interp, "empty", vec![], Memory::new());
        for &k in &keys {
            (l, mem) = call(&interp, "insert", vec![l, Value::Int(k), Value::Int(k * 2)], mem);
        }
        let t = Type::Box(Box::new(Type::Enum("List".into())));
        let fp = footprint(&mem, interp.cenv(), &t, l).unwrap();
        prop_assert_eq!(fp.len(), 2 * keys.len() + 1);
        let distinct: BTreeSet<_> = fp.iter().copied().collect();
        let live: BTreeSet<_> = mem.live_heap_blocks().into_iter().collect();
        prop_assert_eq!(distinct, live);
        let (_, mem) = call(&interp, "free_list", vec![l], mem);
        prop_assert!(mem.live_heap_blocks().is_empty());
    }

    #[test]
    fn store_then_load_round_trips(n in any::<i32>(), off in 0u32..2) {
        let mut m = Memory::new();
        let b = m.alloc(16);
        let off = off * 8;
        m.store(b, off, owl_core::mem::Chunk::I32, Value::Int(n)).unwrap();
        prop_assert_eq!(m.load(b, off, owl_core::mem::Chunk::I32).unwrap(), Value::Int(n));
        m.free(b).unwrap();
        prop_assert!(m.load(b, off, owl_core::mem::Chunk::I32).is_err());
        prop_assert!(m.free(b).is_err());
    }
}
