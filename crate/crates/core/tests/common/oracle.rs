//! Random control-flow graphs over a small atom universe, and two path
//! oracles for the ownership analyses.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use owl_core::ast::{BaseType, CompositeEnv, Expr, ExprKind, Place, Span, Type};
use owl_core::cfg::{Cfg, Instr, Node};
use owl_core::dataflow::{Analysis, InitAnalysis, InitState, OwnAnalysis};
use owl_core::ownership::{AtomSet, Universe};

pub fn cenv() -> CompositeEnv {
    owl_core::parse::parse_str("struct Pair { a: Box<i32>, b: Box<i32> }").unwrap().composites
}

fn boxed(t: Type) -> Type {
    Type::Box(Box::new(t))
}

/// x: Box<i32>, y: Box<Box<i32>>, p: Pair, n: i32.
pub fn universe(cenv: &CompositeEnv) -> Universe {
    let int = Type::Base(BaseType::I32);
    Universe::new(
        cenv,
        &[
            ("x".into(), boxed(int.clone())),
            ("y".into(), boxed(boxed(int.clone()))),
            ("p".into(), Type::Struct("Pair".into())),
            ("n".into(), int),
        ],
    )
}

fn places() -> Vec<Place> {
    let x = Place::var("x");
    let y = Place::var("y");
    let p = Place::var("p");
    vec![x, y.clone(), y.deref(), p.clone(), p.clone().field("a"), p.field("b")]
}

fn box_places() -> Vec<Place> {
    let y = Place::var("y");
    let p = Place::var("p");
    vec![Place::var("x"), y.deref(), p.clone().field("a"), p.field("b")]
}

fn node(instr: Instr) -> Node {
    Node { instr, succs: Vec::new(), label: None, span: Span::default() }
}

fn random_instr(r: &mut ChaCha8Rng) -> Instr {
    let bp = box_places();
    let ps = places();
    let mv = |p: &Place| Expr::new(ExprKind::Move(p.clone()));
    match r.gen_range(0..9) {
        0 => Instr::Nop,
        1 => Instr::AssignBox(ps.choose(r).unwrap().clone(), Expr::int(1)),
        2 => {
            let (a, b) = (bp.choose(r).unwrap(), bp.choose(r).unwrap());
            Instr::Assign(a.clone(), mv(b))
        }
        3 => Instr::Drop(ps.choose(r).unwrap().clone()),
        4 => Instr::StaticDrop(bp.choose(r).unwrap().clone()),
        5 => Instr::CallArgs { callee: "f".into(), args: vec![mv(bp.choose(r).unwrap())], dest: None },
        6 => Instr::CallRet { dest: Some(ps.choose(r).unwrap().clone()) },
        7 => Instr::Branch(Expr::bool(true)),
        _ => Instr::Assign(Place::var("n"), Expr::int(0)),
    }
}

/// A graph with 1 to `max` nodes. With `dag`, edges only go forward.
pub fn random_cfg(r: &mut ChaCha8Rng, max: usize, dag: bool) -> Cfg {
    let n = r.gen_range(1..=max);
    let mut nodes: Vec<Node> = (0..n).map(|_| node(random_instr(r))).collect();
    for (i, node) in nodes.iter_mut().enumerate() {
        let k = r.gen_range(0..=2);
        let mut succs = BTreeSet::new();
        for _ in 0..k {
            if dag {
                if i + 1 < n {
                    succs.insert(r.gen_range(i + 1..n));
                }
            } else {
                succs.insert(r.gen_range(0..n));
            }
        }
        node.succs = succs.into_iter().collect();
    }
    Cfg { nodes, entry: 0 }
}

pub fn random_entry(r: &mut ChaCha8Rng, u: &Universe) -> AtomSet {
    let mut s = u.empty_set();
    for i in 0..u.len() {
        if r.gen_bool(0.5) {
            s.insert(i);
        }
    }
    s
}

/// Concrete effect of a node on an exact ownership set.
pub fn concrete(u: &Universe, instr: &Instr, s: &AtomSet) -> AtomSet {
    let a = OwnAnalysis { universe: u, entry: u.empty_set() };
    let mut out = s.clone();
    a.transfer(instr, &mut out);
    out
}

/// Exact all-paths facts: reachability in the product of the graph with
/// concrete ownership sets. Per node, the sets that reach it.
pub fn reachable_sets(u: &Universe, cfg: &Cfg, entry: &AtomSet) -> Vec<HashSet<AtomSet>> {
    let mut at: Vec<HashSet<AtomSet>> = vec![HashSet::new(); cfg.nodes.len()];
    let mut work = VecDeque::from([(cfg.entry, entry.clone())]);
    at[cfg.entry].insert(entry.clone());
    while let Some((n, s)) = work.pop_front() {
        let out = concrete(u, &cfg.nodes[n].instr, &s);
        for &m in &cfg.nodes[n].succs {
            if at[m].insert(out.clone()) {
                work.push_back((m, out.clone()));
            }
        }
    }
    at
}

/// Sets reaching each node along simple paths only.
pub fn acyclic_sets(u: &Universe, cfg: &Cfg, entry: &AtomSet) -> Vec<HashSet<AtomSet>> {
    fn go(u: &Universe, cfg: &Cfg, n: usize, s: AtomSet, on_path: &mut Vec<bool>, at: &mut Vec<HashSet<AtomSet>>) {
        at[n].insert(s.clone());
        on_path[n] = true;
        let out = concrete(u, &cfg.nodes[n].instr, &s);
        for &m in &cfg.nodes[n].succs {
            if !on_path[m] {
                go(u, cfg, m, out.clone(), on_path, at);
            }
        }
        on_path[n] = false;
    }
    let mut at = vec![HashSet::new(); cfg.nodes.len()];
    let mut on_path = vec![false; cfg.nodes.len()];
    go(u, cfg, cfg.entry, entry.clone(), &mut on_path, &mut at);
    at
}

pub fn must(sets: &HashSet<AtomSet>) -> Option<AtomSet> {
    let mut it = sets.iter();
    let mut acc = it.next()?.clone();
    for s in it {
        acc.intersect_with(s);
    }
    Some(acc)
}

pub fn may(u: &Universe, sets: &HashSet<AtomSet>) -> Option<InitState> {
    if sets.is_empty() {
        return None;
    }
    let mut owned = u.empty_set();
    let mut unowned = u.empty_set();
    for s in sets {
        owned.union_with(s);
        let mut c = u.full_set();
        for i in s.ones() {
            c.remove(i);
        }
        unowned.union_with(&c);
    }
    Some(InitState { owned, unowned })
}

pub fn own_facts(u: &Universe, cfg: &Cfg, entry: &AtomSet) -> Vec<Option<AtomSet>> {
    owl_core::dataflow::solve(cfg, &OwnAnalysis { universe: u, entry: entry.clone() })
}

pub fn init_facts(u: &Universe, cfg: &Cfg, entry: &AtomSet) -> Vec<Option<InitState>> {
    owl_core::dataflow::solve(cfg, &InitAnalysis { universe: u, entry: entry.clone() })
}

/// Nodes where the solver disagrees with the all-paths oracle.
pub fn disagreements(u: &Universe, cfg: &Cfg, entry: &AtomSet, sets: &[HashSet<AtomSet>]) -> Vec<usize> {
    let own = own_facts(u, cfg, entry);
    let init = init_facts(u, cfg, entry);
    (0..cfg.nodes.len()).filter(|&n| own[n] != must(&sets[n]) || init[n] != may(u, &sets[n])).collect()
}

/// Builds a graph from instructions and an edge list.
pub fn graph(instrs: Vec<Instr>, edges: &[(usize, usize)]) -> Cfg {
    let mut nodes: Vec<Node> = instrs.into_iter().map(node).collect();
    for &(a, b) in edges {
        nodes[a].succs.push(b);
    }
    Cfg { nodes, entry: 0 }
}

/// Where simple paths go wrong on cycles. For the must analysis, the only
/// path that reaches V with `x` unowned goes round the kill loop after the
/// gen node, which revisits M:
///
///   E(drop x) -> G(x = Box) -> M -> V, with M -> K(drop x) -> M.
pub fn must_counterexample() -> (Cfg, usize) {
    let x = Place::var("x");
    let cfg = graph(
        vec![Instr::Drop(x.clone()), Instr::AssignBox(x.clone(), Expr::int(1)), Instr::Nop, Instr::Nop, Instr::Drop(x)],
        &[(0, 1), (1, 2), (2, 3), (2, 4), (4, 2)],
    );
    (cfg, 3)
}

/// For the may analysis: `x` can only become owned by going round the loop.
///
///   E(drop x) -> M -> V, with M -> G(x = Box) -> M.
pub fn may_counterexample() -> (Cfg, usize) {
    let x = Place::var("x");
    let cfg = graph(
        vec![Instr::Drop(x.clone()), Instr::Nop, Instr::Nop, Instr::AssignBox(x, Expr::int(1))],
        &[(0, 1), (1, 2), (1, 3), (3, 1)],
    );
    (cfg, 2)
}
