//! Kildall's worklist algorithm and the two ownership analyses built on it.

use std::collections::VecDeque;

use crate::ast::{CompositeEnv, Function};
use crate::cfg::{Cfg, Instr};
use crate::ownership::{AtomSet, Universe};

pub trait Analysis {
    type Fact: Clone + PartialEq;
    fn entry(&self) -> Self::Fact;
    /// Joins `other` into `into`.
    fn join(&self, into: &mut Self::Fact, other: &Self::Fact);
    fn transfer(&self, instr: &Instr, fact: &mut Self::Fact);
}

/// Fixpoint of the facts on entry to each node; `None` marks unreachable
/// nodes.
pub fn solve<A: Analysis>(cfg: &Cfg, a: &A) -> Vec<Option<A::Fact>> {
    let mut facts: Vec<Option<A::Fact>> = vec![None; cfg.nodes.len()];
    if cfg.nodes.is_empty() {
        return facts;
    }
    facts[cfg.entry] = Some(a.entry());
    let mut queued = vec![false; cfg.nodes.len()];
    let mut work = VecDeque::from([cfg.entry]);
    queued[cfg.entry] = true;
    while let Some(n) = work.pop_front() {
        queued[n] = false;
        let mut out = facts[n].clone().expect("queued nodes have facts");
        a.transfer(&cfg.nodes[n].instr, &mut out);
        for &s in &cfg.nodes[n].succs {
            let changed = match &mut facts[s] {
                slot @ None => {
                    *slot = Some(out.clone());
                    true
                }
                Some(old) => {
                    let before = old.clone();
                    a.join(old, &out);
                    *old != before
                }
            };
            if changed && !queued[s] {
                queued[s] = true;
                work.push_back(s);
            }
        }
    }
    facts
}

/// Facts after a node, given the facts before it.
pub fn after<A: Analysis>(a: &A, instr: &Instr, before: &A::Fact) -> A::Fact {
    let mut f = before.clone();
    a.transfer(instr, &mut f);
    f
}

/// Definite ownership: atoms owned on every path. Join is intersection.
pub struct OwnAnalysis<'u> {
    pub universe: &'u Universe,
    pub entry: AtomSet,
}

impl Analysis for OwnAnalysis<'_> {
    type Fact = AtomSet;

    fn entry(&self) -> AtomSet {
        self.entry.clone()
    }

    fn join(&self, into: &mut AtomSet, other: &AtomSet) {
        into.intersect_with(other);
    }

    fn transfer(&self, instr: &Instr, s: &mut AtomSet) {
        let u = self.universe;
        for p in instr.moves() {
            u.move_out(s, p);
        }
        if let Some(p) = instr.assigned() {
            u.assign(s, p);
        }
        if let Some(p) = instr.dropped() {
            u.drop_place(s, p);
        }
    }
}

/// May-own and may-not-own sets for drop elaboration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InitState {
    pub owned: AtomSet,
    pub unowned: AtomSet,
}

pub struct InitAnalysis<'u> {
    pub universe: &'u Universe,
    pub entry: AtomSet,
}

impl Analysis for InitAnalysis<'_> {
    type Fact = InitState;

    fn entry(&self) -> InitState {
        let mut unowned = self.universe.full_set();
        for i in self.entry.ones() {
            unowned.remove(i);
        }
        InitState { owned: self.entry.clone(), unowned }
    }

    fn join(&self, into: &mut InitState, other: &InitState) {
        into.owned.union_with(&other.owned);
        into.unowned.union_with(&other.unowned);
    }

    fn transfer(&self, instr: &Instr, s: &mut InitState) {
        let u = self.universe;
        for p in instr.moves() {
            for i in u.moved_atoms(p) {
                s.owned.remove(i);
                s.unowned.insert(i);
            }
        }
        if let Some(p) = instr.assigned() {
            for i in u.atoms_under(p) {
                s.owned.insert(i);
                s.unowned.remove(i);
            }
        }
        if let Some(p) = instr.dropped() {
            for i in u.atoms_under(p) {
                s.owned.remove(i);
                s.unowned.insert(i);
            }
        }
    }
}

/// Atoms of the parameters: owned on entry.
pub fn param_atoms(u: &Universe, f: &Function) -> AtomSet {
    let mut s = u.empty_set();
    for d in &f.params {
        for &i in u.var_atoms(&d.name) {
            s.insert(i);
        }
    }
    s
}

/// Per-function analysis results.
pub struct Facts<F> {
    pub universe: Universe,
    pub cfg: Cfg,
    pub before: Vec<Option<F>>,
}

impl<F: Clone> Facts<F> {
    pub fn at(&self, node: usize) -> Option<&F> {
        self.before[node].as_ref()
    }
}

/// OwnSt at every point of an IR function.
pub fn analyze(cenv: &CompositeEnv, f: &Function) -> Facts<AtomSet> {
    let universe = Universe::for_function(cenv, f);
    let cfg = Cfg::build(&f.body.as_ref().expect("internal function").body);
    let a = OwnAnalysis { universe: &universe, entry: param_atoms(&universe, f) };
    let before = solve(&cfg, &a);
    Facts { universe, cfg, before }
}

pub fn init_analysis(cenv: &CompositeEnv, f: &Function) -> Facts<InitState> {
    let universe = Universe::for_function(cenv, f);
    let cfg = Cfg::build(&f.body.as_ref().expect("internal function").body);
    let a = InitAnalysis { universe: &universe, entry: param_atoms(&universe, f) };
    let before = solve(&cfg, &a);
    Facts { universe, cfg, before }
}
