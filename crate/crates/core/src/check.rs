//! Ownership checking of lowered IR.
//!
//! Every use of a place must be justified by the definite ownership state
//! (OwnSt) at its program point:
//! - a move needs the moved place fully owned,
//! - every dereference needs its Box alive,
//! - a tag test needs the scrutinee fully owned,
//! - copy-typed reads only need their variable definitely assigned.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::ast::typing::{owns_resources, type_of_place, VarTypes};
use crate::ast::{CompositeEnv, Expr, ExprKind, Function, Ident, Module, Place, Span};
use crate::cfg::{Cfg, Instr};
use crate::dataflow::{after, analyze, param_atoms, solve, Analysis, Facts};
use crate::diag::{codes, Diagnostic};
use crate::ownership::{AtomSet, Universe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OwnErrorKind {
    UseOfMoved,
    MoveOfMoved,
    DropTargetUnknown,
    UninitializedUse,
    UntrackedMove,
}

impl OwnErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            OwnErrorKind::UseOfMoved => codes::USE_OF_MOVED,
            OwnErrorKind::MoveOfMoved => codes::MOVE_OF_MOVED,
            OwnErrorKind::DropTargetUnknown => codes::DROP_TARGET_UNKNOWN,
            OwnErrorKind::UninitializedUse => codes::UNINITIALIZED_USE,
            OwnErrorKind::UntrackedMove => codes::UNTRACKED_MOVE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OwnError {
    pub function: Ident,
    /// Program-point label.
    pub point: Option<u32>,
    pub place: String,
    pub kind: OwnErrorKind,
    pub message: String,
    #[serde(skip)]
    pub span: Span,
}

impl OwnError {
    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::new(self.kind.code(), self.message.clone(), self.span)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointState {
    pub label: Option<u32>,
    pub instr: String,
    /// `None` when unreachable.
    pub ownst: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionReport {
    pub function: Ident,
    pub points: Vec<PointState>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OwnershipReport {
    pub functions: Vec<FunctionReport>,
    pub errors: Vec<OwnError>,
}

impl OwnershipReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.errors.iter().map(OwnError::to_diagnostic).collect()
    }
}

pub fn check_module(m: &Module) -> OwnershipReport {
    let mut report = OwnershipReport::default();
    for f in m.internal_functions() {
        let (fr, errs) = check_function(&m.composites, f);
        report.functions.push(fr);
        report.errors.extend(errs);
    }
    report
}

/// Atoms possibly assigned at some point on some path (never killed).
struct EverAssigned<'u> {
    universe: &'u Universe,
    entry: AtomSet,
}

impl Analysis for EverAssigned<'_> {
    type Fact = AtomSet;
    fn entry(&self) -> AtomSet {
        self.entry.clone()
    }
    fn join(&self, into: &mut AtomSet, other: &AtomSet) {
        into.union_with(other);
    }
    fn transfer(&self, instr: &Instr, s: &mut AtomSet) {
        if let Some(p) = instr.assigned() {
            for i in self.universe.affected(p) {
                s.insert(i);
            }
        }
    }
}

/// Variables assigned (anywhere under their root) on every path.
struct DefAssigned {
    entry: BTreeSet<Ident>,
}

impl Analysis for DefAssigned {
    type Fact = BTreeSet<Ident>;
    fn entry(&self) -> Self::Fact {
        self.entry.clone()
    }
    fn join(&self, into: &mut Self::Fact, other: &Self::Fact) {
        into.retain(|x| other.contains(x));
    }
    fn transfer(&self, instr: &Instr, s: &mut Self::Fact) {
        if let Some(p) = instr.assigned() {
            s.insert(p.root().to_string());
        }
    }
}

struct Checker<'a> {
    cenv: &'a CompositeEnv,
    ctx: VarTypes,
    u: &'a Universe,
    f: &'a Function,
    errors: Vec<OwnError>,
    label: Option<u32>,
    span: Span,
}

fn check_function(cenv: &CompositeEnv, f: &Function) -> (FunctionReport, Vec<OwnError>) {
    let Facts { universe, cfg, before } = analyze(cenv, f);
    let ever = solve(&cfg, &EverAssigned { universe: &universe, entry: param_atoms(&universe, f) });
    let defs = solve(&cfg, &DefAssigned { entry: f.params.iter().map(|d| d.name.clone()).collect() });
    let mut ck =
        Checker { cenv, ctx: f.var_types(), u: &universe, f, errors: Vec::new(), label: None, span: Span::default() };
    let own = crate::dataflow::OwnAnalysis { universe: &universe, entry: param_atoms(&universe, f) };
    for (i, node) in cfg.nodes.iter().enumerate() {
        let (Some(st), Some(ev), Some(df)) = (&before[i], &ever[i], &defs[i]) else { continue };
        ck.label = node.label;
        ck.span = node.span;
        ck.node(&node.instr, st, ev, df, &own);
    }
    let points = report_points(cenv, &universe, &cfg, &before);
    (FunctionReport { function: f.name.clone(), points }, ck.errors)
}

fn report_points(cenv: &CompositeEnv, u: &Universe, cfg: &Cfg, before: &[Option<AtomSet>]) -> Vec<PointState> {
    // Nodes in label order; unlabeled helper nodes are skipped.
    let mut idx: Vec<usize> = (0..cfg.nodes.len()).filter(|&i| cfg.nodes[i].label.is_some()).collect();
    idx.sort_by_key(|&i| (cfg.nodes[i].label, !matches!(cfg.nodes[i].instr, Instr::CallArgs { .. })));
    idx.into_iter()
        .map(|i| PointState {
            label: cfg.nodes[i].label,
            instr: cfg.nodes[i].instr.to_string(),
            ownst: before[i].as_ref().map(|s| u.display(cenv, s).iter().map(|p| p.to_string()).collect()),
        })
        .collect()
}

impl Checker<'_> {
    fn err(&mut self, kind: OwnErrorKind, place: &Place, message: String) {
        let e = OwnError {
            function: self.f.name.clone(),
            point: self.label,
            place: place.to_string(),
            kind,
            message,
            span: self.span,
        };
        if !self.errors.contains(&e) {
            self.errors.push(e);
        }
    }

    fn owning(&self, p: &Place) -> bool {
        type_of_place(self.cenv, &self.ctx, p).is_ok_and(|t| owns_resources(self.cenv, &t))
    }

    /// Ever-assigned tells a never-initialized place from a moved-out one.
    fn never_assigned(&self, ev: &AtomSet, p: &Place) -> bool {
        let atoms = self.u.affected(p);
        !atoms.is_empty() && atoms.iter().all(|&i| !ev.contains(i))
    }

    fn deref_bases(&mut self, p: &Place, st: &AtomSet, ev: &AtomSet) {
        for b in p.deref_bases() {
            if !self.u.deref_alive(st, b) {
                if self.never_assigned(ev, b) {
                    self.err(OwnErrorKind::UninitializedUse, b, format!("`{b}` is dereferenced before it is assigned"));
                } else {
                    self.err(
                        OwnErrorKind::UseOfMoved,
                        b,
                        format!("`{b}` is dereferenced after it was moved or dropped"),
                    );
                }
                return;
            }
        }
    }

    fn copy_read(&mut self, p: &Place, st: &AtomSet, ev: &AtomSet, df: &BTreeSet<Ident>) {
        self.deref_bases(p, st, ev);
        if !df.contains(p.root()) {
            self.err(OwnErrorKind::UninitializedUse, p, format!("`{p}` is read before it is assigned"));
        }
    }

    fn owned_use(&mut self, p: &Place, st: &AtomSet, ev: &AtomSet, what: &str) {
        self.deref_bases(p, st, ev);
        if !self.u.fully_owned(st, p) {
            if self.never_assigned(ev, p) {
                self.err(OwnErrorKind::UninitializedUse, p, format!("`{p}` is {what} before it is assigned"));
            } else if what == "moved" {
                self.err(OwnErrorKind::MoveOfMoved, p, format!("`{p}` is moved but does not fully own its value"));
            } else {
                self.err(OwnErrorKind::UseOfMoved, p, format!("`{p}` is {what} but does not fully own its value"));
            }
        }
    }

    fn expr(&mut self, e: &Expr, st: &AtomSet, ev: &AtomSet, df: &BTreeSet<Ident>) {
        match &e.kind {
            ExprKind::Const(_) => {}
            ExprKind::Move(p) if self.owning(p) => {
                self.owned_use(p, st, ev, "moved");
                if let Some(a) = self.u.containing_atom(p) {
                    if p.strip_downcasts() != &self.u.atom(a).place {
                        self.err(
                            OwnErrorKind::UntrackedMove,
                            p,
                            format!("cannot move `{p}` out of `{}`; move the whole value", self.u.atom(a).place),
                        );
                    }
                }
            }
            ExprKind::Place(p) if self.owning(p) => {
                self.owned_use(p, st, ev, "copied");
                self.err(OwnErrorKind::UseOfMoved, p, format!("`{p}` owns resources and cannot be copied"));
            }
            ExprKind::Move(p) | ExprKind::Place(p) => self.copy_read(p, st, ev, df),
            ExprKind::CheckTag(p, _) => {
                self.owned_use(p, st, ev, "inspected");
                if !self.owning(p) {
                    self.copy_read(p, st, ev, df);
                }
            }
            ExprKind::Unary(_, a) => self.expr(a, st, ev, df),
            ExprKind::Binary(_, a, b) => {
                self.expr(a, st, ev, df);
                self.expr(b, st, ev, df);
            }
        }
    }

    fn store(&mut self, p: &Place, st: &AtomSet, ev: &AtomSet) {
        self.deref_bases(p, st, ev);
        if self.u.atoms_under(p).is_empty() {
            if let Some(a) = self.u.containing_atom(p) {
                if !st.contains(a) {
                    let ap = self.u.atom(a).place.clone();
                    self.err(OwnErrorKind::UseOfMoved, p, format!("`{p}` is written but `{ap}` is not owned"));
                }
            }
        }
    }

    fn node(
        &mut self,
        instr: &Instr,
        st: &AtomSet,
        ev: &AtomSet,
        df: &BTreeSet<Ident>,
        own: &crate::dataflow::OwnAnalysis,
    ) {
        match instr {
            Instr::Nop | Instr::CallRet { dest: None } => {}
            Instr::Assign(p, e) | Instr::AssignBox(p, e) | Instr::AssignVariant(p, _, e) => {
                self.expr(e, st, ev, df);
                let mid = after_moves(self.u, instr, st);
                self.store(p, &mid, ev);
            }
            Instr::CallArgs { args, .. } => {
                // Arguments are evaluated left to right; a later argument
                // sees the moves of earlier ones.
                let mut cur = st.clone();
                for a in args {
                    self.expr(a, &cur, ev, df);
                    if let ExprKind::Move(p) = &a.kind {
                        self.u.move_out(&mut cur, p);
                    }
                }
            }
            Instr::CallRet { dest: Some(p) } => self.store(p, st, ev),
            Instr::Branch(c) => self.expr(c, st, ev, df),
            Instr::Drop(p) | Instr::StaticDrop(p) | Instr::FlaggedDrop(p, _) => {
                if self.u.atoms_under(p).is_empty() && self.u.containing_atom(p).is_none() {
                    self.err(OwnErrorKind::DropTargetUnknown, p, format!("`{p}` owns no tracked resource"));
                }
                if let Instr::FlaggedDrop(_, flag) = instr {
                    self.copy_read(&Place::Var(flag.clone()), st, ev, df);
                }
            }
            Instr::Return(Some(p)) => {
                if self.owning(p) {
                    self.owned_use(p, st, ev, "returned");
                } else {
                    self.copy_read(p, st, ev, df);
                }
            }
            Instr::Return(None) => {}
        }
        let _ = after(own, instr, st);
    }
}

fn after_moves(u: &Universe, instr: &Instr, st: &AtomSet) -> AtomSet {
    let mut s = st.clone();
    for p in instr.moves() {
        u.move_out(&mut s, p);
    }
    s
}
