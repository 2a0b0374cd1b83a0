//! Drop elaboration: IR `Drop`s become static drops, disappear, or are
//! guarded by drop flags, using the Owned/Unowned initialization analysis.
//!
//! Flags are `i32` locals named `__df_<place>`, one per atom that needs
//! one. A flag starts at 1 for parameter atoms and 0 otherwise, is set
//! after every statement that assigns the atom and cleared after every
//! move or drop of it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ast::print::is_labeled;
use crate::ast::{
    CompositeEnv, Decl, Dialect, Expr, ExprKind, Function, FunctionBody, Ident, Module, Place, Span, Stmt, StmtKind,
    Type,
};
use crate::dataflow::{init_analysis, InitState};
use crate::lower::drop_order;
use crate::ownership::Universe;

pub fn elaborate(m: &Module) -> Module {
    let functions = m.functions.iter().map(|f| elaborate_function(&m.composites, f)).collect();
    Module { name: m.name.clone(), composites: m.composites.clone(), functions, dialect: Dialect::Elaborated }
}

/// What happens to one atom-level drop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fate {
    Delete,
    Static,
    Flagged(usize),
}

fn elaborate_function(cenv: &CompositeEnv, f: &Function) -> Function {
    let Some(body) = &f.body else { return f.clone() };
    let facts = init_analysis(cenv, f);
    let u = &facts.universe;

    // Fate of every atom-level piece of every Drop, keyed by statement.
    let mut plans: HashMap<*const Stmt, Vec<(Place, Fate)>> = HashMap::new();
    let mut flagged: BTreeSet<usize> = BTreeSet::new();
    let mut label = 0u32;
    body.body.walk(&mut |s| {
        if !is_labeled(&s.kind) {
            return;
        }
        if let StmtKind::Drop(p) = &s.kind {
            let node = facts.cfg.node_with_label(label).expect("labeled node");
            let st: Option<&InitState> = facts.before[node].as_ref();
            let plan = drop_pieces(u, p)
                .into_iter()
                .map(|(atom, place)| {
                    let fate = match st {
                        Some(st) if !st.owned.contains(atom) => Fate::Delete,
                        None => Fate::Delete,
                        Some(st) if !st.unowned.contains(atom) => Fate::Static,
                        Some(_) => {
                            flagged.insert(atom);
                            Fate::Flagged(atom)
                        }
                    };
                    (place, fate)
                })
                .collect();
            plans.insert(s as *const Stmt, plan);
        }
        label += 1;
    });

    let mut used: BTreeSet<Ident> = f.all_vars().iter().map(|d| d.name.clone()).collect();
    let mut flags: BTreeMap<usize, Ident> = BTreeMap::new();
    for &a in &flagged {
        let name = fresh(&mut used, &format!("__df_{}", mangle(&u.atom(a).place)));
        flags.insert(a, name);
    }

    let params: BTreeSet<usize> = f.params.iter().flat_map(|d| u.var_atoms(&d.name).iter().copied()).collect();
    let mut rw = Rewriter { u, flags: &flags, plans: &plans };
    let span = body.body.span;
    let mut items: Vec<Stmt> = flags.iter().map(|(a, name)| set_flag(name, params.contains(a), span)).collect();
    items.extend(rw.seq_items(&body.body, true));

    let mut locals = body.locals.clone();
    locals.extend(flags.values().map(|n| Decl { name: n.clone(), ty: Type::I32, span: f.span }));
    let drop_flags = flags.iter().map(|(a, n)| (n.clone(), u.atom(*a).place.clone())).collect();
    Function {
        name: f.name.clone(),
        params: f.params.clone(),
        ret: f.ret.clone(),
        body: Some(FunctionBody { locals, body: seq(items, span), drop_flags }),
        span: f.span,
    }
}

/// Atom-level pieces of a drop: the atoms under `p` in drop order, or the
/// atom containing an interior place.
fn drop_pieces(u: &Universe, p: &Place) -> Vec<(usize, Place)> {
    let under = u.atoms_under(p);
    if under.is_empty() {
        return u.containing_atom(p).map(|a| (a, p.clone())).into_iter().collect();
    }
    drop_order(u, p.root()).into_iter().filter(|i| under.contains(i)).map(|i| (i, u.atom(i).place.clone())).collect()
}

/// `p.x` becomes `p_x`, `*l` becomes `l_deref`.
pub fn mangle(p: &Place) -> String {
    match p {
        Place::Var(x) => x.clone(),
        Place::Deref(b) => format!("{}_deref", mangle(b)),
        Place::Field(b, l) => format!("{}_{l}", mangle(b)),
        Place::Downcast(b, v) => format!("{}_{v}", mangle(b)),
    }
}

fn fresh(used: &mut BTreeSet<Ident>, base: &str) -> Ident {
    let mut name = base.to_string();
    let mut n = 1;
    while used.contains(&name) {
        name = format!("{base}_{n}");
        n += 1;
    }
    used.insert(name.clone());
    name
}

fn set_flag(name: &str, on: bool, span: Span) -> Stmt {
    Stmt::at(
        StmtKind::Assign(Place::var(name), Expr::at(ExprKind::Const(crate::ast::Const::Int(on as i32)), span)),
        span,
    )
}

fn seq(items: Vec<Stmt>, span: Span) -> Stmt {
    match items.len() {
        0 => Stmt::at(StmtKind::Skip, span),
        1 => items.into_iter().next().unwrap(),
        _ => Stmt::at(StmtKind::Seq(items), span),
    }
}

fn is_drop_like(s: &Stmt) -> bool {
    matches!(s.kind, StmtKind::Drop(_) | StmtKind::StaticDrop(_) | StmtKind::FlaggedDrop(..) | StmtKind::Skip)
}

struct Rewriter<'a> {
    u: &'a Universe,
    flags: &'a BTreeMap<usize, Ident>,
    plans: &'a HashMap<*const Stmt, Vec<(Place, Fate)>>,
}

impl Rewriter<'_> {
    /// Rewritten items of `s` viewed as a sequence. Flag updates after drops
    /// are skipped in a tail of drops that ends the function.
    fn seq_items(&mut self, s: &Stmt, top: bool) -> Vec<Stmt> {
        let items: Vec<&Stmt> = match &s.kind {
            StmtKind::Seq(items) => items.iter().collect(),
            _ => vec![s],
        };
        let mut out = Vec::new();
        for (i, it) in items.iter().enumerate() {
            let rest = &items[i + 1..];
            let exits = rest.iter().all(|r| is_drop_like(r) || matches!(r.kind, StmtKind::Return(_)))
                && (top || rest.iter().any(|r| matches!(r.kind, StmtKind::Return(_))));
            self.stmt(it, exits, &mut out);
        }
        out
    }

    fn flag_updates(&self, atoms: impl IntoIterator<Item = usize>, on: bool, span: Span, out: &mut Vec<Stmt>) {
        let mut seen = BTreeSet::new();
        for a in atoms {
            if let Some(name) = self.flags.get(&a) {
                if seen.insert(a) {
                    out.push(set_flag(name, on, span));
                }
            }
        }
    }

    fn moves_of(&self, exprs: &[&Expr]) -> Vec<usize> {
        exprs
            .iter()
            .filter_map(|e| match &e.kind {
                ExprKind::Move(p) => Some(self.u.moved_atoms(p)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    fn stmt(&mut self, s: &Stmt, exits: bool, out: &mut Vec<Stmt>) {
        let span = s.span;
        match &s.kind {
            StmtKind::Assign(p, e) | StmtKind::AssignBox(p, e) | StmtKind::AssignVariant(p, _, e) => {
                out.push(s.clone());
                self.flag_updates(self.moves_of(&[e]), false, span, out);
                self.flag_updates(self.u.atoms_under(p), true, span, out);
            }
            StmtKind::Call(dest, _, args) => {
                out.push(s.clone());
                let args: Vec<&Expr> = args.iter().collect();
                self.flag_updates(self.moves_of(&args), false, span, out);
                if let Some(p) = dest {
                    self.flag_updates(self.u.atoms_under(p), true, span, out);
                }
            }
            StmtKind::Drop(_) => {
                let plan = self.plans.get(&(s as *const Stmt)).cloned().unwrap_or_default();
                for (place, fate) in plan {
                    match fate {
                        Fate::Delete => {}
                        Fate::Static => {
                            out.push(Stmt::at(StmtKind::StaticDrop(place.clone()), span));
                            if !exits {
                                self.flag_updates(self.u.atoms_under(&place), false, span, out);
                            }
                        }
                        Fate::Flagged(a) => {
                            out.push(Stmt::at(StmtKind::FlaggedDrop(place.clone(), self.flags[&a].clone()), span));
                            if !exits {
                                self.flag_updates(self.u.atoms_under(&place), false, span, out);
                            }
                        }
                    }
                }
            }
            StmtKind::Seq(_) => {
                let items = self.seq_items(s, false);
                out.extend(items);
            }
            StmtKind::Let(ds, body) => {
                let items = self.seq_items(body, false);
                out.push(Stmt::at(StmtKind::Let(ds.clone(), Box::new(seq(items, span))), span));
            }
            StmtKind::If(c, a, b) => {
                let a = self.seq_items(a, false);
                let b = self.seq_items(b, false);
                out.push(Stmt::at(StmtKind::If(c.clone(), Box::new(seq(a, span)), Box::new(seq(b, span))), span));
            }
            StmtKind::Loop(body) => {
                let items = self.seq_items(body, false);
                out.push(Stmt::at(StmtKind::Loop(Box::new(seq(items, span))), span));
            }
            _ => out.push(s.clone()),
        }
    }
}
