//! Lowering: surface Owlang to IR.
//!
//! Scoped declarations become function locals, and `Drop` statements are
//! inserted where owning variables go out of scope or are overwritten. Drops
//! are per ownership atom; a variable's atoms are dropped in expansion order
//! with a Box shell last, and variables in reverse declaration order.

use std::collections::BTreeSet;

use crate::ast::typing::{owns_resources, type_of_place};
use crate::ast::{
    CompositeEnv, Decl, Dialect, Expr, ExprKind, Function, FunctionBody, Ident, Module, Place, Span, Stmt, StmtKind,
    Type,
};
use crate::ownership::{AtomKind, Universe};

pub fn lower(m: &Module) -> Module {
    if m.dialect != Dialect::Surface {
        return m.clone();
    }
    let functions = m.functions.iter().map(|f| lower_function(&m.composites, f)).collect();
    Module { name: m.name.clone(), composites: m.composites.clone(), functions, dialect: Dialect::Ir }
}

/// Atoms of `x` in drop order: contents first, a shell last.
pub fn drop_order(u: &Universe, x: &str) -> Vec<usize> {
    let atoms = u.var_atoms(x);
    let mut out: Vec<usize> = atoms.iter().copied().filter(|&i| u.atom(i).kind != AtomKind::Shell).collect();
    out.extend(atoms.iter().copied().filter(|&i| u.atom(i).kind == AtomKind::Shell));
    out
}

/// Places to drop before `dest` is overwritten, in drop order.
pub fn overwrite_drops(u: &Universe, dest: &Place) -> Vec<Place> {
    let under = u.atoms_under(dest);
    if under.is_empty() {
        return if u.containing_atom(dest).is_some() { vec![dest.clone()] } else { vec![] };
    }
    drop_order(u, dest.root()).into_iter().filter(|i| under.contains(i)).map(|i| u.atom(i).place.clone()).collect()
}

fn lower_function(cenv: &CompositeEnv, f: &Function) -> Function {
    let Some(body) = &f.body else { return f.clone() };
    let universe = Universe::for_function(cenv, f);
    let used: BTreeSet<Ident> = f.all_vars().iter().map(|d| d.name.clone()).collect();
    let mut cx = Lower {
        cenv,
        universe,
        ctx: f.var_types(),
        scopes: vec![f.params.iter().map(|d| d.name.clone()).collect()],
        loops: Vec::new(),
        locals: body.locals.clone(),
        used,
        next_tmp: 0,
        ret: f.ret.clone(),
    };
    let mut out = vec![cx.stmt(&body.body)];
    if !body.body.diverges() {
        out.extend(cx.scope_drops(0, body.body.span));
    }
    Function {
        name: f.name.clone(),
        params: f.params.clone(),
        ret: f.ret.clone(),
        body: Some(FunctionBody { locals: cx.locals, body: flatten(out), drop_flags: Vec::new() }),
        span: f.span,
    }
}

/// Sequence without nested `Seq`s or `Skip`s.
fn flatten(items: Vec<Stmt>) -> Stmt {
    fn go(s: Stmt, out: &mut Vec<Stmt>) {
        match s.kind {
            StmtKind::Seq(items) => items.into_iter().for_each(|i| go(i, out)),
            StmtKind::Skip => {}
            _ => out.push(s),
        }
    }
    let mut out = Vec::new();
    items.into_iter().for_each(|s| go(s, &mut out));
    match out.len() {
        0 => Stmt::skip(),
        1 => out.pop().unwrap(),
        _ => Stmt::seq(out),
    }
}

struct Lower<'a> {
    cenv: &'a CompositeEnv,
    universe: Universe,
    ctx: crate::ast::typing::VarTypes,
    /// Variables declared per open scope; the first scope holds params.
    scopes: Vec<Vec<Ident>>,
    /// Scope depth at each enclosing loop.
    loops: Vec<usize>,
    locals: Vec<Decl>,
    used: BTreeSet<Ident>,
    next_tmp: usize,
    ret: Type,
}

impl Lower<'_> {
    fn owns_place(&self, p: &Place) -> bool {
        type_of_place(self.cenv, &self.ctx, p).is_ok_and(|t| owns_resources(self.cenv, &t))
    }

    fn fresh(&mut self, ty: Type, span: Span) -> Ident {
        let name = loop {
            let n = format!("__t{}", self.next_tmp);
            self.next_tmp += 1;
            if !self.used.contains(&n) {
                break n;
            }
        };
        self.used.insert(name.clone());
        self.ctx.insert(name.clone(), ty.clone());
        self.locals.push(Decl { name: name.clone(), ty, span });
        name
    }

    fn drops_of_var(&self, x: &str, span: Span) -> Vec<Stmt> {
        drop_order(&self.universe, x)
            .into_iter()
            .map(|i| Stmt::at(StmtKind::Drop(self.universe.atom(i).place.clone()), span))
            .collect()
    }

    /// Drops for every scope at depth `>= depth`, innermost first.
    fn scope_drops(&self, depth: usize, span: Span) -> Vec<Stmt> {
        let mut out = Vec::new();
        for scope in self.scopes[depth..].iter().rev() {
            for x in scope.iter().rev() {
                out.extend(self.drops_of_var(x, span));
            }
        }
        out
    }

    fn overwrite(&mut self, dest: &Place, rhs_kind: StmtKind, rhs: Option<&Expr>, span: Span) -> Stmt {
        if !self.owns_place(dest) {
            return Stmt::at(rhs_kind, span);
        }
        let drops: Vec<Stmt> =
            overwrite_drops(&self.universe, dest).into_iter().map(|p| Stmt::at(StmtKind::Drop(p), span)).collect();
        let trivial = match rhs {
            Some(e) => is_trivial(e) && e.places().iter().all(|p| p.root() != dest.root()),
            None => false,
        };
        if trivial {
            let mut out = drops;
            out.push(Stmt::at(rhs_kind, span));
            return Stmt::at(StmtKind::Seq(out), span);
        }
        // Evaluate into a temporary first, so the drop happens after the
        // right-hand side as in the surface semantics.
        let ty = type_of_place(self.cenv, &self.ctx, dest).expect("well-typed destination");
        let t = self.fresh(ty, span);
        let tmp = Place::Var(t);
        let first = match rhs_kind {
            StmtKind::Assign(_, e) => StmtKind::Assign(tmp.clone(), e),
            StmtKind::AssignBox(_, e) => StmtKind::AssignBox(tmp.clone(), e),
            StmtKind::AssignVariant(_, v, e) => StmtKind::AssignVariant(tmp.clone(), v, e),
            StmtKind::Call(_, f, args) => StmtKind::Call(Some(tmp.clone()), f, args),
            k => k,
        };
        let mut out = vec![Stmt::at(first, span)];
        out.extend(drops);
        out.push(Stmt::at(StmtKind::Assign(dest.clone(), Expr::at(ExprKind::Move(tmp), span)), span));
        Stmt::at(StmtKind::Seq(out), span)
    }

    fn stmt(&mut self, s: &Stmt) -> Stmt {
        let span = s.span;
        match &s.kind {
            StmtKind::Skip | StmtKind::Drop(_) | StmtKind::StaticDrop(_) | StmtKind::FlaggedDrop(..) => s.clone(),
            StmtKind::Assign(p, e) | StmtKind::AssignBox(p, e) | StmtKind::AssignVariant(p, _, e) => {
                self.overwrite(p, s.kind.clone(), Some(e), span)
            }
            StmtKind::Call(Some(p), ..) => self.overwrite(&p.clone(), s.kind.clone(), None, span),
            StmtKind::Call(None, ..) => s.clone(),
            StmtKind::Let(decls, body) => {
                self.locals.extend(decls.iter().cloned());
                self.scopes.push(decls.iter().map(|d| d.name.clone()).collect());
                // A variable entering scope owns nothing yet: every exit
                // of the scope dropped it.
                let mut out = match &body.kind {
                    StmtKind::Seq(items) if items.first().is_some_and(|s| initializes(s, decls)) => {
                        let mut v = vec![items[0].clone()];
                        v.extend(items[1..].iter().map(|i| self.stmt(i)));
                        v
                    }
                    _ if initializes(body, decls) => vec![(**body).clone()],
                    _ => vec![self.stmt(body)],
                };
                if !body.diverges() {
                    out.extend(self.scope_drops(self.scopes.len() - 1, span));
                }
                self.scopes.pop();
                flatten(out)
            }
            StmtKind::Seq(items) => flatten(items.iter().map(|i| self.stmt(i)).collect()),
            StmtKind::If(c, a, b) => {
                let a = self.stmt(a);
                let b = self.stmt(b);
                Stmt::at(StmtKind::If(c.clone(), Box::new(a), Box::new(b)), span)
            }
            StmtKind::Loop(body) => {
                self.loops.push(self.scopes.len());
                let body = self.stmt(body);
                self.loops.pop();
                Stmt::at(StmtKind::Loop(Box::new(body)), span)
            }
            StmtKind::Break | StmtKind::Continue => {
                let depth = *self.loops.last().expect("jump inside a loop");
                let mut out = self.scope_drops(depth, span);
                out.push(s.clone());
                flatten(out)
            }
            StmtKind::Return(p) => {
                let drops = self.scope_drops(0, span);
                if drops.is_empty() {
                    return s.clone();
                }
                let mut out = Vec::new();
                let ret = match p {
                    // Read through a Box before the drops free it.
                    Some(p) if self.owns_place(p) || p.has_deref() => {
                        let t = self.fresh(self.ret.clone(), span);
                        let e = if self.owns_place(p) { ExprKind::Move(p.clone()) } else { ExprKind::Place(p.clone()) };
                        out.push(Stmt::at(StmtKind::Assign(Place::Var(t.clone()), Expr::at(e, span)), span));
                        Some(Place::Var(t))
                    }
                    _ => p.clone(),
                };
                out.extend(drops);
                out.push(Stmt::at(StmtKind::Return(ret), span));
                flatten(out)
            }
        }
    }
}

/// `s` assigns one of `decls` as a whole.
fn initializes(s: &Stmt, decls: &[Decl]) -> bool {
    let dest = match &s.kind {
        StmtKind::Assign(p, _) | StmtKind::AssignBox(p, _) | StmtKind::AssignVariant(p, _, _) => p,
        StmtKind::Call(Some(p), ..) => p,
        _ => return false,
    };
    matches!(dest, Place::Var(x) if decls.iter().any(|d| &d.name == x))
}

/// An expression whose evaluation cannot fail or read through the heap.
fn is_trivial(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Const(_) => true,
        ExprKind::Place(p) | ExprKind::Move(p) => !p.has_deref() && !p.has_downcast(),
        _ => false,
    }
}
