use std::collections::{BTreeMap, BTreeSet};

use super::{RArm, RComposite, RExpr, RExprKind, RFn, RModule, RStmt, RStmtKind, RType};
use crate::ast::typing::{owns_resources, type_of_place, VarTypes};
use crate::ast::{
    BinOp, Composite, CompositeEnv, CompositeKind, Const, Decl, Dialect, Expr, ExprKind, Function, FunctionBody,
    Module, Place, Signature, Span, Stmt, StmtKind, Type, UnOp, F32,
};
use crate::diag::{codes, Diagnostic};

pub(crate) fn desugar(name: String, raw: RModule) -> Result<Module, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut kinds = BTreeMap::new();
    for c in &raw.composites {
        kinds.entry(c.name.clone()).or_insert(c.kind);
    }
    let mut cenv = CompositeEnv::new();
    for RComposite { name, kind, fields, span } in &raw.composites {
        let fields = fields.iter().map(|(l, t)| (l.clone(), resolve(&kinds, t, &mut diags))).collect();
        let c = Composite { name: name.clone(), kind: *kind, fields, span: *span };
        if !cenv.insert(c) {
            diags.push(Diagnostic::new(codes::DUPLICATE_COMPOSITE, format!("duplicate type `{name}`"), *span));
        }
    }
    let mut sigs = BTreeMap::new();
    for f in &raw.fns {
        let params = f.params.iter().map(|(_, t, _)| resolve(&kinds, t, &mut diags)).collect();
        let ret = resolve(&kinds, &f.ret, &mut diags);
        sigs.entry(f.name.clone()).or_insert(Signature { params, ret });
    }
    let mut functions = Vec::new();
    for f in &raw.fns {
        functions.push(desugar_fn(&cenv, &sigs, &kinds, f, &mut diags));
    }
    if diags.is_empty() {
        Ok(Module { name, composites: cenv, functions, dialect: Dialect::Surface })
    } else {
        Err(diags)
    }
}

fn resolve(kinds: &BTreeMap<String, CompositeKind>, t: &RType, diags: &mut Vec<Diagnostic>) -> Type {
    match t {
        RType::Unit => Type::UNIT,
        RType::Bool => Type::BOOL,
        RType::I32 => Type::I32,
        RType::F32 => Type::F32,
        RType::Box(t) => Type::boxed(resolve(kinds, t, diags)),
        RType::Fn(ps, r) => {
            Type::Fn(ps.iter().map(|p| resolve(kinds, p, diags)).collect(), Box::new(resolve(kinds, r, diags)))
        }
        RType::Named(n, span) => match kinds.get(n) {
            Some(CompositeKind::Struct) => Type::Struct(n.clone()),
            Some(CompositeKind::Enum) => Type::Enum(n.clone()),
            None => {
                diags.push(Diagnostic::new(codes::UNKNOWN_TYPE, format!("unknown type `{n}`"), *span));
                Type::Struct(n.clone())
            }
        },
    }
}

fn desugar_fn(
    cenv: &CompositeEnv,
    sigs: &BTreeMap<String, Signature>,
    kinds: &BTreeMap<String, CompositeKind>,
    f: &RFn,
    diags: &mut Vec<Diagnostic>,
) -> Function {
    let params: Vec<Decl> = f
        .params
        .iter()
        .map(|(n, t, span)| Decl { name: n.clone(), ty: resolve(kinds, t, diags), span: *span })
        .collect();
    let ret = resolve(kinds, &f.ret, diags);
    let body = f.body.as_ref().map(|stmts| {
        let mut reserved = BTreeSet::new();
        collect_names(stmts, &mut reserved);
        let mut fx = Fx {
            cenv,
            sigs,
            kinds,
            ctx: VarTypes::new(),
            scopes: vec![BTreeMap::new()],
            used: BTreeSet::new(),
            reserved,
            diags: Vec::new(),
        };
        for d in &params {
            fx.used.insert(d.name.clone());
            fx.ctx.insert(d.name.clone(), d.ty.clone());
            fx.scopes[0].insert(d.name.clone(), d.name.clone());
        }
        let body = fx.block(stmts);
        diags.append(&mut fx.diags);
        FunctionBody { locals: Vec::new(), body, drop_flags: Vec::new() }
    });
    Function { name: f.name.clone(), params, ret, body, span: f.span }
}

fn collect_names(stmts: &[RStmt], out: &mut BTreeSet<String>) {
    for s in stmts {
        match &s.kind {
            RStmtKind::Let(n, ..) => {
                out.insert(n.clone());
            }
            RStmtKind::If(_, a, b) => {
                collect_names(a, out);
                if let Some(b) = b {
                    collect_names(b, out);
                }
            }
            RStmtKind::Loop(b) | RStmtKind::While(_, b) | RStmtKind::Block(b) => collect_names(b, out),
            RStmtKind::Match(_, arms) => {
                for a in arms {
                    if let Some(b) = &a.binder {
                        out.insert(b.clone());
                    }
                    collect_names(&a.body, out);
                }
            }
            _ => {}
        }
    }
}

fn normalize(mut items: Vec<Stmt>) -> Stmt {
    match items.len() {
        0 => Stmt::skip(),
        1 => items.pop().unwrap(),
        _ => Stmt::seq(items),
    }
}

/// Temporaries and the statements computing them, hoisted before a statement.
#[derive(Default)]
struct Hoist {
    decls: Vec<Decl>,
    pre: Vec<Stmt>,
}

struct Fx<'a> {
    cenv: &'a CompositeEnv,
    sigs: &'a BTreeMap<String, Signature>,
    kinds: &'a BTreeMap<String, CompositeKind>,
    ctx: VarTypes,
    scopes: Vec<BTreeMap<String, String>>,
    used: BTreeSet<String>,
    reserved: BTreeSet<String>,
    diags: Vec<Diagnostic>,
}

impl Fx<'_> {
    fn err(&mut self, code: &str, msg: impl Into<String>, span: Span) {
        self.diags.push(Diagnostic::new(code, msg, span));
    }

    fn lookup(&self, name: &str) -> String {
        self.scopes.iter().rev().find_map(|s| s.get(name).cloned()).unwrap_or_else(|| name.to_string())
    }

    /// Unique name for a user declaration; shadowing and sibling reuse get
    /// numbered suffixes.
    fn unique_user_name(&mut self, name: &str) -> String {
        let mut u = name.to_string();
        let mut i = 1;
        while self.used.contains(&u) {
            u = format!("{name}_{i}");
            i += 1;
        }
        self.used.insert(u.clone());
        u
    }

    fn fresh_temp(&mut self, ty: Type, span: Span) -> Decl {
        let mut i = 0;
        let name = loop {
            let n = format!("__t{i}");
            if !self.used.contains(&n) && !self.reserved.contains(&n) {
                break n;
            }
            i += 1;
        };
        self.used.insert(name.clone());
        self.ctx.insert(name.clone(), ty.clone());
        Decl { name, ty, span }
    }

    fn owns(&self, t: &Type) -> bool {
        owns_resources(self.cenv, t)
    }

    fn place_type(&self, p: &Place) -> Option<Type> {
        type_of_place(self.cenv, &self.ctx, p).ok()
    }

    fn wrap(&self, h: Hoist, main: Vec<Stmt>) -> Vec<Stmt> {
        if h.decls.is_empty() {
            let mut out = h.pre;
            out.extend(main);
            return out;
        }
        let mut body = h.pre;
        body.extend(main);
        let mut s = normalize(body);
        for d in h.decls.into_iter().rev() {
            let span = d.span;
            s = Stmt::at(StmtKind::Let(vec![d], Box::new(s)), span);
        }
        vec![s]
    }

    fn block(&mut self, stmts: &[RStmt]) -> Stmt {
        self.scopes.push(BTreeMap::new());
        let items = self.items(stmts);
        self.scopes.pop();
        normalize(items)
    }

    fn items(&mut self, stmts: &[RStmt]) -> Vec<Stmt> {
        let mut out = Vec::new();
        for (i, s) in stmts.iter().enumerate() {
            if let RStmtKind::Let(name, ty, init) = &s.kind {
                let ty = match (ty, init) {
                    (Some(t), _) => resolve(self.kinds, t, &mut self.diags),
                    (None, Some(e)) => match self.infer(e) {
                        Some(t) => t,
                        None => {
                            self.err(
                                codes::PARSE,
                                format!("cannot infer the type of `{name}`; add an annotation"),
                                s.span,
                            );
                            Type::UNIT
                        }
                    },
                    (None, None) => {
                        self.err(codes::PARSE, format!("`{name}` needs a type annotation"), s.span);
                        Type::UNIT
                    }
                };
                let u = self.unique_user_name(name);
                self.ctx.insert(u.clone(), ty.clone());
                // The initializer still sees the outer binding of `name`.
                let mut body = match init {
                    Some(e) => self.assign(Place::Var(u.clone()), e, s.span),
                    None => Vec::new(),
                };
                self.scopes.last_mut().unwrap().insert(name.clone(), u.clone());
                body.extend(self.items(&stmts[i + 1..]));
                let decl = Decl { name: u, ty, span: s.span };
                out.push(Stmt::at(StmtKind::Let(vec![decl], Box::new(normalize(body))), s.span));
                return out;
            }
            out.extend(self.stmt(s));
        }
        out
    }

    fn stmt(&mut self, s: &RStmt) -> Vec<Stmt> {
        let span = s.span;
        match &s.kind {
            RStmtKind::Skip => vec![Stmt::at(StmtKind::Skip, span)],
            RStmtKind::Let(..) => unreachable!("handled by items"),
            RStmtKind::Block(b) => vec![self.block(b)],
            RStmtKind::Assign(lhs, rhs) => match self.to_place(lhs) {
                Some(p) => self.assign(p, rhs, span),
                None => {
                    self.err(codes::PARSE, "left-hand side of assignment is not a place", lhs.span);
                    vec![]
                }
            },
            RStmtKind::Expr(e) => match &e.kind {
                RExprKind::Call(f, args) => {
                    let mut h = Hoist::default();
                    let args = self.args(args, &mut h);
                    self.wrap(h, vec![Stmt::at(StmtKind::Call(None, f.clone(), args), span)])
                }
                _ => {
                    self.err(codes::PARSE, "expression statement must be a call", span);
                    vec![]
                }
            },
            RStmtKind::If(c, a, b) => {
                let mut h = Hoist::default();
                let c = self.pure(c, &mut h);
                let a = self.block(a);
                let b = b.as_ref().map(|b| self.block(b)).unwrap_or_else(Stmt::skip);
                self.wrap(h, vec![Stmt::at(StmtKind::If(c, Box::new(a), Box::new(b)), span)])
            }
            RStmtKind::Loop(b) => vec![Stmt::at(StmtKind::Loop(Box::new(self.block(b))), span)],
            RStmtKind::While(c, b) => {
                let mut h = Hoist::default();
                let c = self.pure(c, &mut h);
                let body = self.block(b);
                let test = Stmt::at(StmtKind::If(c, Box::new(body), Box::new(Stmt::at(StmtKind::Break, span))), span);
                let inner = normalize(self.wrap(h, vec![test]));
                vec![Stmt::at(StmtKind::Loop(Box::new(inner)), span)]
            }
            RStmtKind::Break => vec![Stmt::at(StmtKind::Break, span)],
            RStmtKind::Continue => vec![Stmt::at(StmtKind::Continue, span)],
            RStmtKind::Return(None) => vec![Stmt::at(StmtKind::Return(None), span)],
            RStmtKind::Return(Some(e)) => {
                let inner = match &e.kind {
                    RExprKind::Move(inner) => inner,
                    _ => e,
                };
                if let Some(p) = self.to_place(inner) {
                    return vec![Stmt::at(StmtKind::Return(Some(p)), span)];
                }
                let Some(t) = self.infer(e) else {
                    self.err(codes::PARSE, "cannot infer the type of the returned value", span);
                    return vec![];
                };
                let d = self.fresh_temp(t, span);
                let mut body = self.assign(Place::Var(d.name.clone()), e, span);
                body.push(Stmt::at(StmtKind::Return(Some(Place::Var(d.name.clone()))), span));
                vec![Stmt::at(StmtKind::Let(vec![d], Box::new(normalize(body))), span)]
            }
            RStmtKind::Match(scrut, arms) => self.match_stmt(scrut, arms, span),
        }
    }

    /// Assignment of a right-hand side that may be a call, an allocation, a
    /// variant, a struct literal or an expression.
    fn assign(&mut self, dest: Place, rhs: &RExpr, span: Span) -> Vec<Stmt> {
        let mut h = Hoist::default();
        let main = match &rhs.kind {
            RExprKind::Call(f, args) => {
                let args = self.args(args, &mut h);
                vec![Stmt::at(StmtKind::Call(Some(dest), f.clone(), args), span)]
            }
            RExprKind::BoxNew(e) => {
                let e = self.operand(e, &mut h);
                vec![Stmt::at(StmtKind::AssignBox(dest, e), span)]
            }
            RExprKind::Variant(en, v, payload) => {
                match self.cenv.get(en) {
                    Some(c) if c.kind == CompositeKind::Enum => {
                        if c.field(v).is_none() {
                            self.err(codes::ILL_TYPED, format!("`{en}` has no variant `{v}`"), rhs.span);
                        }
                    }
                    _ => self.err(codes::UNKNOWN_TYPE, format!("unknown enum `{en}`"), rhs.span),
                }
                let e = match payload {
                    Some(p) => self.operand(p, &mut h),
                    None => Expr::at(ExprKind::Const(Const::Unit), rhs.span),
                };
                vec![Stmt::at(StmtKind::AssignVariant(dest, v.clone(), e), span)]
            }
            RExprKind::StructLit(sn, fields) => {
                let Some(c) = self.cenv.get(sn).filter(|c| c.kind == CompositeKind::Struct).cloned() else {
                    self.err(codes::UNKNOWN_TYPE, format!("unknown struct `{sn}`"), rhs.span);
                    return vec![];
                };
                let mut seen = BTreeSet::new();
                let mut out = Vec::new();
                for (l, fe) in fields {
                    if c.field(l).is_none() {
                        self.err(codes::ILL_TYPED, format!("`{sn}` has no field `{l}`"), fe.span);
                    } else if !seen.insert(l.clone()) {
                        self.err(codes::ILL_TYPED, format!("field `{l}` given twice"), fe.span);
                    }
                    out.extend(self.assign(dest.clone().field(l), fe, fe.span));
                }
                for (l, _) in &c.fields {
                    if !seen.contains(l) {
                        self.err(codes::ILL_TYPED, format!("missing field `{l}` in `{sn}` literal"), rhs.span);
                    }
                }
                out
            }
            _ => {
                let e = self.operand(rhs, &mut h);
                vec![Stmt::at(StmtKind::Assign(dest, e), span)]
            }
        };
        self.wrap(h, main)
    }

    fn args(&mut self, args: &[RExpr], h: &mut Hoist) -> Vec<Expr> {
        args.iter().map(|a| self.operand(a, h)).collect()
    }

    /// Expression in a move position: resource-owning place reads become moves.
    fn operand(&mut self, e: &RExpr, h: &mut Hoist) -> Expr {
        match &e.kind {
            RExprKind::Call(..) | RExprKind::BoxNew(_) | RExprKind::Variant(..) | RExprKind::StructLit(..) => {
                self.hoist(e, h)
            }
            RExprKind::Move(inner) => match self.to_place(inner) {
                Some(p) => Expr::at(ExprKind::Move(p), e.span),
                None => {
                    self.err(codes::PARSE, "`move` needs a place", e.span);
                    Expr::at(ExprKind::Const(Const::Unit), e.span)
                }
            },
            _ => {
                let ex = self.pure(e, h);
                match ex.kind {
                    ExprKind::Place(p) if self.place_type(&p).is_some_and(|t| self.owns(&t)) => {
                        Expr::at(ExprKind::Move(p), ex.span)
                    }
                    _ => ex,
                }
            }
        }
    }

    fn hoist(&mut self, e: &RExpr, h: &mut Hoist) -> Expr {
        let Some(t) = self.infer(e) else {
            self.err(codes::PARSE, "cannot infer the type of this expression", e.span);
            return Expr::at(ExprKind::Const(Const::Unit), e.span);
        };
        let d = self.fresh_temp(t.clone(), e.span);
        let p = Place::Var(d.name.clone());
        h.decls.push(d);
        let stmts = self.assign(p.clone(), e, e.span);
        h.pre.extend(stmts);
        if self.owns(&t) {
            Expr::at(ExprKind::Move(p), e.span)
        } else {
            Expr::at(ExprKind::Place(p), e.span)
        }
    }

    fn pure(&mut self, e: &RExpr, h: &mut Hoist) -> Expr {
        let span = e.span;
        let kind = match &e.kind {
            RExprKind::Int(n) => match i32::try_from(*n) {
                Ok(n) => ExprKind::Const(Const::Int(n)),
                Err(_) => {
                    self.err(codes::PARSE, "integer literal out of range", span);
                    ExprKind::Const(Const::Int(0))
                }
            },
            RExprKind::Float(f) => ExprKind::Const(Const::Float(F32(*f))),
            RExprKind::Bool(b) => ExprKind::Const(Const::Bool(*b)),
            RExprKind::Unit => ExprKind::Const(Const::Unit),
            RExprKind::Var(_) | RExprKind::Deref(_) | RExprKind::Field(..) | RExprKind::Downcast(..) => {
                match self.to_place(e) {
                    Some(p) => ExprKind::Place(p),
                    None => {
                        self.err(codes::PARSE, "expected a place", span);
                        ExprKind::Const(Const::Unit)
                    }
                }
            }
            RExprKind::Unary(op, a) => ExprKind::Unary(*op, Box::new(self.pure(a, h))),
            RExprKind::Binary(op, a, b) => {
                let a = self.pure(a, h);
                let b = self.pure(b, h);
                ExprKind::Binary(*op, Box::new(a), Box::new(b))
            }
            RExprKind::Is(p, v) => match self.to_place(p) {
                Some(p) => ExprKind::CheckTag(p, v.clone()),
                None => {
                    self.err(codes::PARSE, "`is` needs a place", span);
                    ExprKind::Const(Const::Bool(false))
                }
            },
            RExprKind::Move(p) => match self.to_place(p) {
                Some(p) => ExprKind::Move(p),
                None => {
                    self.err(codes::PARSE, "`move` needs a place", span);
                    ExprKind::Const(Const::Unit)
                }
            },
            RExprKind::Call(..) | RExprKind::BoxNew(_) | RExprKind::Variant(..) | RExprKind::StructLit(..) => {
                return self.hoist(e, h);
            }
        };
        Expr::at(kind, span)
    }

    fn to_place(&self, e: &RExpr) -> Option<Place> {
        Some(match &e.kind {
            RExprKind::Var(n) => Place::Var(self.lookup(n)),
            RExprKind::Deref(b) => self.to_place(b)?.deref(),
            RExprKind::Field(b, f) => self.to_place(b)?.field(f),
            RExprKind::Downcast(b, v) => self.to_place(b)?.downcast(v),
            _ => return None,
        })
    }

    fn infer(&self, e: &RExpr) -> Option<Type> {
        match &e.kind {
            RExprKind::Int(_) => Some(Type::I32),
            RExprKind::Float(_) => Some(Type::F32),
            RExprKind::Bool(_) | RExprKind::Is(..) => Some(Type::BOOL),
            RExprKind::Unit => Some(Type::UNIT),
            RExprKind::Var(_) | RExprKind::Deref(_) | RExprKind::Field(..) | RExprKind::Downcast(..) => {
                self.place_type(&self.to_place(e)?)
            }
            RExprKind::Move(p) => self.place_type(&self.to_place(p)?),
            RExprKind::Unary(UnOp::Neg, a) => self.infer(a),
            RExprKind::Unary(UnOp::Not, _) => Some(Type::BOOL),
            RExprKind::Binary(op, a, _) => {
                if op.is_comparison() || matches!(op, BinOp::And | BinOp::Or) {
                    Some(Type::BOOL)
                } else {
                    self.infer(a)
                }
            }
            RExprKind::Call(f, _) => self.sigs.get(f).map(|s| s.ret.clone()),
            RExprKind::BoxNew(inner) => self.infer(inner).map(Type::boxed),
            RExprKind::Variant(en, ..) => {
                self.cenv.get(en).filter(|c| c.kind == CompositeKind::Enum).map(|_| Type::Enum(en.clone()))
            }
            RExprKind::StructLit(sn, _) => {
                self.cenv.get(sn).filter(|c| c.kind == CompositeKind::Struct).map(|_| Type::Struct(sn.clone()))
            }
        }
    }

    fn match_stmt(&mut self, scrut: &RExpr, arms: &[RArm], span: Span) -> Vec<Stmt> {
        let mut h = Hoist::default();
        let place = match self.to_place(scrut) {
            Some(p) => p,
            None => match self.hoist(scrut, &mut h).kind {
                ExprKind::Move(p) | ExprKind::Place(p) => p,
                _ => return vec![],
            },
        };
        let comp = match self.place_type(&place) {
            Some(Type::Enum(n)) => self.cenv.get(&n).cloned(),
            _ => None,
        };
        let Some(comp) = comp else {
            self.err(codes::ILL_TYPED, format!("`match` on `{place}`, which is not an enum"), scrut.span);
            return vec![];
        };
        let mut seen = BTreeSet::new();
        for a in arms {
            if a.enum_name != comp.name {
                self.err(
                    codes::ILL_TYPED,
                    format!("pattern `{}::{}` does not match `{}`", a.enum_name, a.variant, comp.name),
                    a.span,
                );
            } else if comp.field(&a.variant).is_none() {
                self.err(codes::ILL_TYPED, format!("`{}` has no variant `{}`", comp.name, a.variant), a.span);
            } else if !seen.insert(a.variant.clone()) {
                self.err(codes::PARSE, format!("duplicate arm for `{}::{}`", comp.name, a.variant), a.span);
            }
        }
        let missing: Vec<&str> = comp.fields.iter().map(|(v, _)| v.as_str()).filter(|v| !seen.contains(*v)).collect();
        if !missing.is_empty() {
            self.err(codes::NON_EXHAUSTIVE, format!("non-exhaustive match: missing {}", missing.join(", ")), span);
            return vec![];
        }
        if arms.is_empty() {
            return self.wrap(h, vec![]);
        }
        let chain = self.arm_chain(&place, &comp, arms);
        self.wrap(h, vec![chain])
    }

    fn arm_chain(&mut self, place: &Place, comp: &Composite, arms: &[RArm]) -> Stmt {
        let a = &arms[0];
        let body = self.arm_body(place, comp, a);
        if arms.len() == 1 {
            return body;
        }
        let test = Expr::at(ExprKind::CheckTag(place.clone(), a.variant.clone()), a.span);
        let rest = self.arm_chain(place, comp, &arms[1..]);
        Stmt::at(StmtKind::If(test, Box::new(body), Box::new(rest)), a.span)
    }

    /// The binder is initialized only after its tag test succeeded.
    fn arm_body(&mut self, place: &Place, comp: &Composite, arm: &RArm) -> Stmt {
        self.scopes.push(BTreeMap::new());
        let out = match &arm.binder {
            None => normalize(self.items(&arm.body)),
            Some(b) => {
                let t = comp.field(&arm.variant).map(|(_, t)| t.clone()).unwrap_or(Type::UNIT);
                let u = self.unique_user_name(b);
                self.ctx.insert(u.clone(), t.clone());
                self.scopes.last_mut().unwrap().insert(b.clone(), u.clone());
                let src = place.clone().downcast(&arm.variant);
                let rhs = if self.owns(&t) { ExprKind::Move(src) } else { ExprKind::Place(src) };
                let mut body =
                    vec![Stmt::at(StmtKind::Assign(Place::Var(u.clone()), Expr::at(rhs, arm.span)), arm.span)];
                body.extend(self.items(&arm.body));
                let decl = Decl { name: u, ty: t, span: arm.span };
                Stmt::at(StmtKind::Let(vec![decl], Box::new(normalize(body))), arm.span)
            }
        };
        self.scopes.pop();
        out
    }
}
