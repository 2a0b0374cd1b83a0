//! Structural well-formedness of modules.

use std::collections::{BTreeMap, BTreeSet};

use super::typing::{type_of_expr, type_of_place, TypeError, VarTypes};
use super::{CompositeEnv, CompositeKind, Dialect, ExprKind, Function, Module, Span, Stmt, StmtKind, Type};
use crate::diag::{codes, Diagnostic};

pub fn wf_module(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_composites(&m.composites, &mut out);
    let mut seen = BTreeSet::new();
    for f in &m.functions {
        if !seen.insert(f.name.as_str()) {
            out.push(Diagnostic::new(codes::DUPLICATE_FN, format!("duplicate function `{}`", f.name), f.span));
        }
    }
    let sigs: BTreeMap<&str, &Function> = m.functions.iter().map(|f| (f.name.as_str(), f)).collect();
    for f in &m.functions {
        check_function(m, &sigs, f, &mut out);
    }
    out
}

fn check_type(cenv: &CompositeEnv, t: &Type, span: Span, out: &mut Vec<Diagnostic>) {
    match t {
        Type::Base(_) => {}
        Type::Box(inner) => check_type(cenv, inner, span, out),
        Type::Fn(ps, r) => {
            ps.iter().for_each(|p| check_type(cenv, p, span, out));
            check_type(cenv, r, span, out);
        }
        Type::Struct(n) | Type::Enum(n) => {
            let want = if matches!(t, Type::Struct(_)) { CompositeKind::Struct } else { CompositeKind::Enum };
            match cenv.get(n) {
                Some(c) if c.kind == want => {}
                _ => out.push(Diagnostic::new(codes::UNKNOWN_TYPE, format!("unknown type `{n}`"), span)),
            }
        }
    }
}

fn check_composites(cenv: &CompositeEnv, out: &mut Vec<Diagnostic>) {
    for c in cenv.iter() {
        if c.fields.is_empty() {
            out.push(Diagnostic::new(
                codes::EMPTY_COMPOSITE,
                format!("`{}` has no fields or variants", c.name),
                c.span,
            ));
        }
        let mut labels = BTreeSet::new();
        for (l, t) in &c.fields {
            if !labels.insert(l) {
                out.push(Diagnostic::new(
                    codes::DUPLICATE_COMPOSITE,
                    format!("duplicate label `{l}` in `{}`", c.name),
                    c.span,
                ));
            }
            check_type(cenv, t, c.span, out);
        }
    }
    // Recursion must pass through a Box.
    fn inline_deps(t: &Type) -> Option<&str> {
        match t {
            Type::Struct(n) | Type::Enum(n) => Some(n),
            _ => None,
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<'a>(cenv: &'a CompositeEnv, n: &'a str, marks: &mut BTreeMap<&'a str, Mark>) -> bool {
        match marks.get(n) {
            Some(Mark::Active) => return false,
            Some(Mark::Done) => return true,
            None => {}
        }
        marks.insert(n, Mark::Active);
        if let Some(c) = cenv.get(n) {
            for (_, t) in &c.fields {
                if let Some(d) = inline_deps(t) {
                    if !visit(cenv, d, marks) {
                        return false;
                    }
                }
            }
        }
        marks.insert(n, Mark::Done);
        true
    }
    for c in cenv.iter() {
        let mut marks = BTreeMap::new();
        if !visit(cenv, &c.name, &mut marks) {
            out.push(Diagnostic::new(
                codes::INFINITE_SIZE,
                format!("`{}` is recursive without a Box and has infinite size", c.name),
                c.span,
            ));
        }
    }
}

struct FnCx<'a> {
    module: &'a Module,
    sigs: &'a BTreeMap<&'a str, &'a Function>,
    ctx: VarTypes,
    ret: &'a Type,
    out: &'a mut Vec<Diagnostic>,
}

fn check_function(m: &Module, sigs: &BTreeMap<&str, &Function>, f: &Function, out: &mut Vec<Diagnostic>) {
    for d in &f.params {
        check_type(&m.composites, &d.ty, d.span, out);
        if !d.ty.is_scalar() {
            out.push(Diagnostic::new(
                codes::AGGREGATE_ABI,
                format!("parameter `{}` has aggregate type {}; pass it in a Box", d.name, d.ty),
                d.span,
            ));
        }
    }
    check_type(&m.composites, &f.ret, f.span, out);
    if !f.ret.is_scalar() {
        out.push(Diagnostic::new(
            codes::AGGREGATE_ABI,
            format!("`{}` returns aggregate type {}; return a Box", f.name, f.ret),
            f.span,
        ));
    }
    let Some(body) = &f.body else { return };
    let mut names = BTreeSet::new();
    for d in f.all_vars() {
        if !names.insert(d.name.as_str()) {
            out.push(Diagnostic::new(codes::DUPLICATE_VAR, format!("variable `{}` declared twice", d.name), d.span));
        }
        check_type(&m.composites, &d.ty, d.span, out);
    }
    for (flag, _) in &body.drop_flags {
        if !body.locals.iter().any(|d| &d.name == flag && d.ty == Type::I32) {
            out.push(Diagnostic::new(codes::ILL_TYPED, format!("drop flag `{flag}` is not an i32 local"), f.span));
        }
    }
    let mut cx = FnCx { module: m, sigs, ctx: f.var_types(), ret: &f.ret, out };
    cx.stmt(&body.body, 0);
}

impl FnCx<'_> {
    fn err(&mut self, code: &str, msg: impl Into<String>, span: Span) {
        self.out.push(Diagnostic::new(code, msg, span));
    }

    fn type_err(&mut self, e: TypeError, span: Span) {
        let code = if e == TypeError::NestedMove { codes::NESTED_MOVE } else { codes::ILL_TYPED };
        self.err(code, e.to_string(), span);
    }

    fn place(&mut self, p: &super::Place, span: Span) -> Option<Type> {
        match type_of_place(&self.module.composites, &self.ctx, p) {
            Ok(t) => Some(t),
            Err(e) => {
                self.type_err(e, span);
                None
            }
        }
    }

    fn expr(&mut self, e: &super::Expr) -> Option<Type> {
        match type_of_expr(&self.module.composites, &self.ctx, e) {
            Ok(t) => Some(t),
            Err(err) => {
                self.type_err(err, e.span);
                None
            }
        }
    }

    fn expect(&mut self, want: &Type, got: Option<Type>, what: &str, span: Span) {
        if let Some(got) = got {
            if &got != want {
                self.err(codes::TYPE_MISMATCH, format!("{what}: expected {want}, found {got}"), span);
            }
        }
    }

    fn scalar_arg(&mut self, e: &super::Expr, t: &Option<Type>) {
        if let Some(t) = t {
            if !t.is_scalar() && !matches!(e.kind, ExprKind::Move(_) | ExprKind::Place(_)) {
                self.err(codes::TYPE_MISMATCH, format!("aggregate {t} in operator position"), e.span);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, loops: usize) {
        let span = s.span;
        let dialect = self.module.dialect;
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Assign(p, e) => {
                let pt = self.place(p, span);
                let et = self.expr(e);
                self.scalar_arg(e, &et);
                if let Some(pt) = pt {
                    self.expect(&pt, et, "assignment", span);
                }
            }
            StmtKind::AssignVariant(p, v, e) => {
                let pt = self.place(p, span);
                let et = self.expr(e);
                if let Some(pt) = pt {
                    let payload = match &pt {
                        Type::Enum(n) => self.module.composites.get(n).and_then(|c| c.field(v)).map(|(_, t)| t.clone()),
                        _ => None,
                    };
                    match payload {
                        Some(t) => self.expect(&t, et, "variant payload", span),
                        None => self.err(codes::ILL_TYPED, format!("{pt} has no variant `{v}`"), span),
                    }
                }
            }
            StmtKind::AssignBox(p, e) => {
                let pt = self.place(p, span);
                let et = self.expr(e);
                match pt {
                    Some(Type::Box(inner)) => self.expect(&inner, et, "Box contents", span),
                    Some(t) => self.err(codes::TYPE_MISMATCH, format!("Box assigned to `{p}` of type {t}"), span),
                    None => {}
                }
            }
            StmtKind::Call(dest, callee, args) => {
                let arg_tys: Vec<Option<Type>> = args.iter().map(|a| self.expr(a)).collect();
                let Some(f) = self.sigs.get(callee.as_str()).copied() else {
                    self.err(codes::UNKNOWN_FN, format!("unknown function `{callee}`"), span);
                    return;
                };
                if f.params.len() != args.len() {
                    self.err(
                        codes::ARITY,
                        format!("`{callee}` takes {} arguments but {} were given", f.params.len(), args.len()),
                        span,
                    );
                } else {
                    for (d, t) in f.params.iter().zip(arg_tys) {
                        self.expect(&d.ty, t, &format!("argument `{}` of `{callee}`", d.name), span);
                    }
                }
                if let Some(d) = dest {
                    let dt = self.place(d, span);
                    if let Some(dt) = dt {
                        self.expect(&dt, Some(f.ret.clone()), &format!("result of `{callee}`"), span);
                    }
                }
            }
            StmtKind::Let(_, body) => {
                if dialect != Dialect::Surface {
                    self.err(codes::WRONG_DIALECT, "scoped declaration in lowered IR", span);
                }
                self.stmt(body, loops);
            }
            StmtKind::Seq(items) => items.iter().for_each(|i| self.stmt(i, loops)),
            StmtKind::If(c, a, b) => {
                let ct = self.expr(c);
                if c.is_move() {
                    self.err(codes::NESTED_MOVE, "move in branch condition", c.span);
                }
                self.expect(&Type::BOOL, ct, "condition", c.span);
                self.stmt(a, loops);
                self.stmt(b, loops);
            }
            StmtKind::Loop(body) => self.stmt(body, loops + 1),
            StmtKind::Break | StmtKind::Continue => {
                if loops == 0 {
                    self.err(codes::STRAY_JUMP, "break or continue outside of a loop", span);
                }
            }
            StmtKind::Return(p) => match p {
                Some(p) => {
                    let t = self.place(p, span);
                    let ret = self.ret.clone();
                    self.expect(&ret, t, "return value", span);
                }
                None => {
                    if !self.ret.is_unit() {
                        self.err(codes::TYPE_MISMATCH, format!("missing return value of type {}", self.ret), span);
                    }
                }
            },
            StmtKind::Drop(p) => {
                if dialect != Dialect::Ir {
                    self.err(codes::WRONG_DIALECT, "Drop outside lowered IR", span);
                }
                self.place(p, span);
            }
            StmtKind::StaticDrop(p) | StmtKind::FlaggedDrop(p, _) => {
                if dialect != Dialect::Elaborated {
                    self.err(codes::WRONG_DIALECT, "elaborated drop outside elaborated IR", span);
                }
                self.place(p, span);
                if let StmtKind::FlaggedDrop(_, flag) = &s.kind {
                    if self.ctx.get(flag) != Some(&Type::I32) {
                        self.err(codes::ILL_TYPED, format!("drop flag `{flag}` is not an i32 local"), span);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{BinOp, Decl, Expr, FunctionBody, Place};

    fn fun(name: &str, body: Stmt, locals: Vec<Decl>) -> Function {
        Function {
            name: name.into(),
            params: vec![],
            ret: Type::UNIT,
            body: Some(FunctionBody { locals, body, drop_flags: vec![] }),
            span: Span::default(),
        }
    }

    #[test]
    fn empty_module_is_clean() {
        assert!(wf_module(&Module::default()).is_empty());
    }

    #[test]
    fn nested_move_reported() {
        let e = Expr::binary(BinOp::Add, Expr::mv(Place::var("x")), Expr::int(1));
        let m = Module {
            functions: vec![fun("f", Stmt::assign(Place::var("x"), e), vec![Decl::new("x", Type::I32)])],
            dialect: Dialect::Ir,
            ..Default::default()
        };
        let d = wf_module(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, codes::NESTED_MOVE);
        assert_eq!(d[0].message, "move inside pure expression");
    }

    #[test]
    fn break_outside_loop() {
        let m = Module { functions: vec![fun("f", Stmt::new(StmtKind::Break), vec![])], ..Default::default() };
        assert_eq!(wf_module(&m)[0].code, codes::STRAY_JUMP);
    }

    #[test]
    fn unboxed_recursion_rejected() {
        let mut m = Module::default();
        m.composites.insert(super::super::Composite {
            name: "S".into(),
            kind: CompositeKind::Struct,
            fields: vec![("s".into(), Type::Struct("S".into()))],
            span: Span::default(),
        });
        assert!(wf_module(&m).iter().any(|d| d.code == codes::INFINITE_SIZE));
    }
}
