//! Pretty printer. Surface output re-parses to the same AST; IR output adds
//! drop forms and optional `L<n>` program-point labels.

use std::fmt::Write;

use super::typing::{type_of_place, VarTypes};
use super::{BaseType, CompositeKind, Const, Expr, ExprKind, Function, Module, Place, Stmt, StmtKind, Type, UnOp};

/// Statements that own a program point (and a CFG node).
pub fn is_labeled(kind: &StmtKind) -> bool {
    !matches!(kind, StmtKind::Seq(_) | StmtKind::Let(..) | StmtKind::Loop(_))
}

pub fn print_module(m: &Module) -> String {
    print_module_with(m, false)
}

pub fn print_module_with(m: &Module, labels: bool) -> String {
    let mut out = String::new();
    for c in m.composites.iter() {
        match c.kind {
            CompositeKind::Struct => {
                let _ = writeln!(out, "struct {} {{", c.name);
                for (l, t) in &c.fields {
                    let _ = writeln!(out, "    {l}: {t},");
                }
            }
            CompositeKind::Enum => {
                let _ = writeln!(out, "enum {} {{", c.name);
                for (l, t) in &c.fields {
                    if t.is_unit() {
                        let _ = writeln!(out, "    {l},");
                    } else {
                        let _ = writeln!(out, "    {l}({t}),");
                    }
                }
            }
        }
        out.push_str("}\n\n");
    }
    for f in &m.functions {
        out.push_str(&print_function(m, f, labels));
        out.push('\n');
    }
    out
}

fn signature(f: &Function) -> String {
    let params: Vec<String> = f.params.iter().map(|d| format!("{}: {}", d.name, d.ty)).collect();
    let mut s = format!("fn {}({})", f.name, params.join(", "));
    if !f.ret.is_unit() {
        let _ = write!(s, " -> {}", f.ret);
    }
    s
}

pub fn print_function(m: &Module, f: &Function, labels: bool) -> String {
    let Some(body) = &f.body else {
        return format!("extern {};\n", signature(f));
    };
    let mut p = Printer { m, ctx: f.var_types(), out: String::new(), labels, next_label: 0 };
    let _ = writeln!(p.out, "{} {{", signature(f));
    for d in &body.locals {
        let _ = writeln!(p.out, "    let {}: {};", d.name, d.ty);
    }
    p.contents(&body.body, 1);
    p.out.push_str("}\n");
    p.out
}

pub fn print_stmt(m: &Module, f: &Function, s: &Stmt) -> String {
    let mut p = Printer { m, ctx: f.var_types(), out: String::new(), labels: false, next_label: 0 };
    p.stmt(s, 0);
    p.out
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0);
    s
}

struct Printer<'a> {
    m: &'a Module,
    ctx: VarTypes,
    out: String,
    labels: bool,
    next_label: u32,
}

impl Printer<'_> {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
    }

    fn line_start(&mut self, s: &Stmt, depth: usize) {
        self.indent(depth);
        if is_labeled(&s.kind) {
            if self.labels {
                let _ = write!(self.out, "L{}: ", self.next_label);
            }
            self.next_label += 1;
        }
    }

    /// Block contents: a trailing `Let` is written inline so that it scopes
    /// over the rest of the block, as the parser reads it.
    fn contents(&mut self, s: &Stmt, depth: usize) {
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Seq(items) => {
                for (i, item) in items.iter().enumerate() {
                    if i + 1 == items.len() && matches!(item.kind, StmtKind::Let(..)) {
                        self.contents(item, depth);
                    } else {
                        self.stmt(item, depth);
                    }
                }
            }
            StmtKind::Let(decls, body) => {
                for d in decls {
                    self.indent(depth);
                    let _ = writeln!(self.out, "let {}: {};", d.name, d.ty);
                }
                self.contents(body, depth);
            }
            _ => self.stmt(s, depth),
        }
    }

    fn block(&mut self, s: &Stmt, depth: usize) {
        self.out.push_str("{\n");
        self.contents(s, depth + 1);
        self.indent(depth);
        self.out.push('}');
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match &s.kind {
            StmtKind::Seq(_) | StmtKind::Let(..) => {
                self.indent(depth);
                self.block(s, depth);
                self.out.push('\n');
                return;
            }
            StmtKind::Loop(body) => {
                self.indent(depth);
                self.out.push_str("loop ");
                self.block(body, depth);
                self.out.push('\n');
                return;
            }
            _ => {}
        }
        self.line_start(s, depth);
        match &s.kind {
            StmtKind::Skip => self.out.push(';'),
            StmtKind::Assign(p, e) => {
                let _ = write!(self.out, "{p} = {};", print_expr(e));
            }
            StmtKind::AssignVariant(p, v, e) => {
                let en = match type_of_place(&self.m.composites, &self.ctx, p) {
                    Ok(Type::Enum(n)) => n,
                    _ => "?".into(),
                };
                if matches!(e.kind, ExprKind::Const(Const::Unit)) {
                    let _ = write!(self.out, "{p} = {en}::{v};");
                } else {
                    let _ = write!(self.out, "{p} = {en}::{v}({});", print_expr(e));
                }
            }
            StmtKind::AssignBox(p, e) => {
                let _ = write!(self.out, "{p} = Box({});", print_expr(e));
            }
            StmtKind::Call(dest, f, args) => {
                let args: Vec<String> = args.iter().map(print_expr).collect();
                match dest {
                    Some(d) => {
                        let _ = write!(self.out, "{d} = {f}({});", args.join(", "));
                    }
                    None => {
                        let _ = write!(self.out, "{f}({});", args.join(", "));
                    }
                }
            }
            StmtKind::If(c, a, b) => {
                let _ = write!(self.out, "if {} ", print_expr(c));
                self.block(a, depth);
                self.else_branch(b, depth);
            }
            StmtKind::Break => self.out.push_str("break;"),
            StmtKind::Continue => self.out.push_str("continue;"),
            StmtKind::Return(Some(p)) => {
                let _ = write!(self.out, "return {p};");
            }
            StmtKind::Return(None) => self.out.push_str("return;"),
            StmtKind::Drop(p) => {
                let _ = write!(self.out, "drop?({p});");
            }
            StmtKind::StaticDrop(p) => {
                let _ = write!(self.out, "drop({p});");
            }
            StmtKind::FlaggedDrop(p, flag) => {
                let _ = write!(self.out, "if {flag} {{ drop({p}); }}");
            }
            StmtKind::Seq(_) | StmtKind::Let(..) | StmtKind::Loop(_) => unreachable!(),
        }
        self.out.push('\n');
    }

    fn else_branch(&mut self, b: &Stmt, depth: usize) {
        match &b.kind {
            StmtKind::Skip => {}
            StmtKind::If(c, x, y) => {
                if self.labels {
                    let _ = write!(self.out, " else L{}: if {} ", self.next_label, print_expr(c));
                } else {
                    let _ = write!(self.out, " else if {} ", print_expr(c));
                }
                self.next_label += 1;
                self.block(x, depth);
                self.else_branch(y, depth);
            }
            _ => {
                self.out.push_str(" else ");
                self.block(b, depth);
            }
        }
    }
}

fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, ..) => op.precedence(),
        ExprKind::Unary(..) => 6,
        _ => 7,
    }
}

fn expr(out: &mut String, e: &Expr, _ctx_prec: u8) {
    match &e.kind {
        ExprKind::Const(c) => out.push_str(&const_text(c)),
        ExprKind::Place(p) => {
            let _ = write!(out, "{p}");
        }
        ExprKind::Move(p) => {
            let _ = write!(out, "move {p}");
        }
        ExprKind::CheckTag(p, v) => {
            let _ = write!(out, "{p} is {v}");
        }
        ExprKind::Unary(op, a) => {
            out.push(if *op == UnOp::Neg { '-' } else { '!' });
            // `-(5)` keeps the negation distinct from the literal `-5`.
            let needs = prec(a) < 6 || matches!(a.kind, ExprKind::Const(_) | ExprKind::CheckTag(..));
            paren(out, a, needs);
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            paren(out, a, prec(a) < p);
            let _ = write!(out, " {} ", op.symbol());
            paren(out, b, prec(b) <= p);
        }
    }
}

fn paren(out: &mut String, e: &Expr, needs: bool) {
    if needs {
        out.push('(');
        expr(out, e, 0);
        out.push(')');
    } else {
        expr(out, e, 0);
    }
}

pub fn const_text(c: &Const) -> String {
    match c {
        Const::Unit => "()".into(),
        Const::Bool(b) => b.to_string(),
        Const::Int(n) => n.to_string(),
        Const::Float(f) => {
            let s = format!("{:?}", f.0);
            if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
                s
            } else {
                format!("{s}.0")
            }
        }
    }
}

/// Type text as accepted by the parser.
pub fn type_text(t: &Type) -> String {
    match t {
        Type::Base(BaseType::Unit) => "unit".into(),
        _ => t.to_string(),
    }
}

/// Convenience for diagnostics and reports.
pub fn places_text(ps: &[Place]) -> String {
    let items: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
    format!("{{{}}}", items.join(", "))
}
