//! C99 emission from elaborated IR.
//!
//! Structs become C structs with the same field order, enums become a tag
//! plus a union, so C layout agrees with [`crate::mem::layout`]. Unit and
//! bool are `uint8_t`. Every composite owning a box gets a drop function.
//! Identifiers are prefixed (`l_` locals, `f_` fields, `v_` variants) so
//! Owlang names never collide with C keywords.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ast::typing::{owns_resources, type_of_expr, type_of_place, VarTypes};
use crate::ast::{
    BaseType, BinOp, CompositeEnv, CompositeKind, Const, Dialect, Expr, ExprKind, Function, Module, Place, Stmt,
    StmtKind, Type, UnOp,
};
use crate::mem::layout::variant_tag;
use crate::ownership::{AtomKind, Universe};

/// Runtime header the emitted code includes.
pub const RUNTIME_HEADER: &str = include_str!("../runtime/owl_runtime.h");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CgenError {
    #[error("C emission needs elaborated IR")]
    NotElaborated,
    #[error("`{0}`: dynamic drop left in elaborated code")]
    DynamicDrop(String),
    #[error("`{0}`: {1}")]
    Type(String, String),
}

pub fn c_ident(prefix: &str, name: &str) -> String {
    format!("{prefix}{name}")
}

pub fn fn_symbol(m: &Module, f: &Function) -> String {
    if f.is_external() {
        f.name.clone()
    } else {
        format!("owl_{}_{}", m.name, f.name)
    }
}

pub fn c_type(t: &Type) -> String {
    match t {
        Type::Base(BaseType::Unit | BaseType::Bool) => "uint8_t".into(),
        Type::Base(BaseType::I32) => "int32_t".into(),
        Type::Base(BaseType::F32) => "float".into(),
        Type::Box(inner) => format!("{}*", c_type(inner)),
        Type::Struct(n) | Type::Enum(n) => format!("owl_{n}"),
        Type::Fn(..) => "void*".into(),
    }
}

fn drop_fn(name: &str) -> String {
    format!("owl_drop_{name}")
}

pub fn emit(m: &Module) -> Result<String, CgenError> {
    if m.dialect != Dialect::Elaborated {
        return Err(CgenError::NotElaborated);
    }
    let cenv = &m.composites;
    let mut out = String::new();
    out.push_str("/* Generated by owlc. */\n");
    out.push_str("#include <stdint.h>\n");
    out.push_str("#include \"owl_runtime.h\"\n\n");

    for c in cenv.iter() {
        let _ = writeln!(out, "typedef struct owl_{0} owl_{0};", c.name);
    }
    if !cenv.is_empty() {
        out.push('\n');
    }
    for name in by_value_order(cenv) {
        let c = cenv.get(&name).unwrap();
        let _ = writeln!(out, "struct owl_{} {{", c.name);
        match c.kind {
            CompositeKind::Struct => {
                for (l, t) in &c.fields {
                    let _ = writeln!(out, "    {} {};", c_type(t), c_ident("f_", l));
                }
            }
            CompositeKind::Enum => {
                out.push_str("    int32_t tag;\n    union {\n");
                for (v, t) in &c.fields {
                    let _ = writeln!(out, "        {} {};", c_type(t), c_ident("v_", v));
                }
                out.push_str("    } body;\n");
            }
        }
        out.push_str("};\n\n");
    }

    let owning: Vec<_> = cenv.iter().filter(|c| owns_resources(cenv, &cenv.type_named(&c.name).unwrap())).collect();
    for c in &owning {
        let _ = writeln!(out, "void {}(owl_{} *p);", drop_fn(&c.name), c.name);
    }
    let mut body = String::new();
    let mut helpers = Helpers::default();
    for c in &owning {
        let _ = writeln!(body, "void {}(owl_{} *p) {{", drop_fn(&c.name), c.name);
        let mut tmp = 0;
        match c.kind {
            CompositeKind::Struct => {
                for (l, t) in &c.fields {
                    body.push_str(&drop_value(cenv, &format!("p->{}", c_ident("f_", l)), t, 1, &mut tmp));
                }
            }
            CompositeKind::Enum => {
                body.push_str("    switch (p->tag) {\n");
                for (i, (v, t)) in c.fields.iter().enumerate() {
                    if owns_resources(cenv, t) {
                        let _ = writeln!(body, "    case {i}:");
                        body.push_str(&drop_value(cenv, &format!("p->body.{}", c_ident("v_", v)), t, 2, &mut tmp));
                        body.push_str("        break;\n");
                    }
                }
                body.push_str("    default:\n        break;\n    }\n");
            }
        }
        body.push_str("}\n\n");
    }

    let mut protos = String::new();
    for f in &m.functions {
        let _ = writeln!(protos, "{}{};", if f.is_external() { "extern " } else { "" }, prototype(m, f));
    }
    for f in m.functions.iter().filter(|f| !f.is_external()) {
        FnEmitter::new(m, f, &mut helpers).emit(&mut body)?;
    }

    if !owning.is_empty() {
        out.push('\n');
    }
    out.push_str(&protos);
    out.push('\n');
    out.push_str(&helpers.render());
    out.push_str(&body);
    Ok(out)
}

fn prototype(m: &Module, f: &Function) -> String {
    let params = if f.params.is_empty() {
        "void".to_string()
    } else {
        f.params.iter().map(|d| format!("{} {}", c_type(&d.ty), c_ident("l_", &d.name))).collect::<Vec<_>>().join(", ")
    };
    format!("{} {}({params})", c_type(&f.ret), fn_symbol(m, f))
}

/// Composites ordered so that every by-value field type comes first.
fn by_value_order(cenv: &CompositeEnv) -> Vec<String> {
    fn visit(cenv: &CompositeEnv, n: &str, done: &mut BTreeSet<String>, out: &mut Vec<String>) {
        if !done.insert(n.to_string()) {
            return;
        }
        for (_, t) in &cenv.get(n).unwrap().fields {
            if let Type::Struct(d) | Type::Enum(d) = t {
                visit(cenv, d, done, out);
            }
        }
        out.push(n.to_string());
    }
    let (mut done, mut out) = (BTreeSet::new(), Vec::new());
    for c in cenv.iter() {
        visit(cenv, &c.name, &mut done, &mut out);
    }
    out
}

/// Statements dropping everything the value at lvalue `lv` owns, and for a
/// box the box itself.
fn drop_value(cenv: &CompositeEnv, lv: &str, t: &Type, indent: usize, tmp: &mut usize) -> String {
    let pad = "    ".repeat(indent);
    match t {
        Type::Box(inner) => {
            *tmp += 1;
            let q = format!("__q{tmp}");
            let mut s = format!("{pad}{{\n{pad}    {} {q} = {lv};\n", c_type(t));
            s.push_str(&drop_value(cenv, &format!("(*{q})"), inner, indent + 1, tmp));
            let _ = writeln!(s, "{pad}    owl_free({q});\n{pad}}}");
            s
        }
        Type::Struct(n) | Type::Enum(n) if owns_resources(cenv, t) => format!("{pad}{}(&{lv});\n", drop_fn(n)),
        _ => String::new(),
    }
}

#[derive(Default)]
struct Helpers {
    div: bool,
    rem: bool,
}

impl Helpers {
    fn render(&self) -> String {
        let mut s = String::new();
        if self.div {
            s.push_str(
                "static int32_t owl_div(int32_t a, int32_t b) {\n    if (b == 0) owl_abort();\n    if (a == INT32_MIN && b == -1) return a;\n    return a / b;\n}\n\n",
            );
        }
        if self.rem {
            s.push_str(
                "static int32_t owl_rem(int32_t a, int32_t b) {\n    if (b == 0) owl_abort();\n    if (b == -1) return 0;\n    return a % b;\n}\n\n",
            );
        }
        s
    }
}

struct FnEmitter<'a> {
    m: &'a Module,
    f: &'a Function,
    ctx: VarTypes,
    universe: Universe,
    helpers: &'a mut Helpers,
    symbols: HashMap<&'a str, String>,
    tmp: usize,
}

impl<'a> FnEmitter<'a> {
    fn new(m: &'a Module, f: &'a Function, helpers: &'a mut Helpers) -> Self {
        let ctx = f.var_types();
        let vars: Vec<_> = f.all_vars().into_iter().map(|d| (d.name.clone(), d.ty.clone())).collect();
        let universe = Universe::new(&m.composites, &vars);
        let symbols = m.functions.iter().map(|g| (g.name.as_str(), fn_symbol(m, g))).collect();
        FnEmitter { m, f, ctx, universe, helpers, symbols, tmp: 0 }
    }

    fn cenv(&self) -> &CompositeEnv {
        &self.m.composites
    }

    fn ty_err(&self, e: impl ToString) -> CgenError {
        CgenError::Type(self.f.name.clone(), e.to_string())
    }

    fn place_ty(&self, p: &Place) -> Result<Type, CgenError> {
        type_of_place(self.cenv(), &self.ctx, p).map_err(|e| self.ty_err(e))
    }

    fn emit(mut self, out: &mut String) -> Result<(), CgenError> {
        let _ = writeln!(out, "{} {{", prototype(self.m, self.f));
        let params: BTreeSet<&str> = self.f.params.iter().map(|d| d.name.as_str()).collect();
        let vars = self.f.all_vars();
        for d in vars.iter().filter(|d| !params.contains(d.name.as_str())) {
            let name = c_ident("l_", &d.name);
            if d.ty.is_scalar() {
                let zero = if matches!(d.ty, Type::Box(_) | Type::Fn(..)) { "NULL" } else { "0" };
                let _ = writeln!(out, "    {} {name} = {zero};", c_type(&d.ty));
            } else {
                let _ = writeln!(out, "    {} {name};", c_type(&d.ty));
                let _ = writeln!(out, "    owl_zero(&{name}, sizeof {name});");
            }
        }
        for d in &vars {
            let _ = writeln!(out, "    (void){};", c_ident("l_", &d.name));
        }
        let body = &self.f.body.as_ref().unwrap().body;
        self.stmt(body, 1, out)?;
        if !body.diverges() {
            if self.f.ret.is_unit() {
                out.push_str("    return 0;\n");
            } else {
                out.push_str("    owl_abort();\n");
            }
        }
        out.push_str("}\n\n");
        Ok(())
    }

    fn lvalue(&self, p: &Place) -> Result<String, CgenError> {
        Ok(match p {
            Place::Var(x) => c_ident("l_", x),
            Place::Deref(b) => format!("(*{})", self.lvalue(b)?),
            Place::Field(b, l) => format!("{}.{}", self.lvalue(b)?, c_ident("f_", l)),
            Place::Downcast(b, v) => format!("{}.body.{}", self.lvalue(b)?, c_ident("v_", v)),
        })
    }

    fn expr(&mut self, e: &Expr) -> Result<String, CgenError> {
        Ok(match &e.kind {
            ExprKind::Const(c) => const_c(c),
            ExprKind::Place(p) | ExprKind::Move(p) => self.lvalue(p)?,
            ExprKind::CheckTag(p, v) => {
                let Type::Enum(n) = self.place_ty(p)? else { return Err(self.ty_err("tag test on a non-enum")) };
                let tag = variant_tag(self.cenv(), &n, v).ok_or_else(|| self.ty_err(format!("no variant {v}")))?;
                format!("((uint8_t)({}.tag == {tag}))", self.lvalue(p)?)
            }
            ExprKind::Unary(op, a) => {
                let t = type_of_expr(self.cenv(), &self.ctx, a).map_err(|e| self.ty_err(e))?;
                let a = self.expr(a)?;
                match (op, t) {
                    (UnOp::Neg, Type::Base(BaseType::I32)) => format!("((int32_t)(0u - (uint32_t){a}))"),
                    (UnOp::Neg, _) => format!("(-{a})"),
                    (UnOp::Not, _) => format!("((uint8_t)!{a})"),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let t = type_of_expr(self.cenv(), &self.ctx, a).map_err(|e| self.ty_err(e))?;
                let (a, b) = (self.expr(a)?, self.expr(b)?);
                let int = t == Type::I32;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul if int => {
                        format!("((int32_t)((uint32_t){a} {} (uint32_t){b}))", op.symbol())
                    }
                    BinOp::Div if int => {
                        self.helpers.div = true;
                        format!("owl_div({a}, {b})")
                    }
                    BinOp::Rem if int => {
                        self.helpers.rem = true;
                        format!("owl_rem({a}, {b})")
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                        format!("({a} {} {b})", op.symbol())
                    }
                    _ => format!("((uint8_t)({a} {} {b}))", op.symbol()),
                }
            }
        })
    }

    fn stmt(&mut self, s: &Stmt, indent: usize, out: &mut String) -> Result<(), CgenError> {
        let pad = "    ".repeat(indent);
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Assign(p, e) => {
                let _ = writeln!(out, "{pad}{} = {};", self.lvalue(p)?, self.expr(e)?);
            }
            StmtKind::AssignVariant(p, v, e) => {
                let Type::Enum(n) = self.place_ty(p)? else { return Err(self.ty_err("variant of a non-enum")) };
                let tag = variant_tag(self.cenv(), &n, v).ok_or_else(|| self.ty_err(format!("no variant {v}")))?;
                let pt = self.place_ty(&p.clone().downcast(v))?;
                self.tmp += 1;
                let t = format!("__v{}", self.tmp);
                let lv = self.lvalue(p)?;
                let _ = writeln!(out, "{pad}{{\n{pad}    {} {t} = {};", c_type(&pt), self.expr(e)?);
                let _ = writeln!(
                    out,
                    "{pad}    {lv}.tag = {tag};\n{pad}    {lv}.body.{} = {t};\n{pad}}}",
                    c_ident("v_", v)
                );
            }
            StmtKind::AssignBox(p, e) => {
                let Type::Box(inner) = self.place_ty(p)? else { return Err(self.ty_err("Box into a non-box")) };
                self.tmp += 1;
                let t = format!("__b{}", self.tmp);
                let ct = c_type(&inner);
                let _ = writeln!(out, "{pad}{{\n{pad}    {ct} *{t} = ({ct} *)owl_alloc(sizeof({ct}));");
                let _ =
                    writeln!(out, "{pad}    *{t} = {};\n{pad}    {} = {t};\n{pad}}}", self.expr(e)?, self.lvalue(p)?);
            }
            StmtKind::Call(dest, callee, args) => {
                let sym = self.symbols.get(callee.as_str()).cloned().unwrap_or_else(|| callee.clone());
                let args = args.iter().map(|a| self.expr(a)).collect::<Result<Vec<_>, _>>()?.join(", ");
                match dest {
                    Some(p) => {
                        let _ = writeln!(out, "{pad}{} = {sym}({args});", self.lvalue(p)?);
                    }
                    None => {
                        let _ = writeln!(out, "{pad}(void){sym}({args});");
                    }
                }
            }
            StmtKind::Let(_, body) => self.stmt(body, indent, out)?,
            StmtKind::Seq(items) => {
                for it in items {
                    self.stmt(it, indent, out)?;
                }
            }
            StmtKind::If(c, a, b) => {
                let _ = writeln!(out, "{pad}if ({}) {{", self.expr(c)?);
                self.stmt(a, indent + 1, out)?;
                let _ = writeln!(out, "{pad}}} else {{");
                self.stmt(b, indent + 1, out)?;
                let _ = writeln!(out, "{pad}}}");
            }
            StmtKind::Loop(body) => {
                let _ = writeln!(out, "{pad}for (;;) {{");
                self.stmt(body, indent + 1, out)?;
                let _ = writeln!(out, "{pad}}}");
            }
            StmtKind::Break => {
                let _ = writeln!(out, "{pad}break;");
            }
            StmtKind::Continue => {
                let _ = writeln!(out, "{pad}continue;");
            }
            StmtKind::Return(Some(p)) => {
                let _ = writeln!(out, "{pad}return {};", self.lvalue(p)?);
            }
            StmtKind::Return(None) => {
                let _ = writeln!(out, "{pad}return 0;");
            }
            StmtKind::Drop(_) => return Err(CgenError::DynamicDrop(self.f.name.clone())),
            StmtKind::StaticDrop(p) => out.push_str(&self.drop_piece(p, indent)?),
            StmtKind::FlaggedDrop(p, flag) => {
                let _ = writeln!(out, "{pad}if ({}) {{", c_ident("l_", flag));
                out.push_str(&self.drop_piece(p, indent + 1)?);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Ok(())
    }

    /// A shell atom frees only its block; anything else is dropped deeply.
    fn drop_piece(&mut self, p: &Place, indent: usize) -> Result<String, CgenError> {
        let u = &self.universe;
        let shell = u.var_atoms(p.root()).iter().any(|&i| u.atom(i).place == *p && u.atom(i).kind == AtomKind::Shell);
        let lv = self.lvalue(p)?;
        if shell {
            return Ok(format!("{}owl_free({lv});\n", "    ".repeat(indent)));
        }
        let t = self.place_ty(p)?;
        Ok(drop_value(&self.m.composites, &lv, &t, indent, &mut self.tmp))
    }
}

fn const_c(c: &Const) -> String {
    match c {
        Const::Unit => "((uint8_t)0)".into(),
        Const::Bool(b) => format!("((uint8_t){})", *b as u8),
        Const::Int(i32::MIN) => "((int32_t)(-2147483647 - 1))".into(),
        Const::Int(n) => format!("((int32_t){n})"),
        Const::Float(x) => {
            let x = x.0;
            if x.is_nan() {
                "((float)NAN)".into()
            } else if x.is_infinite() {
                format!("((float){}INFINITY)", if x < 0.0 { "-" } else { "" })
            } else {
                format!("({:e}f)", x)
            }
        }
    }
}
