//! Owlang abstract syntax shared by every pass.
//!
//! One `Module` type covers three dialects: surface programs (with `Let`
//! scopes and implicit drops), lowered IR (explicit `Drop`), and elaborated IR
//! (`StaticDrop` / `FlaggedDrop` only).

pub mod print;
pub mod typing;
pub mod wf;

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

pub type Ident = String;

/// Source location. Equality and hashing ignore it so that ASTs compare
/// structurally regardless of where they were parsed from.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for Span {}
impl Hash for Span {
    fn hash<H: Hasher>(&self, _: &mut H) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseType {
    Unit,
    Bool,
    I32,
    F32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Base(BaseType),
    Box(Box<Type>),
    Struct(Ident),
    Enum(Ident),
    Fn(Vec<Type>, Box<Type>),
}

impl Type {
    pub const UNIT: Type = Type::Base(BaseType::Unit);
    pub const BOOL: Type = Type::Base(BaseType::Bool);
    pub const I32: Type = Type::Base(BaseType::I32);
    pub const F32: Type = Type::Base(BaseType::F32);

    pub fn boxed(inner: Type) -> Type {
        Type::Box(Box::new(inner))
    }

    pub fn is_copy(&self) -> bool {
        matches!(self, Type::Base(_))
    }

    /// Scalars fit in a single `Value`; aggregates live only in memory.
    pub fn is_scalar(&self) -> bool {
        matches!(self, Type::Base(_) | Type::Box(_) | Type::Fn(..))
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Type::Base(BaseType::Unit))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum CompositeKind {
    #[default]
    Struct,
    Enum,
}

/// A struct (fields) or an enum (variants with one payload type each;
/// payload-less variants carry `unit`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Composite {
    pub name: Ident,
    pub kind: CompositeKind,
    pub fields: Vec<(Ident, Type)>,
    pub span: Span,
}

impl Composite {
    pub fn field(&self, label: &str) -> Option<(usize, &Type)> {
        self.fields.iter().enumerate().find(|(_, (l, _))| l == label).map(|(i, (_, t))| (i, t))
    }
}

/// Composite declarations in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompositeEnv {
    order: Vec<Ident>,
    map: BTreeMap<Ident, Composite>,
}

impl CompositeEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and keeps the first) on a duplicate name.
    pub fn insert(&mut self, c: Composite) -> bool {
        if self.map.contains_key(&c.name) {
            return false;
        }
        self.order.push(c.name.clone());
        self.map.insert(c.name.clone(), c);
        true
    }

    pub fn get(&self, name: &str) -> Option<&Composite> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Composite> {
        self.order.iter().map(move |n| &self.map[n])
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Type named by a composite identifier.
    pub fn type_named(&self, name: &str) -> Option<Type> {
        self.get(name).map(|c| match c.kind {
            CompositeKind::Struct => Type::Struct(name.to_string()),
            CompositeKind::Enum => Type::Enum(name.to_string()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Var(Ident),
    Deref(Box<Place>),
    Field(Box<Place>, Ident),
    Downcast(Box<Place>, Ident),
}

impl Place {
    pub fn var(name: &str) -> Place {
        Place::Var(name.to_string())
    }
    pub fn deref(self) -> Place {
        Place::Deref(Box::new(self))
    }
    pub fn field(self, label: &str) -> Place {
        Place::Field(Box::new(self), label.to_string())
    }
    pub fn downcast(self, variant: &str) -> Place {
        Place::Downcast(Box::new(self), variant.to_string())
    }

    pub fn root(&self) -> &str {
        match self {
            Place::Var(x) => x,
            Place::Deref(p) | Place::Field(p, _) | Place::Downcast(p, _) => p.root(),
        }
    }

    pub fn base(&self) -> Option<&Place> {
        match self {
            Place::Var(_) => None,
            Place::Deref(p) | Place::Field(p, _) | Place::Downcast(p, _) => Some(p),
        }
    }

    /// True if `self` is `other` or one of its ancestors.
    pub fn is_prefix_of(&self, other: &Place) -> bool {
        let mut cur = Some(other);
        while let Some(p) = cur {
            if p == self {
                return true;
            }
            cur = p.base();
        }
        false
    }

    pub fn is_strict_prefix_of(&self, other: &Place) -> bool {
        self != other && self.is_prefix_of(other)
    }

    pub fn overlaps(&self, other: &Place) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// Bases of every `Deref` along the path, outermost first.
    pub fn deref_bases(&self) -> Vec<&Place> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Place::Var(_) => break,
                Place::Deref(b) => {
                    out.push(&**b);
                    cur = b;
                }
                Place::Field(b, _) | Place::Downcast(b, _) => cur = b,
            }
        }
        out.reverse();
        out
    }

    pub fn has_deref(&self) -> bool {
        match self {
            Place::Var(_) => false,
            Place::Deref(_) => true,
            Place::Field(p, _) | Place::Downcast(p, _) => p.has_deref(),
        }
    }

    pub fn has_downcast(&self) -> bool {
        match self {
            Place::Var(_) => false,
            Place::Downcast(..) => true,
            Place::Field(p, _) | Place::Deref(p) => p.has_downcast(),
        }
    }

    /// Removes trailing downcasts: `(p as V)` becomes `p`.
    pub fn strip_downcasts(&self) -> &Place {
        match self {
            Place::Downcast(p, _) => p.strip_downcasts(),
            _ => self,
        }
    }

    pub fn rename_root(&self, from: &str, to: &str) -> Place {
        match self {
            Place::Var(x) if x == from => Place::Var(to.to_string()),
            Place::Var(_) => self.clone(),
            Place::Deref(p) => Place::Deref(Box::new(p.rename_root(from, to))),
            Place::Field(p, f) => Place::Field(Box::new(p.rename_root(from, to)), f.clone()),
            Place::Downcast(p, v) => Place::Downcast(Box::new(p.rename_root(from, to)), v.clone()),
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Var(x) => write!(f, "{x}"),
            Place::Deref(p) => write!(f, "*{p}"),
            Place::Field(p, l) => match **p {
                Place::Deref(_) => write!(f, "({p}).{l}"),
                _ => write!(f, "{p}.{l}"),
            },
            Place::Downcast(p, v) => write!(f, "({p} as {v})"),
        }
    }
}

/// `f32` compared and hashed by bit pattern so constants are `Eq`.
#[derive(Clone, Copy, Debug)]
pub struct F32(pub f32);

impl PartialEq for F32 {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for F32 {}
impl Hash for F32 {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.0.to_bits().hash(h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Const {
    Unit,
    Bool(bool),
    Int(i32),
    Float(F32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength, higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Const(Const),
    /// Copying read of a place.
    Place(Place),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    CheckTag(Place, Ident),
    Move(Place),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, span: Span::default() }
    }
    pub fn at(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }
    pub fn int(n: i32) -> Expr {
        Expr::new(ExprKind::Const(Const::Int(n)))
    }
    pub fn bool(b: bool) -> Expr {
        Expr::new(ExprKind::Const(Const::Bool(b)))
    }
    pub fn unit() -> Expr {
        Expr::new(ExprKind::Const(Const::Unit))
    }
    pub fn read(p: Place) -> Expr {
        Expr::new(ExprKind::Place(p))
    }
    pub fn mv(p: Place) -> Expr {
        Expr::new(ExprKind::Move(p))
    }
    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::new(ExprKind::Binary(op, Box::new(a), Box::new(b)))
    }

    /// Every place accessed by the expression, in evaluation order.
    pub fn places(&self) -> Vec<&Place> {
        let mut out = Vec::new();
        self.collect_places(&mut out);
        out
    }

    fn collect_places<'a>(&'a self, out: &mut Vec<&'a Place>) {
        match &self.kind {
            ExprKind::Const(_) => {}
            ExprKind::Place(p) | ExprKind::Move(p) | ExprKind::CheckTag(p, _) => out.push(p),
            ExprKind::Unary(_, e) => e.collect_places(out),
            ExprKind::Binary(_, a, b) => {
                a.collect_places(out);
                b.collect_places(out);
            }
        }
    }

    pub fn is_move(&self) -> bool {
        matches!(self.kind, ExprKind::Move(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: Ident,
    pub ty: Type,
    pub span: Span,
}

impl Decl {
    pub fn new(name: &str, ty: Type) -> Decl {
        Decl { name: name.to_string(), ty, span: Span::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Skip,
    Assign(Place, Expr),
    AssignVariant(Place, Ident, Expr),
    AssignBox(Place, Expr),
    /// Calls name their callee directly; `None` discards the result.
    Call(Option<Place>, Ident, Vec<Expr>),
    Let(Vec<Decl>, Box<Stmt>),
    Seq(Vec<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    Loop(Box<Stmt>),
    Break,
    Continue,
    Return(Option<Place>),
    /// IR only: drops `p` if the dynamic ownership state says it is owned.
    Drop(Place),
    /// Elaborated IR only: unconditional drop.
    StaticDrop(Place),
    /// Elaborated IR only: drop iff the flag local is nonzero.
    FlaggedDrop(Place, Ident),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt { kind, span: Span::default() }
    }
    pub fn at(kind: StmtKind, span: Span) -> Stmt {
        Stmt { kind, span }
    }
    pub fn skip() -> Stmt {
        Stmt::new(StmtKind::Skip)
    }
    pub fn seq(items: Vec<Stmt>) -> Stmt {
        Stmt::new(StmtKind::Seq(items))
    }
    pub fn assign(p: Place, e: Expr) -> Stmt {
        Stmt::new(StmtKind::Assign(p, e))
    }

    /// True if control never falls through this statement.
    pub fn diverges(&self) -> bool {
        match &self.kind {
            StmtKind::Break | StmtKind::Continue | StmtKind::Return(_) => true,
            StmtKind::Seq(items) => items.iter().any(|s| s.diverges()),
            StmtKind::Let(_, body) => body.diverges(),
            StmtKind::If(_, a, b) => a.diverges() && b.diverges(),
            // A loop only falls through via break.
            StmtKind::Loop(body) => !body.contains_break(),
            _ => false,
        }
    }

    /// True if the statement contains a `break` targeting an enclosing loop.
    pub fn contains_break(&self) -> bool {
        match &self.kind {
            StmtKind::Break => true,
            StmtKind::Seq(items) => items.iter().any(|s| s.contains_break()),
            StmtKind::Let(_, body) => body.contains_break(),
            StmtKind::If(_, a, b) => a.contains_break() || b.contains_break(),
            _ => false,
        }
    }

    /// Visits statements in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::Let(_, b) | StmtKind::Loop(b) => b.walk(f),
            StmtKind::Seq(items) => items.iter().for_each(|s| s.walk(f)),
            StmtKind::If(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FunctionBody {
    /// Function-scope locals (IR); surface programs declare through `Let`.
    pub locals: Vec<Decl>,
    pub body: Stmt,
    /// Drop flags introduced by elaboration, with the place each guards.
    pub drop_flags: Vec<(Ident, Place)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Function {
    pub name: Ident,
    pub params: Vec<Decl>,
    pub ret: Type,
    /// `None` for external functions.
    pub body: Option<FunctionBody>,
    pub span: Span,
}

impl Function {
    pub fn is_external(&self) -> bool {
        self.body.is_none()
    }

    pub fn signature(&self) -> Signature {
        Signature { params: self.params.iter().map(|d| d.ty.clone()).collect(), ret: self.ret.clone() }
    }

    /// Params, function-scope locals, then every `Let` declaration in
    /// pre-order. This is also the order stack blocks are allocated in.
    pub fn all_vars(&self) -> Vec<&Decl> {
        let mut out: Vec<&Decl> = self.params.iter().collect();
        if let Some(b) = &self.body {
            out.extend(b.locals.iter());
            b.body.walk(&mut |s| {
                if let StmtKind::Let(ds, _) = &s.kind {
                    out.extend(ds.iter());
                }
            });
        }
        out
    }

    pub fn var_types(&self) -> BTreeMap<Ident, Type> {
        self.all_vars().into_iter().map(|d| (d.name.clone(), d.ty.clone())).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature {
    pub params: Vec<Type>,
    pub ret: Type,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Dialect {
    #[default]
    Surface,
    Ir,
    Elaborated,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Module {
    pub name: Ident,
    pub composites: CompositeEnv,
    pub functions: Vec<Function>,
    pub dialect: Dialect,
}

impl Module {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn internal_functions(&self) -> impl Iterator<Item = &Function> {
        self.functions.iter().filter(|f| !f.is_external())
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Base(BaseType::Unit) => write!(f, "unit"),
            Type::Base(BaseType::Bool) => write!(f, "bool"),
            Type::Base(BaseType::I32) => write!(f, "i32"),
            Type::Base(BaseType::F32) => write!(f, "f32"),
            Type::Box(t) => write!(f, "Box<{t}>"),
            Type::Struct(n) | Type::Enum(n) => write!(f, "{n}"),
            Type::Fn(ps, r) => {
                write!(f, "fn(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ") -> {r}")
            }
        }
    }
}
