//! Surface parser for `.owl` files.
//!
//! Parsing happens in two phases: a recursive-descent pass builds a raw
//! syntax tree, then [`desugar`] resolves names and types, infers `move`,
//! hoists nested calls and allocations into temporaries, and rewrites `match`
//! into `if`/tag-test chains.

mod desugar;
pub mod lexer;

use crate::ast::{BinOp, CompositeKind, Module, Span, UnOp};
use crate::diag::{codes, Diagnostic};
use lexer::{lex, Tok, Token};

#[derive(Clone, Debug)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile { path: path.into(), text: text.into() }
    }

    /// Module name: the file stem.
    pub fn module_name(&self) -> String {
        std::path::Path::new(&self.path)
            .file_stem()
            .map(|s| s.to_string_lossy().replace(|c: char| !c.is_ascii_alphanumeric(), "_"))
            .unwrap_or_else(|| "main".into())
    }
}

pub fn parse_module(src: &SourceFile) -> Result<Module, Vec<Diagnostic>> {
    let toks = lex(&src.text).map_err(|d| vec![d])?;
    let raw = Parser { toks, pos: 0 }.module().map_err(|d| vec![d])?;
    desugar::desugar(src.module_name(), raw)
}

/// Parses text with module name `main`.
pub fn parse_str(text: &str) -> Result<Module, Vec<Diagnostic>> {
    parse_module(&SourceFile::new("main.owl", text))
}

#[derive(Clone, Debug)]
pub(crate) enum RType {
    Unit,
    Bool,
    I32,
    F32,
    Box(Box<RType>),
    Named(String, Span),
    Fn(Vec<RType>, Box<RType>),
}

#[derive(Clone, Debug)]
pub(crate) struct RComposite {
    pub name: String,
    pub kind: CompositeKind,
    pub fields: Vec<(String, RType)>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub(crate) struct RFn {
    pub name: String,
    pub params: Vec<(String, RType, Span)>,
    pub ret: RType,
    pub body: Option<Vec<RStmt>>,
    pub span: Span,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct RModule {
    pub composites: Vec<RComposite>,
    pub fns: Vec<RFn>,
}

#[derive(Clone, Debug)]
pub(crate) enum RExprKind {
    Int(i64),
    Float(f32),
    Bool(bool),
    Unit,
    Var(String),
    Deref(Box<RExpr>),
    Field(Box<RExpr>, String),
    Downcast(Box<RExpr>, String),
    Unary(UnOp, Box<RExpr>),
    Binary(BinOp, Box<RExpr>, Box<RExpr>),
    Is(Box<RExpr>, String),
    Move(Box<RExpr>),
    Call(String, Vec<RExpr>),
    BoxNew(Box<RExpr>),
    Variant(String, String, Option<Box<RExpr>>),
    StructLit(String, Vec<(String, RExpr)>),
}

#[derive(Clone, Debug)]
pub(crate) struct RExpr {
    pub kind: RExprKind,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub(crate) struct RArm {
    pub enum_name: String,
    pub variant: String,
    pub binder: Option<String>,
    pub body: Vec<RStmt>,
    pub span: Span,
}

#[derive(Clone, Debug)]
pub(crate) enum RStmtKind {
    Skip,
    Let(String, Option<RType>, Option<RExpr>),
    Assign(RExpr, RExpr),
    Expr(RExpr),
    If(RExpr, Vec<RStmt>, Option<Vec<RStmt>>),
    Loop(Vec<RStmt>),
    While(RExpr, Vec<RStmt>),
    Break,
    Continue,
    Return(Option<RExpr>),
    Match(RExpr, Vec<RArm>),
    Block(Vec<RStmt>),
}

#[derive(Clone, Debug)]
pub(crate) struct RStmt {
    pub kind: RStmtKind,
    pub span: Span,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

const KEYWORDS: &[&str] = &[
    "fn", "extern", "struct", "enum", "let", "if", "else", "loop", "while", "break", "continue", "return", "match",
    "move", "true", "false", "is", "as",
];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }
    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }
    fn span(&self) -> Span {
        self.toks[self.pos].span
    }
    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }
    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }
    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }
    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }
    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.bump();
            true
        } else {
            false
        }
    }
    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(codes::PARSE, msg, self.span()))
    }
    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Float(f) => format!("`{f}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
        }
    }
    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }
    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.error(format!("expected `{k}`, found {}", self.describe()))
        }
    }
    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn module(mut self) -> PResult<RModule> {
        let mut m = RModule::default();
        while *self.peek() != Tok::Eof {
            let span = self.span();
            if self.eat_kw("struct") {
                let name = self.ident()?;
                self.expect_punct("{")?;
                let mut fields = Vec::new();
                while !self.is_punct("}") {
                    let l = self.ident()?;
                    self.expect_punct(":")?;
                    fields.push((l, self.ty()?));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("}")?;
                m.composites.push(RComposite { name, kind: CompositeKind::Struct, fields, span });
            } else if self.eat_kw("enum") {
                let name = self.ident()?;
                self.expect_punct("{")?;
                let mut fields = Vec::new();
                while !self.is_punct("}") {
                    let l = self.ident()?;
                    let t = if self.eat_punct("(") {
                        let t = self.ty()?;
                        self.expect_punct(")")?;
                        t
                    } else {
                        RType::Unit
                    };
                    fields.push((l, t));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("}")?;
                m.composites.push(RComposite { name, kind: CompositeKind::Enum, fields, span });
            } else if self.eat_kw("extern") {
                self.expect_kw("fn")?;
                let mut f = self.fn_header(span)?;
                self.expect_punct(";")?;
                f.body = None;
                m.fns.push(f);
            } else if self.eat_kw("fn") {
                let mut f = self.fn_header(span)?;
                f.body = Some(self.block()?);
                m.fns.push(f);
            } else {
                return self.error(format!("expected item, found {}", self.describe()));
            }
        }
        Ok(m)
    }

    fn fn_header(&mut self, span: Span) -> PResult<RFn> {
        let name = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        while !self.is_punct(")") {
            let ps = self.span();
            let n = self.ident()?;
            self.expect_punct(":")?;
            params.push((n, self.ty()?, ps));
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        let ret = if self.eat_punct("->") { self.ty()? } else { RType::Unit };
        Ok(RFn { name, params, ret, body: None, span })
    }

    fn ty(&mut self) -> PResult<RType> {
        let span = self.span();
        if self.eat_punct("(") {
            self.expect_punct(")")?;
            return Ok(RType::Unit);
        }
        if self.eat_kw("fn") {
            self.expect_punct("(")?;
            let mut ps = Vec::new();
            while !self.is_punct(")") {
                ps.push(self.ty()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(")")?;
            let r = if self.eat_punct("->") { self.ty()? } else { RType::Unit };
            return Ok(RType::Fn(ps, Box::new(r)));
        }
        let name = self.ident()?;
        Ok(match name.as_str() {
            "unit" => RType::Unit,
            "bool" => RType::Bool,
            "i32" => RType::I32,
            "f32" => RType::F32,
            "Box" => {
                self.expect_punct("<")?;
                let t = self.ty()?;
                self.expect_punct(">")?;
                RType::Box(Box::new(t))
            }
            _ => RType::Named(name, span),
        })
    }

    fn block(&mut self) -> PResult<Vec<RStmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error("unclosed block");
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<RStmt> {
        let span = self.span();
        let kind = if self.eat_punct(";") {
            RStmtKind::Skip
        } else if self.is_punct("{") {
            RStmtKind::Block(self.block()?)
        } else if self.eat_kw("let") {
            let name = self.ident()?;
            let ty = if self.eat_punct(":") { Some(self.ty()?) } else { None };
            let init = if self.eat_punct("=") { Some(self.expr(true)?) } else { None };
            self.expect_punct(";")?;
            RStmtKind::Let(name, ty, init)
        } else if self.is_kw("if") {
            return self.if_stmt();
        } else if self.eat_kw("loop") {
            RStmtKind::Loop(self.block()?)
        } else if self.eat_kw("while") {
            let c = self.expr(false)?;
            RStmtKind::While(c, self.block()?)
        } else if self.eat_kw("break") {
            self.expect_punct(";")?;
            RStmtKind::Break
        } else if self.eat_kw("continue") {
            self.expect_punct(";")?;
            RStmtKind::Continue
        } else if self.eat_kw("return") {
            let e = if self.is_punct(";") { None } else { Some(self.expr(true)?) };
            self.expect_punct(";")?;
            RStmtKind::Return(e)
        } else if self.eat_kw("match") {
            let scrut = self.expr(false)?;
            self.expect_punct("{")?;
            let mut arms = Vec::new();
            while !self.is_punct("}") {
                let aspan = self.span();
                let enum_name = self.ident()?;
                self.expect_punct("::")?;
                let variant = self.ident()?;
                let binder = if self.eat_punct("(") {
                    let b = self.ident()?;
                    self.expect_punct(")")?;
                    (b != "_").then_some(b)
                } else {
                    None
                };
                self.expect_punct("=>")?;
                let body = if self.is_punct("{") { self.block()? } else { vec![self.stmt()?] };
                self.eat_punct(",");
                arms.push(RArm { enum_name, variant, binder, body, span: aspan });
            }
            self.bump();
            RStmtKind::Match(scrut, arms)
        } else {
            let lhs = self.expr(true)?;
            let k = if self.eat_punct("=") {
                let rhs = self.expr(true)?;
                RStmtKind::Assign(lhs, rhs)
            } else {
                RStmtKind::Expr(lhs)
            };
            self.expect_punct(";")?;
            k
        };
        Ok(RStmt { kind, span })
    }

    fn if_stmt(&mut self) -> PResult<RStmt> {
        let span = self.span();
        self.expect_kw("if")?;
        let c = self.expr(false)?;
        let then = self.block()?;
        let els = if self.eat_kw("else") {
            if self.is_kw("if") {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(RStmt { kind: RStmtKind::If(c, then, els), span })
    }

    /// `structs` is false in conditions and scrutinees, where `{` opens a block.
    fn expr(&mut self, structs: bool) -> PResult<RExpr> {
        self.binary(1, structs)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min: u8, structs: bool) -> PResult<RExpr> {
        let mut lhs = self.unary(structs)?;
        while let Some(op) = self.binop() {
            if op.precedence() < min {
                break;
            }
            let span = self.span();
            self.bump();
            let rhs = self.binary(op.precedence() + 1, structs)?;
            lhs = RExpr { kind: RExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span };
        }
        Ok(lhs)
    }

    /// Prefix operators bind tighter than the `is` tag test.
    fn unary(&mut self, structs: bool) -> PResult<RExpr> {
        let e = self.prefix(structs)?;
        self.postfix_is(e)
    }

    fn prefix(&mut self, structs: bool) -> PResult<RExpr> {
        let span = self.span();
        if self.eat_punct("-") {
            // Fold `-<literal>` so that i32::MIN is expressible.
            match self.peek().clone() {
                Tok::Int(n) => {
                    self.bump();
                    if n > (i32::MAX as u64) + 1 {
                        return self.error("integer literal out of range");
                    }
                    return Ok(RExpr { kind: RExprKind::Int(-(n as i64)), span });
                }
                Tok::Float(f) => {
                    self.bump();
                    return Ok(RExpr { kind: RExprKind::Float(-f), span });
                }
                _ => {}
            }
            let e = self.prefix(structs)?;
            return Ok(RExpr { kind: RExprKind::Unary(UnOp::Neg, Box::new(e)), span });
        }
        if self.eat_punct("!") {
            let e = self.prefix(structs)?;
            return Ok(RExpr { kind: RExprKind::Unary(UnOp::Not, Box::new(e)), span });
        }
        if self.eat_punct("*") {
            let e = self.prefix(structs)?;
            return Ok(RExpr { kind: RExprKind::Deref(Box::new(e)), span });
        }
        if self.eat_kw("move") {
            let e = self.prefix(structs)?;
            return Ok(RExpr { kind: RExprKind::Move(Box::new(e)), span });
        }
        self.postfix(structs)
    }

    fn postfix_is(&mut self, e: RExpr) -> PResult<RExpr> {
        if self.is_kw("is") {
            let span = self.span();
            self.bump();
            let v = self.ident()?;
            return Ok(RExpr { kind: RExprKind::Is(Box::new(e), v), span });
        }
        Ok(e)
    }

    fn postfix(&mut self, structs: bool) -> PResult<RExpr> {
        let mut e = self.primary(structs)?;
        while self.is_punct(".") {
            let span = self.span();
            self.bump();
            let f = self.ident()?;
            e = RExpr { kind: RExprKind::Field(Box::new(e), f), span };
        }
        Ok(e)
    }

    fn args(&mut self) -> PResult<Vec<RExpr>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        while !self.is_punct(")") {
            out.push(self.expr(true)?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(out)
    }

    fn primary(&mut self, structs: bool) -> PResult<RExpr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if n > i32::MAX as u64 {
                    return Err(Diagnostic::new(codes::PARSE, "integer literal out of range", span));
                }
                RExprKind::Int(n as i64)
            }
            Tok::Float(f) => {
                self.bump();
                RExprKind::Float(f)
            }
            Tok::Punct("(") => {
                self.bump();
                if self.eat_punct(")") {
                    RExprKind::Unit
                } else {
                    let e = self.expr(true)?;
                    if self.eat_kw("as") {
                        let v = self.ident()?;
                        self.expect_punct(")")?;
                        RExprKind::Downcast(Box::new(e), v)
                    } else {
                        self.expect_punct(")")?;
                        return Ok(e);
                    }
                }
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                RExprKind::Bool(s == "true")
            }
            Tok::Ident(s) if s == "Box" && matches!(self.peek_at(1), Tok::Punct("(")) => {
                self.bump();
                self.bump();
                let e = self.expr(true)?;
                self.expect_punct(")")?;
                RExprKind::BoxNew(Box::new(e))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.eat_punct("::") {
                    let v = self.ident()?;
                    let payload = if self.eat_punct("(") {
                        let e =
                            if self.is_punct(")") { RExpr { kind: RExprKind::Unit, span } } else { self.expr(true)? };
                        self.expect_punct(")")?;
                        Some(Box::new(e))
                    } else {
                        None
                    };
                    RExprKind::Variant(name, v, payload)
                } else if self.is_punct("(") {
                    RExprKind::Call(name, self.args()?)
                } else if structs && self.is_punct("{") {
                    self.bump();
                    let mut fields = Vec::new();
                    while !self.is_punct("}") {
                        let l = self.ident()?;
                        self.expect_punct(":")?;
                        fields.push((l, self.expr(true)?));
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct("}")?;
                    RExprKind::StructLit(name, fields)
                } else {
                    RExprKind::Var(name)
                }
            }
            _ => return self.error(format!("expected expression, found {}", self.describe())),
        };
        Ok(RExpr { kind, span })
    }
}
