//! Control-flow graphs over IR function bodies.
//!
//! One node per labeled statement, numbered like the printer's `L<n>`
//! labels. A call is split into an argument node and a return node (the
//! call point); a loop gets a head node.

use std::collections::HashMap;
use std::fmt;

use crate::ast::print::{is_labeled, print_expr};
use crate::ast::{Expr, ExprKind, Ident, Place, Span, Stmt, StmtKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    Nop,
    Assign(Place, Expr),
    AssignVariant(Place, Ident, Expr),
    AssignBox(Place, Expr),
    CallArgs { callee: Ident, args: Vec<Expr>, dest: Option<Place> },
    CallRet { dest: Option<Place> },
    Branch(Expr),
    Drop(Place),
    StaticDrop(Place),
    FlaggedDrop(Place, Ident),
    Return(Option<Place>),
}

impl Instr {
    /// Places moved out by this node, in evaluation order.
    pub fn moves(&self) -> Vec<&Place> {
        fn from(e: &Expr) -> Option<&Place> {
            if let ExprKind::Move(p) = &e.kind {
                Some(p)
            } else {
                None
            }
        }
        let mut out = Vec::new();
        match self {
            Instr::Assign(_, e) | Instr::AssignVariant(_, _, e) | Instr::AssignBox(_, e) => out.extend(from(e)),
            Instr::CallArgs { args, .. } => out.extend(args.iter().filter_map(from)),
            _ => {}
        }
        out
    }

    /// Place that gains ownership after this node.
    pub fn assigned(&self) -> Option<&Place> {
        match self {
            Instr::Assign(p, _) | Instr::AssignVariant(p, _, _) | Instr::AssignBox(p, _) => Some(p),
            Instr::CallRet { dest } => dest.as_ref(),
            _ => None,
        }
    }

    pub fn dropped(&self) -> Option<&Place> {
        match self {
            Instr::Drop(p) | Instr::StaticDrop(p) | Instr::FlaggedDrop(p, _) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Nop => write!(f, "nop"),
            Instr::Assign(p, e) => write!(f, "{p} = {}", print_expr(e)),
            Instr::AssignVariant(p, v, e) => write!(f, "{p} = {v}({})", print_expr(e)),
            Instr::AssignBox(p, e) => write!(f, "{p} = Box({})", print_expr(e)),
            Instr::CallArgs { callee, args, .. } => {
                let a: Vec<String> = args.iter().map(print_expr).collect();
                write!(f, "call {callee}({})", a.join(", "))
            }
            Instr::CallRet { dest: Some(d) } => write!(f, "{d} = <ret>"),
            Instr::CallRet { dest: None } => write!(f, "<ret>"),
            Instr::Branch(e) => write!(f, "if {}", print_expr(e)),
            Instr::Drop(p) => write!(f, "drop?({p})"),
            Instr::StaticDrop(p) => write!(f, "drop({p})"),
            Instr::FlaggedDrop(p, flag) => write!(f, "if {flag} drop({p})"),
            Instr::Return(Some(p)) => write!(f, "return {p}"),
            Instr::Return(None) => write!(f, "return"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub instr: Instr,
    pub succs: Vec<usize>,
    /// Program-point label `L<n>` of the statement this node came from.
    pub label: Option<u32>,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cfg {
    pub nodes: Vec<Node>,
    pub entry: usize,
}

impl Cfg {
    pub fn build(body: &Stmt) -> Cfg {
        let mut labels = HashMap::new();
        let mut n = 0u32;
        body.walk(&mut |s| {
            if is_labeled(&s.kind) {
                labels.insert(s as *const Stmt, n);
                n += 1;
            }
        });
        let mut b = Builder { cfg: Cfg::default(), span: body.span, labels };
        // Falling off the end of the body.
        let exit = b.push(Instr::Return(None), vec![], None);
        let entry = b.stmt(body, exit, None);
        b.cfg.entry = entry;
        b.cfg
    }

    pub fn preds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &s in &n.succs {
                out[s].push(i);
            }
        }
        out
    }

    /// Node of the call point (return node) of the `nth` call to `callee`.
    pub fn call_point(&self, callee: &str, nth: usize) -> Option<usize> {
        let mut k = 0;
        for n in &self.nodes {
            if let Instr::CallArgs { callee: c, .. } = &n.instr {
                if c == callee {
                    if k == nth {
                        return n.succs.first().copied();
                    }
                    k += 1;
                }
            }
        }
        None
    }

    pub fn node_with_label(&self, label: u32) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == Some(label))
    }
}

struct Builder {
    cfg: Cfg,
    span: Span,
    labels: HashMap<*const Stmt, u32>,
}

impl Builder {
    fn push(&mut self, instr: Instr, succs: Vec<usize>, label: Option<u32>) -> usize {
        self.cfg.nodes.push(Node { instr, succs, label, span: self.span });
        self.cfg.nodes.len() - 1
    }

    /// Builds `s` so that it falls through to `next`; returns its entry.
    fn stmt(&mut self, s: &Stmt, next: usize, lp: Option<(usize, usize)>) -> usize {
        let label = self.labels.get(&(s as *const Stmt)).copied();
        self.span = s.span;
        match &s.kind {
            StmtKind::Seq(items) => items.iter().rev().fold(next, |nx, it| self.stmt(it, nx, lp)),
            StmtKind::Let(_, body) => self.stmt(body, next, lp),
            StmtKind::Loop(body) => {
                let head = self.push(Instr::Nop, vec![], None);
                let entry = self.stmt(body, head, Some((head, next)));
                self.cfg.nodes[head].succs = vec![entry];
                head
            }
            StmtKind::If(c, a, b) => {
                let ea = self.stmt(a, next, lp);
                let eb = self.stmt(b, next, lp);
                self.span = s.span;
                self.push(Instr::Branch(c.clone()), vec![ea, eb], label)
            }
            StmtKind::Break => {
                let target = lp.map_or(next, |(_, exit)| exit);
                self.push(Instr::Nop, vec![target], label)
            }
            StmtKind::Continue => {
                let target = lp.map_or(next, |(head, _)| head);
                self.push(Instr::Nop, vec![target], label)
            }
            StmtKind::Return(p) => self.push(Instr::Return(p.clone()), vec![], label),
            StmtKind::Call(dest, callee, args) => {
                let ret = self.push(Instr::CallRet { dest: dest.clone() }, vec![next], label);
                let instr = Instr::CallArgs { callee: callee.clone(), args: args.clone(), dest: dest.clone() };
                self.push(instr, vec![ret], label)
            }
            StmtKind::Skip => self.push(Instr::Nop, vec![next], label),
            StmtKind::Assign(p, e) => self.push(Instr::Assign(p.clone(), e.clone()), vec![next], label),
            StmtKind::AssignVariant(p, v, e) => {
                self.push(Instr::AssignVariant(p.clone(), v.clone(), e.clone()), vec![next], label)
            }
            StmtKind::AssignBox(p, e) => self.push(Instr::AssignBox(p.clone(), e.clone()), vec![next], label),
            StmtKind::Drop(p) => self.push(Instr::Drop(p.clone()), vec![next], label),
            StmtKind::StaticDrop(p) => self.push(Instr::StaticDrop(p.clone()), vec![next], label),
            StmtKind::FlaggedDrop(p, f) => self.push(Instr::FlaggedDrop(p.clone(), f.clone()), vec![next], label),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Expr;

    #[test]
    fn loop_with_break_reaches_exit() {
        let body = Stmt::new(StmtKind::Loop(Box::new(Stmt::new(StmtKind::If(
            Expr::bool(true),
            Box::new(Stmt::new(StmtKind::Break)),
            Box::new(Stmt::new(StmtKind::Continue)),
        )))));
        let cfg = Cfg::build(&body);
        let head = cfg.entry;
        assert_eq!(cfg.nodes[head].instr, Instr::Nop);
        let branch = cfg.nodes[head].succs[0];
        assert_eq!(cfg.nodes[branch].label, Some(0));
        let (brk, cont) = (cfg.nodes[branch].succs[0], cfg.nodes[branch].succs[1]);
        assert_eq!(cfg.nodes[brk].succs, vec![0]); // exit node
        assert_eq!(cfg.nodes[cont].succs, vec![head]);
        assert_eq!(cfg.nodes[brk].label, Some(1));
        assert_eq!(cfg.nodes[cont].label, Some(2));
    }
}
