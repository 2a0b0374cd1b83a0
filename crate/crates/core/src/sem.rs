//! Open-LTS interpreter for Owlang under the ownership semantics.
//!
//! A state is a stack of frames over a block memory. Each frame carries
//! its dynamic OwnSt (a set of ownership atoms). Calls to external
//! functions suspend the state with an outgoing query; `resume` feeds the
//! reply back in.
//!
//! Three dialects run here:
//! - surface: reassignment and scope exit drop owned atoms implicitly,
//! - IR: `Drop` statements consult OwnSt,
//! - elaborated: static and flagged drops ignore OwnSt (but keep it up to date).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ast::typing::{owns_resources, type_of_place, VarTypes};
use crate::ast::{
    BaseType, BinOp, CompositeEnv, Const, Dialect, Expr, ExprKind, Function, Ident, Module, Place, Signature, Stmt,
    StmtKind, Type, UnOp, F32,
};
use crate::lower::{drop_order, overwrite_drops};
use crate::mem::layout::{chunk_of, field_offset, payload_offset, size_of, variant_tag};
use crate::mem::{Access, BlockId, Chunk, MemErr, MemErrKind, MemVal, Memory, Value};
use crate::ownership::{AtomKind, AtomSet, Universe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StuckReason {
    DivByZero,
    UndefUse,
    WrongVariantDowncast,
    MissingReturn,
    BadReply,
    /// A drop flag disagreed with OwnSt (assertion mode only).
    FlagMismatch,
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StuckReason::DivByZero => "div-by-zero",
            StuckReason::UndefUse => "undef-use",
            StuckReason::WrongVariantDowncast => "wrong-variant-downcast",
            StuckReason::MissingReturn => "missing-return",
            StuckReason::BadReply => "bad-reply",
            StuckReason::FlagMismatch => "flag-mismatch",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub callee: Ident,
    pub sig: Signature,
    pub args: Vec<Value>,
    pub mem: Memory,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Reply {
    pub value: Value,
    pub mem: Memory,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Running,
    /// Suspended on an external call.
    Awaiting {
        callee: Ident,
        args: Vec<Value>,
    },
    Final(Value),
    Stuck(StuckReason),
    MemErr(MemErr),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub func: usize,
    pub pc: usize,
    /// Stack block of each variable, in `all_vars` order.
    pub blocks: Vec<BlockId>,
    pub own: AtomSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OwlState {
    pub frames: Vec<Frame>,
    pub mem: Memory,
    pub mode: Mode,
}

impl OwlState {
    pub fn is_running(&self) -> bool {
        self.mode == Mode::Running
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InitError {
    #[error("`{0}` is not an internal function")]
    NotInternal(Ident),
    #[error("`{0}` expects {1} arguments")]
    Arity(Ident, usize),
    #[error("argument {1} of `{0}` does not match its type")]
    ArgType(Ident, usize),
}

/// Result of a run, comparable across dialects. `Unhandled` means the host
/// had no answer for an external call.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    Final { value: String },
    Stuck { reason: StuckReason },
    MemErr { access: String, class: String },
    OutOfFuel,
    Unhandled { callee: Ident },
}

/// Why a host did not reply to a query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HostFail {
    /// Not a function this host provides.
    Unhandled,
    /// The host faulted on memory it was handed.
    MemErr(MemErr),
}

impl Outcome {
    pub fn of_mode(mode: &Mode) -> Option<Outcome> {
        match mode {
            Mode::Final(v) => Some(Outcome::Final { value: v.to_string() }),
            Mode::Stuck(r) => Some(Outcome::Stuck { reason: *r }),
            Mode::MemErr(e) => Some(Outcome::mem_err(e)),
            _ => None,
        }
    }

    pub fn mem_err(e: &MemErr) -> Outcome {
        Outcome::MemErr { access: e.access.to_string(), class: e.classify().to_string() }
    }

    pub fn mem_err_kind(&self) -> Option<MemErrKind> {
        match self {
            Outcome::MemErr { class, .. } => {
                [MemErrKind::DoubleFree, MemErrKind::UseAfterFree, MemErrKind::Uninit, MemErrKind::OutOfBounds]
                    .into_iter()
                    .find(|k| k.to_string() == *class)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Final { value } => write!(f, "final({value})"),
            Outcome::Stuck { reason } => write!(f, "stuck({reason})"),
            Outcome::MemErr { access, class } => write!(f, "memerr({class} on {access})"),
            Outcome::OutOfFuel => write!(f, "out-of-fuel"),
            Outcome::Unhandled { callee } => write!(f, "unhandled({callee})"),
        }
    }
}

/// Outcome plus the heap blocks still live at a final state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Observation {
    pub outcome: Outcome,
    /// Allocation ordinals of leaked heap blocks; empty unless final.
    pub leaks: Vec<u32>,
}

impl Observation {
    pub fn of_state(s: &OwlState) -> Option<Observation> {
        let outcome = Outcome::of_mode(&s.mode)?;
        let leaks = if matches!(s.mode, Mode::Final(_)) { s.mem.live_heap_ordinals() } else { Vec::new() };
        Some(Observation { outcome, leaks })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Op {
    Assign(Place, Expr),
    AssignVariant(Place, Ident, Expr),
    AssignBox(Place, Expr),
    Call(Option<Place>, Ident, Vec<Expr>),
    /// Falls through when true.
    Branch(Expr, usize),
    Jump(usize),
    Drop(Place),
    StaticDrop(Place),
    FlaggedDrop(Place, Ident),
    /// Returns after running the pending drops (surface mode).
    Return(Option<Place>, Vec<Place>),
    /// Falling off the end of the body.
    End,
}

#[derive(Debug)]
struct Code {
    name: Ident,
    sig: Signature,
    universe: Universe,
    ctx: VarTypes,
    vars: Vec<(Ident, Type)>,
    var_index: HashMap<Ident, usize>,
    ops: Vec<Op>,
}

/// A module prepared for execution.
#[derive(Debug)]
pub struct Interp {
    module: Module,
    funcs: Vec<Option<Code>>,
    index: HashMap<Ident, usize>,
    surface: bool,
    assert_flags: bool,
}

enum Fault {
    Mem(MemErr),
    Stuck(StuckReason),
}

impl From<MemErr> for Fault {
    fn from(e: MemErr) -> Self {
        Fault::Mem(e)
    }
}

type R<T> = Result<T, Fault>;

/// A computed right-hand side: a scalar, or the raw bytes of an aggregate.
enum RVal {
    Scalar(Value),
    Bytes(Vec<MemVal>),
}

enum Control {
    Next,
    Goto(usize),
    Call(Ident, Vec<Value>),
    Return(Value),
    Stuck(StuckReason),
}

impl Interp {
    pub fn new(m: &Module) -> Arc<Interp> {
        Self::with_flag_assertions(m, false)
    }

    /// With `assert_flags`, a flagged drop whose flag disagrees with the
    /// dynamic OwnSt gets stuck with `FlagMismatch`.
    pub fn with_flag_assertions(m: &Module, assert_flags: bool) -> Arc<Interp> {
        let surface = m.dialect == Dialect::Surface;
        let funcs = m.functions.iter().map(|f| compile(&m.composites, f, surface)).collect();
        let index = m.functions.iter().enumerate().map(|(i, f)| (f.name.clone(), i)).collect();
        Arc::new(Interp { module: m.clone(), funcs, index, surface, assert_flags })
    }

    pub fn module(&self) -> &Module {
        &self.module
    }

    pub fn cenv(&self) -> &CompositeEnv {
        &self.module.composites
    }

    pub fn is_internal(&self, name: &str) -> bool {
        self.index.get(name).is_some_and(|&i| self.funcs[i].is_some())
    }

    pub fn signature(&self, name: &str) -> Option<Signature> {
        self.module.function(name).map(Function::signature)
    }

    pub fn init(&self, q: &Query) -> Result<OwlState, InitError> {
        let mut mem = q.mem.clone();
        let frame = self.enter(&q.callee, &q.args, &mut mem)?;
        Ok(OwlState { frames: vec![frame], mem, mode: Mode::Running })
    }

    fn enter(&self, callee: &str, args: &[Value], mem: &mut Memory) -> Result<Frame, InitError> {
        let Some((fi, code)) = self.index.get(callee).and_then(|&i| Some((i, self.funcs[i].as_ref()?))) else {
            return Err(InitError::NotInternal(callee.to_string()));
        };
        if args.len() != code.sig.params.len() {
            return Err(InitError::Arity(callee.to_string(), code.sig.params.len()));
        }
        for (i, (t, v)) in code.sig.params.iter().zip(args).enumerate() {
            if !value_has_type(t, *v) {
                return Err(InitError::ArgType(callee.to_string(), i));
            }
        }
        let blocks: Vec<BlockId> = code.vars.iter().map(|(_, t)| mem.alloc_stack(size_of(self.cenv(), t))).collect();
        for (i, (t, v)) in code.sig.params.iter().zip(args).enumerate() {
            let chunk = chunk_of(t).expect("scalar parameter");
            mem.store(blocks[i], 0, chunk, *v).expect("fresh stack block");
        }
        let mut own = code.universe.empty_set();
        for (x, _) in &code.vars[..args.len()] {
            for &a in code.universe.var_atoms(x) {
                own.insert(a);
            }
        }
        Ok(Frame { func: fi, pc: 0, blocks, own })
    }

    /// The outgoing query of a suspended state.
    pub fn query(&self, s: &OwlState) -> Option<Query> {
        let Mode::Awaiting { callee, args } = &s.mode else { return None };
        Some(Query {
            callee: callee.clone(),
            sig: self.signature(callee).expect("declared callee"),
            args: args.clone(),
            mem: s.mem.clone(),
        })
    }

    /// Dynamic OwnSt of the innermost frame, in display form.
    pub fn ownst(&self, s: &OwlState) -> Vec<Place> {
        let Some(fr) = s.frames.last() else { return vec![] };
        let code = self.code(fr.func);
        code.universe.display(self.cenv(), &fr.own)
    }

    /// Name and pc of the innermost frame.
    pub fn position(&self, s: &OwlState) -> Option<(&str, usize)> {
        s.frames.last().map(|fr| (self.code(fr.func).name.as_str(), fr.pc))
    }

    fn code(&self, i: usize) -> &Code {
        self.funcs[i].as_ref().expect("frames run internal functions")
    }

    pub fn resume(&self, s: &mut OwlState, r: Reply) {
        let Mode::Awaiting { callee, .. } = &s.mode else {
            panic!("resume on a state that is not awaiting a reply");
        };
        let ret = self.signature(callee).expect("declared callee").ret;
        s.mem = r.mem;
        if !value_has_type(&ret, r.value) {
            s.mode = Mode::Stuck(StuckReason::BadReply);
            return;
        }
        s.mode = Mode::Running;
        self.finish_call(s, r.value);
    }

    /// Completes the pending call of the top frame with `v`.
    fn finish_call(&self, s: &mut OwlState, v: Value) {
        let fr = s.frames.last_mut().expect("caller frame");
        let code = self.code(fr.func);
        let Op::Call(dest, ..) = &code.ops[fr.pc] else { unreachable!("frame is not at a call") };
        let mut cx = Cx { it: self, code, fr, mem: &mut s.mem };
        let res = match dest {
            Some(p) => cx.complete_store(p, RVal::Scalar(v)),
            None => Ok(()),
        };
        match res {
            Ok(()) => fr_advance(s),
            Err(f) => s.mode = fault_mode(f),
        }
    }

    /// One transition of a running state.
    pub fn step(&self, s: &mut OwlState) {
        if s.mode != Mode::Running {
            return;
        }
        let fr = s.frames.last_mut().expect("running state has a frame");
        let code = self.code(fr.func);
        let op = &code.ops[fr.pc];
        let mut cx = Cx { it: self, code, fr, mem: &mut s.mem };
        match cx.exec(op) {
            Err(f) => s.mode = fault_mode(f),
            Ok(Control::Next) => fr_advance(s),
            Ok(Control::Goto(pc)) => s.frames.last_mut().unwrap().pc = pc,
            Ok(Control::Stuck(r)) => s.mode = Mode::Stuck(r),
            Ok(Control::Call(callee, args)) => {
                if self.is_internal(&callee) {
                    match self.enter(&callee, &args, &mut s.mem) {
                        Ok(frame) => s.frames.push(frame),
                        Err(_) => s.mode = Mode::Stuck(StuckReason::UndefUse),
                    }
                } else {
                    s.mode = Mode::Awaiting { callee, args };
                }
            }
            Ok(Control::Return(v)) => {
                let fr = s.frames.pop().unwrap();
                for b in fr.blocks {
                    // Stack blocks are never reachable from elsewhere.
                    let _ = s.mem.free(b);
                }
                if s.frames.is_empty() {
                    s.mode = Mode::Final(v);
                } else {
                    self.finish_call(s, v);
                }
            }
        }
    }

    /// Runs until the state is no longer running or `fuel` steps pass.
    /// External calls go to `host`. A host memory fault ends the run as a
    /// memory error; an unhandled call leaves the state suspended.
    pub fn run(&self, s: &mut OwlState, fuel: u64, host: &mut dyn FnMut(&Query) -> Result<Reply, HostFail>) -> Outcome {
        let mut left = fuel;
        loop {
            match &s.mode {
                Mode::Running => {
                    if left == 0 {
                        return Outcome::OutOfFuel;
                    }
                    left -= 1;
                    self.step(s);
                }
                Mode::Awaiting { .. } => {
                    let q = self.query(s).unwrap();
                    match host(&q) {
                        Ok(r) => self.resume(s, r),
                        Err(HostFail::MemErr(e)) => s.mode = Mode::MemErr(e),
                        Err(HostFail::Unhandled) => return Outcome::Unhandled { callee: q.callee },
                    }
                }
                m => return Outcome::of_mode(m).unwrap(),
            }
        }
    }
}

fn fr_advance(s: &mut OwlState) {
    s.frames.last_mut().unwrap().pc += 1;
}

fn fault_mode(f: Fault) -> Mode {
    match f {
        Fault::Mem(e) => Mode::MemErr(e),
        Fault::Stuck(r) => Mode::Stuck(r),
    }
}

pub fn value_has_type(t: &Type, v: Value) -> bool {
    matches!(
        (t, v),
        (Type::Base(BaseType::Unit), Value::Unit)
            | (Type::Base(BaseType::Bool), Value::Bool(_))
            | (Type::Base(BaseType::I32), Value::Int(_))
            | (Type::Base(BaseType::F32), Value::Float(_))
            | (Type::Box(_) | Type::Fn(..), Value::Ptr(..))
    )
}

/// A value loaded with `chunk_of(t)`, read back at type `t`.
fn typed(t: &Type, v: Value) -> Value {
    match (t, v) {
        (Type::Base(BaseType::Bool), Value::Int(x)) => Value::Bool(x != 0),
        (Type::Base(BaseType::Unit), Value::Int(_)) => Value::Unit,
        _ => v,
    }
}

struct Cx<'a> {
    it: &'a Interp,
    code: &'a Code,
    fr: &'a mut Frame,
    mem: &'a mut Memory,
}

impl Cx<'_> {
    fn cenv(&self) -> &CompositeEnv {
        self.it.cenv()
    }

    fn type_of(&self, p: &Place) -> Type {
        type_of_place(self.cenv(), &self.code.ctx, p).expect("well-typed place")
    }

    fn owns(&self, p: &Place) -> bool {
        owns_resources(self.cenv(), &self.type_of(p))
    }

    fn addr(&self, p: &Place) -> R<(BlockId, u32, Type)> {
        match p {
            Place::Var(x) => {
                let i = self.code.var_index[x];
                Ok((self.fr.blocks[i], 0, self.code.vars[i].1.clone()))
            }
            Place::Deref(base) => {
                let (b, o, t) = self.addr(base)?;
                let Type::Box(inner) = t else { unreachable!("deref of non-Box") };
                match self.mem.load(b, o, Chunk::Ptr)? {
                    Value::Ptr(pb, po) => Ok((pb, po, *inner)),
                    _ => Err(Fault::Mem(MemErr::undef_address(Access::Load))),
                }
            }
            Place::Field(base, l) => {
                let (b, o, t) = self.addr(base)?;
                let Type::Struct(n) = t else { unreachable!("field of non-struct") };
                let (off, ft) = field_offset(self.cenv(), &n, l).expect("known field");
                Ok((b, o + off, ft))
            }
            Place::Downcast(base, v) => {
                let (b, o, t) = self.addr(base)?;
                let Type::Enum(n) = t else { unreachable!("downcast of non-enum") };
                let want = variant_tag(self.cenv(), &n, v).expect("known variant");
                match self.mem.load(b, o, Chunk::I32)? {
                    Value::Int(tag) if tag == want => {}
                    Value::Int(_) => return Err(Fault::Stuck(StuckReason::WrongVariantDowncast)),
                    _ => return Err(Fault::Stuck(StuckReason::UndefUse)),
                }
                let c = self.cenv().get(&n).expect("known enum");
                let pt = c.field(v).unwrap().1.clone();
                Ok((b, o + payload_offset(self.cenv(), &n), pt))
            }
        }
    }

    fn read(&self, p: &Place) -> R<RVal> {
        let (b, o, t) = self.addr(p)?;
        Ok(match chunk_of(&t) {
            Some(c) => RVal::Scalar(typed(&t, self.mem.load(b, o, c)?)),
            None => RVal::Bytes(self.mem.load_bytes(b, o, size_of(self.cenv(), &t))?),
        })
    }

    fn store(&mut self, p: &Place, v: RVal) -> R<()> {
        let (b, o, t) = self.addr(p)?;
        self.store_at(b, o, &t, v)
    }

    fn store_at(&mut self, b: BlockId, o: u32, t: &Type, v: RVal) -> R<()> {
        match v {
            RVal::Scalar(v) => self.mem.store(b, o, chunk_of(t).expect("scalar type"), v)?,
            RVal::Bytes(bytes) => self.mem.store_bytes(b, o, &bytes)?,
        }
        Ok(())
    }

    fn eval(&mut self, e: &Expr) -> R<RVal> {
        match &e.kind {
            ExprKind::Move(p) => {
                let v = self.read(p)?;
                if self.owns(p) {
                    self.code.universe.move_out(&mut self.fr.own, p);
                }
                Ok(v)
            }
            ExprKind::Place(p) => self.read(p),
            _ => self.pure(e).map(RVal::Scalar),
        }
    }

    fn scalar(&mut self, e: &Expr) -> R<Value> {
        match self.eval(e)? {
            RVal::Scalar(v) => Ok(v),
            RVal::Bytes(_) => unreachable!("aggregate in scalar position"),
        }
    }

    fn pure(&mut self, e: &Expr) -> R<Value> {
        let undef = Fault::Stuck(StuckReason::UndefUse);
        match &e.kind {
            ExprKind::Const(c) => Ok(match c {
                Const::Unit => Value::Unit,
                Const::Bool(b) => Value::Bool(*b),
                Const::Int(n) => Value::Int(*n),
                Const::Float(f) => Value::Float(*f),
            }),
            ExprKind::Place(_) | ExprKind::Move(_) => self.scalar(e),
            ExprKind::CheckTag(p, v) => {
                let (b, o, t) = self.addr(p)?;
                let Type::Enum(n) = t else { unreachable!("tag test of non-enum") };
                let want = variant_tag(self.cenv(), &n, v).expect("known variant");
                match self.mem.load(b, o, Chunk::I32)? {
                    Value::Int(tag) => Ok(Value::Bool(tag == want)),
                    _ => Err(undef),
                }
            }
            ExprKind::Unary(op, a) => match (op, self.pure(a)?) {
                (UnOp::Neg, Value::Int(x)) => Ok(Value::Int(x.wrapping_neg())),
                (UnOp::Neg, Value::Float(x)) => Ok(Value::Float(F32(-x.0))),
                (UnOp::Not, Value::Bool(x)) => Ok(Value::Bool(!x)),
                _ => Err(undef),
            },
            ExprKind::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                let Value::Bool(x) = self.pure(a)? else { return Err(undef) };
                if x == (*op == BinOp::Or) {
                    return Ok(Value::Bool(x));
                }
                match self.pure(b)? {
                    Value::Bool(y) => Ok(Value::Bool(y)),
                    _ => Err(undef),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let x = self.pure(a)?;
                let y = self.pure(b)?;
                binop(*op, x, y).map_err(Fault::Stuck)
            }
        }
    }

    /// Drops an atom's resources: a shell frees its block only.
    fn drop_atom(&mut self, i: usize) -> R<()> {
        let atom = self.code.universe.atom(i);
        let (b, o, t) = self.addr(&atom.place)?;
        match atom.kind {
            AtomKind::Shell => match self.mem.load(b, o, Chunk::Ptr)? {
                Value::Ptr(pb, _) => Ok(self.mem.free(pb)?),
                _ => Err(Fault::Mem(MemErr::undef_address(Access::Free))),
            },
            AtomKind::Deep => self.deep_drop(b, o, &t),
        }
    }

    fn deep_drop(&mut self, b: BlockId, o: u32, t: &Type) -> R<()> {
        match t {
            Type::Box(inner) => match self.mem.load(b, o, Chunk::Ptr)? {
                Value::Ptr(pb, po) => {
                    self.deep_drop(pb, po, inner)?;
                    Ok(self.mem.free(pb)?)
                }
                _ => Err(Fault::Mem(MemErr::undef_address(Access::Free))),
            },
            Type::Struct(n) => {
                let c = self.cenv().get(n).expect("known struct").clone();
                for (l, ft) in &c.fields {
                    if owns_resources(self.cenv(), ft) {
                        let (off, _) = field_offset(self.cenv(), n, l).unwrap();
                        self.deep_drop(b, o + off, ft)?;
                    }
                }
                Ok(())
            }
            Type::Enum(n) => {
                let tag = match self.mem.load(b, o, Chunk::I32)? {
                    Value::Int(tag) => tag,
                    _ => return Err(Fault::Mem(MemErr::undef_address(Access::Load))),
                };
                let c = self.cenv().get(n).expect("known enum");
                let Some((_, pt)) = usize::try_from(tag).ok().and_then(|i| c.fields.get(i)) else {
                    return Err(Fault::Stuck(StuckReason::UndefUse));
                };
                let pt = pt.clone();
                if owns_resources(self.cenv(), &pt) {
                    self.deep_drop(b, o + payload_offset(self.cenv(), n), &pt)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Drops `p` atom by atom; `gated` skips atoms not in OwnSt. A place
    /// inside an atom is dropped as a whole value when its atom is owned.
    fn drop_place(&mut self, p: &Place, gated: bool) -> R<()> {
        let u = &self.code.universe;
        let under = u.atoms_under(p);
        if under.is_empty() {
            if let Some(c) = u.containing_atom(p) {
                if !gated || self.fr.own.contains(c) {
                    let (b, o, t) = self.addr(p)?;
                    self.deep_drop(b, o, &t)?;
                }
            }
            return Ok(());
        }
        for i in drop_order(u, p.root()) {
            if !under.contains(&i) {
                continue;
            }
            if !gated || self.fr.own.contains(i) {
                self.drop_atom(i)?;
            }
            self.fr.own.remove(i);
        }
        Ok(())
    }

    /// The atom exactly at `p`, if any.
    fn atom_at(&self, p: &Place) -> Option<usize> {
        let u = &self.code.universe;
        u.var_atoms(p.root()).iter().copied().find(|&i| u.atom(i).place == *p)
    }

    /// An elaborated drop names one atom, or a place inside one.
    fn drop_piece(&mut self, p: &Place) -> R<()> {
        match self.atom_at(p) {
            Some(i) => {
                self.drop_atom(i)?;
                self.fr.own.remove(i);
                Ok(())
            }
            None => self.drop_place(p, false),
        }
    }

    /// The atoms whose ownership a flag for `p` mirrors.
    fn flag_atoms(&self, p: &Place) -> Vec<usize> {
        match self.atom_at(p) {
            Some(i) => vec![i],
            None => self.code.universe.affected(p),
        }
    }

    /// Surface reassignment: the old value goes before the store.
    fn implicit_drop(&mut self, dest: &Place) -> R<()> {
        if !self.it.surface || !self.owns(dest) {
            return Ok(());
        }
        for q in overwrite_drops(&self.code.universe, dest) {
            self.drop_place(&q, true)?;
        }
        Ok(())
    }

    fn complete_store(&mut self, dest: &Place, v: RVal) -> R<()> {
        self.implicit_drop(dest)?;
        self.store(dest, v)?;
        self.code.universe.assign(&mut self.fr.own, dest);
        Ok(())
    }

    fn exec(&mut self, op: &Op) -> R<Control> {
        match op {
            Op::Assign(p, e) => {
                let v = self.eval(e)?;
                self.complete_store(p, v)?;
            }
            Op::AssignBox(p, e) => {
                let v = self.eval(e)?;
                let Type::Box(inner) = self.type_of(p) else { unreachable!("Box into non-Box") };
                let nb = self.mem.alloc(size_of(self.cenv(), &inner));
                self.store_at(nb, 0, &inner, v)?;
                self.complete_store(p, RVal::Scalar(Value::Ptr(nb, 0)))?;
            }
            Op::AssignVariant(p, var, e) => {
                let v = self.eval(e)?;
                self.implicit_drop(p)?;
                let (b, o, t) = self.addr(p)?;
                let Type::Enum(n) = t else { unreachable!("variant into non-enum") };
                let tag = variant_tag(self.cenv(), &n, var).expect("known variant");
                self.mem.store(b, o, Chunk::I32, Value::Int(tag))?;
                let pt = self.cenv().get(&n).unwrap().field(var).unwrap().1.clone();
                self.store_at(b, o + payload_offset(self.cenv(), &n), &pt, v)?;
                self.code.universe.assign(&mut self.fr.own, p);
            }
            Op::Call(_, callee, args) => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.scalar(a)?);
                }
                return Ok(Control::Call(callee.clone(), vals));
            }
            Op::Branch(c, els) => {
                return match self.pure(c)? {
                    Value::Bool(true) => Ok(Control::Next),
                    Value::Bool(false) => Ok(Control::Goto(*els)),
                    _ => Ok(Control::Stuck(StuckReason::UndefUse)),
                };
            }
            Op::Jump(t) => return Ok(Control::Goto(*t)),
            Op::Drop(p) => self.drop_place(p, true)?,
            Op::StaticDrop(p) => self.drop_piece(p)?,
            Op::FlaggedDrop(p, flag) => {
                let set = match self.read(&Place::Var(flag.clone()))? {
                    RVal::Scalar(Value::Int(n)) => n != 0,
                    _ => return Ok(Control::Stuck(StuckReason::UndefUse)),
                };
                if self.it.assert_flags && self.flag_atoms(p).iter().any(|&i| self.fr.own.contains(i) != set) {
                    return Ok(Control::Stuck(StuckReason::FlagMismatch));
                }
                if set {
                    self.drop_piece(p)?;
                }
            }
            Op::Return(p, drops) => {
                let v = match p {
                    Some(p) => self.scalar(&Expr::mv(p.clone()))?,
                    None => Value::Unit,
                };
                for d in drops {
                    self.drop_place(d, true)?;
                }
                return Ok(Control::Return(v));
            }
            Op::End => {
                return Ok(if self.code.sig.ret.is_unit() {
                    Control::Return(Value::Unit)
                } else {
                    Control::Stuck(StuckReason::MissingReturn)
                });
            }
        }
        Ok(Control::Next)
    }
}

fn binop(op: BinOp, x: Value, y: Value) -> Result<Value, StuckReason> {
    use Value::{Bool, Float, Int};
    let cmp = |o: std::cmp::Ordering| match op {
        BinOp::Eq => o.is_eq(),
        BinOp::Ne => o.is_ne(),
        BinOp::Lt => o.is_lt(),
        BinOp::Le => o.is_le(),
        BinOp::Gt => o.is_gt(),
        _ => o.is_ge(),
    };
    Ok(match (x, y) {
        (Int(a), Int(b)) => match op {
            BinOp::Add => Int(a.wrapping_add(b)),
            BinOp::Sub => Int(a.wrapping_sub(b)),
            BinOp::Mul => Int(a.wrapping_mul(b)),
            BinOp::Div | BinOp::Rem if b == 0 => return Err(StuckReason::DivByZero),
            BinOp::Div => Int(a.wrapping_div(b)),
            BinOp::Rem => Int(a.wrapping_rem(b)),
            _ if op.is_comparison() => Bool(cmp(a.cmp(&b))),
            _ => return Err(StuckReason::UndefUse),
        },
        (Float(a), Float(b)) => match op {
            BinOp::Add => Float(F32(a.0 + b.0)),
            BinOp::Sub => Float(F32(a.0 - b.0)),
            BinOp::Mul => Float(F32(a.0 * b.0)),
            BinOp::Div => Float(F32(a.0 / b.0)),
            BinOp::Eq => Bool(a.0 == b.0),
            BinOp::Ne => Bool(a.0 != b.0),
            BinOp::Lt => Bool(a.0 < b.0),
            BinOp::Le => Bool(a.0 <= b.0),
            BinOp::Gt => Bool(a.0 > b.0),
            BinOp::Ge => Bool(a.0 >= b.0),
            _ => return Err(StuckReason::UndefUse),
        },
        (Bool(a), Bool(b)) if matches!(op, BinOp::Eq | BinOp::Ne) => Bool(cmp(a.cmp(&b))),
        (Value::Unit, Value::Unit) if matches!(op, BinOp::Eq | BinOp::Ne) => Bool(op == BinOp::Eq),
        _ => return Err(StuckReason::UndefUse),
    })
}

fn compile(cenv: &CompositeEnv, f: &Function, surface: bool) -> Option<Code> {
    let body = f.body.as_ref()?;
    let vars: Vec<(Ident, Type)> = f.all_vars().into_iter().map(|d| (d.name.clone(), d.ty.clone())).collect();
    let universe = Universe::new(cenv, &vars);
    let var_index = vars.iter().enumerate().map(|(i, (x, _))| (x.clone(), i)).collect();
    let mut c = Compiler {
        universe: &universe,
        surface,
        ops: Vec::new(),
        scopes: vec![f.params.iter().map(|d| d.name.clone()).collect()],
        loops: Vec::new(),
    };
    c.stmt(&body.body);
    if !body.body.diverges() {
        let drops = c.scope_drops(0);
        c.ops.extend(drops.into_iter().map(Op::Drop));
    }
    c.ops.push(Op::End);
    let ops = c.ops;
    Some(Code { name: f.name.clone(), sig: f.signature(), ctx: f.var_types(), universe, vars, var_index, ops })
}

struct LoopCx {
    head: usize,
    depth: usize,
    breaks: Vec<usize>,
}

struct Compiler<'u> {
    universe: &'u Universe,
    surface: bool,
    ops: Vec<Op>,
    scopes: Vec<Vec<Ident>>,
    loops: Vec<LoopCx>,
}

impl Compiler<'_> {
    /// Atom places of scopes at depth `>= depth`, innermost first; empty
    /// outside surface mode.
    fn scope_drops(&self, depth: usize) -> Vec<Place> {
        if !self.surface {
            return vec![];
        }
        let mut out = Vec::new();
        for scope in self.scopes[depth..].iter().rev() {
            for x in scope.iter().rev() {
                out.extend(drop_order(self.universe, x).into_iter().map(|i| self.universe.atom(i).place.clone()));
            }
        }
        out
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Skip => {}
            StmtKind::Assign(p, e) => self.ops.push(Op::Assign(p.clone(), e.clone())),
            StmtKind::AssignVariant(p, v, e) => self.ops.push(Op::AssignVariant(p.clone(), v.clone(), e.clone())),
            StmtKind::AssignBox(p, e) => self.ops.push(Op::AssignBox(p.clone(), e.clone())),
            StmtKind::Call(d, f, args) => self.ops.push(Op::Call(d.clone(), f.clone(), args.clone())),
            StmtKind::Drop(p) => self.ops.push(Op::Drop(p.clone())),
            StmtKind::StaticDrop(p) => self.ops.push(Op::StaticDrop(p.clone())),
            StmtKind::FlaggedDrop(p, f) => self.ops.push(Op::FlaggedDrop(p.clone(), f.clone())),
            StmtKind::Let(decls, body) => {
                self.scopes.push(decls.iter().map(|d| d.name.clone()).collect());
                self.stmt(body);
                if !body.diverges() {
                    let drops = self.scope_drops(self.scopes.len() - 1);
                    self.ops.extend(drops.into_iter().map(Op::Drop));
                }
                self.scopes.pop();
            }
            StmtKind::Seq(items) => items.iter().for_each(|i| self.stmt(i)),
            StmtKind::If(c, a, b) => {
                let br = self.ops.len();
                self.ops.push(Op::Branch(c.clone(), 0));
                self.stmt(a);
                let jmp = self.ops.len();
                self.ops.push(Op::Jump(0));
                let els = self.ops.len();
                self.stmt(b);
                let end = self.ops.len();
                self.ops[br] = Op::Branch(c.clone(), els);
                self.ops[jmp] = Op::Jump(end);
            }
            StmtKind::Loop(body) => {
                let head = self.ops.len();
                self.loops.push(LoopCx { head, depth: self.scopes.len(), breaks: Vec::new() });
                self.stmt(body);
                self.ops.push(Op::Jump(head));
                let lp = self.loops.pop().unwrap();
                let end = self.ops.len();
                for b in lp.breaks {
                    self.ops[b] = Op::Jump(end);
                }
            }
            StmtKind::Break | StmtKind::Continue => {
                let depth = self.loops.last().expect("jump inside a loop").depth;
                let drops = self.scope_drops(depth);
                self.ops.extend(drops.into_iter().map(Op::Drop));
                let lp = self.loops.last_mut().unwrap();
                if s.kind == StmtKind::Break {
                    lp.breaks.push(self.ops.len());
                    self.ops.push(Op::Jump(0));
                } else {
                    self.ops.push(Op::Jump(lp.head));
                }
            }
            StmtKind::Return(p) => {
                let drops = self.scope_drops(0);
                self.ops.push(Op::Return(p.clone(), drops));
            }
        }
    }
}
