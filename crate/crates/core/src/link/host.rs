//! Native host components.
//!
//! A host function is a small state machine over a frame of locals. Each
//! step runs the native once; it either continues, returns, or calls.
//! Calls to functions of the same host push a frame, anything else
//! suspends the host on an outgoing query.

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::{Ident, Signature, Type};
use crate::mem::{Access, Chunk, MemErr, Memory, Perm, Value};
use crate::sem::{value_has_type, Query, Reply};

use super::{InitRefused, Status};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NativeFrame {
    pub func: usize,
    pub pc: u32,
    pub args: Vec<Value>,
    pub locals: Vec<Value>,
    /// The host choice this activation was started with.
    pub choice: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HostMode {
    Running,
    Awaiting { callee: Ident, args: Vec<Value> },
    Final(Value),
    MemErr(MemErr),
    Fault(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HostState {
    pub frames: Vec<NativeFrame>,
    pub mem: Memory,
    pub mode: HostMode,
    /// Value returned by the last completed call, consumed by the next step.
    pub last_ret: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Continue,
    Return(Value),
    Call(Ident, Vec<Value>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HostError {
    #[error(transparent)]
    Mem(#[from] MemErr),
    #[error("{0}")]
    Fault(String),
}

pub struct NativeCx<'a> {
    pub frame: &'a mut NativeFrame,
    pub mem: &'a mut Memory,
    pub ret: Option<Value>,
}

impl NativeCx<'_> {
    pub fn arg(&self, i: usize) -> Value {
        self.frame.args[i]
    }

    pub fn local(&self, i: usize) -> Value {
        self.frame.locals.get(i).copied().unwrap_or(Value::Undef)
    }

    pub fn set(&mut self, i: usize, v: Value) {
        if self.frame.locals.len() <= i {
            self.frame.locals.resize(i + 1, Value::Undef);
        }
        self.frame.locals[i] = v;
    }

    pub fn int(&self, i: usize) -> i32 {
        as_int(self.local(i))
    }

    pub fn ret(&self) -> Result<Value, HostError> {
        self.ret.ok_or_else(|| HostError::Fault("no call result to consume".into()))
    }

    pub fn goto(&mut self, pc: u32) {
        self.frame.pc = pc;
    }
}

pub fn as_int(v: Value) -> i32 {
    match v {
        Value::Int(n) => n,
        _ => 0,
    }
}

/// `(block, off)` from a pointer value; an undefined one is a memory error.
pub fn ptr(v: Value, access: Access) -> Result<(u32, u32), HostError> {
    match v {
        Value::Ptr(b, o) => Ok((b, o)),
        _ => Err(MemErr::undef_address(access).into()),
    }
}

pub fn load(mem: &Memory, v: Value, off: i64, chunk: Chunk) -> Result<Value, HostError> {
    let (b, o) = ptr(v, Access::Load)?;
    Ok(mem.load(b, offset(mem, b, o, off, Access::Load)?, chunk)?)
}

pub fn store(mem: &mut Memory, v: Value, off: i64, chunk: Chunk, x: Value) -> Result<(), HostError> {
    let (b, o) = ptr(v, Access::Store)?;
    let at = offset(mem, b, o, off, Access::Store)?;
    Ok(mem.store(b, at, chunk, x)?)
}

pub fn free(mem: &mut Memory, v: Value) -> Result<(), HostError> {
    let (b, _) = ptr(v, Access::Free)?;
    Ok(mem.free(b)?)
}

fn offset(mem: &Memory, b: u32, o: u32, off: i64, access: Access) -> Result<u32, HostError> {
    let at = o as i64 + off;
    if at < 0 || at > u32::MAX as i64 {
        let found = mem.perm(b, 0);
        let required = match access {
            Access::Load => Perm::Readable,
            Access::Store => Perm::Writable,
            Access::Free => Perm::Freeable,
        };
        return Err(MemErr { access, block: Some(b), offset: 0, required, found, out_of_range: true }.into());
    }
    Ok(at as u32)
}

pub type NativeFn = fn(&mut NativeCx) -> Result<Action, HostError>;

#[derive(Clone)]
pub struct HostFn {
    pub name: Ident,
    pub sig: Signature,
    pub native: NativeFn,
    pub native_name: String,
    pub choices: Vec<Value>,
}

impl fmt::Debug for HostFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HostFn").field("name", &self.name).field("native", &self.native_name).finish()
    }
}

#[derive(Clone, Debug)]
pub struct Host {
    pub name: Ident,
    pub fns: Vec<HostFn>,
    /// Signatures of the functions this host calls in other components.
    pub imports: BTreeMap<Ident, Signature>,
}

impl Host {
    pub fn new(name: &str) -> Host {
        Host { name: name.to_string(), fns: Vec::new(), imports: BTreeMap::new() }
    }

    pub fn with(mut self, f: HostFn) -> Host {
        self.fns.push(f);
        self
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.fns.iter().position(|f| f.name == name)
    }

    pub fn exports(&self, name: &str) -> bool {
        self.index(name).is_some()
    }

    pub fn signature(&self, name: &str) -> Option<Signature> {
        self.index(name).map(|i| self.fns[i].sig.clone())
    }

    fn frames_for(&self, func: usize, args: Vec<Value>) -> Vec<NativeFrame> {
        let f = &self.fns[func];
        let mk = |choice| NativeFrame { func, pc: 0, args: args.clone(), locals: Vec::new(), choice };
        if f.choices.is_empty() {
            vec![mk(None)]
        } else {
            f.choices.iter().map(|c| mk(Some(*c))).collect()
        }
    }

    fn check_args(&self, func: usize, args: &[Value]) -> Result<(), InitRefused> {
        let f = &self.fns[func];
        if f.sig.params.len() != args.len() {
            return Err(InitRefused(format!("`{}` expects {} arguments", f.name, f.sig.params.len())));
        }
        for (i, (t, v)) in f.sig.params.iter().zip(args).enumerate() {
            if !value_has_type(t, *v) {
                return Err(InitRefused(format!("argument {i} of `{}` does not match its type", f.name)));
            }
        }
        Ok(())
    }

    pub fn init(&self, q: &Query) -> Result<Vec<HostState>, InitRefused> {
        let func = self.index(&q.callee).ok_or_else(|| InitRefused(format!("`{}` is not exported", q.callee)))?;
        if q.sig != self.fns[func].sig {
            return Err(InitRefused(format!("`{}` is called at a different signature", q.callee)));
        }
        self.check_args(func, &q.args)?;
        Ok(self
            .frames_for(func, q.args.clone())
            .into_iter()
            .map(|fr| HostState { frames: vec![fr], mem: q.mem.clone(), mode: HostMode::Running, last_ret: None })
            .collect())
    }

    pub fn status(&self, s: &HostState) -> Status {
        match &s.mode {
            HostMode::Running => Status::Running,
            HostMode::Awaiting { callee, args } => Status::Awaiting(Query {
                callee: callee.clone(),
                sig: self.call_sig(callee).unwrap_or(Signature { params: vec![], ret: Type::UNIT }),
                args: args.clone(),
                mem: s.mem.clone(),
            }),
            HostMode::Final(v) => Status::Final(Reply { value: *v, mem: s.mem.clone() }),
            HostMode::MemErr(e) => Status::MemErr(*e),
            HostMode::Fault(f) => Status::HostFault(f.clone()),
        }
    }

    /// Outgoing queries carry the signature recorded in `imports`.
    fn call_sig(&self, callee: &str) -> Option<Signature> {
        self.imports.get(callee).cloned()
    }

    pub fn step(&self, s: &HostState) -> Vec<HostState> {
        let mut s = s.clone();
        let ret = s.last_ret.take();
        let mut frame = s.frames.pop().expect("running host has a frame");
        let native = self.fns[frame.func].native;
        let res = native(&mut NativeCx { frame: &mut frame, mem: &mut s.mem, ret });
        match res {
            Err(HostError::Mem(e)) => {
                s.frames.push(frame);
                s.mode = HostMode::MemErr(e);
                vec![s]
            }
            Err(HostError::Fault(f)) => {
                s.frames.push(frame);
                s.mode = HostMode::Fault(f);
                vec![s]
            }
            Ok(Action::Continue) => {
                s.frames.push(frame);
                vec![s]
            }
            Ok(Action::Return(v)) => {
                if s.frames.is_empty() {
                    s.mode = HostMode::Final(v);
                } else {
                    s.last_ret = Some(v);
                }
                vec![s]
            }
            Ok(Action::Call(callee, args)) => {
                s.frames.push(frame);
                match self.index(&callee) {
                    Some(func) => {
                        if let Err(e) = self.check_args(func, &args) {
                            s.mode = HostMode::Fault(e.0);
                            return vec![s];
                        }
                        self.frames_for(func, args)
                            .into_iter()
                            .map(|fr| {
                                let mut next = s.clone();
                                next.frames.push(fr);
                                next
                            })
                            .collect()
                    }
                    None if self.call_sig(&callee).is_none() => {
                        s.mode = HostMode::Fault(format!("host `{}` has no signature for `{callee}`", self.name));
                        vec![s]
                    }
                    None => {
                        s.mode = HostMode::Awaiting { callee, args };
                        vec![s]
                    }
                }
            }
        }
    }

    pub fn resume(&self, s: &HostState, r: Reply) -> HostState {
        let mut s = s.clone();
        s.mem = r.mem;
        s.last_ret = Some(r.value);
        s.mode = HostMode::Running;
        s
    }
}

pub use natives::{lookup_native, NATIVES};

/// Built-in natives, addressed by name from manifests.
pub mod natives {
    use super::*;

    pub const NATIVES: &[(&str, NativeFn)] = &[
        ("choice", choice),
        ("xor42", xor42),
        ("xor42_free_other", xor42_free_other),
        ("identity", identity),
        ("buks_main", buks_main),
        ("buks_hmap_process", buks_hmap_process),
        ("buks_find_bucket", buks_find_bucket),
        ("hash_overflow", hash_overflow),
    ];

    pub fn lookup_native(name: &str) -> Option<NativeFn> {
        NATIVES.iter().find(|(n, _)| *n == name).map(|(_, f)| *f)
    }

    /// Returns the host choice.
    fn choice(cx: &mut NativeCx) -> Result<Action, HostError> {
        cx.frame.choice.map(Action::Return).ok_or_else(|| HostError::Fault("`choice` needs choices".into()))
    }

    fn identity(cx: &mut NativeCx) -> Result<Action, HostError> {
        Ok(Action::Return(cx.arg(0)))
    }

    /// `*v ^= 42`, returning the same box.
    fn xor42(cx: &mut NativeCx) -> Result<Action, HostError> {
        let v = cx.arg(0);
        let x = super::as_int(load(cx.mem, v, 0, Chunk::I32)?);
        store(cx.mem, v, 0, Chunk::I32, Value::Int(x ^ 42))?;
        Ok(Action::Return(v))
    }

    /// Like `xor42`, but also frees the newest live heap block it was not
    /// given.
    fn xor42_free_other(cx: &mut NativeCx) -> Result<Action, HostError> {
        let v = cx.arg(0);
        let (mine, _) = ptr(v, Access::Load)?;
        if let Some(b) = cx.mem.live_heap_blocks().into_iter().filter(|b| *b != mine).max() {
            cx.mem.free(b)?;
        }
        xor42(cx)
    }

    /// A broken `hash` whose result is never below `range`.
    fn hash_overflow(cx: &mut NativeCx) -> Result<Action, HostError> {
        let (k, range) = (as_int(cx.arg(0)), as_int(cx.arg(1)));
        Ok(Action::Return(Value::Int(k.wrapping_rem(range.max(1)).wrapping_abs().wrapping_add(range))))
    }

    /// Number of buckets.
    pub const BUCKETS: i32 = 4;
    /// Keys and values inserted by `buks_main`.
    pub const ENTRIES: &[(i32, i32)] = &[(1, 10), (2, 20), (5, 50), (6, 60), (9, 90), (-3, 30)];

    // Hash map block: range as i32 at 0, bucket pointers at 8 + 8 * i.
    // List block: tag i32 at 0 (Nil = 0, Cons = 1), node inline from 8.
    // Node: key i32 at 0, value box at 8, next list box at 16.
    pub const HMAP_BUCKETS: i64 = 8;
    pub const LIST_PAYLOAD: i64 = 8;
    pub const NODE_VAL: i64 = 8;
    pub const NODE_NEXT: i64 = 16;

    fn hmap_size() -> u32 {
        8 + 8 * BUCKETS as u32
    }

    /// `find_bucket(hmap, k)`: pointer to the bucket slot for `k`.
    fn buks_find_bucket(cx: &mut NativeCx) -> Result<Action, HostError> {
        match cx.frame.pc {
            0 => {
                let range = load(cx.mem, cx.arg(0), 0, Chunk::I32)?;
                cx.goto(1);
                Ok(Action::Call("hash".into(), vec![cx.arg(1), range]))
            }
            _ => {
                let idx = super::as_int(cx.ret()?) as i64;
                let Value::Ptr(b, o) = cx.arg(0) else { return Err(MemErr::undef_address(Access::Load).into()) };
                let at = o as i64 + HMAP_BUCKETS + 8 * idx;
                // A negative slot has no representation; report it like an
                // access below the block.
                if at < 0 {
                    return Err(super::offset(cx.mem, b, 0, at, Access::Load).unwrap_err());
                }
                Ok(Action::Return(Value::Ptr(b, at as u32)))
            }
        }
    }

    /// `hmap_process(hmap, k)`: runs `find_process` on the bucket of `k`.
    fn buks_hmap_process(cx: &mut NativeCx) -> Result<Action, HostError> {
        match cx.frame.pc {
            0 => {
                cx.goto(1);
                Ok(Action::Call("find_bucket".into(), vec![cx.arg(0), cx.arg(1)]))
            }
            1 => {
                let slot = cx.ret()?;
                cx.set(0, slot);
                let l = load(cx.mem, slot, 0, Chunk::Ptr)?;
                cx.goto(2);
                Ok(Action::Call("find_process".into(), vec![l, cx.arg(1)]))
            }
            _ => {
                let l = cx.ret()?;
                store(cx.mem, cx.local(0), 0, Chunk::Ptr, l)?;
                Ok(Action::Return(Value::Unit))
            }
        }
    }

    // Locals of `buks_main`.
    const HMAP: usize = 0;
    const I: usize = 1;
    const SUM: usize = 2;
    const SLOT: usize = 3;

    /// Builds the hash map, processes the chosen key, checksums every list,
    /// frees everything and returns the checksum.
    fn buks_main(cx: &mut NativeCx) -> Result<Action, HostError> {
        match cx.frame.pc {
            0 => {
                let b = cx.mem.alloc(hmap_size());
                let h = Value::Ptr(b, 0);
                store(cx.mem, h, 0, Chunk::I32, Value::Int(BUCKETS))?;
                cx.set(HMAP, h);
                cx.set(I, Value::Int(0));
                cx.goto(1);
                Ok(Action::Continue)
            }
            // Fill buckets with empty lists.
            1 => {
                if cx.int(I) < BUCKETS {
                    cx.goto(2);
                    Ok(Action::Call("empty".into(), vec![]))
                } else {
                    cx.set(I, Value::Int(0));
                    cx.goto(3);
                    Ok(Action::Continue)
                }
            }
            2 => {
                let l = cx.ret()?;
                let i = cx.int(I) as i64;
                store(cx.mem, cx.local(HMAP), HMAP_BUCKETS + 8 * i, Chunk::Ptr, l)?;
                cx.set(I, Value::Int(i as i32 + 1));
                cx.goto(1);
                Ok(Action::Continue)
            }
            // Insert the entries.
            3 => {
                let i = cx.int(I) as usize;
                if i < ENTRIES.len() {
                    cx.goto(4);
                    Ok(Action::Call("find_bucket".into(), vec![cx.local(HMAP), Value::Int(ENTRIES[i].0)]))
                } else {
                    cx.goto(6);
                    Ok(Action::Continue)
                }
            }
            4 => {
                let slot = cx.ret()?;
                cx.set(SLOT, slot);
                let l = load(cx.mem, slot, 0, Chunk::Ptr)?;
                let (k, v) = ENTRIES[cx.int(I) as usize];
                cx.goto(5);
                Ok(Action::Call("insert".into(), vec![l, Value::Int(k), Value::Int(v)]))
            }
            5 => {
                let l = cx.ret()?;
                store(cx.mem, cx.local(SLOT), 0, Chunk::Ptr, l)?;
                cx.set(I, Value::Int(cx.int(I) + 1));
                cx.goto(3);
                Ok(Action::Continue)
            }
            6 => {
                let k = cx.frame.choice.unwrap_or(Value::Int(ENTRIES[0].0));
                cx.goto(7);
                Ok(Action::Call("hmap_process".into(), vec![cx.local(HMAP), k]))
            }
            7 => {
                cx.set(I, Value::Int(0));
                cx.set(SUM, Value::Int(0));
                cx.goto(8);
                Ok(Action::Continue)
            }
            // Checksum: sum of key + value over every node.
            8 => {
                let i = cx.int(I);
                if i >= BUCKETS {
                    cx.set(I, Value::Int(0));
                    cx.goto(9);
                    return Ok(Action::Continue);
                }
                let mut l = load(cx.mem, cx.local(HMAP), HMAP_BUCKETS + 8 * i as i64, Chunk::Ptr)?;
                let mut sum = cx.int(SUM);
                while super::as_int(load(cx.mem, l, 0, Chunk::I32)?) == 1 {
                    let key = super::as_int(load(cx.mem, l, LIST_PAYLOAD, Chunk::I32)?);
                    let val = load(cx.mem, l, LIST_PAYLOAD + NODE_VAL, Chunk::Ptr)?;
                    let v = super::as_int(load(cx.mem, val, 0, Chunk::I32)?);
                    sum = sum.wrapping_add(key).wrapping_add(v);
                    l = load(cx.mem, l, LIST_PAYLOAD + NODE_NEXT, Chunk::Ptr)?;
                }
                cx.set(SUM, Value::Int(sum));
                cx.set(I, Value::Int(i + 1));
                Ok(Action::Continue)
            }
            // Free every list, then the map.
            9 => {
                let i = cx.int(I);
                if i < BUCKETS {
                    let l = load(cx.mem, cx.local(HMAP), HMAP_BUCKETS + 8 * i as i64, Chunk::Ptr)?;
                    cx.goto(10);
                    Ok(Action::Call("free_list".into(), vec![l]))
                } else {
                    free(cx.mem, cx.local(HMAP))?;
                    Ok(Action::Return(cx.local(SUM)))
                }
            }
            _ => {
                cx.set(I, Value::Int(cx.int(I) + 1));
                cx.goto(9);
                Ok(Action::Continue)
            }
        }
    }

    /// Expected checksum of `buks_main` when key `k` is processed.
    pub fn expected_checksum(k: i32) -> i32 {
        ENTRIES.iter().fold(0i32, |acc, &(key, v)| {
            let v = if key == k { v ^ 42 } else { v };
            acc.wrapping_add(key).wrapping_add(v)
        })
    }
}
