//! Block/offset memory with byte-granular permissions.
//!
//! Blocks are never reused: a freed block keeps its id with every byte at
//! permission `None`, so a later access is classified as use-after-free.

pub mod footprint;
pub mod layout;

use std::fmt;

use thiserror::Error;

use crate::ast::F32;

pub type BlockId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Perm {
    None,
    Readable,
    Writable,
    Freeable,
}

impl Perm {
    fn short(self) -> &'static str {
        match self {
            Perm::None => "none",
            Perm::Readable => "r",
            Perm::Writable => "w",
            Perm::Freeable => "f",
        }
    }
}

/// One byte cell. Pointers are stored as eight fragments so that a partial
/// overwrite destroys them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MemVal {
    Undef,
    Byte(u8),
    Frag(BlockId, u32, u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Stack,
    Heap,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Block {
    pub kind: BlockKind,
    pub size: u32,
    pub perms: Vec<Perm>,
    pub bytes: Vec<MemVal>,
    /// Position among heap allocations; stable across program variants that
    /// allocate in the same order, unlike raw block ids.
    pub heap_ordinal: Option<u32>,
    pub freed: bool,
}

impl Block {
    pub fn is_live(&self) -> bool {
        !self.freed
    }

    fn uniform_perm(&self) -> Option<Perm> {
        let first = *self.perms.first()?;
        self.perms.iter().all(|p| *p == first).then_some(first)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chunk {
    U8,
    I32,
    F32,
    Ptr,
}

impl Chunk {
    pub fn size(self) -> u32 {
        match self {
            Chunk::U8 => 1,
            Chunk::I32 | Chunk::F32 => 4,
            Chunk::Ptr => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Undef,
    Unit,
    Bool(bool),
    Int(i32),
    Float(F32),
    Ptr(BlockId, u32),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Undef => write!(f, "undef"),
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Float(x) => write!(f, "{:?}", x.0),
            Value::Ptr(b, o) => write!(f, "(b{b},{o})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Access {
    Load,
    Store,
    Free,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Access::Load => "load",
            Access::Store => "store",
            Access::Free => "free",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemErrKind {
    DoubleFree,
    UseAfterFree,
    Uninit,
    OutOfBounds,
}

impl fmt::Display for MemErrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemErrKind::DoubleFree => "double-free",
            MemErrKind::UseAfterFree => "use-after-free",
            MemErrKind::Uninit => "uninit-use",
            MemErrKind::OutOfBounds => "out-of-bounds",
        })
    }
}

/// An access whose required permission exceeds what the byte grants.
/// `block` is `None` when the address itself was undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
#[error("{access} of b{} at offset {offset} needs {required:?}, found {found:?}", block.map_or("?".to_string(), |b| b.to_string()))]
pub struct MemErr {
    pub access: Access,
    pub block: Option<BlockId>,
    pub offset: u32,
    pub required: Perm,
    pub found: Perm,
    /// Whether the offset fell outside the block.
    pub out_of_range: bool,
}

impl MemErr {
    pub fn undef_address(access: Access) -> Self {
        MemErr { access, block: None, offset: 0, required: required(access), found: Perm::None, out_of_range: false }
    }

    pub fn classify(&self) -> MemErrKind {
        match (self.block, self.access) {
            (None, _) => MemErrKind::Uninit,
            _ if self.out_of_range => MemErrKind::OutOfBounds,
            (Some(_), Access::Free) if self.found == Perm::None => MemErrKind::DoubleFree,
            (Some(_), _) if self.found == Perm::None => MemErrKind::UseAfterFree,
            _ => MemErrKind::OutOfBounds,
        }
    }
}

fn required(a: Access) -> Perm {
    match a {
        Access::Load => Perm::Readable,
        Access::Store => Perm::Writable,
        Access::Free => Perm::Freeable,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Memory {
    blocks: Vec<Block>,
    heap_count: u32,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_block(&self) -> BlockId {
        self.blocks.len() as BlockId
    }

    fn alloc_kind(&mut self, size: u32, kind: BlockKind) -> BlockId {
        let heap_ordinal = (kind == BlockKind::Heap).then(|| {
            self.heap_count += 1;
            self.heap_count - 1
        });
        self.blocks.push(Block {
            kind,
            size,
            perms: vec![Perm::Freeable; size as usize],
            bytes: vec![MemVal::Undef; size as usize],
            heap_ordinal,
            freed: false,
        });
        self.next_block() - 1
    }

    pub fn alloc(&mut self, size: u32) -> BlockId {
        self.alloc_kind(size, BlockKind::Heap)
    }

    pub fn alloc_stack(&mut self, size: u32) -> BlockId {
        self.alloc_kind(size, BlockKind::Stack)
    }

    pub fn block(&self, b: BlockId) -> Option<&Block> {
        self.blocks.get(b as usize)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (BlockId, &Block)> {
        self.blocks.iter().enumerate().map(|(i, b)| (i as BlockId, b))
    }

    pub fn perm(&self, b: BlockId, off: u32) -> Perm {
        self.block(b).and_then(|blk| blk.perms.get(off as usize).copied()).unwrap_or(Perm::None)
    }

    /// Every byte of a live `b` at least `p`.
    pub fn has_perm_all(&self, b: BlockId, p: Perm) -> bool {
        self.block(b).is_some_and(|blk| !blk.freed && blk.perms.iter().all(|q| *q >= p))
    }

    fn check(&self, access: Access, b: BlockId, off: u32, n: u32) -> Result<(), MemErr> {
        let need = required(access);
        let Some(blk) = self.block(b) else {
            return Err(MemErr {
                access,
                block: Some(b),
                offset: off,
                required: need,
                found: Perm::None,
                out_of_range: true,
            });
        };
        if off.checked_add(n).is_none_or(|end| end > blk.size) {
            let found = blk.perms.get(off as usize).copied().unwrap_or(Perm::None);
            return Err(MemErr { access, block: Some(b), offset: off, required: need, found, out_of_range: true });
        }
        for i in off..off + n {
            let found = blk.perms[i as usize];
            if found < need {
                return Err(MemErr { access, block: Some(b), offset: i, required: need, found, out_of_range: false });
            }
        }
        Ok(())
    }

    /// Frees the whole block; every byte must be freeable.
    pub fn free(&mut self, b: BlockId) -> Result<(), MemErr> {
        let size = self.block(b).map_or(0, |blk| blk.size);
        if self.block(b).is_some_and(|blk| blk.freed) {
            let e = MemErr {
                access: Access::Free,
                block: Some(b),
                offset: 0,
                required: Perm::Freeable,
                found: Perm::None,
                out_of_range: false,
            };
            return Err(e);
        }
        self.check(Access::Free, b, 0, size)?;
        let blk = &mut self.blocks[b as usize];
        blk.perms.iter_mut().for_each(|p| *p = Perm::None);
        blk.freed = true;
        Ok(())
    }

    pub fn load_bytes(&self, b: BlockId, off: u32, n: u32) -> Result<Vec<MemVal>, MemErr> {
        self.check(Access::Load, b, off, n)?;
        Ok(self.blocks[b as usize].bytes[off as usize..(off + n) as usize].to_vec())
    }

    pub fn store_bytes(&mut self, b: BlockId, off: u32, bytes: &[MemVal]) -> Result<(), MemErr> {
        self.check(Access::Store, b, off, bytes.len() as u32)?;
        self.blocks[b as usize].bytes[off as usize..off as usize + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn load(&self, b: BlockId, off: u32, chunk: Chunk) -> Result<Value, MemErr> {
        Ok(decode(chunk, &self.load_bytes(b, off, chunk.size())?))
    }

    pub fn store(&mut self, b: BlockId, off: u32, chunk: Chunk, v: Value) -> Result<(), MemErr> {
        self.store_bytes(b, off, &encode(chunk, v))
    }

    /// Heap blocks that are still live, by allocation ordinal.
    pub fn live_heap_ordinals(&self) -> Vec<u32> {
        self.blocks.iter().filter(|b| b.kind == BlockKind::Heap && !b.freed).filter_map(|b| b.heap_ordinal).collect()
    }

    pub fn live_heap_blocks(&self) -> Vec<BlockId> {
        self.blocks().filter(|(_, b)| b.kind == BlockKind::Heap && !b.freed).map(|(i, _)| i).collect()
    }

    /// Block ids mapped to heap ordinals, for comparing runs.
    pub fn heap_ordinal(&self, b: BlockId) -> Option<u32> {
        self.block(b).and_then(|blk| blk.heap_ordinal)
    }

    /// One line per block, `b<id> size=<n> perm=<p> bytes=<hex|undef>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, blk) in self.blocks() {
            let perm = match blk.uniform_perm() {
                Some(p) => p.short(),
                None if blk.freed => "none",
                None if blk.size == 0 => "f",
                None => "mixed",
            };
            let bytes = if blk.bytes.iter().take(blk.size as usize).all(|v| *v == MemVal::Undef) {
                "undef".to_string()
            } else {
                blk.bytes
                    .iter()
                    .take(blk.size as usize)
                    .map(|v| match v {
                        MemVal::Undef => "__".to_string(),
                        MemVal::Byte(x) => format!("{x:02x}"),
                        MemVal::Frag(pb, po, i) => format!("[b{pb}+{po}#{i}]"),
                    })
                    .collect::<String>()
            };
            out.push_str(&format!("b{id} size={} perm={perm} bytes={bytes}\n", blk.size));
        }
        out
    }
}

pub fn encode(chunk: Chunk, v: Value) -> Vec<MemVal> {
    let n = chunk.size() as usize;
    let bytes = |le: [u8; 4]| le.iter().map(|x| MemVal::Byte(*x)).collect::<Vec<_>>();
    match (chunk, v) {
        (Chunk::U8, Value::Unit) => vec![MemVal::Byte(0)],
        (Chunk::U8, Value::Bool(b)) => vec![MemVal::Byte(b as u8)],
        (Chunk::U8, Value::Int(i)) => vec![MemVal::Byte(i as u8)],
        (Chunk::I32, Value::Int(i)) => bytes(i.to_le_bytes()),
        (Chunk::F32, Value::Float(f)) => bytes(f.0.to_bits().to_le_bytes()),
        (Chunk::Ptr, Value::Ptr(b, o)) => (0..8).map(|i| MemVal::Frag(b, o, i)).collect(),
        _ => vec![MemVal::Undef; n],
    }
}

pub fn decode(chunk: Chunk, bytes: &[MemVal]) -> Value {
    let raw4 = || -> Option<[u8; 4]> {
        let mut out = [0u8; 4];
        for (i, v) in bytes.iter().enumerate() {
            match v {
                MemVal::Byte(x) => out[i] = *x,
                _ => return None,
            }
        }
        Some(out)
    };
    match chunk {
        Chunk::U8 => match bytes[0] {
            MemVal::Byte(x) => Value::Int(x as i32),
            _ => Value::Undef,
        },
        Chunk::I32 => raw4().map_or(Value::Undef, |r| Value::Int(i32::from_le_bytes(r))),
        Chunk::F32 => raw4().map_or(Value::Undef, |r| Value::Float(F32(f32::from_bits(u32::from_le_bytes(r))))),
        Chunk::Ptr => match bytes[0] {
            MemVal::Frag(b, o, 0) if bytes.iter().enumerate().all(|(i, v)| *v == MemVal::Frag(b, o, i as u8)) => {
                Value::Ptr(b, o)
            }
            _ => Value::Undef,
        },
    }
}

/// Every byte of `region` has the same permission and contents in both.
pub fn unchanged_on(m: &Memory, m2: &Memory, region: &[(BlockId, u32)]) -> bool {
    region.iter().all(|&(b, off)| {
        let cell =
            |mm: &Memory| mm.block(b).and_then(|blk| Some((*blk.perms.get(off as usize)?, blk.bytes[off as usize])));
        cell(m) == cell(m2) && m.block(b).map(|x| x.freed) == m2.block(b).map(|x| x.freed)
    })
}

/// Every block of `m` outside `fp` is byte-for-byte unchanged in `m2`.
pub fn unchanged_outside(m: &Memory, m2: &Memory, fp: &[BlockId]) -> bool {
    m.blocks().filter(|(b, _)| !fp.contains(b)).all(|(b, blk)| {
        m2.block(b).is_some_and(|blk2| blk2.perms == blk.perms && blk2.bytes == blk.bytes && blk2.freed == blk.freed)
    })
}
