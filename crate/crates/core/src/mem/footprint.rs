//! Footprints: the heap blocks a value transitively owns.

use thiserror::Error;

use super::layout::{chunk_of, field_offset, payload_offset};
use super::{BlockId, Chunk, Memory, Perm, Value};
use crate::ast::typing::owns_resources;
use crate::ast::{CompositeEnv, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum IllFormed {
    #[error("undefined pointer in an owned position")]
    UndefPointer,
    #[error("pointer into the middle of b{0}")]
    InteriorPointer(BlockId),
    #[error("b{0} is not readable")]
    Unreadable(BlockId),
    #[error("ownership cycle through b{0}")]
    Cycle(BlockId),
    #[error("invalid enum tag")]
    BadTag,
}

/// Footprint of a scalar value of type `t`. Blocks shared by two owners
/// appear twice; a cycle is ill-formed.
pub fn footprint(m: &Memory, cenv: &CompositeEnv, t: &Type, v: Value) -> Result<Vec<BlockId>, IllFormed> {
    let mut out = Vec::new();
    scalar(m, cenv, t, v, &mut Vec::new(), &mut out)?;
    Ok(out)
}

/// Footprint of the value of type `t` stored at `(b, off)`; `b` itself is
/// not included.
pub fn footprint_at(
    m: &Memory,
    cenv: &CompositeEnv,
    t: &Type,
    b: BlockId,
    off: u32,
) -> Result<Vec<BlockId>, IllFormed> {
    let mut out = Vec::new();
    at(m, cenv, t, b, off, &mut Vec::new(), &mut out)?;
    Ok(out)
}

fn scalar(
    m: &Memory,
    cenv: &CompositeEnv,
    t: &Type,
    v: Value,
    path: &mut Vec<BlockId>,
    out: &mut Vec<BlockId>,
) -> Result<(), IllFormed> {
    let Type::Box(inner) = t else { return Ok(()) };
    let (b, off) = match v {
        Value::Ptr(b, off) => (b, off),
        _ => return Err(IllFormed::UndefPointer),
    };
    if off != 0 {
        return Err(IllFormed::InteriorPointer(b));
    }
    if path.contains(&b) {
        return Err(IllFormed::Cycle(b));
    }
    if !m.block(b).is_some_and(|blk| blk.is_live()) || !m.has_perm_all(b, Perm::Readable) {
        return Err(IllFormed::Unreadable(b));
    }
    out.push(b);
    path.push(b);
    let r = at(m, cenv, inner, b, 0, path, out);
    path.pop();
    r
}

fn at(
    m: &Memory,
    cenv: &CompositeEnv,
    t: &Type,
    b: BlockId,
    off: u32,
    path: &mut Vec<BlockId>,
    out: &mut Vec<BlockId>,
) -> Result<(), IllFormed> {
    if !owns_resources(cenv, t) {
        return Ok(());
    }
    match t {
        Type::Box(_) => {
            let v = m.load(b, off, Chunk::Ptr).map_err(|_| IllFormed::Unreadable(b))?;
            scalar(m, cenv, t, v, path, out)
        }
        Type::Struct(n) => {
            let c = cenv.get(n).ok_or(IllFormed::BadTag)?;
            for (l, ft) in &c.fields {
                let (foff, _) = field_offset(cenv, n, l).ok_or(IllFormed::BadTag)?;
                at(m, cenv, ft, b, off + foff, path, out)?;
            }
            Ok(())
        }
        Type::Enum(n) => {
            let c = cenv.get(n).ok_or(IllFormed::BadTag)?;
            let tag = match m.load(b, off, Chunk::I32).map_err(|_| IllFormed::Unreadable(b))? {
                Value::Int(t) => t,
                _ => return Err(IllFormed::BadTag),
            };
            let (_, pt) = usize::try_from(tag).ok().and_then(|i| c.fields.get(i)).ok_or(IllFormed::BadTag)?;
            at(m, cenv, pt, b, off + payload_offset(cenv, n), path, out)
        }
        _ => {
            debug_assert!(chunk_of(t).is_some());
            Ok(())
        }
    }
}

pub fn is_duplicate_free(fp: &[BlockId]) -> bool {
    let mut v = fp.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

/// `v` of type `t` owns exactly `fp` (as a duplicate-free set) and every
/// block in it is freeable.
pub fn wt_val(m: &Memory, cenv: &CompositeEnv, fp: &[BlockId], t: &Type, v: Value) -> bool {
    let Ok(actual) = footprint(m, cenv, t, v) else { return false };
    if !is_duplicate_free(&actual) || !is_duplicate_free(fp) {
        return false;
    }
    let (mut a, mut f) = (actual, fp.to_vec());
    a.sort_unstable();
    f.sort_unstable();
    a == f && f.iter().all(|b| m.has_perm_all(*b, Perm::Freeable))
}
