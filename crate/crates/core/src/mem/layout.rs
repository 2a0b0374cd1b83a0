//! Byte layout shared by the interpreter and the C emitter.
//!
//! Scalars use natural alignment (unit and bool 1, i32 and f32 4, pointers
//! 8). Structs lay fields out in declaration order. An enum is a 4-byte tag
//! at offset 0 followed by its payload at `max(4, payload align)`.

use super::Chunk;
use crate::ast::{BaseType, CompositeEnv, CompositeKind, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub size: u32,
    pub align: u32,
}

fn round_up(n: u32, a: u32) -> u32 {
    n.div_ceil(a) * a
}

/// Panics on unknown composites; callers work on well-formed modules.
pub fn layout_of(cenv: &CompositeEnv, t: &Type) -> Layout {
    match t {
        Type::Base(BaseType::Unit | BaseType::Bool) => Layout { size: 1, align: 1 },
        Type::Base(BaseType::I32 | BaseType::F32) => Layout { size: 4, align: 4 },
        Type::Box(_) | Type::Fn(..) => Layout { size: 8, align: 8 },
        Type::Struct(n) => {
            let c = cenv.get(n).unwrap_or_else(|| panic!("unknown struct {n}"));
            let (mut off, mut align) = (0, 1);
            for (_, ft) in &c.fields {
                let l = layout_of(cenv, ft);
                off = round_up(off, l.align) + l.size;
                align = align.max(l.align);
            }
            Layout { size: round_up(off.max(1), align), align }
        }
        Type::Enum(n) => {
            let c = cenv.get(n).unwrap_or_else(|| panic!("unknown enum {n}"));
            let (off, size, align) = enum_shape(cenv, c.fields.iter().map(|(_, t)| t));
            Layout { size: round_up(off + size, align), align }
        }
    }
}

fn enum_shape<'a>(cenv: &CompositeEnv, payloads: impl Iterator<Item = &'a Type>) -> (u32, u32, u32) {
    let (mut size, mut palign) = (0, 1);
    for t in payloads {
        let l = layout_of(cenv, t);
        size = size.max(l.size);
        palign = palign.max(l.align);
    }
    (palign.max(4), size, palign.max(4))
}

pub fn size_of(cenv: &CompositeEnv, t: &Type) -> u32 {
    layout_of(cenv, t).size
}

/// Offset and type of a struct field.
pub fn field_offset(cenv: &CompositeEnv, struct_name: &str, label: &str) -> Option<(u32, Type)> {
    let c = cenv.get(struct_name)?;
    if c.kind != CompositeKind::Struct {
        return None;
    }
    let mut off = 0;
    for (l, ft) in &c.fields {
        let lay = layout_of(cenv, ft);
        off = round_up(off, lay.align);
        if l == label {
            return Some((off, ft.clone()));
        }
        off += lay.size;
    }
    None
}

/// Offset of the payload of every variant of an enum.
pub fn payload_offset(cenv: &CompositeEnv, enum_name: &str) -> u32 {
    let c = cenv.get(enum_name).unwrap_or_else(|| panic!("unknown enum {enum_name}"));
    enum_shape(cenv, c.fields.iter().map(|(_, t)| t)).0
}

/// Tag of a variant: its declaration index.
pub fn variant_tag(cenv: &CompositeEnv, enum_name: &str, variant: &str) -> Option<i32> {
    cenv.get(enum_name)?.field(variant).map(|(i, _)| i as i32)
}

pub fn chunk_of(t: &Type) -> Option<Chunk> {
    match t {
        Type::Base(BaseType::Unit | BaseType::Bool) => Some(Chunk::U8),
        Type::Base(BaseType::I32) => Some(Chunk::I32),
        Type::Base(BaseType::F32) => Some(Chunk::F32),
        Type::Box(_) | Type::Fn(..) => Some(Chunk::Ptr),
        Type::Struct(_) | Type::Enum(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_str;

    #[test]
    fn list_layout() {
        let m = parse_str("enum List { Nil, Cons(Node) } struct Node { key: i32, val: Box<i32>, next: Box<List> }")
            .unwrap();
        let env = &m.composites;
        assert_eq!(size_of(env, &Type::Struct("Node".into())), 24);
        assert_eq!(field_offset(env, "Node", "val").unwrap().0, 8);
        assert_eq!(field_offset(env, "Node", "next").unwrap().0, 16);
        assert_eq!(payload_offset(env, "List"), 8);
        assert_eq!(size_of(env, &Type::Enum("List".into())), 32);
        assert_eq!(variant_tag(env, "List", "Cons"), Some(1));
    }

    #[test]
    fn small_enum_payload_after_tag() {
        let m = parse_str("enum E { A(bool), B }").unwrap();
        assert_eq!(payload_offset(&m.composites, "E"), 4);
        assert_eq!(size_of(&m.composites, &Type::Enum("E".into())), 8);
    }
}
