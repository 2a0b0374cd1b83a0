//! Typing of places and expressions.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{BaseType, BinOp, CompositeEnv, CompositeKind, Const, Expr, ExprKind, Ident, Place, Type, UnOp};

pub type VarTypes = BTreeMap<Ident, Type>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unknown variable `{0}`")]
    UnknownVar(Ident),
    #[error("cannot dereference `{0}` of non-Box type {1}")]
    DerefNonBox(Place, Type),
    #[error("`{0}` of type {1} has no field `{2}`")]
    NoField(Place, Type, Ident),
    #[error("`{0}` of type {1} has no variant `{2}`")]
    NoVariant(Place, Type, Ident),
    #[error("unknown composite `{0}`")]
    UnknownComposite(Ident),
    #[error("operator {0} cannot be applied to {1}")]
    BadOperand(String, Type),
    #[error("operands of {0} have different types {1} and {2}")]
    Mismatch(String, Type, Type),
    #[error("move inside pure expression")]
    NestedMove,
    #[error("aggregate value of type {0} used inside an operator")]
    AggregateOperand(Type),
}

pub fn type_of_place(cenv: &CompositeEnv, ctx: &VarTypes, p: &Place) -> Result<Type, TypeError> {
    match p {
        Place::Var(x) => ctx.get(x).cloned().ok_or_else(|| TypeError::UnknownVar(x.clone())),
        Place::Deref(b) => match type_of_place(cenv, ctx, b)? {
            Type::Box(t) => Ok(*t),
            t => Err(TypeError::DerefNonBox((**b).clone(), t)),
        },
        Place::Field(b, l) => {
            let bt = type_of_place(cenv, ctx, b)?;
            match &bt {
                Type::Struct(n) => {
                    let c = cenv.get(n).ok_or_else(|| TypeError::UnknownComposite(n.clone()))?;
                    c.field(l)
                        .map(|(_, t)| t.clone())
                        .ok_or_else(|| TypeError::NoField((**b).clone(), bt.clone(), l.clone()))
                }
                _ => Err(TypeError::NoField((**b).clone(), bt.clone(), l.clone())),
            }
        }
        Place::Downcast(b, v) => {
            let bt = type_of_place(cenv, ctx, b)?;
            match &bt {
                Type::Enum(n) => {
                    let c = cenv.get(n).ok_or_else(|| TypeError::UnknownComposite(n.clone()))?;
                    c.field(v)
                        .map(|(_, t)| t.clone())
                        .ok_or_else(|| TypeError::NoVariant((**b).clone(), bt.clone(), v.clone()))
                }
                _ => Err(TypeError::NoVariant((**b).clone(), bt.clone(), v.clone())),
            }
        }
    }
}

/// True iff `t` transitively contains a `Box`.
pub fn owns_resources(cenv: &CompositeEnv, t: &Type) -> bool {
    fn go(cenv: &CompositeEnv, t: &Type, seen: &mut BTreeSet<Ident>) -> bool {
        match t {
            Type::Box(_) => true,
            Type::Base(_) | Type::Fn(..) => false,
            Type::Struct(n) | Type::Enum(n) => {
                if !seen.insert(n.clone()) {
                    return false;
                }
                let r = cenv.get(n).map(|c| c.fields.iter().any(|(_, ft)| go(cenv, ft, seen))).unwrap_or(false);
                seen.remove(n);
                r
            }
        }
    }
    go(cenv, t, &mut BTreeSet::new())
}

/// Resource-owning fields of a struct-typed place; empty otherwise.
pub fn place_children(cenv: &CompositeEnv, ctx: &VarTypes, p: &Place) -> Vec<Place> {
    let Ok(Type::Struct(n)) = type_of_place(cenv, ctx, p) else {
        return Vec::new();
    };
    let Some(c) = cenv.get(&n) else {
        return Vec::new();
    };
    c.fields.iter().filter(|(_, t)| owns_resources(cenv, t)).map(|(l, _)| p.clone().field(l)).collect()
}

pub fn type_of_const(c: &Const) -> Type {
    match c {
        Const::Unit => Type::UNIT,
        Const::Bool(_) => Type::BOOL,
        Const::Int(_) => Type::I32,
        Const::Float(_) => Type::F32,
    }
}

/// Types an expression. `Move` is only accepted at the top level.
pub fn type_of_expr(cenv: &CompositeEnv, ctx: &VarTypes, e: &Expr) -> Result<Type, TypeError> {
    match &e.kind {
        ExprKind::Move(p) | ExprKind::Place(p) => type_of_place(cenv, ctx, p),
        _ => type_of_pure(cenv, ctx, e),
    }
}

fn type_of_pure(cenv: &CompositeEnv, ctx: &VarTypes, e: &Expr) -> Result<Type, TypeError> {
    let scalar = |t: Type| if t.is_scalar() { Ok(t) } else { Err(TypeError::AggregateOperand(t)) };
    match &e.kind {
        ExprKind::Move(_) => Err(TypeError::NestedMove),
        ExprKind::Const(c) => Ok(type_of_const(c)),
        ExprKind::Place(p) => scalar(type_of_place(cenv, ctx, p)?),
        ExprKind::CheckTag(p, v) => {
            let t = type_of_place(cenv, ctx, p)?;
            match &t {
                Type::Enum(n) if cenv.get(n).is_some_and(|c| c.kind == CompositeKind::Enum && c.field(v).is_some()) => {
                    Ok(Type::BOOL)
                }
                _ => Err(TypeError::NoVariant(p.clone(), t, v.clone())),
            }
        }
        ExprKind::Unary(op, a) => {
            let t = type_of_pure(cenv, ctx, a)?;
            match (op, &t) {
                (UnOp::Neg, Type::Base(BaseType::I32 | BaseType::F32)) => Ok(t),
                (UnOp::Not, Type::Base(BaseType::Bool)) => Ok(t),
                (UnOp::Neg, _) => Err(TypeError::BadOperand("-".into(), t)),
                (UnOp::Not, _) => Err(TypeError::BadOperand("!".into(), t)),
            }
        }
        ExprKind::Binary(op, a, b) => {
            let ta = type_of_pure(cenv, ctx, a)?;
            let tb = type_of_pure(cenv, ctx, b)?;
            let sym = op.symbol().to_string();
            if ta != tb {
                return Err(TypeError::Mismatch(sym, ta, tb));
            }
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => match ta {
                    Type::Base(BaseType::I32 | BaseType::F32) => Ok(ta),
                    _ => Err(TypeError::BadOperand(sym, ta)),
                },
                BinOp::Rem => match ta {
                    Type::Base(BaseType::I32) => Ok(ta),
                    _ => Err(TypeError::BadOperand(sym, ta)),
                },
                BinOp::Eq | BinOp::Ne => match ta {
                    Type::Base(_) => Ok(Type::BOOL),
                    _ => Err(TypeError::BadOperand(sym, ta)),
                },
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => match ta {
                    Type::Base(BaseType::I32 | BaseType::F32) => Ok(Type::BOOL),
                    _ => Err(TypeError::BadOperand(sym, ta)),
                },
                BinOp::And | BinOp::Or => match ta {
                    Type::Base(BaseType::Bool) => Ok(Type::BOOL),
                    _ => Err(TypeError::BadOperand(sym, ta)),
                },
            }
        }
    }
}
