//! Ownership atoms: the finite set of places whose ownership is tracked.
//!
//! Each resource-owning variable contributes atoms. A struct is split into
//! its resource-owning fields, recursively. A Box variable whose pointee
//! owns resources is split into a shell atom `x` (the block itself) and
//! content atoms under `*x`. Anything else that owns resources is one deep
//! atom. Heap paths below the first Box are summarized by their atom.
//!
//! OwnSt, both static and dynamic, is a set of atoms.

use std::collections::BTreeMap;
use std::fmt;

use fixedbitset::FixedBitSet;

use crate::ast::typing::{owns_resources, type_of_place, VarTypes};
use crate::ast::{CompositeEnv, Ident, Place, Type};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomKind {
    /// The block of a split Box variable; dropping it only frees the block.
    Shell,
    /// Owns the whole value at its place.
    Deep,
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub place: Place,
    pub kind: AtomKind,
    pub ty: Type,
}

/// Atoms of one function.
#[derive(Clone, Debug, Default)]
pub struct Universe {
    atoms: Vec<Atom>,
    index: BTreeMap<Place, usize>,
    /// Atom indices per variable, in expansion order.
    by_var: BTreeMap<Ident, Vec<usize>>,
    /// Variables in declaration order, with their types.
    vars: Vec<(Ident, Type)>,
    cenv: CompositeEnv,
    ctx: VarTypes,
}

impl Universe {
    pub fn new(cenv: &CompositeEnv, vars: &[(Ident, Type)]) -> Universe {
        let mut u = Universe {
            vars: vars.to_vec(),
            cenv: cenv.clone(),
            ctx: vars.iter().cloned().collect(),
            ..Default::default()
        };
        for (x, t) in vars {
            if !owns_resources(cenv, t) {
                continue;
            }
            let start = u.atoms.len();
            let root = Place::Var(x.clone());
            match t {
                Type::Box(inner) if owns_resources(cenv, inner) => {
                    u.push(root.clone(), AtomKind::Shell, t.clone());
                    u.expand(cenv, root.deref(), inner);
                }
                _ => u.expand(cenv, root, t),
            }
            u.by_var.insert(x.clone(), (start..u.atoms.len()).collect());
        }
        u
    }

    pub fn for_function(cenv: &CompositeEnv, f: &crate::ast::Function) -> Universe {
        let vars: Vec<(Ident, Type)> = f.all_vars().into_iter().map(|d| (d.name.clone(), d.ty.clone())).collect();
        Universe::new(cenv, &vars)
    }

    fn push(&mut self, place: Place, kind: AtomKind, ty: Type) {
        self.index.insert(place.clone(), self.atoms.len());
        self.atoms.push(Atom { place, kind, ty });
    }

    fn expand(&mut self, cenv: &CompositeEnv, p: Place, t: &Type) {
        if let Type::Struct(n) = t {
            if let Some(c) = cenv.get(n) {
                for (l, ft) in &c.fields {
                    if owns_resources(cenv, ft) {
                        self.expand(cenv, p.clone().field(l), ft);
                    }
                }
                return;
            }
        }
        self.push(p, AtomKind::Deep, t.clone());
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn index_of(&self, p: &Place) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn var_atoms(&self, x: &str) -> &[usize] {
        self.by_var.get(x).map_or(&[], |v| v.as_slice())
    }

    pub fn var_types(&self) -> VarTypes {
        self.vars.iter().cloned().collect()
    }

    pub fn empty_set(&self) -> AtomSet {
        AtomSet(FixedBitSet::with_capacity(self.len()))
    }

    pub fn full_set(&self) -> AtomSet {
        let mut s = self.empty_set();
        s.0.insert_range(..);
        s
    }

    /// Atoms that `q` is a prefix of.
    pub fn atoms_under(&self, q: &Place) -> Vec<usize> {
        self.var_atoms(q.root()).iter().copied().filter(|&i| q.is_prefix_of(&self.atoms[i].place)).collect()
    }

    /// The atom strictly containing `q`. A shell does not contain the places
    /// under its own dereference; those belong to the content atoms.
    pub fn containing_atom(&self, q: &Place) -> Option<usize> {
        self.var_atoms(q.root()).iter().copied().find(|&i| {
            let a = &self.atoms[i];
            a.place.is_strict_prefix_of(q) && !(a.kind == AtomKind::Shell && a.place.clone().deref().is_prefix_of(q))
        })
    }

    /// Atoms a write to or move of `q` affects: those under it, or else the
    /// one containing it.
    pub fn affected(&self, q: &Place) -> Vec<usize> {
        let under = self.atoms_under(q);
        if !under.is_empty() {
            return under;
        }
        self.containing_atom(q).into_iter().collect()
    }

    /// Assigning `q` gives ownership of everything under it. Writes inside an
    /// atom leave it as it was.
    pub fn assign(&self, s: &mut AtomSet, q: &Place) {
        for i in self.atoms_under(q) {
            s.0.insert(i);
        }
    }

    /// Atoms a move of `q` releases. Moving a copy-typed place is a read.
    pub fn moved_atoms(&self, q: &Place) -> Vec<usize> {
        match type_of_place(&self.cenv, &self.ctx, q) {
            Ok(t) if owns_resources(&self.cenv, &t) => self.affected(q),
            _ => Vec::new(),
        }
    }

    pub fn move_out(&self, s: &mut AtomSet, q: &Place) {
        for i in self.moved_atoms(q) {
            s.0.set(i, false);
        }
    }

    pub fn drop_place(&self, s: &mut AtomSet, q: &Place) {
        for i in self.atoms_under(q) {
            s.0.set(i, false);
        }
    }

    /// Every atom under `q` is owned, or `q` lies inside an owned atom.
    pub fn fully_owned(&self, s: &AtomSet, q: &Place) -> bool {
        let under = self.atoms_under(q);
        if under.is_empty() {
            return self.containing_atom(q).is_none_or(|i| s.contains(i));
        }
        under.iter().all(|&i| s.contains(i))
    }

    /// A Box place can be dereferenced while its block is owned: through the
    /// shell bit for split variables, or through full ownership otherwise.
    pub fn deref_alive(&self, s: &AtomSet, base: &Place) -> bool {
        match self.index_of(base) {
            Some(i) if self.atoms[i].kind == AtomKind::Shell => s.contains(i),
            _ => self.fully_owned(s, base),
        }
    }

    /// Places for display: complete structs are merged into their parent;
    /// shells and contents never are.
    pub fn display(&self, cenv: &CompositeEnv, s: &AtomSet) -> Vec<Place> {
        let ctx = self.var_types();
        let mut out = Vec::new();
        for (x, t) in &self.vars {
            if !owns_resources(cenv, t) {
                continue;
            }
            let root = Place::Var(x.clone());
            match self.index_of(&root) {
                Some(i) if self.atoms[i].kind == AtomKind::Shell => {
                    if s.contains(i) {
                        out.push(root.clone());
                    }
                    out.extend(self.merged(cenv, &ctx, s, root.deref()).0);
                }
                _ => out.extend(self.merged(cenv, &ctx, s, root).0),
            }
        }
        out
    }

    /// Owned pieces under `p`, and whether `p` is entirely owned.
    fn merged(&self, cenv: &CompositeEnv, ctx: &VarTypes, s: &AtomSet, p: Place) -> (Vec<Place>, bool) {
        if let Some(i) = self.index_of(&p) {
            return if s.contains(i) { (vec![p], true) } else { (vec![], false) };
        }
        let Ok(Type::Struct(n)) = type_of_place(cenv, ctx, &p) else {
            return (vec![], false);
        };
        let Some(c) = cenv.get(&n) else { return (vec![], false) };
        let mut pieces = Vec::new();
        let mut all = true;
        for (l, ft) in &c.fields {
            if !owns_resources(cenv, ft) {
                continue;
            }
            let (ps, full) = self.merged(cenv, ctx, s, p.clone().field(l));
            all &= full;
            pieces.extend(ps);
        }
        if all {
            (vec![p], true)
        } else {
            (pieces, false)
        }
    }

    pub fn display_text(&self, cenv: &CompositeEnv, s: &AtomSet) -> String {
        crate::ast::print::places_text(&self.display(cenv, s))
    }
}

/// A set of atoms of one universe.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomSet(pub FixedBitSet);

impl AtomSet {
    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(i)
    }

    pub fn insert(&mut self, i: usize) {
        self.0.insert(i);
    }

    pub fn remove(&mut self, i: usize) {
        self.0.set(i, false);
    }

    pub fn intersect_with(&mut self, other: &AtomSet) {
        self.0.intersect_with(&other.0);
    }

    pub fn union_with(&mut self, other: &AtomSet) {
        self.0.union_with(&other.0);
    }

    pub fn is_subset(&self, other: &AtomSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn count(&self) -> usize {
        self.0.count_ones(..)
    }
}

impl fmt::Display for AtomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.ones().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_str;

    fn env() -> CompositeEnv {
        parse_str("enum List { Nil, Cons(Node) } struct Node { key: i32, val: Box<i32>, next: Box<List> }")
            .unwrap()
            .composites
    }

    fn uni(env: &CompositeEnv) -> Universe {
        let vars = vec![
            ("l".to_string(), Type::boxed(Type::Enum("List".into()))),
            ("k".to_string(), Type::I32),
            ("node".to_string(), Type::Struct("Node".into())),
        ];
        Universe::new(env, &vars)
    }

    #[test]
    fn box_variable_splits_into_shell_and_content() {
        let env = env();
        let u = uni(&env);
        let names: Vec<String> = u.atoms().iter().map(|a| a.place.to_string()).collect();
        assert_eq!(names, ["l", "*l", "node.val", "node.next"]);
        assert_eq!(u.atom(0).kind, AtomKind::Shell);
    }

    #[test]
    fn move_of_downcast_clears_content_only() {
        let env = env();
        let u = uni(&env);
        let mut s = u.empty_set();
        u.assign(&mut s, &Place::var("l"));
        assert_eq!(u.display_text(&env, &s), "{l, *l}");
        u.move_out(&mut s, &Place::var("l").deref().downcast("Cons"));
        u.assign(&mut s, &Place::var("node"));
        assert_eq!(u.display_text(&env, &s), "{l, node}");
        u.move_out(&mut s, &Place::var("node").field("val"));
        assert_eq!(u.display_text(&env, &s), "{l, node.next}");
        assert!(u.deref_alive(&s, &Place::var("l")));
        assert!(!u.fully_owned(&s, &Place::var("node")));
    }
}
