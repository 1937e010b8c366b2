//! Terms, type denotations, and relabeling.

pub mod relabel;
pub mod term;
pub mod typeexpr;

pub use relabel::{relabel_term, relabel_type, RelabelError, RelabelingSpec};
pub use term::{escape_str, QualName, Term};
pub use typeexpr::{is_subtype, term_in_type, type_equal, IntSet, SigCtx, StringSet, TypeError, TypeExpr};

use num_bigint::BigInt;
use std::collections::BTreeSet;

/// Built-in type names. These are ambient: they resolve everywhere and do
/// not appear in symbol tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Integer,
    String,
    Boolean,
}

impl Builtin {
    pub fn by_name(name: &str) -> Option<Builtin> {
        match name {
            "Integer" => Some(Builtin::Integer),
            "String" => Some(Builtin::String),
            "Boolean" => Some(Builtin::Boolean),
            _ => None,
        }
    }

    pub fn denotation(self) -> TypeExpr {
        match self {
            Builtin::Integer => TypeExpr::integers(),
            Builtin::String => TypeExpr::strings(),
            Builtin::Boolean => TypeExpr::boolean(),
        }
    }
}

/// A resolved (post-lookup) type expression, before canonicalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeRef {
    /// A named symbol: union type or constructor of either kind.
    Named(QualName),
    Builtin(Builtin),
    /// Inline constant set `{ c1, ..., cn }`.
    Consts(Vec<ConstAtom>),
    Union(Vec<TypeRef>),
    /// An already-canonical denotation, e.g. from a compiled import.
    Canonical(TypeExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstAtom {
    Int(BigInt),
    Str(String),
    User(QualName),
}

/// Resolves named symbols while canonicalizing a `TypeRef`.
pub trait TypeCtx {
    /// Kind and arity for a declared symbol.
    fn symbol_shape(&self, name: &QualName) -> Option<(crate::symtab::SymbolKind, usize)>;
    /// Body of a union-type declaration.
    fn union_body(&self, name: &QualName) -> Option<TypeRef>;
}

/// Canonicalizes a resolved type expression: union names are expanded with
/// a visited set (so recursive unions terminate), nullary constructors fold
/// into constant atoms, and non-nullary constructors become extension atoms.
pub fn normalize(t: &TypeRef, ctx: &impl TypeCtx) -> Result<TypeExpr, TypeError> {
    let mut visited = BTreeSet::new();
    normalize_inner(t, ctx, &mut visited)
}

fn normalize_inner(
    t: &TypeRef,
    ctx: &impl TypeCtx,
    visited: &mut BTreeSet<QualName>,
) -> Result<TypeExpr, TypeError> {
    match t {
        TypeRef::Canonical(te) => Ok(te.clone()),
        TypeRef::Builtin(b) => Ok(b.denotation()),
        TypeRef::Consts(atoms) => {
            let mut out = TypeExpr::empty();
            for a in atoms {
                out = out.union(&match a {
                    ConstAtom::Int(n) => TypeExpr::int_singleton(n.clone()),
                    ConstAtom::Str(s) => TypeExpr::str_singleton(s.clone()),
                    ConstAtom::User(c) => TypeExpr::constant(c.clone()),
                });
            }
            Ok(out)
        }
        TypeRef::Union(parts) => {
            let mut out = TypeExpr::empty();
            for p in parts {
                out = out.union(&normalize_inner(p, ctx, visited)?);
            }
            Ok(out)
        }
        TypeRef::Named(name) => {
            use crate::symtab::SymbolKind;
            match ctx.symbol_shape(name) {
                Some((SymbolKind::Union, _)) => {
                    if !visited.insert(name.clone()) {
                        // Already being expanded: contributes nothing new.
                        return Ok(TypeExpr::empty());
                    }
                    let body = ctx.union_body(name).ok_or_else(|| TypeError::Unresolved(name.clone()))?;
                    normalize_inner(&body, ctx, visited)
                }
                Some((SymbolKind::New, 0)) | Some((SymbolKind::Derived, 0)) => {
                    Ok(TypeExpr::constant(name.clone()))
                }
                Some((SymbolKind::New, _)) | Some((SymbolKind::Derived, _)) => {
                    Ok(TypeExpr::ctor(name.clone()))
                }
                Some((SymbolKind::Var, _)) | Some((SymbolKind::SymConst, _)) => {
                    Err(TypeError::NotAType(name.clone()))
                }
                None => Err(TypeError::Unresolved(name.clone())),
            }
        }
    }
}
