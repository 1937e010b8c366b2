//! Type denotations in canonical form.
//!
//! A `TypeExpr` denotes a set of ground terms as the union of four atom
//! classes: integer ranges, strings, user constants, and constructor
//! extensions. Keeping each class canonical (ranges disjoint and merged,
//! sets deduplicated) makes equality structural, so semantically equal
//! declarations written in different ways compare equal.

use super::term::{QualName, Term};
use num_bigint::BigInt;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// One inclusive integer range; `None` bounds are -inf / +inf.
pub type Range = (Option<BigInt>, Option<BigInt>);

/// A set of integers as sorted, disjoint, non-adjacent inclusive ranges.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IntSet {
    ranges: Vec<Range>,
}

fn lo_le(a: &Option<BigInt>, b: &Option<BigInt>) -> bool {
    match (a, b) {
        (None, _) => true,
        (_, None) => false,
        (Some(a), Some(b)) => a <= b,
    }
}

fn hi_le(a: &Option<BigInt>, b: &Option<BigInt>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, _) => false,
        (Some(a), Some(b)) => a <= b,
    }
}

impl IntSet {
    pub fn empty() -> Self {
        IntSet { ranges: Vec::new() }
    }

    pub fn all() -> Self {
        IntSet { ranges: vec![(None, None)] }
    }

    pub fn singleton(n: BigInt) -> Self {
        IntSet { ranges: vec![(Some(n.clone()), Some(n))] }
    }

    pub fn range(lo: Option<BigInt>, hi: Option<BigInt>) -> Self {
        if let (Some(a), Some(b)) = (&lo, &hi) {
            if a > b {
                return IntSet::empty();
            }
        }
        IntSet { ranges: vec![(lo, hi)] }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn ranges(&self) -> &[Range] {
        &self.ranges
    }

    pub fn contains(&self, n: &BigInt) -> bool {
        self.ranges.iter().any(|(lo, hi)| {
            lo.as_ref().is_none_or(|l| l <= n) && hi.as_ref().is_none_or(|h| n <= h)
        })
    }

    pub fn union(&self, other: &IntSet) -> IntSet {
        let mut all: Vec<Range> = self.ranges.iter().chain(other.ranges.iter()).cloned().collect();
        all.sort_by(|a, b| match (&a.0, &b.0) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, _) => std::cmp::Ordering::Less,
            (_, None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => x.cmp(y),
        });
        let mut merged: Vec<Range> = Vec::new();
        for (lo, hi) in all {
            if let Some((_, last_hi)) = merged.last_mut() {
                // Merge when overlapping or adjacent (hi + 1 >= lo).
                let chainable = match (&*last_hi, &lo) {
                    (None, _) => true,
                    (_, None) => true, // lo = -inf always overlaps the previous range
                    (Some(h), Some(l)) => h + 1u32 >= *l,
                };
                if chainable {
                    if !hi_le(&hi, last_hi) {
                        *last_hi = hi;
                    }
                    continue;
                }
            }
            merged.push((lo, hi));
        }
        IntSet { ranges: merged }
    }

    pub fn is_subset(&self, other: &IntSet) -> bool {
        self.ranges.iter().all(|(lo, hi)| {
            other
                .ranges
                .iter()
                .any(|(olo, ohi)| lo_le(olo, lo) && hi_le(hi, ohi))
        })
    }

    pub fn intersect(&self, other: &IntSet) -> IntSet {
        let mut out = Vec::new();
        for (alo, ahi) in &self.ranges {
            for (blo, bhi) in &other.ranges {
                let lo = if lo_le(alo, blo) { blo.clone() } else { alo.clone() };
                let hi = if hi_le(ahi, bhi) { ahi.clone() } else { bhi.clone() };
                let nonempty = match (&lo, &hi) {
                    (Some(l), Some(h)) => l <= h,
                    _ => true,
                };
                if nonempty {
                    out.push((lo, hi));
                }
            }
        }
        out.into_iter().fold(IntSet::empty(), |acc, r| {
            acc.union(&IntSet { ranges: vec![r] })
        })
    }
}

/// String component: every string, or a finite constant set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StringSet {
    Finite(BTreeSet<String>),
    All,
}

impl Default for StringSet {
    fn default() -> Self {
        StringSet::Finite(BTreeSet::new())
    }
}

impl StringSet {
    pub fn is_empty(&self) -> bool {
        matches!(self, StringSet::Finite(s) if s.is_empty())
    }

    pub fn contains(&self, s: &str) -> bool {
        match self {
            StringSet::All => true,
            StringSet::Finite(set) => set.contains(s),
        }
    }

    pub fn union(&self, other: &StringSet) -> StringSet {
        match (self, other) {
            (StringSet::All, _) | (_, StringSet::All) => StringSet::All,
            (StringSet::Finite(a), StringSet::Finite(b)) => {
                StringSet::Finite(a.union(b).cloned().collect())
            }
        }
    }

    pub fn is_subset(&self, other: &StringSet) -> bool {
        match (self, other) {
            (_, StringSet::All) => true,
            (StringSet::All, StringSet::Finite(_)) => false,
            (StringSet::Finite(a), StringSet::Finite(b)) => a.is_subset(b),
        }
    }

    pub fn intersect(&self, other: &StringSet) -> StringSet {
        match (self, other) {
            (StringSet::All, x) => x.clone(),
            (x, StringSet::All) => x.clone(),
            (StringSet::Finite(a), StringSet::Finite(b)) => {
                StringSet::Finite(a.intersection(b).cloned().collect())
            }
        }
    }
}

/// Canonical union of type atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TypeExpr {
    /// Integer constants and ranges.
    pub ints: IntSet,
    /// String constants or all strings.
    pub strings: StringSet,
    /// User constants (nullary constructors).
    pub consts: BTreeSet<QualName>,
    /// Extensions of constructors with arity > 0, by name.
    pub ctors: BTreeSet<QualName>,
}

impl TypeExpr {
    pub fn empty() -> Self {
        TypeExpr::default()
    }

    pub fn integers() -> Self {
        TypeExpr { ints: IntSet::all(), ..Default::default() }
    }

    pub fn strings() -> Self {
        TypeExpr { strings: StringSet::All, ..Default::default() }
    }

    pub fn boolean() -> Self {
        let mut consts = BTreeSet::new();
        consts.insert(QualName::plain("TRUE"));
        consts.insert(QualName::plain("FALSE"));
        TypeExpr { consts, ..Default::default() }
    }

    pub fn constant(name: QualName) -> Self {
        let mut consts = BTreeSet::new();
        consts.insert(name);
        TypeExpr { consts, ..Default::default() }
    }

    pub fn ctor(name: QualName) -> Self {
        let mut ctors = BTreeSet::new();
        ctors.insert(name);
        TypeExpr { ctors, ..Default::default() }
    }

    pub fn int_singleton(n: BigInt) -> Self {
        TypeExpr { ints: IntSet::singleton(n), ..Default::default() }
    }

    pub fn str_singleton(s: String) -> Self {
        let mut set = BTreeSet::new();
        set.insert(s);
        TypeExpr { strings: StringSet::Finite(set), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.ints.is_empty() && self.strings.is_empty() && self.consts.is_empty() && self.ctors.is_empty()
    }

    pub fn union(&self, other: &TypeExpr) -> TypeExpr {
        TypeExpr {
            ints: self.ints.union(&other.ints),
            strings: self.strings.union(&other.strings),
            consts: self.consts.union(&other.consts).cloned().collect(),
            ctors: self.ctors.union(&other.ctors).cloned().collect(),
        }
    }

    /// Intersection is sound here because constructor extensions are whole:
    /// two extensions intersect exactly when they name the same constructor.
    pub fn intersect(&self, other: &TypeExpr) -> TypeExpr {
        TypeExpr {
            ints: self.ints.intersect(&other.ints),
            strings: self.strings.intersect(&other.strings),
            consts: self.consts.intersection(&other.consts).cloned().collect(),
            ctors: self.ctors.intersection(&other.ctors).cloned().collect(),
        }
    }
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        for (lo, hi) in self.ints.ranges() {
            match (lo, hi) {
                (None, None) => parts.push("Integer".to_string()),
                (Some(a), Some(b)) if a == b => parts.push(format!("{{{}}}", a)),
                (a, b) => parts.push(format!(
                    "{}..{}",
                    a.as_ref().map_or("-inf".into(), |x| x.to_string()),
                    b.as_ref().map_or("inf".into(), |x| x.to_string())
                )),
            }
        }
        match &self.strings {
            StringSet::All => parts.push("String".to_string()),
            StringSet::Finite(set) => {
                for s in set {
                    parts.push(format!("{{\"{}\"}}", s));
                }
            }
        }
        for c in &self.consts {
            parts.push(format!("{{{}}}", c));
        }
        for c in &self.ctors {
            parts.push(c.to_string());
        }
        if parts.is_empty() {
            write!(f, "<empty>")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Subtype test on canonical forms: componentwise containment. A constructor
/// extension is contained only in a union that names the same constructor.
pub fn is_subtype(a: &TypeExpr, b: &TypeExpr) -> bool {
    a.ints.is_subset(&b.ints)
        && a.strings.is_subset(&b.strings)
        && a.consts.is_subset(&b.consts)
        && a.ctors.is_subset(&b.ctors)
}

/// Type equality: mutual containment, which on canonical forms coincides
/// with structural equality.
pub fn type_equal(a: &TypeExpr, b: &TypeExpr) -> bool {
    is_subtype(a, b) && is_subtype(b, a)
}

/// Provides constructor argument signatures for membership tests.
pub trait SigCtx {
    /// Argument types of a constructor with arity > 0, if declared.
    fn ctor_arg_types(&self, name: &QualName) -> Option<Vec<TypeExpr>>;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("unresolved type name `{0}`")]
    Unresolved(QualName),
    #[error("`{0}` is not a type")]
    NotAType(QualName),
    #[error("constructor `{0}` has no declared signature")]
    MissingSignature(QualName),
}

/// Membership of a ground term in a type denotation. Constructor arguments
/// are checked recursively against the declared signature.
pub fn term_in_type(t: &Term, ty: &TypeExpr, sigs: &impl SigCtx) -> bool {
    match t {
        Term::Int(n) => ty.ints.contains(n),
        Term::Str(s) => ty.strings.contains(s),
        Term::Const(c) => ty.consts.contains(c),
        Term::Apply(f, args) => {
            if !ty.ctors.contains(f) {
                return false;
            }
            match sigs.ctor_arg_types(f) {
                Some(arg_types) => {
                    arg_types.len() == args.len()
                        && args.iter().zip(arg_types.iter()).all(|(a, at)| term_in_type(a, at, sigs))
                }
                None => false,
            }
        }
        Term::Var(_) | Term::Wildcard | Term::Accessor(..) => false,
    }
}
