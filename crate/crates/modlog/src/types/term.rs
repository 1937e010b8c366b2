//! First-order terms over declared constructors and built-in constants.

use num_bigint::BigInt;
use std::cmp::Ordering;
use std::fmt;

/// A possibly-qualified symbol: a sequence of qualifiers and a base name.
/// The qualifier operator is associative, so qualifiers are kept flat.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualName {
    pub quals: Vec<String>,
    pub base: String,
}

impl QualName {
    pub fn plain(base: impl Into<String>) -> Self {
        QualName { quals: Vec::new(), base: base.into() }
    }

    pub fn new(quals: Vec<String>, base: impl Into<String>) -> Self {
        QualName { quals, base: base.into() }
    }

    /// Parses a dotted path such as `in.State`. The final segment is the base.
    pub fn from_dotted(s: &str) -> Self {
        let mut parts: Vec<String> = s.split('.').map(str::to_string).collect();
        let base = parts.pop().unwrap_or_default();
        QualName { quals: parts, base }
    }

    pub fn is_plain(&self) -> bool {
        self.quals.is_empty()
    }

    /// Returns the same symbol under one more leading qualifier.
    pub fn prefixed(&self, prefix: &str) -> QualName {
        let mut quals = Vec::with_capacity(self.quals.len() + 1);
        quals.push(prefix.to_string());
        quals.extend(self.quals.iter().cloned());
        QualName { quals, base: self.base.clone() }
    }

    pub fn starts_with(&self, prefix: &[String]) -> bool {
        self.quals.len() >= prefix.len() && self.quals[..prefix.len()] == *prefix
    }
}

impl fmt::Display for QualName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in &self.quals {
            write!(f, "{}.", q)?;
        }
        write!(f, "{}", self.base)
    }
}

/// A term: ground when it contains no variables, wildcards, or accessors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// Arbitrary-precision integer constant.
    Int(BigInt),
    /// String constant.
    Str(String),
    /// Nullary constructor: a user-introduced or derived constant.
    Const(QualName),
    /// Constructor application with arity > 0.
    Apply(QualName, Vec<Term>),
    /// Rule variable.
    Var(String),
    /// Anonymous variable `_`.
    Wildcard,
    /// Field projection `var.field` on a bound variable.
    Accessor(String, String),
}

impl Term {
    pub fn int(n: i64) -> Term {
        Term::Int(BigInt::from(n))
    }

    pub fn str(s: impl Into<String>) -> Term {
        Term::Str(s.into())
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(QualName::from_dotted(name))
    }

    pub fn apply(name: &str, args: Vec<Term>) -> Term {
        Term::Apply(QualName::from_dotted(name), args)
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Int(_) | Term::Str(_) | Term::Const(_) => true,
            Term::Apply(_, args) => args.iter().all(Term::is_ground),
            Term::Var(_) | Term::Wildcard | Term::Accessor(..) => false,
        }
    }

    /// The outer constructor symbol of a ground fact, if any.
    pub fn outer_symbol(&self) -> Option<&QualName> {
        match self {
            Term::Const(n) | Term::Apply(n, _) => Some(n),
            _ => None,
        }
    }

    /// Collects variable names in first-occurrence order.
    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Term::Accessor(v, _) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Term::Apply(_, args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
            _ => {}
        }
    }
}

fn rank(t: &Term) -> u8 {
    match t {
        Term::Int(_) => 0,
        Term::Str(_) => 1,
        Term::Const(_) => 2,
        Term::Apply(..) => 3,
        Term::Var(_) => 4,
        Term::Wildcard => 5,
        Term::Accessor(..) => 6,
    }
}

/// Total order on terms: integers < strings < user constants < applications;
/// applications compare by qualified name, then argument-wise. Non-ground
/// forms sort after all ground terms so that stores stay deterministic.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Int(a), Term::Int(b)) => a.cmp(b),
            (Term::Str(a), Term::Str(b)) => a.cmp(b),
            (Term::Const(a), Term::Const(b)) => a.cmp(b),
            (Term::Apply(f, xs), Term::Apply(g, ys)) => f.cmp(g).then_with(|| xs.cmp(ys)),
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::Wildcard, Term::Wildcard) => Ordering::Equal,
            (Term::Accessor(a, f), Term::Accessor(b, g)) => a.cmp(b).then_with(|| f.cmp(g)),
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => write!(f, "{}", n),
            Term::Str(s) => write!(f, "\"{}\"", escape_str(s)),
            Term::Const(n) => write!(f, "{}", n),
            Term::Apply(n, args) => {
                write!(f, "{}(", n)?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ")")
            }
            Term::Var(v) => write!(f, "{}", v),
            Term::Wildcard => write!(f, "_"),
            Term::Accessor(v, field) => write!(f, "{}.{}", v, field),
        }
    }
}
