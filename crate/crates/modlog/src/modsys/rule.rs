//! Compiled rule IR: names resolved, heads desugared to one atom per rule,
//! disjunctive bodies split, literals reordered into evaluation order.

use crate::frontend::ast::{ArithOp, CompareOp};
use crate::types::{QualName, RelabelingSpec, Term, TypeExpr};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A comprehension `{ h | body }` with its outer-variable capture set
/// precomputed. Body conjuncts are stored in evaluation order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Comprehension {
    pub head: Term,
    pub disjuncts: Vec<Vec<Literal>>,
    /// Variables bound in an enclosing scope; everything else is local.
    pub captured: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// A term pattern; ground after instantiation.
    Term(Term),
    /// Resolved field projection on a bound variable.
    Accessor { var: String, ctor: QualName, index: usize },
    Count(Comprehension),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    /// Positive atom over the program relation.
    Atom(Term),
    /// `no { ... }`; also the desugaring of `no Atom`.
    NoComp(Comprehension),
    Compare(Expr, CompareOp, Expr),
    /// `x is T`: membership in the program relation plus a type test. The
    /// term is a variable or a ground term (symbolic constants substitute).
    IsMember(Term, TypeExpr),
    /// `t : T`: pure type test on the instantiated term.
    TypeTest(Term, TypeExpr),
}

/// Where a compiled rule came from, for diagnostics and set-dedup across
/// diamond imports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Provenance {
    pub module: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompiledRule {
    pub head: Term,
    /// One conjunct, in evaluation order.
    pub body: Vec<Literal>,
    /// Inferred relabelings applied to head variables at instantiation.
    pub rewrites: BTreeMap<String, RelabelingSpec>,
    pub provenance: Provenance,
}

impl CompiledRule {
    pub fn head_symbol(&self) -> &QualName {
        self.head.outer_symbol().expect("rule heads are atoms")
    }
}

fn fmt_term_with_rewrites(
    t: &Term,
    rewrites: &BTreeMap<String, RelabelingSpec>,
    f: &mut fmt::Formatter<'_>,
) -> fmt::Result {
    match t {
        Term::Var(v) => match rewrites.get(v) {
            Some(rho) => write!(f, "{}({})", rho, v),
            None => write!(f, "{}", v),
        },
        Term::Apply(n, args) => {
            write!(f, "{}(", n)?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_term_with_rewrites(a, rewrites, f)?;
            }
            write!(f, ")")
        }
        other => write!(f, "{}", other),
    }
}

impl fmt::Display for CompiledRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_term_with_rewrites(&self.head, &self.rewrites, f)?;
        write!(f, " :- ")?;
        for (i, lit) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", lit)?;
        }
        write!(f, ".")
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom(t) => write!(f, "{}", t),
            Literal::NoComp(c) => write!(f, "no {}", c),
            Literal::Compare(a, op, b) => write!(f, "{} {} {}", a, op.symbol(), b),
            Literal::IsMember(t, ty) => write!(f, "{} is {}", t, ty),
            Literal::TypeTest(t, ty) => write!(f, "{} : {}", t, ty),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Term(t) => write!(f, "{}", t),
            Expr::Accessor { var, ctor, index } => write!(f, "{}.{}[{}]", var, ctor, index),
            Expr::Count(c) => write!(f, "count({})", c),
            Expr::Arith(op, a, b) => write!(f, "{} {} {}", a, op.symbol(), b),
        }
    }
}

impl fmt::Display for Comprehension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{ {} | ", self.head)?;
        for (i, conj) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for (j, lit) in conj.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", lit)?;
            }
        }
        write!(f, " }}")
    }
}

/// Collects every variable occurring in a literal (including inside
/// comprehensions), in no particular order.
pub fn literal_vars(lit: &Literal, out: &mut BTreeSet<String>) {
    match lit {
        Literal::Atom(t) | Literal::TypeTest(t, _) | Literal::IsMember(t, _) => {
            term_vars(t, out);
        }
        Literal::NoComp(c) => comp_vars(c, out),
        Literal::Compare(a, _, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
    }
}

pub fn expr_vars(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Term(t) => term_vars(t, out),
        Expr::Accessor { var, .. } => {
            out.insert(var.clone());
        }
        Expr::Count(c) => comp_vars(c, out),
        Expr::Arith(_, a, b) => {
            expr_vars(a, out);
            expr_vars(b, out);
        }
    }
}

fn comp_vars(c: &Comprehension, out: &mut BTreeSet<String>) {
    term_vars(&c.head, out);
    for conj in &c.disjuncts {
        for lit in conj {
            literal_vars(lit, out);
        }
    }
}

pub fn term_vars(t: &Term, out: &mut BTreeSet<String>) {
    let mut v = Vec::new();
    t.collect_vars(&mut v);
    out.extend(v);
}
