//! Raw AST produced by the parser: unresolved names, source spans, no
//! typing. Elaboration turns these into compiled modules.

use crate::diag::Span;
use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub path: String,
    pub decls: Vec<RawModuleDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModuleKind {
    Domain,
    Model,
    Transform,
    TransformSystem,
}

impl std::fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModuleKind::Domain => write!(f, "domain"),
            ModuleKind::Model => write!(f, "model"),
            ModuleKind::Transform => write!(f, "transform"),
            ModuleKind::TransformSystem => write!(f, "transform system"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportMode {
    None,
    Includes,
    Extends,
}

/// One import target, optionally under a renaming prefix (`left::CntrMach`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImport {
    pub prefix: Option<String>,
    pub target: String,
    pub span: Span,
}

/// One transform signature slot (`in :: NonDetFSM`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSig {
    pub label: String,
    pub domain: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawModuleDecl {
    pub kind: ModuleKind,
    pub name: String,
    pub span: Span,
    /// The governing domain of a model (`of D`).
    pub of_target: Option<RawImport>,
    pub import_mode: ImportMode,
    pub imports: Vec<RawImport>,
    pub sig_inputs: Vec<RawSig>,
    pub sig_outputs: Vec<RawSig>,
    pub items: Vec<RawItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawItem {
    TypeDecl(RawTypeDecl),
    Rule(RawRule),
    Conforms(RawClause),
    Requires(RawClause),
    Ensures(RawClause),
    Fact(RawTerm),
    SymConst(RawSymConst),
    Pipeline(RawPipelineEq),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtorMarker {
    /// Unmarked: derived-kind constructor, judgments only.
    Derived,
    New,
    Fun,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTypeDecl {
    pub name: String,
    pub span: Span,
    pub marker: CtorMarker,
    pub body: RawTypeDeclBody,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawTypeDeclBody {
    /// Constructor form: `F ::= new (a: T1, b: T2).`; `fun` constructors
    /// carry the index where `->` splits domain from range fields.
    Ctor { fields: Vec<RawField>, fun_split: Option<usize> },
    /// Union form: `U ::= T1 + T2 + { c }.`
    Union(RawTypeExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawField {
    pub name: Option<String>,
    pub any: bool,
    pub ty: RawTypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTypeExpr {
    pub atoms: Vec<RawTypeAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawTypeAtom {
    Name(RawQual),
    ConstSet(Vec<RawConst>, Span),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawConst {
    Int(BigInt),
    Str(String),
    Name(RawQual),
}

/// Possibly-qualified name as written, before resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQual {
    pub segments: Vec<String>,
    pub span: Span,
}

impl RawQual {
    pub fn dotted(&self) -> String {
        self.segments.join(".")
    }

    pub fn is_plain(&self) -> bool {
        self.segments.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawTerm {
    Int(BigInt, Span),
    Str(String, Span),
    /// Variable, constant, symbolic constant, or accessor: decided at
    /// resolution time.
    Name(RawQual),
    Apply(RawQual, Vec<RawTerm>, Span),
    Wildcard(Span),
}

impl RawTerm {
    pub fn span(&self) -> Span {
        match self {
            RawTerm::Int(_, s) | RawTerm::Str(_, s) | RawTerm::Apply(_, _, s) | RawTerm::Wildcard(s) => *s,
            RawTerm::Name(q) => q.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRule {
    pub heads: Vec<RawTerm>,
    pub body: RawBody,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawClause {
    pub body: RawBody,
    pub span: Span,
}

/// A rule body: `;`-separated disjuncts of `,`-separated literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBody {
    pub disjuncts: Vec<Vec<RawLiteral>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawLiteral {
    /// A positive atom: constructor pattern or nullary constant.
    Atom(RawTerm),
    /// `no { h | body }`
    NoComp(RawComprehension, Span),
    /// `no F(...)`
    NoAtom(RawTerm, Span),
    /// `e1 op e2`
    Compare(RawExpr, CompareOp, RawExpr, Span),
    /// `x is T`: membership in the program relation filtered by type.
    IsMember(String, RawTypeExpr, Span),
    /// `t : T`: pure type test.
    TypeTest(RawTerm, RawTypeExpr, Span),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawExpr {
    Term(RawTerm),
    Count(RawComprehension, Span),
    Binary(ArithOp, Box<RawExpr>, Box<RawExpr>, Span),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawComprehension {
    pub head: RawTerm,
    pub body: RawBody,
    pub span: Span,
}

/// `c is F(...)` in a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSymConst {
    pub name: String,
    pub value: RawTerm,
    pub span: Span,
}

/// `outs = T(args).` in a transform system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPipelineEq {
    pub lhs: Vec<String>,
    pub callee: String,
    pub args: Vec<String>,
    pub span: Span,
}

/// Resets every span, for structural comparisons that ignore positions.
pub fn strip_spans(unit: &mut SourceUnit) {
    for d in &mut unit.decls {
        d.span = Span::default();
        if let Some(of) = &mut d.of_target {
            of.span = Span::default();
        }
        for imp in &mut d.imports {
            imp.span = Span::default();
        }
        for sig in d.sig_inputs.iter_mut().chain(d.sig_outputs.iter_mut()) {
            sig.span = Span::default();
        }
        for item in &mut d.items {
            strip_item(item);
        }
    }
}

fn strip_item(item: &mut RawItem) {
    match item {
        RawItem::TypeDecl(td) => {
            td.span = Span::default();
            match &mut td.body {
                RawTypeDeclBody::Ctor { fields, .. } => {
                    for f in fields {
                        f.span = Span::default();
                        strip_type_expr(&mut f.ty);
                    }
                }
                RawTypeDeclBody::Union(te) => strip_type_expr(te),
            }
        }
        RawItem::Rule(r) => {
            r.span = Span::default();
            for h in &mut r.heads {
                strip_term(h);
            }
            strip_body(&mut r.body);
        }
        RawItem::Conforms(c) | RawItem::Requires(c) | RawItem::Ensures(c) => {
            c.span = Span::default();
            strip_body(&mut c.body);
        }
        RawItem::Fact(t) => strip_term(t),
        RawItem::SymConst(sc) => {
            sc.span = Span::default();
            strip_term(&mut sc.value);
        }
        RawItem::Pipeline(eq) => eq.span = Span::default(),
    }
}

fn strip_type_expr(te: &mut RawTypeExpr) {
    for atom in &mut te.atoms {
        match atom {
            RawTypeAtom::Name(q) => q.span = Span::default(),
            RawTypeAtom::ConstSet(cs, span) => {
                *span = Span::default();
                for c in cs {
                    if let RawConst::Name(q) = c {
                        q.span = Span::default();
                    }
                }
            }
        }
    }
}

fn strip_term(t: &mut RawTerm) {
    match t {
        RawTerm::Int(_, s) | RawTerm::Str(_, s) | RawTerm::Wildcard(s) => *s = Span::default(),
        RawTerm::Name(q) => q.span = Span::default(),
        RawTerm::Apply(q, args, s) => {
            q.span = Span::default();
            *s = Span::default();
            for a in args {
                strip_term(a);
            }
        }
    }
}

fn strip_body(b: &mut RawBody) {
    for conj in &mut b.disjuncts {
        for lit in conj {
            strip_literal(lit);
        }
    }
}

fn strip_literal(lit: &mut RawLiteral) {
    match lit {
        RawLiteral::Atom(t) => strip_term(t),
        RawLiteral::NoComp(c, s) => {
            *s = Span::default();
            strip_comp(c);
        }
        RawLiteral::NoAtom(t, s) => {
            *s = Span::default();
            strip_term(t);
        }
        RawLiteral::Compare(a, _, b, s) => {
            *s = Span::default();
            strip_expr(a);
            strip_expr(b);
        }
        RawLiteral::IsMember(_, te, s) => {
            *s = Span::default();
            strip_type_expr(te);
        }
        RawLiteral::TypeTest(t, te, s) => {
            *s = Span::default();
            strip_term(t);
            strip_type_expr(te);
        }
    }
}

fn strip_expr(e: &mut RawExpr) {
    match e {
        RawExpr::Term(t) => strip_term(t),
        RawExpr::Count(c, s) => {
            *s = Span::default();
            strip_comp(c);
        }
        RawExpr::Binary(_, a, b, s) => {
            *s = Span::default();
            strip_expr(a);
            strip_expr(b);
        }
    }
}

fn strip_comp(c: &mut RawComprehension) {
    c.span = Span::default();
    strip_term(&mut c.head);
    strip_body(&mut c.body);
}
