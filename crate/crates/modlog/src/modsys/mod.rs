//! Elaboration: raw ASTs to compiled modules with symbol tables, resolved
//! and stratified rules, and contract machinery.

pub mod elaborate;
pub mod resolve;
pub mod rule;
pub mod stratify;

pub use elaborate::elaborate_program;
pub use rule::{CompiledRule, Comprehension, Expr, Literal};
pub use stratify::{stratify, NegativeCycle, Strata};

use crate::diag::Span;
use crate::symtab::SymbolTable;
use crate::types::{QualName, Term};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

/// Why a conformance or contract clause exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseOrigin {
    /// Written in the module body.
    Explicit,
    /// Functional-dependency clause generated for a `fun` constructor.
    Fun,
    /// The conjunction over imported `conforms` constants added by `extends`.
    Extends,
}

impl std::fmt::Display for ClauseOrigin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClauseOrigin::Explicit => write!(f, "explicit"),
            ClauseOrigin::Fun => write!(f, "fun"),
            ClauseOrigin::Extends => write!(f, "extends"),
        }
    }
}

/// One clause of a `conforms`, `requires`, or `ensures` conjunction. The
/// per-clause constant is hidden from the symbol table; only the aggregate
/// goal constant is user-visible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    /// 1-based position within the declaring module.
    pub index: usize,
    /// Stable identifier, e.g. `NonDetFSM#2`.
    pub id: String,
    pub constant: QualName,
    pub span: Span,
    pub path: String,
    pub origin: ClauseOrigin,
    /// When the clause is a single `no { ... }`, the comprehension whose
    /// least element serves as a falsifying witness.
    pub witness_comp: Option<Comprehension>,
}

#[derive(Debug, Clone)]
pub struct CompiledDomain {
    pub name: String,
    pub table: SymbolTable,
    pub rules: Vec<CompiledRule>,
    /// The derived constant `D.conforms`.
    pub conforms_goal: QualName,
    /// Own clauses followed by inherited ones, deduplicated by constant.
    pub clauses: Vec<Clause>,
    /// Per-clause constants and other internal symbols kept out of the table.
    pub hidden: BTreeSet<QualName>,
    pub strata: Strata,
    /// Transitively imported domains with their renaming prefixes,
    /// including `(empty, self)`.
    pub closure: BTreeSet<(Vec<String>, String)>,
}

impl CompiledDomain {
    /// Does this domain equal or transitively extend `name` without renaming?
    pub fn covers(&self, name: &str) -> bool {
        self.closure.iter().any(|(p, n)| p.is_empty() && n == name)
    }
}

#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub name: String,
    pub domain: Arc<CompiledDomain>,
    pub table: SymbolTable,
    pub facts: BTreeSet<Term>,
    /// Fully-qualified symbolic constant definitions.
    pub symconsts: BTreeMap<QualName, Term>,
}

#[derive(Debug, Clone)]
pub struct CompiledTransform {
    pub name: String,
    pub inputs: Vec<(String, Arc<CompiledDomain>)>,
    pub outputs: Vec<(String, Arc<CompiledDomain>)>,
    pub table: SymbolTable,
    pub rules: Vec<CompiledRule>,
    pub requires_goal: QualName,
    pub ensures_goal: QualName,
    pub requires_clauses: Vec<Clause>,
    pub ensures_clauses: Vec<Clause>,
    pub hidden: BTreeSet<QualName>,
    pub strata: Strata,
}

/// How a pipeline equation argument is supplied.
#[derive(Debug, Clone)]
pub enum ArgRef {
    /// A system input label.
    Input(String),
    /// A variable bound by an earlier equation.
    Var(String),
    /// A model from the global environment.
    Model(Arc<CompiledModel>),
}

#[derive(Debug, Clone)]
pub enum Callee {
    Transform(Arc<CompiledTransform>),
    System(Arc<CompiledSystem>),
}

impl Callee {
    pub fn name(&self) -> &str {
        match self {
            Callee::Transform(t) => &t.name,
            Callee::System(s) => &s.name,
        }
    }

    pub fn inputs(&self) -> &[(String, Arc<CompiledDomain>)] {
        match self {
            Callee::Transform(t) => &t.inputs,
            Callee::System(s) => &s.inputs,
        }
    }

    pub fn outputs(&self) -> &[(String, Arc<CompiledDomain>)] {
        match self {
            Callee::Transform(t) => &t.outputs,
            Callee::System(s) => &s.outputs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineStep {
    pub lhs: Vec<String>,
    pub callee: Callee,
    pub args: Vec<ArgRef>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct CompiledSystem {
    pub name: String,
    pub inputs: Vec<(String, Arc<CompiledDomain>)>,
    pub outputs: Vec<(String, Arc<CompiledDomain>)>,
    /// Equations in dependency order.
    pub steps: Vec<PipelineStep>,
}

/// All compiled modules, by kind-specific namespaces.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub domains: BTreeMap<String, Arc<CompiledDomain>>,
    pub models: BTreeMap<String, Arc<CompiledModel>>,
    pub transforms: BTreeMap<String, Arc<CompiledTransform>>,
    pub systems: BTreeMap<String, Arc<CompiledSystem>>,
}
