//! Bottom-up evaluation of compiled modules to a fixpoint of the implicit
//! unary program relation, stratum by stratum with semi-naive iteration
//! inside each stratum. Negation and aggregates only consult strata that
//! are already complete, which stratification guarantees.

use crate::frontend::ast::{ArithOp, CompareOp};
use crate::modsys::rule::{CompiledRule, Comprehension, Expr, Literal};
use crate::modsys::{Clause, CompiledDomain, CompiledModel, CompiledTransform, Strata};
use crate::symtab::SymbolTable;
use crate::types::{relabel_term, term_in_type, QualName, Term};
use num_bigint::BigInt;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_MAX_FACTS: usize = 1_000_000;

/// Default bound on derived-term depth: rules like `G(F(x)) :- G(x)`
/// otherwise grow terms without bound long before the fact cap trips, and
/// term operations recurse on depth. The bound keeps that recursion well
/// inside a 2 MiB thread stack.
pub const DEFAULT_MAX_TERM_DEPTH: usize = 1024;

fn term_depth(t: &Term) -> usize {
    let mut max = 0;
    let mut stack = vec![(t, 1usize)];
    while let Some((t, d)) = stack.pop() {
        max = max.max(d);
        if let Term::Apply(_, args) = t {
            for a in args {
                stack.push((a, d + 1));
            }
        }
    }
    max
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Abort when the store would exceed this many facts.
    pub max_facts: usize,
    /// Abort when a derived term exceeds this depth.
    pub max_term_depth: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { max_facts: DEFAULT_MAX_FACTS, max_term_depth: DEFAULT_MAX_TERM_DEPTH }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("fact limit of {0} exceeded; raise --max-facts if this is intended")]
    FactCap(usize),
    #[error("derived term exceeds the depth limit of {0}")]
    TermDepth(usize),
}

/// A program to evaluate: rules and strata with the table used for type
/// tests. Domains, models, and transforms all project into this view.
#[derive(Clone, Copy)]
pub struct Program<'a> {
    pub table: &'a SymbolTable,
    pub rules: &'a [CompiledRule],
    pub strata: &'a Strata,
}

impl CompiledDomain {
    pub fn program(&self) -> Program<'_> {
        Program { table: &self.table, rules: &self.rules, strata: &self.strata }
    }
}

impl CompiledModel {
    /// The model's logic program: its domain's rules over its own table.
    pub fn program(&self) -> Program<'_> {
        Program { table: &self.table, rules: &self.domain.rules, strata: &self.domain.strata }
    }
}

impl CompiledTransform {
    pub fn program(&self) -> Program<'_> {
        Program { table: &self.table, rules: &self.rules, strata: &self.strata }
    }
}

/// The extension of the program relation, indexed by outer symbol.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactStore {
    facts: BTreeSet<Term>,
    by_symbol: BTreeMap<QualName, BTreeSet<Term>>,
}

impl FactStore {
    pub fn new() -> Self {
        FactStore::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.facts.contains(t)
    }

    pub fn insert(&mut self, t: Term) -> bool {
        if let Some(sym) = t.outer_symbol() {
            let sym = sym.clone();
            if self.facts.insert(t.clone()) {
                self.by_symbol.entry(sym).or_default().insert(t);
                return true;
            }
            return false;
        }
        self.facts.insert(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.facts.iter()
    }

    pub fn with_symbol(&self, sym: &QualName) -> impl Iterator<Item = &Term> {
        self.by_symbol.get(sym).into_iter().flatten()
    }

    /// One fact per line in model syntax, in term order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for f in &self.facts {
            out.push_str(&f.to_string());
            out.push_str(".\n");
        }
        out
    }
}

pub type Binding = BTreeMap<String, Term>;

// ---------------------------------------------------------------------------
// Matching and expression evaluation
// ---------------------------------------------------------------------------

fn match_term(pattern: &Term, value: &Term, binding: &mut Binding) -> bool {
    match pattern {
        Term::Wildcard => true,
        Term::Var(v) => match binding.get(v) {
            Some(bound) => bound == value,
            None => {
                binding.insert(v.clone(), value.clone());
                true
            }
        },
        Term::Int(_) | Term::Str(_) | Term::Const(_) => pattern == value,
        Term::Apply(f, args) => match value {
            Term::Apply(g, vargs) => {
                f == g && args.len() == vargs.len() && {
                    args.iter().zip(vargs).all(|(p, v)| match_term(p, v, binding))
                }
            }
            _ => false,
        },
        Term::Accessor(..) => unreachable!("accessors are compiled to expressions"),
    }
}

/// Instantiates a pattern under a binding; `None` when a variable is unbound.
fn instantiate(pattern: &Term, binding: &Binding) -> Option<Term> {
    match pattern {
        Term::Var(v) => binding.get(v).cloned(),
        Term::Int(_) | Term::Str(_) | Term::Const(_) => Some(pattern.clone()),
        Term::Apply(f, args) => {
            let args = args.iter().map(|a| instantiate(a, binding)).collect::<Option<Vec<_>>>()?;
            Some(Term::Apply(f.clone(), args))
        }
        Term::Wildcard | Term::Accessor(..) => None,
    }
}

struct Session<'a> {
    program: Program<'a>,
}

impl<'a> Session<'a> {
    fn eval_expr(&self, e: &Expr, binding: &Binding, store: &FactStore) -> Option<Term> {
        match e {
            Expr::Term(t) => instantiate(t, binding),
            Expr::Accessor { var, ctor, index } => match binding.get(var) {
                Some(Term::Apply(f, args)) if f == ctor => args.get(*index).cloned(),
                _ => None,
            },
            Expr::Count(comp) => {
                let set = self.eval_comprehension(comp, binding, store);
                Some(Term::Int(BigInt::from(set.len())))
            }
            Expr::Arith(op, a, b) => {
                let a = self.eval_expr(a, binding, store)?;
                let b = self.eval_expr(b, binding, store)?;
                match (a, b) {
                    (Term::Int(x), Term::Int(y)) => Some(Term::Int(match op {
                        ArithOp::Add => x + y,
                        ArithOp::Sub => x - y,
                        ArithOp::Mul => x * y,
                    })),
                    _ => None,
                }
            }
        }
    }

    fn compare(&self, lhs: &Term, op: CompareOp, rhs: &Term) -> bool {
        match op {
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ne => lhs != rhs,
            CompareOp::Lt | CompareOp::Le | CompareOp::Gt | CompareOp::Ge => {
                let ord = match (lhs, rhs) {
                    (Term::Int(a), Term::Int(b)) => a.cmp(b),
                    (Term::Str(a), Term::Str(b)) => a.cmp(b),
                    _ => return false,
                };
                match op {
                    CompareOp::Lt => ord.is_lt(),
                    CompareOp::Le => ord.is_le(),
                    CompareOp::Gt => ord.is_gt(),
                    CompareOp::Ge => ord.is_ge(),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Evaluates one conjunct, calling `emit` for every satisfying binding.
    /// `delta` restricts the positive atom at literal index `delta_at` to
    /// the given set for semi-naive iteration.
    fn eval_conjunct(
        &self,
        literals: &[Literal],
        binding: Binding,
        store: &FactStore,
        delta: Option<(usize, &FactStore)>,
        emit: &mut dyn FnMut(Binding),
    ) {
        let Some((lit, rest)) = literals.split_first() else {
            emit(binding);
            return;
        };
        let next_delta = delta.map(|(i, d)| (i.wrapping_sub(1), d));
        match lit {
            Literal::Atom(pattern) => {
                let sym = pattern.outer_symbol().expect("atoms have outer symbols");
                let source = match delta {
                    Some((0, d)) => d,
                    _ => store,
                };
                for fact in source.with_symbol(sym) {
                    let mut b = binding.clone();
                    if match_term(pattern, fact, &mut b) {
                        self.eval_conjunct(rest, b, store, next_delta, emit);
                    }
                }
            }
            Literal::IsMember(t, ty) => match instantiate(t, &binding) {
                Some(ground) => {
                    if store.contains(&ground) && term_in_type(&ground, ty, self.program.table) {
                        self.eval_conjunct(rest, binding, store, next_delta, emit);
                    }
                }
                None => {
                    // Generator: scan the store restricted to the type's
                    // symbols when finite, else the whole store.
                    let scan_all = !ty.ints.is_empty() || !ty.strings.is_empty();
                    let mut seen: Box<dyn Iterator<Item = &Term>> = if scan_all {
                        Box::new(store.iter())
                    } else {
                        Box::new(
                            ty.consts
                                .iter()
                                .chain(ty.ctors.iter())
                                .flat_map(|sym| store.with_symbol(sym)),
                        )
                    };
                    let mut matched: Vec<&Term> = Vec::new();
                    for fact in &mut seen {
                        if term_in_type(fact, ty, self.program.table) {
                            matched.push(fact);
                        }
                    }
                    for fact in matched {
                        let mut b = binding.clone();
                        if match_term(t, fact, &mut b) {
                            self.eval_conjunct(rest, b, store, next_delta, emit);
                        }
                    }
                }
            },
            Literal::TypeTest(t, ty) => {
                if let Some(ground) = instantiate(t, &binding) {
                    if term_in_type(&ground, ty, self.program.table) {
                        self.eval_conjunct(rest, binding, store, next_delta, emit);
                    }
                }
            }
            Literal::NoComp(comp) => {
                if self.eval_comprehension(comp, &binding, store).is_empty() {
                    self.eval_conjunct(rest, binding, store, next_delta, emit);
                }
            }
            Literal::Compare(a, CompareOp::Eq, b) => {
                // Unification: evaluate the ground side, match the other.
                let va = self.eval_expr(a, &binding, store);
                match va {
                    Some(ground) => match b {
                        Expr::Term(pattern) => {
                            let mut bnd = binding.clone();
                            if match_term(pattern, &ground, &mut bnd) {
                                self.eval_conjunct(rest, bnd, store, next_delta, emit);
                            }
                        }
                        _ => {
                            if let Some(vb) = self.eval_expr(b, &binding, store) {
                                if ground == vb {
                                    self.eval_conjunct(rest, binding, store, next_delta, emit);
                                }
                            }
                        }
                    },
                    None => {
                        if let Some(vb) = self.eval_expr(b, &binding, store) {
                            if let Expr::Term(pattern) = a {
                                let mut bnd = binding.clone();
                                if match_term(pattern, &vb, &mut bnd) {
                                    self.eval_conjunct(rest, bnd, store, next_delta, emit);
                                }
                            }
                        }
                    }
                }
            }
            Literal::Compare(a, op, b) => {
                if let (Some(va), Some(vb)) = (
                    self.eval_expr(a, &binding, store),
                    self.eval_expr(b, &binding, store),
                ) {
                    if self.compare(&va, *op, &vb) {
                        self.eval_conjunct(rest, binding, store, next_delta, emit);
                    }
                }
            }
        }
    }

    /// The set of head instances over all satisfying extensions of the
    /// captured outer variables.
    fn eval_comprehension(&self, comp: &Comprehension, outer: &Binding, store: &FactStore) -> BTreeSet<Term> {
        let mut seed: Binding = BTreeMap::new();
        for v in &comp.captured {
            if let Some(t) = outer.get(v) {
                seed.insert(v.clone(), t.clone());
            }
        }
        let mut out = BTreeSet::new();
        for conj in &comp.disjuncts {
            self.eval_conjunct(conj, seed.clone(), store, None, &mut |b| {
                if let Some(t) = instantiate(&comp.head, &b) {
                    out.insert(t);
                }
            });
        }
        out
    }

    fn fire_rule(
        &self,
        rule: &CompiledRule,
        store: &FactStore,
        delta: Option<(usize, &FactStore)>,
        out: &mut Vec<Term>,
    ) {
        self.eval_conjunct(&rule.body, BTreeMap::new(), store, delta, &mut |binding| {
            let mut b = binding;
            for (var, rho) in &rule.rewrites {
                if let Some(value) = b.get(var) {
                    // A value outside the inferred prefix can only reach
                    // here through an untyped equality binding; such a
                    // binding cannot satisfy the head type, so skip it.
                    match relabel_term(rho, value) {
                        Ok(rewritten) => {
                            b.insert(var.clone(), rewritten);
                        }
                        Err(_) => return,
                    }
                }
            }
            if let Some(fact) = instantiate(&rule.head, &b) {
                out.push(fact);
            }
        });
    }
}

/// Indices of positive atoms in the rule body whose symbol lives in the
/// given stratum; these are the delta positions for semi-naive iteration.
fn delta_positions(rule: &CompiledRule, strata: &Strata, stratum: usize) -> Vec<usize> {
    rule.body
        .iter()
        .enumerate()
        .filter_map(|(i, lit)| match lit {
            Literal::Atom(t) => {
                let sym = t.outer_symbol().expect("atoms have outer symbols");
                (strata.stratum(sym) == stratum).then_some(i)
            }
            _ => None,
        })
        .collect()
}

/// A rule probes its own stratum through an `is`-membership generator when
/// some membership type mentions a same-stratum symbol (or scans the whole
/// store). Delta refinement cannot drive such literals, so the rule is
/// re-fired against the full store every round instead.
fn probes_stratum_via_membership(rule: &CompiledRule, strata: &Strata, stratum: usize) -> bool {
    rule.body.iter().any(|lit| match lit {
        Literal::IsMember(_, ty) => {
            !ty.ints.is_empty()
                || !ty.strings.is_empty()
                || ty.consts.iter().chain(ty.ctors.iter()).any(|s| strata.stratum(s) == stratum)
        }
        _ => false,
    })
}

/// Least fixpoint, stratum by stratum, semi-naive within each stratum.
pub fn evaluate(program: Program, edb: &BTreeSet<Term>, opts: &EvalOptions) -> Result<FactStore, EvalError> {
    let session = Session { program };
    let mut store = FactStore::new();
    for fact in edb {
        store.insert(fact.clone());
    }
    if store.len() > opts.max_facts {
        return Err(EvalError::FactCap(opts.max_facts));
    }

    let mut by_stratum: BTreeMap<usize, Vec<&CompiledRule>> = BTreeMap::new();
    for rule in program.rules {
        by_stratum.entry(program.strata.stratum(rule.head_symbol())).or_default().push(rule);
    }

    for (&stratum, rules) in &by_stratum {
        // First round: fire every rule against the full store.
        let mut delta_store = FactStore::new();
        let mut derived = Vec::new();
        for rule in rules {
            session.fire_rule(rule, &store, None, &mut derived);
        }
        for fact in derived.drain(..) {
            if term_depth(&fact) > opts.max_term_depth {
                return Err(EvalError::TermDepth(opts.max_term_depth));
            }
            if store.insert(fact.clone()) {
                if store.len() > opts.max_facts {
                    return Err(EvalError::FactCap(opts.max_facts));
                }
                delta_store.insert(fact);
            }
        }
        // Subsequent rounds: at least one same-stratum atom per rule is
        // bound to the previous round's new facts. Rules that reach this
        // stratum only through membership generators re-fire in full.
        while !delta_store.is_empty() {
            let mut new_delta = FactStore::new();
            for rule in rules {
                if probes_stratum_via_membership(rule, program.strata, stratum) {
                    session.fire_rule(rule, &store, None, &mut derived);
                    continue;
                }
                for pos in delta_positions(rule, program.strata, stratum) {
                    session.fire_rule(rule, &store, Some((pos, &delta_store)), &mut derived);
                }
            }
            for fact in derived.drain(..) {
                if term_depth(&fact) > opts.max_term_depth {
                    return Err(EvalError::TermDepth(opts.max_term_depth));
                }
                if !store.contains(&fact) {
                    store.insert(fact.clone());
                    if store.len() > opts.max_facts {
                        return Err(EvalError::FactCap(opts.max_facts));
                    }
                    new_delta.insert(fact);
                }
            }
            delta_store = new_delta;
        }
    }
    Ok(store)
}

/// Reference strategy: re-fire every rule of a stratum against the full
/// store until nothing changes. Used to cross-check the semi-naive engine.
pub fn evaluate_naive(program: Program, edb: &BTreeSet<Term>, opts: &EvalOptions) -> Result<FactStore, EvalError> {
    let session = Session { program };
    let mut store = FactStore::new();
    for fact in edb {
        store.insert(fact.clone());
    }
    if store.len() > opts.max_facts {
        return Err(EvalError::FactCap(opts.max_facts));
    }

    let mut by_stratum: BTreeMap<usize, Vec<&CompiledRule>> = BTreeMap::new();
    for rule in program.rules {
        by_stratum.entry(program.strata.stratum(rule.head_symbol())).or_default().push(rule);
    }
    for rules in by_stratum.values() {
        loop {
            let mut derived = Vec::new();
            for rule in rules {
                session.fire_rule(rule, &store, None, &mut derived);
            }
            let before = store.len();
            for fact in derived {
                if term_depth(&fact) > opts.max_term_depth {
                    return Err(EvalError::TermDepth(opts.max_term_depth));
                }
                store.insert(fact);
            }
            if store.len() > opts.max_facts {
                return Err(EvalError::FactCap(opts.max_facts));
            }
            if store.len() == before {
                break;
            }
        }
    }
    Ok(store)
}

/// Evaluates a standalone comprehension against a store, under an outer
/// binding whose captured variables seed the body.
pub fn eval_comprehension(
    program: Program,
    comp: &Comprehension,
    outer: &Binding,
    store: &FactStore,
) -> BTreeSet<Term> {
    Session { program }.eval_comprehension(comp, outer, store)
}

// ---------------------------------------------------------------------------
// Conformance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ClauseReport {
    pub id: String,
    pub origin: String,
    pub line: u32,
    pub col: u32,
    pub holds: bool,
    /// Term-order-least element of the falsified `no { ... }` set.
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub model: String,
    pub domain: String,
    pub conforms: bool,
    pub clauses: Vec<ClauseReport>,
}

/// Evaluates the model and reports `D.conforms` clause by clause.
pub fn check_conforms(model: &CompiledModel, opts: &EvalOptions) -> Result<ConformanceReport, EvalError> {
    let program = model.program();
    let store = evaluate(program, &model.facts, opts)?;
    Ok(report_clauses(
        program,
        &store,
        &model.name,
        &model.domain.name,
        &model.domain.conforms_goal,
        &model.domain.clauses,
    ))
}

pub fn report_clauses(
    program: Program,
    store: &FactStore,
    model: &str,
    domain: &str,
    goal: &QualName,
    clauses: &[Clause],
) -> ConformanceReport {
    let session = Session { program };
    let conforms = store.contains(&Term::Const(goal.clone()));
    let mut reports = Vec::new();
    for clause in clauses {
        let holds = store.contains(&Term::Const(clause.constant.clone()));
        let witness = if holds {
            None
        } else {
            clause.witness_comp.as_ref().and_then(|comp| {
                session
                    .eval_comprehension(comp, &BTreeMap::new(), store)
                    .into_iter()
                    .next()
                    .map(|t| t.to_string())
            })
        };
        reports.push(ClauseReport {
            id: clause.id.clone(),
            origin: clause.origin.to_string(),
            line: clause.span.line,
            col: clause.span.col,
            holds,
            witness,
        });
    }
    ConformanceReport { model: model.to_string(), domain: domain.to_string(), conforms, clauses: reports }
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

/// All bindings of the goal's variables in the model's fixpoint, sorted by
/// the term order of the binding tuple.
pub fn query(
    model: &CompiledModel,
    goal: &[Vec<Literal>],
    goal_vars: &[String],
    opts: &EvalOptions,
) -> Result<Vec<Binding>, EvalError> {
    let program = model.program();
    let store = evaluate(program, &model.facts, opts)?;
    Ok(query_store(program, &store, goal, goal_vars))
}

pub fn query_store(
    program: Program,
    store: &FactStore,
    goal: &[Vec<Literal>],
    goal_vars: &[String],
) -> Vec<Binding> {
    let session = Session { program };
    let mut tuples: BTreeSet<Vec<Term>> = BTreeSet::new();
    for conj in goal {
        session.eval_conjunct(conj, BTreeMap::new(), store, None, &mut |b| {
            let tuple: Vec<Term> =
                goal_vars.iter().map(|v| b.get(v).cloned().unwrap_or(Term::Wildcard)).collect();
            tuples.insert(tuple);
        });
    }
    tuples
        .into_iter()
        .map(|tuple| goal_vars.iter().cloned().zip(tuple).collect::<Binding>())
        .collect()
}
