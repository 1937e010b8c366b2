//! Applying transforms to models and executing transform systems.
//!
//! A transform application composes the renamed input models with the
//! transform's program, evaluates to a fixpoint, checks `requires`,
//! extracts one output model per output label (new-kind facts only,
//! un-renamed), and checks `ensures`.

use crate::engine::{self, ClauseReport, EvalError, EvalOptions, FactStore};
use crate::modsys::{
    ArgRef, Callee, CompiledDomain, CompiledModel, CompiledSystem, CompiledTransform,
};
use crate::types::{relabel_term, term_in_type, RelabelingSpec, Term, TypeExpr};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("transform `{name}` takes {expected} models, got {given}")]
    Arity { name: String, expected: usize, given: usize },
    #[error("model `{model}` is over `{domain}`, but `{name}` expects `{expected}`")]
    DomainMismatch { name: String, model: String, domain: String, expected: String },
    #[error("requires violation in `{name}`: {failing} unprovable")]
    Requires { name: String, failing: String, clauses: Vec<ClauseReport> },
    #[error("ensures violation in `{name}`: {failing} unprovable")]
    Ensures { name: String, failing: String, clauses: Vec<ClauseReport>, outputs: Vec<CompiledModel> },
    #[error("output `{label}` of `{name}` contains ill-typed fact `{fact}`")]
    IllTypedOutput { name: String, label: String, fact: String },
    #[error("pipeline step `{step}` failed: {source}")]
    Step { step: String, #[source] source: Box<TransformError> },
    #[error("pipeline input `{0}` is not bound")]
    UnboundInput(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct TransformApplication {
    pub transform: String,
    pub requires_held: bool,
    pub ensures_held: bool,
    /// One model per output label, in signature order.
    pub outputs: Vec<CompiledModel>,
    pub store: FactStore,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ContractPolicy {
    /// Emit outputs even when `ensures` fails.
    pub force: bool,
}

fn check_input_domain(
    t_name: &str,
    model: &CompiledModel,
    expected: &CompiledDomain,
) -> Result<(), TransformError> {
    if model.domain.covers(&expected.name) {
        Ok(())
    } else {
        Err(TransformError::DomainMismatch {
            name: t_name.to_string(),
            model: model.name.clone(),
            domain: model.domain.name.clone(),
            expected: expected.name.clone(),
        })
    }
}

/// Facts of a model restricted to constructors the expected domain declares.
/// This projects a model of an extending domain down to the sub-domain.
fn project_facts(model: &CompiledModel, expected: &CompiledDomain) -> BTreeSet<Term> {
    if model.domain.name == expected.name {
        return model.facts.clone();
    }
    model
        .facts
        .iter()
        .filter(|f| f.outer_symbol().is_some_and(|sym| expected.table.contains(sym)))
        .cloned()
        .collect()
}

/// Applies a transform: renamed input facts become the EDB, the composed
/// program runs to a fixpoint, contracts are checked, outputs extracted.
pub fn apply_transform(
    t: &CompiledTransform,
    models: &[&CompiledModel],
    opts: &EvalOptions,
    policy: ContractPolicy,
) -> Result<TransformApplication, TransformError> {
    if models.len() != t.inputs.len() {
        return Err(TransformError::Arity {
            name: t.name.clone(),
            expected: t.inputs.len(),
            given: models.len(),
        });
    }
    let mut edb: BTreeSet<Term> = BTreeSet::new();
    for (model, (label, domain)) in models.iter().zip(&t.inputs) {
        check_input_domain(&t.name, model, domain)?;
        let rho = RelabelingSpec { from: Vec::new(), to: vec![label.clone()] };
        for fact in project_facts(model, domain) {
            edb.insert(relabel_term(&rho, &fact).expect("model facts are ground"));
        }
    }

    let program = t.program();
    let store = engine::evaluate(program, &edb, opts)?;

    let requires_held = store.contains(&Term::Const(t.requires_goal.clone()));
    if !requires_held {
        let report =
            engine::report_clauses(program, &store, "", &t.name, &t.requires_goal, &t.requires_clauses);
        let failing: Vec<String> =
            report.clauses.iter().filter(|c| !c.holds).map(|c| c.id.clone()).collect();
        return Err(TransformError::Requires {
            name: t.name.clone(),
            failing: failing.join(", "),
            clauses: report.clauses,
        });
    }

    let mut outputs = Vec::new();
    for (label, domain) in &t.outputs {
        outputs.push(extract_output(&t.name, &store, label, domain)?);
    }

    let ensures_held = store.contains(&Term::Const(t.ensures_goal.clone()));
    if !ensures_held && !policy.force {
        let report =
            engine::report_clauses(program, &store, "", &t.name, &t.ensures_goal, &t.ensures_clauses);
        let failing: Vec<String> =
            report.clauses.iter().filter(|c| !c.holds).map(|c| c.id.clone()).collect();
        return Err(TransformError::Ensures {
            name: t.name.clone(),
            failing: failing.join(", "),
            clauses: report.clauses,
            outputs,
        });
    }

    Ok(TransformApplication { transform: t.name.clone(), requires_held, ensures_held, outputs, store })
}

/// Extracts one output model: facts whose outer constructor carries the
/// label prefix and is new-kind in the output domain, un-renamed back into
/// the output domain's namespace and re-typechecked there.
pub fn extract_output(
    t_name: &str,
    store: &FactStore,
    label: &str,
    out_domain: &Arc<CompiledDomain>,
) -> Result<CompiledModel, TransformError> {
    let prefix = vec![label.to_string()];
    let rho = RelabelingSpec { from: prefix.clone(), to: Vec::new() };
    let mut facts: BTreeSet<Term> = BTreeSet::new();
    for fact in store.iter() {
        let Term::Apply(name, _) = fact else { continue };
        if !name.starts_with(&prefix) {
            continue;
        }
        // kind is judged on the un-renamed symbol in the output domain. A
        // nested constructor outside the label's namespace means the fact
        // cannot live in the output domain at all.
        let stripped = match relabel_term(&rho, fact) {
            Ok(t) => t,
            Err(_) => {
                return Err(TransformError::IllTypedOutput {
                    name: t_name.to_string(),
                    label: label.to_string(),
                    fact: fact.to_string(),
                })
            }
        };
        let sym = stripped.outer_symbol().expect("applications have symbols");
        match out_domain.table.get(sym) {
            Some(info) if info.kind == crate::symtab::SymbolKind::New => {}
            _ => continue,
        }
        if !term_in_type(&stripped, &TypeExpr::ctor(sym.clone()), &out_domain.table) {
            return Err(TransformError::IllTypedOutput {
                name: t_name.to_string(),
                label: label.to_string(),
                fact: stripped.to_string(),
            });
        }
        facts.insert(stripped);
    }
    Ok(CompiledModel {
        name: label.to_string(),
        domain: Arc::clone(out_domain),
        table: out_domain.table.clone(),
        facts,
        symconsts: BTreeMap::new(),
    })
}

#[derive(Debug, Clone)]
pub struct SystemRun {
    /// Output label to produced model, in signature order.
    pub outputs: Vec<(String, CompiledModel)>,
    /// Intermediate pipeline variables in execution order, outputs excluded.
    pub intermediates: Vec<(String, CompiledModel)>,
}

/// Runs a transform system: steps execute in dependency order, renaming and
/// un-renaming at each boundary; any contract failure aborts the pipeline.
pub fn run_system(
    s: &CompiledSystem,
    inputs: &BTreeMap<String, Arc<CompiledModel>>,
    opts: &EvalOptions,
    policy: ContractPolicy,
) -> Result<SystemRun, TransformError> {
    let mut bound: BTreeMap<String, Arc<CompiledModel>> = BTreeMap::new();
    for (label, domain) in &s.inputs {
        let model = inputs
            .get(label)
            .ok_or_else(|| TransformError::UnboundInput(label.clone()))?;
        check_input_domain(&s.name, model, domain)?;
        bound.insert(label.clone(), Arc::clone(model));
    }

    let mut intermediates = Vec::new();
    for step in &s.steps {
        let mut args: Vec<Arc<CompiledModel>> = Vec::new();
        for a in &step.args {
            let model = match a {
                ArgRef::Input(l) | ArgRef::Var(l) => Arc::clone(
                    bound.get(l).ok_or_else(|| TransformError::UnboundInput(l.clone()))?,
                ),
                ArgRef::Model(m) => Arc::clone(m),
            };
            args.push(model);
        }
        let step_name = format!("{} = {}(...)", step.lhs.join(", "), step.callee.name());
        let produced: Vec<CompiledModel> = match &step.callee {
            Callee::Transform(t) => {
                let refs: Vec<&CompiledModel> = args.iter().map(|a| a.as_ref()).collect();
                apply_transform(t, &refs, opts, policy)
                    .map_err(|e| TransformError::Step { step: step_name.clone(), source: Box::new(e) })?
                    .outputs
            }
            Callee::System(sub) => {
                let sub_inputs: BTreeMap<String, Arc<CompiledModel>> = sub
                    .inputs
                    .iter()
                    .zip(args.iter())
                    .map(|((l, _), m)| (l.clone(), Arc::clone(m)))
                    .collect();
                run_system(sub, &sub_inputs, opts, policy)
                    .map_err(|e| TransformError::Step { step: step_name.clone(), source: Box::new(e) })?
                    .outputs
                    .into_iter()
                    .map(|(_, m)| m)
                    .collect()
            }
        };
        for (var, mut model) in step.lhs.iter().zip(produced) {
            model.name = var.clone();
            let model = Arc::new(model);
            bound.insert(var.clone(), Arc::clone(&model));
            if !s.outputs.iter().any(|(l, _)| l == var) {
                intermediates.push((var.clone(), (*model).clone()));
            }
        }
    }

    let mut outputs = Vec::new();
    for (label, _) in &s.outputs {
        let model = bound
            .get(label)
            .ok_or_else(|| TransformError::UnboundInput(label.clone()))?;
        outputs.push((label.clone(), (**model).clone()));
    }
    Ok(SystemRun { outputs, intermediates })
}
