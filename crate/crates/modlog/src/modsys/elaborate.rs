//! Turns parsed source units into compiled modules.
//!
//! Modules are elaborated in dependency order. A domain or transform is
//! built by composing its (renamed) imports, declaring its own types,
//! resolving its rules, generating the conformance / contract machinery,
//! and stratifying the result.

use super::resolve::{intro_head_constants, resolve_clause, resolve_rule, ResolveCtx};
use super::rule::{CompiledRule, Comprehension, Expr, Literal, Provenance};
use super::stratify::stratify;
use super::{
    ArgRef, Callee, Clause, ClauseOrigin, CompiledDomain, CompiledModel, CompiledSystem,
    CompiledTransform, Env, PipelineStep,
};
use crate::diag::{codes, Diag, Span};
use crate::frontend::ast::*;
use crate::symtab::{ComposeAcc, CtorSig, Denotation, Field, LookupResult, SymbolInfo, SymbolKind, SymbolTable};
use crate::types::{
    normalize, relabel_term, relabel_type, term_in_type, Builtin, ConstAtom, QualName,
    RelabelingSpec, Term, TypeCtx, TypeExpr, TypeRef,
};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

const RESERVED_TYPE_NAMES: &[&str] = &["Integer", "String", "Boolean", "TRUE", "FALSE"];

/// Elaborates every module of every unit, in dependency order. Modules whose
/// dependencies failed are skipped without further diagnostics.
pub fn elaborate_program(units: &[crate::frontend::SourceUnit]) -> Result<Env, Vec<Diag>> {
    let mut diags: Vec<Diag> = Vec::new();
    let mut env = Env::default();

    // Index declarations and detect cross-unit duplicates per kind class.
    let mut decls: Vec<(&str, &RawModuleDecl)> = Vec::new();
    let mut seen: BTreeSet<(u8, String)> = BTreeSet::new();
    for unit in units {
        for d in &unit.decls {
            let class = match d.kind {
                ModuleKind::Domain => 0u8,
                ModuleKind::Model => 1,
                // Transforms and systems share the call namespace.
                ModuleKind::Transform | ModuleKind::TransformSystem => 2,
            };
            if !seen.insert((class, d.name.clone())) {
                diags.push(Diag::error(
                    &unit.path,
                    d.span,
                    codes::PARSE_DUPLICATE_MODULE,
                    format!("duplicate {} name `{}`", d.kind, d.name),
                ));
                continue;
            }
            decls.push((&unit.path, d));
        }
    }

    let order = match dependency_order(&decls) {
        Ok(o) => o,
        Err(mut d) => {
            diags.append(&mut d);
            return Err(diags);
        }
    };

    let mut failed: BTreeSet<(u8, String)> = BTreeSet::new();
    for idx in order {
        let (path, decl) = decls[idx];
        let class = class_of(decl.kind);
        if deps_of(decl).iter().any(|(c, n)| failed.contains(&(*c, n.clone()))) {
            failed.insert((class, decl.name.clone()));
            continue;
        }
        let result = match decl.kind {
            ModuleKind::Domain => elaborate_domain(path, decl, &env).map(|d| {
                env.domains.insert(decl.name.clone(), Arc::new(d));
            }),
            ModuleKind::Model => elaborate_model(path, decl, &env).map(|m| {
                env.models.insert(decl.name.clone(), Arc::new(m));
            }),
            ModuleKind::Transform => elaborate_transform(path, decl, &env).map(|t| {
                env.transforms.insert(decl.name.clone(), Arc::new(t));
            }),
            ModuleKind::TransformSystem => elaborate_system(path, decl, &env).map(|s| {
                env.systems.insert(decl.name.clone(), Arc::new(s));
            }),
        };
        if let Err(mut d) = result {
            diags.append(&mut d);
            failed.insert((class, decl.name.clone()));
        }
    }

    if diags.is_empty() {
        Ok(env)
    } else {
        Err(diags)
    }
}

fn class_of(kind: ModuleKind) -> u8 {
    match kind {
        ModuleKind::Domain => 0,
        ModuleKind::Model => 1,
        ModuleKind::Transform | ModuleKind::TransformSystem => 2,
    }
}

fn deps_of(decl: &RawModuleDecl) -> Vec<(u8, String)> {
    let mut deps = Vec::new();
    match decl.kind {
        ModuleKind::Domain => {
            for imp in &decl.imports {
                deps.push((0, imp.target.clone()));
            }
        }
        ModuleKind::Model => {
            if let Some(of) = &decl.of_target {
                deps.push((0, of.target.clone()));
            }
            for imp in &decl.imports {
                deps.push((1, imp.target.clone()));
            }
        }
        ModuleKind::Transform => {
            for sig in decl.sig_inputs.iter().chain(&decl.sig_outputs) {
                deps.push((0, sig.domain.clone()));
            }
        }
        ModuleKind::TransformSystem => {
            for sig in decl.sig_inputs.iter().chain(&decl.sig_outputs) {
                deps.push((0, sig.domain.clone()));
            }
            for item in &decl.items {
                if let RawItem::Pipeline(eq) = item {
                    deps.push((2, eq.callee.clone()));
                }
            }
        }
    }
    deps
}

/// Stable topological order of declarations by (class, name) dependencies.
fn dependency_order(decls: &[(&str, &RawModuleDecl)]) -> Result<Vec<usize>, Vec<Diag>> {
    let mut index: BTreeMap<(u8, String), usize> = BTreeMap::new();
    for (i, (_, d)) in decls.iter().enumerate() {
        index.insert((class_of(d.kind), d.name.clone()), i);
    }
    let mut indegree = vec![0usize; decls.len()];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); decls.len()];
    for (i, (_, d)) in decls.iter().enumerate() {
        for dep in deps_of(d) {
            if let Some(&j) = index.get(&dep) {
                edges[j].push(i);
                indegree[i] += 1;
            }
            // Unknown dependencies surface as E302 during elaboration.
        }
    }
    let mut queue: Vec<usize> = (0..decls.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(decls.len());
    let mut qi = 0;
    while qi < queue.len() {
        let n = queue[qi];
        qi += 1;
        order.push(n);
        for &m in &edges[n] {
            indegree[m] -= 1;
            if indegree[m] == 0 {
                queue.push(m);
            }
        }
        queue[qi..].sort_unstable();
    }
    if order.len() != decls.len() {
        let cyclic: Vec<String> = (0..decls.len())
            .filter(|i| !order.contains(i))
            .map(|i| format!("`{}`", decls[i].1.name))
            .collect();
        let (path, d) = decls[(0..decls.len()).find(|i| !order.contains(i)).unwrap()];
        return Err(vec![Diag::error(
            path,
            d.span,
            codes::ELAB_UNKNOWN_MODULE,
            format!("cyclic module dependencies among {}", cyclic.join(", ")),
        )]);
    }
    Ok(order)
}

// ---------------------------------------------------------------------------
// Rule renaming under an import prefix
// ---------------------------------------------------------------------------

/// Renames every symbol of an imported rule: constructors and derived
/// constants gain the prefix; variables and new-kind constants keep their
/// names. `origin` is the pre-rename table deciding symbol kinds.
fn rename_rules(prefix: &str, rules: &[CompiledRule], origin: &SymbolTable) -> Vec<CompiledRule> {
    let rho = RelabelingSpec { from: Vec::new(), to: vec![prefix.to_string()] };
    rules
        .iter()
        .map(|r| CompiledRule {
            head: rename_term(prefix, &r.head, origin),
            body: r.body.iter().map(|l| rename_literal(prefix, l, origin, &rho)).collect(),
            rewrites: r
                .rewrites
                .iter()
                .map(|(v, spec)| {
                    let mut from = vec![prefix.to_string()];
                    from.extend(spec.from.iter().cloned());
                    let mut to = vec![prefix.to_string()];
                    to.extend(spec.to.iter().cloned());
                    (v.clone(), RelabelingSpec { from, to })
                })
                .collect(),
            provenance: Provenance {
                module: r.provenance.module.clone(),
                label: format!("{}::{}", prefix, r.provenance.label),
            },
        })
        .collect()
}

fn rename_term(prefix: &str, t: &Term, origin: &SymbolTable) -> Term {
    match t {
        Term::Apply(f, args) => Term::Apply(
            f.prefixed(prefix),
            args.iter().map(|a| rename_term(prefix, a, origin)).collect(),
        ),
        Term::Const(c) => {
            if c.is_plain() && (c.base == "TRUE" || c.base == "FALSE") {
                return t.clone();
            }
            match origin.get(c) {
                Some(info) if info.kind == SymbolKind::New => t.clone(),
                // Derived constants, including hidden per-clause ones.
                _ => Term::Const(c.prefixed(prefix)),
            }
        }
        other => other.clone(),
    }
}

fn rename_literal(prefix: &str, lit: &Literal, origin: &SymbolTable, rho: &RelabelingSpec) -> Literal {
    match lit {
        Literal::Atom(t) => Literal::Atom(rename_term(prefix, t, origin)),
        Literal::NoComp(c) => Literal::NoComp(rename_comp(prefix, c, origin, rho)),
        Literal::Compare(a, op, b) => Literal::Compare(
            rename_expr(prefix, a, origin, rho),
            *op,
            rename_expr(prefix, b, origin, rho),
        ),
        Literal::IsMember(t, ty) => Literal::IsMember(
            rename_term(prefix, t, origin),
            relabel_type(rho, ty).expect("eps prefix always applies"),
        ),
        Literal::TypeTest(t, ty) => Literal::TypeTest(
            rename_term(prefix, t, origin),
            relabel_type(rho, ty).expect("eps prefix always applies"),
        ),
    }
}

fn rename_expr(prefix: &str, e: &Expr, origin: &SymbolTable, rho: &RelabelingSpec) -> Expr {
    match e {
        Expr::Term(t) => Expr::Term(rename_term(prefix, t, origin)),
        Expr::Accessor { var, ctor, index } => Expr::Accessor {
            var: var.clone(),
            ctor: ctor.prefixed(prefix),
            index: *index,
        },
        Expr::Count(c) => Expr::Count(rename_comp(prefix, c, origin, rho)),
        Expr::Arith(op, a, b) => Expr::Arith(
            *op,
            Box::new(rename_expr(prefix, a, origin, rho)),
            Box::new(rename_expr(prefix, b, origin, rho)),
        ),
    }
}

fn rename_comp(prefix: &str, c: &Comprehension, origin: &SymbolTable, rho: &RelabelingSpec) -> Comprehension {
    Comprehension {
        head: rename_term(prefix, &c.head, origin),
        disjuncts: c
            .disjuncts
            .iter()
            .map(|conj| conj.iter().map(|l| rename_literal(prefix, l, origin, rho)).collect())
            .collect(),
        captured: c.captured.clone(),
    }
}

// ---------------------------------------------------------------------------
// Own type declarations
// ---------------------------------------------------------------------------

struct OwnTypes {
    /// `fun` constructors needing implicit functional-dependency clauses.
    fun_ctors: Vec<(QualName, CtorSig)>,
}

struct DeclCtx<'a> {
    resolution: &'a SymbolTable,
    own_unions: &'a BTreeMap<QualName, TypeRef>,
}

impl TypeCtx for DeclCtx<'_> {
    fn symbol_shape(&self, name: &QualName) -> Option<(SymbolKind, usize)> {
        self.resolution.get(name).map(|i| (i.kind, i.arity))
    }

    fn union_body(&self, name: &QualName) -> Option<TypeRef> {
        if let Some(tr) = self.own_unions.get(name) {
            return Some(tr.clone());
        }
        match self.resolution.get(name).map(|i| &i.denotation) {
            Some(Denotation::Type(te)) => Some(TypeRef::Canonical(te.clone())),
            _ => None,
        }
    }
}

fn declare_own_types(
    path: &str,
    items: &[RawItem],
    working: &mut SymbolTable,
    diags: &mut Vec<Diag>,
) -> OwnTypes {
    let mut own: Vec<&RawTypeDecl> = Vec::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    for item in items {
        if let RawItem::TypeDecl(td) = item {
            if RESERVED_TYPE_NAMES.contains(&td.name.as_str()) {
                diags.push(Diag::error(
                    path,
                    td.span,
                    codes::TYPE_RESERVED,
                    format!("`{}` is a reserved built-in name", td.name),
                ));
                continue;
            }
            if !names.insert(td.name.clone()) {
                diags.push(Diag::error(
                    path,
                    td.span,
                    codes::PARSE_DUPLICATE_MODULE,
                    format!("type `{}` is declared twice in this module", td.name),
                ));
                continue;
            }
            own.push(td);
        }
    }

    // Resolution table: imports plus placeholders for own declarations.
    let mut resolution = working.clone();
    for td in &own {
        let (kind, arity) = match &td.body {
            RawTypeDeclBody::Union(_) => (SymbolKind::Union, 0),
            RawTypeDeclBody::Ctor { fields, .. } => {
                let kind = match td.marker {
                    CtorMarker::Derived => SymbolKind::Derived,
                    CtorMarker::New | CtorMarker::Fun => SymbolKind::New,
                };
                (kind, fields.len())
            }
        };
        resolution.insert_unchecked(
            QualName::plain(td.name.clone()),
            SymbolInfo { kind, arity, denotation: Denotation::Type(TypeExpr::empty()), sig: None },
        );
    }

    // Convert every surface type expression, auto-declaring constants that
    // constant sets introduce (and TRUE/FALSE when Boolean is referenced).
    let mut pending_consts: BTreeSet<QualName> = BTreeSet::new();
    let mut converted: BTreeMap<QualName, DeclBody> = BTreeMap::new();
    enum DeclBody {
        Union(TypeRef),
        Ctor { fields: Vec<(Option<String>, TypeRef, Span)>, fun_split: Option<usize> },
    }
    for td in &own {
        let name = QualName::plain(td.name.clone());
        match &td.body {
            RawTypeDeclBody::Union(te) => {
                match convert_type(path, te, &mut resolution, &mut pending_consts, diags) {
                    Some(tr) => {
                        converted.insert(name, DeclBody::Union(tr));
                    }
                    None => continue,
                }
            }
            RawTypeDeclBody::Ctor { fields, fun_split } => {
                let mut fs = Vec::new();
                let mut ok = true;
                for f in fields {
                    match convert_type(path, &f.ty, &mut resolution, &mut pending_consts, diags) {
                        Some(tr) => fs.push((f.name.clone(), tr, f.span)),
                        None => ok = false,
                    }
                }
                if ok {
                    converted.insert(name, DeclBody::Ctor { fields: fs, fun_split: *fun_split });
                }
            }
        }
    }

    let own_unions: BTreeMap<QualName, TypeRef> = converted
        .iter()
        .filter_map(|(n, b)| match b {
            DeclBody::Union(tr) => Some((n.clone(), tr.clone())),
            _ => None,
        })
        .collect();

    let ctx = DeclCtx { resolution: &resolution, own_unions: &own_unions };
    let mut finals: Vec<(QualName, SymbolInfo)> = Vec::new();
    let mut fun_ctors = Vec::new();

    for c in &pending_consts {
        finals.push((
            c.clone(),
            SymbolInfo {
                kind: SymbolKind::New,
                arity: 0,
                denotation: Denotation::Type(TypeExpr::constant(c.clone())),
                sig: None,
            },
        ));
    }

    for td in &own {
        let name = QualName::plain(td.name.clone());
        let Some(body) = converted.get(&name) else { continue };
        match body {
            DeclBody::Union(tr) => match normalize(tr, &ctx) {
                Ok(te) => finals.push((
                    name.clone(),
                    SymbolInfo {
                        kind: SymbolKind::Union,
                        arity: 0,
                        denotation: Denotation::Type(te),
                        sig: None,
                    },
                )),
                Err(e) => diags.push(Diag::error(path, td.span, codes::TYPE_UNRESOLVED, e.to_string())),
            },
            DeclBody::Ctor { fields, fun_split } => {
                let mut sig_fields = Vec::new();
                let mut ok = true;
                for (fname, tr, fspan) in fields {
                    match normalize(tr, &ctx) {
                        Ok(ty) => sig_fields.push(Field { name: fname.clone(), ty }),
                        Err(e) => {
                            diags.push(Diag::error(path, *fspan, codes::TYPE_UNRESOLVED, e.to_string()));
                            ok = false;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                let kind = match td.marker {
                    CtorMarker::Derived => SymbolKind::Derived,
                    CtorMarker::New | CtorMarker::Fun => SymbolKind::New,
                };
                let sig = CtorSig { fields: sig_fields, fun_split: *fun_split };
                if td.marker == CtorMarker::Fun {
                    fun_ctors.push((name.clone(), sig.clone()));
                }
                finals.push((
                    name.clone(),
                    SymbolInfo {
                        kind,
                        arity: sig.fields.len(),
                        denotation: Denotation::Type(TypeExpr::ctor(name.clone())),
                        sig: Some(sig),
                    },
                ));
            }
        }
    }

    // Install finals, checking triples against imports.
    for (name, info) in &finals {
        if let Err(conflict) = working.insert(name.clone(), info.clone()) {
            diags.push(Diag::error(
                path,
                Span::default(),
                codes::COMPOSE_CONFLICT,
                format!("symbol `{}` has conflicting definitions", conflict.symbol),
            ));
        }
    }

    // Inhabitedness: name-identity subtyping needs every extension nonempty.
    let own_names: BTreeSet<QualName> = own.iter().map(|td| QualName::plain(td.name.clone())).collect();
    check_inhabited(path, working, &own_names, diags);

    OwnTypes { fun_ctors }
}

/// Converts a surface type expression against a resolution table, inserting
/// auto-declared constants as it goes.
fn convert_type(
    path: &str,
    te: &RawTypeExpr,
    resolution: &mut SymbolTable,
    pending: &mut BTreeSet<QualName>,
    diags: &mut Vec<Diag>,
) -> Option<TypeRef> {
    let mut parts = Vec::new();
    let mut ok = true;
    for atom in &te.atoms {
        match atom {
            RawTypeAtom::Name(q) => {
                if q.is_plain() {
                    if let Some(b) = Builtin::by_name(&q.segments[0]) {
                        if b == Builtin::Boolean {
                            for c in ["TRUE", "FALSE"] {
                                auto_declare_const(QualName::plain(c), resolution, pending);
                            }
                        }
                        parts.push(TypeRef::Builtin(b));
                        continue;
                    }
                }
                let name =
                    QualName::new(q.segments[..q.segments.len() - 1].to_vec(), q.segments.last().unwrap().clone());
                match resolution.lookup(&[], &name) {
                    LookupResult::Found(sym) => parts.push(TypeRef::Named(sym)),
                    LookupResult::Ambiguous(_) => {
                        diags.push(Diag::error(
                            path,
                            q.span,
                            codes::LOOKUP_AMBIGUOUS,
                            format!("ambiguous type name `{}`", q.dotted()),
                        ));
                        ok = false;
                    }
                    LookupResult::NotFound => {
                        diags.push(Diag::error(
                            path,
                            q.span,
                            codes::TYPE_UNRESOLVED,
                            format!("unresolved type name `{}`", q.dotted()),
                        ));
                        ok = false;
                    }
                }
            }
            RawTypeAtom::ConstSet(cs, _span) => {
                let mut atoms = Vec::new();
                for c in cs {
                    match c {
                        RawConst::Int(n) => atoms.push(ConstAtom::Int(n.clone())),
                        RawConst::Str(s) => atoms.push(ConstAtom::Str(s.clone())),
                        RawConst::Name(q) => {
                            let name = QualName::new(
                                q.segments[..q.segments.len() - 1].to_vec(),
                                q.segments.last().unwrap().clone(),
                            );
                            match resolution.lookup(&[], &name) {
                                LookupResult::Found(sym) => {
                                    let info = resolution.get(&sym).unwrap();
                                    if info.kind == SymbolKind::New && info.arity == 0 {
                                        atoms.push(ConstAtom::User(sym));
                                    } else {
                                        diags.push(Diag::error(
                                            path,
                                            q.span,
                                            codes::ELAB_KIND_CLASH,
                                            format!("`{}` is not a new-kind constant", sym),
                                        ));
                                        ok = false;
                                    }
                                }
                                LookupResult::Ambiguous(_) => {
                                    diags.push(Diag::error(
                                        path,
                                        q.span,
                                        codes::LOOKUP_AMBIGUOUS,
                                        format!("ambiguous constant `{}`", q.dotted()),
                                    ));
                                    ok = false;
                                }
                                LookupResult::NotFound if q.is_plain() => {
                                    let sym = QualName::plain(q.segments[0].clone());
                                    auto_declare_const(sym.clone(), resolution, pending);
                                    atoms.push(ConstAtom::User(sym));
                                }
                                LookupResult::NotFound => {
                                    diags.push(Diag::error(
                                        path,
                                        q.span,
                                        codes::TYPE_UNRESOLVED,
                                        format!("unresolved constant `{}`", q.dotted()),
                                    ));
                                    ok = false;
                                }
                            }
                        }
                    }
                }
                parts.push(TypeRef::Consts(atoms));
            }
        }
    }
    if !ok {
        return None;
    }
    Some(if parts.len() == 1 { parts.pop().unwrap() } else { TypeRef::Union(parts) })
}

fn auto_declare_const(name: QualName, resolution: &mut SymbolTable, pending: &mut BTreeSet<QualName>) {
    if resolution.contains(&name) {
        return;
    }
    resolution.insert_unchecked(
        name.clone(),
        SymbolInfo {
            kind: SymbolKind::New,
            arity: 0,
            denotation: Denotation::Type(TypeExpr::constant(name.clone())),
            sig: None,
        },
    );
    pending.insert(name);
}

/// Every constructor extension and union must denote a nonempty set; this
/// keeps name-identity subtyping sound.
fn check_inhabited(path: &str, table: &SymbolTable, own: &BTreeSet<QualName>, diags: &mut Vec<Diag>) {
    let mut inhabited: BTreeSet<QualName> = BTreeSet::new();
    let ty_ok = |te: &TypeExpr, inhabited: &BTreeSet<QualName>| {
        !te.ints.is_empty()
            || !te.strings.is_empty()
            || !te.consts.is_empty()
            || te.ctors.iter().any(|c| inhabited.contains(c))
    };
    loop {
        let mut changed = false;
        for (name, info) in table.iter() {
            if info.arity == 0 || inhabited.contains(name) {
                continue;
            }
            if let Some(sig) = &info.sig {
                if sig.fields.iter().all(|f| ty_ok(&f.ty, &inhabited)) {
                    inhabited.insert(name.clone());
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for name in own {
        let Some(info) = table.get(name) else { continue };
        let empty = match (&info.kind, &info.denotation) {
            (SymbolKind::New | SymbolKind::Derived, _) if info.arity > 0 => !inhabited.contains(name),
            (SymbolKind::Union, Denotation::Type(te)) => !ty_ok(te, &inhabited),
            _ => false,
        };
        if empty {
            diags.push(Diag::error(
                path,
                Span::default(),
                codes::TYPE_EMPTY,
                format!("type `{}` has an empty denotation", name),
            ));
        }
    }
}

// ---------------------------------------------------------------------------
// Clause machinery
// ---------------------------------------------------------------------------

struct ClauseSet {
    goal: QualName,
    clauses: Vec<Clause>,
    rules: Vec<CompiledRule>,
    constants: BTreeSet<QualName>,
}

/// Builds per-clause hidden constants, their rules, and the aggregate goal
/// rule `goal :- clause_1, ..., clause_n` (provable when the list is empty).
fn build_clause_set(
    kind_word: &str,
    module: &str,
    goal_base: &str,
    bodies: Vec<(Span, ClauseBody)>,
    ctx: &ResolveCtx,
    vars: &mut BTreeSet<String>,
    diags: &mut Vec<Diag>,
) -> ClauseSet {
    let goal = QualName::new(vec![module.to_string()], goal_base.to_string());
    let mut clauses = Vec::new();
    let mut rules: Vec<CompiledRule> = Vec::new();
    let mut constants = BTreeSet::new();

    for (i, (span, body)) in bodies.into_iter().enumerate() {
        let index = i + 1;
        let constant = QualName::new(vec![module.to_string()], format!("{}#{}", goal_base, index));
        constants.insert(constant.clone());
        let (origin, clause_rules) = match body {
            ClauseBody::Explicit(raw) => {
                match resolve_clause(ctx, raw, &constant, span, module) {
                    Ok(resolved) => {
                        vars.extend(resolved.vars);
                        (ClauseOrigin::Explicit, resolved.rules)
                    }
                    Err(mut d) => {
                        diags.append(&mut d);
                        (ClauseOrigin::Explicit, Vec::new())
                    }
                }
            }
            ClauseBody::Fun(ctor, sig) => {
                (ClauseOrigin::Fun, vec![fun_dependency_rule(&ctor, &sig, &constant, module)])
            }
            ClauseBody::Extends(goals) => {
                let body: Vec<Literal> =
                    goals.into_iter().map(|g| Literal::Atom(Term::Const(g))).collect();
                let rule = CompiledRule {
                    head: Term::Const(constant.clone()),
                    body,
                    rewrites: BTreeMap::new(),
                    provenance: Provenance {
                        module: module.to_string(),
                        label: format!("{}#extends", goal_base),
                    },
                };
                (ClauseOrigin::Extends, vec![rule])
            }
        };
        let witness_comp = match clause_rules.as_slice() {
            [rule] => match rule.body.as_slice() {
                [Literal::NoComp(c)] => Some(c.clone()),
                _ => None,
            },
            _ => None,
        };
        clauses.push(Clause {
            index,
            id: format!("{}#{}", module, index),
            constant: constant.clone(),
            span,
            path: ctx.path.to_string(),
            origin,
            witness_comp,
        });
        rules.extend(clause_rules);
    }

    // goal :- clause_1, ..., clause_n.
    rules.push(CompiledRule {
        head: Term::Const(goal.clone()),
        body: clauses.iter().map(|c| Literal::Atom(Term::Const(c.constant.clone()))).collect(),
        rewrites: BTreeMap::new(),
        provenance: Provenance { module: module.to_string(), label: format!("{}-goal", kind_word) },
    });

    ClauseSet { goal, clauses, rules, constants }
}

enum ClauseBody<'a> {
    Explicit(&'a RawBody),
    Fun(QualName, CtorSig),
    Extends(Vec<QualName>),
}

/// The functional-dependency clause for a `fun` constructor: no two facts
/// may agree on the domain fields and differ on a range field.
fn fun_dependency_rule(
    ctor: &QualName,
    sig: &CtorSig,
    constant: &QualName,
    module: &str,
) -> CompiledRule {
    let split = sig.fun_split.expect("fun constructors carry a split");
    let n = sig.fields.len();
    let dom_vars: Vec<Term> = (0..split).map(|i| Term::Var(format!("%d{}", i))).collect();
    let range_vars: Vec<Term> = (split..n).map(|i| Term::Var(format!("%r{}", i))).collect();

    let mut first_args = dom_vars.clone();
    first_args.extend(range_vars.iter().cloned());
    let witness_pattern = Term::Apply(ctor.clone(), first_args);

    let mut disjuncts = Vec::new();
    for j in split..n {
        let mut second_args = dom_vars.clone();
        for k in split..n {
            if k == j {
                second_args.push(Term::Var(format!("%r{}'", k)));
            } else {
                second_args.push(Term::Wildcard);
            }
        }
        let conj = vec![
            Literal::Atom(witness_pattern.clone()),
            Literal::Atom(Term::Apply(ctor.clone(), second_args)),
            Literal::Compare(
                Expr::Term(Term::Var(format!("%r{}", j))),
                CompareOp::Ne,
                Expr::Term(Term::Var(format!("%r{}'", j))),
            ),
        ];
        disjuncts.push(conj);
    }

    let comp = Comprehension { head: witness_pattern, disjuncts, captured: BTreeSet::new() };
    CompiledRule {
        head: Term::Const(constant.clone()),
        body: vec![Literal::NoComp(comp)],
        rewrites: BTreeMap::new(),
        provenance: Provenance { module: module.to_string(), label: format!("fun:{}", ctor) },
    }
}

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

struct ImportedParts {
    table_acc: ComposeAcc,
    rules: BTreeSet<CompiledRule>,
    hidden: BTreeSet<QualName>,
    clauses: BTreeMap<QualName, Clause>,
    closure: BTreeSet<(Vec<String>, String)>,
}

fn merge_domain_imports(
    path: &str,
    imports: &[RawImport],
    env: &Env,
    diags: &mut Vec<Diag>,
) -> Option<ImportedParts> {
    let mut acc = ComposeAcc::from(&SymbolTable::new());
    let mut rules: BTreeSet<CompiledRule> = BTreeSet::new();
    let mut hidden: BTreeSet<QualName> = BTreeSet::new();
    let mut clauses: BTreeMap<QualName, Clause> = BTreeMap::new();
    let mut closure: BTreeSet<(Vec<String>, String)> = BTreeSet::new();
    let mut ok = true;

    for imp in imports {
        let Some(dom) = env.domains.get(&imp.target) else {
            diags.push(Diag::error(
                path,
                imp.span,
                codes::ELAB_UNKNOWN_MODULE,
                format!("unknown domain `{}`", imp.target),
            ));
            ok = false;
            continue;
        };
        match &imp.prefix {
            None => {
                acc = acc.merge(&dom.table);
                rules.extend(dom.rules.iter().cloned());
                hidden.extend(dom.hidden.iter().cloned());
                for c in &dom.clauses {
                    clauses.entry(c.constant.clone()).or_insert_with(|| c.clone());
                }
                closure.extend(dom.closure.iter().cloned());
            }
            Some(p) => {
                acc = acc.merge(&dom.table.rename(p));
                rules.extend(rename_rules(p, &dom.rules, &dom.table));
                hidden.extend(dom.hidden.iter().map(|h| h.prefixed(p)));
                for c in &dom.clauses {
                    let constant = c.constant.prefixed(p);
                    let rho = RelabelingSpec { from: Vec::new(), to: vec![p.clone()] };
                    let witness_comp =
                        c.witness_comp.as_ref().map(|comp| rename_comp(p, comp, &dom.table, &rho));
                    clauses.entry(constant.clone()).or_insert_with(|| Clause {
                        constant,
                        witness_comp,
                        id: format!("{}::{}", p, c.id),
                        ..c.clone()
                    });
                }
                for (quals, name) in &dom.closure {
                    let mut q = vec![p.clone()];
                    q.extend(quals.iter().cloned());
                    closure.insert((q, name.clone()));
                }
            }
        }
    }

    ok.then_some(ImportedParts { table_acc: acc, rules, hidden, clauses, closure })
}

fn elaborate_domain(path: &str, decl: &RawModuleDecl, env: &Env) -> Result<CompiledDomain, Vec<Diag>> {
    let mut diags = Vec::new();
    let module = decl.name.as_str();

    let Some(imported) = merge_domain_imports(path, &decl.imports, env, &mut diags) else {
        return Err(diags);
    };
    let mut working = match imported.table_acc.into_table() {
        Ok(t) => t,
        Err(conflicts) => {
            for c in conflicts {
                diags.push(Diag::error(
                    path,
                    decl.span,
                    codes::COMPOSE_CONFLICT,
                    format!("imported tables conflict on symbol `{}`", c.symbol),
                ));
            }
            return Err(diags);
        }
    };

    let own_types = declare_own_types(path, &decl.items, &mut working, &mut diags);

    // Visible goal constant.
    let conforms_goal = QualName::new(vec![module.to_string()], "conforms".to_string());
    if let Err(c) = working.insert(
        conforms_goal.clone(),
        SymbolInfo {
            kind: SymbolKind::Derived,
            arity: 0,
            denotation: Denotation::Type(TypeExpr::constant(conforms_goal.clone())),
            sig: None,
        },
    ) {
        diags.push(Diag::error(
            path,
            decl.span,
            codes::COMPOSE_CONFLICT,
            format!("symbol `{}` has conflicting definitions", c.symbol),
        ));
    }

    // Derived-constant introductions from rule heads.
    let heads: Vec<&RawTerm> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::Rule(r) => Some(r.heads.iter()),
            _ => None,
        })
        .flatten()
        .collect();
    if let Err(mut d) = intro_head_constants(&mut working, module, path, &heads) {
        diags.append(&mut d);
    }

    let prefixes: Vec<String> = decl.imports.iter().filter_map(|i| i.prefix.clone()).collect();
    let mut rules: BTreeSet<CompiledRule> = imported.rules;
    let mut vars: BTreeSet<String> = BTreeSet::new();

    {
        let ctx = ResolveCtx { table: &working, module, prefixes: &prefixes, path };
        for item in &decl.items {
            if let RawItem::Rule(raw) = item {
                match resolve_rule(&ctx, raw, module) {
                    Ok(resolved) => {
                        vars.extend(resolved.vars);
                        rules.extend(resolved.rules);
                    }
                    Err(mut d) => diags.append(&mut d),
                }
            }
        }

        // Conformance clauses: explicit, then fun-implicit, then extends.
        let mut bodies: Vec<(Span, ClauseBody)> = Vec::new();
        for item in &decl.items {
            if let RawItem::Conforms(c) = item {
                bodies.push((c.span, ClauseBody::Explicit(&c.body)));
            }
        }
        for (ctor, sig) in &own_types.fun_ctors {
            bodies.push((decl.span, ClauseBody::Fun(ctor.clone(), sig.clone())));
        }
        if decl.import_mode == ImportMode::Extends {
            let mut goals = Vec::new();
            for imp in &decl.imports {
                if let Some(dom) = env.domains.get(&imp.target) {
                    let g = match &imp.prefix {
                        Some(p) => dom.conforms_goal.prefixed(p),
                        None => dom.conforms_goal.clone(),
                    };
                    goals.push(g);
                }
            }
            bodies.push((decl.span, ClauseBody::Extends(goals)));
        }

        let clause_set =
            build_clause_set("conforms", module, "conforms", bodies, &ctx, &mut vars, &mut diags);
        rules.extend(clause_set.rules);

        let mut all_clauses: Vec<Clause> = clause_set.clauses;
        for (_, c) in imported.clauses {
            all_clauses.push(c);
        }

        let mut hidden = imported.hidden;
        hidden.extend(clause_set.constants);

        if !diags.is_empty() {
            return Err(diags);
        }

        // Variables become table entries.
        let mut final_table = working.clone();
        for v in &vars {
            final_table.insert_unchecked(
                QualName::plain(v.clone()),
                SymbolInfo { kind: SymbolKind::Var, arity: 0, denotation: Denotation::AllTerms, sig: None },
            );
        }

        let rules: Vec<CompiledRule> = rules.into_iter().collect();
        let strata = match stratify(&rules, &final_table) {
            Ok(s) => s,
            Err(cycle) => {
                return Err(vec![Diag::error(path, decl.span, codes::ELAB_STRATIFY, cycle.to_string())]);
            }
        };

        debug_assert_rule_symbols(&rules, &final_table, &hidden);

        let mut closure = imported.closure;
        closure.insert((Vec::new(), module.to_string()));

        Ok(CompiledDomain {
            name: module.to_string(),
            table: final_table,
            rules,
            conforms_goal: clause_set.goal,
            clauses: all_clauses,
            hidden,
            strata,
            closure,
        })
    }
}

fn debug_assert_rule_symbols(rules: &[CompiledRule], table: &SymbolTable, hidden: &BTreeSet<QualName>) {
    if cfg!(debug_assertions) {
        for rule in rules {
            let mut syms: BTreeSet<QualName> = BTreeSet::new();
            collect_rule_symbols(rule, &mut syms);
            for s in syms {
                let known = table.contains(&s)
                    || hidden.contains(&s)
                    || (s.is_plain() && (s.base == "TRUE" || s.base == "FALSE"));
                debug_assert!(known, "rule references unknown symbol `{}`: {}", s, rule);
            }
        }
    }
}

fn collect_rule_symbols(rule: &CompiledRule, out: &mut BTreeSet<QualName>) {
    fn term(t: &Term, out: &mut BTreeSet<QualName>) {
        match t {
            Term::Const(c) => {
                out.insert(c.clone());
            }
            Term::Apply(f, args) => {
                out.insert(f.clone());
                args.iter().for_each(|a| term(a, out));
            }
            _ => {}
        }
    }
    fn lit(l: &Literal, out: &mut BTreeSet<QualName>) {
        match l {
            Literal::Atom(t) | Literal::IsMember(t, _) | Literal::TypeTest(t, _) => term(t, out),
            Literal::NoComp(c) => comp(c, out),
            Literal::Compare(a, _, b) => {
                expr(a, out);
                expr(b, out);
            }
        }
    }
    fn expr(e: &Expr, out: &mut BTreeSet<QualName>) {
        match e {
            Expr::Term(t) => term(t, out),
            Expr::Accessor { ctor, .. } => {
                out.insert(ctor.clone());
            }
            Expr::Count(c) => comp(c, out),
            Expr::Arith(_, a, b) => {
                expr(a, out);
                expr(b, out);
            }
        }
    }
    fn comp(c: &Comprehension, out: &mut BTreeSet<QualName>) {
        for conj in &c.disjuncts {
            conj.iter().for_each(|l| lit(l, out));
        }
    }
    term(&rule.head, out);
    rule.body.iter().for_each(|l| lit(l, out));
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

fn elaborate_model(path: &str, decl: &RawModuleDecl, env: &Env) -> Result<CompiledModel, Vec<Diag>> {
    let mut diags = Vec::new();
    let module = decl.name.as_str();
    let of = decl.of_target.as_ref().expect("models carry an `of` target");
    let Some(domain) = env.domains.get(&of.target) else {
        return Err(vec![Diag::error(
            path,
            of.span,
            codes::ELAB_UNKNOWN_MODULE,
            format!("unknown domain `{}`", of.target),
        )]);
    };

    let mut acc = ComposeAcc::from(&domain.table);
    let mut facts: BTreeSet<Term> = BTreeSet::new();
    let mut symconsts: BTreeMap<QualName, Term> = BTreeMap::new();

    for imp in &decl.imports {
        let Some(model) = env.models.get(&imp.target) else {
            diags.push(Diag::error(
                path,
                imp.span,
                codes::ELAB_UNKNOWN_MODULE,
                format!("unknown model `{}`", imp.target),
            ));
            continue;
        };
        // The host domain must include the imported model's domain under
        // the same renaming.
        let prefix_vec: Vec<String> = imp.prefix.iter().cloned().collect();
        if !domain.closure.contains(&(prefix_vec.clone(), model.domain.name.clone())) {
            diags.push(Diag::error(
                path,
                imp.span,
                codes::ELAB_DOMAIN_MISMATCH,
                format!(
                    "model `{}` is over `{}`, which `{}` does not include as `{}`",
                    imp.target,
                    model.domain.name,
                    domain.name,
                    match &imp.prefix {
                        Some(p) => format!("{}::{}", p, model.domain.name),
                        None => model.domain.name.clone(),
                    }
                ),
            ));
            continue;
        }
        match &imp.prefix {
            None => {
                acc = acc.merge(&model.table);
                facts.extend(model.facts.iter().cloned());
                symconsts.extend(model.symconsts.iter().map(|(k, v)| (k.clone(), v.clone())));
            }
            Some(p) => {
                acc = acc.merge(&model.table.rename(p));
                let rho = RelabelingSpec { from: Vec::new(), to: vec![p.clone()] };
                for f in &model.facts {
                    facts.insert(relabel_term(&rho, f).expect("model facts are ground"));
                }
                for (k, v) in &model.symconsts {
                    symconsts
                        .insert(k.prefixed(p), relabel_term(&rho, v).expect("model facts are ground"));
                }
            }
        }
    }

    let mut table = match acc.into_table() {
        Ok(t) => t,
        Err(conflicts) => {
            for c in conflicts {
                diags.push(Diag::error(
                    path,
                    decl.span,
                    codes::COMPOSE_CONFLICT,
                    format!("included models conflict on symbol `{}`", c.symbol),
                ));
            }
            return Err(diags);
        }
    };

    // Own symbolic constants, in dependency order.
    let own_sc: Vec<&RawSymConst> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::SymConst(sc) => Some(sc),
            _ => None,
        })
        .collect();
    let mut sc_names: BTreeSet<String> = BTreeSet::new();
    for sc in &own_sc {
        if RESERVED_TYPE_NAMES.contains(&sc.name.as_str()) {
            diags.push(Diag::error(
                path,
                sc.span,
                codes::TYPE_RESERVED,
                format!("`{}` is a reserved built-in name", sc.name),
            ));
        }
        if !sc_names.insert(sc.name.clone()) {
            diags.push(Diag::error(
                path,
                sc.span,
                codes::ELAB_CYCLIC_SYMCONST,
                format!("symbolic constant `{}` is defined twice", sc.name),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let order = match symconst_order(&own_sc, &sc_names) {
        Ok(o) => o,
        Err(cycle) => {
            let span = own_sc.first().map(|s| s.span).unwrap_or_default();
            return Err(vec![Diag::error(
                path,
                span,
                codes::ELAB_CYCLIC_SYMCONST,
                format!(
                    "symbolic constant definitions are cyclic: {}",
                    cycle.iter().map(|c| format!("`{}`", c)).collect::<Vec<_>>().join(", ")
                ),
            )]);
        }
    };

    for i in order {
        let sc = own_sc[i];
        let value = {
            let ctx = ResolveCtx { table: &table, module, prefixes: &[], path };
            match resolve_fact_term(&ctx, &sc.value) {
                Ok(v) => v,
                Err(d) => {
                    diags.push(d);
                    continue;
                }
            }
        };
        let qualified = QualName::new(vec![module.to_string()], sc.name.clone());
        if let Err(c) = table.insert(
            qualified.clone(),
            SymbolInfo {
                kind: SymbolKind::SymConst,
                arity: 0,
                denotation: Denotation::Ground(value.clone()),
                sig: None,
            },
        ) {
            diags.push(Diag::error(
                path,
                sc.span,
                codes::COMPOSE_CONFLICT,
                format!("symbol `{}` has conflicting definitions", c.symbol),
            ));
            continue;
        }
        check_fact(path, sc.span, &value, &table, &mut diags);
        symconsts.insert(qualified, value.clone());
        facts.insert(value);
    }

    // Own facts.
    for item in &decl.items {
        if let RawItem::Fact(raw) = item {
            let ctx = ResolveCtx { table: &table, module, prefixes: &[], path };
            match resolve_fact_term(&ctx, raw) {
                Ok(value) => {
                    check_fact(path, raw.span(), &value, &table, &mut diags);
                    facts.insert(value);
                }
                Err(d) => diags.push(d),
            }
        }
    }

    if diags.is_empty() {
        Ok(CompiledModel { name: module.to_string(), domain: Arc::clone(domain), table, facts, symconsts })
    } else {
        Err(diags)
    }
}

/// Resolves a ground model term (fact or symbolic-constant value).
fn resolve_fact_term(ctx: &ResolveCtx, raw: &RawTerm) -> Result<Term, Diag> {
    let term = super::resolve::resolve_model_term(ctx, raw)?;
    if !term.is_ground() {
        return Err(Diag::error(
            ctx.path,
            raw.span(),
            codes::ELAB_ILL_TYPED_FACT,
            format!("facts must be ground: `{}`", term),
        ));
    }
    Ok(term)
}

fn check_fact(path: &str, span: Span, fact: &Term, table: &SymbolTable, diags: &mut Vec<Diag>) {
    let outer = fact.outer_symbol().cloned();
    let Some(outer) = outer else {
        diags.push(Diag::error(
            path,
            span,
            codes::ELAB_NOT_NEW_KIND,
            format!("`{}` cannot be a fact: facts are constructor terms", fact),
        ));
        return;
    };
    let is_builtin_bool = outer.is_plain() && (outer.base == "TRUE" || outer.base == "FALSE");
    let kind = table.get(&outer).map(|i| i.kind);
    if !is_builtin_bool && kind != Some(SymbolKind::New) {
        diags.push(Diag::error(
            path,
            span,
            codes::ELAB_NOT_NEW_KIND,
            format!("fact `{}` must use a new-kind constructor; `{}` is not", fact, outer),
        ));
        return;
    }
    let expected = match fact {
        Term::Apply(f, _) => TypeExpr::ctor(f.clone()),
        _ => return,
    };
    if !term_in_type(fact, &expected, table) {
        diags.push(Diag::error(
            path,
            span,
            codes::ELAB_ILL_TYPED_FACT,
            format!("fact `{}` is not well-typed for `{}`", fact, outer),
        ));
    }
}

/// Kahn order over own symbolic constants referencing one another by name.
fn symconst_order(defs: &[&RawSymConst], names: &BTreeSet<String>) -> Result<Vec<usize>, Vec<String>> {
    fn refs(t: &RawTerm, names: &BTreeSet<String>, out: &mut BTreeSet<String>) {
        match t {
            RawTerm::Name(q) if q.is_plain() && names.contains(&q.segments[0]) => {
                out.insert(q.segments[0].clone());
            }
            RawTerm::Apply(_, args, _) => args.iter().for_each(|a| refs(a, names, out)),
            _ => {}
        }
    }
    let index: BTreeMap<&str, usize> = defs.iter().enumerate().map(|(i, d)| (d.name.as_str(), i)).collect();
    let mut indegree = vec![0usize; defs.len()];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); defs.len()];
    for (i, d) in defs.iter().enumerate() {
        let mut out = BTreeSet::new();
        refs(&d.value, names, &mut out);
        for r in out {
            if r == d.name {
                return Err(vec![d.name.clone()]);
            }
            let j = index[r.as_str()];
            edges[j].push(i);
            indegree[i] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..defs.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::new();
    let mut qi = 0;
    while qi < queue.len() {
        let n = queue[qi];
        qi += 1;
        order.push(n);
        for &m in &edges[n] {
            indegree[m] -= 1;
            if indegree[m] == 0 {
                queue.push(m);
            }
        }
    }
    if order.len() != defs.len() {
        Err((0..defs.len()).filter(|i| !order.contains(i)).map(|i| defs[i].name.clone()).collect())
    } else {
        Ok(order)
    }
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

fn elaborate_transform(path: &str, decl: &RawModuleDecl, env: &Env) -> Result<CompiledTransform, Vec<Diag>> {
    let mut diags = Vec::new();
    let module = decl.name.as_str();

    let mut labels: BTreeSet<String> = BTreeSet::new();
    for sig in decl.sig_inputs.iter().chain(&decl.sig_outputs) {
        if !labels.insert(sig.label.clone()) {
            diags.push(Diag::error(
                path,
                sig.span,
                codes::ELAB_SIGNATURE,
                format!("signature label `{}` is not distinct", sig.label),
            ));
        }
    }
    if decl.sig_inputs.is_empty() || decl.sig_outputs.is_empty() {
        diags.push(Diag::error(
            path,
            decl.span,
            codes::ELAB_SIGNATURE,
            "transforms need at least one input and one output",
        ));
    }

    let resolve_sigs = |sigs: &[RawSig], diags: &mut Vec<Diag>| -> Vec<(String, Arc<CompiledDomain>)> {
        let mut out = Vec::new();
        for sig in sigs {
            match env.domains.get(&sig.domain) {
                Some(d) => out.push((sig.label.clone(), Arc::clone(d))),
                None => diags.push(Diag::error(
                    path,
                    sig.span,
                    codes::ELAB_UNKNOWN_MODULE,
                    format!("unknown domain `{}`", sig.domain),
                )),
            }
        }
        out
    };
    let inputs = resolve_sigs(&decl.sig_inputs, &mut diags);
    let outputs = resolve_sigs(&decl.sig_outputs, &mut diags);
    if !diags.is_empty() {
        return Err(diags);
    }

    // Compose the renamed signature domains.
    let mut acc = ComposeAcc::from(&SymbolTable::new());
    let mut rules: BTreeSet<CompiledRule> = BTreeSet::new();
    let mut hidden: BTreeSet<QualName> = BTreeSet::new();
    for (label, dom) in inputs.iter().chain(outputs.iter()) {
        acc = acc.merge(&dom.table.rename(label));
        rules.extend(rename_rules(label, &dom.rules, &dom.table));
        hidden.extend(dom.hidden.iter().map(|h| h.prefixed(label)));
    }
    let mut working = match acc.into_table() {
        Ok(t) => t,
        Err(conflicts) => {
            for c in conflicts {
                diags.push(Diag::error(
                    path,
                    decl.span,
                    codes::COMPOSE_CONFLICT,
                    format!("signature domains conflict on symbol `{}`", c.symbol),
                ));
            }
            return Err(diags);
        }
    };

    let own_types = declare_own_types(path, &decl.items, &mut working, &mut diags);

    // Goal constants are user-visible.
    let requires_goal = QualName::new(vec![module.to_string()], "requires".to_string());
    let ensures_goal = QualName::new(vec![module.to_string()], "ensures".to_string());
    for goal in [&requires_goal, &ensures_goal] {
        if let Err(c) = working.insert(
            goal.clone(),
            SymbolInfo {
                kind: SymbolKind::Derived,
                arity: 0,
                denotation: Denotation::Type(TypeExpr::constant(goal.clone())),
                sig: None,
            },
        ) {
            diags.push(Diag::error(
                path,
                decl.span,
                codes::COMPOSE_CONFLICT,
                format!("symbol `{}` has conflicting definitions", c.symbol),
            ));
        }
    }

    let heads: Vec<&RawTerm> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::Rule(r) => Some(r.heads.iter()),
            _ => None,
        })
        .flatten()
        .collect();
    if let Err(mut d) = intro_head_constants(&mut working, module, path, &heads) {
        diags.append(&mut d);
    }

    let prefixes: Vec<String> = decl
        .sig_inputs
        .iter()
        .chain(&decl.sig_outputs)
        .map(|s| s.label.clone())
        .collect();
    let mut vars: BTreeSet<String> = BTreeSet::new();

    let ctx = ResolveCtx { table: &working, module, prefixes: &prefixes, path };
    for item in &decl.items {
        if let RawItem::Rule(raw) = item {
            match resolve_rule(&ctx, raw, module) {
                Ok(resolved) => {
                    vars.extend(resolved.vars);
                    rules.extend(resolved.rules);
                }
                Err(mut d) => diags.append(&mut d),
            }
        }
    }

    let req_bodies: Vec<(Span, ClauseBody)> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::Requires(c) => Some((c.span, ClauseBody::Explicit(&c.body))),
            _ => None,
        })
        .collect();
    let mut ens_bodies: Vec<(Span, ClauseBody)> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::Ensures(c) => Some((c.span, ClauseBody::Explicit(&c.body))),
            _ => None,
        })
        .collect();
    for (ctor, sig) in &own_types.fun_ctors {
        ens_bodies.push((decl.span, ClauseBody::Fun(ctor.clone(), sig.clone())));
    }

    let req_set = build_clause_set("requires", module, "requires", req_bodies, &ctx, &mut vars, &mut diags);
    let ens_set = build_clause_set("ensures", module, "ensures", ens_bodies, &ctx, &mut vars, &mut diags);
    rules.extend(req_set.rules);
    rules.extend(ens_set.rules);
    hidden.extend(req_set.constants);
    hidden.extend(ens_set.constants);

    if !diags.is_empty() {
        return Err(diags);
    }

    let mut final_table = working.clone();
    for v in &vars {
        final_table.insert_unchecked(
            QualName::plain(v.clone()),
            SymbolInfo { kind: SymbolKind::Var, arity: 0, denotation: Denotation::AllTerms, sig: None },
        );
    }

    let rules: Vec<CompiledRule> = rules.into_iter().collect();
    let strata = match stratify(&rules, &final_table) {
        Ok(s) => s,
        Err(cycle) => {
            return Err(vec![Diag::error(path, decl.span, codes::ELAB_STRATIFY, cycle.to_string())]);
        }
    };
    debug_assert_rule_symbols(&rules, &final_table, &hidden);

    Ok(CompiledTransform {
        name: module.to_string(),
        inputs,
        outputs,
        table: final_table,
        rules,
        requires_goal: req_set.goal,
        ensures_goal: ens_set.goal,
        requires_clauses: req_set.clauses,
        ensures_clauses: ens_set.clauses,
        hidden,
        strata,
    })
}

// ---------------------------------------------------------------------------
// Transform systems
// ---------------------------------------------------------------------------

fn elaborate_system(path: &str, decl: &RawModuleDecl, env: &Env) -> Result<CompiledSystem, Vec<Diag>> {
    let mut diags = Vec::new();

    let mut labels: BTreeSet<String> = BTreeSet::new();
    for sig in decl.sig_inputs.iter().chain(&decl.sig_outputs) {
        if !labels.insert(sig.label.clone()) {
            diags.push(Diag::error(
                path,
                sig.span,
                codes::ELAB_SIGNATURE,
                format!("signature label `{}` is not distinct", sig.label),
            ));
        }
    }

    let resolve_sigs = |sigs: &[RawSig], diags: &mut Vec<Diag>| -> Vec<(String, Arc<CompiledDomain>)> {
        let mut out = Vec::new();
        for sig in sigs {
            match env.domains.get(&sig.domain) {
                Some(d) => out.push((sig.label.clone(), Arc::clone(d))),
                None => diags.push(Diag::error(
                    path,
                    sig.span,
                    codes::ELAB_UNKNOWN_MODULE,
                    format!("unknown domain `{}`", sig.domain),
                )),
            }
        }
        out
    };
    let inputs = resolve_sigs(&decl.sig_inputs, &mut diags);
    let outputs = resolve_sigs(&decl.sig_outputs, &mut diags);
    if !diags.is_empty() {
        return Err(diags);
    }
    let input_domains: BTreeMap<&str, &Arc<CompiledDomain>> =
        inputs.iter().map(|(l, d)| (l.as_str(), d)).collect();

    let eqs: Vec<&RawPipelineEq> = decl
        .items
        .iter()
        .filter_map(|i| match i {
            RawItem::Pipeline(eq) => Some(eq),
            _ => None,
        })
        .collect();

    // Each variable is defined exactly once and does not shadow an input.
    let mut def_of: BTreeMap<String, usize> = BTreeMap::new();
    for (i, eq) in eqs.iter().enumerate() {
        for v in &eq.lhs {
            if input_domains.contains_key(v.as_str()) {
                diags.push(Diag::error(
                    path,
                    eq.span,
                    codes::ELAB_PIPELINE,
                    format!("`{}` shadows an input label", v),
                ));
            } else if def_of.insert(v.clone(), i).is_some() {
                diags.push(Diag::error(
                    path,
                    eq.span,
                    codes::ELAB_PIPELINE,
                    format!("pipeline variable `{}` is defined more than once", v),
                ));
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    // Dependency order over equations.
    let mut indegree = vec![0usize; eqs.len()];
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); eqs.len()];
    for (i, eq) in eqs.iter().enumerate() {
        for a in &eq.args {
            if let Some(&j) = def_of.get(a) {
                edges[j].push(i);
                indegree[i] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..eqs.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::new();
    let mut qi = 0;
    while qi < queue.len() {
        let n = queue[qi];
        qi += 1;
        order.push(n);
        for &m in &edges[n] {
            indegree[m] -= 1;
            if indegree[m] == 0 {
                queue.push(m);
            }
        }
        queue[qi..].sort_unstable();
    }
    if order.len() != eqs.len() {
        let cyclic: Vec<String> = (0..eqs.len())
            .filter(|i| !order.contains(i))
            .flat_map(|i| eqs[i].lhs.iter().cloned())
            .map(|v| format!("`{}`", v))
            .collect();
        return Err(vec![Diag::error(
            path,
            eqs[(0..eqs.len()).find(|i| !order.contains(i)).unwrap()].span,
            codes::ELAB_PIPELINE,
            format!("pipeline equations are cyclic: {}", cyclic.join(", ")),
        )]);
    }

    // Static domain checking along the ordered equations.
    let mut var_domain: BTreeMap<String, Arc<CompiledDomain>> = BTreeMap::new();
    let mut steps = Vec::new();
    for &i in &order {
        let eq = eqs[i];
        let callee = match (env.transforms.get(&eq.callee), env.systems.get(&eq.callee)) {
            (Some(t), None) => Callee::Transform(Arc::clone(t)),
            (None, Some(s)) => Callee::System(Arc::clone(s)),
            (Some(_), Some(_)) => {
                diags.push(Diag::error(
                    path,
                    eq.span,
                    codes::ELAB_PIPELINE,
                    format!("`{}` names both a transform and a transform system", eq.callee),
                ));
                continue;
            }
            (None, None) => {
                diags.push(Diag::error(
                    path,
                    eq.span,
                    codes::ELAB_UNKNOWN_MODULE,
                    format!("unknown transform `{}`", eq.callee),
                ));
                continue;
            }
        };
        if eq.args.len() != callee.inputs().len() {
            diags.push(Diag::error(
                path,
                eq.span,
                codes::ELAB_PIPELINE,
                format!(
                    "`{}` takes {} inputs, got {}",
                    eq.callee,
                    callee.inputs().len(),
                    eq.args.len()
                ),
            ));
            continue;
        }
        if eq.lhs.len() != callee.outputs().len() {
            diags.push(Diag::error(
                path,
                eq.span,
                codes::ELAB_PIPELINE,
                format!(
                    "`{}` produces {} outputs, bound to {} variables",
                    eq.callee,
                    callee.outputs().len(),
                    eq.lhs.len()
                ),
            ));
            continue;
        }
        let mut args = Vec::new();
        for (a, (_, need)) in eq.args.iter().zip(callee.inputs()) {
            let (arg, given): (ArgRef, Option<Arc<CompiledDomain>>) =
                if let Some(d) = input_domains.get(a.as_str()) {
                    (ArgRef::Input(a.clone()), Some(Arc::clone(d)))
                } else if let Some(d) = var_domain.get(a) {
                    (ArgRef::Var(a.clone()), Some(Arc::clone(d)))
                } else if let Some(m) = env.models.get(a) {
                    (ArgRef::Model(Arc::clone(m)), Some(Arc::clone(&m.domain)))
                } else {
                    diags.push(Diag::error(
                        path,
                        eq.span,
                        codes::ELAB_PIPELINE,
                        format!("`{}` is not an input, pipeline variable, or model", a),
                    ));
                    continue;
                };
            if let Some(d) = given {
                if !d.covers(&need.name) {
                    diags.push(Diag::error(
                        path,
                        eq.span,
                        codes::ELAB_DOMAIN_MISMATCH,
                        format!("`{}` is over `{}`, but `{}` needs `{}`", a, d.name, eq.callee, need.name),
                    ));
                }
            }
            args.push(arg);
        }
        for (v, (_, d)) in eq.lhs.iter().zip(callee.outputs()) {
            var_domain.insert(v.clone(), Arc::clone(d));
        }
        steps.push(PipelineStep { lhs: eq.lhs.clone(), callee, args, span: eq.span });
    }

    // Every output label must be produced with the declared domain.
    for (label, need) in &outputs {
        match var_domain.get(label) {
            None => diags.push(Diag::error(
                path,
                decl.span,
                codes::ELAB_PIPELINE,
                format!("output `{}` is never bound by an equation", label),
            )),
            Some(d) if d.name != need.name => diags.push(Diag::error(
                path,
                decl.span,
                codes::ELAB_DOMAIN_MISMATCH,
                format!("output `{}` has domain `{}`, declared `{}`", label, d.name, need.name),
            )),
            _ => {}
        }
    }

    if diags.is_empty() {
        Ok(CompiledSystem { name: decl.name.clone(), inputs, outputs, steps })
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use crate::loader::load_strs;

    fn expect_code(sources: &[(&str, &str)], code: &str, needle: &str) {
        let diags = load_strs(sources).err().unwrap_or_else(|| panic!("expected {}", code));
        assert!(
            diags.iter().any(|d| d.code == code && d.message.contains(needle)),
            "expected {} with `{}`, got {:?}",
            code,
            needle,
            diags
        );
    }

    const FSM: &str = "domain FSM {\n\
        State ::= new (id: Integer).\n\
        Init ::= new (st: State).\n\
        Pair ::= new (a: State, b: State).\n\
    }";

    #[test]
    fn unknown_module_reference() {
        expect_code(&[("t", "domain D includes Nope {}")], "E302", "Nope");
        expect_code(&[("t", "model M of Nope {}")], "E302", "Nope");
    }

    #[test]
    fn reserved_builtin_names() {
        expect_code(&[("t", "domain D { Integer ::= new (String). }")], "E103", "Integer");
        expect_code(&[("t", "domain D { TRUE ::= { A }. }")], "E103", "TRUE");
    }

    #[test]
    fn fact_must_be_new_kind_and_well_typed() {
        expect_code(
            &[("t", &format!("{}\nmodel M of FSM {{ Init(1). }}", FSM))],
            "E304",
            "not well-typed",
        );
        let derived = "domain D { G ::= (Integer). } model M of D { G(1). }";
        expect_code(&[("t", derived)], "E305", "new-kind");
    }

    #[test]
    fn accessor_diagnostics() {
        // No such field.
        expect_code(
            &[("t", &format!("{}\ndomain E includes FSM {{ conforms no {{ i | i is Init, no {{ s | s is State, s = i.nope }} }}. }}", FSM))],
            "E308",
            "no field `nope`",
        );
        // Ambiguous across a union: both ctors declare `st`.
        let amb = "domain A {\n\
            F ::= new (st: Integer).\n\
            G ::= new (st: String).\n\
            U ::= F + G.\n\
            q :- u is U, x = u.st, x = 1.\n\
        }";
        expect_code(&[("t", amb)], "E308", "ambiguous");
        // No constraint to infer from.
        let unconstrained = "domain B { F ::= new (x: Integer). q :- F(y), z = w.field, z = 1. }";
        expect_code(&[("t", unconstrained)], "E308", "cannot infer");
    }

    #[test]
    fn unbound_variables_rejected() {
        expect_code(
            &[("t", &format!("{}\ndomain E includes FSM {{ R ::= (State). R(s) :- no Init(s). }}", FSM))],
            "E306",
            "`s`",
        );
    }

    #[test]
    fn transform_label_distinctness() {
        expect_code(
            &[(
                "t",
                &format!("{}\ntransform T (x:: FSM) returns (x:: FSM) {{ x.State(i) :- x.State(i). }}", FSM),
            )],
            "E311",
            "not distinct",
        );
    }

    #[test]
    fn model_include_domain_mismatch() {
        let src = format!(
            "{}\n\
             domain Other {{ Thing ::= new (Integer). }}\n\
             model MO of Other {{ Thing(1). }}\n\
             model M of FSM includes MO {{ }}",
            FSM
        );
        expect_code(&[("t", &src)], "E312", "does not include");
    }

    #[test]
    fn any_modifier_is_transparent() {
        let ws = load_strs(&[(
            "t",
            "domain D { U ::= { A, B }. F ::= new (x: any U). } model M of D { F(A). }",
        )])
        .unwrap();
        assert!(ws.env.models.contains_key("M"));
    }

    #[test]
    fn identity_typing_needs_no_rewrite() {
        let ws = load_strs(&[(
            "t",
            "domain FSM { State ::= new (id: Integer). Event ::= new (id: String). }\n\
             transform T (in:: FSM) returns (out:: FSM) { out.Event(n) :- in.Event(n). }",
        )])
        .unwrap();
        let t = ws.env.transforms.get("T").unwrap();
        let copy = t.rules.iter().find(|r| r.head_symbol().base == "Event").unwrap();
        assert!(copy.rewrites.is_empty(), "String to String types directly");
    }

    #[test]
    fn nullary_application_is_the_constant() {
        let ws = load_strs(&[(
            "t",
            "domain D {\n\
                U ::= { NOP }.\n\
                P ::= (Integer).\n\
                q :- NOP().\n\
                P(1) :- q, NOP : U.\n\
             }\n\
             model M of D { NOP(). }",
        )])
        .unwrap();
        let m = ws.env.models.get("M").unwrap();
        assert!(m.facts.contains(&crate::types::Term::constant("NOP")));
        let store = crate::engine::evaluate(
            m.program(),
            &m.facts,
            &crate::engine::EvalOptions::default(),
        )
        .unwrap();
        assert!(store.contains(&crate::types::Term::constant("D.q")));
        assert!(store.contains(&crate::types::Term::apply("P", vec![crate::types::Term::int(1)])));
    }

    #[test]
    fn ambiguous_name_diagnostic() {
        let src = "domain A { F ::= new (Integer). }\n\
                   domain B includes x::A, y::A { q :- F(1). }";
        expect_code(&[("t", src)], "E211", "ambiguous");
    }
}
