//! Rule name resolution and typing.
//!
//! Resolution of a name under an outer constructor first uses the resolved
//! qualifier of that constructor as the lookup root; if that fails it is
//! retried at the empty root. Unresolved lowercase nullary names in bodies
//! become variables. After resolution each rule is analyzed: comprehension
//! captures are computed, accessors are resolved against the inferred
//! constructor type of their base variable, literals are reordered into a
//! bindable evaluation order, and head variables that do not type directly
//! get a unique inferred relabeling.

use super::rule::{literal_vars, term_vars, CompiledRule, Comprehension, Expr, Literal, Provenance};
use crate::diag::{codes, Diag, Span};
use crate::frontend::ast::*;
use crate::symtab::{LookupResult, SymbolKind, SymbolTable};
use crate::types::{
    is_subtype, relabel_type, term_in_type, Builtin, ConstAtom, QualName, RelabelingSpec, Term,
    TypeExpr, TypeRef,
};
use std::collections::{BTreeMap, BTreeSet};

pub struct ResolveCtx<'a> {
    pub table: &'a SymbolTable,
    /// Module name: qualifier protecting derived-kind constants.
    pub module: &'a str,
    /// Renaming prefixes usable by inferred rewrites (signature labels or
    /// import prefixes).
    pub prefixes: &'a [String],
    pub path: &'a str,
}

/// Whether a name occurs as a whole atom or inside a term.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Pos {
    AtomHead,
    Arg,
}

pub struct ResolvedRules {
    pub rules: Vec<CompiledRule>,
    pub vars: BTreeSet<String>,
}

/// Pre-pass over rule heads: a plain head name that resolves nowhere
/// introduces a derived-kind constant protected by the module qualifier.
pub fn intro_head_constants(
    table: &mut SymbolTable,
    module: &str,
    path: &str,
    heads: &[&RawTerm],
) -> Result<(), Vec<Diag>> {
    let mut diags = Vec::new();
    for head in heads {
        if let RawTerm::Name(q) = head {
            if !q.is_plain() {
                continue;
            }
            let name = QualName::plain(q.segments[0].clone());
            match table.lookup(&[], &name) {
                LookupResult::Found(sym) => {
                    let info = table.get(&sym).unwrap();
                    match info.kind {
                        SymbolKind::Var => diags.push(Diag::error(
                            path,
                            q.span,
                            codes::ELAB_KIND_CLASH,
                            format!(
                                "symbol `{}` appears both as a variable and a derived-kind constant",
                                q.dotted()
                            ),
                        )),
                        SymbolKind::SymConst => diags.push(Diag::error(
                            path,
                            q.span,
                            codes::ELAB_KIND_CLASH,
                            format!("symbolic constant `{}` cannot be a rule head", q.dotted()),
                        )),
                        _ => {}
                    }
                }
                LookupResult::Ambiguous(_) => {}
                LookupResult::NotFound => {
                    let qualified = name.prefixed(module);
                    let info = crate::symtab::SymbolInfo {
                        kind: SymbolKind::Derived,
                        arity: 0,
                        denotation: crate::symtab::Denotation::Type(TypeExpr::constant(qualified.clone())),
                        sig: None,
                    };
                    table.insert_unchecked(qualified, info);
                }
            }
        }
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(diags)
    }
}

impl<'a> ResolveCtx<'a> {
    fn err(&self, span: Span, code: &str, msg: impl Into<String>) -> Diag {
        Diag::error(self.path, span, code, msg)
    }

    /// Two-stage lookup: relative to `root`, then retried at the empty root.
    fn lookup2(&self, root: &[String], name: &QualName) -> LookupResult {
        match self.table.lookup(root, name) {
            LookupResult::NotFound if !root.is_empty() => self.table.lookup(&[], name),
            r => r,
        }
    }

    fn resolve_name(&self, q: &RawQual, root: &[String], pos: Pos) -> Result<Term, Diag> {
        let name = QualName::new(q.segments[..q.segments.len() - 1].to_vec(), q.segments.last().unwrap().clone());
        match self.lookup2(root, &name) {
            LookupResult::Found(sym) => {
                let info = self.table.get(&sym).unwrap();
                match (info.kind, info.arity) {
                    (SymbolKind::Var, _) => Ok(Term::Var(q.segments[0].clone())),
                    (SymbolKind::New, 0) => Ok(Term::Const(sym)),
                    (SymbolKind::SymConst, _) => match &info.denotation {
                        crate::symtab::Denotation::Ground(t) => Ok(t.clone()),
                        _ => unreachable!("symbolic constants carry their value"),
                    },
                    (SymbolKind::Derived, 0) => {
                        if pos == Pos::AtomHead {
                            Ok(Term::Const(sym))
                        } else if q.is_plain() {
                            Err(self.err(
                                q.span,
                                codes::ELAB_KIND_CLASH,
                                format!(
                                    "symbol `{}` appears both as a variable and a derived-kind constant",
                                    q.dotted()
                                ),
                            ))
                        } else {
                            Err(self.err(
                                q.span,
                                codes::ELAB_KIND_CLASH,
                                format!("derived-kind constant `{}` cannot appear inside a term", sym),
                            ))
                        }
                    }
                    (SymbolKind::Union, _) => Err(self.err(
                        q.span,
                        codes::TYPE_UNRESOLVED,
                        format!("union type `{}` cannot be used as a term", sym),
                    )),
                    (_, n) => Err(self.err(
                        q.span,
                        codes::TYPE_ARITY,
                        format!("constructor `{}` expects {} arguments", sym, n),
                    )),
                }
            }
            LookupResult::Ambiguous(cands) => Err(self.ambiguous(q.span, &name, &cands)),
            LookupResult::NotFound => {
                if q.is_plain() && (q.segments[0] == "TRUE" || q.segments[0] == "FALSE") {
                    return Ok(Term::Const(QualName::plain(q.segments[0].clone())));
                }
                let first = q.segments[0].chars().next().unwrap_or('?');
                let lower = first.is_ascii_lowercase() || first == '_';
                if q.is_plain() && lower && pos == Pos::Arg {
                    // A fresh variable, unless the module already protects
                    // this name as a derived constant.
                    let protected = QualName::plain(&q.segments[0]).prefixed(self.module);
                    if matches!(self.table.get(&protected), Some(i) if i.kind == SymbolKind::Derived) {
                        return Err(self.err(
                            q.span,
                            codes::ELAB_KIND_CLASH,
                            format!(
                                "symbol `{}` appears both as a variable and a derived-kind constant",
                                q.dotted()
                            ),
                        ));
                    }
                    return Ok(Term::Var(q.segments[0].clone()));
                }
                if q.segments.len() == 2 && lower && pos == Pos::Arg {
                    // Field access on a variable: i.st.
                    return Ok(Term::Accessor(q.segments[0].clone(), q.segments[1].clone()));
                }
                Err(self.err(q.span, codes::LOOKUP_UNRESOLVED, format!("unresolved name `{}`", q.dotted())))
            }
        }
    }

    fn ambiguous(&self, span: Span, name: &QualName, cands: &[QualName]) -> Diag {
        self.err(
            span,
            codes::LOOKUP_AMBIGUOUS,
            format!(
                "ambiguous name `{}`: could be {}",
                name,
                cands.iter().map(|c| format!("`{}`", c)).collect::<Vec<_>>().join(" or ")
            ),
        )
    }

    fn resolve_term(&self, t: &RawTerm, root: &[String], pos: Pos) -> Result<Term, Diag> {
        match t {
            RawTerm::Int(n, _) => Ok(Term::Int(n.clone())),
            RawTerm::Str(s, _) => Ok(Term::Str(s.clone())),
            RawTerm::Wildcard(_) => Ok(Term::Wildcard),
            RawTerm::Name(q) => self.resolve_name(q, root, pos),
            RawTerm::Apply(q, args, span) => {
                let name =
                    QualName::new(q.segments[..q.segments.len() - 1].to_vec(), q.segments.last().unwrap().clone());
                let sym = match self.lookup2(root, &name) {
                    LookupResult::Found(sym) => sym,
                    LookupResult::Ambiguous(cands) => return Err(self.ambiguous(q.span, &name, &cands)),
                    LookupResult::NotFound => {
                        return Err(self.err(
                            q.span,
                            codes::LOOKUP_UNRESOLVED,
                            format!("unresolved constructor `{}`", q.dotted()),
                        ))
                    }
                };
                let info = self.table.get(&sym).unwrap();
                if !matches!(info.kind, SymbolKind::New | SymbolKind::Derived) {
                    return Err(self.err(
                        q.span,
                        codes::ELAB_KIND_CLASH,
                        format!("`{}` is not a constructor", sym),
                    ));
                }
                if info.arity != args.len() {
                    return Err(self.err(
                        *span,
                        codes::TYPE_ARITY,
                        format!("constructor `{}` expects {} arguments, got {}", sym, info.arity, args.len()),
                    ));
                }
                if info.arity == 0 {
                    // `NOP()` is the constant NOP.
                    if info.kind == SymbolKind::Derived && pos == Pos::Arg {
                        return Err(self.err(
                            q.span,
                            codes::ELAB_KIND_CLASH,
                            format!("derived-kind constant `{}` cannot appear inside a term", sym),
                        ));
                    }
                    return Ok(Term::Const(sym));
                }
                let inner_root = sym.quals.clone();
                let args = args
                    .iter()
                    .map(|a| self.resolve_term(a, &inner_root, Pos::Arg))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Term::Apply(sym, args))
            }
        }
    }

    /// Resolves a surface type expression at the empty root.
    pub fn resolve_type(&self, te: &RawTypeExpr) -> Result<TypeExpr, Diag> {
        let tr = self.to_typeref(te)?;
        crate::types::normalize(&tr, &TableCtx { table: self.table }).map_err(|e| {
            self.err(first_span(te), codes::TYPE_UNRESOLVED, e.to_string())
        })
    }

    fn to_typeref(&self, te: &RawTypeExpr) -> Result<TypeRef, Diag> {
        let mut parts = Vec::new();
        for atom in &te.atoms {
            match atom {
                RawTypeAtom::Name(q) => {
                    if q.is_plain() {
                        if let Some(b) = Builtin::by_name(&q.segments[0]) {
                            parts.push(TypeRef::Builtin(b));
                            continue;
                        }
                    }
                    let name = QualName::new(
                        q.segments[..q.segments.len() - 1].to_vec(),
                        q.segments.last().unwrap().clone(),
                    );
                    match self.table.lookup(&[], &name) {
                        LookupResult::Found(sym) => parts.push(TypeRef::Named(sym)),
                        LookupResult::Ambiguous(cands) => return Err(self.ambiguous(q.span, &name, &cands)),
                        LookupResult::NotFound => {
                            return Err(self.err(
                                q.span,
                                codes::TYPE_UNRESOLVED,
                                format!("unresolved type name `{}`", q.dotted()),
                            ))
                        }
                    }
                }
                RawTypeAtom::ConstSet(cs, span) => {
                    let mut atoms = Vec::new();
                    for c in cs {
                        match c {
                            RawConst::Int(n) => atoms.push(ConstAtom::Int(n.clone())),
                            RawConst::Str(s) => atoms.push(ConstAtom::Str(s.clone())),
                            RawConst::Name(q) => {
                                if q.is_plain() && (q.segments[0] == "TRUE" || q.segments[0] == "FALSE") {
                                    atoms.push(ConstAtom::User(QualName::plain(q.segments[0].clone())));
                                    continue;
                                }
                                let name = QualName::new(
                                    q.segments[..q.segments.len() - 1].to_vec(),
                                    q.segments.last().unwrap().clone(),
                                );
                                match self.table.lookup(&[], &name) {
                                    LookupResult::Found(sym)
                                        if matches!(
                                            self.table.get(&sym).map(|i| (i.kind, i.arity)),
                                            Some((SymbolKind::New, 0))
                                        ) =>
                                    {
                                        atoms.push(ConstAtom::User(sym))
                                    }
                                    LookupResult::Found(sym) => {
                                        return Err(self.err(
                                            *span,
                                            codes::TYPE_UNRESOLVED,
                                            format!("`{}` is not a new-kind constant", sym),
                                        ))
                                    }
                                    LookupResult::Ambiguous(cands) => {
                                        return Err(self.ambiguous(*span, &name, &cands))
                                    }
                                    LookupResult::NotFound => {
                                        return Err(self.err(
                                            *span,
                                            codes::TYPE_UNRESOLVED,
                                            format!("unresolved constant `{}`", q.dotted()),
                                        ))
                                    }
                                }
                            }
                        }
                    }
                    parts.push(TypeRef::Consts(atoms));
                }
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { TypeRef::Union(parts) })
    }

    // ----- literals -----

    fn resolve_body(&self, body: &RawBody) -> Result<Vec<Vec<Literal>>, Diag> {
        body.disjuncts.iter().map(|conj| self.resolve_conjunct(conj)).collect()
    }

    fn resolve_conjunct(&self, conj: &[RawLiteral]) -> Result<Vec<Literal>, Diag> {
        conj.iter().map(|lit| self.resolve_literal(lit)).collect()
    }

    fn resolve_literal(&self, lit: &RawLiteral) -> Result<Literal, Diag> {
        match lit {
            RawLiteral::Atom(t) => {
                let term = self.resolve_term(t, &[], Pos::AtomHead)?;
                match &term {
                    Term::Const(_) | Term::Apply(..) => Ok(Literal::Atom(term)),
                    _ => Err(self.err(t.span(), codes::PARSE_SYNTAX, "expected an atom")),
                }
            }
            RawLiteral::NoAtom(t, span) => {
                let term = self.resolve_term(t, &[], Pos::AtomHead)?;
                match &term {
                    Term::Const(_) | Term::Apply(..) => Ok(Literal::NoComp(Comprehension {
                        head: Term::int(0),
                        disjuncts: vec![vec![Literal::Atom(term)]],
                        captured: BTreeSet::new(),
                    })),
                    _ => Err(self.err(*span, codes::PARSE_SYNTAX, "`no` expects an atom")),
                }
            }
            RawLiteral::NoComp(c, _) => Ok(Literal::NoComp(self.resolve_comp(c)?)),
            RawLiteral::Compare(a, op, b, _) => {
                Ok(Literal::Compare(self.resolve_expr(a)?, *op, self.resolve_expr(b)?))
            }
            RawLiteral::IsMember(x, te, span) => {
                let q = RawQual { segments: vec![x.clone()], span: *span };
                let term = self.resolve_name(&q, &[], Pos::Arg)?;
                let ty = self.resolve_type(te)?;
                match &term {
                    Term::Var(_) => Ok(Literal::IsMember(term, ty)),
                    t if t.is_ground() => Ok(Literal::IsMember(term, ty)),
                    _ => Err(self.err(*span, codes::PARSE_SYNTAX, "left side of `is` must be a variable")),
                }
            }
            RawLiteral::TypeTest(t, te, _) => {
                let term = self.resolve_term(t, &[], Pos::Arg)?;
                let ty = self.resolve_type(te)?;
                Ok(Literal::TypeTest(term, ty))
            }
        }
    }

    fn resolve_expr(&self, e: &RawExpr) -> Result<Expr, Diag> {
        match e {
            RawExpr::Term(t) => Ok(Expr::Term(self.resolve_term(t, &[], Pos::Arg)?)),
            RawExpr::Count(c, _) => Ok(Expr::Count(self.resolve_comp(c)?)),
            RawExpr::Binary(op, a, b, _) => Ok(Expr::Arith(
                *op,
                Box::new(self.resolve_expr(a)?),
                Box::new(self.resolve_expr(b)?),
            )),
        }
    }

    fn resolve_comp(&self, c: &RawComprehension) -> Result<Comprehension, Diag> {
        let head = self.resolve_term(&c.head, &[], Pos::Arg)?;
        let disjuncts = self.resolve_body(&c.body)?;
        Ok(Comprehension { head, disjuncts, captured: BTreeSet::new() })
    }
}

struct TableCtx<'a> {
    table: &'a SymbolTable,
}

impl crate::types::TypeCtx for TableCtx<'_> {
    fn symbol_shape(&self, name: &QualName) -> Option<(SymbolKind, usize)> {
        self.table.get(name).map(|i| (i.kind, i.arity))
    }

    fn union_body(&self, name: &QualName) -> Option<TypeRef> {
        match self.table.get(name).map(|i| &i.denotation) {
            Some(crate::symtab::Denotation::Type(te)) => Some(TypeRef::Canonical(te.clone())),
            _ => None,
        }
    }
}

fn first_span(te: &RawTypeExpr) -> Span {
    match te.atoms.first() {
        Some(RawTypeAtom::Name(q)) => q.span,
        Some(RawTypeAtom::ConstSet(_, s)) => *s,
        None => Span::default(),
    }
}

// ---------------------------------------------------------------------------
// Rule analysis: captures, accessors, scheduling, head typing
// ---------------------------------------------------------------------------

/// Variables occurring in a conjunct outside comprehensions: these become
/// bound when the conjunct is evaluated.
fn conjunct_surface_vars(conj: &[Literal], out: &mut BTreeSet<String>) {
    for lit in conj {
        match lit {
            Literal::Atom(t) | Literal::IsMember(t, _) | Literal::TypeTest(t, _) => term_vars(t, out),
            Literal::Compare(a, _, b) => {
                surface_expr_vars(a, out);
                surface_expr_vars(b, out);
            }
            Literal::NoComp(_) => {}
        }
    }
}

fn surface_expr_vars(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Term(t) => term_vars(t, out),
        Expr::Accessor { var, .. } => {
            out.insert(var.clone());
        }
        Expr::Count(_) => {}
        Expr::Arith(_, a, b) => {
            surface_expr_vars(a, out);
            surface_expr_vars(b, out);
        }
    }
}

fn fill_captures(conj: &mut [Literal], visible: &BTreeSet<String>) {
    let mut level = visible.clone();
    conjunct_surface_vars(conj, &mut level);
    for lit in conj {
        match lit {
            Literal::NoComp(c) => fill_comp_captures(c, &level),
            Literal::Compare(a, _, b) => {
                fill_expr_captures(a, &level);
                fill_expr_captures(b, &level);
            }
            _ => {}
        }
    }
}

fn fill_expr_captures(e: &mut Expr, level: &BTreeSet<String>) {
    match e {
        Expr::Count(c) => fill_comp_captures(c, level),
        Expr::Arith(_, a, b) => {
            fill_expr_captures(a, level);
            fill_expr_captures(b, level);
        }
        _ => {}
    }
}

fn fill_comp_captures(c: &mut Comprehension, visible: &BTreeSet<String>) {
    let mut all = BTreeSet::new();
    term_vars(&c.head, &mut all);
    for conj in &c.disjuncts {
        for lit in conj {
            literal_vars(lit, &mut all);
        }
    }
    c.captured = all.intersection(visible).cloned().collect();
    for conj in &mut c.disjuncts {
        fill_captures(conj, visible);
    }
}

struct Analyzer<'a> {
    ctx: &'a ResolveCtx<'a>,
    span: Span,
}

impl<'a> Analyzer<'a> {
    /// Resolves accessors against the inferred constructor type of their
    /// base variable. `scopes` is the chain of enclosing conjuncts.
    fn finalize_accessors(&self, conj: &mut [Literal], scopes: &[Vec<Literal>]) -> Result<(), Diag> {
        let mut chain: Vec<Vec<Literal>> = scopes.to_vec();
        chain.push(conj.to_vec());
        for lit in conj.iter_mut() {
            match lit {
                Literal::Compare(a, _, b) => {
                    self.finalize_expr(a, &chain)?;
                    self.finalize_expr(b, &chain)?;
                }
                Literal::NoComp(c) => {
                    for d in &mut c.disjuncts {
                        self.finalize_accessors(d, &chain)?;
                    }
                }
                Literal::Atom(t) | Literal::IsMember(t, _) | Literal::TypeTest(t, _) => {
                    self.forbid_accessor(t)?;
                }
            }
        }
        Ok(())
    }

    fn finalize_expr(&self, e: &mut Expr, chain: &[Vec<Literal>]) -> Result<(), Diag> {
        match e {
            Expr::Term(Term::Accessor(v, f)) => {
                let resolved = self.resolve_accessor(v, f, chain)?;
                *e = resolved;
                Ok(())
            }
            Expr::Term(t) => self.forbid_accessor_inside(t),
            Expr::Count(c) => {
                for d in &mut c.disjuncts {
                    let mut sub = chain.to_vec();
                    sub.push(d.clone());
                    self.finalize_accessors(d, chain)?;
                    let _ = sub;
                }
                Ok(())
            }
            Expr::Arith(_, a, b) => {
                self.finalize_expr(a, chain)?;
                self.finalize_expr(b, chain)
            }
            Expr::Accessor { .. } => Ok(()),
        }
    }

    fn forbid_accessor(&self, t: &Term) -> Result<(), Diag> {
        match t {
            Term::Accessor(v, f) => Err(Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_BAD_ACCESSOR,
                format!("field access `{}.{}` is only allowed in comparisons", v, f),
            )),
            Term::Apply(_, args) => args.iter().try_for_each(|a| self.forbid_accessor(a)),
            _ => Ok(()),
        }
    }

    fn forbid_accessor_inside(&self, t: &Term) -> Result<(), Diag> {
        match t {
            Term::Apply(_, args) => args.iter().try_for_each(|a| self.forbid_accessor(a)),
            _ => Ok(()),
        }
    }

    fn resolve_accessor(&self, var: &str, field: &str, chain: &[Vec<Literal>]) -> Result<Expr, Diag> {
        // Gather type constraints on `var` from every enclosing conjunct.
        let mut constraint: Option<TypeExpr> = None;
        let mut add = |ty: &TypeExpr| {
            constraint = Some(match &constraint {
                None => ty.clone(),
                Some(prev) => prev.intersect(ty),
            });
        };
        for conj in chain {
            for lit in conj {
                match lit {
                    Literal::IsMember(Term::Var(v), ty) | Literal::TypeTest(Term::Var(v), ty) if v == var => {
                        add(ty)
                    }
                    Literal::Atom(Term::Apply(f, args)) => {
                        if let Some(arg_types) = crate::types::SigCtx::ctor_arg_types(self.ctx.table, f) {
                            for (a, at) in args.iter().zip(arg_types.iter()) {
                                if matches!(a, Term::Var(v) if v == var) {
                                    add(at);
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        let constraint = constraint.ok_or_else(|| {
            Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_BAD_ACCESSOR,
                format!("cannot infer the type of `{}` for field access `{}.{}`", var, var, field),
            )
        })?;
        let mut hits: Vec<(QualName, usize)> = Vec::new();
        for ctor in &constraint.ctors {
            if let Some(info) = self.ctx.table.get(ctor) {
                if let Some(sig) = &info.sig {
                    for (i, fld) in sig.fields.iter().enumerate() {
                        if fld.name.as_deref() == Some(field) {
                            hits.push((ctor.clone(), i));
                        }
                    }
                }
            }
        }
        match hits.len() {
            1 => {
                let (ctor, index) = hits.pop().unwrap();
                Ok(Expr::Accessor { var: var.to_string(), ctor, index })
            }
            0 => Err(Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_BAD_ACCESSOR,
                format!("type `{}` of `{}` has no field `{}`", constraint, var, field),
            )),
            _ => Err(Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_BAD_ACCESSOR,
                format!(
                    "field `{}` is ambiguous on `{}`: {}",
                    field,
                    constraint,
                    hits.iter().map(|(c, _)| format!("`{}`", c)).collect::<Vec<_>>().join(", ")
                ),
            )),
        }
    }

    // ----- scheduling -----

    fn schedule(&self, conj: Vec<Literal>, initially_bound: &BTreeSet<String>) -> Result<Vec<Literal>, Diag> {
        let mut pending: Vec<Literal> = conj;
        let mut scheduled = Vec::with_capacity(pending.len());
        let mut bound = initially_bound.clone();
        while !pending.is_empty() {
            let pick = pending.iter().position(|lit| self.ready(lit, &bound));
            match pick {
                Some(i) => {
                    let lit = pending.remove(i);
                    self.bind_vars(&lit, &mut bound);
                    scheduled.push(lit);
                }
                None => {
                    let mut vars = BTreeSet::new();
                    literal_vars(&pending[0], &mut vars);
                    let missing: Vec<String> =
                        vars.difference(&bound).map(|v| format!("`{}`", v)).collect();
                    return Err(Diag::error(
                        self.ctx.path,
                        self.span,
                        codes::ELAB_UNBOUND_VAR,
                        format!(
                            "literal `{}` cannot be evaluated: unbound {}",
                            pending[0],
                            if missing.is_empty() { "variables".to_string() } else { missing.join(", ") }
                        ),
                    ));
                }
            }
        }
        // Schedule nested comprehension bodies with their captures bound.
        for lit in &mut scheduled {
            self.schedule_nested(lit)?;
        }
        Ok(scheduled)
    }

    fn schedule_nested(&self, lit: &mut Literal) -> Result<(), Diag> {
        match lit {
            Literal::NoComp(c) => self.schedule_comp(c),
            Literal::Compare(a, _, b) => {
                self.schedule_expr(a)?;
                self.schedule_expr(b)
            }
            _ => Ok(()),
        }
    }

    fn schedule_expr(&self, e: &mut Expr) -> Result<(), Diag> {
        match e {
            Expr::Count(c) => self.schedule_comp(c),
            Expr::Arith(_, a, b) => {
                self.schedule_expr(a)?;
                self.schedule_expr(b)
            }
            _ => Ok(()),
        }
    }

    fn schedule_comp(&self, c: &mut Comprehension) -> Result<(), Diag> {
        let captured = c.captured.clone();
        let mut new_disjuncts = Vec::with_capacity(c.disjuncts.len());
        for conj in c.disjuncts.drain(..) {
            let scheduled = self.schedule(conj, &captured)?;
            // The head must be instantiable from the disjunct's bindings.
            let mut bound = captured.clone();
            for lit in &scheduled {
                self.bind_vars(lit, &mut bound);
            }
            let mut head_vars = BTreeSet::new();
            term_vars(&c.head, &mut head_vars);
            if let Some(v) = head_vars.difference(&bound).next() {
                return Err(Diag::error(
                    self.ctx.path,
                    self.span,
                    codes::ELAB_UNBOUND_VAR,
                    format!("comprehension head variable `{}` is not bound by the body", v),
                ));
            }
            new_disjuncts.push(scheduled);
        }
        c.disjuncts = new_disjuncts;
        Ok(())
    }

    fn ready(&self, lit: &Literal, bound: &BTreeSet<String>) -> bool {
        match lit {
            Literal::Atom(_) => true,
            Literal::IsMember(..) => true,
            Literal::TypeTest(t, _) => {
                let mut vs = BTreeSet::new();
                term_vars(t, &mut vs);
                vs.is_subset(bound)
            }
            Literal::NoComp(c) => c.captured.is_subset(bound),
            Literal::Compare(a, op, b) => {
                let ea = self.evaluable(a, bound);
                let eb = self.evaluable(b, bound);
                if *op == CompareOp::Eq {
                    (ea || eb) && self.pattern_side_ok(a, ea) && self.pattern_side_ok(b, eb)
                } else {
                    ea && eb
                }
            }
        }
    }

    fn pattern_side_ok(&self, e: &Expr, evaluable: bool) -> bool {
        // A non-evaluable side of `=` must be a unifiable term pattern.
        evaluable || matches!(e, Expr::Term(_))
    }

    fn evaluable(&self, e: &Expr, bound: &BTreeSet<String>) -> bool {
        match e {
            Expr::Term(t) => {
                let mut vs = BTreeSet::new();
                term_vars(t, &mut vs);
                vs.is_subset(bound)
            }
            Expr::Accessor { var, .. } => bound.contains(var),
            Expr::Count(c) => c.captured.is_subset(bound),
            Expr::Arith(_, a, b) => self.evaluable(a, bound) && self.evaluable(b, bound),
        }
    }

    fn bind_vars(&self, lit: &Literal, bound: &mut BTreeSet<String>) {
        match lit {
            Literal::Atom(t) | Literal::IsMember(t, _) => term_vars(t, bound),
            Literal::Compare(a, op, b) if *op == CompareOp::Eq => {
                surface_expr_vars(a, bound);
                surface_expr_vars(b, bound);
            }
            _ => {}
        }
    }

    // ----- head typing and inferred rewrites -----

    fn type_head(
        &self,
        head: &Term,
        body: &[Literal],
    ) -> Result<BTreeMap<String, RelabelingSpec>, Diag> {
        let mut lhs: BTreeMap<String, TypeExpr> = BTreeMap::new();
        self.walk_head(head, None, &mut lhs)?;

        let mut rewrites = BTreeMap::new();
        for (var, t_lhs) in lhs {
            let t_rhs = match self.body_type(&var, body) {
                Some(t) => t,
                // Bound only through equalities; checked at run time.
                None => continue,
            };
            if is_subtype(&t_rhs, &t_lhs) {
                continue;
            }
            let rho = self.infer_rewrite(&t_rhs, &t_lhs).map_err(|cands| match cands.len() {
                0 => Diag::error(
                    self.ctx.path,
                    self.span,
                    codes::ELAB_RULE_TYPE,
                    format!(
                        "variable `{}` has type `{}` in the body but the head needs `{}`, and no relabeling fixes it",
                        var, t_rhs, t_lhs
                    ),
                ),
                _ => Diag::error(
                    self.ctx.path,
                    self.span,
                    codes::ELAB_AMBIGUOUS_REWRITE,
                    format!(
                        "variable `{}` admits more than one relabeling: {}",
                        var,
                        cands.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
                    ),
                ),
            })?;
            rewrites.insert(var, rho);
        }
        Ok(rewrites)
    }

    fn walk_head(
        &self,
        t: &Term,
        expected: Option<&TypeExpr>,
        lhs: &mut BTreeMap<String, TypeExpr>,
    ) -> Result<(), Diag> {
        match t {
            Term::Apply(f, args) => {
                if let Some(exp) = expected {
                    if !exp.ctors.contains(f) {
                        return Err(Diag::error(
                            self.ctx.path,
                            self.span,
                            codes::ELAB_RULE_TYPE,
                            format!("constructor `{}` is not allowed here: expected `{}`", f, exp),
                        ));
                    }
                }
                let sig = self
                    .ctx
                    .table
                    .get(f)
                    .and_then(|i| i.sig.clone())
                    .expect("resolved constructors have signatures");
                for (a, fld) in args.iter().zip(sig.fields.iter()) {
                    self.walk_head(a, Some(&fld.ty), lhs)?;
                }
                Ok(())
            }
            Term::Var(v) => {
                if let Some(exp) = expected {
                    let entry = lhs
                        .entry(v.clone())
                        .and_modify(|t| *t = t.intersect(exp))
                        .or_insert_with(|| exp.clone());
                    let _ = entry;
                }
                Ok(())
            }
            Term::Wildcard => Err(Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_UNBOUND_VAR,
                "`_` is not allowed in a rule head",
            )),
            Term::Accessor(v, f) => Err(Diag::error(
                self.ctx.path,
                self.span,
                codes::ELAB_BAD_ACCESSOR,
                format!("field access `{}.{}` is not allowed in a rule head", v, f),
            )),
            ground => {
                if let Some(exp) = expected {
                    if !term_in_type(ground, exp, self.ctx.table) {
                        return Err(Diag::error(
                            self.ctx.path,
                            self.span,
                            codes::ELAB_RULE_TYPE,
                            format!("head value `{}` is not a member of `{}`", ground, exp),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Intersection of the positive type constraints a body puts on `var`.
    fn body_type(&self, var: &str, body: &[Literal]) -> Option<TypeExpr> {
        let mut acc: Option<TypeExpr> = None;
        let mut add = |ty: &TypeExpr| {
            acc = Some(match &acc {
                None => ty.clone(),
                Some(prev) => prev.intersect(ty),
            });
        };
        for lit in body {
            match lit {
                Literal::Atom(Term::Apply(f, args)) => {
                    if let Some(arg_types) = crate::types::SigCtx::ctor_arg_types(self.ctx.table, f) {
                        for (a, at) in args.iter().zip(arg_types.iter()) {
                            if matches!(a, Term::Var(v) if v == var) {
                                add(at);
                            }
                        }
                    }
                }
                Literal::IsMember(Term::Var(v), ty) | Literal::TypeTest(Term::Var(v), ty) if v == var => {
                    add(ty)
                }
                _ => {}
            }
        }
        acc
    }

    fn infer_rewrite(
        &self,
        t_rhs: &TypeExpr,
        t_lhs: &TypeExpr,
    ) -> Result<RelabelingSpec, Vec<RelabelingSpec>> {
        let mut candidates: Vec<Vec<String>> = vec![Vec::new()];
        for p in self.ctx.prefixes {
            candidates.push(vec![p.clone()]);
        }
        let mut passing = Vec::new();
        for p in &candidates {
            for q in &candidates {
                if p == q {
                    continue;
                }
                let rho = RelabelingSpec { from: p.clone(), to: q.clone() };
                if let Ok(relabeled) = relabel_type(&rho, t_rhs) {
                    if is_subtype(&relabeled, t_lhs) {
                        passing.push(rho);
                    }
                }
            }
        }
        if passing.len() == 1 {
            Ok(passing.pop().unwrap())
        } else {
            Err(passing)
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

fn analyze_rule(
    ctx: &ResolveCtx,
    head: Term,
    mut conjunct: Vec<Literal>,
    span: Span,
    provenance: Provenance,
    infer: bool,
) -> Result<CompiledRule, Diag> {
    let analyzer = Analyzer { ctx, span };
    let mut visible = BTreeSet::new();
    term_vars(&head, &mut visible);
    fill_captures(&mut conjunct, &visible);
    analyzer.finalize_accessors(&mut conjunct, &[])?;
    let scheduled = analyzer.schedule(conjunct, &BTreeSet::new())?;

    // Range restriction: every head variable is bound by the body.
    let mut bound = BTreeSet::new();
    for lit in &scheduled {
        analyzer.bind_vars(lit, &mut bound);
    }
    let mut head_vars = BTreeSet::new();
    term_vars(&head, &mut head_vars);
    if let Some(v) = head_vars.difference(&bound).next() {
        return Err(Diag::error(
            ctx.path,
            span,
            codes::ELAB_UNBOUND_VAR,
            format!("head variable `{}` does not occur positively in the body", v),
        ));
    }

    let rewrites = if infer { analyzer.type_head(&head, &scheduled)? } else { BTreeMap::new() };
    Ok(CompiledRule { head, body: scheduled, rewrites, provenance })
}

fn collect_rule_vars(rule: &CompiledRule, vars: &mut BTreeSet<String>) {
    let mut all = BTreeSet::new();
    term_vars(&rule.head, &mut all);
    for lit in &rule.body {
        literal_vars(lit, &mut all);
    }
    // Internal variables generated by desugaring carry a `%` marker and
    // never surface in the symbol table.
    vars.extend(all.into_iter().filter(|v| !v.starts_with('%')));
}

/// Resolves one source rule into compiled rules: one per head atom and body
/// disjunct, names resolved and literals scheduled.
pub fn resolve_rule(ctx: &ResolveCtx, raw: &RawRule, module: &str) -> Result<ResolvedRules, Vec<Diag>> {
    let mut diags = Vec::new();
    let mut rules = Vec::new();
    let mut vars = BTreeSet::new();
    for (hi, raw_head) in raw.heads.iter().enumerate() {
        let head = match ctx.resolve_term(raw_head, &[], Pos::AtomHead) {
            Ok(h @ (Term::Const(_) | Term::Apply(..))) => h,
            Ok(_) => {
                diags.push(Diag::error(
                    ctx.path,
                    raw_head.span(),
                    codes::PARSE_SYNTAX,
                    "rule head must be a constructor atom or constant",
                ));
                continue;
            }
            Err(d) => {
                diags.push(d);
                continue;
            }
        };
        match ctx.resolve_body(&raw.body) {
            Ok(disjuncts) => {
                for (di, conj) in disjuncts.into_iter().enumerate() {
                    let provenance = Provenance {
                        module: module.to_string(),
                        label: format!("{}:{}:h{}d{}", raw.span.line, raw.span.col, hi, di),
                    };
                    match analyze_rule(ctx, head.clone(), conj, raw.span, provenance, true) {
                        Ok(rule) => {
                            collect_rule_vars(&rule, &mut vars);
                            rules.push(rule);
                        }
                        Err(d) => diags.push(d),
                    }
                }
            }
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(ResolvedRules { rules, vars })
    } else {
        Err(diags)
    }
}

/// Resolves a contract or conformance clause body into rules deriving the
/// given hidden per-clause constant.
pub fn resolve_clause(
    ctx: &ResolveCtx,
    body: &RawBody,
    constant: &QualName,
    span: Span,
    module: &str,
) -> Result<ResolvedRules, Vec<Diag>> {
    let mut rules = Vec::new();
    let mut vars = BTreeSet::new();
    let disjuncts = ctx.resolve_body(body).map_err(|d| vec![d])?;
    let mut diags = Vec::new();
    for (di, conj) in disjuncts.into_iter().enumerate() {
        let provenance = Provenance {
            module: module.to_string(),
            label: format!("{}:{}:c{}", span.line, span.col, di),
        };
        match analyze_rule(ctx, Term::Const(constant.clone()), conj, span, provenance, false) {
            Ok(rule) => {
                collect_rule_vars(&rule, &mut vars);
                rules.push(rule);
            }
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(ResolvedRules { rules, vars })
    } else {
        Err(diags)
    }
}

/// Resolves a model-level ground term: a fact or a symbolic-constant value.
/// Names that would become variables in a rule are unresolved here.
pub fn resolve_model_term(ctx: &ResolveCtx, raw: &RawTerm) -> Result<Term, Diag> {
    let term = ctx.resolve_term(raw, &[], Pos::AtomHead)?;
    fn first_open(t: &Term) -> Option<String> {
        match t {
            Term::Var(v) => Some(v.clone()),
            Term::Wildcard => Some("_".to_string()),
            Term::Accessor(v, f) => Some(format!("{}.{}", v, f)),
            Term::Apply(_, args) => args.iter().find_map(first_open),
            _ => None,
        }
    }
    if let Some(v) = first_open(&term) {
        return Err(Diag::error(
            ctx.path,
            raw.span(),
            codes::LOOKUP_UNRESOLVED,
            format!("unresolved name `{}` in a model term", v),
        ));
    }
    Ok(term)
}

/// Scheduled goal conjuncts plus the goal variables in reporting order.
pub type ResolvedGoal = (Vec<Vec<Literal>>, Vec<String>);

/// Resolves a query goal: a body whose disjuncts are scheduled with no
/// initially bound variables. Returns the conjuncts and the goal variables
/// in first-occurrence order.
pub fn resolve_goal(ctx: &ResolveCtx, body: &RawBody) -> Result<ResolvedGoal, Vec<Diag>> {
    let analyzer = Analyzer { ctx, span: Span::default() };
    let disjuncts = ctx.resolve_body(body).map_err(|d| vec![d])?;
    let mut order: Vec<String> = Vec::new();
    for conj in &disjuncts {
        let mut seen = BTreeSet::new();
        for lit in conj {
            let mut vs = BTreeSet::new();
            literal_vars(lit, &mut vs);
            for v in vs {
                if seen.insert(v.clone()) && !order.contains(&v) {
                    order.push(v);
                }
            }
        }
    }
    let mut scheduled = Vec::new();
    for mut conj in disjuncts {
        fill_captures(&mut conj, &BTreeSet::new());
        analyzer.finalize_accessors(&mut conj, &[]).map_err(|d| vec![d])?;
        let s = analyzer.schedule(conj, &BTreeSet::new()).map_err(|d| vec![d])?;
        scheduled.push(s);
    }
    Ok((scheduled, order))
}
