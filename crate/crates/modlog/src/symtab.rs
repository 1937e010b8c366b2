//! Symbol tables: qualified symbols mapped to (kind, arity, denotation)
//! triples, with composition, qualifier embedding, and embedding-based
//! lookup.

use crate::types::{relabel_term, relabel_type, QualName, RelabelingSpec, SigCtx, Term, TypeExpr};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

/// The five kinds of user-introduced symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    /// New-kind constructor: DSL syntax; allowed in models and outputs.
    New,
    /// Derived-kind constructor: judgments only.
    Derived,
    /// Union type.
    Union,
    /// Rule variable.
    Var,
    /// Symbolic constant defined in a model.
    SymConst,
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymbolKind::New => "eta",
            SymbolKind::Derived => "delta",
            SymbolKind::Union => "mu",
            SymbolKind::Var => "nu",
            SymbolKind::SymConst => "sigma",
        };
        write!(f, "{}", s)
    }
}

/// The set-of-terms component of a table triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Denotation {
    /// A type denotation (constructors, unions, constants).
    Type(TypeExpr),
    /// Variables can be substituted for any term.
    AllTerms,
    /// Symbolic constants: the exact evaluated term.
    Ground(Term),
}

/// One named argument slot of a constructor signature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Field {
    pub name: Option<String>,
    pub ty: TypeExpr,
}

/// Declared shape of a constructor with arity > 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CtorSig {
    pub fields: Vec<Field>,
    /// For `fun` constructors, the number of domain fields before `->`.
    pub fun_split: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolInfo {
    pub kind: SymbolKind,
    pub arity: usize,
    pub denotation: Denotation,
    pub sig: Option<CtorSig>,
}

impl SymbolInfo {
    /// Triple equality for the shared case of table composition. Field
    /// names are not part of the triple; argument types are.
    fn triple_equal(&self, other: &SymbolInfo) -> bool {
        if self.kind != other.kind || self.arity != other.arity {
            return false;
        }
        if self.denotation != other.denotation {
            return false;
        }
        match (&self.sig, &other.sig) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                a.fun_split == b.fun_split
                    && a.fields.len() == b.fields.len()
                    && a.fields.iter().zip(&b.fields).all(|(x, y)| x.ty == y.ty)
            }
            _ => false,
        }
    }
}

/// A composition conflict: one symbol with incompatible definitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub symbol: QualName,
    pub definitions: Vec<SymbolInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolTable {
    entries: BTreeMap<QualName, SymbolInfo>,
}

impl SymbolTable {
    pub fn new() -> Self {
        SymbolTable::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, name: &QualName) -> Option<&SymbolInfo> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &QualName) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QualName, &SymbolInfo)> {
        self.entries.iter()
    }

    /// Inserts a definition, failing on a kind/arity/denotation clash with
    /// an existing entry for the same symbol.
    pub fn insert(&mut self, name: QualName, info: SymbolInfo) -> Result<(), Conflict> {
        match self.entries.get(&name) {
            None => {
                self.entries.insert(name, info);
                Ok(())
            }
            Some(existing) if existing.triple_equal(&info) => Ok(()),
            Some(existing) => Err(Conflict { symbol: name, definitions: vec![existing.clone(), info] }),
        }
    }

    /// Inserts or replaces without conflict checking. Used when a stage
    /// refines its own placeholder entries.
    pub fn insert_unchecked(&mut self, name: QualName, info: SymbolInfo) {
        self.entries.insert(name, info);
    }

    /// Table composition: keep sole definitions, keep shared definitions
    /// when the triples agree, and report every disagreeing symbol.
    pub fn compose(&self, other: &SymbolTable) -> Result<SymbolTable, Vec<Conflict>> {
        ComposeAcc::from(self).merge(other).into_table()
    }
}

/// Accumulator for n-ary composition with poison semantics: once a symbol
/// conflicts it stays conflicting, which makes composition associative and
/// commutative including its conflict set.
#[derive(Debug, Clone, Default)]
pub struct ComposeAcc {
    slots: BTreeMap<QualName, Slot>,
}

#[derive(Debug, Clone)]
enum Slot {
    Ok(SymbolInfo),
    Bottom(Vec<SymbolInfo>),
}

impl ComposeAcc {
    pub fn from(table: &SymbolTable) -> Self {
        ComposeAcc {
            slots: table
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Slot::Ok(v.clone())))
                .collect(),
        }
    }

    pub fn merge(mut self, other: &SymbolTable) -> Self {
        for (name, info) in &other.entries {
            match self.slots.get_mut(name) {
                None => {
                    self.slots.insert(name.clone(), Slot::Ok(info.clone()));
                }
                Some(Slot::Ok(existing)) => {
                    if !existing.triple_equal(info) {
                        let defs = vec![existing.clone(), info.clone()];
                        self.slots.insert(name.clone(), Slot::Bottom(dedup(defs)));
                    }
                }
                Some(Slot::Bottom(defs)) => {
                    defs.push(info.clone());
                    let merged = dedup(std::mem::take(defs));
                    *defs = merged;
                }
            }
        }
        self
    }

    pub fn conflict_symbols(&self) -> Vec<QualName> {
        self.slots
            .iter()
            .filter(|(_, v)| matches!(v, Slot::Bottom(_)))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn into_table(self) -> Result<SymbolTable, Vec<Conflict>> {
        let mut entries = BTreeMap::new();
        let mut conflicts = Vec::new();
        for (name, slot) in self.slots {
            match slot {
                Slot::Ok(info) => {
                    entries.insert(name, info);
                }
                Slot::Bottom(defs) => conflicts.push(Conflict { symbol: name, definitions: defs }),
            }
        }
        if conflicts.is_empty() {
            Ok(SymbolTable { entries })
        } else {
            Err(conflicts)
        }
    }
}

fn dedup(mut defs: Vec<SymbolInfo>) -> Vec<SymbolInfo> {
    defs.sort();
    defs.dedup();
    defs
}

/// Qualifier embedding: `p` embeds in `q` when `p` is a (not necessarily
/// contiguous) subsequence of `q`. Greedy left-to-right matching is complete
/// for subsequence embedding.
pub fn embeds(p: &[String], q: &[String]) -> bool {
    let mut qi = q.iter();
    'outer: for pi in p {
        for cand in qi.by_ref() {
            if cand == pi {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Outcome of an embedding lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LookupResult {
    Found(QualName),
    /// No table symbol begins with the root and embeds the query.
    NotFound,
    /// Two or more minimal-length candidates.
    Ambiguous(Vec<QualName>),
}

impl LookupResult {
    pub fn ok(self) -> Option<QualName> {
        match self {
            LookupResult::Found(n) => Some(n),
            _ => None,
        }
    }
}

impl SymbolTable {
    /// Resolves `name` relative to `root`: among table symbols of the form
    /// `root ++ q . base` whose `q` embeds the query qualifiers, returns the
    /// one with the unique shortest `q`; ties and misses are failures.
    pub fn lookup(&self, root: &[String], name: &QualName) -> LookupResult {
        let mut best: Vec<QualName> = Vec::new();
        let mut best_len = usize::MAX;
        for key in self.entries.keys() {
            if key.base != name.base || !key.starts_with(root) {
                continue;
            }
            let q = &key.quals[root.len()..];
            if !embeds(&name.quals, q) {
                continue;
            }
            match q.len().cmp(&best_len) {
                std::cmp::Ordering::Less => {
                    best_len = q.len();
                    best = vec![key.clone()];
                }
                std::cmp::Ordering::Equal => best.push(key.clone()),
                std::cmp::Ordering::Greater => {}
            }
        }
        match best.len() {
            0 => LookupResult::NotFound,
            1 => {
                let found = best.pop().unwrap();
                debug_assert!(self.contains(&found));
                debug_assert!(found.starts_with(root));
                debug_assert!(embeds(&name.quals, &found.quals[root.len()..]));
                LookupResult::Found(found)
            }
            _ => LookupResult::Ambiguous(best),
        }
    }

    /// Renames every entry `s` to `prefix.s`, except variables and nullary
    /// new-kind constants, which keep their names. Denotations and argument
    /// types are relabeled with `rho_{eps -> prefix}`.
    pub fn rename(&self, prefix: &str) -> SymbolTable {
        let rho = RelabelingSpec { from: Vec::new(), to: vec![prefix.to_string()] };
        let mut entries = BTreeMap::new();
        for (name, info) in &self.entries {
            let keep_name = matches!(info.kind, SymbolKind::Var)
                || (matches!(info.kind, SymbolKind::New) && info.arity == 0);
            let new_name = if keep_name { name.clone() } else { name.prefixed(prefix) };
            let denotation = match &info.denotation {
                Denotation::Type(t) => {
                    Denotation::Type(relabel_type(&rho, t).expect("eps prefix always applies"))
                }
                Denotation::AllTerms => Denotation::AllTerms,
                Denotation::Ground(t) => {
                    Denotation::Ground(relabel_term(&rho, t).expect("ground sigma term"))
                }
            };
            let sig = info.sig.as_ref().map(|sig| CtorSig {
                fields: sig
                    .fields
                    .iter()
                    .map(|f| Field {
                        name: f.name.clone(),
                        ty: relabel_type(&rho, &f.ty).expect("eps prefix always applies"),
                    })
                    .collect(),
                fun_split: sig.fun_split,
            });
            let prev = entries.insert(new_name, SymbolInfo { kind: info.kind, arity: info.arity, denotation, sig });
            debug_assert!(prev.is_none(), "renaming cannot collide for fresh prefixes");
        }
        SymbolTable { entries }
    }

    /// Rows of the table sorted by (qualifiers, name): one
    /// `(qualifiers, name, kind, arity)` tuple per symbol.
    pub fn rows(&self) -> Vec<TableRow> {
        self.entries
            .iter()
            .map(|(name, info)| TableRow {
                qualifiers: name.quals.join("."),
                name: name.base.clone(),
                kind: info.kind,
                arity: info.arity,
            })
            .collect()
    }
}

/// One formatted symbol-table row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableRow {
    pub qualifiers: String,
    pub name: String,
    pub kind: SymbolKind,
    pub arity: usize,
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {} | {}", self.qualifiers, self.name, self.kind, self.arity)
    }
}

impl SigCtx for SymbolTable {
    fn ctor_arg_types(&self, name: &QualName) -> Option<Vec<TypeExpr>> {
        self.entries
            .get(name)
            .and_then(|info| info.sig.as_ref())
            .map(|sig| sig.fields.iter().map(|f| f.ty.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta0(name: &str) -> (QualName, SymbolInfo) {
        let qn = QualName::from_dotted(name);
        (
            qn.clone(),
            SymbolInfo {
                kind: SymbolKind::Derived,
                arity: 0,
                denotation: Denotation::Type(TypeExpr::constant(qn)),
                sig: None,
            },
        )
    }

    fn eta(name: &str, arity: usize) -> (QualName, SymbolInfo) {
        let qn = QualName::from_dotted(name);
        let fields = (0..arity)
            .map(|_| Field { name: None, ty: TypeExpr::integers() })
            .collect();
        (
            qn.clone(),
            SymbolInfo {
                kind: SymbolKind::New,
                arity,
                denotation: if arity == 0 {
                    Denotation::Type(TypeExpr::constant(qn))
                } else {
                    Denotation::Type(TypeExpr::ctor(qn))
                },
                sig: (arity > 0).then_some(CtorSig { fields, fun_split: None }),
            },
        )
    }

    fn table(entries: Vec<(QualName, SymbolInfo)>) -> SymbolTable {
        let mut t = SymbolTable::new();
        for (n, i) in entries {
            t.insert(n, i).unwrap();
        }
        t
    }

    #[test]
    fn embeds_examples() {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(embeds(&[], &s(&["a", "b"])));
        assert!(embeds(&s(&["b1", "b2"]), &s(&["a1", "b1", "a2", "b2"])));
        assert!(!embeds(&s(&["b2", "b1"]), &s(&["a1", "b1", "a2", "b2"])));
        // reflexive
        assert!(embeds(&s(&["x", "y"]), &s(&["x", "y"])));
    }

    fn lookup_table() -> SymbolTable {
        table(vec![
            delta0("f"),
            delta0("A.f"),
            delta0("A.A.f"),
            delta0("A.B.C.g"),
            delta0("A.C.B.g"),
        ])
    }

    #[test]
    fn lookup_shortest_qualifier() {
        let t = lookup_table();
        let r = |root: &[&str], name: &str| {
            let root: Vec<String> = root.iter().map(|s| s.to_string()).collect();
            t.lookup(&root, &QualName::from_dotted(name))
        };
        assert_eq!(r(&[], "f"), LookupResult::Found(QualName::plain("f")));
        assert_eq!(r(&["A"], "A.f"), LookupResult::Found(QualName::from_dotted("A.A.f")));
        assert_eq!(r(&["A"], "A.A.f"), LookupResult::NotFound);
        assert!(matches!(r(&[], "B.g"), LookupResult::Ambiguous(_)));
        assert_eq!(r(&[], "B.C.g"), LookupResult::Found(QualName::from_dotted("A.B.C.g")));
        assert_eq!(r(&["B"], "C.g"), LookupResult::NotFound);
    }

    #[test]
    fn compose_shared_and_conflicting() {
        // Equal triples are shared once.
        let t1 = table(vec![eta("State", 1)]);
        let t2 = table(vec![eta("State", 1)]);
        let composed = t1.compose(&t2).unwrap();
        assert_eq!(composed.len(), 1);

        // Nil shared between two unions stays legal.
        let nil1 = table(vec![eta("Nil", 0)]);
        let nil2 = table(vec![eta("Nil", 0)]);
        assert!(nil1.compose(&nil2).is_ok());

        // Arity mismatch forces bottom.
        let f2 = table(vec![eta("F", 2)]);
        let f3 = table(vec![eta("F", 3)]);
        let err = f2.compose(&f3).unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].symbol, QualName::plain("F"));
        assert_eq!(err[0].definitions.len(), 2);
    }

    #[test]
    fn rename_keeps_vars_and_constants() {
        let mut t = SymbolTable::new();
        let (n, i) = eta("State", 1);
        t.insert(n, i).unwrap();
        t.insert(
            QualName::plain("s"),
            SymbolInfo { kind: SymbolKind::Var, arity: 0, denotation: Denotation::AllTerms, sig: None },
        )
        .unwrap();
        let (n, i) = eta("ADD", 0);
        t.insert(n, i).unwrap();

        let renamed = t.rename("left");
        assert!(renamed.contains(&QualName::from_dotted("left.State")));
        assert!(renamed.contains(&QualName::plain("s")));
        assert!(renamed.contains(&QualName::plain("ADD")));
        assert_eq!(renamed.len(), 3);
    }

    #[test]
    fn rename_composes_prefixes() {
        let t = table(vec![eta("F", 1)]);
        let rr = t.rename("left").rename("right");
        assert!(rr.contains(&QualName::from_dotted("right.left.F")));
        assert_eq!(rr.len(), 1);
    }

    #[test]
    fn rename_empty() {
        let t = SymbolTable::new();
        assert!(t.rename("x").is_empty());
    }

    #[test]
    fn rename_preserves_counts_and_kinds() {
        let t = table(vec![eta("State", 1), eta("NOP", 0), delta0("D.conforms")]);
        let renamed = t.rename("left");
        assert_eq!(renamed.len(), t.len());
        let mut kinds: Vec<SymbolKind> = t.iter().map(|(_, i)| i.kind).collect();
        let mut rkinds: Vec<SymbolKind> = renamed.iter().map(|(_, i)| i.kind).collect();
        kinds.sort();
        rkinds.sort();
        assert_eq!(kinds, rkinds);
    }
}
