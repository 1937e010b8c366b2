//! Shared test support: corpus loading, pinned oracle parameters, the
//! bounded denotation enumerator, and seeded random generators.

#![allow(dead_code)]

use modlog::loader::{self, Workspace};
use modlog::symtab::SymbolTable;
use modlog::types::{QualName, Term, TypeExpr};
use num_bigint::BigInt;
use rand::Rng;
use std::collections::BTreeSet;
use std::path::PathBuf;

// Pinned oracle parameters: the brute-force denotation enumerator explores
// constructor nestings to this depth, integers in this window, and strings
// from this alphabet. Derived expectations in the suites assume exactly
// these values.
pub const ENUM_DEPTH: usize = 3;
pub const INT_LO: i64 = -5;
pub const INT_HI: i64 = 5;
pub const STRING_ALPHABET: [&str; 3] = ["a", "b", "c"];

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn load_corpus() -> Workspace {
    match loader::load(&[corpus_dir()]) {
        Ok(ws) => ws,
        Err(diags) => {
            for d in &diags {
                eprintln!("{}", d);
            }
            panic!("corpus must compile");
        }
    }
}

pub fn load_corpus_plus(extra: &[(&str, &str)]) -> Result<Workspace, Vec<modlog::diag::Diag>> {
    let mut sources: Vec<(String, String)> = Vec::new();
    let dir = corpus_dir();
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "4ml"))
        .collect();
    files.sort();
    for f in files {
        sources.push((f.display().to_string(), std::fs::read_to_string(&f).unwrap()));
    }
    for (p, t) in extra {
        sources.push((p.to_string(), t.to_string()));
    }
    let refs: Vec<(&str, &str)> = sources.iter().map(|(p, t)| (p.as_str(), t.as_str())).collect();
    loader::load_strs(&refs)
}

/// Brute-force enumeration of a denotation within the pinned bounds:
/// integers clipped to the window, `String` expanded to the alphabet, and
/// constructor extensions built as products of argument enumerations with
/// one less depth. Exact for types whose constructors bottom out within
/// the depth and whose integer atoms stay inside the window.
pub fn enumerate(ty: &TypeExpr, table: &SymbolTable, depth: usize) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    for (lo, hi) in ty.ints.ranges() {
        let lo = lo.clone().map_or(INT_LO, |b| clamp_big(&b)).max(INT_LO);
        let hi = hi.clone().map_or(INT_HI, |b| clamp_big(&b)).min(INT_HI);
        for n in lo..=hi {
            out.insert(Term::int(n));
        }
    }
    match &ty.strings {
        modlog::types::StringSet::All => {
            for s in STRING_ALPHABET {
                out.insert(Term::str(s));
            }
        }
        modlog::types::StringSet::Finite(set) => {
            for s in set {
                out.insert(Term::Str(s.clone()));
            }
        }
    }
    for c in &ty.consts {
        out.insert(Term::Const(c.clone()));
    }
    for ctor in &ty.ctors {
        out.extend(enumerate_ctor(ctor, table, depth));
    }
    out
}

fn clamp_big(b: &BigInt) -> i64 {
    use num_traits::ToPrimitive;
    b.to_i64().unwrap_or(if b.sign() == num_bigint::Sign::Minus { i64::MIN } else { i64::MAX })
}

fn enumerate_ctor(ctor: &QualName, table: &SymbolTable, depth: usize) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    if depth == 0 {
        return out;
    }
    let Some(info) = table.get(ctor) else { return out };
    let Some(sig) = &info.sig else { return out };
    let arg_sets: Vec<Vec<Term>> = sig
        .fields
        .iter()
        .map(|f| enumerate(&f.ty, table, depth - 1).into_iter().collect())
        .collect();
    if arg_sets.iter().any(|s| s.is_empty()) {
        return out;
    }
    let mut indices = vec![0usize; arg_sets.len()];
    loop {
        let args: Vec<Term> = indices.iter().zip(&arg_sets).map(|(&i, s)| s[i].clone()).collect();
        out.insert(Term::Apply(ctor.clone(), args));
        let mut k = arg_sets.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            indices[k] += 1;
            if indices[k] < arg_sets[k].len() {
                break;
            }
            indices[k] = 0;
        }
    }
}

/// Renders a random conforming machine as model source text. States are
/// 1..=n, events "e0".., transitions connect defined states over defined
/// events, and at least one initial state is defined.
pub fn random_fsm_source(name: &str, rng: &mut impl Rng, conforming: bool) -> String {
    let n_states = rng.gen_range(1..=8usize);
    let n_events = rng.gen_range(1..=3usize);
    let mut out = format!("model {} of NonDetFSM {{\n", name);
    for s in 1..=n_states {
        out.push_str(&format!("   State({}).\n", s));
    }
    for e in 0..n_events {
        out.push_str(&format!("   Event(\"e{}\").\n", e));
    }
    let inits = rng.gen_range(1..=2usize);
    for _ in 0..inits {
        if conforming || rng.gen_bool(0.8) {
            out.push_str(&format!("   Init(State({})).\n", rng.gen_range(1..=n_states)));
        } else {
            // An initial state that is not defined.
            out.push_str(&format!("   Init(State({})).\n", n_states + 10));
        }
    }
    let transitions = rng.gen_range(0..=n_states * n_events);
    for _ in 0..transitions {
        let src = rng.gen_range(1..=n_states);
        let dst = rng.gen_range(1..=n_states);
        let ev = rng.gen_range(0..n_events);
        out.push_str(&format!("   Trans(State({}), Event(\"e{}\"), State({})).\n", src, ev, dst));
    }
    out.push_str("}\n");
    out
}
