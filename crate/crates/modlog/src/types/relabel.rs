//! Relabeling functions: recursive qualifier-prefix rewriting of terms and
//! type denotations. Built-in constants and user constants are fixed points.

use super::term::{QualName, Term};
use super::typeexpr::TypeExpr;
use thiserror::Error;

/// The relabeling `rho_{from -> to}`. Identity when both sides are empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RelabelingSpec {
    pub from: Vec<String>,
    pub to: Vec<String>,
}

impl RelabelingSpec {
    pub fn new(from: &[&str], to: &[&str]) -> Self {
        RelabelingSpec {
            from: from.iter().map(|s| s.to_string()).collect(),
            to: to.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.from == self.to
    }

    /// Inverse direction, usable to undo this relabeling.
    pub fn inverse(&self) -> RelabelingSpec {
        RelabelingSpec { from: self.to.clone(), to: self.from.clone() }
    }

    fn swap(&self, name: &QualName) -> Option<QualName> {
        if !name.starts_with(&self.from) {
            return None;
        }
        let mut quals = self.to.clone();
        quals.extend(name.quals[self.from.len()..].iter().cloned());
        Some(QualName { quals, base: name.base.clone() })
    }
}

impl std::fmt::Display for RelabelingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rho[{}->{}]", self.from.join("."), self.to.join("."))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelabelError {
    #[error("constructor `{0}` does not carry the qualifier prefix `{1}`")]
    PrefixMismatch(QualName, String),
    #[error("cannot relabel non-ground term `{0}`")]
    NotGround(Term),
}

/// Rewrites a ground term: constructor applications swap the `from` prefix
/// for `to` and recurse; integers, strings, and user constants are unchanged.
pub fn relabel_term(rho: &RelabelingSpec, t: &Term) -> Result<Term, RelabelError> {
    match t {
        Term::Int(_) | Term::Str(_) | Term::Const(_) => Ok(t.clone()),
        Term::Apply(f, args) => {
            let name = rho
                .swap(f)
                .ok_or_else(|| RelabelError::PrefixMismatch(f.clone(), rho.from.join(".")))?;
            let args = args
                .iter()
                .map(|a| relabel_term(rho, a))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Term::Apply(name, args))
        }
        other => Err(RelabelError::NotGround(other.clone())),
    }
}

/// Lifts relabeling pointwise to denotations: constructor-extension atoms
/// swap prefixes; constant sets, integer ranges, and strings pass through.
pub fn relabel_type(rho: &RelabelingSpec, ty: &TypeExpr) -> Result<TypeExpr, RelabelError> {
    let mut ctors = std::collections::BTreeSet::new();
    for c in &ty.ctors {
        let name = rho
            .swap(c)
            .ok_or_else(|| RelabelError::PrefixMismatch(c.clone(), rho.from.join(".")))?;
        ctors.insert(name);
    }
    Ok(TypeExpr {
        ints: ty.ints.clone(),
        strings: ty.strings.clone(),
        consts: ty.consts.clone(),
        ctors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabel_in_to_out() {
        // rho_{in->out}(in.State(1)) = out.State(1)
        let rho = RelabelingSpec::new(&["in"], &["out"]);
        let t = Term::apply("in.State", vec![Term::int(1)]);
        assert_eq!(relabel_term(&rho, &t).unwrap(), Term::apply("out.State", vec![Term::int(1)]));
    }

    #[test]
    fn identity_relabeling() {
        let rho = RelabelingSpec::default();
        let t = Term::apply("Trans", vec![
            Term::apply("State", vec![Term::int(1)]),
            Term::apply("Event", vec![Term::str("foo")]),
            Term::apply("State", vec![Term::int(2)]),
        ]);
        assert_eq!(relabel_term(&rho, &t).unwrap(), t);
    }

    #[test]
    fn strip_prefix_keeps_constants() {
        // rho_{left->eps}(left.Trans(left.State(1), left.Event("foo"), left.State(2)))
        let rho = RelabelingSpec::new(&["left"], &[]);
        let t = Term::apply("left.Trans", vec![
            Term::apply("left.State", vec![Term::int(1)]),
            Term::apply("left.Event", vec![Term::str("foo")]),
            Term::apply("left.State", vec![Term::int(2)]),
        ]);
        let expected = Term::apply("Trans", vec![
            Term::apply("State", vec![Term::int(1)]),
            Term::apply("Event", vec![Term::str("foo")]),
            Term::apply("State", vec![Term::int(2)]),
        ]);
        assert_eq!(relabel_term(&rho, &t).unwrap(), expected);
    }

    #[test]
    fn prefix_mismatch_is_an_error() {
        let rho = RelabelingSpec::new(&["in"], &["out"]);
        let t = Term::apply("left.State", vec![Term::int(1)]);
        assert!(matches!(relabel_term(&rho, &t), Err(RelabelError::PrefixMismatch(..))));
    }

    #[test]
    fn relabel_type_examples() {
        let rho = RelabelingSpec::new(&["in"], &["out"]);
        let ty = TypeExpr::ctor(QualName::from_dotted("in.State"));
        assert_eq!(relabel_type(&rho, &ty).unwrap(), TypeExpr::ctor(QualName::from_dotted("out.State")));

        // New-kind constants retain their names.
        let lr = RelabelingSpec::new(&["left"], &["right"]);
        let add = TypeExpr::constant(QualName::plain("ADD"));
        assert_eq!(relabel_type(&lr, &add).unwrap(), add);

        // Pointwise over atoms.
        let mixed = TypeExpr::integers().union(&TypeExpr::ctor(QualName::from_dotted("in.Var")));
        let out = relabel_type(&rho, &mixed).unwrap();
        assert_eq!(out, TypeExpr::integers().union(&TypeExpr::ctor(QualName::from_dotted("out.Var"))));
    }

    #[test]
    fn round_trip_on_prefixed_terms() {
        let rho = RelabelingSpec::new(&["in"], &["out"]);
        let t = Term::apply("in.Init", vec![Term::apply("in.State", vec![Term::int(7)])]);
        let there = relabel_term(&rho, &t).unwrap();
        let back = relabel_term(&rho.inverse(), &there).unwrap();
        assert_eq!(back, t);
    }
}
