//! Stratification over constructor symbols.
//!
//! The dependency graph has one node per constructor symbol. Each rule adds
//! an edge from every body symbol to the head symbol; the edge is negative
//! when the body symbol occurs under `no` or inside a `count` comprehension.
//! A stratum assignment exists iff no cycle contains a negative edge.

use super::rule::{CompiledRule, Expr, Literal};
use crate::symtab::{SymbolKind, SymbolTable};
use crate::types::{QualName, Term, TypeExpr};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Default)]
pub struct Strata {
    pub of_symbol: BTreeMap<QualName, usize>,
    pub max: usize,
}

impl Strata {
    pub fn stratum(&self, symbol: &QualName) -> usize {
        self.of_symbol.get(symbol).copied().unwrap_or(0)
    }
}

/// A cycle through a negative edge; the offending symbols in table order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeCycle {
    pub symbols: Vec<QualName>,
}

impl std::fmt::Display for NegativeCycle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "negation is not stratified: cycle through {}",
            self.symbols.iter().map(|s| format!("`{}`", s)).collect::<Vec<_>>().join(", ")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polarity {
    Positive,
    Negative,
}

/// One body dependency of a rule.
struct Dep {
    symbol: QualName,
    polarity: Polarity,
}

pub fn stratify(rules: &[CompiledRule], table: &SymbolTable) -> Result<Strata, NegativeCycle> {
    // Stable node numbering over every symbol that can appear.
    let mut nodes: BTreeSet<QualName> = BTreeSet::new();
    for (name, info) in table.iter() {
        if matches!(info.kind, SymbolKind::New | SymbolKind::Derived) {
            nodes.insert(name.clone());
        }
    }
    for rule in rules {
        nodes.insert(rule.head_symbol().clone());
        let mut deps = Vec::new();
        collect_conjunct_deps(&rule.body, Polarity::Positive, table, &mut deps);
        nodes.extend(deps.into_iter().map(|d| d.symbol));
    }

    let mut graph: DiGraph<QualName, Polarity> = DiGraph::new();
    let mut index: BTreeMap<QualName, NodeIndex> = BTreeMap::new();
    for n in &nodes {
        index.insert(n.clone(), graph.add_node(n.clone()));
    }

    for rule in rules {
        let head = index[rule.head_symbol()];
        let mut deps = Vec::new();
        collect_conjunct_deps(&rule.body, Polarity::Positive, table, &mut deps);
        for dep in deps {
            graph.add_edge(index[&dep.symbol], head, dep.polarity);
        }
    }

    // Strongly connected components in reverse topological order.
    let sccs = tarjan_scc(&graph);
    let mut scc_of: BTreeMap<NodeIndex, usize> = BTreeMap::new();
    for (i, scc) in sccs.iter().enumerate() {
        for &n in scc {
            scc_of.insert(n, i);
        }
    }

    // A negative edge within one component is a negative cycle.
    for edge in graph.edge_indices() {
        let (a, b) = graph.edge_endpoints(edge).unwrap();
        if scc_of[&a] == scc_of[&b] && graph[edge] == Polarity::Negative {
            let mut symbols: Vec<QualName> =
                sccs[scc_of[&a]].iter().map(|&n| graph[n].clone()).collect();
            symbols.sort();
            return Err(NegativeCycle { symbols });
        }
    }

    // tarjan_scc yields components in postorder: with body -> head edges a
    // head's component precedes its dependencies, so walk in reverse to see
    // every edge source before its target.
    let mut scc_stratum = vec![0usize; sccs.len()];
    let mut max = 0;
    for i in (0..sccs.len()).rev() {
        let mut s = 0;
        for &n in &sccs[i] {
            for edge in graph.edges_directed(n, petgraph::Direction::Incoming) {
                let src = scc_of[&edge.source()];
                if src == i {
                    continue;
                }
                let need = scc_stratum[src] + if *edge.weight() == Polarity::Negative { 1 } else { 0 };
                s = s.max(need);
            }
        }
        scc_stratum[i] = s;
        max = max.max(s);
    }

    let mut of_symbol = BTreeMap::new();
    for (name, idx) in &index {
        of_symbol.insert(name.clone(), scc_stratum[scc_of[idx]]);
    }
    Ok(Strata { of_symbol, max })
}

fn collect_conjunct_deps(conj: &[Literal], pol: Polarity, table: &SymbolTable, out: &mut Vec<Dep>) {
    for lit in conj {
        match lit {
            Literal::Atom(t) => collect_term_dep(t, pol, out),
            Literal::NoComp(c) => {
                for d in &c.disjuncts {
                    collect_conjunct_deps(d, Polarity::Negative, table, out);
                }
            }
            Literal::Compare(a, _, b) => {
                collect_expr_deps(a, table, out);
                collect_expr_deps(b, table, out);
            }
            Literal::IsMember(_, ty) => collect_type_deps(ty, pol, table, out),
            Literal::TypeTest(..) => {}
        }
    }
}

fn collect_expr_deps(e: &Expr, table: &SymbolTable, out: &mut Vec<Dep>) {
    match e {
        // Aggregates behave like negation for stratification.
        Expr::Count(c) => {
            for d in &c.disjuncts {
                collect_conjunct_deps(d, Polarity::Negative, table, out);
            }
        }
        Expr::Arith(_, a, b) => {
            collect_expr_deps(a, table, out);
            collect_expr_deps(b, table, out);
        }
        // Patterns in comparisons destructure bound values; no probe.
        Expr::Term(_) | Expr::Accessor { .. } => {}
    }
}

fn collect_term_dep(t: &Term, pol: Polarity, out: &mut Vec<Dep>) {
    if let Some(sym) = t.outer_symbol() {
        out.push(Dep { symbol: sym.clone(), polarity: pol });
    }
}

/// `x is T` scans the store filtered by `T`: it depends on every symbol the
/// denotation can mention. Integer or string atoms make the scan unbounded
/// over declared symbols, so those depend on every constructor in the table.
fn collect_type_deps(ty: &TypeExpr, pol: Polarity, table: &SymbolTable, out: &mut Vec<Dep>) {
    if !ty.ints.is_empty() || !ty.strings.is_empty() {
        for (name, info) in table.iter() {
            if matches!(info.kind, SymbolKind::New | SymbolKind::Derived) {
                out.push(Dep { symbol: name.clone(), polarity: pol });
            }
        }
        return;
    }
    for c in ty.consts.iter().chain(ty.ctors.iter()) {
        out.push(Dep { symbol: c.clone(), polarity: pol });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::CompareOp;
    use crate::modsys::rule::{Comprehension, Expr, Provenance};

    fn rule(head: Term, body: Vec<Literal>) -> CompiledRule {
        CompiledRule {
            head,
            body,
            rewrites: Default::default(),
            provenance: Provenance { module: "T".into(), label: "t".into() },
        }
    }

    fn atom(name: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::constant(name)
        } else {
            Term::apply(name, args)
        }
    }

    fn no_atom(t: Term) -> Literal {
        Literal::NoComp(Comprehension {
            head: Term::int(0),
            disjuncts: vec![vec![Literal::Atom(t)]],
            captured: Default::default(),
        })
    }

    #[test]
    fn negation_raises_stratum() {
        // q :- F(x).  r :- no q.
        let rules = vec![
            rule(atom("q", vec![]), vec![Literal::Atom(atom("F", vec![Term::var("x")]))]),
            rule(atom("r", vec![]), vec![no_atom(atom("q", vec![]))]),
        ];
        let strata = stratify(&rules, &SymbolTable::new()).unwrap();
        assert_eq!(strata.stratum(&QualName::plain("F")), 0);
        assert_eq!(strata.stratum(&QualName::plain("q")), 0);
        assert_eq!(strata.stratum(&QualName::plain("r")), 1);
    }

    #[test]
    fn positive_recursion_shares_a_stratum() {
        // Reach(s) :- Init(s).  Reach(s) :- Reach(s'), Trans(s', s).
        let rules = vec![
            rule(
                atom("Reach", vec![Term::var("s")]),
                vec![Literal::Atom(atom("Init", vec![Term::var("s")]))],
            ),
            rule(
                atom("Reach", vec![Term::var("s")]),
                vec![
                    Literal::Atom(atom("Reach", vec![Term::var("s'")])),
                    Literal::Atom(atom("Trans", vec![Term::var("s'"), Term::var("s")])),
                ],
            ),
        ];
        let strata = stratify(&rules, &SymbolTable::new()).unwrap();
        assert_eq!(strata.stratum(&QualName::plain("Reach")), 0);
        assert_eq!(strata.max, 0);
    }

    #[test]
    fn negative_self_loop_rejected() {
        // F(x) :- G(x), no F(x).
        let rules = vec![rule(
            atom("F", vec![Term::var("x")]),
            vec![
                Literal::Atom(atom("G", vec![Term::var("x")])),
                no_atom(atom("F", vec![Term::var("x")])),
            ],
        )];
        let err = stratify(&rules, &SymbolTable::new()).unwrap_err();
        assert_eq!(err.symbols, vec![QualName::plain("F")]);
    }

    #[test]
    fn count_is_a_negative_dependency() {
        // q :- count({ s | Init(s) }) = 1.
        let comp = Comprehension {
            head: Term::var("s"),
            disjuncts: vec![vec![Literal::Atom(atom("Init", vec![Term::var("s")]))]],
            captured: Default::default(),
        };
        let rules = vec![rule(
            atom("q", vec![]),
            vec![Literal::Compare(Expr::Count(comp), CompareOp::Eq, Expr::Term(Term::int(1)))],
        )];
        let strata = stratify(&rules, &SymbolTable::new()).unwrap();
        assert!(strata.stratum(&QualName::plain("q")) > strata.stratum(&QualName::plain("Init")));
    }

    #[test]
    fn double_negation_still_stratifies() {
        // conforms :- no { e | Sub(e), no { t | TJ(e, t) } } with TJ
        // recursive: everything below conforms, no negative cycle.
        let inner = Comprehension {
            head: Term::var("t"),
            disjuncts: vec![vec![Literal::Atom(atom("TJ", vec![Term::var("e"), Term::var("t")]))]],
            captured: ["e".to_string()].into_iter().collect(),
        };
        let outer = Comprehension {
            head: Term::var("e"),
            disjuncts: vec![vec![
                Literal::Atom(atom("Sub", vec![Term::var("e")])),
                Literal::NoComp(inner),
            ]],
            captured: Default::default(),
        };
        let rules = vec![
            rule(
                atom("TJ", vec![Term::var("e"), Term::var("t")]),
                vec![
                    Literal::Atom(atom("Sub", vec![Term::var("e")])),
                    Literal::Atom(atom("TJ", vec![Term::var("e'"), Term::var("t")])),
                ],
            ),
            rule(atom("conforms", vec![]), vec![Literal::NoComp(outer)]),
        ];
        let strata = stratify(&rules, &SymbolTable::new()).unwrap();
        assert!(
            strata.stratum(&QualName::plain("conforms")) > strata.stratum(&QualName::plain("TJ"))
        );
    }
}
