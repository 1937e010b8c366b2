//! Corpus-level invariants: parser round trips, elaboration algebra,
//! engine determinism and monotonicity, transform laws, and the frozen
//! expected values for the worked examples.

mod common;

use common::*;
use modlog::engine::{self, eval_comprehension, EvalOptions};
use modlog::frontend::{parse_source, print_unit, strip_spans};
use modlog::loader;
use modlog::modsys::rule::Literal;
use modlog::modsys::{ClauseOrigin, Comprehension};
use modlog::symtab::SymbolKind;
use modlog::transform::{apply_transform, extract_output, ContractPolicy, TransformError};
use modlog::types::{QualName, Term};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

fn opts() -> EvalOptions {
    EvalOptions::default()
}

// ----- frontend -----

#[test]
fn corpus_round_trips_through_printer() {
    let dir = corpus_dir();
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "4ml"))
        .collect();
    files.sort();
    assert!(!files.is_empty());
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        let mut first = parse_source(&f.display().to_string(), &text).unwrap();
        let printed = print_unit(&first);
        let mut second = parse_source("printed", &printed)
            .unwrap_or_else(|e| panic!("{} re-parses: {:?}", f.display(), e));
        second.path = first.path.clone();
        strip_spans(&mut first);
        strip_spans(&mut second);
        assert_eq!(first, second, "round trip of {}", f.display());
    }
}

// ----- modsys: table contents and clause structure -----

#[test]
fn fig1_domain_table_contents() {
    let ws = load_corpus();
    let d = ws.env.domains.get("NonDetFSM").unwrap();
    let expect = [
        ("State", SymbolKind::New, 1),
        ("Event", SymbolKind::New, 1),
        ("Trans", SymbolKind::New, 3),
        ("Init", SymbolKind::New, 1),
        ("Reach", SymbolKind::Derived, 1),
        ("NonDetFSM.conforms", SymbolKind::Derived, 0),
        ("s", SymbolKind::Var, 0),
        ("s'", SymbolKind::Var, 0),
        ("i", SymbolKind::Var, 0),
        ("t", SymbolKind::Var, 0),
    ];
    for (name, kind, arity) in expect {
        let info = d.table.get(&QualName::from_dotted(name)).unwrap_or_else(|| panic!("{} declared", name));
        assert_eq!((info.kind, info.arity), (kind, arity), "{}", name);
    }
    assert_eq!(d.table.len(), expect.len(), "no extra symbols");
    assert_eq!(d.clauses.len(), 5);
    assert!(d.clauses.iter().all(|c| c.origin == ClauseOrigin::Explicit));
}

#[test]
fn fig4_clause_structure() {
    let ws = load_corpus();
    let d = ws.env.domains.get("DetFSMWithActions").unwrap();
    let own: Vec<_> = d.clauses.iter().filter(|c| c.id.starts_with("DetFSMWithActions#")).collect();
    // 4 explicit, 1 fun (ActMap), 1 extends.
    assert_eq!(own.len(), 6);
    assert_eq!(own.iter().filter(|c| c.origin == ClauseOrigin::Explicit).count(), 4);
    assert_eq!(own.iter().filter(|c| c.origin == ClauseOrigin::Fun).count(), 1);
    assert_eq!(own.iter().filter(|c| c.origin == ClauseOrigin::Extends).count(), 1);
    // Inherited clause constants are carried for reporting.
    assert!(d.clauses.iter().any(|c| c.id == "NonDetFSM#2"));
    assert!(d.clauses.iter().any(|c| c.id == "Actions#1"));
}

#[test]
fn two_state_mach_facts_and_symconsts() {
    let ws = load_corpus();
    let m = ws.env.models.get("TwoStateMach").unwrap();
    let s1 = Term::apply("State", vec![Term::int(1)]);
    let s2 = Term::apply("State", vec![Term::int(2)]);
    let foo = Term::apply("Event", vec![Term::str("foo")]);
    let expected: BTreeSet<Term> = [
        s1.clone(),
        s2.clone(),
        foo.clone(),
        Term::apply("Init", vec![s1.clone()]),
        Term::apply("Trans", vec![s1.clone(), foo.clone(), s2.clone()]),
        Term::apply("Trans", vec![s2.clone(), foo.clone(), s2.clone()]),
    ]
    .into_iter()
    .collect();
    assert_eq!(m.facts, expected);
    let sc: BTreeMap<String, String> =
        m.symconsts.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    assert_eq!(sc["TwoStateMach.s1"], "State(1)");
    assert_eq!(sc["TwoStateMach.s2"], "State(2)");
    assert_eq!(sc["TwoStateMach.eFoo"], "Event(\"foo\")");
}

#[test]
fn cyclic_symconst_rejected() {
    let err = loader::load_strs(&[(
        "cyc.4ml",
        "domain D { F ::= new (any U). U ::= F + { Nil }. }\n\
         model X of D { c is F(c). }",
    )])
    .expect_err("self-referential symbolic constant rejected");
    assert!(err.iter().any(|d| d.code == "E303"), "{:?}", err);
}

#[test]
fn vacuous_extends_conforms() {
    let ws = loader::load_strs(&[("v.4ml", "domain A {} domain E extends A {} model M of E {}")]).unwrap();
    let m = ws.env.models.get("M").unwrap();
    let report = engine::check_conforms(m, &opts()).unwrap();
    assert!(report.conforms, "empty conjunctions are provable");
}

#[test]
fn kind_clash_variable_vs_derived_constant() {
    let err = loader::load_strs(&[("k.4ml", "domain K { F ::= new (Integer). x :- F(x). }")])
        .expect_err("kind clash rejected");
    assert!(
        err.iter().any(|d| d.code == "E301" && d.message.contains("both as a variable")),
        "{:?}",
        err
    );
}

#[test]
fn fun_clause_violation_reported() {
    let ws = load_corpus_plus(&[(
        "viol.4ml",
        "model DoubleMap of DetFSMWithActions includes TwoStateMach, CntrActions {\n\
            ActMap(s1, \"ZeroX\").\n\
            ActMap(s1, \"IncX\").\n\
         }",
    )])
    .unwrap();
    let m = ws.env.models.get("DoubleMap").unwrap();
    let report = engine::check_conforms(m, &opts()).unwrap();
    assert!(!report.conforms);
    let failing: Vec<_> = report.clauses.iter().filter(|c| !c.holds).collect();
    assert!(failing.iter().any(|c| c.origin == "fun"), "the implicit functional clause fails: {:?}", failing);
    let fun_fail = failing.iter().find(|c| c.origin == "fun").unwrap();
    let w = fun_fail.witness.as_deref().expect("fun clauses carry witnesses");
    assert!(w.starts_with("ActMap(State(1)"), "witness is an offending fact: {}", w);
}

#[test]
fn det_fsm_clauses_fail_individually() {
    // Two initial states break the count clause; a branching transition
    // breaks the determinism clause, with the branching state as witness.
    let ws = load_corpus_plus(&[(
        "nd.4ml",
        "model TwoInits of DetFSMWithActions includes CntrActions {\n\
            State(1). State(2). Event(\"e\").\n\
            Init(State(1)). Init(State(2)).\n\
            Trans(State(1), Event(\"e\"), State(2)).\n\
            Trans(State(2), Event(\"e\"), State(1)).\n\
         }\n\
         model Branchy of DetFSMWithActions includes CntrActions {\n\
            State(1). State(2). Event(\"e\").\n\
            Init(State(1)).\n\
            Trans(State(1), Event(\"e\"), State(1)).\n\
            Trans(State(1), Event(\"e\"), State(2)).\n\
         }",
    )])
    .unwrap();

    let report = engine::check_conforms(ws.env.models.get("TwoInits").unwrap(), &opts()).unwrap();
    assert!(!report.conforms);
    let failing: Vec<&str> = report.clauses.iter().filter(|c| !c.holds).map(|c| c.id.as_str()).collect();
    assert_eq!(failing, vec!["DetFSMWithActions#1"], "only the count clause fails");

    let report = engine::check_conforms(ws.env.models.get("Branchy").unwrap(), &opts()).unwrap();
    assert!(!report.conforms);
    let failing: Vec<_> = report.clauses.iter().filter(|c| !c.holds).collect();
    assert_eq!(failing.len(), 1);
    assert_eq!(failing[0].id, "DetFSMWithActions#2", "only the determinism clause fails");
    assert_eq!(failing[0].witness.as_deref(), Some("State(1)"));
}

#[test]
fn relational_comparisons_on_ints_and_strings() {
    let ws = loader::load_strs(&[(
        "cmp.4ml",
        "domain Cmp {\n\
            N ::= new (Integer).\n\
            S ::= new (String).\n\
            SmallN ::= (Integer).\n\
            EarlyS ::= (String).\n\
            SmallN(x) :- N(x), x <= 2, x + 1 > 0.\n\
            EarlyS(s) :- S(s), s < \"m\".\n\
         }\n\
         model M of Cmp { N(1). N(2). N(3). N(-5). S(\"apple\"). S(\"zebra\"). }",
    )])
    .unwrap();
    let m = ws.env.models.get("M").unwrap();
    let store = engine::evaluate(m.program(), &m.facts, &opts()).unwrap();
    let by = |name: &str| -> Vec<String> {
        store.with_symbol(&QualName::plain(name)).map(|t| t.to_string()).collect()
    };
    assert_eq!(by("SmallN"), vec!["SmallN(1)", "SmallN(2)"], "-5 fails the arith filter");
    assert_eq!(by("EarlyS"), vec!["EarlyS(\"apple\")"]);
}

#[test]
fn ambiguous_rewrite_rejected() {
    let err = load_corpus_plus(&[(
        "ambig.4ml",
        "transform Ambig (in:: NonDetFSM) returns (o1:: NonDetFSM, o2:: NonDetFSM) {\n\
            Pick ::= (o1.State + o2.State).\n\
            Pick(s) :- in.Init(s).\n\
         }",
    )])
    .expect_err("two relabelings pass, so the rule is ambiguous");
    assert!(err.iter().any(|d| d.code == "E310" && d.message.contains("rho[in->o1]")), "{:?}", err);
}

#[test]
fn renaming_naturality_on_corpus_domains() {
    let ws = load_corpus();
    for name in ["NonDetFSM", "Actions", "DetFSMWithActions", "ParallelFSMs"] {
        let dom = ws.env.domains.get(name).unwrap();
        let wrapped = load_corpus_plus(&[(
            "wrap.4ml",
            &format!("domain Wrap includes x::{} {{}}", name),
        )])
        .unwrap();
        let w = wrapped.env.domains.get("Wrap").unwrap();
        let renamed = dom.table.rename("x");
        for (k, v) in renamed.iter() {
            assert_eq!(w.table.get(k), Some(v), "entry {} of x::{}", k, name);
        }
        // Wrap adds only its own conforms constant.
        assert_eq!(w.table.len(), renamed.len() + 1, "x::{}", name);
        assert!(w.table.contains(&QualName::from_dotted("Wrap.conforms")));
    }
}

#[test]
fn domain_merge_is_symmetric() {
    let ws_ab = load_corpus_plus(&[("m.4ml", "domain XAB includes NonDetFSM, Actions {}")]).unwrap();
    let ws_ba = load_corpus_plus(&[("m.4ml", "domain XAB includes Actions, NonDetFSM {}")]).unwrap();
    let a = ws_ab.env.domains.get("XAB").unwrap();
    let b = ws_ba.env.domains.get("XAB").unwrap();
    assert_eq!(a.table, b.table);
    let rules_a: BTreeSet<String> = a.rules.iter().map(|r| r.to_string()).collect();
    let rules_b: BTreeSet<String> = b.rules.iter().map(|r| r.to_string()).collect();
    assert_eq!(rules_a, rules_b);
}

#[test]
fn conforms_goal_shape() {
    let ws = load_corpus();
    for d in ws.env.domains.values() {
        let info = d.table.get(&d.conforms_goal).expect("goal constant is in the table");
        assert_eq!((info.kind, info.arity), (SymbolKind::Derived, 0));
        assert!(d.rules.iter().any(|r| r.head_symbol() == &d.conforms_goal), "goal has a rule");
    }
}

// ----- types over the corpus context -----

#[test]
fn subtype_examples_over_corpus_types() {
    use modlog::types::{is_subtype, type_equal, TypeExpr};
    let ws = load_corpus();
    let actions = ws.env.domains.get("Actions").unwrap();
    let denot = |name: &str| match &actions.table.get(&QualName::plain(name)).unwrap().denotation {
        modlog::symtab::Denotation::Type(t) => t.clone(),
        other => panic!("expected type, got {:?}", other),
    };
    // { NOP } is contained in Action = Asn + ITE + Seq + { NOP }.
    assert!(is_subtype(&TypeExpr::constant(QualName::plain("NOP")), &denot("Action")));
    // Expr equals its written-out union.
    let expr_by_hand = TypeExpr::ctor(QualName::plain("Var"))
        .union(&TypeExpr::ctor(QualName::plain("UnApp")))
        .union(&TypeExpr::ctor(QualName::plain("BnApp")))
        .union(&TypeExpr::boolean())
        .union(&TypeExpr::integers());
    assert!(type_equal(&denot("Expr"), &expr_by_hand));
    assert_eq!(denot("Expr"), expr_by_hand, "canonical forms are structurally equal");
}

#[test]
fn inner_qualifier_resolution_in_prune() {
    let ws = load_corpus();
    let prune = ws.env.transforms.get("Prune").unwrap();
    // out.State(x) :- in.Reach(State(x)): the inner State resolves to
    // in.State through the outer constructor's qualifier.
    let rule = prune
        .rules
        .iter()
        .find(|r| r.head_symbol() == &QualName::from_dotted("out.State"))
        .unwrap();
    let expected_body = Term::apply("in.Reach", vec![Term::apply("in.State", vec![Term::var("x")])]);
    assert!(
        rule.body.iter().any(|l| matches!(l, Literal::Atom(t) if *t == expected_body)),
        "got {}",
        rule
    );
}

#[test]
fn compiled_modules_are_shareable_across_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<modlog::modsys::CompiledDomain>();
    assert_send_sync::<modlog::modsys::CompiledModel>();
    assert_send_sync::<modlog::modsys::CompiledTransform>();
    assert_send_sync::<modlog::modsys::CompiledSystem>();

    // Two sessions over the same compiled model in parallel.
    let ws = load_corpus();
    let m = ws.env.models.get("CntrMach").unwrap();
    let (a, b) = std::thread::scope(|s| {
        let h1 = s.spawn(|| engine::evaluate(m.program(), &m.facts, &opts()).unwrap().serialize());
        let h2 = s.spawn(|| engine::evaluate(m.program(), &m.facts, &opts()).unwrap().serialize());
        (h1.join().unwrap(), h2.join().unwrap())
    });
    assert_eq!(a, b);
}

// ----- engine -----

#[test]
fn empty_edb_has_no_machine_facts() {
    let ws = load_corpus();
    let d = ws.env.domains.get("NonDetFSM").unwrap();
    let store = engine::evaluate(d.program(), &BTreeSet::new(), &opts()).unwrap();
    // No data facts and nothing reachable; only conformance bookkeeping
    // constants may be derived.
    for sym in ["State", "Event", "Trans", "Init", "Reach"] {
        assert_eq!(store.with_symbol(&QualName::plain(sym)).count(), 0, "{} empty", sym);
    }
}

#[test]
fn comprehension_examples() {
    let ws = load_corpus();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    let store = engine::evaluate(two.program(), &two.facts, &opts()).unwrap();

    // { s | Init(s) } with no captures.
    let comp = Comprehension {
        head: Term::var("s"),
        disjuncts: vec![vec![Literal::Atom(Term::apply("Init", vec![Term::var("s")]))]],
        captured: BTreeSet::new(),
    };
    let set = eval_comprehension(two.program(), &comp, &BTreeMap::new(), &store);
    assert_eq!(set.len(), 1);
    assert!(set.contains(&Term::apply("State", vec![Term::int(1)])));

    // Any comprehension over the empty store is empty.
    let empty = engine::FactStore::new();
    let set = eval_comprehension(two.program(), &comp, &BTreeMap::new(), &empty);
    assert!(set.is_empty());

    // { s | s is State, s = i.st } under i -> Init(State(100)) over BadMach.
    let bad = ws.env.models.get("BadMach").unwrap();
    let bad_store = engine::evaluate(bad.program(), &bad.facts, &opts()).unwrap();
    let inner = Comprehension {
        head: Term::var("s"),
        disjuncts: vec![vec![
            Literal::IsMember(Term::var("s"), modlog::types::TypeExpr::ctor(QualName::plain("State"))),
            Literal::Compare(
                modlog::modsys::Expr::Term(Term::var("s")),
                modlog::frontend::ast::CompareOp::Eq,
                modlog::modsys::Expr::Accessor { var: "i".into(), ctor: QualName::plain("Init"), index: 0 },
            ),
        ]],
        captured: ["i".to_string()].into_iter().collect(),
    };
    let mut outer = BTreeMap::new();
    outer.insert("i".to_string(), Term::apply("Init", vec![Term::apply("State", vec![Term::int(100)])]));
    let set = eval_comprehension(bad.program(), &inner, &outer, &bad_store);
    assert!(set.is_empty(), "State(100) is not a defined state, so the set is empty");
}

#[test]
fn store_serialization_golden() {
    let ws = load_corpus();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    let store = engine::evaluate(two.program(), &two.facts, &opts()).unwrap();
    assert_eq!(store.serialize(), include_str!("fixtures/two_state_mach_store.txt"));
}

#[test]
fn evaluation_is_deterministic() {
    let ws = load_corpus();
    let m = ws.env.models.get("CntrMach").unwrap();
    let a = engine::evaluate(m.program(), &m.facts, &opts()).unwrap().serialize();
    let b = engine::evaluate(m.program(), &m.facts, &opts()).unwrap().serialize();
    assert_eq!(a, b);
}

#[test]
fn conformance_equals_goal_constant() {
    let ws = load_corpus();
    for m in ws.env.models.values() {
        let store = engine::evaluate(m.program(), &m.facts, &opts()).unwrap();
        let derived = store.contains(&Term::Const(m.domain.conforms_goal.clone()));
        let report = engine::check_conforms(m, &opts()).unwrap();
        assert_eq!(report.conforms, derived, "{}", m.name);
        assert_eq!(report.conforms, report.clauses.iter().all(|c| c.holds), "{}", m.name);
    }
}

#[test]
fn positive_strata_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sources: Vec<String> =
        (0..10).map(|i| random_fsm_source(&format!("Mono{}", i), &mut rng, true)).collect();
    let joined = sources.join("\n");
    let ws = load_corpus_plus(&[("mono.4ml", &joined)]).unwrap();
    let reach = QualName::plain("Reach");
    for i in 0..10 {
        let m = ws.env.models.get(&format!("Mono{}", i)).unwrap();
        let base = engine::evaluate(m.program(), &m.facts, &opts()).unwrap();
        // Add a transition between two defined states.
        let mut extended = m.facts.clone();
        let states: Vec<Term> = m
            .facts
            .iter()
            .filter(|f| f.outer_symbol() == Some(&QualName::plain("State")))
            .cloned()
            .collect();
        let events: Vec<Term> = m
            .facts
            .iter()
            .filter(|f| f.outer_symbol() == Some(&QualName::plain("Event")))
            .cloned()
            .collect();
        extended.insert(Term::apply(
            "Trans",
            vec![states[0].clone(), events[0].clone(), states[states.len() - 1].clone()],
        ));
        let bigger = engine::evaluate(m.program(), &extended, &opts()).unwrap();
        for fact in base.with_symbol(&reach) {
            assert!(bigger.contains(fact), "Reach is monotone under new EDB facts ({})", fact);
        }
    }
}

#[test]
fn fact_cap_aborts() {
    let ws = load_corpus();
    let m = ws.env.models.get("CntrMach").unwrap();
    let tiny = EvalOptions { max_facts: 3, ..Default::default() };
    assert!(matches!(
        engine::evaluate(m.program(), &m.facts, &tiny),
        Err(engine::EvalError::FactCap(3))
    ));
}

#[test]
fn runaway_term_growth_aborts() {
    // G(F(x)) :- G(x) builds ever-deeper terms; the depth cap trips long
    // before the fact cap would.
    let ws = loader::load_strs(&[(
        "grow.4ml",
        "domain Grow {\n\
            F ::= new (any U).\n\
            U ::= F + { Nil }.\n\
            G ::= (any U).\n\
            G(x) :- F(x).\n\
            G(F(x)) :- G(x).\n\
         }\n\
         model Seed of Grow { F(Nil). }",
    )])
    .unwrap();
    let m = ws.env.models.get("Seed").unwrap();
    let shallow = EvalOptions { max_term_depth: 64, ..Default::default() };
    assert!(matches!(
        engine::evaluate(m.program(), &m.facts, &shallow),
        Err(engine::EvalError::TermDepth(64))
    ));
    assert!(matches!(
        engine::evaluate_naive(m.program(), &m.facts, &shallow),
        Err(engine::EvalError::TermDepth(64))
    ));
}

#[test]
fn pathological_nesting_is_a_diagnostic() {
    let depth = 5_000;
    let text = format!(
        "domain D {{ F ::= new (Integer). q :- G({}1{}). }}",
        "F(".repeat(depth),
        ")".repeat(depth)
    );
    let err = loader::load_strs(&[("deep.4ml", &text)]).expect_err("deep nesting rejected");
    assert!(err.iter().any(|d| d.message.contains("nesting deeper")), "{:?}", err);
}

#[test]
fn query_frozen_examples() {
    let ws = load_corpus();
    let run = |model: &str, goal: &str| -> Vec<String> {
        let m = ws.env.models.get(model).unwrap();
        let body = modlog::frontend::parser::parse_goal("<goal>", goal).unwrap();
        let ctx = modlog::modsys::resolve::ResolveCtx {
            table: &m.table,
            module: &m.domain.name,
            prefixes: &[],
            path: "<goal>",
        };
        let (conj, vars) = modlog::modsys::resolve::resolve_goal(&ctx, &body).unwrap();
        engine::query(m, &conj, &vars, &opts())
            .unwrap()
            .into_iter()
            .map(|b| vars.iter().map(|v| b[v].to_string()).collect::<Vec<_>>().join(" "))
            .collect()
    };
    assert_eq!(run("TwoStateMach", "Reach(x)"), vec!["State(1)", "State(2)"]);
    assert!(run("TwoStateMach", "Reach(State(7))").is_empty());
    assert!(run("CntrActions", "TypeJudge(e, BOOL)").is_empty());
    assert_eq!(
        run("CntrActions", "TypeJudge(e, INT)"),
        vec![
            "0",
            "1",
            "Asn(\"X\", 0)",
            "Asn(\"X\", BnApp(ADD, Var(\"X\"), 1))",
            "BnApp(ADD, Var(\"X\"), 1)",
            "Var(\"X\")",
        ]
    );
}

#[test]
fn membership_generators_reach_same_stratum_facts() {
    // Q probes P only through `is`, and P and Q are mutually recursive, so
    // the semi-naive engine must keep re-firing the membership rule.
    let ws = loader::load_strs(&[(
        "chain.4ml",
        "domain Chain {\n\
            A ::= new (Integer).\n\
            P ::= (Integer).\n\
            Q ::= (Integer).\n\
            P(x) :- A(x).\n\
            P(y) :- Q(x), y = x + 1, y < 5.\n\
            Q(x) :- p is P, p = P(x).\n\
         }\n\
         model Seed of Chain { A(0). }",
    )])
    .unwrap();
    let m = ws.env.models.get("Seed").unwrap();
    let semi = engine::evaluate(m.program(), &m.facts, &opts()).unwrap();
    let naive = engine::evaluate_naive(m.program(), &m.facts, &opts()).unwrap();
    assert_eq!(semi, naive);
    for i in 0..=4 {
        assert!(semi.contains(&Term::apply("P", vec![Term::int(i)])), "P({})", i);
        assert!(semi.contains(&Term::apply("Q", vec![Term::int(i)])), "Q({})", i);
    }
    assert!(!semi.contains(&Term::apply("P", vec![Term::int(5)])));
}

// ----- transforms -----

#[test]
fn extending_models_project_into_transform_inputs() {
    // CntrMach is over DetFSMWithActions, which extends NonDetFSM; its
    // action facts project away and the machine core is pruned.
    let ws = load_corpus();
    let prune = ws.env.transforms.get("Prune").unwrap();
    let cntr = ws.env.models.get("CntrMach").unwrap();
    let app = apply_transform(prune, &[cntr], &opts(), ContractPolicy::default()).unwrap();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    assert_eq!(app.outputs[0].facts, two.facts);

    // A model over an unrelated domain is a mismatch.
    let ca = ws.env.models.get("CntrActions").unwrap();
    assert!(matches!(
        apply_transform(prune, &[ca], &opts(), ContractPolicy::default()),
        Err(TransformError::DomainMismatch { .. })
    ));
}

#[test]
fn single_equation_system_equals_apply() {
    let ws = load_corpus_plus(&[(
        "single.4ml",
        "transform system Single (in1:: NonDetFSM) returns (out:: NonDetFSM) {\n\
            out = Prune(in1).\n\
         }",
    )])
    .unwrap();
    let sys = ws.env.systems.get("Single").unwrap();
    let prune = ws.env.transforms.get("Prune").unwrap();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    let mut inputs = BTreeMap::new();
    inputs.insert("in1".to_string(), std::sync::Arc::clone(two));
    let run = modlog::transform::run_system(sys, &inputs, &opts(), ContractPolicy::default()).unwrap();
    let app = apply_transform(prune, &[two], &opts(), ContractPolicy::default()).unwrap();
    assert_eq!(run.outputs[0].1.facts, app.outputs[0].facts);
    assert!(run.intermediates.is_empty());
}

#[test]
fn enumeration_witnesses_ctor_disjointness() {
    // A term in the extension of Trans but not of Init, found by the
    // bounded generator, witnesses that the extensions are not contained.
    let ws = load_corpus();
    let d = ws.env.domains.get("NonDetFSM").unwrap();
    let trans = modlog::types::TypeExpr::ctor(QualName::plain("Trans"));
    let init = modlog::types::TypeExpr::ctor(QualName::plain("Init"));
    let trans_terms = enumerate(&trans, &d.table, ENUM_DEPTH);
    let init_terms = enumerate(&init, &d.table, ENUM_DEPTH);
    let witness = Term::apply(
        "Trans",
        vec![
            Term::apply("State", vec![Term::int(1)]),
            Term::apply("Event", vec![Term::str("a")]),
            Term::apply("State", vec![Term::int(1)]),
        ],
    );
    assert!(trans_terms.contains(&witness));
    assert!(!init_terms.contains(&witness));
    assert!(!modlog::types::is_subtype(&trans, &init));
}

#[test]
fn systems_nest_inside_systems() {
    let ws = load_corpus_plus(&[(
        "outer.4ml",
        "transform system Outer (a:: NonDetFSM, b:: NonDetFSM) returns (final:: ParallelFSMs) {\n\
            final = PruneAndParallelize(a, b).\n\
         }",
    )])
    .unwrap();
    let sys = ws.env.systems.get("Outer").unwrap();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    let mut inputs = BTreeMap::new();
    inputs.insert("a".to_string(), std::sync::Arc::clone(two));
    inputs.insert("b".to_string(), std::sync::Arc::clone(two));
    let run = modlog::transform::run_system(sys, &inputs, &opts(), ContractPolicy::default()).unwrap();
    assert_eq!(run.outputs[0].0, "final");
    assert_eq!(run.outputs[0].1.facts.len(), 12);
}

#[test]
fn contract_goals_are_visible_symbols() {
    let ws = load_corpus();
    let prune = ws.env.transforms.get("Prune").unwrap();
    for goal in ["Prune.requires", "Prune.ensures"] {
        let info = prune.table.get(&QualName::from_dotted(goal)).unwrap_or_else(|| panic!("{}", goal));
        assert_eq!((info.kind, info.arity), (SymbolKind::Derived, 0));
    }
    // Per-clause constants stay hidden.
    assert!(prune.table.get(&QualName::from_dotted("Prune.requires#1")).is_none());
    assert!(prune.hidden.contains(&QualName::from_dotted("Prune.requires#1")));
}

#[test]
fn copy_transform_round_trips_facts() {
    let ws = load_corpus_plus(&[(
        "copy.4ml",
        "transform Copy (in:: NonDetFSM) returns (out:: NonDetFSM) {\n\
            out.State(x) :- in.State(x).\n\
            out.Event(n) :- in.Event(n).\n\
            out.Init(s) :- in.Init(s).\n\
            out.Trans(s, e, s') :- in.Trans(s, e, s').\n\
         }",
    )])
    .unwrap();
    let copy = ws.env.transforms.get("Copy").unwrap();
    for name in ["OneStateMach", "TwoStateMach", "BadMach"] {
        let m = ws.env.models.get(name).unwrap();
        let app = apply_transform(copy, &[m], &opts(), ContractPolicy::default()).unwrap();
        assert_eq!(app.outputs[0].facts, m.facts, "copy round-trips {}", name);
    }
}

#[test]
fn extraction_filters_prefix_and_kind() {
    let ws = load_corpus();
    let out_domain = ws.env.domains.get("NonDetFSM").unwrap();
    let mut store = engine::FactStore::new();
    let out_state = Term::apply("out.State", vec![Term::int(1)]);
    store.insert(out_state.clone());
    store.insert(Term::apply("out.Init", vec![out_state.clone()]));
    store.insert(Term::apply("in.State", vec![Term::int(1)]));
    store.insert(Term::apply("out.Reach", vec![out_state]));
    store.insert(Term::constant("Prune.requires"));
    let model = extract_output("Prune", &store, "out", out_domain).unwrap();
    let got: Vec<String> = model.facts.iter().map(|t| t.to_string()).collect();
    assert_eq!(got, vec!["Init(State(1))", "State(1)"]);

    let empty = extract_output("Prune", &engine::FactStore::new(), "out", out_domain).unwrap();
    assert!(empty.facts.is_empty());
}

#[test]
fn extraction_soundness_on_pipeline_outputs() {
    let ws = load_corpus();
    let prune = ws.env.transforms.get("Prune").unwrap();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    let app = apply_transform(prune, &[two], &opts(), ContractPolicy::default()).unwrap();
    for m in &app.outputs {
        for f in &m.facts {
            let sym = f.outer_symbol().expect("facts are constructor terms");
            assert_eq!(m.domain.table.get(sym).map(|i| i.kind), Some(SymbolKind::New), "{}", f);
        }
    }
}

#[test]
fn contracts_are_conjunctive() {
    let gate = "transform Gate (in:: NonDetFSM) returns (out:: NonDetFSM) {\n\
            requires in.Init(_).\n\
            requires no in.State(99).\n\
            out.State(x) :- in.State(x).\n\
         }";
    let ws = load_corpus_plus(&[(
        "gate.4ml",
        &format!(
            "{}\n\
             model GOk of NonDetFSM {{ State(1). Init(State(1)). }}\n\
             model GNoInit of NonDetFSM {{ State(1). }}\n\
             model GBadState of NonDetFSM {{ State(99). Init(State(99)). }}",
            gate
        ),
    )])
    .unwrap();
    let t = ws.env.transforms.get("Gate").unwrap();
    let ok = ws.env.models.get("GOk").unwrap();
    assert!(apply_transform(t, &[ok], &opts(), ContractPolicy::default()).is_ok());

    for (model, failing) in [("GNoInit", "Gate#1"), ("GBadState", "Gate#2")] {
        let m = ws.env.models.get(model).unwrap();
        match apply_transform(t, &[m], &opts(), ContractPolicy::default()) {
            Err(TransformError::Requires { failing: f, clauses, .. }) => {
                assert_eq!(f, failing, "{}", model);
                assert_eq!(clauses.iter().filter(|c| !c.holds).count(), 1);
            }
            other => panic!("{}: expected requires violation, got {:?}", model, other.is_ok()),
        }
    }
}

#[test]
fn untyped_equality_leak_is_reported_not_fatal() {
    // `s = i` bypasses static head typing, so the rule derives a fact whose
    // inner constructor is still in the input namespace; extraction reports
    // it as an ill-typed output instead of producing a broken model.
    let ws = loader::load_strs(&[(
        "leak.4ml",
        "domain FSM2 {\n\
            State ::= new (id: Integer).\n\
            Init  ::= new (st: State).\n\
         }\n\
         transform Leak (in:: FSM2) returns (out:: FSM2) {\n\
            out.Init(s) :- in.Init(i), s = i.\n\
         }\n\
         model M of FSM2 { State(1). Init(State(1)). }",
    )])
    .unwrap();
    let t = ws.env.transforms.get("Leak").unwrap();
    let m = ws.env.models.get("M").unwrap();
    match apply_transform(t, &[m], &opts(), ContractPolicy::default()) {
        Err(TransformError::IllTypedOutput { fact, .. }) => {
            assert_eq!(fact, "out.Init(in.State(1))");
        }
        other => panic!("expected an ill-typed output report, got ok={}", other.is_ok()),
    }
}

#[test]
fn ensures_violation_withholds_outputs_unless_forced() {
    let ws = load_corpus_plus(&[(
        "bad.4ml",
        "transform BadCopy (in:: NonDetFSM) returns (out:: NonDetFSM) {\n\
            ensures out.conforms.\n\
            out.State(x) :- in.State(x).\n\
            out.Trans(s, e, s') :- in.Trans(s, e, s').\n\
            out.Event(n) :- in.Event(n).\n\
         }",
    )])
    .unwrap();
    // BadCopy drops Init facts, so out.conforms (needs an initial state) fails.
    let t = ws.env.transforms.get("BadCopy").unwrap();
    let two = ws.env.models.get("TwoStateMach").unwrap();
    match apply_transform(t, &[two], &opts(), ContractPolicy::default()) {
        Err(TransformError::Ensures { outputs, .. }) => {
            assert_eq!(outputs.len(), 1, "outputs travel with the error for --force");
        }
        other => panic!("expected ensures violation, got {:?}", other.is_ok()),
    }
    let forced = apply_transform(t, &[two], &opts(), ContractPolicy { force: true }).unwrap();
    assert!(!forced.ensures_held);
    assert_eq!(forced.outputs.len(), 1);
}
