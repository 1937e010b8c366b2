//! Renders raw ASTs back to concrete syntax. Re-parsing the output yields a
//! structurally identical AST up to spans; comments are not preserved.

use super::ast::*;
use crate::types::escape_str;
use std::fmt::Write;

pub fn print_unit(unit: &SourceUnit) -> String {
    let mut out = String::new();
    for (i, d) in unit.decls.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_decl(&mut out, d);
    }
    out
}

fn print_decl(out: &mut String, d: &RawModuleDecl) {
    match d.kind {
        ModuleKind::Domain => {
            write!(out, "domain {}", d.name).unwrap();
            print_imports(out, d.import_mode, &d.imports);
        }
        ModuleKind::Model => {
            let of = d.of_target.as_ref().map(|t| t.target.as_str()).unwrap_or("?");
            write!(out, "model {} of {}", d.name, of).unwrap();
            print_imports(out, d.import_mode, &d.imports);
        }
        ModuleKind::Transform => {
            write!(out, "transform {} ", d.name).unwrap();
            print_sigs(out, &d.sig_inputs);
            out.push_str(" returns ");
            print_sigs(out, &d.sig_outputs);
        }
        ModuleKind::TransformSystem => {
            write!(out, "transform system {} ", d.name).unwrap();
            print_sigs(out, &d.sig_inputs);
            out.push_str(" returns ");
            print_sigs(out, &d.sig_outputs);
        }
    }
    out.push_str(" {\n");
    for item in &d.items {
        out.push_str("   ");
        print_item(out, item);
        out.push('\n');
    }
    out.push_str("}\n");
}

fn print_imports(out: &mut String, mode: ImportMode, imports: &[RawImport]) {
    let kw = match mode {
        ImportMode::None => return,
        ImportMode::Includes => "includes",
        ImportMode::Extends => "extends",
    };
    write!(out, " {} ", kw).unwrap();
    for (i, imp) in imports.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        if let Some(p) = &imp.prefix {
            write!(out, "{}::", p).unwrap();
        }
        out.push_str(&imp.target);
    }
}

fn print_sigs(out: &mut String, sigs: &[RawSig]) {
    out.push('(');
    for (i, s) in sigs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{}:: {}", s.label, s.domain).unwrap();
    }
    out.push(')');
}

fn print_item(out: &mut String, item: &RawItem) {
    match item {
        RawItem::TypeDecl(td) => print_type_decl(out, td),
        RawItem::Rule(r) => {
            for (i, h) in r.heads.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_term(out, h);
            }
            out.push_str(" :- ");
            print_body(out, &r.body);
            out.push('.');
        }
        RawItem::Conforms(c) => {
            out.push_str("conforms ");
            print_body(out, &c.body);
            out.push('.');
        }
        RawItem::Requires(c) => {
            out.push_str("requires ");
            print_body(out, &c.body);
            out.push('.');
        }
        RawItem::Ensures(c) => {
            out.push_str("ensures ");
            print_body(out, &c.body);
            out.push('.');
        }
        RawItem::Fact(t) => {
            print_term(out, t);
            out.push('.');
        }
        RawItem::SymConst(sc) => {
            write!(out, "{} is ", sc.name).unwrap();
            print_term(out, &sc.value);
            out.push('.');
        }
        RawItem::Pipeline(eq) => {
            out.push_str(&eq.lhs.join(", "));
            write!(out, " = {}({}).", eq.callee, eq.args.join(", ")).unwrap();
        }
    }
}

fn print_type_decl(out: &mut String, td: &RawTypeDecl) {
    write!(out, "{} ::= ", td.name).unwrap();
    match td.marker {
        CtorMarker::New => out.push_str("new "),
        CtorMarker::Fun => out.push_str("fun "),
        CtorMarker::Derived => {}
    }
    match &td.body {
        RawTypeDeclBody::Ctor { fields, fun_split } => {
            out.push('(');
            for (i, f) in fields.iter().enumerate() {
                if i > 0 {
                    if *fun_split == Some(i) {
                        out.push_str(" -> ");
                    } else {
                        out.push_str(", ");
                    }
                }
                if let Some(n) = &f.name {
                    write!(out, "{}: ", n).unwrap();
                }
                if f.any {
                    out.push_str("any ");
                }
                print_type_expr(out, &f.ty);
            }
            out.push(')');
        }
        RawTypeDeclBody::Union(te) => print_type_expr(out, te),
    }
    out.push('.');
}

fn print_type_expr(out: &mut String, te: &RawTypeExpr) {
    for (i, atom) in te.atoms.iter().enumerate() {
        if i > 0 {
            out.push_str(" + ");
        }
        match atom {
            RawTypeAtom::Name(q) => out.push_str(&q.dotted()),
            RawTypeAtom::ConstSet(cs, _) => {
                out.push_str("{ ");
                for (j, c) in cs.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    match c {
                        RawConst::Int(n) => write!(out, "{}", n).unwrap(),
                        RawConst::Str(s) => write!(out, "\"{}\"", escape_str(s)).unwrap(),
                        RawConst::Name(q) => out.push_str(&q.dotted()),
                    }
                }
                out.push_str(" }");
            }
        }
    }
}

fn print_body(out: &mut String, b: &RawBody) {
    for (i, conj) in b.disjuncts.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        for (j, lit) in conj.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            print_literal(out, lit);
        }
    }
}

fn print_literal(out: &mut String, lit: &RawLiteral) {
    match lit {
        RawLiteral::Atom(t) => print_term(out, t),
        RawLiteral::NoComp(c, _) => {
            out.push_str("no ");
            print_comp(out, c);
        }
        RawLiteral::NoAtom(t, _) => {
            out.push_str("no ");
            print_term(out, t);
        }
        RawLiteral::Compare(a, op, b, _) => {
            print_expr(out, a);
            write!(out, " {} ", op.symbol()).unwrap();
            print_expr(out, b);
        }
        RawLiteral::IsMember(x, te, _) => {
            write!(out, "{} is ", x).unwrap();
            print_type_expr(out, te);
        }
        RawLiteral::TypeTest(t, te, _) => {
            print_term(out, t);
            out.push_str(" : ");
            print_type_expr(out, te);
        }
    }
}

fn print_expr(out: &mut String, e: &RawExpr) {
    match e {
        RawExpr::Term(t) => print_term(out, t),
        RawExpr::Count(c, _) => {
            out.push_str("count(");
            print_comp(out, c);
            out.push(')');
        }
        RawExpr::Binary(op, a, b, _) => {
            print_paren_expr(out, a);
            write!(out, " {} ", op.symbol()).unwrap();
            print_paren_expr(out, b);
        }
    }
}

fn print_paren_expr(out: &mut String, e: &RawExpr) {
    if matches!(e, RawExpr::Binary(..)) {
        out.push('(');
        print_expr(out, e);
        out.push(')');
    } else {
        print_expr(out, e);
    }
}

fn print_comp(out: &mut String, c: &RawComprehension) {
    out.push_str("{ ");
    print_term(out, &c.head);
    out.push_str(" | ");
    print_body(out, &c.body);
    out.push_str(" }");
}

pub fn print_term_raw(t: &RawTerm) -> String {
    let mut out = String::new();
    print_term(&mut out, t);
    out
}

fn print_term(out: &mut String, t: &RawTerm) {
    match t {
        RawTerm::Int(n, _) => write!(out, "{}", n).unwrap(),
        RawTerm::Str(s, _) => write!(out, "\"{}\"", escape_str(s)).unwrap(),
        RawTerm::Name(q) => out.push_str(&q.dotted()),
        RawTerm::Apply(q, args, _) => {
            out.push_str(&q.dotted());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_term(out, a);
            }
            out.push(')');
        }
        RawTerm::Wildcard(_) => out.push('_'),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parser::parse_source;

    fn round_trip(text: &str) {
        let mut first = parse_source("rt", text).expect("input parses");
        let printed = print_unit(&first);
        let mut second = parse_source("rt", &printed)
            .unwrap_or_else(|e| panic!("printed output must reparse: {:?}\n{}", e, printed));
        strip_spans(&mut first);
        strip_spans(&mut second);
        assert_eq!(first, second, "round trip changed structure:\n{}", printed);
    }

    #[test]
    fn round_trip_core_constructs() {
        round_trip(
            r#"
domain NonDetFSM {
   State ::= new (id: Integer).
   Event ::= new (id: String).
   Trans ::= new (src: State, ev: Event, dst: State).
   Init  ::= new (st: State).
   Reach ::= (State).
   Reach(s) :- Init(s); Reach(s'), Trans(s', _, s).
   conforms Init(_).
   conforms no { i | i is Init, no { s | s is State, s = i.st } }.
}
model TwoStateMach of NonDetFSM {
   s1 is State(1).
   eFoo is Event("fo\"o").
   Init(s1).
}
transform Prune (in:: NonDetFSM) returns (out:: NonDetFSM) {
   requires in.conforms.
   ensures out.conforms.
   out.State(x) :- in.Reach(State(x)).
}
transform system S (a:: NonDetFSM) returns (out:: NonDetFSM) {
   out = Prune(a).
}
"#,
        );
    }

    #[test]
    fn round_trip_fun_and_negatives() {
        round_trip(
            r#"
domain D extends A, B {
   VarDecl ::= fun (id: String -> type: { BOOL, INT }).
   UnApp ::= new (op: { NEG, NOT }, arg1: any Expr).
   U ::= F + { Nil, -3, "s" }.
   q :- no Reach(s), count({ s | Init(s) }) = 1, x != 2 + 3 * 4.
}
"#,
        );
    }
}
