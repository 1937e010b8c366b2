//! The query-goal parser and resolver on arbitrary text, against a fixed
//! compiled machine: the path the CLI exposes to untrusted goal strings.

#![no_main]

use libfuzzer_sys::fuzz_target;
use modlog::engine::{self, EvalOptions};
use modlog::loader::{load_strs, Workspace};
use std::sync::OnceLock;

const MACHINE: &str = r#"
domain FSM {
   State ::= new (id: Integer).
   Event ::= new (id: String).
   Trans ::= new (src: State, ev: Event, dst: State).
   Init  ::= new (st: State).
   Reach ::= (State).
   Reach(s) :- Init(s); Reach(s'), Trans(s', _, s).
   conforms Init(_).
}
model M of FSM {
   s1 is State(1).
   State(2).
   Event("go").
   Init(s1).
   Trans(s1, Event("go"), State(2)).
}
"#;

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| load_strs(&[("machine.4ml", MACHINE)]).expect("fixed machine compiles"))
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let ws = workspace();
    let model = ws.env.models.get("M").unwrap();
    let Ok(body) = modlog::frontend::parser::parse_goal("<goal>", text) else { return };
    let ctx = modlog::modsys::resolve::ResolveCtx {
        table: &model.table,
        module: &model.domain.name,
        prefixes: &[],
        path: "<goal>",
    };
    let Ok((goal, vars)) = modlog::modsys::resolve::resolve_goal(&ctx, &body) else { return };
    let _ = engine::query(model, &goal, &vars, &EvalOptions { max_facts: 20_000, max_term_depth: 256 });
});
