//! Full front half on arbitrary text: parse, elaborate, stratify, and when
//! that succeeds, evaluate every model under a small fact cap. Diagnostics
//! are fine; panics and runaway loops are not.

#![no_main]

use libfuzzer_sys::fuzz_target;
use modlog::engine::{self, EvalOptions};
use modlog::loader;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ws) = loader::load_strs(&[("fuzz.4ml", text)]) else { return };
    let opts = EvalOptions { max_facts: 20_000, max_term_depth: 256 };
    for (_, model) in &ws.env.models {
        let _ = engine::check_conforms(model, &opts);
    }
    for (_, domain) in &ws.env.domains {
        let _ = engine::evaluate(domain.program(), &Default::default(), &opts);
    }
});
