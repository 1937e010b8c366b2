//! Lexer + parser on arbitrary text: must never panic, only diagnose.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = modlog::frontend::parse_source("fuzz.4ml", text);
    }
});
