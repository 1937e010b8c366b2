//! Anything that parses must print back to text that re-parses to the same
//! structure (spans aside).

#![no_main]

use libfuzzer_sys::fuzz_target;
use modlog::frontend::{parse_source, print_unit, strip_spans};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut first) = parse_source("fuzz.4ml", text) else { return };
    let printed = print_unit(&first);
    let mut second = parse_source("fuzz.4ml", &printed)
        .unwrap_or_else(|e| panic!("printed output must re-parse: {:?}\n{}", e, printed));
    strip_spans(&mut first);
    strip_spans(&mut second);
    assert_eq!(first, second, "round trip changed structure:\n{}", printed);
});
