#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::diagram::parse_diagram;

// Accepted diagrams print to a canonical form that parses back to itself.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = parse_diagram(text) {
        let canonical = g.to_string();
        let again = parse_diagram(&canonical).expect("canonical form parses");
        assert_eq!(again.to_string(), canonical);
    }
});
