#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::formats::parse_key_values;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(pairs) = parse_key_values(text) {
        for kv in pairs {
            assert!(kv.line >= 1 && kv.value_column >= 1);
            assert!(!kv.key.is_empty());
        }
    }
});
