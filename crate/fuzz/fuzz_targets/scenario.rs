#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::simgen::ScenarioSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = ScenarioSpec::from_kv(text) {
        let again = ScenarioSpec::from_kv(&spec.to_string()).expect("canonical scenario parses");
        assert_eq!(again, spec);
    }
});
