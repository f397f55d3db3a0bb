#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::formats::{read_records_csv, write_records_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = read_records_csv(data) {
        let mut out = Vec::new();
        write_records_csv(&records, &mut out).expect("accepted records write");
        let again = read_records_csv(out.as_slice()).expect("written records read back");
        assert_eq!(again.len(), records.len());
    }
});
