#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::formats::{read_counts_csv, write_counts_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(counts) = read_counts_csv(data) {
        let mut out = Vec::new();
        write_counts_csv(&counts, &mut out).expect("accepted counts write");
        let again = read_counts_csv(out.as_slice()).expect("written counts read back");
        assert_eq!(again, counts);
    }
});
