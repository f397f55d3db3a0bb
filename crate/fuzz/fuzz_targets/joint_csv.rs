#![no_main]

use libfuzzer_sys::fuzz_target;
use transport_core::formats::{read_joint_csv, write_joint_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_joint_csv(data) {
        let mut out = Vec::new();
        write_joint_csv(&table, &mut out).expect("accepted table writes");
        let again = read_joint_csv(out.as_slice()).expect("written table reads back");
        let mut twice = Vec::new();
        write_joint_csv(&again, &mut twice).unwrap();
        assert_eq!(out, twice);
    }
});
