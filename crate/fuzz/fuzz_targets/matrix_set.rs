#![no_main]

use libfuzzer_sys::fuzz_target;
use rsgd_core::dataio::{format_matrix_set, parse_matrix_set};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = parse_matrix_set(text) {
        let again = parse_matrix_set(&format_matrix_set(&set)).unwrap();
        assert_eq!(again.len(), set.len());
    }
});
