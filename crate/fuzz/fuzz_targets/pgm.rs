#![no_main]

use libfuzzer_sys::fuzz_target;
use rsgd_core::dataio::{encode_pgm, parse_pgm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_pgm(data) {
        assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
    }
});
