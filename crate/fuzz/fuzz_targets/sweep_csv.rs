#![no_main]

use libfuzzer_sys::fuzz_target;
use rsgd_cli::tables::{mean_curve, parse_sweep_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_sweep_csv(text) {
        let refs: Vec<_> = rows.iter().collect();
        for (_, k) in mean_curve(&refs) {
            assert!(k.is_finite());
        }
    }
});
