#![no_main]

use libfuzzer_sys::fuzz_target;
use rsgd_cli::specs;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(b) = specs::parse_batches(text) {
        assert!(b.windows(2).all(|w| w[0] != w[1]) && !b.contains(&0));
    }
    let _ = specs::parse_seeds(text);
    let _ = specs::parse_epsilons(text);
    let _ = specs::parse_schedules(text);
    let _ = specs::parse_period(text);
    let _ = specs::parse_point(text, 3);
    if let Ok((lo, hi)) = specs::parse_real_range(text) {
        assert!(lo <= hi);
    }
});
