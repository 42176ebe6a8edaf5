//! Replays the checked-in fuzz seeds through every parser.

use std::path::PathBuf;

use rsgd_cli::config::FileConfig;
use rsgd_cli::specs;
use rsgd_cli::tables::parse_sweep_csv;
use rsgd_core::dataio::{encode_pgm, format_matrix_set, parse_matrix_set, parse_pgm};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds in {}", dir.display());
    files.iter().map(|f| std::fs::read(f).unwrap()).collect()
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn pgm_seeds() {
    let outcomes: Vec<bool> = seeds("pgm")
        .iter()
        .map(|s| match parse_pgm(s) {
            Ok(img) => {
                assert_eq!(parse_pgm(&encode_pgm(&img)).unwrap(), img);
                true
            }
            Err(_) => false,
        })
        .collect();
    assert!(outcomes.contains(&true) && outcomes.contains(&false));
}

#[test]
fn matrix_set_seeds() {
    let mut accepted = 0;
    for s in seeds("matrix_set") {
        if let Ok(set) = parse_matrix_set(text(&s)) {
            assert_eq!(parse_matrix_set(&format_matrix_set(&set)).unwrap().len(), set.len());
            accepted += 1;
        }
    }
    assert_eq!(accepted, 2);
}

#[test]
fn sweep_csv_seeds() {
    let results: Vec<bool> = seeds("sweep_csv").iter().map(|s| parse_sweep_csv(text(s)).is_ok()).collect();
    assert_eq!(results.iter().filter(|ok| **ok).count(), 1);
}

#[test]
fn config_seeds() {
    let results: Vec<bool> = seeds("cli_config").iter().map(|s| FileConfig::parse(text(s)).is_ok()).collect();
    assert_eq!(results.iter().filter(|ok| **ok).count(), 2);
}

#[test]
fn spec_seeds() {
    for s in seeds("specs") {
        let s = text(&s);
        let any = specs::parse_batches(s).is_ok()
            || specs::parse_seeds(s).is_ok()
            || specs::parse_period(s).is_ok()
            || specs::parse_point(s, 3).is_ok()
            || specs::parse_real_range(s).is_ok();
        assert!(any, "{s}");
    }
}
