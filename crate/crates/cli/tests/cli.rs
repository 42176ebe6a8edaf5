use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsgd_cli::tables::parse_sweep_csv;
use rsgd_core::dataio::{encode_pgm, read_matrix_set, GrayImage};

fn rsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsgd")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rsgd(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Small dataset around `2·I` so runs starting at the identity have work to do.
fn small_data(dir: &Path) -> PathBuf {
    let p = path(dir, "small.msf");
    ok(&["gen", "--n", "32", "--d", "3", "--spread", "0.3", "--center", "scalar:2", "--seed", "3", "--out", s(&p)]);
    p
}

#[test]
fn gen_writes_requested_set() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(dir.path(), "data.msf");
    let out = ok(&["gen", "--n", "256", "--d", "5", "--spread", "0.5", "--seed", "7", "--out", s(&p)]);
    assert!(stdout(&out).contains("N=256 d=5"));
    let data = read_matrix_set(&p).unwrap();
    assert_eq!((data.len(), data.dim()), (256, 5));
}

#[test]
fn gen_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.msf"), path(dir.path(), "b.msf"));
    ok(&["gen", "--n", "20", "--d", "4", "--seed", "7", "--out", s(&a)]);
    ok(&["gen", "--n", "20", "--d", "4", "--seed", "7", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = path(dir.path(), "c.msf");
    ok(&["gen", "--n", "20", "--d", "4", "--seed", "8", "--out", s(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(dir.path(), "x.msf");
    assert_eq!(code(&rsgd(&["gen", "--n", "0", "--out", s(&p)])), 2);
    assert_eq!(code(&rsgd(&["gen", "--frobnicate"])), 2);
    assert_eq!(code(&rsgd(&["gen", "--n", "3"])), 2);
    assert_eq!(code(&rsgd(&["launch"])), 2);
    assert_eq!(code(&rsgd(&["sweep", "--data", s(&p), "--batches", "2^4..3^5"])), 2);
}

#[test]
fn config_values_sit_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "c.msf");
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, format!(r#"{{ "N": 10, "d": 2, "out": "{}" }}"#, s(&out))).unwrap();
    ok(&["--config", s(&cfg), "gen"]);
    assert_eq!(read_matrix_set(&out).unwrap().len(), 10);
    ok(&["gen", "--config", s(&cfg), "--n", "12"]);
    let data = read_matrix_set(&out).unwrap();
    assert_eq!((data.len(), data.dim()), (12, 2));

    std::fs::write(&cfg, r#"{ "N": 10, "colour": "blue" }"#).unwrap();
    assert_eq!(code(&rsgd(&["--config", s(&cfg), "gen"])), 2);
}

fn write_pgm(dir: &Path, name: &str, img: &GrayImage) -> PathBuf {
    let p = path(dir, name);
    std::fs::write(&p, encode_pgm(img)).unwrap();
    p
}

#[test]
fn descriptors_from_textured_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::from_fn(128, 128, |u, v| ((u * 31 + v * 17 + (u ^ v) * 5) % 256) as u8);
    let pgm = write_pgm(dir.path(), "tex.pgm", &img);
    let out = path(dir.path(), "tex.msf");
    let o = ok(&["descriptors", "--pgm", s(&pgm), "--grid", "4", "--out", s(&out)]);
    assert!(stdout(&o).contains("cells=1024"));
    let data = read_matrix_set(&out).unwrap();
    assert_eq!((data.len(), data.dim()), (1024, 5));

    assert_eq!(code(&rsgd(&["descriptors", "--pgm", s(&pgm), "--grid", "5", "--out", s(&out)])), 2);
}

#[test]
fn descriptors_of_constant_image_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = write_pgm(dir.path(), "flat.pgm", &GrayImage::from_fn(16, 16, |_, _| 77));
    let out = path(dir.path(), "flat.msf");
    let o = ok(&["descriptors", "--pgm", s(&pgm), "--out", s(&out)]);
    assert!(stdout(&o).contains("all descriptors identical"));
    let data = read_matrix_set(&out).unwrap();
    assert_eq!(data.get(0).mat().get(0, 0), 1e-6);
}

#[test]
fn truncated_pgm_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = path(dir.path(), "cut.pgm");
    std::fs::write(&pgm, b"P5\n4 4\n255\n\x01\x02\x03").unwrap();
    let o = rsgd(&["descriptors", "--pgm", s(&pgm), "--out", s(&path(dir.path(), "o.msf"))]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("offset") && err.contains("expected 16"), "{err}");
}

#[test]
fn run_csv_shape_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let o = ok(&["run", "--data", s(&data), "--steps", "0"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,f,grad_norm,alpha_k,V_k,dist_ref");
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains("5.0000000000000001e-4"), "{}", lines[1]);
    assert!(lines[2].starts_with("K,5.0000000000000000e-1,"));

    let o = ok(&["run", "--data", s(&data), "--steps", "5", "--batch", "4"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 6 + 2);
    assert!(stdout(&o).contains("K,2.5000000000000000e-1,censored"));
}

#[test]
fn run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let args = ["run", "--data", s(&data), "--steps", "30", "--alpha", "0.1", "--batch", "4", "--seed", "5",
        "--schedule", "staircase", "--T", "7"];
    let (a, b) = (ok(&args), ok(&args));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn run_relative_thresholds_are_reached() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let o = ok(&["run", "--data", s(&data), "--steps", "400", "--alpha", "0.1", "--batch", "8",
        "--thresholds", "relative", "--early-stop"]);
    let text = stdout(&o);
    let footer: Vec<&str> = text.lines().filter(|l| l.starts_with("K,")).collect();
    assert_eq!(footer.len(), 2);
    assert!(footer.iter().all(|l| !l.ends_with("censored")), "{footer:?}");
}

fn sweep_rows(dir: &Path, data: &Path, threads: &str) -> String {
    let out = path(dir, &format!("sweep{threads}.csv"));
    ok(&["sweep", "--data", s(data), "--batches", "2^2..2^4", "--seeds", "1..2", "--epsilons", "0.5",
        "--thresholds", "relative", "--alpha", "0.1", "--steps", "300", "--threads", threads,
        "--no-wall-time", "--out", s(&out)]);
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn sweep_cardinality_order_and_sfo() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let text = sweep_rows(dir.path(), &data, "1");
    assert!(text.starts_with("schedule,epsilon,batch,seed,K,censored,sfo,final_f,wall_ms\n"));
    let rows = parse_sweep_csv(&text).unwrap();
    assert_eq!(rows.len(), 6);
    let order: Vec<(usize, u64)> = rows.iter().map(|r| (r.batch, r.seed)).collect();
    assert_eq!(order, vec![(4, 1), (4, 2), (8, 1), (8, 2), (16, 1), (16, 2)]);
    assert!(rows.iter().all(|r| r.steps.is_some()));
    assert_eq!(text, sweep_rows(dir.path(), &data, "2"));
}

fn write_sweep(dir: &Path, rows: &[(&str, f64, usize, u64, Option<usize>)]) -> PathBuf {
    let mut text = String::from("schedule,epsilon,batch,seed,K,censored,sfo,final_f,wall_ms\n");
    for &(sched, eps, b, seed, k) in rows {
        match k {
            Some(k) => text.push_str(&format!("{sched},{eps},{b},{seed},{k},false,{},1.0,\n", k * b)),
            None => text.push_str(&format!("{sched},{eps},{b},{seed},,true,,1.0,\n")),
        }
    }
    let p = path(dir, "fit_input.csv");
    std::fs::write(&p, text).unwrap();
    p
}

fn report_value(report: &str, key: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("{key} in {report}"));
    line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn fit_recovers_model_constants() {
    // K = C₂ b / (ε b − σ² α C₁) with C₁ = C₂ = 2, σ² = α = ε = 1, G = 0:
    // 6, 4, 3 at b = 3, 4, 6, and the critical batch is 2C₁σ²α/ε = 4.
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sweep(dir.path(), &[
        ("constant", 1.0, 3, 1, Some(6)),
        ("constant", 1.0, 4, 1, Some(4)),
        ("constant", 1.0, 6, 1, Some(3)),
    ]);
    let fit_csv = path(dir.path(), "fit.csv");
    let o = ok(&["fit", "--sweep", s(&csv), "--schedule", "constant", "--sigma2", "1", "--G", "0",
        "--alpha", "1", "--out", s(&fit_csv)]);
    let report = stdout(&o);
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    assert!(rel(report_value(&report, "C1: "), 2.0) < 1e-6, "{report}");
    assert!(rel(report_value(&report, "C2: "), 2.0) < 1e-6, "{report}");
    assert!(rel(report_value(&report, "critical batch (numeric): "), 4.0) < 1e-6, "{report}");
    assert!(rel(report_value(&report, "critical batch (closed form): "), 4.0) < 1e-6, "{report}");
    assert!(rel(report_value(&report, "lower bound of b: "), 2.0) < 1e-6, "{report}");
    let fit = std::fs::read_to_string(fit_csv).unwrap();
    assert!(fit.starts_with("schedule,epsilon,c1,c2,residual,b_star_numeric"));
}

#[test]
fn noiseless_fit_reports_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sweep(dir.path(), &[
        ("constant", 0.5, 16, 1, Some(40)),
        ("constant", 0.5, 32, 1, Some(40)),
        ("constant", 0.5, 64, 1, Some(40)),
    ]);
    let o = ok(&["fit", "--sweep", s(&csv), "--schedule", "constant", "--sigma2", "0", "--G", "1"]);
    let report = stdout(&o);
    assert!(report.contains("(at range boundary)"), "{report}");
    assert_eq!(report_value(&report, "critical batch (numeric): "), 16.0);
}

#[test]
fn fit_input_problems() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_sweep(dir.path(), &[("constant", 0.5, 16, 1, None), ("constant", 0.5, 32, 1, None)]);
    let base = ["fit", "--sweep", s(&csv), "--sigma2", "1", "--G", "1", "--schedule"];
    let mut args = base.to_vec();
    args.push("staircase");
    assert_eq!(code(&rsgd(&args)), 2);
    let mut args = base.to_vec();
    args.push("constant");
    assert_eq!(code(&rsgd(&args)), 1);
    args.extend(["--epsilon", "0.3"]);
    assert_eq!(code(&rsgd(&args)), 2);
}
