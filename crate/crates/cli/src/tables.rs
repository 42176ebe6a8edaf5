//! CSV schemas written and read by the subcommands.

use std::io::Write;

use rsgd_core::dataio::format_f64;
use rsgd_core::experiment::{FitResult, SweepRecord};
use rsgd_core::rsgd::{RunRecord, ScheduleKind};

use crate::error::{CliError, CliResult};

pub const RUN_HEADER: [&str; 6] = ["step", "f", "grad_norm", "alpha_k", "V_k", "dist_ref"];
pub const SWEEP_HEADER: [&str; 9] =
    ["schedule", "epsilon", "batch", "seed", "K", "censored", "sfo", "final_f", "wall_ms"];
pub const FIT_HEADER: [&str; 10] = [
    "schedule",
    "epsilon",
    "c1",
    "c2",
    "residual",
    "b_star_numeric",
    "b_star_closed_form",
    "b_star_as_printed",
    "b_lower_bound",
    "at_boundary",
];

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// Per-step rows, then one `K,<ε>,<steps|censored>` row per threshold.
/// `labels` pairs each reported ε with the loss level the run targeted.
pub fn write_run_csv(out: impl Write, record: &RunRecord, labels: &[(f64, f64)]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(RUN_HEADER)?;
    for s in &record.steps {
        w.write_record([
            s.step.to_string(),
            format_f64(s.loss),
            opt(s.grad_norm),
            format_f64(s.alpha),
            opt(s.v_k),
            opt(s.dist_ref),
        ])?;
    }
    for &(eps, threshold) in labels {
        let k = record.steps_to(threshold).map_or_else(|| "censored".to_string(), |k| k.to_string());
        w.write_record(["K".to_string(), format_f64(eps), k])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(out: impl Write, record: &SweepRecord, wall_time: bool) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for c in &record.cells {
        let wall = if wall_time { format!("{:.3}", c.wall_time.as_secs_f64() * 1e3) } else { String::new() };
        let (k, sfo, final_f) = match (&c.error, c.steps) {
            (Some(_), _) => ("error".to_string(), String::new(), String::new()),
            (None, Some(k)) => (k.to_string(), (k * c.batch).to_string(), format_f64(c.final_loss)),
            (None, None) => (String::new(), String::new(), format_f64(c.final_loss)),
        };
        w.write_record([
            c.schedule.to_string(),
            format_f64(c.epsilon),
            c.batch.to_string(),
            c.seed.to_string(),
            k,
            c.censored().to_string(),
            sfo,
            final_f,
            wall,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of a sweep CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub schedule: ScheduleKind,
    pub epsilon: f64,
    pub batch: usize,
    pub seed: u64,
    pub steps: Option<usize>,
    pub censored: bool,
    pub failed: bool,
    pub final_f: Option<f64>,
    pub wall_ms: Option<f64>,
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).unwrap_or("")
}

fn row_error(line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("sweep CSV line {line}: {msg}"))
}

/// Parse and cross-check a sweep CSV (`sfo` must equal `K·batch`).
pub fn parse_sweep_csv(text: &str) -> CliResult<Vec<SweepRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(CliError::runtime(format!(
            "sweep CSV header must be '{}'",
            SWEEP_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> CliResult<f64> {
            field(&rec, i).parse::<f64>().map_err(|e| row_error(line, format!("column {}: {e}", SWEEP_HEADER[i])))
        };
        let int = |i: usize| -> CliResult<u64> {
            field(&rec, i).parse::<u64>().map_err(|e| row_error(line, format!("column {}: {e}", SWEEP_HEADER[i])))
        };
        let schedule: ScheduleKind = field(&rec, 0).parse().map_err(|e| row_error(line, e))?;
        let epsilon = num(1)?;
        let batch = usize::try_from(int(2)?).map_err(|e| row_error(line, e))?;
        let seed = int(3)?;
        let censored = match field(&rec, 5) {
            "true" => true,
            "false" => false,
            other => return Err(row_error(line, format!("censored must be true or false, got '{other}'"))),
        };
        let (steps, failed) = match field(&rec, 4) {
            "error" => (None, true),
            "" => (None, false),
            _ => (Some(usize::try_from(int(4)?).map_err(|e| row_error(line, e))?), false),
        };
        if censored != (steps.is_none() && !failed) {
            return Err(row_error(line, "censored flag disagrees with K"));
        }
        if let Some(k) = steps {
            let sfo = int(6)?;
            if Some(sfo) != (k as u64).checked_mul(batch as u64) {
                return Err(row_error(line, "sfo differs from K·batch"));
            }
        } else if !field(&rec, 6).is_empty() {
            return Err(row_error(line, "sfo given without K"));
        }
        let final_f = if field(&rec, 7).is_empty() { None } else { Some(num(7)?) };
        let wall_ms = if field(&rec, 8).is_empty() { None } else { Some(num(8)?) };
        if !(epsilon > 0.0) || batch == 0 {
            return Err(row_error(line, "epsilon and batch must be positive"));
        }
        rows.push(SweepRow { schedule, epsilon, batch, seed, steps, censored, failed, final_f, wall_ms });
    }
    Ok(rows)
}

/// `(b, mean K)` over uncensored rows, ascending in `b`.
pub fn mean_curve(rows: &[&SweepRow]) -> Vec<(f64, f64)> {
    let mut batches: Vec<usize> = rows.iter().map(|r| r.batch).collect();
    batches.sort_unstable();
    batches.dedup();
    batches
        .into_iter()
        .filter_map(|b| {
            let ks: Vec<f64> = rows
                .iter()
                .filter(|r| r.batch == b)
                .filter_map(|r| r.steps.map(|k| k as f64))
                .collect();
            (!ks.is_empty()).then(|| (b as f64, ks.iter().sum::<f64>() / ks.len() as f64))
        })
        .collect()
}

pub fn write_fit_csv(out: impl Write, fit: &FitResult) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_HEADER)?;
    let m = &fit.model;
    w.write_record([
        m.kind.to_string(),
        format_f64(m.params.epsilon),
        format_f64(m.c1),
        format_f64(m.c2),
        format_f64(fit.residual),
        format_f64(fit.critical.batch),
        opt(fit.critical.closed_form),
        opt(fit.critical_as_printed),
        opt(fit.lower_bound),
        fit.critical.at_boundary.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
