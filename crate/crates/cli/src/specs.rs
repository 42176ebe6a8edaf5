//! Little string grammars used by flags and config files.
//!
//! * batch sizes: `16`, `4,8,16`, `2^4..2^9` (powers), `10..20` (every integer)
//! * seeds: `7`, `1..5`, `1,3,9`
//! * points: `identity`, `scalar:2.5`, `diag:1,2,3`
//! * staircase period: `epoch` or a step count

use rsgd_core::experiment::Period;
use rsgd_core::rsgd::ScheduleKind;
use rsgd_core::spd::SpdPoint;

use crate::error::{CliError, CliResult};

/// Longest expansion a single range may produce.
pub const MAX_RANGE_LEN: u64 = 1 << 16;

fn bad(what: &str, s: &str, why: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("invalid {what} '{s}': {why}"))
}

fn parse_u64(what: &str, s: &str) -> CliResult<u64> {
    s.trim().parse::<u64>().map_err(|e| bad(what, s, e))
}

enum Term {
    Plain(u64),
    Power { base: u64, exp: u32 },
}

fn parse_term(what: &str, s: &str) -> CliResult<Term> {
    match s.split_once('^') {
        Some((base, exp)) => {
            let base = parse_u64(what, base)?;
            let exp = exp.trim().parse::<u32>().map_err(|e| bad(what, s, e))?;
            base.checked_pow(exp).ok_or_else(|| bad(what, s, "overflows"))?;
            Ok(Term::Power { base, exp })
        }
        None => Ok(Term::Plain(parse_u64(what, s)?)),
    }
}

fn term_value(t: &Term) -> u64 {
    match *t {
        Term::Plain(v) => v,
        Term::Power { base, exp } => base.pow(exp),
    }
}

fn expand_list(what: &str, s: &str) -> CliResult<Vec<u64>> {
    if s.trim().is_empty() {
        return Err(bad(what, s, "empty"));
    }
    let mut out = Vec::new();
    for item in s.split(',') {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse_term(what, lo)?, parse_term(what, hi)?);
                match (&lo, &hi) {
                    (Term::Power { base: b1, exp: e1 }, Term::Power { base: b2, exp: e2 }) if b1 == b2 => {
                        if e1 > e2 {
                            return Err(bad(what, item, "range is empty"));
                        }
                        out.extend((*e1..=*e2).map(|e| b1.pow(e)));
                    }
                    (Term::Plain(a), Term::Plain(b)) => {
                        if a > b {
                            return Err(bad(what, item, "range is empty"));
                        }
                        if b - a >= MAX_RANGE_LEN {
                            return Err(bad(what, item, "range is too long"));
                        }
                        out.extend(*a..=*b);
                    }
                    _ => return Err(bad(what, item, "range ends must both be plain or powers of one base")),
                }
            }
            None => out.push(term_value(&parse_term(what, item)?)),
        }
        if out.len() as u64 > MAX_RANGE_LEN {
            return Err(bad(what, s, "too many values"));
        }
    }
    let mut sorted = out.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(bad(what, s, "values repeat"));
    }
    Ok(out)
}

/// Batch-size list; every value must be positive.
pub fn parse_batches(s: &str) -> CliResult<Vec<usize>> {
    let v = expand_list("batch sizes", s)?;
    if v.contains(&0) {
        return Err(bad("batch sizes", s, "batch sizes must be positive"));
    }
    v.into_iter()
        .map(|b| usize::try_from(b).map_err(|e| bad("batch sizes", s, e)))
        .collect()
}

pub fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    expand_list("seeds", s)
}

pub fn parse_epsilons(s: &str) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| bad("thresholds", s, e)))
        .collect::<CliResult<_>>()?;
    validate_epsilons(&v)?;
    Ok(v)
}

pub fn validate_epsilons(v: &[f64]) -> CliResult<()> {
    if v.is_empty() || v.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(CliError::usage("thresholds must be positive finite numbers"));
    }
    Ok(())
}

pub fn parse_schedules(s: &str) -> CliResult<Vec<ScheduleKind>> {
    let v: Vec<ScheduleKind> = s.split(',').map(parse_schedule).collect::<CliResult<_>>()?;
    let mut sorted = v.clone();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(bad("schedules", s, "schedules repeat"));
    }
    Ok(v)
}

pub fn parse_schedule(s: &str) -> CliResult<ScheduleKind> {
    s.parse::<ScheduleKind>().map_err(|e| CliError::usage(e.to_string()))
}

pub fn parse_period(s: &str) -> CliResult<Period> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("epoch") {
        return Ok(Period::Epoch);
    }
    match t.parse::<usize>() {
        Ok(0) => Err(bad("period", s, "must be at least 1")),
        Ok(v) => Ok(Period::Steps(v)),
        Err(e) => Err(bad("period", s, e)),
    }
}

/// An SPD point of dimension `d` from a short description.
pub fn parse_point(s: &str, d: usize) -> CliResult<SpdPoint> {
    let t = s.trim();
    let values = |list: &str| -> CliResult<Vec<f64>> {
        list.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad("point", s, e)))
            .collect()
    };
    let diag = if t.eq_ignore_ascii_case("identity") {
        vec![1.0; d]
    } else if let Some(c) = t.strip_prefix("scalar:") {
        let c: f64 = c.trim().parse().map_err(|e| bad("point", s, e))?;
        vec![c; d]
    } else if let Some(list) = t.strip_prefix("diag:") {
        let v = values(list)?;
        if v.len() != d {
            return Err(bad("point", s, format!("needs {d} diagonal entries, got {}", v.len())));
        }
        v
    } else {
        return Err(bad("point", s, "expected identity, scalar:<c> or diag:<a,b,...>"));
    };
    if diag.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(bad("point", s, "diagonal entries must be positive and finite"));
    }
    SpdPoint::from_diagonal(&diag).map_err(|e| bad("point", s, e))
}

/// `lo..hi` with positive reals.
pub fn parse_real_range(s: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| bad("range", s, "expected lo..hi"))?;
    let lo = parse_term_real(s, lo)?;
    let hi = parse_term_real(s, hi)?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad("range", s, "need 0 < lo < hi"));
    }
    Ok((lo, hi))
}

fn parse_term_real(whole: &str, s: &str) -> CliResult<f64> {
    match s.split_once('^') {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|e| bad("range", whole, e))?;
            let e: f64 = e.trim().parse().map_err(|e| bad("range", whole, e))?;
            Ok(b.powf(e))
        }
        None => s.trim().parse().map_err(|e| bad("range", whole, e)),
    }
}
