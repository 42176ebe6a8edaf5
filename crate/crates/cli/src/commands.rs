use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rsgd_core::centroid::{loss, Dataset};
use rsgd_core::dataio::{
    covariance_descriptors, default_regularization, format_f64, generate_synthetic, read_matrix_set,
    read_pgm, write_matrix_set, GridSpec,
};
use rsgd_core::experiment::{
    critical_batch, fit_model, sweep, FitParams, Period, ScheduleSpec, SweepConfig, ThresholdMode,
};
use rsgd_core::rng::{substream, AUXILIARY_STREAM_BASE};
use rsgd_core::rsgd::{reference_centroid, run, RunConfig, ScheduleKind};
use rsgd_core::spd::SpdPoint;
use rsgd_core::symmat::sym_eigenvalues;

use crate::args::{Cli, Command, DescriptorArgs, FitArgs, GenArgs, RunArgs, ScheduleArgs, SweepArgs};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::specs::{
    parse_batches, parse_epsilons, parse_period, parse_point, parse_real_range, parse_schedule,
    parse_schedules, parse_seeds, validate_epsilons,
};
use crate::tables::{mean_curve, parse_sweep_csv, write_fit_csv, write_run_csv, write_sweep_csv};

pub const DEFAULT_ALPHA: f64 = 5e-4;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_DECAYS: u32 = 10;
const CENTROID_TOLERANCE: f64 = 1e-10;

/// Where the subcommands write their human-readable output.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

/// Flag, then config value, then default.
fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> CliResult<T> {
    flag.or(config).ok_or_else(|| CliError::usage(format!("missing required --{name}")))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn load_data(path: &Path) -> CliResult<Dataset> {
    read_matrix_set(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, console: &mut Console<'_>, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => f(console.out)?,
    }
    Ok(())
}

pub fn execute(cli: Cli, console: &mut Console<'_>) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = pick(cli.seed, config.seed, 0);
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &config, seed, console),
        Command::Descriptors(a) => cmd_descriptors(&a, &config, console),
        Command::Run(a) => cmd_run(&a, &config, seed, console),
        Command::Sweep(a) => cmd_sweep(&a, &config, seed, console),
        Command::Fit(a) => cmd_fit(&a, &config, console),
    }
}

pub fn cmd_gen(a: &GenArgs, cfg: &FileConfig, seed: u64, console: &mut Console<'_>) -> CliResult<()> {
    let n = pick(a.count, cfg.count, 256);
    let d = pick(a.dim, cfg.dim, 5);
    let spread = pick(a.spread, cfg.spread, 0.5);
    if n == 0 || d == 0 {
        return Err(CliError::usage("--n and --d must be at least 1"));
    }
    let center = parse_point(&pick(a.center.clone(), cfg.center.clone(), "identity".into()), d)?;
    let out: PathBuf = required(a.out.clone(), cfg.out.clone().map(PathBuf::from), "out")?;
    let data = generate_synthetic(&mut substream(seed, AUXILIARY_STREAM_BASE), n, d, &center, spread)?;
    write_matrix_set(&out, &data)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in data.points() {
        let v = sym_eigenvalues(p.mat())?;
        hi = hi.max(v[0]);
        lo = lo.min(v[v.len() - 1]);
    }
    writeln!(
        console.out,
        "wrote {}: N={n} d={d} min_eigenvalue={} max_eigenvalue={}",
        out.display(),
        format_f64(lo),
        format_f64(hi)
    )?;
    Ok(())
}

pub fn cmd_descriptors(a: &DescriptorArgs, cfg: &FileConfig, console: &mut Console<'_>) -> CliResult<()> {
    let pgm: PathBuf = required(a.pgm.clone(), cfg.pgm.clone().map(PathBuf::from), "pgm")?;
    let out: PathBuf = required(a.out.clone(), cfg.out.clone().map(PathBuf::from), "out")?;
    let g = pick(a.grid, cfg.grid, 4);
    let image = read_pgm(&pgm).map_err(|e| CliError::runtime(format!("{}: {e}", pgm.display())))?;
    let grid = GridSpec::for_image(&image, g)?;
    let reg = match a.reg.or(cfg.reg) {
        Some(r) => r,
        None => default_regularization(&image, &grid)?,
    };
    let data = covariance_descriptors(&image, &grid, reg)?;
    write_matrix_set(&out, &data)?;
    let first = data.get(0).mat();
    let identical = data.points().iter().all(|p| p.mat() == first);
    write!(
        console.out,
        "wrote {}: cells={} ({}x{} grid of {g}x{g}) d=5 reg={}",
        out.display(),
        data.len(),
        grid.cells_across(),
        grid.cells_down(),
        format_f64(reg)
    )?;
    if identical {
        write!(console.out, " (all descriptors identical)")?;
    }
    writeln!(console.out)?;
    Ok(())
}

/// Per-subcommand context shared by `run` and `sweep`.
struct Setup {
    data: Dataset,
    x0: SpdPoint,
    epsilons: Vec<f64>,
    mode: ThresholdMode,
    reference: Option<SpdPoint>,
}

fn schedule_spec(kind: ScheduleKind, s: &ScheduleArgs, cfg: &FileConfig) -> CliResult<ScheduleSpec> {
    let alpha = pick(s.alpha, cfg.alpha, DEFAULT_ALPHA);
    let gamma = pick(s.gamma, cfg.gamma, DEFAULT_GAMMA);
    let decays = pick(s.decays, cfg.decays, DEFAULT_DECAYS);
    let period = match &s.period {
        Some(p) => parse_period(p)?,
        None => cfg.period()?.unwrap_or(Period::Epoch),
    };
    Ok(match kind {
        ScheduleKind::Constant => ScheduleSpec::Constant { alpha },
        ScheduleKind::InverseSqrt => ScheduleSpec::InverseSqrt,
        ScheduleKind::Staircase => ScheduleSpec::Staircase { alpha, gamma, decays, period },
    })
}

fn setup(data_flag: &Option<PathBuf>, s: &ScheduleArgs, cfg: &FileConfig, need_reference: bool) -> CliResult<Setup> {
    let path: PathBuf = required(data_flag.clone(), cfg.data.clone().map(PathBuf::from), "data")?;
    let epsilons = match &s.epsilons {
        Some(e) => parse_epsilons(e)?,
        None => cfg.epsilons.clone().unwrap_or_else(|| vec![0.5, 0.25]),
    };
    validate_epsilons(&epsilons)?;
    let relative = match pick(s.thresholds.clone(), cfg.thresholds.clone(), "absolute".into()).as_str() {
        "absolute" => false,
        "relative" => true,
        other => return Err(CliError::usage(format!("--thresholds must be absolute or relative, got '{other}'"))),
    };
    let init = pick(s.init.clone(), cfg.init.clone(), "identity".into());
    if let Some(a) = s.alpha.or(cfg.alpha) {
        if !(a > 0.0 && a <= 1.0) {
            return Err(CliError::usage(format!("--alpha must lie in (0, 1], got {a}")));
        }
    }
    let data = load_data(&path)?;
    let x0 = parse_point(&init, data.dim())?;
    let reference = if need_reference || relative {
        Some(reference_centroid(&data, CENTROID_TOLERANCE)?)
    } else {
        None
    };
    let mode = match (&reference, relative) {
        (Some(r), true) => ThresholdMode::RelativeExcess { f_star: loss(r, &data)? },
        _ => ThresholdMode::Absolute,
    };
    Ok(Setup { data, x0, epsilons, mode, reference })
}

pub fn cmd_run(a: &RunArgs, cfg: &FileConfig, seed: u64, console: &mut Console<'_>) -> CliResult<()> {
    let kind = match &a.schedule {
        Some(s) => parse_schedule(s)?,
        None => match cfg.schedules()? {
            Some(v) if v.len() == 1 => v[0],
            Some(_) => return Err(CliError::usage("run takes a single schedule")),
            None => ScheduleKind::Constant,
        },
    };
    let spec = schedule_spec(kind, &a.schedule_args, cfg)?;
    let batch = pick(a.batch, cfg.batch, 16);
    let steps = pick(a.steps, cfg.steps, 1000);
    let stride = a.eval_stride.unwrap_or(1);
    if batch == 0 || stride == 0 {
        return Err(CliError::usage("--batch and --eval-stride must be at least 1"));
    }
    let s = setup(&a.data, &a.schedule_args, cfg, true)?;
    let f0 = loss(&s.x0, &s.data)?;
    let labels: Vec<(f64, f64)> = s
        .epsilons
        .iter()
        .map(|&e| {
            let t = match s.mode {
                ThresholdMode::Absolute => e,
                ThresholdMode::RelativeExcess { f_star } => f_star + e * (f0 - f_star),
            };
            (e, t)
        })
        .collect();
    let mut thresholds: Vec<f64> = labels.iter().map(|l| l.1).collect();
    thresholds.sort_by(|x, y| y.total_cmp(x));
    if thresholds.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::usage("thresholds must be distinct"));
    }

    let schedule = spec.resolve(s.data.len(), batch)?;
    let mut rc = RunConfig::new(&s.data, s.x0.clone(), schedule, batch, seed);
    rc.max_steps = steps;
    rc.epsilons = thresholds;
    rc.reference = s.reference.clone();
    rc.eval_stride = stride;
    rc.stop_when_reached = a.early_stop;
    let record = run(&rc)?;
    write_output(a.out.as_deref(), console, |w| write_run_csv(w, &record, &labels))?;
    for (e, t) in &labels {
        let k = record.steps_to(*t).map_or("censored".to_string(), |k| k.to_string());
        writeln!(console.err, "{kind} b={batch} seed={seed} epsilon={e}: K={k}")?;
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, cfg: &FileConfig, seed: u64, console: &mut Console<'_>) -> CliResult<()> {
    let kinds = match &a.schedules {
        Some(s) => parse_schedules(s)?,
        None => cfg.schedules()?.unwrap_or_else(|| vec![ScheduleKind::Constant]),
    };
    let schedules: Vec<ScheduleSpec> =
        kinds.iter().map(|&k| schedule_spec(k, &a.schedule_args, cfg)).collect::<CliResult<_>>()?;
    let batches = match &a.batches {
        Some(b) => parse_batches(b)?,
        None => cfg.batches()?.unwrap_or_else(|| (4..=9).map(|p| 1usize << p).collect()),
    };
    let seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None => cfg.seeds()?.unwrap_or_else(|| (0..5).map(|i| seed.wrapping_add(i)).collect()),
    };
    let steps = pick(a.steps, cfg.steps, 10_000);
    let threads = a.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    let s = setup(&a.data, &a.schedule_args, cfg, false)?;

    let mut sc = SweepConfig::new(Arc::new(s.data), s.x0);
    sc.schedules = schedules;
    sc.epsilons = s.epsilons;
    sc.thresholds = s.mode;
    sc.batch_sizes = batches;
    sc.seeds = seeds;
    sc.max_steps = steps;
    sc.threads = threads;
    let record = sweep(&sc)?;

    for c in &record.cells {
        let k = match (&c.error, c.steps) {
            (Some(e), _) => format!("error ({e})"),
            (None, Some(k)) => k.to_string(),
            (None, None) => "censored".into(),
        };
        writeln!(console.err, "{} epsilon={} b={} seed={}: K={k}", c.schedule, c.epsilon, c.batch, c.seed)?;
    }
    write_output(a.out.as_deref(), console, |w| write_sweep_csv(w, &record, !a.no_wall_time))?;
    if record.cells.iter().all(|c| c.error.is_some()) {
        return Err(CliError::runtime("every sweep cell failed"));
    }
    Ok(())
}

pub fn cmd_fit(a: &FitArgs, cfg: &FileConfig, console: &mut Console<'_>) -> CliResult<()> {
    let path: PathBuf = required(a.sweep.clone(), cfg.data.clone().map(PathBuf::from), "sweep")?;
    let kind = match &a.schedule {
        Some(s) => parse_schedule(s)?,
        None => match cfg.schedules()? {
            Some(v) if v.len() == 1 => v[0],
            _ => return Err(CliError::usage("missing required --schedule")),
        },
    };
    let sigma2 = required(a.sigma2, cfg.sigma2, "sigma2")?;
    let g = required(a.g, cfg.g, "G")?;
    let alpha = pick(a.alpha, cfg.alpha, DEFAULT_ALPHA);
    let gamma = pick(a.gamma, cfg.gamma, DEFAULT_GAMMA);
    let decays = pick(a.decays, cfg.decays, DEFAULT_DECAYS);
    let range = match a.b_range.clone().or(cfg.b_range.clone()) {
        Some(r) => Some(parse_real_range(&r)?),
        None => None,
    };

    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_sweep_csv(&text)?;
    let of_kind: Vec<_> = rows.iter().filter(|r| r.schedule == kind).collect();
    if of_kind.is_empty() {
        return Err(CliError::usage(format!("{} holds no rows for schedule {kind}", path.display())));
    }
    let mut present: Vec<f64> = of_kind.iter().map(|r| r.epsilon).collect();
    present.sort_by(f64::total_cmp);
    present.dedup();
    let epsilon = match a.epsilon.or(cfg.epsilon) {
        Some(e) => present
            .iter()
            .copied()
            .find(|p| (p - e).abs() <= 1e-12 * e.abs())
            .ok_or_else(|| CliError::usage(format!("no rows with epsilon {e} for schedule {kind}")))?,
        None if present.len() == 1 => present[0],
        None => return Err(CliError::usage("several thresholds in the CSV; pass --epsilon")),
    };
    let selected: Vec<_> = of_kind.into_iter().filter(|r| r.epsilon == epsilon).collect();
    let points = mean_curve(&selected);
    if points.is_empty() {
        return Err(CliError::runtime("every row is censored or failed; nothing to fit"));
    }

    let params = FitParams { sigma2, g, alpha, gamma, decays, epsilon };
    let mut fit = fit_model(kind, &points, params)?;
    if let Some(r) = range {
        fit.critical = critical_batch(&fit.model, r)?;
    }

    let o = &mut *console.out;
    writeln!(o, "schedule: {kind}")?;
    writeln!(o, "epsilon: {}", format_f64(epsilon))?;
    for (b, k) in &points {
        writeln!(o, "mean K at b={b}: {}", format_f64(*k))?;
    }
    writeln!(o, "C1: {}", format_f64(fit.model.c1))?;
    writeln!(o, "C2: {}", format_f64(fit.model.c2))?;
    writeln!(o, "residual: {}", format_f64(fit.residual))?;
    writeln!(
        o,
        "critical batch (numeric): {}{}",
        format_f64(fit.critical.batch),
        if fit.critical.at_boundary { " (at range boundary)" } else { "" }
    )?;
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), format_f64);
    writeln!(o, "critical batch (closed form): {}", show(fit.critical.closed_form))?;
    writeln!(o, "critical batch (as printed in the source): {}", show(fit.critical_as_printed))?;
    writeln!(o, "lower bound of b: {}", show(fit.lower_bound))?;
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        write_fit_csv(&mut w, &fit)?;
        w.flush()?;
    }
    Ok(())
}
