//! Batch-size sweeps, the `K(b)` models and critical batch sizes.
//!
//! A sweep runs RSGD once per `(schedule, batch size, seed)` and reads off the
//! first step `K` with `f(x_K)` below each threshold. From `(b, mean K)` pairs
//! the module fits the closed-form step-count models
//!
//! * constant: `K = C₂ b / (ε b − (σ² + G² b) α C₁)`
//! * inverse-sqrt: `K = ((2 C₁ σ² + (2 C₁ G² + C₂) b) / (ε b))²`
//! * staircase: the constant model times `α⁻¹ γ⁻ⁿ`
//!
//! and minimizes the SFO complexity `K(b)·b` over `b`.

use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;

use crate::centroid::{loss, Dataset};
use crate::error::{Error, Result};
use crate::rsgd::{run, RunConfig, RunRecord, Sampling, ScheduleKind, StepSchedule};
use crate::spd::SpdPoint;

/// How often the staircase schedule decays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Period {
    Steps(usize),
    /// `⌈N / b⌉` steps, one pass over the data.
    Epoch,
}

/// A step-size rule whose staircase period may depend on the batch size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleSpec {
    Constant { alpha: f64 },
    InverseSqrt,
    Staircase { alpha: f64, gamma: f64, decays: u32, period: Period },
}

impl ScheduleSpec {
    pub fn kind(&self) -> ScheduleKind {
        match self {
            ScheduleSpec::Constant { .. } => ScheduleKind::Constant,
            ScheduleSpec::InverseSqrt => ScheduleKind::InverseSqrt,
            ScheduleSpec::Staircase { .. } => ScheduleKind::Staircase,
        }
    }

    /// Concrete schedule for a dataset of `n` points and batch size `b`.
    pub fn resolve(&self, n: usize, b: usize) -> Result<StepSchedule> {
        match *self {
            ScheduleSpec::Constant { alpha } => StepSchedule::constant(alpha),
            ScheduleSpec::InverseSqrt => Ok(StepSchedule::InverseSqrt),
            ScheduleSpec::Staircase { alpha, gamma, decays, period } => {
                let t = match period {
                    Period::Steps(t) => t,
                    Period::Epoch => n.div_ceil(b.max(1)),
                };
                StepSchedule::staircase(alpha, gamma, t, decays)
            }
        }
    }
}

impl From<StepSchedule> for ScheduleSpec {
    fn from(s: StepSchedule) -> Self {
        match s {
            StepSchedule::Constant { alpha } => ScheduleSpec::Constant { alpha },
            StepSchedule::InverseSqrt => ScheduleSpec::InverseSqrt,
            StepSchedule::Staircase { alpha, gamma, period, decays } => {
                ScheduleSpec::Staircase { alpha, gamma, decays, period: Period::Steps(period) }
            }
        }
    }
}

/// How an ε is turned into a loss threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdMode {
    /// `f(x_k) < ε`.
    Absolute,
    /// `f(x_k) < f* + ε (f(x₀) − f*)`, i.e. ε is a fraction of the initial
    /// excess loss over the optimal value `f*`.
    RelativeExcess { f_star: f64 },
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub data: Arc<Dataset>,
    pub x0: SpdPoint,
    pub schedules: Vec<ScheduleSpec>,
    pub epsilons: Vec<f64>,
    pub thresholds: ThresholdMode,
    /// Distinct positive batch sizes; cells are reported in ascending order.
    pub batch_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub max_steps: usize,
    pub sampling: Sampling,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(data: Arc<Dataset>, x0: SpdPoint) -> Self {
        SweepConfig {
            data,
            x0,
            schedules: vec![ScheduleSpec::Constant { alpha: 5e-4 }],
            epsilons: vec![0.5, 0.25],
            thresholds: ThresholdMode::Absolute,
            batch_sizes: (4..=9).map(|p| 1usize << p).collect(),
            seeds: (1..=5).collect(),
            max_steps: 10_000,
            sampling: Sampling::WithReplacement,
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.schedules.is_empty() || self.epsilons.is_empty() || self.seeds.is_empty() {
            return Err(Error::input("sweep needs at least one schedule, threshold and seed"));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::input("batch sizes must be positive and non-empty"));
        }
        let mut b = self.batch_sizes.clone();
        b.sort_unstable();
        if b.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("batch sizes must be distinct"));
        }
        let mut e = self.epsilons.clone();
        if e.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::input("thresholds must be positive and finite"));
        }
        e.sort_by(f64::total_cmp);
        if e.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("thresholds must be distinct"));
        }
        if let ThresholdMode::RelativeExcess { f_star } = self.thresholds {
            if !f_star.is_finite() {
                return Err(Error::input("optimal loss must be finite"));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::input("thread count must be at least 1"));
        }
        if self.x0.dim() != self.data.dim() {
            return Err(Error::input("initial point dimension differs from dataset"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub schedule: ScheduleKind,
    pub epsilon: f64,
    pub batch: usize,
    pub seed: u64,
    /// Loss level the run had to get below.
    pub threshold: f64,
    /// First step with loss below the threshold; `None` if censored or failed.
    pub steps: Option<usize>,
    /// Loss at `steps`, or at the last step reached.
    pub final_loss: f64,
    /// Wall time of the run that produced this cell (shared across ε).
    pub wall_time: Duration,
    pub error: Option<String>,
}

impl SweepCell {
    pub fn censored(&self) -> bool {
        self.steps.is_none() && self.error.is_none()
    }

    /// SFO complexity `K·b`.
    pub fn sfo(&self) -> Option<f64> {
        self.steps.map(|k| (k * self.batch) as f64)
    }
}

impl PartialEq for SweepCell {
    fn eq(&self, other: &Self) -> bool {
        self.schedule == other.schedule
            && self.epsilon.to_bits() == other.epsilon.to_bits()
            && self.batch == other.batch
            && self.seed == other.seed
            && self.threshold.to_bits() == other.threshold.to_bits()
            && self.steps == other.steps
            && self.final_loss.to_bits() == other.final_loss.to_bits()
            && self.error == other.error
    }
}

/// Seed aggregate for one `(schedule, ε, b)`; censored and failed cells excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub schedule: ScheduleKind,
    pub epsilon: f64,
    pub batch: usize,
    pub mean_steps: Option<f64>,
    pub median_steps: Option<f64>,
    pub reached: usize,
    pub censored: usize,
    pub failed: usize,
}

/// Wall times are carried in the cells but ignored by `==`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    /// Grid order: schedule, ε (as configured), ascending b, seed.
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<Aggregate>,
    pub initial_loss: f64,
}

impl SweepRecord {
    pub fn aggregate(&self, schedule: ScheduleKind, epsilon: f64) -> Vec<&Aggregate> {
        self.aggregates
            .iter()
            .filter(|a| a.schedule == schedule && a.epsilon == epsilon)
            .collect()
    }

    /// `(b, mean K)` for every batch size with at least one uncensored seed.
    pub fn mean_curve(&self, schedule: ScheduleKind, epsilon: f64) -> Vec<(f64, f64)> {
        self.aggregate(schedule, epsilon)
            .into_iter()
            .filter_map(|a| a.mean_steps.map(|k| (a.batch as f64, k)))
            .collect()
    }
}

fn threshold_for(mode: ThresholdMode, epsilon: f64, initial_loss: f64) -> f64 {
    match mode {
        ThresholdMode::Absolute => epsilon,
        ThresholdMode::RelativeExcess { f_star } => f_star + epsilon * (initial_loss - f_star),
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Run every cell of the grid. Results do not depend on the thread count or on
/// the order of `batch_sizes`. A failing run marks its cells and the sweep
/// carries on.
pub fn sweep(config: &SweepConfig) -> Result<SweepRecord> {
    config.validate()?;
    let data = config.data.as_ref();
    let initial_loss = loss(&config.x0, data)?;
    let thresholds: Vec<f64> =
        config.epsilons.iter().map(|&e| threshold_for(config.thresholds, e, initial_loss)).collect();
    // RunConfig wants strictly descending thresholds: sort and remember where each came from.
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&i, &j| thresholds[j].total_cmp(&thresholds[i]));
    if order.windows(2).any(|w| thresholds[w[0]] == thresholds[w[1]]) {
        return Err(Error::input("two thresholds map to the same loss level"));
    }
    let descending: Vec<f64> = order.iter().map(|&i| thresholds[i]).collect();

    let mut batches = config.batch_sizes.clone();
    batches.sort_unstable();

    let jobs: Vec<(usize, usize, u64)> = (0..config.schedules.len())
        .flat_map(|s| batches.iter().flat_map(move |&b| config.seeds.iter().map(move |&seed| (s, b, seed))))
        .collect();

    let run_job = |&(s, b, seed): &(usize, usize, u64)| -> Result<RunRecord> {
        let schedule = config.schedules[s].resolve(data.len(), b)?;
        let mut rc = RunConfig::new(data, config.x0.clone(), schedule, b, seed);
        rc.max_steps = config.max_steps;
        rc.epsilons = descending.clone();
        rc.eval_stride = config.max_steps + 1;
        rc.stop_when_reached = true;
        rc.sampling = config.sampling;
        run(&rc)
    };

    let results: Vec<Result<RunRecord>> = match config.threads {
        Some(1) => jobs.iter().map(run_job).collect(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::input(format!("cannot start thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.par_iter().map(run_job).collect(),
    };

    let mut cells = Vec::with_capacity(jobs.len() * config.epsilons.len());
    for (s, spec) in config.schedules.iter().enumerate() {
        for (ei, &epsilon) in config.epsilons.iter().enumerate() {
            for (job, result) in jobs.iter().zip(&results).filter(|(j, _)| j.0 == s) {
                let (_, batch, seed) = *job;
                let threshold = thresholds[ei];
                let cell = match result {
                    Ok(rec) => {
                        let steps = rec.steps_to(threshold);
                        let final_loss = match steps {
                            Some(k) => rec.steps[k].loss,
                            None => rec.final_loss(),
                        };
                        SweepCell {
                            schedule: spec.kind(),
                            epsilon,
                            batch,
                            seed,
                            threshold,
                            steps,
                            final_loss,
                            wall_time: rec.wall_time,
                            error: None,
                        }
                    }
                    Err(e) => SweepCell {
                        schedule: spec.kind(),
                        epsilon,
                        batch,
                        seed,
                        threshold,
                        steps: None,
                        final_loss: f64::NAN,
                        wall_time: Duration::ZERO,
                        error: Some(e.to_string()),
                    },
                };
                cells.push(cell);
            }
        }
    }

    let per_group = config.seeds.len();
    let aggregates = cells
        .chunks(per_group)
        .map(|group| {
            let mut ks: Vec<f64> = group.iter().filter_map(|c| c.steps.map(|k| k as f64)).collect();
            ks.sort_by(f64::total_cmp);
            let first = &group[0];
            Aggregate {
                schedule: first.schedule,
                epsilon: first.epsilon,
                batch: first.batch,
                mean_steps: (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64),
                median_steps: (!ks.is_empty()).then(|| median(&ks)),
                reached: ks.len(),
                censored: group.iter().filter(|c| c.censored()).count(),
                failed: group.iter().filter(|c| c.error.is_some()).count(),
            }
        })
        .collect();

    Ok(SweepRecord { cells, aggregates, initial_loss })
}

/// Pass/fail limits for [`check_monotone_convex`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeTolerance {
    /// Monotone if Spearman(b, K) is at most this (or K is non-increasing).
    pub max_spearman: f64,
    /// Convex if the smallest second difference is at least
    /// `−convexity_slack × median`.
    pub convexity_slack: f64,
}

impl Default for ShapeTolerance {
    fn default() -> Self {
        ShapeTolerance { max_spearman: -0.9, convexity_slack: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeStats {
    /// `None` when either coordinate has no rank variance.
    pub spearman: Option<f64>,
    pub min_second_difference: f64,
    pub median: f64,
    pub non_increasing: bool,
    /// Index of the smallest value.
    pub argmin: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeReport {
    pub k: ShapeStats,
    pub kb: ShapeStats,
    pub k_monotone: bool,
    pub k_convex: bool,
    pub kb_convex: bool,
    /// `Kb` is smallest strictly inside the grid.
    pub kb_interior_minimum: bool,
}

impl ShapeReport {
    pub fn passed(&self) -> bool {
        self.k_monotone && self.kb_convex
    }
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Second differences on the grid `x = ln b`, scaled to the units of `y`:
/// `[(y₊ − y)/h₊ − (y − y₋)/h₋] · (h₋ + h₊)/2`.
pub fn log_grid_second_differences(b: &[f64], y: &[f64]) -> Vec<f64> {
    (1..b.len().saturating_sub(1))
        .map(|i| {
            let (h1, h2) = ((b[i] / b[i - 1]).ln(), (b[i + 1] / b[i]).ln());
            ((y[i + 1] - y[i]) / h2 - (y[i] - y[i - 1]) / h1) * (h1 + h2) / 2.0
        })
        .collect()
}

fn shape_stats(b: &[f64], y: &[f64]) -> ShapeStats {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let argmin = (0..y.len()).fold(0, |m, i| if y[i] < y[m] { i } else { m });
    ShapeStats {
        spearman: spearman(b, y),
        min_second_difference: log_grid_second_differences(b, y).into_iter().fold(f64::INFINITY, f64::min),
        median: median(&sorted),
        non_increasing: y.windows(2).all(|w| w[1] <= w[0]),
        argmin,
    }
}

/// Monotonicity and convexity diagnostics for `K(b)` and `K(b)·b`.
pub fn check_monotone_convex(points: &[(f64, f64)], tol: ShapeTolerance) -> Result<ShapeReport> {
    if points.len() < 3 {
        return Err(Error::input(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(b, k)| !(b > 0.0) || !b.is_finite() || !k.is_finite()) {
        return Err(Error::input("points must have positive b and finite K"));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::input("batch sizes must be strictly ascending"));
    }
    let b: Vec<f64> = points.iter().map(|p| p.0).collect();
    let k: Vec<f64> = points.iter().map(|p| p.1).collect();
    let kb: Vec<f64> = points.iter().map(|p| p.0 * p.1).collect();
    let (ks, kbs) = (shape_stats(&b, &k), shape_stats(&b, &kb));
    let convex = |s: &ShapeStats| s.min_second_difference >= -tol.convexity_slack * s.median.abs();
    Ok(ShapeReport {
        k_monotone: ks.non_increasing || ks.spearman.is_some_and(|r| r <= tol.max_spearman),
        k_convex: convex(&ks),
        kb_convex: convex(&kbs),
        kb_interior_minimum: kbs.argmin > 0 && kbs.argmin + 1 < b.len(),
        k: ks,
        kb: kbs,
    })
}

/// Problem constants entering the step-count models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    pub sigma2: f64,
    pub g: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub decays: u32,
    pub epsilon: f64,
}

impl FitParams {
    fn validate(&self, kind: ScheduleKind) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.sigma2) || !ok(self.g) || !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::input("σ², G must be finite and >= 0, ε finite and > 0"));
        }
        if kind != ScheduleKind::InverseSqrt && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::input("α must be positive"));
        }
        if kind == ScheduleKind::Staircase && !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::input("γ must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `α⁻¹ γ⁻ⁿ`.
    pub fn staircase_factor(&self) -> f64 {
        1.0 / (self.alpha * self.gamma.powi(self.decays as i32))
    }
}

/// A fitted step-count model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepModel {
    pub kind: ScheduleKind,
    pub c1: f64,
    pub c2: f64,
    pub params: FitParams,
}

impl StepModel {
    /// `εb − (σ² + G²b)αC₁` for the constant and staircase models.
    pub fn denominator(&self, b: f64) -> f64 {
        let p = &self.params;
        p.epsilon * b - (p.sigma2 + p.g * p.g * b) * p.alpha * self.c1
    }

    /// Predicted `K(b)`, `None` outside the model's domain.
    pub fn steps(&self, b: f64) -> Option<f64> {
        let p = &self.params;
        let k = match self.kind {
            ScheduleKind::Constant | ScheduleKind::Staircase => {
                let den = self.denominator(b);
                if !(den > 0.0) {
                    return None;
                }
                let k = self.c2 * b / den;
                if self.kind == ScheduleKind::Staircase {
                    k * p.staircase_factor()
                } else {
                    k
                }
            }
            ScheduleKind::InverseSqrt => {
                let num = 2.0 * self.c1 * p.sigma2 + (2.0 * self.c1 * p.g * p.g + self.c2) * b;
                (num / (p.epsilon * b)).powi(2)
            }
        };
        (k.is_finite() && k > 0.0).then_some(k)
    }

    /// Batch sizes below this make the constant and staircase models invalid:
    /// `σ²αC₁ / (ε − G²αC₁)`. `None` when no batch size is valid.
    pub fn lower_bound(&self) -> Option<f64> {
        let p = &self.params;
        match self.kind {
            ScheduleKind::InverseSqrt => Some(0.0),
            _ => {
                let slope = p.epsilon - p.g * p.g * p.alpha * self.c1;
                (slope > 0.0).then(|| p.sigma2 * p.alpha * self.c1 / slope)
            }
        }
    }

    /// Stationary point of `K(b)·b` from setting its derivative to zero:
    /// `2C₁σ²α/(ε − G²αC₁)` or `2C₁σ²/(2C₁G² + C₂)`.
    pub fn critical_batch_closed_form(&self) -> Option<f64> {
        let p = &self.params;
        let b = match self.kind {
            ScheduleKind::InverseSqrt => {
                2.0 * self.c1 * p.sigma2 / (2.0 * self.c1 * p.g * p.g + self.c2)
            }
            _ => 2.0 * self.lower_bound()?,
        };
        (b.is_finite() && b > 0.0).then_some(b)
    }

    /// The critical batch sizes as printed in the published statement:
    /// `2C₂σ²α/(ε − G²αC₁)` and `exp{((2C₁G² + C₂)/(2C₁σ²))²}`. Reported for
    /// comparison only; they do not minimize `K(b)·b`.
    pub fn critical_batch_as_printed(&self) -> Option<f64> {
        let p = &self.params;
        let b = match self.kind {
            ScheduleKind::InverseSqrt => {
                ((2.0 * self.c1 * p.g * p.g + self.c2) / (2.0 * self.c1 * p.sigma2)).powi(2).exp()
            }
            _ => {
                let slope = p.epsilon - p.g * p.g * p.alpha * self.c1;
                2.0 * self.c2 * p.sigma2 * p.alpha / slope
            }
        };
        (b.is_finite() && b > 0.0).then_some(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalBatch {
    /// Numeric minimizer of `K(b)·b` on the searched range.
    pub batch: f64,
    pub sfo: f64,
    /// The minimizer sits on an end of the range.
    pub at_boundary: bool,
    pub closed_form: Option<f64>,
    /// Relative gap between `batch` and `closed_form`, when both are defined
    /// and the closed form lies inside the range.
    pub closed_form_gap: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub model: StepModel,
    /// `‖log K_model − log K_obs‖₂`.
    pub residual: f64,
    /// Critical batch on the range of observed batch sizes.
    pub critical: CriticalBatch,
    pub critical_as_printed: Option<f64>,
    pub lower_bound: Option<f64>,
}

impl FitResult {
    pub fn c1(&self) -> f64 {
        self.model.c1
    }

    pub fn c2(&self) -> f64 {
        self.model.c2
    }
}

fn golden_section(lo: f64, hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    // The end points never get evaluated by the interior probes.
    [(f(lo), lo), (f(m), m), (f(hi), hi)]
        .into_iter()
        .fold((f64::INFINITY, m), |best, (v, x)| if v < best.0 { (v, x) } else { best })
        .1
}

/// Log-space residuals and Jacobian in `(ln C₁, ln C₂)`, or `None` when the
/// parameters leave the model's domain at some observed `b`.
fn residuals(model: &StepModel, points: &[(f64, f64)]) -> Option<(Vec<f64>, Vec<[f64; 2]>)> {
    let p = &model.params;
    let mut r = Vec::with_capacity(points.len());
    let mut jac = Vec::with_capacity(points.len());
    for &(b, k_obs) in points {
        let k = model.steps(b)?;
        r.push(k.ln() - k_obs.ln());
        jac.push(match model.kind {
            ScheduleKind::InverseSqrt => {
                let num = 2.0 * model.c1 * p.sigma2 + (2.0 * model.c1 * p.g * p.g + model.c2) * b;
                let d1 = 2.0 * model.c1 * (p.sigma2 + p.g * p.g * b);
                [2.0 * d1 / num, 2.0 * model.c2 * b / num]
            }
            _ => [(p.sigma2 + p.g * p.g * b) * p.alpha * model.c1 / model.denominator(b), 1.0],
        });
    }
    Some((r, jac))
}

fn cost(model: &StepModel, points: &[(f64, f64)]) -> Option<f64> {
    residuals(model, points).map(|(r, _)| r.iter().map(|v| v * v).sum())
}

/// Levenberg–Marquardt in `(ln C₁, ln C₂)`.
fn polish(mut model: StepModel, points: &[(f64, f64)]) -> Result<StepModel> {
    let mut current = cost(&model, points).ok_or(Error::Numerical { what: "model fit", residual: f64::NAN })?;
    let mut lambda = 1e-6;
    let mut grad_norm = f64::INFINITY;
    for _ in 0..500 {
        let (r, jac) = residuals(&model, points).expect("current point is feasible");
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (ri, j) in r.iter().zip(&jac) {
            a11 += j[0] * j[0];
            a12 += j[0] * j[1];
            a22 += j[1] * j[1];
            g1 += j[0] * ri;
            g2 += j[1] * ri;
        }
        grad_norm = g1.hypot(g2);
        if grad_norm < 1e-15 || current < 1e-28 {
            return Ok(model);
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (d11, d22) = (a11 * (1.0 + lambda) + 1e-300, a22 * (1.0 + lambda) + 1e-300);
            let det = d11 * d22 - a12 * a12;
            let s1 = -(d22 * g1 - a12 * g2) / det;
            let s2 = -(d11 * g2 - a12 * g1) / det;
            let trial = StepModel { c1: model.c1 * s1.exp(), c2: model.c2 * s2.exp(), ..model };
            match cost(&trial, points) {
                Some(c) if c < current => {
                    let step = s1.hypot(s2);
                    let rel_drop = (current - c) / current.max(1e-300);
                    model = trial;
                    current = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = true;
                    if step < 1e-14 || rel_drop < 1e-15 {
                        return Ok(model);
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            // No descent direction left: a minimum to working precision.
            return Ok(model);
        }
    }
    Err(Error::Numerical { what: "model fit", residual: grad_norm })
}

/// Profile over `C₁` with the optimal `C₂` in closed form, for the constant
/// and staircase models.
fn initial_constant(kind: ScheduleKind, points: &[(f64, f64)], params: FitParams) -> Result<StepModel> {
    let p = params;
    let c1_max = points
        .iter()
        .map(|&(b, _)| p.epsilon * b / ((p.sigma2 + p.g * p.g * b) * p.alpha))
        .fold(f64::INFINITY, f64::min);
    if !c1_max.is_finite() {
        return Err(Error::Estimation("C₁ is not identifiable when σ² = G = 0".into()));
    }
    let scale = if kind == ScheduleKind::Staircase { p.staircase_factor() } else { 1.0 };
    // With C₁ fixed, ln K = ln C₂ + known terms, so ln C₂ is a mean offset.
    let profile = |u: f64| -> (f64, f64) {
        let c1 = c1_max / (1.0 + (-u).exp());
        let offs: Vec<f64> = points
            .iter()
            .map(|&(b, k)| {
                let den = p.epsilon * b - (p.sigma2 + p.g * p.g * b) * p.alpha * c1;
                k.ln() - (scale * b / den).ln()
            })
            .collect();
        let ln_c2 = offs.iter().sum::<f64>() / offs.len() as f64;
        let ss = offs.iter().map(|o| (o - ln_c2).powi(2)).sum::<f64>();
        (if ss.is_finite() { ss } else { f64::INFINITY }, ln_c2)
    };
    let (lo, hi, step) = (-40.0, 30.0, 0.05);
    let grid: Vec<f64> = (0..=((hi - lo) / step) as usize).map(|i| lo + step * i as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|&a, &b| profile(a).0.total_cmp(&profile(b).0))
        .expect("grid is non-empty");
    let u = golden_section((best - step).max(lo), (best + step).min(hi), 1e-13, |u| profile(u).0);
    // At the lower end the data carry no information about C₁ (K does not
    // depend on b) and the C₁ → 0 limit is a valid fit. At the upper end the
    // model needs an infinite K at the smallest batch size.
    if u >= hi - step {
        return Err(Error::Numerical { what: "model fit (C₁ at its upper limit)", residual: profile(u).0.sqrt() });
    }
    let (_, ln_c2) = profile(u);
    Ok(StepModel { kind, c1: c1_max / (1.0 + (-u).exp()), c2: ln_c2.exp(), params })
}

/// Weighted linear least squares on `√K·εb = C₁(2σ² + 2G²b) + C₂b`.
fn initial_inverse_sqrt(points: &[(f64, f64)], params: FitParams) -> Result<StepModel> {
    let p = params;
    let (mut a11, mut a12, mut a22, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(b, k) in points {
        let y = k.sqrt() * p.epsilon * b;
        let w = 1.0 / (y * y);
        let (x1, x2) = (2.0 * (p.sigma2 + p.g * p.g * b), b);
        a11 += w * x1 * x1;
        a12 += w * x1 * x2;
        a22 += w * x2 * x2;
        y1 += w * x1 * y;
        y2 += w * x2 * y;
    }
    let det = a11 * a22 - a12 * a12;
    let mean_y = points.iter().map(|&(b, k)| k.sqrt() * p.epsilon * b).sum::<f64>() / points.len() as f64;
    let floor = 1e-9 * mean_y / points.iter().map(|p| p.0).fold(0.0, f64::max);
    let (c1, c2) = if det.abs() > 1e-12 * a11 * a22 {
        ((a22 * y1 - a12 * y2) / det, (a11 * y2 - a12 * y1) / det)
    } else {
        (0.0, 0.0)
    };
    if !(c1 > 0.0) && p.sigma2 == 0.0 && p.g == 0.0 {
        return Err(Error::Estimation("C₁ is not identifiable when σ² = G = 0".into()));
    }
    let c1 = if c1 > 0.0 { c1 } else { floor.max(f64::MIN_POSITIVE) };
    let c2 = if c2 > 0.0 { c2 } else { floor.max(f64::MIN_POSITIVE) };
    Ok(StepModel { kind: ScheduleKind::InverseSqrt, c1, c2, params })
}

/// Least-squares fit of `(C₁, C₂)` in log-K space.
pub fn fit_model(kind: ScheduleKind, points: &[(f64, f64)], params: FitParams) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::input(format!("need at least 2 points, got {}", points.len())));
    }
    if points.iter().any(|&(b, k)| !(b > 0.0 && k > 0.0) || !b.is_finite() || !k.is_finite()) {
        return Err(Error::input("points need positive finite b and K"));
    }
    params.validate(kind)?;
    let start = match kind {
        ScheduleKind::InverseSqrt => initial_inverse_sqrt(points, params)?,
        _ => initial_constant(kind, points, params)?,
    };
    let model = polish(start, points)?;
    for &(b, _) in points {
        if model.steps(b).is_none() {
            return Err(Error::FitDomain { batch: b, denominator: model.denominator(b) });
        }
    }
    let residual = cost(&model, points).expect("feasible").sqrt();
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let critical = critical_batch(&model, (lo, hi))?;
    Ok(FitResult {
        model,
        residual,
        critical,
        critical_as_printed: model.critical_batch_as_printed(),
        lower_bound: model.lower_bound(),
    })
}

/// Minimize `b ↦ K(b)·b` over `range` by golden-section search in `ln b`.
pub fn critical_batch(model: &StepModel, range: (f64, f64)) -> Result<CriticalBatch> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::input(format!("invalid batch range ({lo}, {hi})")));
    }
    let b0 = model.lower_bound().ok_or(Error::FitDomain { batch: hi, denominator: model.denominator(hi) })?;
    if hi <= b0 {
        return Err(Error::FitDomain { batch: hi, denominator: model.denominator(hi) });
    }
    // Kb blows up at b0, so a clipped lower end is never the minimizer.
    let lo_eff = if lo > b0 { lo } else { b0 * (1.0 + 1e-9) + f64::MIN_POSITIVE };
    let log_sfo = |x: f64| {
        let b = x.exp();
        model.steps(b).map_or(f64::INFINITY, |k| (k * b).ln())
    };
    let (xl, xh) = (lo_eff.ln(), hi.ln());
    let x = golden_section(xl, xh, 1e-12 * (1.0 + xh.abs()), log_sfo);
    let edge = 1e-7 * (xh - xl).max(1e-300);
    let (batch, at_boundary) = if x - xl <= edge {
        (lo_eff, lo > b0)
    } else if xh - x <= edge {
        (hi, true)
    } else {
        (x.exp(), false)
    };
    let closed_form = model.critical_batch_closed_form();
    let closed_form_gap = closed_form
        .filter(|&c| c >= lo_eff && c <= hi)
        .map(|c| (batch - c).abs() / c);
    Ok(CriticalBatch {
        batch,
        sfo: model.steps(batch).map_or(f64::INFINITY, |k| k * batch),
        at_boundary,
        closed_form,
        closed_form_gap,
    })
}
