//! Mini-batch Riemannian SGD: `x_{k+1} = Exp_{x_k}(−α_k · grad f_{B_k}(x_k))`.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::centroid::{
    batch_gradient, evaluate, loss, sample_batch, sample_batch_without_replacement, Batch, Dataset,
};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::spd::{distance, exp_map, inner, log_map, SpdPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleKind {
    Constant,
    InverseSqrt,
    Staircase,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::InverseSqrt => "inverse-sqrt",
            ScheduleKind::Staircase => "staircase",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(ScheduleKind::Constant),
            "inverse-sqrt" | "inverse_sqrt" | "invsqrt" | "diminishing1" => Ok(ScheduleKind::InverseSqrt),
            "staircase" | "step-decay" | "diminishing2" => Ok(ScheduleKind::Staircase),
            other => Err(Error::input(format!("unknown schedule '{other}'"))),
        }
    }
}

/// Step-size rule `k ↦ α_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    /// `α_k = α`.
    Constant { alpha: f64 },
    /// `α_k = 1/√(k+1)`.
    InverseSqrt,
    /// `α_k = α γ^{p_k}` with `p_k = min(⌊k/T⌋, n)`: the step is multiplied by
    /// `γ` every `period` steps, at most `decays` times.
    Staircase { alpha: f64, gamma: f64, period: usize, decays: u32 },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("step size must lie in (0, 1], got {alpha}")))
    }
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(StepSchedule::Constant { alpha })
    }

    pub fn staircase(alpha: f64, gamma: f64, period: usize, decays: u32) -> Result<Self> {
        check_alpha(alpha)?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::input(format!("decay factor must lie in (0, 1), got {gamma}")));
        }
        if period == 0 {
            return Err(Error::input("staircase period must be at least 1"));
        }
        Ok(StepSchedule::Staircase { alpha, gamma, period, decays })
    }

    pub fn kind(&self) -> ScheduleKind {
        match self {
            StepSchedule::Constant { .. } => ScheduleKind::Constant,
            StepSchedule::InverseSqrt => ScheduleKind::InverseSqrt,
            StepSchedule::Staircase { .. } => ScheduleKind::Staircase,
        }
    }

    pub fn step_size(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::InverseSqrt => 1.0 / ((k + 1) as f64).sqrt(),
            StepSchedule::Staircase { alpha, gamma, period, decays } => {
                let p = (k / period).min(decays as usize);
                alpha * gamma.powi(p as i32)
            }
        }
    }
}

pub fn step_size(schedule: &StepSchedule, k: usize) -> f64 {
    schedule.step_size(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

/// One optimizer step along the negative batch gradient.
pub fn rsgd_step(x: &SpdPoint, data: &Dataset, batch: &Batch, alpha: f64) -> Result<SpdPoint> {
    if !(alpha > 0.0) {
        return Err(Error::input(format!("step size must be positive, got {alpha}")));
    }
    let direction = batch_gradient(x, data, batch)?.scale(-1.0);
    exp_map(x, &direction.scale(alpha))
}

#[derive(Clone, Debug)]
pub struct RunConfig<'a> {
    pub data: &'a Dataset,
    pub x0: SpdPoint,
    pub schedule: StepSchedule,
    pub batch_size: usize,
    pub seed: u64,
    pub max_steps: usize,
    /// Loss thresholds, strictly descending.
    pub epsilons: Vec<f64>,
    /// Point for `V_k` and `d(x_k, ·)`; usually the reference centroid.
    pub reference: Option<SpdPoint>,
    /// Full gradient, `V_k` and gradient variance are evaluated every
    /// `eval_stride` steps. The loss is evaluated every step.
    pub eval_stride: usize,
    /// Stop as soon as every threshold has been crossed.
    pub stop_when_reached: bool,
    pub sampling: Sampling,
}

impl<'a> RunConfig<'a> {
    pub fn new(data: &'a Dataset, x0: SpdPoint, schedule: StepSchedule, batch_size: usize, seed: u64) -> Self {
        RunConfig {
            data,
            x0,
            schedule,
            batch_size,
            seed,
            max_steps: 1000,
            epsilons: vec![0.5, 0.25],
            reference: None,
            eval_stride: 1,
            stop_when_reached: true,
            sampling: Sampling::WithReplacement,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::input("batch size must be at least 1"));
        }
        if self.sampling == Sampling::WithoutReplacement && self.batch_size > self.data.len() {
            return Err(Error::input("batch larger than dataset for sampling without replacement"));
        }
        if self.eval_stride == 0 {
            return Err(Error::input("evaluation stride must be at least 1"));
        }
        if self.x0.dim() != self.data.dim() {
            return Err(Error::input("initial point dimension differs from dataset"));
        }
        if let Some(r) = &self.reference {
            if r.dim() != self.data.dim() {
                return Err(Error::input("reference point dimension differs from dataset"));
            }
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::input("thresholds must be positive and finite"));
        }
        if self.epsilons.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::input("thresholds must be strictly descending"));
        }
        Ok(())
    }
}

/// Metrics at iterate `x_k`. `alpha` is the step size used to leave `x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: Option<f64>,
    pub alpha: f64,
    /// `⟨grad f(x_k), −Exp⁻¹_{x_k}(x_ref)⟩`.
    pub v_k: Option<f64>,
    pub dist_ref: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    /// `(ε, K)`: first `k` with `f(x_k) < ε`, `None` if never reached.
    pub steps_to_epsilon: Vec<(f64, Option<usize>)>,
    pub final_point: SpdPoint,
    pub sigma2_initial: f64,
    pub sigma2_max: f64,
    pub g_max: f64,
    /// `max_k d(x_k, x_ref)`.
    pub d_max: Option<f64>,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn steps_to(&self, epsilon: f64) -> Option<usize> {
        self.steps_to_epsilon.iter().find(|(e, _)| *e == epsilon).and_then(|(_, k)| *k)
    }

    pub fn final_loss(&self) -> f64 {
        self.steps.last().map(|s| s.loss).unwrap_or(f64::NAN)
    }
}

/// Equality of everything except wall time.
impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.steps_to_epsilon == other.steps_to_epsilon
            && self.final_point.mat() == other.final_point.mat()
            && self.sigma2_initial.to_bits() == other.sigma2_initial.to_bits()
            && self.sigma2_max.to_bits() == other.sigma2_max.to_bits()
            && self.g_max.to_bits() == other.g_max.to_bits()
            && self.d_max.map(f64::to_bits) == other.d_max.map(f64::to_bits)
    }
}

pub fn run(config: &RunConfig<'_>) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let data = config.data;
    let n = data.len();

    let mut x = config.x0.clone();
    let mut steps = Vec::new();
    let mut hits: Vec<(f64, Option<usize>)> = config.epsilons.iter().map(|&e| (e, None)).collect();
    let mut sigma2_initial = f64::NAN;
    let mut sigma2_max: f64 = 0.0;
    let mut g_max: f64 = 0.0;
    let mut d_max: Option<f64> = None;

    for k in 0..=config.max_steps {
        let fail = |source: Error, x: &SpdPoint| Error::Run {
            step: k,
            last_good: Box::new(x.clone()),
            source: Box::new(source),
        };
        let full = k % config.eval_stride == 0;
        let (f, grad_norm, v_k) = if full {
            let e = evaluate(&x, data).map_err(|e| fail(e, &x))?;
            if k == 0 {
                sigma2_initial = e.sigma2;
            }
            sigma2_max = sigma2_max.max(e.sigma2);
            g_max = g_max.max(e.gradient_norm);
            let v = match &config.reference {
                Some(r) => {
                    let to_ref = log_map(&x, r).map_err(|e| fail(e, &x))?;
                    Some(-inner(&x, &e.gradient, &to_ref).map_err(|e| fail(e, &x))?)
                }
                None => None,
            };
            (e.loss, Some(e.gradient_norm), v)
        } else {
            (loss(&x, data).map_err(|e| fail(e, &x))?, None, None)
        };
        let dist_ref = match &config.reference {
            Some(r) => {
                let d = distance(&x, r).map_err(|e| fail(e, &x))?;
                d_max = Some(d_max.map_or(d, |m| m.max(d)));
                Some(d)
            }
            None => None,
        };
        for (eps, hit) in hits.iter_mut() {
            if hit.is_none() && f < *eps {
                *hit = Some(k);
            }
        }
        let alpha = config.schedule.step_size(k);
        steps.push(StepRecord { step: k, loss: f, grad_norm, alpha, v_k, dist_ref });

        let all_hit = !hits.is_empty() && hits.iter().all(|(_, h)| h.is_some());
        if k == config.max_steps || (config.stop_when_reached && all_hit) {
            break;
        }

        let mut rng = substream(config.seed, k as u64);
        let batch = match config.sampling {
            Sampling::WithReplacement => sample_batch(&mut rng, n, config.batch_size),
            Sampling::WithoutReplacement => sample_batch_without_replacement(&mut rng, n, config.batch_size),
        }
        .map_err(|e| fail(e, &x))?;
        x = rsgd_step(&x, data, &batch, alpha).map_err(|e| fail(e, &x))?;
    }

    Ok(RunRecord {
        steps,
        steps_to_epsilon: hits,
        final_point: x,
        sigma2_initial,
        sigma2_max,
        g_max,
        d_max,
        wall_time: started.elapsed(),
    })
}

const CENTROID_MAX_ITERATIONS: usize = 1_000_000;

/// High-accuracy centroid by full-batch gradient descent with step halving.
///
/// Starts from the arithmetic mean with step 1/2 and halves the step whenever
/// a trial point fails to decrease the loss, doubling it back towards 1/2
/// after each accepted step; stops once the gradient norm is below `tol`.
pub fn reference_centroid(data: &Dataset, tol: f64) -> Result<SpdPoint> {
    if !(tol > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {tol}")));
    }
    let n = data.len() as f64;
    let mut mean = crate::symmat::SymMat::zeros(data.dim());
    for a in data.points() {
        mean.add_scaled_in_place(1.0 / n, a.mat());
    }
    let mut x = SpdPoint::new(mean)?;
    let mut current = evaluate(&x, data)?;
    let mut alpha = 0.5;
    for _ in 0..CENTROID_MAX_ITERATIONS {
        if current.gradient_norm < tol {
            return Ok(x);
        }
        let trial = exp_map(&x, &current.gradient.scale(-alpha))?;
        let next = evaluate(&trial, data)?;
        // Near the optimum the loss stops resolving progress; the gradient still does.
        let noise = 64.0 * f64::EPSILON * current.loss.abs();
        let improves = next.loss < current.loss
            || (next.loss <= current.loss + noise && next.gradient_norm < current.gradient_norm);
        if improves {
            x = trial;
            current = next;
            alpha = (2.0 * alpha).min(0.5);
        } else {
            alpha *= 0.5;
            if alpha < 1e-20 {
                break;
            }
        }
    }
    Err(Error::Convergence { iterations: CENTROID_MAX_ITERATIONS, grad_norm: current.gradient_norm })
}
