//! JSON experiment manifests. Every key is optional; explicit flags win.
//!
//! ```json
//! { "data": "set.msf", "schedule": ["constant", "staircase"], "alpha": 5e-4,
//!   "gamma": 0.5, "T": "epoch", "n": 10, "batches": "2^4..2^9",
//!   "epsilons": [0.5, 0.25], "seeds": "1..5" }
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::specs::{parse_batches, parse_period, parse_seeds, validate_epsilons};
use rsgd_core::experiment::Period;
use rsgd_core::rsgd::ScheduleKind;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum IntsOrSpec {
    Spec(String),
    List(Vec<u64>),
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PeriodValue {
    Steps(u64),
    Word(String),
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<String>,
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub schedule: Option<OneOrMany>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(rename = "T")]
    pub period: Option<PeriodValue>,
    #[serde(rename = "n")]
    pub decays: Option<u32>,
    pub batch: Option<usize>,
    pub batches: Option<IntsOrSpec>,
    pub epsilons: Option<Vec<f64>>,
    pub seeds: Option<IntsOrSpec>,
    pub steps: Option<usize>,
    pub threads: Option<usize>,
    pub init: Option<String>,
    pub thresholds: Option<String>,
    pub sigma2: Option<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    pub epsilon: Option<f64>,
    #[serde(rename = "N")]
    pub count: Option<usize>,
    #[serde(rename = "d")]
    pub dim: Option<usize>,
    pub spread: Option<f64>,
    pub center: Option<String>,
    pub pgm: Option<String>,
    pub grid: Option<usize>,
    pub reg: Option<f64>,
    pub b_range: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: FileConfig =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolve every grammar-bearing field once so errors surface before work starts.
    fn validate(&self) -> CliResult<()> {
        self.schedules()?;
        self.period()?;
        self.batches()?;
        self.seeds()?;
        if let Some(e) = &self.epsilons {
            validate_epsilons(e)?;
        }
        Ok(())
    }

    pub fn schedules(&self) -> CliResult<Option<Vec<ScheduleKind>>> {
        let names: Vec<String> = match &self.schedule {
            None => return Ok(None),
            Some(OneOrMany::One(s)) => vec![s.clone()],
            Some(OneOrMany::Many(v)) => v.clone(),
        };
        crate::specs::parse_schedules(&names.join(",")).map(Some)
    }

    pub fn period(&self) -> CliResult<Option<Period>> {
        match &self.period {
            None => Ok(None),
            Some(PeriodValue::Steps(0)) => Err(CliError::usage("config: T must be at least 1")),
            Some(PeriodValue::Steps(t)) => Ok(Some(Period::Steps(*t as usize))),
            Some(PeriodValue::Word(w)) => parse_period(w).map(Some),
        }
    }

    pub fn batches(&self) -> CliResult<Option<Vec<usize>>> {
        match &self.batches {
            None => Ok(None),
            Some(IntsOrSpec::Spec(s)) => parse_batches(s).map(Some),
            Some(IntsOrSpec::List(v)) => {
                let s: Vec<String> = v.iter().map(u64::to_string).collect();
                parse_batches(&s.join(",")).map(Some)
            }
        }
    }

    pub fn seeds(&self) -> CliResult<Option<Vec<u64>>> {
        match &self.seeds {
            None => Ok(None),
            Some(IntsOrSpec::Spec(s)) => parse_seeds(s).map(Some),
            Some(IntsOrSpec::List(v)) => {
                let s: Vec<String> = v.iter().map(u64::to_string).collect();
                parse_seeds(&s.join(",")).map(Some)
            }
        }
    }
}
