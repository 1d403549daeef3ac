//! Experiment configuration as a flat `key = value` text file.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated and
//! matrices are written row-major with rows separated by `;`:
//!
//! ```text
//! kind = compare
//! preset = custom
//! a = 1.01 0.01 0; 0.01 1.01 0.01; 0 0.01 1.01
//! strategies = robust, ofu
//! ```
//!
//! `kind` and `preset` are read first and select the defaults every other
//! key overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::demand::DemandConfig;
use super::presets::{self, Preset};
use crate::adaptive::{Estimation, Exploration, ScheduleMode, Strategy};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::linsys::LinearSystem;
use crate::sls::{GammaGrid, GammaStrategy};

/// Every key the parser accepts, in the order of the canonical form.
pub const KEYS: &[&str] = &[
    "kind",
    "preset",
    "a",
    "b",
    "q",
    "r",
    "sigma_w",
    "strategies",
    "trials",
    "horizon",
    "seed",
    "workers",
    "samples",
    "warmup_t0",
    "warmup_sigma_u",
    "schedule",
    "c_t",
    "c_eta",
    "exploration",
    "estimation",
    "fir_length",
    "gamma",
    "error_multipliers",
    "lambda",
    "ts_tau",
    "demand_a",
    "demand_b",
    "demand_gamma",
    "demand_warmup",
    "out",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Regret and epoch-cost curves for several strategies.
    Compare,
    /// Regret with the estimation errors inflated by each multiplier.
    ErrorScaling,
    /// Constrained against unconstrained synthesis on the forecasting plant.
    Demand,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Compare => "compare",
            ExperimentKind::ErrorScaling => "error_scaling",
            ExperimentKind::Demand => "demand",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compare" => Ok(ExperimentKind::Compare),
            "error_scaling" | "error-scaling" => Ok(ExperimentKind::ErrorScaling),
            "demand" => Ok(ExperimentKind::Demand),
            other => Err(Error::Parse(format!("unknown experiment kind {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec {
    Preset(Preset),
    Custom(LinearSystem),
}

impl SystemSpec {
    pub fn system(&self) -> LinearSystem {
        match self {
            SystemSpec::Preset(p) => p.system(),
            SystemSpec::Custom(sys) => sys.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Preset(p) => p.name(),
            SystemSpec::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub system: SystemSpec,
    pub strategies: Vec<Strategy>,
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    /// Number of log-spaced sample times on the regret and cost curves.
    pub samples: usize,
    pub warmup_t0: usize,
    pub warmup_sigma_u: f64,
    pub schedule: ScheduleMode,
    pub c_t: usize,
    pub c_eta: f64,
    pub exploration: Exploration,
    pub estimation: Estimation,
    pub fir_length: usize,
    pub gamma: GammaStrategy,
    pub error_multipliers: Vec<f64>,
    pub lambda: f64,
    pub ts_tau: usize,
    pub demand: DemandConfig,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for one kind of experiment on one system.
    pub fn defaults(kind: ExperimentKind, system: SystemSpec) -> Self {
        let (t0, c_eta) = match (&kind, &system) {
            (ExperimentKind::ErrorScaling, _) => (300, 1.0),
            (_, SystemSpec::Preset(Preset::LargeTransient)) => (250, 2.0),
            _ => (100, 0.1),
        };
        let demand = DemandConfig::default();
        let horizon = if kind == ExperimentKind::Demand { demand.horizon } else { 10_000 };
        let strategies = match kind {
            ExperimentKind::Compare => vec![Strategy::Robust, Strategy::Nominal, Strategy::Ofu, Strategy::Ts],
            ExperimentKind::ErrorScaling => vec![Strategy::Ofu, Strategy::Ts, Strategy::Robust],
            ExperimentKind::Demand => Vec::new(),
        };
        Self {
            kind,
            system,
            strategies,
            trials: 100,
            horizon,
            seed: 0,
            workers: 0,
            samples: 100,
            warmup_t0: t0,
            warmup_sigma_u: 1.0,
            schedule: ScheduleMode::Doubling,
            c_t: t0,
            c_eta,
            exploration: Exploration::Experimental,
            estimation: Estimation::AllData,
            fir_length: 12,
            gamma: GammaStrategy::Fixed(0.98),
            error_multipliers: if kind == ExperimentKind::ErrorScaling { vec![1.0, 2.0, 4.0, 8.0] } else { vec![1.0] },
            lambda: crate::sysid::DEFAULT_LAMBDA,
            ts_tau: 500,
            demand,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be at least 1".into()));
        }
        if self.kind != ExperimentKind::Demand && self.strategies.is_empty() {
            return Err(Error::Invalid("no strategies selected".into()));
        }
        if self.error_multipliers.is_empty() || self.error_multipliers.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Invalid("error multipliers must be non-negative".into()));
        }
        if self.c_t == 0 || self.fir_length == 0 || self.samples == 0 {
            return Err(Error::Invalid("c_t, fir_length and samples must be positive".into()));
        }
        if self.kind == ExperimentKind::Demand && self.system != SystemSpec::Preset(Preset::Demand) {
            return Err(Error::Invalid("the demand study runs on the demand preset".into()));
        }
        Ok(())
    }

    /// Parses a config file, starting from the defaults its `kind` and
    /// `preset` select.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let get = |k: &str| pairs.iter().rev().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let kind: ExperimentKind = get("kind").unwrap_or("compare").parse()?;
        let default_preset = if kind == ExperimentKind::Demand { "demand" } else { "laplacian" };
        let system = match get("preset").unwrap_or(default_preset) {
            "custom" => {
                let need = |k: &str| get(k).ok_or_else(|| Error::Parse(format!("custom preset needs key {k}")));
                let sigma_w = get("sigma_w").map(parse_f64).transpose()?.unwrap_or(1.0);
                SystemSpec::Custom(LinearSystem::new(
                    parse_matrix(need("a")?)?,
                    parse_matrix(need("b")?)?,
                    parse_matrix(need("q")?)?,
                    parse_matrix(need("r")?)?,
                    sigma_w,
                )?)
            }
            name => SystemSpec::Preset(name.parse()?),
        };
        let mut cfg = Self::defaults(kind, system);
        for (k, v) in &pairs {
            match k.as_str() {
                "kind" | "preset" | "a" | "b" | "q" | "r" | "sigma_w" => {}
                _ => cfg.set(k, v)?,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key that does not change the defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "strategies" => self.strategies = parse_list(v, |s| s.parse())?,
            "trials" => self.trials = parse_usize(v)?,
            "horizon" => self.horizon = parse_usize(v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Parse(format!("bad seed {v}")))?,
            "workers" => self.workers = parse_usize(v)?,
            "samples" => self.samples = parse_usize(v)?,
            "warmup_t0" => self.warmup_t0 = parse_usize(v)?,
            "warmup_sigma_u" => self.warmup_sigma_u = parse_f64(v)?,
            "schedule" => {
                self.schedule = match v {
                    "doubling" => ScheduleMode::Doubling,
                    "linear" => ScheduleMode::Linear,
                    other => return Err(Error::Parse(format!("unknown schedule {other}"))),
                }
            }
            "c_t" => self.c_t = parse_usize(v)?,
            "c_eta" => self.c_eta = parse_f64(v)?,
            "exploration" => {
                self.exploration = match v {
                    "experimental" => Exploration::Experimental,
                    "analysis" => Exploration::Analysis,
                    other => return Err(Error::Parse(format!("unknown exploration {other}"))),
                }
            }
            "estimation" => {
                self.estimation = match v {
                    "all_data" => Estimation::AllData,
                    "epoch_only" => Estimation::EpochOnly,
                    other => return Err(Error::Parse(format!("unknown estimation {other}"))),
                }
            }
            "fir_length" => self.fir_length = parse_usize(v)?,
            "gamma" => {
                self.gamma = if v == "search" { GammaStrategy::Search(GammaGrid::default()) } else { GammaStrategy::Fixed(parse_f64(v)?) }
            }
            "error_multipliers" => self.error_multipliers = parse_list(v, parse_f64)?,
            "lambda" => self.lambda = parse_f64(v)?,
            "ts_tau" => self.ts_tau = parse_usize(v)?,
            "demand_a" => self.demand.a = parse_f64(v)?,
            "demand_b" => self.demand.b = parse_f64(v)?,
            "demand_gamma" => self.demand.gamma = parse_f64(v)?,
            "demand_warmup" => self.demand.warmup = parse_usize(v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(Error::Parse(format!("unknown key {other}"))),
        }
        Ok(())
    }

    /// Canonical text: every key in [`KEYS`] order with round-trip floats.
    /// `parse(to_text())` gives back the same config, and the manifest hashes
    /// this text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("kind", self.kind.name().into());
        put("preset", self.system.name().into());
        if let SystemSpec::Custom(sys) = &self.system {
            put("a", format_matrix(&sys.a));
            put("b", format_matrix(&sys.b));
            put("q", format_matrix(&sys.q));
            put("r", format_matrix(&sys.r));
            put("sigma_w", fmt_f64(sys.sigma_w));
        }
        put("strategies", self.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(", "));
        put("trials", self.trials.to_string());
        put("horizon", self.horizon.to_string());
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("samples", self.samples.to_string());
        put("warmup_t0", self.warmup_t0.to_string());
        put("warmup_sigma_u", fmt_f64(self.warmup_sigma_u));
        put("schedule", match self.schedule {
            ScheduleMode::Doubling => "doubling".into(),
            ScheduleMode::Linear => "linear".into(),
        });
        put("c_t", self.c_t.to_string());
        put("c_eta", fmt_f64(self.c_eta));
        put("exploration", match self.exploration {
            Exploration::Experimental => "experimental".into(),
            Exploration::Analysis => "analysis".into(),
        });
        put("estimation", match self.estimation {
            Estimation::AllData => "all_data".into(),
            Estimation::EpochOnly => "epoch_only".into(),
        });
        put("fir_length", self.fir_length.to_string());
        put("gamma", match self.gamma {
            GammaStrategy::Fixed(g) => fmt_f64(g),
            GammaStrategy::Search(_) => "search".into(),
        });
        put("error_multipliers", self.error_multipliers.iter().map(|m| fmt_f64(*m)).collect::<Vec<_>>().join(", "));
        put("lambda", fmt_f64(self.lambda));
        put("ts_tau", self.ts_tau.to_string());
        put("demand_a", fmt_f64(self.demand.a));
        put("demand_b", fmt_f64(self.demand.b));
        put("demand_gamma", fmt_f64(self.demand.gamma));
        put("demand_warmup", self.demand.warmup.to_string());
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        out
    }

    /// Hex sha256 of [`Self::to_text`] without the output directory, so the
    /// same experiment written elsewhere hashes the same.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        let digest = Sha256::digest(c.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(Error::Parse(format!("line {}: unknown key {k}", i + 1)));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Parse(format!("expected a count, got {v}")))
}

fn parse_f64(v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| Error::Parse(format!("expected a number, got {v}")))
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

/// Row-major matrix: rows separated by `;`, entries by spaces or commas.
pub fn parse_matrix(v: &str) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .map(|row| row.split([' ', ',', '\t']).filter(|s| !s.is_empty()).map(parse_f64).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("ragged or empty matrix {v}")));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(Mat::from_row_slice(rows.len(), cols, &flat))
}

pub fn format_matrix(m: &Mat) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Shortest text that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// The forecasting plant and its disturbance model.
pub fn demand_systems() -> (LinearSystem, Mat) {
    (presets::demand_plant(), presets::demand_disturbance())
}
