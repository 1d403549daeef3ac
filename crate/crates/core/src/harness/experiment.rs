//! Multi-trial execution.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::aggregate::{log_times, percentile, AggregateCurve};
use super::config::{demand_systems, ExperimentConfig, ExperimentKind};
use super::demand::{demand_trial, DemandConfig, DemandTrial};
use crate::adaptive::{
    regret_of, run_baseline, synthesis_config_for, BaselineConfig, EpochSchedule, EpochTrace, RobustConfig, Strategy,
    Warmup,
};
use crate::baselines::TsConfig;
use crate::error::{Error, Result};
use crate::rng;

/// What is kept of one adaptive run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub label: String,
    pub trial: usize,
    pub seed: u64,
    pub diverged: bool,
    /// Cumulative regret at the sample times.
    pub regret: Vec<f64>,
    /// Infinite-horizon cost of the controller active at each sample time.
    pub cost: Vec<f64>,
    pub epoch_costs: Vec<f64>,
    pub epoch_errors: Vec<f64>,
    /// Samples behind each epoch's estimate.
    pub epoch_data: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub label: String,
    pub trial: usize,
    pub reason: String,
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} trial {}: {}", self.label, self.trial, self.reason)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSummary {
    pub trials: usize,
    pub failed_syntheses: usize,
    /// Trials where the constrained loop left `‖x‖∞ ≤ a`.
    pub violations: usize,
    pub constrained_worst: f64,
    pub constrained_median_max: f64,
    pub unconstrained_median_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// Named panels in emission order.
    pub panels: Vec<(String, AggregateCurve)>,
    pub records: Vec<TrialRecord>,
    pub demand: Vec<DemandTrial>,
    pub demand_summary: Option<DemandSummary>,
    /// Trials that errored out (excluded from the curves) or diverged
    /// (kept, clamped).
    pub failures: Vec<TrialFailure>,
}

impl ExperimentOutput {
    pub fn panel(&self, name: &str) -> Option<&AggregateCurve> {
        self.panels.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn write(&self, dir: &std::path::Path, cfg: &ExperimentConfig) -> Result<Vec<std::path::PathBuf>> {
        let failures = self.failures.iter().map(ToString::to_string).collect();
        let mut paths = super::output::emit_plotdata(dir, &self.panels, cfg, failures)?;
        if let Some(s) = &self.demand_summary {
            let p = dir.join("demand_summary.json");
            let json = serde_json::to_string_pretty(s).map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(&p, json + "\n")?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Seed of one trial, shared by every strategy so they see the same noise.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    rng::trial_rng(base, trial as u64).next_u64()
}

/// Runs `jobs` on a bounded pool; results come back in job order.
pub fn par_map<T, R, F>(jobs: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = if workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { workers };
    let workers = workers.min(jobs.len()).max(1);
    let slots: Vec<Mutex<Option<R>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every job ran")).collect()
}

/// One strategy variant of an experiment.
#[derive(Clone, Debug)]
struct Arm {
    label: String,
    strategy: Strategy,
    multiplier: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::Compare => {
            let arms = cfg.strategies.iter().map(|&s| Arm { label: s.name().into(), strategy: s, multiplier: 1.0 }).collect();
            run_adaptive(cfg, arms, false)
        }
        ExperimentKind::ErrorScaling => {
            let mut arms = Vec::new();
            for &s in &cfg.strategies {
                for &m in &cfg.error_multipliers {
                    arms.push(Arm { label: format!("{}_x{m}", s.name()), strategy: s, multiplier: m });
                }
            }
            run_adaptive(cfg, arms, true)
        }
        ExperimentKind::Demand => run_demand(cfg),
    }
}

fn run_adaptive(cfg: &ExperimentConfig, arms: Vec<Arm>, per_strategy_panels: bool) -> Result<ExperimentOutput> {
    let truth = cfg.system.system();
    let warm = Warmup::new(&truth, cfg.warmup_t0, cfg.warmup_sigma_u)?;
    let mut synthesis = synthesis_config_for(&truth, cfg.fir_length)?;
    synthesis.gamma = cfg.gamma;
    let schedule = EpochSchedule { mode: cfg.schedule, c_t: cfg.c_t, c_eta: cfg.c_eta, exploration: cfg.exploration };
    let times = log_times(cfg.horizon, cfg.samples);

    let jobs: Vec<(usize, usize)> = (0..arms.len()).flat_map(|a| (0..cfg.trials).map(move |t| (a, t))).collect();
    let results = par_map(&jobs, cfg.workers, |&(a, trial)| {
        let arm = &arms[a];
        let robust = RobustConfig {
            schedule,
            synthesis: synthesis.clone(),
            error_multiplier: arm.multiplier,
            estimation: cfg.estimation,
        };
        let baseline = BaselineConfig {
            ts: TsConfig { tau: cfg.ts_tau, ..TsConfig::default() },
            lambda: cfg.lambda,
            error_multiplier: arm.multiplier,
            ..BaselineConfig::default()
        };
        let seed = trial_seed(cfg.seed, trial);
        run_baseline(arm.strategy, &truth, &warm, &robust, &baseline, cfg.horizon, seed)
            .map(|tr| summarize(&tr, &arm.label, trial, seed, &times))
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(a, trial), r) in jobs.iter().zip(results) {
        match r {
            Ok(rec) => {
                if rec.diverged {
                    failures.push(TrialFailure { label: rec.label.clone(), trial, reason: "diverged".into() });
                }
                records.push(rec);
            }
            Err(e) => failures.push(TrialFailure { label: arms[a].label.clone(), trial, reason: e.to_string() }),
        }
    }

    let mut panels: Vec<(String, AggregateCurve)> = Vec::new();
    let mut regret = AggregateCurve::new(times.clone());
    let mut cost = AggregateCurve::new(times.clone());
    for (i, arm) in arms.iter().enumerate() {
        let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.label == arm.label).collect();
        let rs: Vec<Vec<f64>> = mine.iter().map(|r| r.regret.clone()).collect();
        let cs: Vec<Vec<f64>> = mine.iter().map(|r| r.cost.clone()).collect();
        if per_strategy_panels {
            let name = format!("regret_{}", arm.strategy.name());
            if i == 0 || arms[i - 1].strategy != arm.strategy {
                panels.push((name, AggregateCurve::new(times.clone())));
            }
            panels.last_mut().unwrap().1.push(&arm.label, &rs);
        } else {
            regret.push(&arm.label, &rs);
            cost.push(&arm.label, &cs);
        }
    }
    if !per_strategy_panels {
        panels = vec![("regret".into(), regret), ("cost".into(), cost)];
    }
    Ok(ExperimentOutput { panels, records, demand: Vec::new(), demand_summary: None, failures })
}

/// Samples a finished run at `times`.
pub fn summarize(tr: &EpochTrace, label: &str, trial: usize, seed: u64, times: &[usize]) -> TrialRecord {
    let regret = regret_of(tr, tr.j_star, times);
    let cost = times
        .iter()
        .map(|&t| tr.epoch_at(t.saturating_sub(1)).map_or(f64::INFINITY, |e| e.cost))
        .collect();
    TrialRecord {
        label: label.to_string(),
        trial,
        seed,
        diverged: tr.diverged(),
        regret,
        cost,
        epoch_costs: tr.epochs.iter().map(|e| e.cost).collect(),
        epoch_errors: tr.epochs.iter().map(|e| e.est_error).collect(),
        epoch_data: tr.epochs.iter().map(|e| e.data_len).collect(),
    }
}

fn run_demand(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (known, a_d) = demand_systems();
    let dcfg = DemandConfig { f: cfg.fir_length, horizon: cfg.horizon, ..cfg.demand.clone() };
    let jobs: Vec<usize> = (0..cfg.trials).collect();
    let results = par_map(&jobs, cfg.workers, |&t| demand_trial(&known, &a_d, &dcfg, cfg.seed, t as u64));

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(tr) => {
                for (label, run) in [("constrained", &tr.constrained), ("unconstrained", &tr.unconstrained)] {
                    if let Some(reason) = &run.failed {
                        failures.push(TrialFailure { label: label.into(), trial: t, reason: reason.clone() });
                    }
                }
                trials.push(tr);
            }
            Err(e) => failures.push(TrialFailure { label: "demand".into(), trial: t, reason: e.to_string() }),
        }
    }

    let times: Vec<usize> = (0..=cfg.horizon).collect();
    let mut state = AggregateCurve::new(times.clone());
    let pad = |v: &[f64]| -> Vec<f64> { times.iter().map(|&t| v.get(t).copied().unwrap_or(f64::INFINITY)).collect() };
    let con: Vec<Vec<f64>> = trials.iter().filter(|t| t.constrained.failed.is_none()).map(|t| pad(&t.constrained.state_inf)).collect();
    let free: Vec<Vec<f64>> =
        trials.iter().filter(|t| t.unconstrained.failed.is_none()).map(|t| pad(&t.unconstrained.state_inf)).collect();
    state.push("constrained", &con);
    state.push("unconstrained", &free);

    let con_max: Vec<f64> = trials.iter().map(|t| t.constrained.max_state).collect();
    let free_max: Vec<f64> = trials.iter().map(|t| t.unconstrained.max_state).collect();
    let summary = DemandSummary {
        trials: trials.len(),
        failed_syntheses: failures.len(),
        violations: con_max.iter().filter(|m| !(**m <= dcfg.a)).count(),
        constrained_worst: con_max.iter().copied().fold(0.0, f64::max),
        constrained_median_max: percentile(&con_max, 0.5),
        unconstrained_median_max: percentile(&free_max, 0.5),
    };
    Ok(ExperimentOutput {
        panels: vec![("state".into(), state)],
        records: Vec::new(),
        demand: trials,
        demand_summary: Some(summary),
        failures,
    })
}
