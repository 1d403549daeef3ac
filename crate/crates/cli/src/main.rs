use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptive_lqr::adaptive::synthesis_config_for;
use adaptive_lqr::harness::config::parse_matrix;
use adaptive_lqr::harness::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentOutput};
use adaptive_lqr::linalg::spectral_radius;
use adaptive_lqr::sls::{realize_controller, synthesize_robust, GammaGrid, GammaStrategy};
use adaptive_lqr::{validation, LinearSystem, Mat, ParamEstimate};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptive-lqr", version, about = "Robust adaptive LQR experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Regret and epoch-cost curves of several strategies.
    Compare(ExpArgs),
    /// Regret with inflated estimation errors.
    ErrorScaling(ExpArgs),
    /// Constrained against unconstrained synthesis under bounded noise.
    Demand(ExpArgs),
    /// One robust synthesis from matrices in a key = value file.
    Synthesize(SynthArgs),
    /// Numerical checks of the identities behind the analysis.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// Config file; flags override its keys.
    #[arg(long)]
    cfg: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat or comma separate: robust, nominal, ofu, ts.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<String>,
    /// Output directory [default: out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "error-multiplier", value_delimiter = ',')]
    error_multiplier: Vec<f64>,
    /// doubling or linear.
    #[arg(long)]
    schedule: Option<String>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// File with a, b, q, r and optionally eps_a, eps_b, fir_length, gamma,
    /// c, rho, k_norm.
    input: PathBuf,
    /// Where to write the response as JSON [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Compare(a) => experiment(ExperimentKind::Compare, a),
        Cmd::ErrorScaling(a) => experiment(ExperimentKind::ErrorScaling, a),
        Cmd::Demand(a) => experiment(ExperimentKind::Demand, a),
        Cmd::Synthesize(a) => synthesize(a),
        Cmd::Validate(a) => validate(a),
    }
}

fn build_config(kind: ExperimentKind, a: &ExpArgs) -> Result<ExperimentConfig> {
    let mut text = match &a.cfg {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    text.push_str(&format!("\nkind = {}\n", kind.name()));
    if let Some(p) = &a.preset {
        text.push_str(&format!("preset = {p}\n"));
    }
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.workers {
        cfg.workers = v;
    }
    if !a.strategy.is_empty() {
        cfg.set("strategies", &a.strategy.join(","))?;
    }
    if !a.error_multiplier.is_empty() {
        cfg.error_multipliers = a.error_multiplier.clone();
    }
    if let Some(s) = &a.schedule {
        cfg.set("schedule", s)?;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(kind: ExperimentKind, a: ExpArgs) -> Result<ExitCode> {
    let cfg = build_config(kind, &a)?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| Path::new("out").join(kind.name()));
    eprintln!(
        "{} on {}: {} trials, horizon {}, seed {}",
        kind.name(),
        cfg.system.name(),
        cfg.trials,
        cfg.horizon,
        cfg.seed
    );
    let output = run_experiment(&cfg)?;
    report(&output);
    for p in output.write(&out_dir, &cfg)? {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn report(out: &ExperimentOutput) {
    for (name, curve) in &out.panels {
        let Some(&t) = curve.times.last() else { continue };
        println!("{name} at t={t}:");
        for s in &curve.series {
            println!("  {:<16} median {:>12.4} p90 {:>12.4}", s.strategy, s.median.last().unwrap(), s.p90.last().unwrap());
        }
    }
    if let Some(s) = &out.demand_summary {
        println!(
            "constrained: worst max|x| {:.4}, median {:.4}, violations {}/{}; unconstrained median max|x| {:.4}",
            s.constrained_worst, s.constrained_median_max, s.violations, s.trials, s.unconstrained_median_max
        );
    }
    if !out.failures.is_empty() {
        println!("{} trial issues:", out.failures.len());
        for f in &out.failures {
            println!("  {f}");
        }
    }
}

fn synthesize(a: SynthArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut kv = std::collections::BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else { bail!("expected key = value, got {line}") };
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mat = |k: &str| -> Result<Mat> { Ok(parse_matrix(kv.get(k).with_context(|| format!("missing key {k}"))?)?) };
    let num = |k: &str, d: f64| -> Result<f64> {
        kv.get(k).map_or(Ok(d), |v| v.parse().with_context(|| format!("bad number for {k}: {v}")))
    };
    for k in kv.keys() {
        if !["a", "b", "q", "r", "eps_a", "eps_b", "fir_length", "gamma", "c", "rho", "k_norm"].contains(&k.as_str()) {
            bail!("unknown key {k}");
        }
    }
    let (a_hat, b_hat, q, r) = (mat("a")?, mat("b")?, mat("q")?, mat("r")?);
    let f = num("fir_length", 12.0)? as usize;
    let nominal = LinearSystem::new(a_hat.clone(), b_hat.clone(), q.clone(), r.clone(), 1.0)?;
    let mut cfg = match (kv.get("c"), kv.get("rho")) {
        (Some(_), Some(_)) => adaptive_lqr::SynthesisConfig::from_decay(num("c", 0.0)?, num("rho", 0.0)?, num("k_norm", 1.0)?, f),
        _ => synthesis_config_for(&nominal, f).context("decay constants from the nominal LQR loop")?,
    };
    cfg.gamma = match kv.get("gamma").map(String::as_str) {
        None | Some("search") => GammaStrategy::Search(GammaGrid::default()),
        Some(g) => GammaStrategy::Fixed(g.parse().with_context(|| format!("bad gamma {g}"))?),
    };
    let est = ParamEstimate { a_hat: a_hat.clone(), b_hat: b_hat.clone(), eps_a: num("eps_a", 0.0)?, eps_b: num("eps_b", 0.0)? };
    let outcome = synthesize_robust(&est, &cfg, &q, &r)?;
    let ctrl = realize_controller(&outcome.response).to_controller();
    eprintln!(
        "gamma {:.4} objective {:.6} h2 {:.6} nominal closed-loop spectral radius {:.6}",
        outcome.response.gamma,
        outcome.objective,
        outcome.h2,
        spectral_radius(&ctrl.augmented_closed_loop(&a_hat, &b_hat))
    );
    let json = outcome.response.to_json();
    match a.out {
        Some(p) => std::fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let reports = validation::run_suite(a.seed);
    for r in &reports {
        println!("{:<26} {:>4} instances  worst {:>12.4e}  {}", r.name, r.instances, r.worst, if r.passed { "pass" } else { "FAIL" });
    }
    if let Some(p) = &a.out {
        std::fs::write(p, serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", reports.len() - failed, reports.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
