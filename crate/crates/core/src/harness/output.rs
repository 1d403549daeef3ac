//! Plot data: one CSV per panel, a run manifest and a reference gnuplot
//! script.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::{AggregateCurve, Series};
use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "time,strategy,median,p90";

/// Rows grouped by series, then by time. Values use 17 significant digits,
/// enough to parse back bit for bit.
pub fn curve_to_csv(curve: &AggregateCurve) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    if curve.is_empty() {
        return out;
    }
    for s in &curve.series {
        for (i, t) in curve.times.iter().enumerate() {
            writeln!(out, "{t},{},{:.16e},{:.16e}", s.strategy, s.median[i], s.p90[i]).unwrap();
        }
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<AggregateCurve> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Parse(format!("expected header {CSV_HEADER}")));
    }
    let mut curve = AggregateCurve::default();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("row {}: {line}", i + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad());
        }
        let t: usize = cols[0].parse().map_err(|_| bad())?;
        let median: f64 = cols[2].parse().map_err(|_| bad())?;
        let p90: f64 = cols[3].parse().map_err(|_| bad())?;
        if curve.series.last().is_none_or(|s| s.strategy != cols[1]) {
            curve.series.push(Series { strategy: cols[1].to_string(), median: Vec::new(), p90: Vec::new() });
        }
        let first = curve.series.len() == 1;
        let s = curve.series.last_mut().unwrap();
        let k = s.median.len();
        if first {
            curve.times.push(t);
        } else if curve.times.get(k) != Some(&t) {
            return Err(Error::Parse(format!("row {}: series {} has different times", i + 2, s.strategy)));
        }
        s.median.push(median);
        s.p90.push(p90);
    }
    if curve.series.iter().any(|s| s.median.len() != curve.times.len()) {
        return Err(Error::Parse("series lengths differ".into()));
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub kind: String,
    pub panels: Vec<String>,
    pub trials: usize,
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, panels: Vec<String>, failures: Vec<String>) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: cfg.kind.name().to_string(),
            panels,
            trials: cfg.trials,
            failures,
        }
    }
}

/// Writes `<panel>.csv` for every panel plus `manifest.json`, `config.txt`
/// and `plot.gp` into `dir`. Returns the written paths.
pub fn emit_plotdata(
    dir: &Path,
    panels: &[(String, AggregateCurve)],
    cfg: &ExperimentConfig,
    failures: Vec<String>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    for (name, curve) in panels {
        write(&format!("{name}.csv"), &curve_to_csv(curve))?;
    }
    let manifest = Manifest::new(cfg, panels.iter().map(|(n, _)| format!("{n}.csv")).collect(), failures);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    write("manifest.json", &(json + "\n"))?;
    write("config.txt", &cfg.to_text())?;
    write("plot.gp", &gnuplot_script(panels))?;
    Ok(written)
}

/// Reference script: median solid, 90th percentile dashed, log-log axes
/// for everything but the forecasting state panel.
pub fn gnuplot_script(panels: &[(String, AggregateCurve)]) -> String {
    let mut s = String::from("# gnuplot -p plot.gp\nset datafile separator ','\nset key left top\n");
    for (name, curve) in panels {
        let logscale = if name == "state" { "unset logscale" } else { "set logscale xy" };
        writeln!(s, "\nset title '{name}'\n{logscale}").unwrap();
        let mut parts = Vec::new();
        for (i, series) in curve.series.iter().enumerate() {
            let sel = format!("(strcol(2) eq '{}' ? $", series.strategy);
            parts.push(format!("'{name}.csv' using 1:{sel}3 : NaN) with lines lc {} title '{} median'", i + 1, series.strategy));
            parts.push(format!("'{name}.csv' using 1:{sel}4 : NaN) with lines lc {} dt 2 title '{} p90'", i + 1, series.strategy));
        }
        if !parts.is_empty() {
            writeln!(s, "plot {}", parts.join(", \\\n     ")).unwrap();
        }
    }
    s
}
